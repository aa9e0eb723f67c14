use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridsim_core::experiment::{report_results, run_experiment, workload_seed, ExperimentConfig, RunOptions};
use gridsim_core::seed::{derive_seed, stream};
use gridsim_core::traces::{
    check_classes, generate_catalog, generate_workload, load_catalog, load_workload, save_catalog, save_workload,
    CatalogSpec, WorkloadSpec,
};

/// Grid scheduling simulator: compares GRV ranking, FCFS matching and a
/// dedicated cluster on a shared workload.
#[derive(Parser, Debug)]
#[command(name = "gridsim", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Replace the configured seed(s) with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every arm of an experiment config over its seeds.
    Simulate {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic resource catalog.
    GenCatalog {
        /// Catalog generator spec (TOML), with an optional top-level `seed`.
        #[arg(long)]
        spec: PathBuf,
        /// Catalog file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic workload.
    GenWorkload {
        /// Workload generator spec (TOML), with an optional top-level `seed`.
        #[arg(long)]
        spec: PathBuf,
        /// Workload file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute reports from stored simulation results.
    Report {
        /// Directory holding `.simresult` files.
        #[arg(long)]
        results: PathBuf,
    },
    /// Check a catalog and optionally a workload against it.
    Validate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        workload: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { config } => simulate(g, config),
        Command::GenCatalog { spec, out } => gen_catalog(g, spec, out),
        Command::GenWorkload { spec, out } => gen_workload(g, spec, out),
        Command::Report { results } => report(g, results),
        Command::Validate { catalog, workload } => validate(g, catalog, workload.as_deref()),
    }
}

/// `out` relative to `--out-dir` when one is given.
fn output_path(g: &Global, out: &Path) -> Result<PathBuf> {
    match &g.out_dir {
        Some(dir) if out.is_relative() => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(dir.join(out))
        }
        _ => Ok(out.to_owned()),
    }
}

fn simulate(g: &Global, config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let opts = RunOptions { seeds: g.seed.map(|s| vec![s]), out_dir: g.out_dir.clone(), dry_run: false };
    let out = run_experiment(&cfg, &opts)?;
    if !g.quiet {
        let mut wall: BTreeMap<usize, (String, f64)> = BTreeMap::new();
        for r in &out.runs {
            let e = wall.entry(r.arm).or_insert_with(|| (r.label.clone(), 0.0));
            e.1 = e.1.max(r.wall.as_secs_f64());
        }
        println!("{} ({} runs)", cfg.experiment.name, out.runs.len());
        print!("{}", out.comparison);
        for (label, secs) in wall.values() {
            println!("{label}: slowest run {secs:.2}s");
        }
        println!("wrote {} files to {}", out.files.len(), out.out_dir.display());
    }
    Ok(())
}

/// Reads a TOML spec, splitting off the optional top-level `seed` key.
fn read_spec(path: &Path) -> Result<(toml::Table, Option<u64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let seed = match table.remove("seed") {
        Some(toml::Value::Integer(s)) if s >= 0 => Some(s as u64),
        Some(_) => bail!("{}: seed must be a non-negative integer", path.display()),
        None => None,
    };
    Ok((table, seed))
}

fn gen_catalog(g: &Global, spec_path: &Path, out: &Path) -> Result<()> {
    let (table, file_seed) = read_spec(spec_path)?;
    let spec: CatalogSpec = table.try_into().with_context(|| format!("parsing {}", spec_path.display()))?;
    let seed = g.seed.or(file_seed).unwrap_or(0);
    let catalog = generate_catalog(&spec, derive_seed(seed, stream::CATALOG))?;
    let out = output_path(g, out)?;
    save_catalog(&out, &catalog)?;
    if !g.quiet {
        println!("wrote {} resources to {}", catalog.len(), out.display());
    }
    Ok(())
}

fn gen_workload(g: &Global, spec_path: &Path, out: &Path) -> Result<()> {
    let (table, file_seed) = read_spec(spec_path)?;
    let spec: WorkloadSpec = table.try_into().with_context(|| format!("parsing {}", spec_path.display()))?;
    if let Err(msg) = spec.validate() {
        bail!("{}: {msg}", spec_path.display());
    }
    let seed = g.seed.or(file_seed).unwrap_or(0);
    let jobs = generate_workload(&spec, workload_seed(seed));
    let note = format!("synthetic workload, seed {seed}");
    let out = output_path(g, out)?;
    save_workload(&out, &jobs, Some(&note))?;
    if !g.quiet {
        println!("wrote {} jobs to {}", jobs.len(), out.display());
    }
    Ok(())
}

fn report(g: &Global, results: &Path) -> Result<()> {
    let (reports, table) = report_results(results)?;
    if let Some(dir) = &g.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("aggregate.csv");
        fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if !g.quiet {
        println!("{} results", reports.len());
        print!("{table}");
    }
    Ok(())
}

fn validate(g: &Global, catalog: &Path, workload: Option<&Path>) -> Result<()> {
    let resources = load_catalog(catalog).with_context(|| format!("loading {}", catalog.display()))?;
    let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &resources {
        *classes.entry(r.class.as_str()).or_default() += 1;
    }
    if !g.quiet {
        println!("{}: {} resources", catalog.display(), resources.len());
        for (class, n) in &classes {
            println!("  {class:<16} {n}");
        }
    }
    if let Some(path) = workload {
        let jobs = load_workload(path).with_context(|| format!("loading {}", path.display()))?;
        check_classes(&jobs, &resources)?;
        if !g.quiet {
            println!("{}: {} jobs", path.display(), jobs.len());
        }
    }
    Ok(())
}
