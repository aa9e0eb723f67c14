//! Full-scale runs of the shipped experiment configs.

use std::fs;
use std::path::{Path, PathBuf};

use gridsim_core::experiment::{run_experiment, ExperimentConfig, ExperimentOutput, RunOptions};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(fixture(name)).unwrap()
}

pub fn dry_run(cfg: &ExperimentConfig, seeds: Option<Vec<u64>>) -> ExperimentOutput {
    run_experiment(cfg, &RunOptions { seeds, dry_run: true, ..Default::default() }).unwrap()
}

/// Every arm of `config` over `n` fresh seeds; fails unless the job census
/// balanced after every event of every run. Returns the number of runs.
pub fn conservation(config: &str, n: u64) -> Result<usize, String> {
    let cfg = load(config);
    let out = dry_run(&cfg, Some((1000..1000 + n).collect()));
    for run in &out.runs {
        if !run.conserved {
            return Err(format!("{} seed {}: census out of balance", run.label, run.seed));
        }
        let r = &run.report;
        if r.total_jobs != run.result.jobs.len() {
            return Err(format!("{} seed {}: {} jobs reported", run.label, run.seed, r.total_jobs));
        }
    }
    Ok(out.runs.len())
}

/// Runs `config` twice into separate directories and compares every file byte
/// for byte. Returns the number of files compared.
pub fn byte_identical(config: &str, seed: u64) -> Result<usize, String> {
    let cfg = load(config);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outs: Vec<ExperimentOutput> = dirs
        .iter()
        .map(|d| {
            let opts = RunOptions { seeds: Some(vec![seed]), out_dir: Some(d.path().to_owned()), dry_run: false };
            run_experiment(&cfg, &opts).unwrap()
        })
        .collect();
    let mut names: Vec<_> = outs[0].files.iter().map(|f| f.file_name().unwrap().to_owned()).collect();
    names.sort();
    let mut other: Vec<_> = outs[1].files.iter().map(|f| f.file_name().unwrap().to_owned()).collect();
    other.sort();
    if names != other {
        return Err("runs wrote different file sets".into());
    }
    for name in &names {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        if a != b {
            return Err(format!("{} differs between runs", name.to_string_lossy()));
        }
    }
    Ok(names.len())
}
