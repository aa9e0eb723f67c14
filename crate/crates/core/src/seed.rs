//! Deterministic seed derivation so independent random streams (churn,
//! workload, per-resource schedules) never share state.

/// Named streams derived from an experiment seed.
pub mod stream {
    pub const CHURN: u64 = 0x6368_7572_6e00_0001;
    pub const WORKLOAD: u64 = 0x776f_726b_6c00_0002;
    pub const ESTIMATES: u64 = 0x6573_7469_6d00_0003;
    pub const CATALOG: u64 = 0x6361_7461_6c00_0004;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream)
}
