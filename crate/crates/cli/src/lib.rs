//! Library half of the `qdecay` command-line tool: architecture files,
//! channel assembly for circuit layers, trajectory running, verification
//! suites, and report serialization.

pub mod archfile;
pub mod circuit;
pub mod report;
pub mod suites;

/// Choi dimension cap, overridable through `QDECAY_DIM_CAP`.
pub fn choi_dim_cap() -> usize {
    std::env::var("QDECAY_DIM_CAP")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(qdecay_core::CHOI_DIM_CAP)
}
