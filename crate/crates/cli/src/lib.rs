pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_with_defaults, RunConfig};
pub use run::{run, Command, Manifest, Outcome};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "TCL4_WORKERS";

/// Sizes the global worker pool from `TCL4_WORKERS`, if set.
pub fn init_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
