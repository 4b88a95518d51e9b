//! Campaign runner for Zeno dragging sweeps: configuration, seeded parallel
//! execution, persisted ensembles and analytics, and SVG figure emission.

pub mod campaign;
pub mod config;
pub mod error;
pub mod plot;

pub use campaign::{run_campaign, Manifest};
pub use config::CampaignConfig;
pub use error::CampaignError;
pub use plot::{plot_emit, Figure};

/// Runs `f` on a pool of `workers` threads (all cores if `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CampaignError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CampaignError::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CampaignError::Config(e.to_string()))?;
    Ok(pool.install(f))
}
