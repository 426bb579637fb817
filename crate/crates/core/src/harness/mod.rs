//! Simulation, oracles, file formats and the end-to-end pipelines behind
//! the command-line tool.

pub mod io;
pub mod oracle;
pub mod report;
pub mod settings;
pub mod sim;

use crate::error::Result;
use crate::filter::{run_filter, BeliefTrajectory};
use io::{Dataset, ResultsBundle};
use settings::FilterSettings;

/// Runs the filter over every window of a dataset.
pub fn invert_dataset(dataset: &Dataset, settings: &FilterSettings) -> Result<(BeliefTrajectory, ResultsBundle)> {
    dataset.validate()?;
    let (cfg, init) = settings.build(&dataset.manifest)?;
    let traj = run_filter(&dataset.spectral_windows(), &init, &cfg)?;
    let bundle = ResultsBundle::new(&traj, dataset.fingerprint()?, settings.clone());
    Ok((traj, bundle))
}
