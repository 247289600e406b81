//! Shared fixtures for the criterion benchmarks.

use ars_core::dynamics::{gen_circular, gen_lorenz, split_observed, LorenzParams, MissingSpec};
use ars_core::ObservedSeries;

/// Observed coordinate of a 100-point circular trajectory.
pub fn circular_observed() -> ObservedSeries {
    let traj = gen_circular(100, 1).expect("generator");
    split_observed(&traj, &MissingSpec::new(1, 1).expect("spec")).expect("split")
}

/// Observed coordinates of a 100-point Lorenz trajectory.
pub fn lorenz_observed() -> ObservedSeries {
    let traj = gen_lorenz(100, &LorenzParams::default()).expect("generator");
    split_observed(&traj, &MissingSpec::new(2, 1).expect("spec")).expect("split")
}
