//! Forecasting of partially observed linear dynamical time series.
//!
//! When only some coordinates of a linear dynamical system are recorded, a
//! plain autoregression on the observed block loses the time-invariance of
//! the full state. This crate jointly estimates a transition matrix and a
//! "slack" sequence imputing the completely missing coordinates, so the
//! completed series is again one-step linear. It ships the synthetic
//! generators, the least-squares and BFGS machinery behind the fit, an
//! AR(p) baseline, and the experiment harness driving the `ars` CLI.

// Guards written as `!(x > 0.0)` deliberately reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod ars;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod optimizer;
pub mod regression;
pub mod rng;

pub use ar::{fit_ar, fit_ar_with_options, forecast_ar, ArModel};
pub use ars::{
    ars_gradient, ars_objective, fit_ars, fit_ars_als, fit_ars_interactions, forecast_ars,
    forecast_ars_interactions, init_slack, interaction_map, rescale_slack, ArsModel,
    CompletedSeries, ExtArsModel, SlackInit,
};
pub use dynamics::{
    add_noise, gen_circular, gen_circular_with, gen_lorenz, lorenz_taylor_map, rk4_lorenz,
    split_observed, LorenzParams, MissingSpec, NoiseConfig, ObservedSeries, Trajectory,
};
pub use error::{Error, Result};
pub use eval::{
    figure1_demo, forecast_demo, line_chart_svg, lorenz_ode_residual, mse_at_horizon,
    relative_error_table, reproduce, run_experiment, ChartSeries, EnvelopeCheck, ExperimentConfig,
    ExperimentRecord, ExperimentReport, ForecastFigure, InitKind, OdeResidualReport, ReproSummary,
    SystemKind,
};
pub use optimizer::{check_gradient, minimize, OptimResult, OptimSettings};
pub use regression::{
    build_design, escalation_ridge, hat_matrix, ols_fit, profiled_loss, DesignPair, FitDiagnostics,
};
