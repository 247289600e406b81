//! Joint estimation of a slack time series and a linear transition matrix
//! for partially observed dynamics.
//!
//! The completely missing coordinates of the state are imputed by a free
//! "slack" sequence. For a fixed slack the best transition matrix is a
//! closed-form least-squares solve, so the slack is the only optimisation
//! variable: the objective seen by the optimizer is the profiled loss of
//! the completed one-step regression (see [`ars_objective`]), minimised
//! with BFGS. A quadratic-feature variant ([`fit_ars_interactions`]) covers
//! dynamics with pairwise interaction terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ObservedSeries;
use crate::error::{Error, Result};
use crate::optimizer::{minimize, OptimResult, OptimSettings};
use crate::regression::{ridge_lstsq_escalating, FitDiagnostics, RidgeLstsq};
use crate::rng::SeededRng;

/// Slack magnitudes outside this band skip the unit-variance normalisation
/// after fitting.
const NORMALIZE_BAND: (f64, f64) = (1e-6, 1e6);

/// An observed series paired with a slack sequence of the same length; the
/// completed state at time `j` is the concatenation of the two.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedSeries {
    observed: ObservedSeries,
    slack: Vec<DVector<f64>>,
}

impl CompletedSeries {
    /// Pair an observed series with a slack sequence of equal length and
    /// uniform dimension.
    pub fn new(observed: ObservedSeries, slack: Vec<DVector<f64>>) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::invalid("completed series needs at least one point"));
        }
        if slack.len() != observed.len() {
            return Err(Error::invalid(format!(
                "slack has {} entries but the observed series has {}",
                slack.len(),
                observed.len()
            )));
        }
        let s = slack.first().map_or(0, |v| v.len());
        if let Some(bad) = slack.iter().position(|v| v.len() != s) {
            return Err(Error::invalid(format!(
                "slack entry {bad} has dimension {}, expected {s}",
                slack[bad].len()
            )));
        }
        Ok(Self { observed, slack })
    }

    /// A completed series with an empty (0-dimensional) slack.
    pub fn without_slack(observed: ObservedSeries) -> Result<Self> {
        let n = observed.len();
        Self::new(observed, vec![DVector::zeros(0); n])
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    /// True when there are no time points (never for validated values).
    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Observed dimension `r`.
    pub fn observed_dim(&self) -> usize {
        self.observed.dim()
    }

    /// Slack dimension.
    pub fn slack_dim(&self) -> usize {
        self.slack.first().map_or(0, |v| v.len())
    }

    /// Dimension of the completed state.
    pub fn completed_dim(&self) -> usize {
        self.observed_dim() + self.slack_dim()
    }

    /// Sampling interval.
    pub fn step(&self) -> f64 {
        self.observed.step()
    }

    /// Borrow the observed component.
    pub fn observed(&self) -> &ObservedSeries {
        &self.observed
    }

    /// Borrow the slack sequence.
    pub fn slack(&self) -> &[DVector<f64>] {
        &self.slack
    }

    /// The completed state `(observed_j, slack_j)`.
    pub fn completed_state(&self, j: usize) -> DVector<f64> {
        let obs = self.observed.value(j);
        let mut out = DVector::zeros(self.completed_dim());
        out.rows_mut(0, obs.len()).copy_from(obs);
        out.rows_mut(obs.len(), self.slack[j].len())
            .copy_from(&self.slack[j]);
        out
    }
}

/// How the slack sequence is initialised before optimisation.
#[derive(Debug, Clone, PartialEq)]
pub enum SlackInit {
    /// I.i.d. standard normal entries.
    StandardNormal { seed: u64 },
    /// The true missing series plus i.i.d. standard normal noise.
    TruthPerturbed { truth: Vec<DVector<f64>>, seed: u64 },
    /// All zeros.
    Zeros,
    /// Exactly the given sequence (pinned starts, e.g. delayed
    /// observations).
    Exact(Vec<DVector<f64>>),
}

/// Materialise an initial slack sequence of `n` points of dimension
/// `s_tilde` according to `mode`. Deterministic given the mode's seed.
pub fn init_slack(n: usize, s_tilde: usize, mode: &SlackInit) -> Result<Vec<DVector<f64>>> {
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2 slack points, got {n}")));
    }
    if s_tilde == 0 {
        return Err(Error::invalid("slack dimension must be at least 1"));
    }
    let check_given = |given: &Vec<DVector<f64>>, label: &str| -> Result<()> {
        if given.len() != n {
            return Err(Error::invalid(format!(
                "{label} slack has {} entries, expected {n}",
                given.len()
            )));
        }
        if let Some(bad) = given.iter().position(|v| v.len() != s_tilde) {
            return Err(Error::invalid(format!(
                "{label} slack entry {bad} has dimension {}, expected {s_tilde}",
                given[bad].len()
            )));
        }
        Ok(())
    };
    match mode {
        SlackInit::StandardNormal { seed } => {
            let mut rng = SeededRng::new(*seed);
            Ok((0..n)
                .map(|_| DVector::from_vec(rng.standard_normal_vec(s_tilde)))
                .collect())
        }
        SlackInit::TruthPerturbed { truth, seed } => {
            check_given(truth, "truth")?;
            let mut rng = SeededRng::new(*seed);
            Ok(truth
                .iter()
                .map(|t| t.map(|v| v + rng.standard_normal()))
                .collect())
        }
        SlackInit::Zeros => Ok(vec![DVector::zeros(s_tilde); n]),
        SlackInit::Exact(given) => {
            check_given(given, "pinned")?;
            Ok(given.clone())
        }
    }
}

fn unflatten_slack(flat: &[f64], n: usize, s_tilde: usize) -> Result<Vec<DVector<f64>>> {
    if flat.len() != n * s_tilde {
        return Err(Error::invalid(format!(
            "slack vector has length {}, expected n * s_tilde = {}",
            flat.len(),
            n * s_tilde
        )));
    }
    Ok((0..n)
        .map(|j| DVector::from_column_slice(&flat[j * s_tilde..(j + 1) * s_tilde]))
        .collect())
}

fn flatten_slack(slack: &[DVector<f64>]) -> Vec<f64> {
    slack.iter().flat_map(|v| v.iter().copied()).collect()
}

/// Design and response matrices of a completed series (current states and
/// their successors), without going through [`CompletedSeries`] so the
/// optimizer's inner loop stays allocation-light.
fn completed_design(
    observed: &ObservedSeries,
    slack: &[DVector<f64>],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = observed.len();
    let r = observed.dim();
    let s = slack.first().map_or(0, |v| v.len());
    let d = r + s;
    let mut x = DMatrix::zeros(n - 1, d);
    let mut y = DMatrix::zeros(n - 1, d);
    for j in 0..n - 1 {
        x.row_mut(j)
            .columns_mut(0, r)
            .copy_from(&observed.value(j).transpose());
        x.row_mut(j)
            .columns_mut(r, s)
            .copy_from(&slack[j].transpose());
        y.row_mut(j)
            .columns_mut(0, r)
            .copy_from(&observed.value(j + 1).transpose());
        y.row_mut(j)
            .columns_mut(r, s)
            .copy_from(&slack[j + 1].transpose());
    }
    (x, y)
}

fn check_objective_args(
    observed: &ObservedSeries,
    slack_flat: &[f64],
    s_tilde: usize,
) -> Result<()> {
    let n = observed.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 observed points, got {n}"
        )));
    }
    if slack_flat.len() != n * s_tilde {
        return Err(Error::invalid(format!(
            "slack vector has length {}, expected {}",
            slack_flat.len(),
            n * s_tilde
        )));
    }
    Ok(())
}

/// The profiled objective over the slack: reshape `slack_flat` into
/// per-time slack vectors, build the completed one-step design and return
/// its profiled loss. Rank-deficient designs fall back to the escalation
/// ridge of the regression kernel.
pub fn ars_objective(
    observed: &ObservedSeries,
    slack_flat: &[f64],
    s_tilde: usize,
    ridge: f64,
) -> Result<f64> {
    check_objective_args(observed, slack_flat, s_tilde)?;
    let slack = unflatten_slack(slack_flat, observed.len(), s_tilde)?;
    let (x, y) = completed_design(observed, &slack);
    let (fit, _) = ridge_lstsq_escalating(&x, &y, ridge)?;
    Ok(fit.loss)
}

/// Exact gradient of [`ars_objective`] with respect to the flattened slack.
///
/// Writing `X` for the design (rows are completed states), `Y` for the
/// response (the same states one step later), `M` for the minimising
/// coefficient matrix and `R = Y - X M` for its residual, the objective is
/// `L = min_M |Y - X M|_F^2 + ridge |M|_F^2`. Because `M` is a minimiser,
/// the envelope theorem gives
///
/// `dL = 2 <R, dY>_F - 2 <R M', dX>_F`.
///
/// Slack coordinate `c` of time point `j` sits in column `q = r + c` of
/// design row `j` (when `j <= n-2`) and of response row `j - 1` (when
/// `j >= 1`), so
///
/// `dL/d slack[j][c] = 2 R[j-1, q] - 2 (R M')[j, q]`
///
/// with out-of-range rows contributing nothing.
pub fn ars_gradient(
    observed: &ObservedSeries,
    slack_flat: &[f64],
    s_tilde: usize,
    ridge: f64,
) -> Result<Vec<f64>> {
    check_objective_args(observed, slack_flat, s_tilde)?;
    let n = observed.len();
    let r = observed.dim();
    let slack = unflatten_slack(slack_flat, n, s_tilde)?;
    let (x, y) = completed_design(observed, &slack);
    let (fit, _) = ridge_lstsq_escalating(&x, &y, ridge)?;
    let projected = &fit.residual * fit.coef.transpose();
    let mut grad = vec![0.0; n * s_tilde];
    for j in 0..n {
        for c in 0..s_tilde {
            let q = r + c;
            let mut v = 0.0;
            if j >= 1 {
                v += fit.residual[(j - 1, q)];
            }
            if j + 1 < n {
                v -= projected[(j, q)];
            }
            grad[j * s_tilde + c] = 2.0 * v;
        }
    }
    Ok(grad)
}

/// Summary of the optimizer run that produced a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSummary {
    /// Objective value reached by the winning restart (before the
    /// unit-variance slack normalisation).
    pub loss: f64,
    /// Iterations spent by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart met a tolerance.
    pub converged: bool,
    /// Index of the winning restart.
    pub restart_index: usize,
}

impl From<&OptimResult> for OptimSummary {
    fn from(r: &OptimResult) -> Self {
        Self {
            loss: r.loss,
            iterations: r.iterations,
            converged: r.converged,
            restart_index: r.restart_index,
        }
    }
}

/// A fitted one-step linear model on completed states.
#[derive(Debug, Clone, PartialEq)]
pub struct ArsModel {
    /// Transition matrix in column convention: `x_{j+1} = B x_j`.
    pub b: DMatrix<f64>,
    /// Fitted slack sequence (length n, dimension `s_tilde`).
    pub slack: Vec<DVector<f64>>,
    /// The observed series the model was fitted on. Not serialized; a
    /// persisted model is rejoined with its history at load time.
    pub observed: ObservedSeries,
    /// Observed dimension.
    pub r: usize,
    /// Slack dimension.
    pub s_tilde: usize,
    /// Sampling interval.
    pub step: f64,
    /// Profiled loss of the design built from `(observed, slack)`.
    pub final_loss: f64,
    /// Ridge requested at fit time (see diagnostics for the one used).
    pub ridge: f64,
    /// Seed recorded for reproducibility (the optimizer stream).
    pub seed: u64,
    /// Numerical context of the final solve.
    pub diagnostics: FitDiagnostics,
    /// Outcome of the slack optimisation.
    pub optim: OptimSummary,
}

impl ArsModel {
    /// Whether the slack optimisation converged.
    pub fn converged(&self) -> bool {
        self.optim.converged
    }
}

fn solve_completed(
    observed: &ObservedSeries,
    slack: &[DVector<f64>],
    ridge: f64,
) -> Result<(RidgeLstsq, FitDiagnostics)> {
    let (x, y) = completed_design(observed, slack);
    let underdetermined = x.nrows() < x.ncols();
    let (fit, ridge_used) = ridge_lstsq_escalating(&x, &y, ridge)?;
    let diagnostics = FitDiagnostics {
        residual_sum: fit.loss,
        condition_hint: fit.condition,
        ridge_used,
        underdetermined,
    };
    Ok((fit, diagnostics))
}

/// Pooled sample standard deviation of all slack entries.
fn slack_sample_std(slack: &[DVector<f64>]) -> f64 {
    let values: Vec<f64> = flatten_slack(slack);
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Fit the slack-completed linear model: minimise [`ars_objective`] over
/// the slack with BFGS restarts, then recover the transition matrix from
/// the least-squares solve at the optimum.
///
/// The fitted slack is normalised to unit sample variance (a
/// forecast-invariant rescaling) so serialized models are comparable
/// across runs; `final_loss` refers to the stored, normalised slack. An
/// optimizer that stops on `max_iters` or a failed line search yields a
/// model with `converged() == false`; the caller decides whether to use it.
pub fn fit_ars(
    observed: &ObservedSeries,
    s_tilde: usize,
    init: &SlackInit,
    settings: &OptimSettings,
    ridge: f64,
) -> Result<ArsModel> {
    let n = observed.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 observed points (two transitions), got {n}"
        )));
    }
    let slack0 = if s_tilde == 0 {
        vec![DVector::zeros(0); n]
    } else {
        init_slack(n, s_tilde, init)?
    };

    let optim = if n * s_tilde == 0 {
        OptimResult {
            argmin: Vec::new(),
            loss: ars_objective(observed, &[], 0, ridge)?,
            iterations: 0,
            converged: true,
            restart_index: 0,
        }
    } else {
        let objective =
            |v: &[f64]| ars_objective(observed, v, s_tilde, ridge).unwrap_or(f64::INFINITY);
        let gradient = |v: &[f64]| {
            ars_gradient(observed, v, s_tilde, ridge).unwrap_or_else(|_| vec![0.0; v.len()])
        };
        minimize(objective, gradient, &flatten_slack(&slack0), settings)?
    };

    let mut slack = unflatten_slack(&optim.argmin, n, s_tilde)?;
    let std = slack_sample_std(&slack);
    if std > NORMALIZE_BAND.0 && std < NORMALIZE_BAND.1 {
        let alpha = 1.0 / std;
        for v in &mut slack {
            *v *= alpha;
        }
    }
    let (fit, diagnostics) = solve_completed(observed, &slack, ridge)?;

    Ok(ArsModel {
        b: fit.coef.transpose(),
        slack,
        observed: observed.clone(),
        r: observed.dim(),
        s_tilde,
        step: observed.step(),
        final_loss: fit.loss,
        ridge,
        seed: settings.seed,
        diagnostics,
        optim: OptimSummary::from(&optim),
    })
}

/// Iterate the fitted transition from the last completed state and return
/// the observed block of the next `k` states. A horizon of 0 yields an
/// empty series.
pub fn forecast_ars(model: &ArsModel, k: usize) -> ObservedSeries {
    let n = model.observed.len();
    let mut state = DVector::zeros(model.r + model.s_tilde);
    state
        .rows_mut(0, model.r)
        .copy_from(model.observed.value(n - 1));
    state
        .rows_mut(model.r, model.s_tilde)
        .copy_from(&model.slack[n - 1]);
    let mut values = Vec::with_capacity(k);
    for _ in 0..k {
        state = &model.b * state;
        values.push(state.rows(0, model.r).into_owned());
    }
    ObservedSeries::new(values, model.step, model.observed.start_index() + n as i64)
        .expect("forecast series is well-formed")
}

/// Alternating least-squares fallback for [`fit_ars`], useful as a
/// robustness diagnostic: with the slack fixed the best transition matrix
/// is the usual closed-form solve, and with the matrix fixed the best
/// slack solves a linear least-squares system (each slack vector enters
/// the one-step residuals linearly). Each half-step minimises exactly, so
/// the loss is nonincreasing across sweeps; `settings.max_iters` caps the
/// number of sweeps and `settings.loss_tol` stops on small decreases.
pub fn fit_ars_als(
    observed: &ObservedSeries,
    s_tilde: usize,
    init: &SlackInit,
    settings: &OptimSettings,
    ridge: f64,
) -> Result<ArsModel> {
    let n = observed.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 observed points (two transitions), got {n}"
        )));
    }
    let r = observed.dim();
    let mut slack = if s_tilde == 0 {
        vec![DVector::zeros(0); n]
    } else {
        init_slack(n, s_tilde, init)?
    };

    let mut loss = f64::INFINITY;
    let mut sweeps = 0;
    let mut converged = false;
    for sweep in 0..settings.max_iters.max(1) {
        // Matrix step: closed-form ridge solve at the current slack.
        let (x, y) = completed_design(observed, &slack);
        let (fit, _) = ridge_lstsq_escalating(&x, &y, ridge)?;
        let new_loss = fit.loss;
        sweeps = sweep + 1;
        if (loss - new_loss).abs() < settings.loss_tol {
            loss = new_loss;
            converged = true;
            break;
        }
        loss = new_loss;
        if s_tilde == 0 {
            converged = true;
            break;
        }
        // Slack step: with B fixed, stack the residual equations into one
        // linear least-squares problem over the flattened slack.
        let b = fit.coef.transpose(); // column convention, d x d
        slack = solve_slack_given_matrix(observed, &b, r, s_tilde, ridge)?;
    }

    let std = slack_sample_std(&slack);
    if std > NORMALIZE_BAND.0 && std < NORMALIZE_BAND.1 {
        let alpha = 1.0 / std;
        for v in &mut slack {
            *v *= alpha;
        }
    }
    let (fit, diagnostics) = solve_completed(observed, &slack, ridge)?;
    Ok(ArsModel {
        b: fit.coef.transpose(),
        slack,
        observed: observed.clone(),
        r: observed.dim(),
        s_tilde,
        step: observed.step(),
        final_loss: fit.loss,
        ridge,
        seed: settings.seed,
        diagnostics,
        optim: OptimSummary {
            loss,
            iterations: sweeps,
            converged,
            restart_index: 0,
        },
    })
}

/// Best slack for a fixed transition matrix: row block `j` of the stacked
/// system covers the residual of transition `j`, with the observed rows
/// depending on `slack_j` through the observed-from-slack block of `B` and
/// the slack rows coupling `slack_j` and `slack_{j+1}`.
fn solve_slack_given_matrix(
    observed: &ObservedSeries,
    b: &DMatrix<f64>,
    r: usize,
    s_tilde: usize,
    ridge: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = observed.len();
    let d = r + s_tilde;
    let unknowns = n * s_tilde;
    let mut x = DMatrix::zeros((n - 1) * d, unknowns);
    let mut y = DVector::zeros((n - 1) * d);
    let b_oo = b.view((0, 0), (r, r));
    let b_os = b.view((0, r), (r, s_tilde));
    let b_so = b.view((r, 0), (s_tilde, r));
    let b_ss = b.view((r, r), (s_tilde, s_tilde));
    for j in 0..n - 1 {
        let row0 = j * d;
        // Observed rows: z_{j+1} - B_oo z_j = B_os slack_j.
        let target = observed.value(j + 1) - b_oo * observed.value(j);
        for i in 0..r {
            y[row0 + i] = target[i];
            for c in 0..s_tilde {
                x[(row0 + i, j * s_tilde + c)] = b_os[(i, c)];
            }
        }
        // Slack rows: B_so z_j = slack_{j+1} - B_ss slack_j.
        let target = b_so * observed.value(j);
        for i in 0..s_tilde {
            y[row0 + r + i] = target[i];
            x[(row0 + r + i, (j + 1) * s_tilde + i)] = 1.0;
            for c in 0..s_tilde {
                x[(row0 + r + i, j * s_tilde + c)] = -b_ss[(i, c)];
            }
        }
    }
    let y_mat = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let (fit, _) = ridge_lstsq_escalating(&x, &y_mat, ridge)?;
    let flat: Vec<f64> = fit.coef.column(0).iter().copied().collect();
    unflatten_slack(&flat, n, s_tilde)
}

/// Multiply the slack by `alpha > 0` and conjugate the transition matrix by
/// `S = diag(I_r, alpha I_s)` so that observed-block forecasts are
/// unchanged: `B' = S B S^{-1}`, `slack' = alpha slack`.
pub fn rescale_slack(model: &ArsModel, alpha: f64) -> Result<ArsModel> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!(
            "rescale factor must be positive, got {alpha}"
        )));
    }
    let d = model.r + model.s_tilde;
    let scale = |i: usize| if i < model.r { 1.0 } else { alpha };
    let mut b = model.b.clone();
    for i in 0..d {
        for j in 0..d {
            b[(i, j)] *= scale(i) / scale(j);
        }
    }
    let slack: Vec<DVector<f64>> = model.slack.iter().map(|v| v * alpha).collect();
    let (fit, diagnostics) = solve_completed(&model.observed, &slack, model.ridge)?;
    Ok(ArsModel {
        b,
        slack,
        observed: model.observed.clone(),
        final_loss: fit.loss,
        diagnostics,
        ..model.clone()
    })
}

/// Feature map appending all distinct pairwise products to the
/// coordinates: `(x1, .., xd, x1 x2, .., x1 xd, x2 x3, .., x_{d-1} x_d)`,
/// of length `d (d + 1) / 2`.
pub fn interaction_map(x: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    let mut out = DVector::zeros(d * (d + 1) / 2);
    out.rows_mut(0, d).copy_from(x);
    let mut f = d;
    for a in 0..d {
        for b in a + 1..d {
            out[f] = x[a] * x[b];
            f += 1;
        }
    }
    out
}

/// Design/response of the interaction-extended model: feature-mapped
/// current states against plain successor states.
fn extended_design(
    observed: &ObservedSeries,
    slack: &[DVector<f64>],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (x, y) = completed_design(observed, slack);
    let d = x.ncols();
    let m = d * (d + 1) / 2;
    let mut feats = DMatrix::zeros(x.nrows(), m);
    for j in 0..x.nrows() {
        let mapped = interaction_map(&x.row(j).transpose());
        feats.row_mut(j).copy_from(&mapped.transpose());
    }
    (feats, y)
}

fn ext_objective(
    observed: &ObservedSeries,
    slack_flat: &[f64],
    s_tilde: usize,
    ridge: f64,
) -> Result<f64> {
    check_objective_args(observed, slack_flat, s_tilde)?;
    let slack = unflatten_slack(slack_flat, observed.len(), s_tilde)?;
    let (x, y) = extended_design(observed, &slack);
    let (fit, _) = ridge_lstsq_escalating(&x, &y, ridge)?;
    Ok(fit.loss)
}

/// Gradient of the interaction-extended profiled objective. Same envelope
/// argument as [`ars_gradient`], with the design differential passed
/// through the Jacobian of [`interaction_map`].
fn ext_gradient(
    observed: &ObservedSeries,
    slack_flat: &[f64],
    s_tilde: usize,
    ridge: f64,
) -> Result<Vec<f64>> {
    check_objective_args(observed, slack_flat, s_tilde)?;
    let n = observed.len();
    let r = observed.dim();
    let d = r + s_tilde;
    let slack = unflatten_slack(slack_flat, n, s_tilde)?;
    let (plain_x, _) = completed_design(observed, &slack);
    let (x, y) = extended_design(observed, &slack);
    let (fit, _) = ridge_lstsq_escalating(&x, &y, ridge)?;
    // (n-1) x m sensitivity of the loss to each feature entry.
    let projected = &fit.residual * fit.coef.transpose();
    let mut grad = vec![0.0; n * s_tilde];
    for j in 0..n {
        for c in 0..s_tilde {
            let q = r + c;
            let mut v = 0.0;
            if j >= 1 {
                v += fit.residual[(j - 1, q)];
            }
            if j + 1 < n {
                // Linear feature block.
                v -= projected[(j, q)];
                // Pairwise products containing coordinate q.
                let state = plain_x.row(j);
                let mut f = d;
                for a in 0..d {
                    for b in a + 1..d {
                        if a == q {
                            v -= projected[(j, f)] * state[b];
                        } else if b == q {
                            v -= projected[(j, f)] * state[a];
                        }
                        f += 1;
                    }
                }
            }
            grad[j * s_tilde + c] = 2.0 * v;
        }
    }
    Ok(grad)
}

/// A fitted interaction-extended model mapping feature-expanded completed
/// states to their successors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtArsModel {
    /// `d x d(d+1)/2` coefficient matrix in column convention:
    /// `x_{j+1} = E I(x_j)`.
    pub e: DMatrix<f64>,
    /// Fitted slack sequence.
    pub slack: Vec<DVector<f64>>,
    /// The observed series the model was fitted on (not serialized).
    pub observed: ObservedSeries,
    /// Observed dimension.
    pub r: usize,
    /// Slack dimension.
    pub s_tilde: usize,
    /// Sampling interval.
    pub step: f64,
    /// Profiled loss at the stored slack.
    pub final_loss: f64,
    /// Ridge requested at fit time.
    pub ridge: f64,
    /// Seed recorded for reproducibility.
    pub seed: u64,
    /// Numerical context of the final solve.
    pub diagnostics: FitDiagnostics,
    /// Outcome of the slack optimisation.
    pub optim: OptimSummary,
}

impl ExtArsModel {
    /// Whether the slack optimisation converged.
    pub fn converged(&self) -> bool {
        self.optim.converged
    }
}

/// Fit the interaction-extended model: the profiled scheme of [`fit_ars`]
/// with feature-mapped design rows. With fewer rows than features the
/// diagnostics carry an under-determined flag.
pub fn fit_ars_interactions(
    observed: &ObservedSeries,
    s_tilde: usize,
    init: &SlackInit,
    settings: &OptimSettings,
    ridge: f64,
) -> Result<ExtArsModel> {
    let n = observed.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 observed points (two transitions), got {n}"
        )));
    }
    let slack0 = if s_tilde == 0 {
        vec![DVector::zeros(0); n]
    } else {
        init_slack(n, s_tilde, init)?
    };

    let optim = if n * s_tilde == 0 {
        OptimResult {
            argmin: Vec::new(),
            loss: ext_objective(observed, &[], 0, ridge)?,
            iterations: 0,
            converged: true,
            restart_index: 0,
        }
    } else {
        let objective =
            |v: &[f64]| ext_objective(observed, v, s_tilde, ridge).unwrap_or(f64::INFINITY);
        let gradient = |v: &[f64]| {
            ext_gradient(observed, v, s_tilde, ridge).unwrap_or_else(|_| vec![0.0; v.len()])
        };
        minimize(objective, gradient, &flatten_slack(&slack0), settings)?
    };

    let mut slack = unflatten_slack(&optim.argmin, n, s_tilde)?;
    let std = slack_sample_std(&slack);
    if std > NORMALIZE_BAND.0 && std < NORMALIZE_BAND.1 {
        let alpha = 1.0 / std;
        for v in &mut slack {
            *v *= alpha;
        }
    }
    let (x, y) = extended_design(observed, &slack);
    let underdetermined = x.nrows() < x.ncols();
    let (fit, ridge_used) = ridge_lstsq_escalating(&x, &y, ridge)?;
    let diagnostics = FitDiagnostics {
        residual_sum: fit.loss,
        condition_hint: fit.condition,
        ridge_used,
        underdetermined,
    };

    Ok(ExtArsModel {
        e: fit.coef.transpose(),
        slack,
        observed: observed.clone(),
        r: observed.dim(),
        s_tilde,
        step: observed.step(),
        final_loss: fit.loss,
        ridge,
        seed: settings.seed,
        diagnostics,
        optim: OptimSummary::from(&optim),
    })
}

/// Iterate the completed state through `E . interaction_map` and return
/// the observed block of each of the `k` iterates.
pub fn forecast_ars_interactions(model: &ExtArsModel, k: usize) -> Result<ObservedSeries> {
    let n = model.observed.len();
    let mut state = DVector::zeros(model.r + model.s_tilde);
    state
        .rows_mut(0, model.r)
        .copy_from(model.observed.value(n - 1));
    state
        .rows_mut(model.r, model.s_tilde)
        .copy_from(&model.slack[n - 1]);
    let mut values = Vec::with_capacity(k);
    for step in 1..=k {
        state = &model.e * interaction_map(&state);
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow {
                step,
                context: "interaction-extended forecast".into(),
            });
        }
        values.push(state.rows(0, model.r).into_owned());
    }
    ObservedSeries::new(values, model.step, model.observed.start_index() + n as i64)
}

#[derive(Serialize, Deserialize)]
struct ArsModelJson {
    #[serde(rename = "type")]
    kind: String,
    r: usize,
    s_tilde: usize,
    h: f64,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none", default)]
    b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "E", skip_serializing_if = "Option::is_none", default)]
    e: Option<Vec<Vec<f64>>>,
    slack: Vec<Vec<f64>>,
    final_loss: f64,
    ridge: f64,
    seed: u64,
    converged: bool,
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], label: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::invalid(format!("{label} matrix is empty")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid(format!("{label} matrix rows are ragged")));
    }
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(row);
    }
    Ok(m)
}

impl ArsModel {
    /// Serialize as the model JSON interchange format (the observed history
    /// is not included; see [`ArsModel::from_json`]).
    pub fn to_json(&self) -> String {
        let doc = ArsModelJson {
            kind: "ars".into(),
            r: self.r,
            s_tilde: self.s_tilde,
            h: self.step,
            b: Some(matrix_to_rows(&self.b)),
            e: None,
            slack: self
                .slack
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            final_loss: self.final_loss,
            ridge: self.ridge,
            seed: self.seed,
            converged: self.optim.converged,
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Rebuild a model from its JSON form and the observed history it was
    /// fitted on. The history length must match the stored slack.
    pub fn from_json(text: &str, observed: ObservedSeries) -> Result<ArsModel> {
        let doc: ArsModelJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.kind != "ars" {
            return Err(Error::invalid(format!(
                "expected model type 'ars', got '{}'",
                doc.kind
            )));
        }
        let b = rows_to_matrix(
            &doc.b.ok_or_else(|| Error::invalid("missing B matrix"))?,
            "B",
        )?;
        let d = doc.r + doc.s_tilde;
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::invalid(format!(
                "B is {}x{}, expected {d}x{d}",
                b.nrows(),
                b.ncols()
            )));
        }
        if observed.dim() != doc.r {
            return Err(Error::invalid(format!(
                "history has dimension {}, model expects r = {}",
                observed.dim(),
                doc.r
            )));
        }
        if observed.len() != doc.slack.len() {
            return Err(Error::invalid(format!(
                "history has {} points but the model stores {} slack entries",
                observed.len(),
                doc.slack.len()
            )));
        }
        let slack: Vec<DVector<f64>> = doc
            .slack
            .iter()
            .map(|row| DVector::from_vec(row.clone()))
            .collect();
        if slack.iter().any(|v| v.len() != doc.s_tilde) {
            return Err(Error::invalid("slack entries disagree with s_tilde"));
        }
        Ok(ArsModel {
            b,
            slack,
            observed,
            r: doc.r,
            s_tilde: doc.s_tilde,
            step: doc.h,
            final_loss: doc.final_loss,
            ridge: doc.ridge,
            seed: doc.seed,
            diagnostics: FitDiagnostics {
                residual_sum: doc.final_loss,
                condition_hint: 0.0,
                ridge_used: doc.ridge,
                underdetermined: false,
            },
            optim: OptimSummary {
                loss: doc.final_loss,
                iterations: 0,
                converged: doc.converged,
                restart_index: 0,
            },
        })
    }
}

impl ExtArsModel {
    /// Serialize as the model JSON interchange format.
    pub fn to_json(&self) -> String {
        let doc = ArsModelJson {
            kind: "ars_int".into(),
            r: self.r,
            s_tilde: self.s_tilde,
            h: self.step,
            b: None,
            e: Some(matrix_to_rows(&self.e)),
            slack: self
                .slack
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            final_loss: self.final_loss,
            ridge: self.ridge,
            seed: self.seed,
            converged: self.optim.converged,
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Rebuild an interaction-extended model from its JSON form and the
    /// observed history it was fitted on.
    pub fn from_json(text: &str, observed: ObservedSeries) -> Result<ExtArsModel> {
        let doc: ArsModelJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.kind != "ars_int" {
            return Err(Error::invalid(format!(
                "expected model type 'ars_int', got '{}'",
                doc.kind
            )));
        }
        let e = rows_to_matrix(
            &doc.e.ok_or_else(|| Error::invalid("missing E matrix"))?,
            "E",
        )?;
        let d = doc.r + doc.s_tilde;
        if e.nrows() != d || e.ncols() != d * (d + 1) / 2 {
            return Err(Error::invalid(format!(
                "E is {}x{}, expected {d}x{}",
                e.nrows(),
                e.ncols(),
                d * (d + 1) / 2
            )));
        }
        if observed.dim() != doc.r || observed.len() != doc.slack.len() {
            return Err(Error::invalid(
                "history does not match the model dimensions",
            ));
        }
        let slack: Vec<DVector<f64>> = doc
            .slack
            .iter()
            .map(|row| DVector::from_vec(row.clone()))
            .collect();
        if slack.iter().any(|v| v.len() != doc.s_tilde) {
            return Err(Error::invalid("slack entries disagree with s_tilde"));
        }
        Ok(ExtArsModel {
            e,
            slack,
            observed,
            r: doc.r,
            s_tilde: doc.s_tilde,
            step: doc.h,
            final_loss: doc.final_loss,
            ridge: doc.ridge,
            seed: doc.seed,
            diagnostics: FitDiagnostics {
                residual_sum: doc.final_loss,
                condition_hint: 0.0,
                ridge_used: doc.ridge,
                underdetermined: false,
            },
            optim: OptimSummary {
                loss: doc.final_loss,
                iterations: 0,
                converged: doc.converged,
                restart_index: 0,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::fit_ar;
    use crate::dynamics::{gen_circular, gen_lorenz, split_observed, LorenzParams, MissingSpec};
    use crate::optimizer::check_gradient;
    use approx::assert_relative_eq;

    fn circular_observed(n: usize) -> (ObservedSeries, Vec<DVector<f64>>) {
        let traj = gen_circular(n, 1).unwrap();
        let spec = MissingSpec::new(1, 1).unwrap();
        let observed = split_observed(&traj, &spec).unwrap();
        let truth: Vec<DVector<f64>> = traj
            .states()
            .iter()
            .map(|s| DVector::from_vec(vec![s[1]]))
            .collect();
        (observed, truth)
    }

    fn tight_settings(seed: u64) -> OptimSettings {
        OptimSettings {
            max_iters: 2000,
            grad_tol: 1e-10,
            loss_tol: 1e-18,
            restarts: 3,
            seed,
            ..OptimSettings::default()
        }
    }

    #[test]
    fn init_zeros() {
        let slack = init_slack(3, 1, &SlackInit::Zeros).unwrap();
        assert_eq!(slack, vec![DVector::zeros(1); 3]);
    }

    #[test]
    fn init_truth_perturbed_is_deterministic() {
        let truth: Vec<DVector<f64>> = (0..5).map(|j| DVector::from_vec(vec![j as f64])).collect();
        let mode = SlackInit::TruthPerturbed {
            truth: truth.clone(),
            seed: 3,
        };
        assert_eq!(
            init_slack(5, 1, &mode).unwrap(),
            init_slack(5, 1, &mode).unwrap()
        );
        // And it differs from the truth itself.
        assert_ne!(init_slack(5, 1, &mode).unwrap(), truth);
    }

    #[test]
    fn init_standard_normal_moments() {
        let slack = init_slack(10_000, 1, &SlackInit::StandardNormal { seed: 4 }).unwrap();
        let vals: Vec<f64> = slack.iter().map(|v| v[0]).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((0.97..=1.03).contains(&sd), "sd {sd}");
    }

    #[test]
    fn init_rejects_bad_truth_length() {
        let truth = vec![DVector::zeros(1); 4];
        let mode = SlackInit::TruthPerturbed { truth, seed: 0 };
        assert!(matches!(
            init_slack(5, 1, &mode),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn objective_vanishes_with_true_slack() {
        let (observed, truth) = circular_observed(60);
        let flat = flatten_slack(&truth);
        let loss = ars_objective(&observed, &flat, 1, 0.0).unwrap();
        assert!(loss < 1e-20, "loss {loss}");
    }

    #[test]
    fn objective_observed_block_invariant_under_slack_scaling() {
        let (observed, _) = circular_observed(20);
        let mut rng = SeededRng::new(8);
        let slack: Vec<DVector<f64>> = (0..20)
            .map(|_| DVector::from_vec(vec![rng.standard_normal()]))
            .collect();
        let residual_obs = |slack: &[DVector<f64>]| -> f64 {
            let (x, y) = completed_design(&observed, slack);
            let (fit, _) = ridge_lstsq_escalating(&x, &y, 0.0).unwrap();
            fit.residual.column(0).norm_squared()
        };
        let base = residual_obs(&slack);
        for alpha in [0.1, 2.0, 10.0] {
            let scaled: Vec<DVector<f64>> = slack.iter().map(|v| v * alpha).collect();
            let got = residual_obs(&scaled);
            assert_relative_eq!(got, base, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn objective_matches_two_by_two_brute_force() {
        // n = 3 scalar observations with a frozen slack: the profiled value
        // must equal the minimum over B of the joint loss, solved here by
        // explicit 2x2 normal equations.
        let observed = ObservedSeries::new(
            vec![
                DVector::from_vec(vec![1.0]),
                DVector::from_vec(vec![2.0]),
                DVector::from_vec(vec![-0.5]),
            ],
            1.0,
            0,
        )
        .unwrap();
        let slack_flat = [0.3, -1.2, 0.7];
        let loss = ars_objective(&observed, &slack_flat, 1, 0.0).unwrap();

        // Rows of the design: completed states at j = 0, 1.
        let x: [[f64; 2]; 2] = [[1.0, 0.3], [2.0, -1.2]];
        let y: [[f64; 2]; 2] = [[2.0, -1.2], [-0.5, 0.7]];
        // Normal equations G m_col = X' y_col per output column.
        let g = [
            [
                x[0][0] * x[0][0] + x[1][0] * x[1][0],
                x[0][0] * x[0][1] + x[1][0] * x[1][1],
            ],
            [
                x[0][1] * x[0][0] + x[1][1] * x[1][0],
                x[0][1] * x[0][1] + x[1][1] * x[1][1],
            ],
        ];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let ginv = [
            [g[1][1] / det, -g[0][1] / det],
            [-g[1][0] / det, g[0][0] / det],
        ];
        let mut brute = 0.0;
        for col in 0..2 {
            let rhs = [
                x[0][0] * y[0][col] + x[1][0] * y[1][col],
                x[0][1] * y[0][col] + x[1][1] * y[1][col],
            ];
            let m = [
                ginv[0][0] * rhs[0] + ginv[0][1] * rhs[1],
                ginv[1][0] * rhs[0] + ginv[1][1] * rhs[1],
            ];
            for row in 0..2 {
                let pred = x[row][0] * m[0] + x[row][1] * m[1];
                brute += (y[row][col] - pred).powi(2);
            }
        }
        assert_relative_eq!(loss, brute, epsilon = 1e-12, max_relative = 1e-9);
    }

    #[test]
    fn gradient_vanishes_at_global_minimum() {
        let (observed, truth) = circular_observed(40);
        let flat = flatten_slack(&truth);
        let grad = ars_gradient(&observed, &flat, 1, 0.0).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "gradient norm {norm}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (observed, _) = circular_observed(25);
        let mut rng = SeededRng::new(21);
        for _ in 0..5 {
            let point: Vec<f64> = rng.standard_normal_vec(25);
            let f = |v: &[f64]| ars_objective(&observed, v, 1, 0.0).unwrap();
            let g = |v: &[f64]| ars_gradient(&observed, v, 1, 0.0).unwrap();
            let err = check_gradient(f, g, &point, 1e-5).unwrap();
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn gradient_continuous_in_ridge() {
        let (observed, _) = circular_observed(15);
        let mut rng = SeededRng::new(22);
        let point: Vec<f64> = rng.standard_normal_vec(15);
        let diff_at = |ridge: f64| -> f64 {
            let a = ars_gradient(&observed, &point, 1, ridge).unwrap();
            let b = ars_gradient(&observed, &point, 1, 2.0 * ridge).unwrap();
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let coarse = diff_at(1e-2);
        let mid = diff_at(1e-4);
        let fine = diff_at(1e-8);
        assert!(mid < coarse, "no shrink: {coarse} -> {mid}");
        assert!(fine < mid, "no shrink: {mid} -> {fine}");
    }

    #[test]
    fn fit_recovers_circular_rotation() {
        let (observed, truth) = circular_observed(100);
        let init = SlackInit::TruthPerturbed { truth, seed: 5 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(5), 0.0).unwrap();
        assert!(model.final_loss < 1e-12, "loss {}", model.final_loss);
        for ev in model.b.complex_eigenvalues().iter() {
            assert!((ev.norm() - 1.0).abs() < 1e-4, "eigenvalue {ev}");
        }
        // Forecasts continue the cosine.
        let forecast = forecast_ars(&model, 25);
        for (i, v) in forecast.values().iter().enumerate() {
            let j = 101 + i as i64; // history holds j = 1..=100
            let expected = (5.0 + j as f64 / 20.0).cos();
            assert!(
                (v[0] - expected).abs() < 1e-5,
                "horizon {}: {} vs {expected}",
                i + 1,
                v[0]
            );
        }
    }

    #[test]
    fn fit_ignores_slack_when_observed_is_linear() {
        // Scalar geometric series: already one-step linear on its own.
        let values: Vec<DVector<f64>> = (0..30)
            .map(|j| DVector::from_vec(vec![0.9_f64.powi(j)]))
            .collect();
        let observed = ObservedSeries::new(values, 1.0, 0).unwrap();
        for init in [SlackInit::StandardNormal { seed: 1 }, SlackInit::Zeros] {
            let model = fit_ars(&observed, 1, &init, &tight_settings(2), 0.0).unwrap();
            assert!(
                model.final_loss < 1e-12,
                "loss {} from {init:?}",
                model.final_loss
            );
        }
    }

    #[test]
    fn fit_beats_ar1_on_lorenz() {
        let traj = gen_lorenz(100, &LorenzParams::default()).unwrap();
        let spec = MissingSpec::new(2, 1).unwrap();
        let observed = split_observed(&traj, &spec).unwrap();
        let truth: Vec<DVector<f64>> = traj
            .states()
            .iter()
            .map(|s| DVector::from_vec(vec![s[2]]))
            .collect();
        let ar = fit_ar(&observed, 1, 0.0).unwrap();
        let init = SlackInit::TruthPerturbed { truth, seed: 6 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(6), 0.0).unwrap();
        assert!(
            model.final_loss < ar.diagnostics().residual_sum,
            "ars {} vs ar {}",
            model.final_loss,
            ar.diagnostics().residual_sum
        );
    }

    #[test]
    fn fit_requires_three_points() {
        let observed = ObservedSeries::new(
            vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])],
            1.0,
            0,
        )
        .unwrap();
        assert!(matches!(
            fit_ars(
                &observed,
                1,
                &SlackInit::Zeros,
                &OptimSettings::default(),
                0.0
            ),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn forecast_zero_horizon_is_empty() {
        let (observed, truth) = circular_observed(30);
        let init = SlackInit::TruthPerturbed { truth, seed: 9 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(9), 0.0).unwrap();
        assert!(forecast_ars(&model, 0).is_empty());
    }

    #[test]
    fn identity_transition_repeats_last_state() {
        let (observed, truth) = circular_observed(30);
        let init = SlackInit::TruthPerturbed { truth, seed: 10 };
        let mut model = fit_ars(&observed, 1, &init, &tight_settings(10), 0.0).unwrap();
        model.b = DMatrix::identity(2, 2);
        let forecast = forecast_ars(&model, 5);
        let last = observed.value(29)[0];
        for v in forecast.values() {
            assert_eq!(v[0], last);
        }
    }

    #[test]
    fn rescale_identity_is_noop() {
        let (observed, truth) = circular_observed(40);
        let init = SlackInit::TruthPerturbed { truth, seed: 11 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(11), 0.0).unwrap();
        let same = rescale_slack(&model, 1.0).unwrap();
        assert_eq!(same.b, model.b);
        assert_eq!(same.slack, model.slack);
    }

    #[test]
    fn rescale_preserves_forecasts() {
        let (observed, truth) = circular_observed(60);
        let init = SlackInit::TruthPerturbed { truth, seed: 12 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(12), 0.0).unwrap();
        let base = forecast_ars(&model, 25);
        for alpha in [0.1, 2.0, 10.0] {
            let scaled = rescale_slack(&model, alpha).unwrap();
            let forecast = forecast_ars(&scaled, 25);
            for (a, b) in base.values().iter().zip(forecast.values()) {
                assert!((a[0] - b[0]).abs() < 1e-10, "alpha {alpha}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rescale_rejects_nonpositive_alpha() {
        let (observed, truth) = circular_observed(20);
        let init = SlackInit::TruthPerturbed { truth, seed: 13 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(13), 0.0).unwrap();
        assert!(matches!(
            rescale_slack(&model, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            rescale_slack(&model, -2.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn interaction_map_orders_features() {
        let x1 = interaction_map(&DVector::from_vec(vec![5.0]));
        assert_eq!(x1.as_slice(), &[5.0]);
        let x3 = interaction_map(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(x3.as_slice(), &[1.0, 2.0, 3.0, 2.0, 3.0, 6.0]);
        let x4 = interaction_map(&DVector::from_vec(vec![1.0; 4]));
        assert_eq!(x4.len(), 10);
    }

    #[test]
    fn interactions_recover_lorenz_generator() {
        // All three coordinates observed, no slack: the least-squares E must
        // reproduce the coefficient block of the generating map, padded with
        // zeros in the 6-feature layout.
        let traj = gen_lorenz(60, &LorenzParams::default()).unwrap();
        let observed = split_observed(&traj, &MissingSpec::new(3, 0).unwrap()).unwrap();
        let model = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        let h = 1.0 / 200.0;
        let (a, b, g) = (10.0, 28.0, 8.0 / 3.0);
        #[rustfmt::skip]
        let expected = [
            [1.0 - a * h, a * h,       0.0,         0.0, 0.0,  0.0],
            [b * h,       1.0 - h,     0.0,         0.0, -h,   0.0],
            [0.0,         0.0,         1.0 - g * h, h,   0.0,  0.0],
        ];
        for i in 0..3 {
            for j in 0..6 {
                assert!(
                    (model.e[(i, j)] - expected[i][j]).abs() < 1e-8,
                    "E[{i}][{j}] = {} vs {}",
                    model.e[(i, j)],
                    expected[i][j]
                );
            }
        }
        assert!(model.final_loss < 1e-16, "loss {}", model.final_loss);
    }

    #[test]
    fn interactions_vanish_on_linear_data() {
        // Rotation data over a full cycle: quadratic features get
        // coefficients indistinguishable from zero.
        let traj = crate::dynamics::gen_circular_with(50, 0, 0.0, 0.3).unwrap();
        let observed = split_observed(&traj, &MissingSpec::new(2, 0).unwrap()).unwrap();
        let model = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        // d = 2: one interaction column, index 2.
        let interaction_norm = model.e.column(2).norm();
        assert!(interaction_norm < 1e-6, "norm {interaction_norm}");
    }

    #[test]
    fn interactions_degenerate_to_plain_fit_for_d1() {
        let values: Vec<DVector<f64>> = (0..20)
            .map(|j| DVector::from_vec(vec![(j as f64 * 0.4).cos() + 2.0]))
            .collect();
        let observed = ObservedSeries::new(values, 1.0, 0).unwrap();
        let plain = fit_ars(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        let ext = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        assert_relative_eq!(plain.final_loss, ext.final_loss, epsilon = 1e-10);
    }

    #[test]
    fn extended_gradient_matches_finite_differences() {
        let traj = gen_lorenz(20, &LorenzParams::default()).unwrap();
        let observed = split_observed(&traj, &MissingSpec::new(2, 1).unwrap()).unwrap();
        let mut rng = SeededRng::new(30);
        for _ in 0..3 {
            let point: Vec<f64> = rng.standard_normal_vec(20);
            let f = |v: &[f64]| ext_objective(&observed, v, 1, 0.0).unwrap();
            let g = |v: &[f64]| ext_gradient(&observed, v, 1, 0.0).unwrap();
            let err = check_gradient(f, g, &point, 1e-5).unwrap();
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn extended_forecast_continues_lorenz() {
        let traj = gen_lorenz(125, &LorenzParams::default()).unwrap();
        let train = traj.slice(0, 100).unwrap();
        let observed = split_observed(&train, &MissingSpec::new(3, 0).unwrap()).unwrap();
        let model = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        let forecast = forecast_ars_interactions(&model, 25).unwrap();
        for (i, v) in forecast.values().iter().enumerate() {
            let truth = traj.state(100 + i);
            for c in 0..3 {
                assert!(
                    (v[c] - truth[c]).abs() < 1e-4,
                    "horizon {} coord {c}: {} vs {}",
                    i + 1,
                    v[c],
                    truth[c]
                );
            }
        }
    }

    #[test]
    fn extended_forecast_identity_is_constant() {
        let traj = gen_lorenz(20, &LorenzParams::default()).unwrap();
        let observed = split_observed(&traj, &MissingSpec::new(3, 0).unwrap()).unwrap();
        let mut model = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        // E encoding the identity on the linear block.
        model.e = DMatrix::zeros(3, 6);
        for i in 0..3 {
            model.e[(i, i)] = 1.0;
        }
        let forecast = forecast_ars_interactions(&model, 4).unwrap();
        for v in forecast.values() {
            assert_eq!(v.as_slice(), observed.value(19).as_slice());
        }
        assert!(forecast_ars_interactions(&model, 0).unwrap().is_empty());
    }

    #[test]
    fn extended_forecast_flags_divergence() {
        let traj = gen_lorenz(20, &LorenzParams::default()).unwrap();
        let observed = split_observed(&traj, &MissingSpec::new(3, 0).unwrap()).unwrap();
        let mut model = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        model.e *= 50.0; // strongly expanding quadratic map
        match forecast_ars_interactions(&model, 500) {
            Err(Error::NumericOverflow { step, .. }) => assert!(step > 0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn model_json_round_trip() {
        let (observed, truth) = circular_observed(30);
        let init = SlackInit::TruthPerturbed { truth, seed: 14 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(14), 0.0).unwrap();
        let text = model.to_json();
        assert!(text.contains("\"type\": \"ars\""));
        let back = ArsModel::from_json(&text, observed.clone()).unwrap();
        assert_eq!(back.b, model.b);
        assert_eq!(back.slack, model.slack);
        let a = forecast_ars(&model, 10);
        let b = forecast_ars(&back, 10);
        assert_eq!(a.values(), b.values());
        // Length mismatch between history and slack is rejected.
        let short = observed.slice(0, 10).unwrap();
        assert!(ArsModel::from_json(&text, short).is_err());
    }

    #[test]
    fn model_loss_agrees_with_design_route() {
        // The stored loss and matrix must match what the public design
        // pipeline computes from (observed, slack).
        let (observed, truth) = circular_observed(50);
        let init = SlackInit::TruthPerturbed { truth, seed: 23 };
        let model = fit_ars(&observed, 1, &init, &tight_settings(23), 0.0).unwrap();
        let series = CompletedSeries::new(observed.clone(), model.slack.clone()).unwrap();
        let pair = crate::regression::build_design(&series).unwrap();
        let loss = crate::regression::profiled_loss(&pair, model.diagnostics.ridge_used).unwrap();
        assert!(
            (loss - model.final_loss).abs() < 1e-9 * (1.0 + loss),
            "stored {} vs recomputed {loss}",
            model.final_loss
        );
        let m = crate::regression::ols_fit(&pair, model.diagnostics.ridge_used).unwrap();
        assert!((m.transpose() - &model.b).norm() < 1e-9 * (1.0 + model.b.norm()));
    }

    #[test]
    fn optimizer_never_worse_than_initial_slack() {
        let (observed, _) = circular_observed(40);
        let init = SlackInit::StandardNormal { seed: 77 };
        let slack0 = init_slack(40, 1, &init).unwrap();
        let initial = ars_objective(&observed, &flatten_slack(&slack0), 1, 0.0).unwrap();
        let model = fit_ars(&observed, 1, &init, &tight_settings(77), 0.0).unwrap();
        assert!(model.optim.loss <= initial + 1e-12);
    }

    #[test]
    fn als_descends_and_recovers_rotation() {
        let (observed, truth) = circular_observed(60);
        let init = SlackInit::TruthPerturbed { truth, seed: 19 };
        let slack0 = init_slack(60, 1, &init).unwrap();
        let initial = ars_objective(&observed, &flatten_slack(&slack0), 1, 0.0).unwrap();
        let settings = OptimSettings {
            max_iters: 400,
            loss_tol: 1e-14,
            ..OptimSettings::default()
        };
        let model = fit_ars_als(&observed, 1, &init, &settings, 0.0).unwrap();
        assert!(model.optim.loss <= initial + 1e-12);
        assert!(model.final_loss < 1e-6, "loss {}", model.final_loss);
        for ev in model.b.complex_eigenvalues().iter() {
            assert!((ev.norm() - 1.0).abs() < 1e-2, "eigenvalue {ev}");
        }
        // Same data through the quasi-Newton path lands in the same regime.
        let bfgs = fit_ars(
            &observed,
            1,
            &SlackInit::TruthPerturbed {
                truth: circular_observed(60).1,
                seed: 19,
            },
            &tight_settings(19),
            0.0,
        )
        .unwrap();
        assert!(bfgs.final_loss < 1e-6);
    }

    #[test]
    fn als_handles_zero_slack_dimension() {
        let values: Vec<DVector<f64>> = (0..20)
            .map(|j| DVector::from_vec(vec![0.8_f64.powi(j)]))
            .collect();
        let observed = ObservedSeries::new(values, 1.0, 0).unwrap();
        let model = fit_ars_als(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        assert!(model.final_loss < 1e-20);
    }

    #[test]
    fn ext_model_json_round_trip() {
        let traj = gen_lorenz(40, &LorenzParams::default()).unwrap();
        let observed = split_observed(&traj, &MissingSpec::new(3, 0).unwrap()).unwrap();
        let model = fit_ars_interactions(
            &observed,
            0,
            &SlackInit::Zeros,
            &OptimSettings::default(),
            0.0,
        )
        .unwrap();
        let text = model.to_json();
        assert!(text.contains("\"type\": \"ars_int\""));
        let back = ExtArsModel::from_json(&text, observed).unwrap();
        assert_eq!(back.e, model.e);
        let a = forecast_ars_interactions(&model, 5).unwrap();
        let b = forecast_ars_interactions(&back, 5).unwrap();
        assert_eq!(a.values(), b.values());
    }
}
