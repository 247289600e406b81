//! General-purpose smooth unconstrained minimisation.
//!
//! A dense BFGS quasi-Newton iteration with a strong-Wolfe line search
//! (Nocedal & Wright, Algorithms 3.5/3.6), plus a central-difference
//! gradient checker. Problems here are small (at most a few hundred
//! variables), so the full inverse-Hessian approximation is kept densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Wolfe sufficient-decrease constant.
const C1: f64 = 1e-4;
/// Wolfe curvature constant.
const C2: f64 = 0.9;
/// Standard deviation of the Gaussian jitter applied on restarts.
const RESTART_JITTER: f64 = 0.1;

/// Termination and restart settings for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSettings {
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Stop when the gradient Euclidean norm falls below this.
    pub grad_tol: f64,
    /// Stop when one iteration decreases the loss by less than this.
    pub loss_tol: f64,
    /// Stop (converged) as soon as the loss falls to this value; useful
    /// when the smallest meaningful loss is known, e.g. a noise floor.
    /// The default of negative infinity never triggers.
    pub loss_floor: f64,
    /// Number of additional jittered starts after the plain `x0` run.
    pub restarts: usize,
    /// Seed for the restart jitter.
    pub seed: u64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            loss_tol: 1e-10,
            loss_floor: f64::NEG_INFINITY,
            restarts: 3,
            seed: 0,
        }
    }
}

impl OptimSettings {
    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || !(self.loss_tol > 0.0) {
            return Err(Error::invalid("optimizer tolerances must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a [`minimize`] call: the best point over all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    /// Best point found.
    pub argmin: Vec<f64>,
    /// Objective value at `argmin`.
    pub loss: f64,
    /// Iterations spent by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart met a tolerance (rather than hitting
    /// `max_iters` or a failed line search).
    pub converged: bool,
    /// Which restart won (0 is the plain `x0` run).
    pub restart_index: usize,
}

struct RunOutcome {
    x: DVector<f64>,
    loss: f64,
    iterations: usize,
    converged: bool,
}

/// Minimise `objective` from `x0` with BFGS, returning the best point over
/// `settings.restarts + 1` runs (the first from `x0` itself, the rest from
/// `x0` plus seeded Gaussian jitter).
///
/// A failed line search ends the run with its best point so far and
/// `converged = false`; the result over restarts is still the lowest loss
/// seen, which never exceeds `objective(x0)`.
pub fn minimize<F, G>(
    objective: F,
    gradient: G,
    x0: &[f64],
    settings: &OptimSettings,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    settings.validate()?;
    let x0 = DVector::from_column_slice(x0);
    let f0 = objective(x0.as_slice());
    if !f0.is_finite() {
        return Err(Error::invalid(format!(
            "objective is not finite at the starting point (got {f0})"
        )));
    }
    if x0.is_empty() {
        return Ok(OptimResult {
            argmin: Vec::new(),
            loss: f0,
            iterations: 0,
            converged: true,
            restart_index: 0,
        });
    }
    if gradient(x0.as_slice()).iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid(
            "gradient is not finite at the starting point",
        ));
    }

    let mut rng = SeededRng::new(settings.seed);
    let mut best: Option<OptimResult> = None;
    for attempt in 0..=settings.restarts {
        let start = if attempt == 0 {
            x0.clone()
        } else {
            x0.map(|v| v + RESTART_JITTER * rng.standard_normal())
        };
        let run = bfgs_run(&objective, &gradient, start, settings);
        if best.as_ref().is_none_or(|b| run.loss < b.loss) {
            best = Some(OptimResult {
                argmin: run.x.as_slice().to_vec(),
                loss: run.loss,
                iterations: run.iterations,
                converged: run.converged,
                restart_index: attempt,
            });
        }
    }
    Ok(best.expect("at least one attempt ran"))
}

fn bfgs_run<F, G>(
    objective: &F,
    gradient: &G,
    mut x: DVector<f64>,
    settings: &OptimSettings,
) -> RunOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut fx = objective(x.as_slice());
    let mut gx = DVector::from_vec(gradient(x.as_slice()));
    if !fx.is_finite() || gx.iter().any(|g| !g.is_finite()) {
        // Jittered starts can land on bad points; report as non-converged.
        return RunOutcome {
            x,
            loss: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }

    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;

    for iter in 0..settings.max_iters {
        if fx <= settings.loss_floor {
            return RunOutcome {
                x,
                loss: fx,
                iterations: iter,
                converged: true,
            };
        }
        if gx.norm() < settings.grad_tol {
            return RunOutcome {
                x,
                loss: fx,
                iterations: iter,
                converged: true,
            };
        }

        let mut direction = -(&h_inv * &gx);
        if gx.dot(&direction) >= 0.0 {
            // Lost positive-definiteness; fall back to steepest descent.
            h_inv = DMatrix::identity(n, n);
            first_update = true;
            direction = -gx.clone();
        }

        let Some(ls) = wolfe_line_search(objective, gradient, &x, &direction, fx, &gx) else {
            return RunOutcome {
                x,
                loss: fx,
                iterations: iter,
                converged: false,
            };
        };

        let step = ls.alpha * &direction;
        let y = &ls.grad - &gx;
        let sy = step.dot(&y);
        if sy > 1e-12 * step.norm() * y.norm() {
            if first_update {
                // Scale the initial inverse Hessian to the observed curvature.
                let scale = (sy / y.dot(&y)).clamp(1e-8, 1e8);
                h_inv = DMatrix::identity(n, n) * scale;
                first_update = false;
            }
            // H <- (I - rho s y')(H)(I - rho y s') + rho s s', expanded so no
            // intermediate n x n products are formed.
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let ss = rho * (1.0 + rho * yhy);
            for i in 0..n {
                for j in 0..n {
                    h_inv[(i, j)] +=
                        ss * step[i] * step[j] - rho * (step[i] * hy[j] + hy[i] * step[j]);
                }
            }
        }

        let decrease = fx - ls.value;
        x += step;
        fx = ls.value;
        gx = ls.grad;
        if decrease.abs() < settings.loss_tol {
            return RunOutcome {
                x,
                loss: fx,
                iterations: iter + 1,
                converged: true,
            };
        }
    }

    RunOutcome {
        x,
        loss: fx,
        iterations: settings.max_iters,
        converged: false,
    }
}

struct Probe {
    value: f64,
    slope: f64,
    grad: DVector<f64>,
}

struct LineSearchResult {
    alpha: f64,
    value: f64,
    grad: DVector<f64>,
}

/// Strong-Wolfe line search: bracket with unit initial step and doubling,
/// then refine with [`zoom`].
fn wolfe_line_search<F, G>(
    objective: &F,
    gradient: &G,
    x: &DVector<f64>,
    direction: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
) -> Option<LineSearchResult>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let slope0 = g0.dot(direction);
    if slope0 >= 0.0 {
        return None;
    }
    let eval = |alpha: f64| -> Probe {
        let point = x + alpha * direction;
        let value = objective(point.as_slice());
        let grad = DVector::from_vec(gradient(point.as_slice()));
        let slope = grad.dot(direction);
        Probe { value, slope, grad }
    };

    let max_bracket = 20;
    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut slope_prev = slope0;
    let mut alpha = 1.0;

    for i in 0..max_bracket {
        let probe = eval(alpha);
        if !probe.value.is_finite() {
            alpha = 0.5 * (alpha_prev + alpha);
            if alpha < 1e-16 {
                return None;
            }
            continue;
        }
        if probe.value > f0 + C1 * alpha * slope0 || (i > 0 && probe.value >= f_prev) {
            return zoom(
                &eval,
                f0,
                slope0,
                alpha_prev,
                f_prev,
                slope_prev,
                alpha,
                probe.value,
            );
        }
        if probe.slope.abs() <= C2 * slope0.abs() {
            return Some(LineSearchResult {
                alpha,
                value: probe.value,
                grad: probe.grad,
            });
        }
        if probe.slope >= 0.0 {
            return zoom(
                &eval,
                f0,
                slope0,
                alpha,
                probe.value,
                probe.slope,
                alpha_prev,
                f_prev,
            );
        }
        alpha_prev = alpha;
        f_prev = probe.value;
        slope_prev = probe.slope;
        alpha *= 2.0;
    }
    None
}

/// Interpolation refinement of a bracket whose `lo` end satisfies
/// sufficient decrease (Nocedal & Wright, Alg. 3.6).
#[allow(clippy::too_many_arguments)]
fn zoom(
    eval: &impl Fn(f64) -> Probe,
    f0: f64,
    slope0: f64,
    mut alpha_lo: f64,
    mut f_lo: f64,
    mut slope_lo: f64,
    mut alpha_hi: f64,
    mut f_hi: f64,
) -> Option<LineSearchResult> {
    let max_zoom = 40;
    let mut best: Option<LineSearchResult> = None;
    for _ in 0..max_zoom {
        let width = alpha_hi - alpha_lo;
        if width.abs() < 1e-16 {
            break;
        }
        // Quadratic interpolation through (f_lo, slope_lo, f_hi); guarded
        // bisection when it degenerates or hugs an endpoint.
        let mid = alpha_lo + 0.5 * width;
        let mut alpha = if f_hi.is_finite() {
            let denom = f_hi - f_lo - slope_lo * width;
            if denom.abs() > 1e-300 {
                alpha_lo - 0.5 * slope_lo * width * width / denom
            } else {
                mid
            }
        } else {
            mid
        };
        let lo = alpha_lo.min(alpha_hi);
        let hi = alpha_lo.max(alpha_hi);
        let margin = 0.05 * (hi - lo);
        if !alpha.is_finite() || alpha <= lo + margin || alpha >= hi - margin {
            alpha = mid;
        }

        let probe = eval(alpha);
        if !probe.value.is_finite() || probe.value > f0 + C1 * alpha * slope0 || probe.value >= f_lo
        {
            alpha_hi = alpha;
            f_hi = probe.value;
            continue;
        }
        if probe.slope.abs() <= C2 * slope0.abs() {
            return Some(LineSearchResult {
                alpha,
                value: probe.value,
                grad: probe.grad,
            });
        }
        // Remember the best sufficient-decrease point in case curvature is
        // never satisfied within the budget.
        if best.as_ref().is_none_or(|b| probe.value < b.value) {
            best = Some(LineSearchResult {
                alpha,
                value: probe.value,
                grad: probe.grad.clone(),
            });
        }
        if probe.slope * width >= 0.0 {
            alpha_hi = alpha_lo;
            f_hi = f_lo;
        }
        alpha_lo = alpha;
        f_lo = probe.value;
        slope_lo = probe.slope;
    }
    // A short step that still lowers the objective keeps the outer
    // iteration alive even when the curvature condition stays out of reach.
    best
}

/// Compare an analytic gradient against central finite differences.
///
/// Returns the maximum over coordinates of
/// `|analytic - fd| / max(1, |fd|)` with step `fd_step`.
pub fn check_gradient<F, G>(objective: F, gradient: G, x: &[f64], fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(fd_step > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let analytic = gradient(x);
    if analytic.len() != x.len() {
        return Err(Error::invalid(format!(
            "gradient has length {}, expected {}",
            analytic.len(),
            x.len()
        )));
    }
    let mut worst = 0.0_f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + fd_step;
        let plus = objective(&probe);
        probe[i] = x[i] - fd_step;
        let minus = objective(&probe);
        probe[i] = x[i];
        let fd = (plus - minus) / (2.0 * fd_step);
        let rel = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
