//! Dense least-squares kernel: design-pair construction, ordinary least
//! squares, the hat matrix, and the profiled trace loss.
//!
//! Solves run through the SVD of the design matrix rather than an explicit
//! inverse of the normal equations. All fits use the row convention:
//! `predicted row = (row of design) * coef`. The transition matrix of the
//! one-step model in column convention is the transpose of `coef`.

use nalgebra::DMatrix;

use crate::ars::CompletedSeries;
use crate::error::{Error, Result};

/// Singular values below `RANK_TOL * s_max` count as zero at ridge 0.
const RANK_TOL: f64 = 1e-12;

/// Ridge applied when an unridged solve hits rank deficiency, as a multiple
/// of the mean diagonal of the Gram matrix.
const ESCALATION_FACTOR: f64 = 1e-10;

/// Paired design and response matrices for a one-step linear fit: row `j`
/// of `design` is the completed state at time `j`, row `j` of `response`
/// the completed state one step later.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    /// `(n-1) x d` matrix of current states.
    pub design: DMatrix<f64>,
    /// `(n-1) x d` matrix of one-step-ahead states.
    pub response: DMatrix<f64>,
}

/// Numerical context of a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    /// Minimum loss value achieved by the fit.
    pub residual_sum: f64,
    /// Ratio of the smallest to largest singular value of the design.
    pub condition_hint: f64,
    /// Ridge actually used (may exceed the requested one after escalation).
    pub ridge_used: f64,
    /// True when the design has fewer rows than columns.
    pub underdetermined: bool,
}

/// Build the design pair of a completed series: rows `0..n-1` of the design
/// are the completed states, the response holds the same states shifted one
/// step ahead.
pub fn build_design(series: &CompletedSeries) -> Result<DesignPair> {
    let n = series.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 completed states to form a transition, got {n}"
        )));
    }
    let d = series.completed_dim();
    let mut design = DMatrix::zeros(n - 1, d);
    let mut response = DMatrix::zeros(n - 1, d);
    for j in 0..n - 1 {
        design
            .row_mut(j)
            .copy_from_slice(series.completed_state(j).as_slice());
        response
            .row_mut(j)
            .copy_from_slice(series.completed_state(j + 1).as_slice());
    }
    Ok(DesignPair { design, response })
}

/// Ordinary (optionally ridged) least squares in row convention:
/// `coef = (D'D + ridge I)^{-1} D' R`.
///
/// At ridge 0 a rank-deficient design is an error rather than a silent
/// pseudo-inverse.
pub fn ols_fit(pair: &DesignPair, ridge: f64) -> Result<DMatrix<f64>> {
    Ok(ridge_lstsq(&pair.design, &pair.response, ridge)?.coef)
}

/// The (optionally ridged) hat matrix `D (D'D + ridge I)^{-1} D'`. At ridge
/// 0 this is the orthogonal projector onto the column space of the design.
pub fn hat_matrix(pair: &DesignPair, ridge: f64) -> Result<DMatrix<f64>> {
    check_ridge(ridge)?;
    let svd = thin_svd(&pair.design)?;
    check_rank(&svd, ridge)?;
    let m = pair.design.nrows();
    let mut hat = DMatrix::zeros(m, m);
    for (i, s) in svd.singular.iter().enumerate() {
        let w = s * s / (s * s + ridge);
        if w == 0.0 {
            continue;
        }
        let col = svd.u.column(i);
        for a in 0..m {
            for b in 0..m {
                hat[(a, b)] += w * col[a] * col[b];
            }
        }
    }
    Ok(hat)
}

/// The profiled loss `tr{R' (I - H) R}`: the minimum over all coefficient
/// matrices of the ridge-regularised one-step residual. Evaluated through
/// the explicit residual of the minimising fit, which is algebraically the
/// same quantity but stays meaningful arbitrarily close to zero.
pub fn profiled_loss(pair: &DesignPair, ridge: f64) -> Result<f64> {
    Ok(ridge_lstsq(&pair.design, &pair.response, ridge)?.loss)
}

/// Ridge used when escalating a singular unridged solve:
/// `1e-10 * mean diagonal of D'D`.
pub fn escalation_ridge(pair: &DesignPair) -> f64 {
    gram_mean_diagonal_ridge(&pair.design)
}

pub(crate) fn gram_mean_diagonal_ridge(design: &DMatrix<f64>) -> f64 {
    let d = design.ncols().max(1);
    ESCALATION_FACTOR * design.norm_squared() / d as f64
}

/// A solved least-squares system together with its residual.
#[derive(Debug, Clone)]
pub(crate) struct RidgeLstsq {
    /// Coefficients in row convention, `ncols(design) x ncols(response)`.
    pub coef: DMatrix<f64>,
    /// `response - design * coef`.
    pub residual: DMatrix<f64>,
    /// `|residual|_F^2 + ridge |coef|_F^2`, the profiled loss value.
    pub loss: f64,
    /// Smallest over largest singular value of the design.
    pub condition: f64,
}

/// Solve `min_M |Y - X M|_F^2 + ridge |M|_F^2` through the SVD of `X`.
pub(crate) fn ridge_lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<RidgeLstsq> {
    check_ridge(ridge)?;
    if x.nrows() != y.nrows() {
        return Err(Error::invalid(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let svd = thin_svd(x)?;
    check_rank(&svd, ridge)?;

    // coef = V diag(s / (s^2 + ridge)) U' Y
    let mut c = svd.u.transpose() * y;
    for (i, s) in svd.singular.iter().enumerate() {
        let factor = if s * s + ridge > 0.0 {
            s / (s * s + ridge)
        } else {
            0.0
        };
        c.row_mut(i).scale_mut(factor);
    }
    let coef = svd.v_t.transpose() * c;
    let residual = y - x * &coef;
    let loss = residual.norm_squared() + ridge * coef.norm_squared();
    Ok(RidgeLstsq {
        coef,
        residual,
        loss,
        condition: svd.condition(),
    })
}

/// [`ridge_lstsq`] that retries a singular unridged solve with the
/// mean-diagonal escalation ridge. Returns the fit and the ridge used.
pub(crate) fn ridge_lstsq_escalating(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ridge: f64,
) -> Result<(RidgeLstsq, f64)> {
    match ridge_lstsq(x, y, ridge) {
        Ok(fit) => Ok((fit, ridge)),
        Err(Error::SingularMatrix(_)) if ridge == 0.0 => {
            let bumped = gram_mean_diagonal_ridge(x).max(f64::MIN_POSITIVE);
            let fit = ridge_lstsq(x, y, bumped)?;
            Ok((fit, bumped))
        }
        Err(e) => Err(e),
    }
}

struct ThinSvd {
    u: DMatrix<f64>,
    singular: Vec<f64>,
    v_t: DMatrix<f64>,
}

impl ThinSvd {
    fn condition(&self) -> f64 {
        let max = self.singular.iter().cloned().fold(0.0, f64::max);
        let min = self.singular.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 && min.is_finite() {
            min / max
        } else {
            0.0
        }
    }
}

fn thin_svd(x: &DMatrix<f64>) -> Result<ThinSvd> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::invalid("empty design matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design matrix has non-finite entries"));
    }
    let svd = x.clone().svd(true, true);
    Ok(ThinSvd {
        u: svd.u.expect("svd requested u"),
        singular: svd.singular_values.iter().cloned().collect(),
        v_t: svd.v_t.expect("svd requested v_t"),
    })
}

fn check_rank(svd: &ThinSvd, ridge: f64) -> Result<()> {
    if ridge > 0.0 {
        return Ok(());
    }
    let max = svd.singular.iter().cloned().fold(0.0, f64::max);
    let min = svd.singular.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= RANK_TOL * max {
        return Err(Error::singular(format!(
            "design is rank deficient (singular values span {min:.3e}..{max:.3e})"
        )));
    }
    Ok(())
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge >= 0.0) {
        return Err(Error::invalid(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    Ok(())
}
