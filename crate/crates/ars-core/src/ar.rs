//! Baseline autoregressive model of order `p` on the observed series.
//!
//! The order-`p` fit regresses each value on its `p` predecessors; the
//! forecast iterates the fitted recursion in companion form, so one matrix
//! power drives horizons of any order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ObservedSeries;
use crate::error::{Error, Result};
use crate::regression::{ridge_lstsq_escalating, FitDiagnostics};

/// A fitted autoregressive model: `z_{j+1} = sum_k B_k z_{j+1-k}` with `p`
/// coefficient matrices of size `r x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    coeffs: Vec<DMatrix<f64>>,
    intercept: Option<DVector<f64>>,
    r: usize,
    step: f64,
    diagnostics: FitDiagnostics,
}

impl ArModel {
    /// Model order `p`.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Observed dimension `r`.
    pub fn dim(&self) -> usize {
        self.r
    }

    /// Sampling interval `h`.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Coefficient matrix for lag `k + 1` (0-indexed).
    pub fn coeff(&self, k: usize) -> &DMatrix<f64> {
        &self.coeffs[k]
    }

    /// Fitted intercept, when enabled at fit time.
    pub fn intercept(&self) -> Option<&DVector<f64>> {
        self.intercept.as_ref()
    }

    /// Numerical context of the fit, including its residual sum.
    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }
}

/// Least-squares fit of an order-`p` autoregression without intercept,
/// matching the homogeneous one-step model.
pub fn fit_ar(series: &ObservedSeries, p: usize, ridge: f64) -> Result<ArModel> {
    fit_ar_with_options(series, p, ridge, false)
}

/// [`fit_ar`] with an optional intercept column.
pub fn fit_ar_with_options(
    series: &ObservedSeries,
    p: usize,
    ridge: f64,
    intercept: bool,
) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::invalid("autoregressive order must be at least 1"));
    }
    let n = series.len();
    if n < p + 1 {
        return Err(Error::invalid(format!(
            "need at least p + 1 = {} points to fit an AR({p}), got {n}",
            p + 1
        )));
    }
    let r = series.dim();
    let rows = n - p;
    let cols = p * r + usize::from(intercept);
    let mut design = DMatrix::zeros(rows, cols);
    let mut response = DMatrix::zeros(rows, r);
    for (row, j) in (p - 1..n - 1).enumerate() {
        for k in 0..p {
            design
                .row_mut(row)
                .columns_mut(k * r, r)
                .copy_from(&series.value(j - k).transpose());
        }
        if intercept {
            design[(row, p * r)] = 1.0;
        }
        response
            .row_mut(row)
            .copy_from(&series.value(j + 1).transpose());
    }

    let (fit, ridge_used) = ridge_lstsq_escalating(&design, &response, ridge)?;
    let stacked = fit.coef.transpose(); // r x cols
    let coeffs = (0..p)
        .map(|k| stacked.columns(k * r, r).into_owned())
        .collect();
    let intercept = intercept.then(|| stacked.column(p * r).into_owned());
    Ok(ArModel {
        coeffs,
        intercept,
        r,
        step: series.step(),
        diagnostics: FitDiagnostics {
            residual_sum: fit.loss,
            condition_hint: fit.condition,
            ridge_used,
            underdetermined: rows < cols,
        },
    })
}

/// Companion matrix of the fitted recursion: the top block row holds the
/// lag coefficients, the rest shifts the lag window.
fn companion(model: &ArModel) -> DMatrix<f64> {
    let (p, r) = (model.order(), model.r);
    let mut c = DMatrix::zeros(p * r, p * r);
    for k in 0..p {
        c.view_mut((0, k * r), (r, r)).copy_from(&model.coeffs[k]);
    }
    for i in 0..(p - 1) * r {
        c[(r + i, i)] = 1.0;
    }
    c
}

/// Iterate the fitted recursion `k` steps past the end of `history`.
/// `k = 0` yields an empty series.
pub fn forecast_ar(model: &ArModel, history: &ObservedSeries, k: usize) -> Result<ObservedSeries> {
    let (p, r) = (model.order(), model.r);
    if history.dim() != r {
        return Err(Error::invalid(format!(
            "history has dimension {}, model expects {r}",
            history.dim()
        )));
    }
    let n = history.len();
    if n < p {
        return Err(Error::invalid(format!(
            "history of length {n} is shorter than the model order {p}"
        )));
    }
    let c = companion(model);
    // Lag window (z_j, z_{j-1}, .., z_{j-p+1}) stacked.
    let mut state = DVector::zeros(p * r);
    for lag in 0..p {
        state
            .rows_mut(lag * r, r)
            .copy_from(history.value(n - 1 - lag));
    }
    let mut values = Vec::with_capacity(k);
    for _ in 0..k {
        state = &c * state;
        if let Some(b0) = &model.intercept {
            let bumped = state.rows(0, r) + b0;
            state.rows_mut(0, r).copy_from(&bumped);
        }
        values.push(state.rows(0, r).into_owned());
    }
    ObservedSeries::new(values, history.step(), history.start_index() + n as i64)
}

#[derive(Serialize, Deserialize)]
struct ArModelJson {
    #[serde(rename = "type")]
    kind: String,
    p: usize,
    r: usize,
    h: f64,
    /// Lag matrices stacked side by side: `r` rows, `p * r` columns.
    coeffs: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    intercept: Option<Vec<f64>>,
}

impl ArModel {
    /// Serialize as the model JSON interchange format; the coefficient
    /// block stacks the lag matrices side by side.
    pub fn to_json(&self) -> String {
        let p = self.order();
        let mut stacked = DMatrix::zeros(self.r, p * self.r);
        for k in 0..p {
            stacked
                .view_mut((0, k * self.r), (self.r, self.r))
                .copy_from(&self.coeffs[k]);
        }
        let doc = ArModelJson {
            kind: "ar".into(),
            p,
            r: self.r,
            h: self.step,
            coeffs: (0..self.r)
                .map(|i| stacked.row(i).iter().copied().collect())
                .collect(),
            intercept: self.intercept.as_ref().map(|v| v.iter().copied().collect()),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Rebuild a model from its JSON form.
    pub fn from_json(text: &str) -> Result<ArModel> {
        let doc: ArModelJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.kind != "ar" {
            return Err(Error::invalid(format!(
                "expected model type 'ar', got '{}'",
                doc.kind
            )));
        }
        if doc.p == 0 || doc.r == 0 {
            return Err(Error::invalid("model order and dimension must be positive"));
        }
        if doc.coeffs.len() != doc.r || doc.coeffs.iter().any(|row| row.len() != doc.p * doc.r) {
            return Err(Error::invalid(format!(
                "coefficient block must be {} x {}",
                doc.r,
                doc.p * doc.r
            )));
        }
        let mut stacked = DMatrix::zeros(doc.r, doc.p * doc.r);
        for (i, row) in doc.coeffs.iter().enumerate() {
            stacked.row_mut(i).copy_from_slice(row);
        }
        let coeffs = (0..doc.p)
            .map(|k| stacked.columns(k * doc.r, doc.r).into_owned())
            .collect();
        let intercept = match doc.intercept {
            Some(v) if v.len() == doc.r => Some(DVector::from_vec(v)),
            Some(v) => {
                return Err(Error::invalid(format!(
                    "intercept has length {}, expected {}",
                    v.len(),
                    doc.r
                )))
            }
            None => None,
        };
        Ok(ArModel {
            coeffs,
            intercept,
            r: doc.r,
            step: doc.h,
            diagnostics: FitDiagnostics {
                residual_sum: f64::NAN,
                condition_hint: 0.0,
                ridge_used: 0.0,
                underdetermined: false,
            },
        })
    }
}
