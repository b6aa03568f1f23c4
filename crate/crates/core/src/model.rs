//! Gaussian linear model: data container, log-likelihood and its
//! derivatives, quadratic regression splines and per-covariate penalty
//! scaling.
//!
//! The log-likelihood drops its additive constant,
//! `L_n(β) = -‖y - Xβ‖² / (2σ²)`. Everything downstream (likelihood-ratio
//! statistics, GCV) uses differences or residuals only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, quantile_sorted, sorted_copy};

/// `n × p` design with its response. Rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: DVector<f64>,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        design: DMatrix<f64>,
        response: DVector<f64>,
        column_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, p) = design.shape();
        if n == 0 || p == 0 {
            return Err(Error::Input(format!("empty design ({n} x {p})")));
        }
        if response.len() != n {
            return Err(Error::Dimension(format!(
                "design has {n} rows but response has {} entries",
                response.len()
            )));
        }
        if let Some(names) = &column_names {
            if names.len() != p {
                return Err(Error::Dimension(format!(
                    "{} column names for {p} columns",
                    names.len()
                )));
            }
        }
        if let Some(idx) = design.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::Input(format!(
                "non-finite design entry at row {}, column {}",
                idx % n + 1,
                idx / n + 1
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite response at row {}", i + 1)));
        }
        Ok(Dataset {
            design,
            response,
            column_names,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], response: &[f64]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged design rows".into()));
        }
        let design = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(design, DVector::from_column_slice(response), None)
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// Header names when known, else `beta1..betap`.
    pub fn column_names(&self) -> Vec<String> {
        match &self.column_names {
            Some(names) => names.clone(),
            None => (1..=self.p()).map(|j| format!("beta{j}")).collect(),
        }
    }

    pub fn has_names(&self) -> bool {
        self.column_names.is_some()
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(Error::Input(format!("column {} out of range", bad + 1)));
        }
        let design = self.design.select_columns(cols);
        let names = self
            .column_names
            .as_ref()
            .map(|names| cols.iter().map(|&j| names[j].clone()).collect());
        Dataset::new(design, self.response.clone(), names)
    }

    /// Sample standard deviation of the response (0 for `n = 1`).
    pub fn response_sd(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let mean = self.response.mean();
        let ss: f64 = self.response.iter().map(|y| (y - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Gaussian likelihood on a dataset with noise variance `σ²`.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    dataset: Dataset,
    sigma2: f64,
}

impl GaussianModel {
    pub fn new(dataset: Dataset) -> Self {
        GaussianModel {
            dataset,
            sigma2: 1.0,
        }
    }

    pub fn with_sigma2(dataset: Dataset, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Parameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(GaussianModel { dataset, sigma2 })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn p(&self) -> usize {
        self.dataset.p()
    }

    fn check_len(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {}, model has {} columns",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }

    pub fn residuals(&self, beta: &[f64]) -> Result<DVector<f64>> {
        self.check_len(beta)?;
        let b = DVector::from_column_slice(beta);
        Ok(self.dataset.response() - self.dataset.design() * b)
    }

    pub fn rss(&self, beta: &[f64]) -> Result<f64> {
        Ok(self.residuals(beta)?.norm_squared())
    }

    /// `-‖y - Xβ‖² / (2σ²)`.
    pub fn log_likelihood(&self, beta: &[f64]) -> Result<f64> {
        Ok(-self.rss(beta)? / (2.0 * self.sigma2))
    }

    /// `Xᵀ(y - Xβ)/σ²`.
    pub fn score(&self, beta: &[f64]) -> Result<DVector<f64>> {
        let r = self.residuals(beta)?;
        Ok(self.dataset.design().tr_mul(&r) / self.sigma2)
    }

    /// `-XᵀX/σ²`; constant in β.
    pub fn hessian(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(beta)?;
        Ok(-self.gram() / self.sigma2)
    }

    /// Per-observation Fisher information `XᵀX/(nσ²)`.
    pub fn information(&self) -> DMatrix<f64> {
        self.gram() / (self.n() as f64 * self.sigma2)
    }

    /// `XᵀX`.
    pub fn gram(&self) -> DMatrix<f64> {
        let x = self.dataset.design();
        x.tr_mul(x)
    }

    /// Row `i` is the score of observation `i`, `x_i (y_i - x_iᵀβ)/σ²`,
    /// evaluated with the supplied variance.
    pub fn per_observation_scores(&self, beta: &[f64], sigma2: f64) -> Result<DMatrix<f64>> {
        let r = self.residuals(beta)?;
        let x = self.dataset.design();
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            x[(i, j)] * r[i] / sigma2
        }))
    }
}

/// Unpenalized least squares with classical standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// `RSS/(n - p)`.
    pub sigma2: f64,
    pub rss: f64,
}

pub fn ols(dataset: &Dataset) -> Result<OlsFit> {
    let (n, p) = (dataset.n(), dataset.p());
    if n <= p {
        return Err(Error::Input(format!(
            "least squares needs n > p (n = {n}, p = {p})"
        )));
    }
    let x = dataset.design();
    let gram = x.tr_mul(x);
    let inv = inverse_spd(&gram).ok_or_else(|| Error::Numeric("XᵀX is singular".into()))?;
    let beta = &inv * x.tr_mul(dataset.response());
    let rss = (dataset.response() - x * &beta).norm_squared();
    let sigma2 = rss / (n - p) as f64;
    let standard_errors = (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    Ok(OlsFit {
        beta: beta.iter().copied().collect(),
        standard_errors,
        sigma2,
        rss,
    })
}

/// `λ_j = λ · SE_j`, the per-covariate penalty obtained by standardizing
/// each covariate with its least-squares standard error.
pub fn per_covariate_lambdas(base_lambda: f64, ols_standard_errors: &[f64]) -> Result<Vec<f64>> {
    if !(base_lambda >= 0.0 && base_lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be nonnegative, got {base_lambda}")));
    }
    if let Some(se) = ols_standard_errors.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("standard errors must be positive, got {se}")));
    }
    Ok(ols_standard_errors.iter().map(|se| base_lambda * se).collect())
}

/// Quadratic truncated-power spline: columns `x, x², (x - k_1)_+², …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    knots: Vec<f64>,
}

impl SplineSpec {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Input("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(
                "knots must be strictly increasing (no duplicates)".into(),
            ));
        }
        Ok(SplineSpec { knots })
    }

    /// Knots at the `2/(K+2), …, (K+1)/(K+2)` sample quantiles; `K = 5`
    /// gives the 2/7, …, 6/7 levels.
    pub fn from_quantiles(sample: &[f64], count: usize) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Input("empty sample for knot placement".into()));
        }
        let sorted = sorted_copy(sample);
        let denom = (count + 2) as f64;
        let knots = (0..count)
            .map(|k| quantile_sorted(&sorted, (k + 2) as f64 / denom))
            .collect();
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        2
    }

    pub fn dimension(&self) -> usize {
        2 + self.knots.len()
    }
}

pub fn spline_basis(x: &[f64], spec: &SplineSpec) -> DMatrix<f64> {
    let k = spec.knots.len();
    DMatrix::from_fn(x.len(), 2 + k, |i, j| {
        let v = x[i];
        match j {
            0 => v,
            1 => v * v,
            _ => {
                let d = (v - spec.knots[j - 2]).max(0.0);
                d * d
            }
        }
    })
}
