//! Maximization of the penalized likelihood
//!
//! ```text
//! Q_n(β) = L_n(β) - n Σ_j p_{λ_j}(|β_j|)
//! ```
//!
//! by local quadratic approximation. At the current iterate every penalty
//! term is replaced by the quadratic `p(|β_j^k|) + D_j (β_j² - β_j^k²)/2`
//! with `D_j = p'(|β_j^k|)/|β_j^k|`, which majorizes it for penalties that
//! are concave in `|θ|`, and the resulting ridge problem
//!
//! ```text
//! (X_AᵀX_A/σ² + n·D) β_A = X_Aᵀy/σ²
//! ```
//!
//! is solved over the coordinates `A` still in play. Coordinates whose
//! magnitude falls below the drop threshold are frozen at exactly zero and
//! never revisited. Each ridge step is followed by one Gauss–Seidel sweep
//! of exact univariate penalized updates (see
//! [`PenaltySpec::threshold_weighted`]); both steps are ascent steps, and
//! the sweep lands coordinates on their exact thresholded values instead
//! of letting them decay geometrically toward zero.
//!
//! The objective is nonconcave, so the result is a local maximizer reached
//! from the configured start.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complement_rows, orthonormal_rows, solve_spd};
use crate::model::GaussianModel;
use crate::penalty::PenaltySpec;

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Ols,
    /// `(XᵀX/σ² + ε·n·I)⁻¹ Xᵀy/σ²`.
    Ridge(f64),
    /// Zero start; one coordinate sweep runs before the first drop.
    Zeros,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop once `max_j |β_j^{k+1} - β_j^k|` falls below this.
    pub convergence_tol: f64,
    /// Absolute drop threshold; `None` uses `1e-8 × sd(y)`.
    pub drop_threshold: Option<f64>,
    /// `None` picks OLS when `n > p` and `Ridge(1e-6)` otherwise.
    pub init: Option<Init>,
    /// Per-coordinate multipliers: `λ_j = λ · penalty_scale[j]`.
    pub penalty_scale: Option<Vec<f64>>,
    /// Keep the objective after every iteration in [`FitResult::trace`].
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            convergence_tol: 1e-8,
            drop_threshold: None,
            init: None,
            penalty_scale: None,
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn with_init(mut self, init: Init) -> Self {
        self.init = Some(init);
        self
    }

    pub fn with_penalty_scale(mut self, scale: Vec<f64>) -> Self {
        self.penalty_scale = Some(scale);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    /// `λ_j` for every coordinate.
    pub fn lambdas(&self, penalty: &PenaltySpec, p: usize) -> Result<Vec<f64>> {
        match &self.penalty_scale {
            None => Ok(vec![penalty.lambda(); p]),
            Some(scale) => {
                if scale.len() != p {
                    return Err(Error::Dimension(format!(
                        "penalty scale has length {}, model has {p} columns",
                        scale.len()
                    )));
                }
                if let Some(s) = scale.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                    return Err(Error::Parameter(format!(
                        "penalty scale entries must be nonnegative, got {s}"
                    )));
                }
                Ok(scale.iter().map(|s| penalty.lambda() * s).collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Parameter("convergence_tol must be positive".into()));
        }
        if let Some(t) = self.drop_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Parameter("drop_threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Sorted indices of the nonzero coefficients.
    pub active_set: Vec<usize>,
    /// `Q_n(beta)`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_used: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

/// `Q_n(β) = L_n(β) - n Σ_j p_{λ_j}(|β_j|)`.
pub fn penalized_objective(
    model: &GaussianModel,
    penalty: &PenaltySpec,
    lambdas: &[f64],
    beta: &[f64],
) -> Result<f64> {
    if lambdas.len() != beta.len() {
        return Err(Error::Dimension("lambda and coefficient lengths differ".into()));
    }
    let pen: f64 = beta
        .iter()
        .zip(lambdas)
        .map(|(b, l)| penalty.at(*l).value(*b))
        .sum();
    Ok(model.log_likelihood(beta)? - model.n() as f64 * pen)
}

pub fn fit_penalized(
    model: &GaussianModel,
    penalty: &PenaltySpec,
    config: &FitConfig,
) -> Result<FitResult> {
    Engine::new(model, penalty, config, None)?.run()
}

/// Maximize `Q_n` over `{β : Aβ = 0}`. `constraint_rows` is `q × p` with
/// linearly independent rows; it is orthonormalized internally, so only
/// its row space matters.
pub fn fit_constrained(
    model: &GaussianModel,
    penalty: &PenaltySpec,
    constraint_rows: &DMatrix<f64>,
    config: &FitConfig,
) -> Result<FitResult> {
    let p = model.p();
    if constraint_rows.nrows() == 0 {
        return fit_penalized(model, penalty, config);
    }
    if constraint_rows.ncols() != p {
        return Err(Error::Dimension(format!(
            "constraint has {} columns, model has {p}",
            constraint_rows.ncols()
        )));
    }
    if constraint_rows.nrows() >= p {
        return Err(Error::Input(format!(
            "need fewer than p = {p} constraint rows, got {}",
            constraint_rows.nrows()
        )));
    }
    let orth = orthonormal_rows(constraint_rows)?;
    Engine::new(model, penalty, config, Some(orth))?.run()
}

/// Least squares on the given support (0-based column indices), exact
/// zeros elsewhere. The objective reported is the unpenalized `L_n`.
pub fn fit_oracle(model: &GaussianModel, true_support: &[usize]) -> Result<FitResult> {
    let p = model.p();
    let mut support = true_support.to_vec();
    support.sort_unstable();
    support.dedup();
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::Input(format!("support index {} outside 1..{p}", j + 1)));
    }
    let mut beta = vec![0.0; p];
    if !support.is_empty() {
        let x = model.dataset().design().select_columns(&support);
        let gram = x.tr_mul(&x);
        let rhs = x.tr_mul(model.dataset().response());
        let sol = solve_spd(&gram, &rhs)
            .ok_or_else(|| Error::Numeric("oracle design is rank deficient".into()))?;
        for (k, &j) in support.iter().enumerate() {
            beta[j] = sol[k];
        }
    }
    let active_set = (0..p).filter(|&j| beta[j] != 0.0).collect();
    Ok(FitResult {
        objective: model.log_likelihood(&beta)?,
        beta,
        active_set,
        iterations: 0,
        converged: true,
        lambda_used: vec![0.0; p],
        trace: Vec::new(),
    })
}

/// Span of the coordinates still in play.
enum Basis {
    /// Unconstrained: the free coordinates themselves.
    Coordinates(Vec<usize>),
    /// Rows form an orthonormal basis of the feasible subspace.
    Dense(DMatrix<f64>),
}

struct Engine<'a> {
    model: &'a GaussianModel,
    penalty: PenaltySpec,
    config: &'a FitConfig,
    lambdas: Vec<f64>,
    /// `XᵀX/σ²`
    gram: DMatrix<f64>,
    /// `Xᵀy/σ²`
    xty: DVector<f64>,
    n: f64,
    drop_threshold: f64,
    constraint: Option<DMatrix<f64>>,
    /// Coordinates a single-coordinate move keeps feasible.
    sweepable: Vec<bool>,
    /// Sweep order, derived from the data so that permuting the columns
    /// permutes the fit.
    order: Vec<usize>,
}

/// Strongest marginal signal first: descending `|x_jᵀy| / ‖x_j‖`, then
/// column norm and λ_j. Only exactly tied columns fall back to index order.
fn sweep_order(gram: &DMatrix<f64>, xty: &DVector<f64>, lambdas: &[f64]) -> Vec<usize> {
    let key = |j: usize| {
        let g = gram[(j, j)];
        let score = if g > 0.0 { xty[j].abs() / g.sqrt() } else { 0.0 };
        (score, g, lambdas[j])
    };
    let mut order: Vec<usize> = (0..xty.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (key(i), key(j));
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.total_cmp(&b.2))
    });
    order
}

impl<'a> Engine<'a> {
    fn new(
        model: &'a GaussianModel,
        penalty: &PenaltySpec,
        config: &'a FitConfig,
        constraint: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let p = model.p();
        let lambdas = config.lambdas(penalty, p)?;
        let s2 = model.sigma2();
        let x = model.dataset().design();
        let gram = x.tr_mul(x) / s2;
        let xty = x.tr_mul(model.dataset().response()) / s2;
        let drop_threshold = config.drop_threshold.unwrap_or_else(|| {
            let sd = model.dataset().response_sd();
            1e-8 * if sd > 0.0 { sd } else { 1.0 }
        });
        let sweepable = match &constraint {
            None => vec![true; p],
            Some(a) => (0..p).map(|j| a.column(j).amax() < 1e-14).collect(),
        };
        let order = sweep_order(&gram, &xty, &lambdas);
        Ok(Engine {
            model,
            penalty: *penalty,
            config,
            lambdas,
            gram,
            xty,
            n: model.n() as f64,
            drop_threshold,
            constraint,
            sweepable,
            order,
        })
    }

    fn p(&self) -> usize {
        self.gram.nrows()
    }

    fn objective(&self, beta: &DVector<f64>) -> f64 {
        // Gram form of L_n(β) without its β-free term; only used for
        // the trace, which compares iterates against each other.
        let quad = 0.5 * beta.dot(&(&self.gram * beta));
        let lin = beta.dot(&self.xty);
        let pen: f64 = beta
            .iter()
            .zip(&self.lambdas)
            .map(|(b, l)| self.penalty.at(*l).value(*b))
            .sum();
        lin - quad - self.n * pen
    }

    fn basis(&self, beta: &DVector<f64>) -> Basis {
        let p = self.p();
        let free: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        match &self.constraint {
            None => Basis::Coordinates(free),
            Some(a) => {
                let frozen: Vec<usize> = (0..p).filter(|&j| beta[j] == 0.0).collect();
                let mut rows: Vec<DVector<f64>> =
                    (0..a.nrows()).map(|i| a.row(i).transpose()).collect();
                for j in frozen {
                    let mut e = DVector::zeros(p);
                    e[j] = 1.0;
                    rows.push(e);
                }
                let stacked = independent_rows(&rows, p);
                Basis::Dense(complement_rows(&stacked))
            }
        }
    }

    fn initial(&self) -> Result<DVector<f64>> {
        let (n, p) = (self.model.n(), self.p());
        let init = match &self.config.init {
            Some(i) => i.clone(),
            None if n > p => Init::Ols,
            None => Init::Ridge(1e-6),
        };
        let full = DVector::from_element(p, 1.0);
        match init {
            Init::Ols => {
                if p >= n {
                    return Err(Error::Input(format!(
                        "OLS start needs n > p (n = {n}, p = {p}); use a ridge or zero start"
                    )));
                }
                self.ridge_in_basis(&self.basis(&full), 0.0)
                    .ok_or(Error::Singular { iteration: 0 })
            }
            Init::Ridge(eps) => {
                if !(eps > 0.0) {
                    return Err(Error::Parameter("ridge start needs epsilon > 0".into()));
                }
                self.ridge_in_basis(&self.basis(&full), eps * self.n)
                    .ok_or(Error::Singular { iteration: 0 })
            }
            Init::Zeros => {
                let mut beta = DVector::zeros(p);
                let all = vec![true; p];
                self.sweep(&mut beta, &all);
                Ok(beta)
            }
            Init::Custom(v) => {
                if v.len() != p {
                    return Err(Error::Dimension(format!(
                        "custom start has length {}, model has {p} columns",
                        v.len()
                    )));
                }
                let beta = DVector::from_vec(v);
                Ok(match &self.constraint {
                    None => beta,
                    Some(_) => self.project(&beta),
                })
            }
        }
    }

    /// Maximize the unpenalized likelihood plus `-ridge/2 ‖β‖²` over the basis.
    fn ridge_in_basis(&self, basis: &Basis, ridge: f64) -> Option<DVector<f64>> {
        let d = vec![ridge; self.p()];
        self.solve_weighted(basis, &d)
    }

    /// Solve `(G + diag(d)) β = c` restricted to the basis.
    fn solve_weighted(&self, basis: &Basis, d: &[f64]) -> Option<DVector<f64>> {
        let p = self.p();
        match basis {
            Basis::Coordinates(free) => {
                let mut beta = DVector::zeros(p);
                if free.is_empty() {
                    return Some(beta);
                }
                let k = free.len();
                let m = DMatrix::from_fn(k, k, |a, b| {
                    self.gram[(free[a], free[b])] + if a == b { d[free[a]] } else { 0.0 }
                });
                let rhs = DVector::from_fn(k, |a, _| self.xty[free[a]]);
                let sol = solve_spd(&m, &rhs)?;
                for (a, &j) in free.iter().enumerate() {
                    beta[j] = sol[a];
                }
                Some(beta)
            }
            Basis::Dense(nb) => {
                if nb.nrows() == 0 {
                    return Some(DVector::zeros(p));
                }
                let mut gd = self.gram.clone();
                for j in 0..p {
                    gd[(j, j)] += d[j];
                }
                let m = nb * gd * nb.transpose();
                let m = (&m + m.transpose()) * 0.5;
                let rhs = nb * &self.xty;
                let gamma = solve_spd(&m, &rhs)?;
                Some(nb.transpose() * gamma)
            }
        }
    }

    /// Orthogonal projection onto the current feasible subspace.
    fn project(&self, beta: &DVector<f64>) -> DVector<f64> {
        match self.basis(beta) {
            Basis::Coordinates(_) => beta.clone(),
            Basis::Dense(nb) => nb.transpose() * (&nb * beta),
        }
    }

    /// One Gauss–Seidel pass of exact univariate penalized updates over the
    /// eligible coordinates.
    fn sweep(&self, beta: &mut DVector<f64>, eligible: &[bool]) {
        for &j in &self.order {
            if !eligible[j] || !self.sweepable[j] {
                continue;
            }
            let gjj = self.gram[(j, j)];
            if gjj <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let partial = self.xty[j] - self.gram.row(j).transpose().dot(beta) + gjj * beta[j];
            let z = partial / gjj;
            let w = gjj / self.n;
            beta[j] = self.penalty.at(self.lambdas[j]).threshold_weighted(z, w);
        }
    }

    fn drop_small(&self, beta: &mut DVector<f64>) -> bool {
        let mut dropped = false;
        for v in beta.iter_mut() {
            if *v != 0.0 && v.abs() < self.drop_threshold {
                *v = 0.0;
                dropped = true;
            }
        }
        dropped
    }

    fn run(self) -> Result<FitResult> {
        let p = self.p();
        let mut beta = self.initial()?;
        if self.drop_small(&mut beta) && self.constraint.is_some() {
            beta = self.project(&beta);
        }
        let mut trace = Vec::new();
        if self.config.record_trace {
            trace.push(self.objective(&beta));
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.config.max_iterations {
            let basis = self.basis(&beta);
            if let Basis::Coordinates(free) = &basis {
                if free.is_empty() {
                    converged = true;
                    break;
                }
            }
            iterations += 1;
            let previous = beta.clone();

            let d: Vec<f64> = (0..p)
                .map(|j| {
                    let b = beta[j].abs();
                    if b == 0.0 {
                        0.0
                    } else {
                        self.n * self.penalty.at(self.lambdas[j]).deriv_pos(b) / b
                    }
                })
                .collect();
            beta = self
                .solve_weighted(&basis, &d)
                .ok_or(Error::Singular { iteration: iterations })?;
            // coordinates frozen before the step stay frozen
            for j in 0..p {
                if previous[j] == 0.0 {
                    beta[j] = 0.0;
                }
            }
            let eligible: Vec<bool> = (0..p).map(|j| previous[j] != 0.0).collect();
            self.sweep(&mut beta, &eligible);
            if self.drop_small(&mut beta) && self.constraint.is_some() {
                beta = self.project(&beta);
            }
            if self.config.record_trace {
                trace.push(self.objective(&beta));
            }

            let delta = (&beta - &previous).amax();
            if !delta.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite iterate at iteration {iterations}"
                )));
            }
            if delta < self.config.convergence_tol {
                converged = true;
                break;
            }
        }

        let beta: Vec<f64> = beta.iter().copied().collect();
        let active_set = (0..p).filter(|&j| beta[j] != 0.0).collect();
        let objective = penalized_objective(self.model, &self.penalty, &self.lambdas, &beta)?;
        Ok(FitResult {
            beta,
            active_set,
            objective,
            iterations,
            converged,
            lambda_used: self.lambdas,
            trace,
        })
    }
}

/// Orthonormal basis of the span of `rows`, skipping dependent rows.
fn independent_rows(rows: &[DVector<f64>], p: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in rows {
        let scale = r.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = r.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * scale {
            basis.push(v / norm);
        }
    }
    let mut m = DMatrix::zeros(basis.len(), p);
    for (i, b) in basis.iter().enumerate() {
        m.set_row(i, &b.transpose());
    }
    m
}
