//! Generalized cross-validation for the regularization parameter:
//!
//! ```text
//! GCV(λ) = (RSS(λ)/n) / (1 - γ·e(λ)/n)²
//! ```
//!
//! with `e(λ) = tr{X_A (X_AᵀX_A + n·D)⁻¹ X_Aᵀ}` the trace of the ridge hat
//! matrix at convergence, `D = diag{p'_{λ_j}(|β_j|)/|β_j|}` over the active
//! set.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GaussianModel;
use crate::optimizer::{fit_penalized, FitConfig, FitResult, Init};
use crate::parallel::{map_indices, Execution};
use crate::penalty::PenaltySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvResult {
    pub lambda: f64,
    pub gcv: f64,
    pub effective_df: f64,
    pub rss: f64,
    pub gamma: f64,
    pub n: usize,
}

impl GcvResult {
    /// Recompute the criterion from the stored fields.
    pub fn recompute(&self) -> f64 {
        let n = self.n as f64;
        let denom = 1.0 - self.gamma * self.effective_df / n;
        (self.rss / n) / (denom * denom)
    }
}

#[derive(Debug, Clone)]
pub struct GcvEvaluation {
    pub result: GcvResult,
    pub fit: FitResult,
}

#[derive(Debug, Clone)]
pub struct GcvScan {
    pub best: GcvResult,
    pub best_fit: FitResult,
    /// One entry per non-degenerate grid point, in grid order.
    pub profile: Vec<GcvResult>,
    /// Grid points where `1 - γ·e/n ≤ 0`.
    pub degenerate: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Start each fit from the previous grid point's solution. Forces a
    /// sequential scan.
    pub warm_start: bool,
    pub execution: Execution,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            warm_start: true,
            execution: Execution::Serial,
        }
    }
}

pub fn effective_df(model: &GaussianModel, fit: &FitResult, penalty: &PenaltySpec) -> Result<f64> {
    let active = &fit.active_set;
    if active.is_empty() {
        return Ok(0.0);
    }
    let n = model.n() as f64;
    let s2 = model.sigma2();
    let x = model.dataset().design().select_columns(active);
    let g = x.tr_mul(&x) / s2;
    let mut m = g.clone();
    for (k, &j) in active.iter().enumerate() {
        let b = fit.beta[j].abs();
        m[(k, k)] += n * penalty.at(fit.lambda_used[j]).deriv_pos(b) / b;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numeric("effective df: inner matrix is singular".into()))?;
    let solved: DMatrix<f64> = chol.solve(&g);
    Ok(solved.trace())
}

/// Fit at `lambda` and evaluate the criterion. `family` supplies the
/// penalty shape; its own `λ` is ignored.
pub fn gcv(
    model: &GaussianModel,
    family: &PenaltySpec,
    lambda: f64,
    gamma: f64,
    config: &FitConfig,
) -> Result<GcvEvaluation> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    let penalty = family.with_lambda(lambda)?;
    let fit = fit_penalized(model, &penalty, config)?;
    let rss = model.rss(&fit.beta)?;
    let effective_df = effective_df(model, &fit, &penalty)?;
    let n = model.n();
    let denominator = 1.0 - gamma * effective_df / n as f64;
    if denominator <= 0.0 {
        return Err(Error::DegenerateDf { denominator });
    }
    let result = GcvResult {
        lambda,
        gcv: (rss / n as f64) / (denominator * denominator),
        effective_df,
        rss,
        gamma,
        n,
    };
    Ok(GcvEvaluation { result, fit })
}

/// Evaluate GCV on every grid point and return the minimizer; ties go to
/// the smaller `λ`.
pub fn gcv_scan(
    model: &GaussianModel,
    family: &PenaltySpec,
    lambda_grid: &[f64],
    gamma: f64,
    config: &FitConfig,
    options: ScanOptions,
) -> Result<GcvScan> {
    if lambda_grid.is_empty() {
        return Err(Error::Input("empty lambda grid".into()));
    }
    if lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Input("lambda grid must be finite and nonnegative".into()));
    }
    if lambda_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("lambda grid must be sorted ascending".into()));
    }

    let evaluations: Vec<Result<GcvEvaluation>> = if options.warm_start {
        let mut out = Vec::with_capacity(lambda_grid.len());
        let mut start: Option<Vec<f64>> = None;
        for &lambda in lambda_grid {
            let cfg = match &start {
                Some(b) => config.clone().with_init(Init::Custom(b.clone())),
                None => config.clone(),
            };
            let eval = gcv(model, family, lambda, gamma, &cfg);
            if let Ok(e) = &eval {
                start = Some(e.fit.beta.clone());
            }
            out.push(eval);
        }
        out
    } else {
        map_indices(options.execution, lambda_grid.len(), |i| {
            gcv(model, family, lambda_grid[i], gamma, config)
        })
    };

    let mut profile = Vec::new();
    let mut degenerate = Vec::new();
    let mut best: Option<GcvEvaluation> = None;
    for (eval, &lambda) in evaluations.into_iter().zip(lambda_grid) {
        match eval {
            Ok(e) => {
                if best.as_ref().is_none_or(|b| e.result.gcv < b.result.gcv) {
                    best = Some(e.clone());
                }
                profile.push(e.result);
            }
            Err(Error::DegenerateDf { .. }) => degenerate.push(lambda),
            Err(other) => return Err(other),
        }
    }
    let best = best.ok_or_else(|| {
        Error::Numeric("every lambda grid point has degenerate effective df".into())
    })?;
    Ok(GcvScan {
        best: best.result,
        best_fit: best.fit,
        profile,
        degenerate,
    })
}

/// `count` log-spaced values from `1e-4·λ_max` to `λ_max`, where `λ_max`
/// is the smallest `λ` at which zero satisfies the first-order conditions
/// of an L1-type penalty: `max_j |x_jᵀy| / (n σ² s_j)` with `s_j` the
/// per-coordinate scale.
pub fn default_lambda_grid(
    model: &GaussianModel,
    penalty_scale: Option<&[f64]>,
    count: usize,
) -> Vec<f64> {
    let x = model.dataset().design();
    let xty = x.tr_mul(model.dataset().response());
    let n = model.n() as f64;
    let lambda_max = (0..model.p())
        .filter_map(|j| {
            let s = penalty_scale.map_or(1.0, |s| s[j]);
            (s > 0.0).then(|| xty[j].abs() / (n * model.sigma2() * s))
        })
        .fold(0.0, f64::max);
    if lambda_max == 0.0 || count == 0 {
        return vec![0.0];
    }
    if count == 1 {
        return vec![lambda_max];
    }
    let lo = (1e-4_f64).ln();
    (0..count)
        .map(|i| lambda_max * (lo * (1.0 - i as f64 / (count - 1) as f64)).exp())
        .collect()
}

/// `lambda,gcv,effective_df,rss` rows with a header.
pub fn profile_csv(profile: &[GcvResult]) -> String {
    use crate::format::sig9;
    let mut out = String::from("lambda,gcv,effective_df,rss\n");
    for r in profile {
        out.push_str(&format!(
            "{},{},{},{}\n",
            sig9(r.lambda),
            sig9(r.gcv),
            sig9(r.effective_df),
            sig9(r.rss)
        ));
    }
    out
}
