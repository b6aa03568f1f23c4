//! Standard errors and likelihood-ratio tests for penalized fits.
//!
//! The sandwich estimator works on the active set `A` of a fit:
//!
//! ```text
//! Σ̂ = n {∇²L_n(β̂) - nΣ_λ(β̂)}⁻¹ ĉov{∇L_n(β̂)} {∇²L_n(β̂) - nΣ_λ(β̂)}⁻¹
//! ```
//!
//! where `Σ_λ = diag{p''_{λ_j}(|β̂_j|)}` and `ĉov` is the mean-centred
//! empirical covariance of the per-observation scores. The noise variance
//! inside the scores is `σ̂² = RSS/(n - e(λ))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inverse_sym_checked;
use crate::model::GaussianModel;
use crate::optimizer::{fit_constrained, fit_penalized, FitConfig, FitResult};
use crate::parallel::{join, Execution};
use crate::penalty::PenaltySpec;
use crate::tuning::effective_df;

/// Bracket matrices above this condition number are refused.
pub const MAX_BRACKET_CONDITION: f64 = 1e12;
/// `T_n` values down to `-LR_NEGATIVE_TOL` are treated as rounding noise.
pub const LR_NEGATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub active_indices: Vec<usize>,
    /// Row-major `s × s`.
    pub matrix: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    /// Variance plugged into the scores.
    pub sigma2: f64,
}

impl CovarianceEstimate {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let s = self.active_indices.len();
        DMatrix::from_fn(s, s, |i, j| self.matrix[i][j])
    }

    /// Standard error of coefficient `j`, if it is active.
    pub fn standard_error_of(&self, j: usize) -> Option<f64> {
        self.active_indices
            .iter()
            .position(|&k| k == j)
            .map(|k| self.standard_errors[k])
    }
}

pub fn sandwich_covariance(
    model: &GaussianModel,
    fit: &FitResult,
    penalty: &PenaltySpec,
) -> Result<CovarianceEstimate> {
    let active = &fit.active_set;
    if active.is_empty() {
        return Err(Error::Input("sandwich covariance needs a nonempty active set".into()));
    }
    let n = model.n();
    let e = effective_df(model, fit, penalty)?;
    let rss = model.rss(&fit.beta)?;
    let denominator = n as f64 - e;
    if denominator <= 0.0 {
        return Err(Error::DegenerateDf {
            denominator: denominator / n as f64,
        });
    }
    let sigma2 = rss / denominator;
    if !(sigma2 > 0.0) {
        return Err(Error::Numeric("zero residual variance".into()));
    }
    sandwich_with_sigma2(model, fit, penalty, sigma2)
}

/// Sandwich estimate with the score variance supplied by the caller.
pub fn sandwich_with_sigma2(
    model: &GaussianModel,
    fit: &FitResult,
    penalty: &PenaltySpec,
    sigma2: f64,
) -> Result<CovarianceEstimate> {
    let active = fit.active_set.clone();
    let s = active.len();
    let n = model.n();
    let nf = n as f64;
    let x = model.dataset().design().select_columns(&active);
    let r = model.residuals(&fit.beta)?;

    let scores = DMatrix::from_fn(n, s, |i, k| x[(i, k)] * r[i] / sigma2);
    let mean: DVector<f64> = scores.row_mean().transpose();
    let cov = scores.tr_mul(&scores) / nf - &mean * mean.transpose();

    let mut bracket = -x.tr_mul(&x) / sigma2;
    for (k, &j) in active.iter().enumerate() {
        let b = fit.beta[j].abs();
        bracket[(k, k)] -= nf * penalty.at(fit.lambda_used[j]).second_deriv_pos(b);
    }
    let inv = inverse_sym_checked(&bracket, MAX_BRACKET_CONDITION)?;
    let sigma = &inv * cov * &inv * nf;
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    Ok(CovarianceEstimate {
        standard_errors: (0..s).map(|k| sigma[(k, k)].max(0.0).sqrt()).collect(),
        matrix: (0..s).map(|i| (0..s).map(|j| sigma[(i, j)]).collect()).collect(),
        active_indices: active,
        sigma2,
    })
}

/// `{I + Σ_λ}⁻¹ I {I + Σ_λ}⁻¹` with `Σ_λ` given by its diagonal.
pub fn asymptotic_covariance(information: &DMatrix<f64>, sigma_lambda: &[f64]) -> Result<DMatrix<f64>> {
    let s = information.nrows();
    if information.ncols() != s || sigma_lambda.len() != s {
        return Err(Error::Dimension(format!(
            "information is {}x{}, penalty curvature has {} entries",
            s,
            information.ncols(),
            sigma_lambda.len()
        )));
    }
    let mut shifted = information.clone();
    for (k, v) in sigma_lambda.iter().enumerate() {
        shifted[(k, k)] += v;
    }
    let inv = shifted
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
    let out = &inv * information * &inv;
    Ok((&out + out.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub active_indices: Vec<usize>,
    /// Diagonal of `Σ_λ = diag{p''_λ(|β_j|)}`.
    pub sigma_lambda: Vec<f64>,
    /// `b_n = p'_λ(|β_j|)·sgn(β_j)`.
    pub bias_vector: Vec<f64>,
    pub asymptotic_cov: Vec<Vec<f64>>,
}

/// Penalty curvature, bias and asymptotic covariance at the nonzero
/// coordinates of `beta` (typically the true coefficients), using the
/// per-observation information of `model`.
pub fn asymptotic_summary(
    model: &GaussianModel,
    beta: &[f64],
    penalty: &PenaltySpec,
    lambdas: &[f64],
) -> Result<AsymptoticSummary> {
    if beta.len() != model.p() || lambdas.len() != model.p() {
        return Err(Error::Dimension("beta/lambda length differs from model".into()));
    }
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    let info = model.information().select_rows(&active).select_columns(&active);
    let sigma_lambda: Vec<f64> = active
        .iter()
        .map(|&j| penalty.at(lambdas[j]).second_deriv_pos(beta[j].abs()))
        .collect();
    let bias_vector = active
        .iter()
        .map(|&j| penalty.at(lambdas[j]).deriv_pos(beta[j].abs()) * beta[j].signum())
        .collect();
    let cov = asymptotic_covariance(&info, &sigma_lambda)?;
    let s = active.len();
    Ok(AsymptoticSummary {
        asymptotic_cov: (0..s).map(|i| (0..s).map(|j| cov[(i, j)]).collect()).collect(),
        active_indices: active,
        sigma_lambda,
        bias_vector,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTestResult {
    /// `T_n`, clamped at zero.
    pub statistic: f64,
    /// `2{Q(unconstrained) - Q(constrained)}` before clamping.
    pub raw_statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub unconstrained_objective: f64,
    pub constrained_objective: f64,
    pub unconstrained_active_set: Vec<usize>,
    pub constrained_active_set: Vec<usize>,
    /// Set when `T_n < -1e-9`: the constrained local maximizer beat the
    /// unconstrained one, so the two fits did not find comparable optima.
    pub local_optimum_warning: bool,
}

/// Penalized likelihood-ratio test of `H₀: Aβ = 0`.
///
/// Both suprema are local maximizers found from the configured start; with a
/// nonconcave penalty they need not be global.
pub fn lr_test(
    model: &GaussianModel,
    penalty: &PenaltySpec,
    constraint_rows: &DMatrix<f64>,
    config: &FitConfig,
) -> Result<LrTestResult> {
    lr_test_with(model, penalty, constraint_rows, config, Execution::Parallel)
}

pub fn lr_test_with(
    model: &GaussianModel,
    penalty: &PenaltySpec,
    constraint_rows: &DMatrix<f64>,
    config: &FitConfig,
    execution: Execution,
) -> Result<LrTestResult> {
    let df = constraint_rows.nrows();
    if df == 0 {
        return Err(Error::Input("likelihood-ratio test needs at least one constraint".into()));
    }
    let (unconstrained, constrained) = join(
        execution,
        || fit_penalized(model, penalty, config),
        || fit_constrained(model, penalty, constraint_rows, config),
    );
    let (unconstrained, constrained) = (unconstrained?, constrained?);
    Ok(lr_from_fits(&unconstrained, &constrained, df))
}

pub fn lr_from_fits(unconstrained: &FitResult, constrained: &FitResult, df: usize) -> LrTestResult {
    let raw = 2.0 * (unconstrained.objective - constrained.objective);
    let statistic = raw.max(0.0);
    LrTestResult {
        statistic,
        raw_statistic: raw,
        df,
        p_value: chisq_sf(statistic, df),
        unconstrained_objective: unconstrained.objective,
        constrained_objective: constrained.objective,
        unconstrained_active_set: unconstrained.active_set.clone(),
        constrained_active_set: constrained.active_set.clone(),
        local_optimum_warning: raw < -LR_NEGATIVE_TOL,
    }
}

/// Identity rows selecting the given coefficients (0-based).
pub fn selection_rows(indices: &[usize], p: usize) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(indices.len(), p);
    for (i, &j) in indices.iter().enumerate() {
        if j >= p {
            return Err(Error::Input(format!("coefficient {} out of range 1..{p}", j + 1)));
        }
        a[(i, j)] = 1.0;
    }
    Ok(a)
}

/// `ln Γ(q/2)` for a positive integer `q`, exact up to rounding.
fn ln_gamma_half(q: usize) -> f64 {
    if q % 2 == 0 {
        // Γ(m) = (m-1)!
        (1..q / 2).map(|k| (k as f64).ln()).sum()
    } else {
        // Γ(m + ½) = √π · Π_{k=1}^{m} (k - ½)
        let m = q / 2;
        0.5 * std::f64::consts::PI.ln() + (1..=m).map(|k| (k as f64 - 0.5).ln()).sum::<f64>()
    }
}

/// Upper tail `P(χ²_q > x)` via the regularized incomplete gamma function
/// `Q(q/2, x/2)`: power series below `a + 1`, Lentz continued fraction
/// above.
pub fn chisq_sf(x: f64, q: usize) -> f64 {
    assert!(q > 0, "chi-square needs positive degrees of freedom");
    if !(x > 0.0) {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let a = q as f64 / 2.0;
    let z = x / 2.0;
    let log_prefix = a * z.ln() - z - ln_gamma_half(q);
    if z < a + 1.0 {
        // P(a, z) = z^a e^{-z} / Γ(a+1) · Σ z^k / ((a+1)…(a+k))
        let mut term = 1.0 / a;
        let mut sum = term;
        for k in 1..10_000 {
            term *= z / (a + k as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        (1.0 - sum * log_prefix.exp()).clamp(0.0, 1.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = z + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (log_prefix.exp() * h).clamp(0.0, 1.0)
    }
}

/// `χ²_q` density, for plotting against simulated statistics.
pub fn chisq_pdf(x: f64, q: usize) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let a = q as f64 / 2.0;
    if x == 0.0 {
        return match q {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        };
    }
    ((a - 1.0) * x.ln() - x / 2.0 - a * 2f64.ln() - ln_gamma_half(q)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ols, Dataset};
    use crate::optimizer::fit_penalized;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Standard normal upper tail by Simpson quadrature of the density,
    /// independent of the incomplete-gamma code path.
    fn normal_sf(z: f64) -> f64 {
        let steps = 200_000;
        let (lo, hi) = (0.0, z);
        let h = (hi - lo) / steps as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = f(lo) + f(hi);
        for i in 1..steps {
            acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 - acc * h / 3.0
    }

    #[test]
    fn chisq_examples() {
        assert_eq!(chisq_sf(0.0, 3), 1.0);
        assert!((chisq_sf(1.386294, 2) - 0.5).abs() < 1e-6);
        assert!((chisq_sf(2.0 * 2f64.ln(), 2) - 0.5).abs() < 1e-15);
        let oracle = 2.0 * normal_sf(1.959964);
        assert!((oracle - 0.05).abs() < 1e-6);
        assert!((chisq_sf(1.959964f64.powi(2), 1) - oracle).abs() < 1e-10);
    }

    #[test]
    fn chisq_odd_df_against_normal_tail() {
        for z in [0.3, 1.0, 2.2, 3.5] {
            assert!((chisq_sf(z * z, 1) - 2.0 * normal_sf(z)).abs() < 1e-10, "z={z}");
        }
    }

    #[test]
    fn chisq_even_df_closed_form() {
        // q = 4: e^{-x/2}(1 + x/2)
        for x in [0.1, 1.0, 3.0, 6.0, 20.0, 60.0] {
            let exact = (-x / 2.0f64).exp() * (1.0 + x / 2.0);
            assert!((chisq_sf(x, 4) - exact).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn chisq_density_integrates() {
        let h = 1e-3;
        let mut acc = 0.0;
        let mut x = h / 2.0;
        while x < 60.0 {
            acc += chisq_pdf(x, 2) * h;
            x += h;
        }
        assert!((acc - 1.0).abs() < 1e-6);
    }

    fn sim_model(seed: u64, n: usize, beta: &[f64]) -> GaussianModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * DVector::from_column_slice(beta)
            + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        GaussianModel::new(Dataset::new(x, y, None).unwrap())
    }

    #[test]
    fn sandwich_of_intercept_by_hand() {
        let y = [1.0, 2.0, 4.0, 7.0, 11.0];
        let d = Dataset::from_rows(&vec![vec![1.0]; 5], &y).unwrap();
        let model = GaussianModel::new(d);
        let fit = fit_penalized(&model, &PenaltySpec::scad(0.0).unwrap(), &FitConfig::default())
            .unwrap();
        let est = sandwich_covariance(&model, &fit, &PenaltySpec::scad(0.0).unwrap()).unwrap();
        // Σ(y - ȳ)² / n²
        let mean = 5.0;
        let ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert!((est.matrix[0][0] - ss / 25.0).abs() < 1e-10);
    }

    #[test]
    fn sandwich_matches_ols_covariance() {
        let model = sim_model(1, 2000, &[1.0, -0.5, 0.25]);
        let zero = PenaltySpec::scad(0.0).unwrap();
        let fit = fit_penalized(&model, &zero, &FitConfig::default()).unwrap();
        let est = sandwich_covariance(&model, &fit, &zero).unwrap();
        let ls = ols(model.dataset()).unwrap();
        let n = 2000.0;
        let classical = (model.gram() / n).try_inverse().unwrap() * (ls.sigma2 / n);
        for i in 0..3 {
            for j in 0..3 {
                let c = classical[(i, j)];
                let tol = 0.15 * classical[(i, i)].sqrt() * classical[(j, j)].sqrt();
                assert!((est.matrix[i][j] - c).abs() <= tol, "{i},{j}");
            }
        }
    }

    #[test]
    fn scad_flat_region_reduces_to_unpenalized_sandwich() {
        let model = sim_model(2, 300, &[2.0, -3.0, 1.5]);
        let pen = PenaltySpec::scad(0.05).unwrap();
        let fit = fit_penalized(&model, &pen, &FitConfig::default()).unwrap();
        assert!(fit.beta.iter().all(|b| b.abs() > 3.7 * 0.05));
        let est = sandwich_covariance(&model, &fit, &pen).unwrap();
        let mut plain = fit.clone();
        plain.lambda_used = vec![0.0; 3];
        let base = sandwich_covariance(&model, &plain, &pen).unwrap();
        assert_eq!(est.matrix, base.matrix);
    }

    #[test]
    fn sandwich_is_symmetric_psd() {
        let model = sim_model(3, 200, &[1.0, 0.0, 0.6, 0.0, -0.3]);
        let pen = PenaltySpec::scad(0.12).unwrap();
        let fit = fit_penalized(&model, &pen, &FitConfig::default()).unwrap();
        let est = sandwich_covariance(&model, &fit, &pen).unwrap();
        let m = est.to_matrix();
        assert!((&m - m.transpose()).amax() < 1e-10);
        assert!(crate::linalg::min_eigenvalue_sym(&m) >= -1e-8);
    }

    #[test]
    fn sandwich_needs_active_coefficients() {
        let model = sim_model(4, 50, &[0.0, 0.0]);
        let mut fit = fit_penalized(&model, &PenaltySpec::scad(0.0).unwrap(), &FitConfig::default())
            .unwrap();
        fit.beta = vec![0.0, 0.0];
        fit.active_set.clear();
        assert!(sandwich_covariance(&model, &fit, &PenaltySpec::scad(0.0).unwrap()).is_err());
    }

    #[test]
    fn asymptotic_covariance_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!((asymptotic_covariance(&i2, &[0.0, 0.0]).unwrap() - &i2).amax() < 1e-15);
        let quarter = asymptotic_covariance(&DMatrix::identity(1, 1), &[1.0]).unwrap();
        assert_eq!(quarter[(0, 0)], 0.25);
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 0.5, 3.0]));
        let sig = [0.3, -0.1, 1.0];
        let out = asymptotic_covariance(&diag, &sig).unwrap();
        for k in 0..3 {
            let expect = diag[(k, k)] / (diag[(k, k)] + sig[k]).powi(2);
            assert!((out[(k, k)] - expect).abs() < 1e-14);
        }
        let info = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let inv = asymptotic_covariance(&info, &[0.0, 0.0]).unwrap();
        assert!((inv * &info - DMatrix::identity(2, 2)).amax() < 1e-8);
        assert!(asymptotic_covariance(&DMatrix::identity(1, 1), &[-1.0]).is_err());
    }

    #[test]
    fn asymptotic_summary_vanishes_for_scad_past_a_lambda() {
        let model = sim_model(5, 100, &[2.0, 0.0, -1.0]);
        let pen = PenaltySpec::scad(0.1).unwrap();
        let s = asymptotic_summary(&model, &[2.0, 0.0, -1.0], &pen, &[0.1; 3]).unwrap();
        assert_eq!(s.active_indices, vec![0, 2]);
        assert_eq!(s.sigma_lambda, vec![0.0, 0.0]);
        assert_eq!(s.bias_vector, vec![0.0, 0.0]);
    }

    #[test]
    fn lr_zero_when_constraint_already_satisfied() {
        let model = sim_model(6, 200, &[2.0, 0.0, -1.0, 0.0]);
        let pen = PenaltySpec::scad(0.15).unwrap();
        let cfg = FitConfig::default();
        let unc = fit_penalized(&model, &pen, &cfg).unwrap();
        let zeros: Vec<usize> = (0..4).filter(|j| unc.beta[*j] == 0.0).collect();
        assert!(!zeros.is_empty());
        let a = selection_rows(&zeros, 4).unwrap();
        let res = lr_test(&model, &pen, &a, &cfg).unwrap();
        assert!(res.statistic.abs() < 1e-9);
        assert!((res.p_value - 1.0).abs() < 1e-9);
        assert!(!res.local_optimum_warning);
    }

    #[test]
    fn lr_detects_large_signal() {
        let model = sim_model(7, 200, &[5.0, 1.0, 0.0]);
        let pen = PenaltySpec::scad(0.1).unwrap();
        let a = selection_rows(&[0], 3).unwrap();
        let res = lr_test(&model, &pen, &a, &FitConfig::default()).unwrap();
        assert!(res.p_value < 1e-6);
        assert_eq!(res.df, 1);
    }

    #[test]
    fn lr_invariant_to_row_scaling() {
        let model = sim_model(8, 150, &[1.0, 0.5, 0.3, 0.0]);
        let pen = PenaltySpec::scad(0.05).unwrap();
        let cfg = FitConfig::default();
        let a = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let scaled = DMatrix::from_row_slice(2, 4, &[3.0, -3.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0]);
        let r1 = lr_test(&model, &pen, &a, &cfg).unwrap();
        let r2 = lr_test(&model, &pen, &scaled, &cfg).unwrap();
        assert!((r1.statistic - r2.statistic).abs() < 1e-8);
    }

    #[test]
    fn lr_nesting() {
        let model = sim_model(9, 200, &[1.0, 0.4, 0.2, 0.1]);
        let pen = PenaltySpec::scad(0.02).unwrap();
        let cfg = FitConfig::default();
        let t1 = lr_test(&model, &pen, &selection_rows(&[2], 4).unwrap(), &cfg).unwrap();
        let t2 = lr_test(&model, &pen, &selection_rows(&[2, 3], 4).unwrap(), &cfg).unwrap();
        assert!(t2.statistic >= t1.statistic - 1e-6);
    }
}
