//! Monte Carlo study on a stationary autoregressive design.
//!
//! Data come from `X_i = Σ_k β_k X_{i-k} + ε_i` with Gaussian noise and the
//! fitted model regresses `X_i` on its first `p_n` lags, so only the first
//! five lag coefficients are nonzero. Each replicate draws from its own
//! ChaCha8 stream (`seed`, stream = replicate index), which makes serial and
//! parallel runs produce identical reports.

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::inference::{chisq_pdf, chisq_sf, lr_test_with, sandwich_covariance, selection_rows};
use crate::linalg::{quantile_sorted, sorted_copy};
use crate::model::{ols, Dataset, GaussianModel};
use crate::optimizer::{fit_oracle, FitConfig};
use crate::parallel::{map_indices, Execution};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::tuning::{default_lambda_grid, gcv_scan, ScanOptions};

pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha), seed_from_u64(seed), stream = replicate";

/// `(11/4, -23/6, 37/12, -13/9, 1/3)`.
pub fn default_ar_coefficients() -> Vec<f64> {
    vec![11.0 / 4.0, -23.0 / 6.0, 37.0 / 12.0, -13.0 / 9.0, 1.0 / 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArProcessSpec {
    coefficients: Vec<f64>,
    noise_sd: f64,
    burn_in: usize,
    seed: u64,
}

impl ArProcessSpec {
    /// Rejects nonstationary coefficient vectors.
    pub fn new(coefficients: Vec<f64>, noise_sd: f64, burn_in: usize, seed: u64) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("AR coefficients must be finite and nonempty".into()));
        }
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::Parameter(format!("noise sd must be positive, got {noise_sd}")));
        }
        let spec = ArProcessSpec {
            coefficients,
            noise_sd,
            burn_in,
            seed,
        };
        let modulus = spec.min_root_modulus();
        if !(modulus > 1.0) {
            return Err(Error::Domain(format!(
                "AR polynomial has a zero of modulus {modulus} (must be > 1)"
            )));
        }
        Ok(spec)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(default_ar_coefficients(), 1.0, 500, seed).expect("default process is stationary")
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Smallest modulus among the zeros of `1 - β₁B - … - β_mB^m`: the
    /// reciprocal of the companion matrix's spectral radius.
    pub fn min_root_modulus(&self) -> f64 {
        let m = self.order();
        let mut companion = DMatrix::<f64>::zeros(m, m);
        for (k, c) in self.coefficients.iter().enumerate() {
            companion[(0, k)] = *c;
        }
        for k in 1..m {
            companion[(k, k - 1)] = 1.0;
        }
        let radius = companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if radius == 0.0 {
            f64::INFINITY
        } else {
            1.0 / radius
        }
    }
}

impl Default for ArProcessSpec {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArPolynomialCheck {
    /// `β₁..β₅` as exact rationals.
    pub coefficients: Vec<Rational64>,
    pub min_root_modulus: f64,
}

fn poly_mul(a: &[Rational64], b: &[Rational64]) -> Vec<Rational64> {
    let mut out = vec![Rational64::from_integer(0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Zero moduli of `c₀ + c₁B` or `c₀ + c₁B + c₂B²`.
fn factor_root_moduli(c: &[Rational64]) -> Vec<f64> {
    let f: Vec<f64> = c.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
    match f.len() {
        2 => vec![(f[0] / f[1]).abs()],
        3 => {
            let disc = f[1] * f[1] - 4.0 * f[2] * f[0];
            if disc < 0.0 {
                // complex pair: |z|² = c₀/c₂
                vec![(f[0] / f[2]).sqrt(); 2]
            } else {
                let s = disc.sqrt();
                vec![
                    ((-f[1] + s) / (2.0 * f[2])).abs(),
                    ((-f[1] - s) / (2.0 * f[2])).abs(),
                ]
            }
        }
        _ => unreachable!("factors are linear or quadratic"),
    }
}

/// Expand `(1 - 3B/4)(1 - B + 2B²/3)²` exactly.
pub fn verify_ar_polynomial() -> ArPolynomialCheck {
    let r = Rational64::new;
    let linear = [r(1, 1), r(-3, 4)];
    let quad = [r(1, 1), r(-1, 1), r(2, 3)];
    let product = poly_mul(&poly_mul(&linear, &quad), &quad);
    let coefficients = product[1..].iter().map(|c| -c).collect();
    let min_root_modulus = [&linear[..], &quad[..], &quad[..]]
        .iter()
        .flat_map(|f| factor_root_moduli(f))
        .fold(f64::INFINITY, f64::min);
    ArPolynomialCheck {
        coefficients,
        min_root_modulus,
    }
}

/// `⌊4n^{1/4}⌋ - 5`, computed in integers.
pub fn dimension_rule(n: usize) -> Result<usize> {
    if n < 100 {
        return Err(Error::Domain(format!("dimension rule needs n >= 100, got {n}")));
    }
    // largest m with m⁴ <= 256 n
    let target = 256u128 * n as u128;
    let mut m = (4.0 * (n as f64).sqrt().sqrt()) as u128;
    while m.pow(4) > target {
        m -= 1;
    }
    while (m + 1).pow(4) <= target {
        m += 1;
    }
    let p = m as usize - 5;
    if p < 6 {
        return Err(Error::Domain(format!("p_n = {p} does not exceed 5")));
    }
    Ok(p)
}

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Raw series of length `len` after burn-in.
fn ar_series(spec: &ArProcessSpec, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, spec.noise_sd).expect("validated sd");
    let total = spec.burn_in + len;
    let beta = &spec.coefficients;
    let mut x = Vec::with_capacity(total);
    for i in 0..total {
        let mut v = noise.sample(rng);
        for (k, b) in beta.iter().enumerate() {
            if i > k {
                v += b * x[i - k - 1];
            }
        }
        x.push(v);
    }
    x.split_off(spec.burn_in)
}

/// Series `s` of length `n + p`; row `i` holds `(s_{i+p-1}, …, s_i)` and
/// the response is `s_{i+p}`.
fn lag_dataset(series: &[f64], n: usize, p: usize) -> Result<Dataset> {
    let design = DMatrix::from_fn(n, p, |i, k| series[i + p - 1 - k]);
    let response = DVector::from_fn(n, |i, _| series[i + p]);
    Dataset::new(design, response, None)
}

/// Lag-regression dataset from the spec's seed (replicate stream 0).
pub fn simulate_ar(spec: &ArProcessSpec, n: usize, p: usize) -> Result<Dataset> {
    simulate_replicate(spec, n, p, 0)
}

pub fn simulate_replicate(spec: &ArProcessSpec, n: usize, p: usize, replicate: u64) -> Result<Dataset> {
    if p < spec.order() {
        return Err(Error::Input(format!(
            "need at least {} lags, got {p}",
            spec.order()
        )));
    }
    if n == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    let mut rng = replicate_rng(spec.seed, replicate);
    let series = ar_series(spec, n + p, &mut rng);
    lag_dataset(&series, n, p)
}

/// Autocovariances `γ(0..len)` from the Yule–Walker equations.
pub fn autocovariances(spec: &ArProcessSpec, len: usize) -> Vec<f64> {
    let m = spec.order();
    let beta = &spec.coefficients;
    let sigma2 = spec.noise_sd * spec.noise_sd;
    // γ(k) - Σ_j β_j γ(|k-j|) = σ² δ_{k0}, k = 0..m
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    rhs[0] = sigma2;
    for k in 0..=m {
        a[(k, k)] += 1.0;
        for j in 1..=m {
            let lag = (k as isize - j as isize).unsigned_abs();
            a[(k, lag)] -= beta[j - 1];
        }
    }
    let gamma = a
        .lu()
        .solve(&rhs)
        .expect("Yule-Walker system is nonsingular for a stationary process");
    let mut out: Vec<f64> = gamma.iter().copied().collect();
    while out.len() < len {
        let k = out.len();
        out.push((1..=m).map(|j| beta[j - 1] * out[k - j]).sum());
    }
    out.truncate(len.max(1));
    out
}

/// Toeplitz `Γ[j,k] = γ(|j-k|)`, the population `E xxᵀ` of a lag row.
pub fn population_gram(spec: &ArProcessSpec, p: usize) -> DMatrix<f64> {
    let gamma = autocovariances(spec, p);
    DMatrix::from_fn(p, p, |j, k| gamma[j.abs_diff(k)])
}

/// `(β̂ - β)ᵀ Γ (β̂ - β)`.
pub fn model_error(beta_hat: &[f64], beta_true: &[f64], gram: &DMatrix<f64>) -> Result<f64> {
    let p = beta_hat.len();
    if beta_true.len() != p || gram.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "model error: {} estimates, {} true values, {}x{} weight",
            p,
            beta_true.len(),
            gram.nrows(),
            gram.ncols()
        )));
    }
    let d = DVector::from_fn(p, |j, _| beta_hat[j] - beta_true[j]);
    Ok(d.dot(&(gram * &d)))
}

fn padded_truth(spec: &ArProcessSpec, p: usize) -> Vec<f64> {
    let mut beta = spec.coefficients.clone();
    beta.resize(p, 0.0);
    beta
}

/// Settings shared by both experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub process: ArProcessSpec,
    pub n: usize,
    pub replicates: usize,
    pub family: PenaltyKind,
    pub gamma: f64,
    /// Number of points in the GCV grid.
    pub grid_points: usize,
    /// Scale `λ_j = λ·SE_j` with the least-squares standard errors.
    pub scale_by_se: bool,
    /// Likelihood-ratio study only: leave the tested coefficients out of
    /// the penalty (`λ_j = 0` there) in both fits.
    #[serde(default)]
    pub unpenalized_tested: bool,
    pub fit: FitConfig,
}

impl ExperimentConfig {
    pub fn new(n: usize, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            process: ArProcessSpec::with_seed(seed),
            n,
            replicates,
            family: PenaltyKind::scad(),
            gamma: 1.0,
            grid_points: 50,
            scale_by_se: false,
            unpenalized_tested: false,
            fit: FitConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Input("replicates must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.grid_points == 0 {
            return Err(Error::Parameter("grid_points must be positive".into()));
        }
        Ok(())
    }
}

/// GCV-tuned penalized fit on one replicate.
struct Tuned {
    model: GaussianModel,
    penalty: PenaltySpec,
    fit_config: FitConfig,
    fit: crate::optimizer::FitResult,
}

/// `unpenalized` lists coefficients whose `λ_j` is forced to zero.
fn tune(config: &ExperimentConfig, data: Dataset, unpenalized: &[usize]) -> Result<Tuned> {
    let model = GaussianModel::new(data);
    let mut fit_config = config.fit.clone();
    if config.scale_by_se {
        let ls = ols(model.dataset())?;
        fit_config.penalty_scale = Some(ls.standard_errors);
    }
    if !unpenalized.is_empty() {
        let mut scale = fit_config
            .penalty_scale
            .take()
            .unwrap_or_else(|| vec![1.0; model.p()]);
        for &j in unpenalized {
            scale[j] = 0.0;
        }
        fit_config.penalty_scale = Some(scale);
    }
    let family = PenaltySpec::new(config.family.clone(), 0.0)?;
    let grid = default_lambda_grid(&model, fit_config.penalty_scale.as_deref(), config.grid_points);
    let scan = gcv_scan(
        &model,
        &family,
        &grid,
        config.gamma,
        &fit_config,
        ScanOptions {
            warm_start: true,
            execution: Execution::Serial,
        },
    )?;
    Ok(Tuned {
        penalty: family.with_lambda(scan.best.lambda)?,
        fit: scan.best_fit,
        model,
        fit_config,
    })
}

fn check_failures(failures: usize, replicates: usize, first: Option<&Error>) -> Result<()> {
    if failures * 10 > replicates {
        let detail = first.map_or(String::new(), |e| format!("; first: {e}"));
        return Err(Error::Numeric(format!(
            "{failures} of {replicates} replicates failed{detail}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct TableReplicate {
    me_ls: f64,
    me_pls: f64,
    me_oracle: f64,
    correct_zeros: usize,
    incorrect_zeros: usize,
    lambda: f64,
    beta: Vec<f64>,
    /// Sandwich SEs of the signal coefficients; NaN where the coefficient
    /// was set to zero.
    se: Vec<f64>,
}

fn table_replicate(config: &ExperimentConfig, p: usize, gram: &DMatrix<f64>, rep: usize) -> Result<TableReplicate> {
    let signals = config.process.order();
    let truth = padded_truth(&config.process, p);
    let data = simulate_replicate(&config.process, config.n, p, rep as u64)?;
    let ls = ols(&data)?;
    let tuned = tune(config, data, &[])?;
    let support: Vec<usize> = (0..signals).collect();
    let oracle = fit_oracle(&tuned.model, &support)?;
    let pls = &tuned.fit;
    let cov = sandwich_covariance(&tuned.model, pls, &tuned.penalty)?;
    let se = (0..signals)
        .map(|j| cov.standard_error_of(j).unwrap_or(f64::NAN))
        .collect();
    Ok(TableReplicate {
        me_ls: model_error(&ls.beta, &truth, gram)?,
        me_pls: model_error(&pls.beta, &truth, gram)?,
        me_oracle: model_error(&oracle.beta, &truth, gram)?,
        correct_zeros: (signals..p).filter(|&j| pls.beta[j] == 0.0).count(),
        incorrect_zeros: (0..signals).filter(|&j| pls.beta[j] == 0.0).count(),
        lambda: tuned.penalty.lambda(),
        beta: pls.beta[..signals].to_vec(),
        se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub p_n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub penalty: String,
    pub gamma: f64,
    pub scale_by_se: bool,
    pub noise: String,
    pub noise_sd: f64,
    pub burn_in: usize,
    pub seed: u64,
    pub rng: String,
    pub mrme_oracle_vs_ls: f64,
    pub mrme_pls_vs_ls: f64,
    pub mrme_oracle_vs_pls: f64,
    pub avg_correct_zeros: f64,
    /// `avg_correct_zeros / (p_n - 5)`.
    pub correct_zero_fraction: f64,
    pub avg_incorrect_zeros: f64,
    pub median_lambda: f64,
    pub true_coefficients: Vec<f64>,
    pub coefficient_medians: Vec<f64>,
    /// Empirical SD of the estimates, ×1000.
    pub sd_true: Vec<f64>,
    /// Median sandwich SE, ×1000.
    pub sd_median_estimated: Vec<f64>,
    /// IQR/1.349 of the sandwich SEs, ×1000.
    pub sd_mad: Vec<f64>,
    /// Share of replicates whose `β̂_j ± 1.96·SE_j` covers `β_j`; a
    /// coefficient estimated as zero counts as not covered.
    pub ci95_coverage: Vec<f64>,
}

fn sample_sd(values: &[f64]) -> f64 {
    let m = values.len();
    if m < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
}

fn median_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    quantile_sorted(&sorted_copy(values), 0.5)
}

fn iqr_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let s = sorted_copy(values);
    (quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)) / 1.349
}

pub fn run_table_experiment(config: &ExperimentConfig, execution: Execution) -> Result<SimulationReport> {
    config.validate()?;
    let p = dimension_rule(config.n)?;
    let signals = config.process.order();
    if p <= signals {
        return Err(Error::Domain(format!("p_n = {p} leaves no true zeros")));
    }
    let gram = population_gram(&config.process, p);
    let outcomes = map_indices(execution, config.replicates, |rep| {
        table_replicate(config, p, &gram, rep)
    });

    let mut ok = Vec::new();
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let failures = config.replicates - ok.len();
    check_failures(failures, config.replicates, first_error.as_ref())?;

    let m = ok.len() as f64;
    let ratio = |f: &dyn Fn(&TableReplicate) -> f64| {
        100.0 * median_of(&ok.iter().map(f).collect::<Vec<_>>())
    };
    let truth = config.process.coefficients().to_vec();
    let column = |j: usize| ok.iter().map(|r| r.beta[j]).collect::<Vec<_>>();
    let se_column = |j: usize| {
        ok.iter()
            .map(|r| r.se[j])
            .filter(|s| s.is_finite())
            .map(|s| s * 1000.0)
            .collect::<Vec<_>>()
    };
    let avg_correct = ok.iter().map(|r| r.correct_zeros as f64).sum::<f64>() / m;
    Ok(SimulationReport {
        n: config.n,
        p_n: p,
        replicates: config.replicates,
        failures,
        penalty: config.family.name().to_string(),
        gamma: config.gamma,
        scale_by_se: config.scale_by_se,
        noise: "gaussian".into(),
        noise_sd: config.process.noise_sd(),
        burn_in: config.process.burn_in(),
        seed: config.process.seed(),
        rng: RNG_NAME.into(),
        mrme_oracle_vs_ls: ratio(&|r| r.me_oracle / r.me_ls),
        mrme_pls_vs_ls: ratio(&|r| r.me_pls / r.me_ls),
        mrme_oracle_vs_pls: ratio(&|r| r.me_oracle / r.me_pls),
        avg_correct_zeros: avg_correct,
        correct_zero_fraction: avg_correct / (p - signals) as f64,
        avg_incorrect_zeros: ok.iter().map(|r| r.incorrect_zeros as f64).sum::<f64>() / m,
        median_lambda: median_of(&ok.iter().map(|r| r.lambda).collect::<Vec<_>>()),
        coefficient_medians: (0..signals).map(|j| median_of(&column(j))).collect(),
        sd_true: (0..signals).map(|j| 1000.0 * sample_sd(&column(j))).collect(),
        sd_median_estimated: (0..signals).map(|j| median_of(&se_column(j))).collect(),
        sd_mad: (0..signals).map(|j| iqr_sd(&se_column(j))).collect(),
        ci95_coverage: (0..signals)
            .map(|j| {
                let hits = ok
                    .iter()
                    .filter(|r| r.se[j].is_finite() && (r.beta[j] - truth[j]).abs() <= 1.96 * r.se[j])
                    .count();
                hits as f64 / m
            })
            .collect(),
        true_coefficients: truth,
    })
}

impl SimulationReport {
    /// One row: `n,p_n,replicates,failures,mrme_oracle_ls,mrme_pls_ls,
    /// mrme_oracle_pls,avg_correct_zeros,correct_zero_fraction,
    /// avg_incorrect_zeros,median_beta1..median_beta5`.
    pub fn summary_csv(&self) -> String {
        let mut header = vec![
            "n",
            "p_n",
            "replicates",
            "failures",
            "mrme_oracle_ls",
            "mrme_pls_ls",
            "mrme_oracle_pls",
            "avg_correct_zeros",
            "correct_zero_fraction",
            "avg_incorrect_zeros",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        header.extend((1..=self.coefficient_medians.len()).map(|j| format!("median_beta{j}")));
        let mut row = vec![
            self.n.to_string(),
            self.p_n.to_string(),
            self.replicates.to_string(),
            self.failures.to_string(),
        ];
        row.extend(
            [
                self.mrme_oracle_vs_ls,
                self.mrme_pls_vs_ls,
                self.mrme_oracle_vs_pls,
                self.avg_correct_zeros,
                self.correct_zero_fraction,
                self.avg_incorrect_zeros,
            ]
            .iter()
            .chain(&self.coefficient_medians)
            .map(|v| sig9(*v)),
        );
        format!("{}\n{}\n", header.join(","), row.join(","))
    }

    /// `coefficient,true,sd,sd_median,sd_mad,ci95_coverage`, values ×1000
    /// except the first two and the coverage.
    pub fn se_table_csv(&self) -> String {
        let mut out = String::from("coefficient,true,sd,sd_median,sd_mad,ci95_coverage\n");
        for j in 0..self.sd_true.len() {
            out.push_str(&format!(
                "beta{},{},{},{},{},{}\n",
                j + 1,
                sig9(self.true_coefficients[j]),
                sig9(self.sd_true[j]),
                sig9(self.sd_median_estimated[j]),
                sig9(self.sd_mad[j]),
                sig9(self.ci95_coverage[j])
            ));
        }
        out
    }
}

/// Likelihood-ratio statistics for `H₀: β₆ = β₇ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrNullReport {
    pub n: usize,
    pub p_n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub penalty: String,
    pub gamma: f64,
    pub seed: u64,
    pub rng: String,
    pub unpenalized_tested: bool,
    /// 0-based indices of the constrained coefficients.
    pub tested: Vec<usize>,
    pub df: usize,
    pub statistics: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Share of replicates with `T = 0`.
    pub zero_fraction: f64,
    pub ks_distance: f64,
    pub local_optimum_warnings: usize,
    pub density: Vec<DensityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub lower: f64,
    pub upper: f64,
    pub density: f64,
    /// `χ²_df` density at the bin centre.
    pub reference: f64,
}

/// Number of histogram bins in [`LrNullReport::density`].
pub const DENSITY_BINS: usize = 30;

/// `sup_x |F_n(x) - F(x)|` against `χ²_df`.
pub fn ks_distance_chisq(statistics: &[f64], df: usize) -> f64 {
    let s = sorted_copy(statistics);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - chisq_sf(x, df);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

/// Equal-width histogram over `[0, max]`, normalized to unit area.
pub fn density_table(statistics: &[f64], df: usize, bins: usize) -> Vec<DensityBin> {
    let bins = bins.max(1);
    let hi = statistics.iter().copied().fold(0.0, f64::max);
    let width = if hi > 0.0 { hi / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &t in statistics {
        let k = ((t.max(0.0) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let m = statistics.len().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let lower = k as f64 * width;
            DensityBin {
                lower,
                upper: lower + width,
                density: c as f64 / (m * width),
                reference: chisq_pdf(lower + width / 2.0, df),
            }
        })
        .collect()
}

fn chisq_quantile(prob: f64, df: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while 1.0 - chisq_sf(hi, df) < prob {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - chisq_sf(mid, df) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl LrNullReport {
    /// `x,density` at bin centres.
    pub fn density_csv(&self) -> String {
        let mut out = String::from("x,density\n");
        for b in &self.density {
            out.push_str(&format!("{},{}\n", sig9(0.5 * (b.lower + b.upper)), sig9(b.density)));
        }
        out
    }

    /// `theoretical,empirical` quantile pairs at `(i - ½)/m`.
    pub fn qq_csv(&self) -> String {
        let s = sorted_copy(&self.statistics);
        let m = s.len() as f64;
        let mut out = String::from("theoretical,empirical\n");
        for (i, x) in s.iter().enumerate() {
            let q = chisq_quantile((i as f64 + 0.5) / m, self.df);
            out.push_str(&format!("{},{}\n", sig9(q), sig9(*x)));
        }
        out
    }
}

pub fn run_lr_null_experiment(config: &ExperimentConfig, execution: Execution) -> Result<LrNullReport> {
    config.validate()?;
    let p = dimension_rule(config.n)?;
    let tested = vec![5usize, 6];
    if p < 7 {
        return Err(Error::Domain(format!("p_n = {p} is too small to test beta6 and beta7")));
    }
    let a = selection_rows(&tested, p)?;
    let outcomes = map_indices(execution, config.replicates, |rep| -> Result<_> {
        let data = simulate_replicate(&config.process, config.n, p, rep as u64)?;
        let unpenalized: &[usize] = if config.unpenalized_tested { &tested } else { &[] };
        let tuned = tune(config, data, unpenalized)?;
        lr_test_with(&tuned.model, &tuned.penalty, &a, &tuned.fit_config, Execution::Serial)
    });
    let mut ok = Vec::new();
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let failures = config.replicates - ok.len();
    check_failures(failures, config.replicates, first_error.as_ref())?;

    let statistics: Vec<f64> = ok.iter().map(|r| r.statistic).collect();
    let m = statistics.len() as f64;
    let mean = statistics.iter().sum::<f64>() / m;
    let variance = if statistics.len() > 1 {
        statistics.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let df = tested.len();
    Ok(LrNullReport {
        n: config.n,
        p_n: p,
        replicates: config.replicates,
        failures,
        penalty: config.family.name().to_string(),
        gamma: config.gamma,
        seed: config.process.seed(),
        rng: RNG_NAME.into(),
        unpenalized_tested: config.unpenalized_tested,
        df,
        mean,
        variance,
        zero_fraction: statistics.iter().filter(|t| **t == 0.0).count() as f64 / m,
        ks_distance: ks_distance_chisq(&statistics, df),
        local_optimum_warnings: ok.iter().filter(|r| r.local_optimum_warning).count(),
        density: density_table(&statistics, df, DENSITY_BINS),
        statistics,
        tested,
    })
}
