//! Penalty functions `p_λ(|θ|)`: values, derivatives, the univariate
//! thresholding rules they induce, and regularity diagnostics.
//!
//! Every penalty here satisfies `p_λ(0) = 0` and is nondecreasing in `|θ|`.
//! SCAD is specified through its derivative
//!
//! ```text
//! p'_λ(θ) = λ { I(θ ≤ λ) + (aλ - θ)_+ / ((a - 1)λ) · I(θ > λ) },   θ > 0,
//! ```
//!
//! and its value is the antiderivative with `p_λ(0) = 0`, which is flat at
//! `(a + 1)λ²/2` beyond `aλ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conventional SCAD shape parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

/// Point at which the singularity-at-origin proxy probes `p'_λ(θ)/λ`.
const ORIGIN_PROBE: f64 = 1e-8;
const ORIGIN_PROBE_INNER: f64 = 1e-12;
/// Largest slope of `p''` accepted by the Lipschitz proxy.
pub const LIPSCHITZ_BOUND: f64 = 1e6;
const LIPSCHITZ_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PenaltyKind {
    Scad { a: f64 },
    Hard,
    SoftL1,
    Lq { q: f64 },
}

impl PenaltyKind {
    pub fn scad() -> Self {
        PenaltyKind::Scad { a: DEFAULT_SCAD_A }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Scad { .. } => "scad",
            PenaltyKind::Hard => "hard",
            PenaltyKind::SoftL1 => "soft_l1",
            PenaltyKind::Lq { .. } => "lq",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PenaltyKind::Scad { a } if !(a > 2.0 && a.is_finite()) => Err(Error::Parameter(
                format!("SCAD requires a > 2, got {a}"),
            )),
            PenaltyKind::Lq { q } if !(q > 0.0 && q.is_finite()) => {
                Err(Error::Parameter(format!("Lq requires q > 0, got {q}")))
            }
            _ => Ok(()),
        }
    }

    /// Concave in `|θ|` on `[0, ∞)`; the iterative ridge scheme is a
    /// majorize-minimize algorithm exactly for these.
    pub fn is_concave(&self) -> bool {
        match *self {
            PenaltyKind::Lq { q } => q <= 1.0,
            _ => true,
        }
    }
}

/// A validated penalty: family plus regularization parameter `λ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPenaltySpec", into = "RawPenaltySpec")]
pub struct PenaltySpec {
    kind: PenaltyKind,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPenaltySpec {
    #[serde(flatten)]
    kind: PenaltyKind,
    lambda: f64,
}

impl TryFrom<RawPenaltySpec> for PenaltySpec {
    type Error = Error;

    fn try_from(raw: RawPenaltySpec) -> Result<Self> {
        PenaltySpec::new(raw.kind, raw.lambda)
    }
}

impl From<PenaltySpec> for RawPenaltySpec {
    fn from(spec: PenaltySpec) -> Self {
        RawPenaltySpec {
            kind: spec.kind,
            lambda: spec.lambda,
        }
    }
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        kind.validate()?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(PenaltySpec { kind, lambda })
    }

    /// SCAD with the conventional `a = 3.7`.
    pub fn scad(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::scad(), lambda)
    }

    pub fn hard(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Hard, lambda)
    }

    pub fn soft_l1(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::SoftL1, lambda)
    }

    pub fn lq(q: f64, lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Lq { q }, lambda)
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same family with a different `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.kind, lambda)
    }

    /// Same family, `λ` already known to be valid.
    pub(crate) fn at(&self, lambda: f64) -> Self {
        debug_assert!(lambda >= 0.0 && lambda.is_finite());
        PenaltySpec {
            kind: self.kind,
            lambda,
        }
    }

    /// `p_λ(|θ|)`. Negative arguments are folded to `|θ|`.
    pub fn value(&self, theta: f64) -> f64 {
        let t = theta.abs();
        let lam = self.lambda;
        if t == 0.0 || lam == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Scad { a } => {
                if t <= lam {
                    lam * t
                } else if t <= a * lam {
                    (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lam * lam / 2.0
                }
            }
            PenaltyKind::Hard => {
                if t < lam {
                    lam * lam - (t - lam) * (t - lam)
                } else {
                    lam * lam
                }
            }
            PenaltyKind::SoftL1 => lam * t,
            PenaltyKind::Lq { q } => lam * t.powf(q),
        }
    }

    /// `p'_λ(θ)` for `θ > 0`.
    pub fn deriv(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0) {
            return Err(Error::Domain(format!(
                "penalty derivative needs theta > 0, got {theta}"
            )));
        }
        Ok(self.deriv_pos(theta))
    }

    /// `p'_λ(θ)` with `θ > 0` assumed.
    pub(crate) fn deriv_pos(&self, t: f64) -> f64 {
        let lam = self.lambda;
        if lam == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Scad { a } => {
                if t <= lam {
                    lam
                } else {
                    (a * lam - t).max(0.0) / (a - 1.0)
                }
            }
            PenaltyKind::Hard => 2.0 * (lam - t).max(0.0),
            PenaltyKind::SoftL1 => lam,
            PenaltyKind::Lq { q } => lam * q * t.powf(q - 1.0),
        }
    }

    /// `p''_λ(θ)` for `θ > 0`. At the kinks of `p'` (`λ` and `aλ` for SCAD,
    /// `λ` for hard) the right-hand limit is returned.
    pub fn second_deriv(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0) {
            return Err(Error::Domain(format!(
                "penalty second derivative needs theta > 0, got {theta}"
            )));
        }
        Ok(self.second_deriv_pos(theta))
    }

    pub(crate) fn second_deriv_pos(&self, t: f64) -> f64 {
        let lam = self.lambda;
        if lam == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Scad { a } => {
                if t < lam || t >= a * lam {
                    0.0
                } else {
                    -1.0 / (a - 1.0)
                }
            }
            PenaltyKind::Hard => {
                if t < lam {
                    -2.0
                } else {
                    0.0
                }
            }
            PenaltyKind::SoftL1 => 0.0,
            PenaltyKind::Lq { q } => lam * q * (q - 1.0) * t.powf(q - 2.0),
        }
    }

    /// Global minimizer of `½(z - θ)² + p_λ(|θ|)`.
    pub fn threshold(&self, z: f64) -> f64 {
        self.threshold_weighted(z, 1.0)
    }

    /// Global minimizer of `½·w·(z - θ)² + p_λ(|θ|)` for curvature `w > 0`.
    ///
    /// The objective is piecewise smooth in `|θ|`; the minimizer is found by
    /// comparing the stationary points and endpoints of every piece. Ties go
    /// to the candidate with the smaller magnitude, so zero wins a tie.
    pub fn threshold_weighted(&self, z: f64, w: f64) -> f64 {
        debug_assert!(w > 0.0);
        let lam = self.lambda;
        if lam == 0.0 || z == 0.0 || !z.is_finite() {
            return if z.is_finite() { z } else { f64::NAN };
        }
        let t = z.abs();
        let magnitude = match self.kind {
            PenaltyKind::SoftL1 => (t - lam / w).max(0.0),
            PenaltyKind::Scad { a } => {
                let mut cands = [0.0; 6];
                cands[0] = 0.0;
                cands[1] = (t - lam / w).clamp(0.0, lam);
                cands[2] = lam;
                let curv = w * (a - 1.0) - 1.0;
                cands[3] = if curv > 0.0 {
                    ((w * t * (a - 1.0) - a * lam) / curv).clamp(lam, a * lam)
                } else {
                    lam
                };
                cands[4] = a * lam;
                cands[5] = t.max(a * lam);
                self.best_candidate(&cands, t, w)
            }
            PenaltyKind::Hard => {
                let mut cands = [0.0; 4];
                cands[1] = if w > 2.0 {
                    ((w * t - 2.0 * lam) / (w - 2.0)).clamp(0.0, lam)
                } else {
                    0.0
                };
                cands[2] = lam;
                cands[3] = t.max(lam);
                self.best_candidate(&cands, t, w)
            }
            PenaltyKind::Lq { q } => self.lq_threshold(q, t, w),
        };
        if magnitude == 0.0 {
            0.0
        } else {
            magnitude.copysign(z)
        }
    }

    fn weighted_objective(&self, theta: f64, t: f64, w: f64) -> f64 {
        0.5 * w * (theta - t) * (theta - t) + self.value(theta)
    }

    fn best_candidate(&self, cands: &[f64], t: f64, w: f64) -> f64 {
        let mut sorted = cands.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut best = sorted[0];
        let mut best_val = self.weighted_objective(best, t, w);
        for &c in &sorted[1..] {
            let v = self.weighted_objective(c, t, w);
            if v < best_val {
                best = c;
                best_val = v;
            }
        }
        best
    }

    fn lq_threshold(&self, q: f64, t: f64, w: f64) -> f64 {
        let lam = self.lambda;
        if q == 1.0 {
            return (t - lam / w).max(0.0);
        }
        // Stationarity: h(θ) = w(θ - t) + λ q θ^{q-1} = 0.
        let h = |theta: f64| w * (theta - t) + lam * q * theta.powf(q - 1.0);
        if q > 1.0 {
            // Convex: unique root in (0, t).
            return bisect(h, 0.0, t);
        }
        // q < 1: h falls from +∞ to its minimum at the inflection point,
        // then rises to h(t) > 0. A local minimizer exists only past it.
        let inflection = (lam * q * (1.0 - q) / w).powf(1.0 / (2.0 - q));
        if inflection >= t || h(inflection) >= 0.0 {
            return 0.0;
        }
        let root = bisect(h, inflection, t);
        if self.weighted_objective(root, t, w) < self.weighted_objective(0.0, t, w) {
            root
        } else {
            0.0
        }
    }
}

/// Root of an increasing function with `f(lo) ≤ 0 ≤ f(hi)`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Numeric proxies for the regularity conditions on the penalty, evaluated
/// over a set of nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyDiagnostics {
    /// `max_j p'_λ(|β_j|)`.
    pub a_n: f64,
    /// `max_j |p''_λ(|β_j|)|`.
    pub b_n: f64,
    /// `p'_λ(θ)/λ` stays bounded away from zero as `θ → 0+`.
    pub singular_at_origin: bool,
    /// `p''_λ` Lipschitz on the sampled grid `θ ∈ [Cλ, 10Cλ]`.
    pub lipschitz_ok: bool,
    /// Largest slope of `p''_λ` seen on that grid.
    pub lipschitz_constant: f64,
    /// `min_j |β_j| / λ`; infinite when `λ = 0`.
    pub separation_ratio: f64,
    /// Set when no coefficients were supplied.
    pub empty: bool,
}

pub fn condition_diagnostics(spec: &PenaltySpec, nonzero_coeffs: &[f64]) -> Result<PenaltyDiagnostics> {
    if let Some(j) = nonzero_coeffs.iter().position(|b| *b == 0.0 || !b.is_finite()) {
        return Err(Error::Input(format!(
            "coefficient {} is {}; diagnostics need nonzero finite coefficients",
            j + 1,
            nonzero_coeffs[j]
        )));
    }
    let lam = spec.lambda();

    let (mut a_n, mut b_n) = (0.0_f64, 0.0_f64);
    for b in nonzero_coeffs {
        a_n = a_n.max(spec.deriv_pos(b.abs()));
        b_n = b_n.max(spec.second_deriv_pos(b.abs()).abs());
    }

    let singular_at_origin = if lam == 0.0 {
        false
    } else {
        let outer = spec.deriv_pos(ORIGIN_PROBE);
        let inner = spec.deriv_pos(ORIGIN_PROBE_INNER);
        outer / lam > 0.0 && inner >= 0.5 * outer
    };

    let lipschitz_constant = if lam == 0.0 {
        0.0
    } else {
        let c = match spec.kind() {
            PenaltyKind::Scad { a } => a,
            _ => 1.0,
        };
        let (lo, hi) = (c * lam, 10.0 * c * lam);
        let step = (hi - lo) / LIPSCHITZ_GRID as f64;
        let mut max_slope = 0.0_f64;
        let mut prev = spec.second_deriv_pos(lo);
        for i in 1..=LIPSCHITZ_GRID {
            let cur = spec.second_deriv_pos(lo + step * i as f64);
            max_slope = max_slope.max((cur - prev).abs() / step);
            prev = cur;
        }
        max_slope
    };

    let separation_ratio = if lam == 0.0 {
        f64::INFINITY
    } else {
        nonzero_coeffs
            .iter()
            .map(|b| b.abs() / lam)
            .fold(f64::INFINITY, f64::min)
    };

    Ok(PenaltyDiagnostics {
        a_n,
        b_n,
        singular_at_origin,
        lipschitz_ok: lipschitz_constant.is_finite() && lipschitz_constant <= LIPSCHITZ_BOUND,
        lipschitz_constant,
        separation_ratio,
        empty: nonzero_coeffs.is_empty(),
    })
}
