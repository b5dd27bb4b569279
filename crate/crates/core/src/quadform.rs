//! Null laws of non-negative quadratic forms `Q = sum_j lambda_j Z_j^2` in
//! independent standard normals.
//!
//! Two moment-matching approximations are provided:
//!
//! * [`SsuNullParams`]: the scaled and shifted chi-square `a chi2_d + b`
//!   matching the first three cumulants of `Q`, used for the SSU statistic.
//! * [`QuadFormDist`]: the Liu–Tang–Zhang (non)central chi-square fit, which
//!   standardizes `Q` and matches skewness (and, where possible, kurtosis).
//!
//! For central forms the Cauchy–Schwarz inequality gives `s1^2 <= s2`, so the
//! Liu fit always lands on its `delta = 0` branch and coincides with the
//! scaled-shifted law. The noncentral branch is kept for completeness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{chi2_cdf, chi2_isf, chi2_sf, noncentral_chi2_sf};
use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues are treated as exactly zero.
pub const EIGEN_ZERO_TOL: f64 = 1e-12;

/// Drop non-positive / negligible eigenvalues; reject clearly negative input.
pub(crate) fn positive_eigs(eigs: &[f64]) -> Result<Vec<f64>> {
    let max = eigs.iter().cloned().fold(0.0_f64, f64::max);
    if eigs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite eigenvalue".into()));
    }
    if max <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    if eigs.iter().any(|&v| v < -1e-8 * max) {
        return Err(Error::InvalidInput(
            "quadratic form eigenvalues must be non-negative".into(),
        ));
    }
    Ok(eigs
        .iter()
        .cloned()
        .filter(|&v| v > EIGEN_ZERO_TOL * max)
        .collect())
}

fn power_sums(eigs: &[f64]) -> [f64; 4] {
    let mut c = [0.0; 4];
    for &v in eigs {
        let v2 = v * v;
        c[0] += v;
        c[1] += v2;
        c[2] += v2 * v;
        c[3] += v2 * v2;
    }
    c
}

/// Parameters of the `a * chi2_d + b` approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsuNullParams {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl SsuNullParams {
    pub fn from_eigs(eigs: &[f64]) -> Result<Self> {
        let eigs = positive_eigs(eigs)?;
        let [c1, c2, c3, _] = power_sums(&eigs);
        if c3 <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        Ok(SsuNullParams {
            a: c3 / c2,
            b: c1 - c2 * c2 / c3,
            d: c2 * c2 * c2 / (c3 * c3),
        })
    }

    #[inline]
    fn standardized(&self, t: f64) -> f64 {
        ((t - self.b) / self.a).max(0.0)
    }

    /// `P(a chi2_d + b > t)`.
    pub fn sf(&self, t: f64) -> f64 {
        chi2_sf(self.standardized(t), self.d)
    }

    /// `P(a chi2_d + b <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        chi2_cdf(self.standardized(t), self.d)
    }
}

/// Scaled-shifted chi-square parameters for a set of eigenvalues.
pub fn ssu_params(eigs: &[f64]) -> Result<SsuNullParams> {
    SsuNullParams::from_eigs(eigs)
}

/// Law of a non-negative quadratic form together with its Liu fit.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormDist {
    eigs: Vec<f64>,
    mean: f64,
    variance: f64,
    liu_l: f64,
    liu_delta: f64,
}

impl QuadFormDist {
    pub fn eigs(&self) -> &[f64] {
        &self.eigs
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn variance(&self) -> f64 {
        self.variance
    }
    pub fn liu_l(&self) -> f64 {
        self.liu_l
    }
    pub fn liu_delta(&self) -> f64 {
        self.liu_delta
    }
    /// Mean of the matched chi-square, `l + delta`.
    pub fn mu_chi(&self) -> f64 {
        self.liu_l + self.liu_delta
    }
    /// Standard deviation of the matched chi-square, `sqrt(2 (l + 2 delta))`.
    pub fn sigma_chi(&self) -> f64 {
        (2.0 * (self.liu_l + 2.0 * self.liu_delta)).sqrt()
    }

    /// Map a value of `Q` onto the matched chi-square scale.
    #[inline]
    fn to_chi_scale(&self, t: f64) -> f64 {
        let t_star = (t - self.mean) / self.variance.sqrt();
        t_star * self.sigma_chi() + self.mu_chi()
    }

    /// `P(Q > t)` under the Liu approximation.
    pub fn survival(&self, t: f64) -> f64 {
        let y = self.to_chi_scale(t);
        if y <= 0.0 {
            return 1.0;
        }
        if self.liu_delta > 0.0 {
            noncentral_chi2_sf(y, self.liu_l, self.liu_delta)
        } else {
            chi2_sf(y, self.liu_l)
        }
    }

    /// The value `t` with `survival(t) = p_upper`.
    ///
    /// Central fits invert the chi-square tail directly. Noncentral fits use
    /// safeguarded regula falsi (Illinois variant) on `ln survival(t) - ln p`
    /// over `[0, mean + 50 sd]`, expanding the bracket as needed.
    pub fn quantile(&self, p_upper: f64) -> Result<f64> {
        if !(p_upper > 0.0 && p_upper < 1.0) {
            return Err(Error::InvalidInput(format!(
                "upper-tail probability must lie in (0, 1), got {p_upper}"
            )));
        }
        let sd = self.variance.sqrt();
        if self.liu_delta == 0.0 {
            let y = chi2_isf(p_upper, self.liu_l)?;
            let t = (y - self.mu_chi()) / self.sigma_chi() * sd + self.mean;
            return Ok(t.max(0.0));
        }
        let lo = 0.0;
        let mut hi = self.mean + 50.0 * sd;
        let ln_p = p_upper.ln();
        let g = |t: f64| {
            let s = self.survival(t);
            if s <= 0.0 {
                f64::NEG_INFINITY
            } else {
                s.ln() - ln_p
            }
        };
        let mut g_hi = g(hi);
        let mut expansions = 0;
        while g_hi > 0.0 {
            hi += 50.0 * sd * (1u64 << expansions.min(20)) as f64;
            g_hi = g(hi);
            expansions += 1;
            if expansions > 60 {
                return Err(Error::NumericalFailure(
                    "could not bracket quadratic-form quantile".into(),
                ));
            }
        }
        invert_decreasing(g, lo, hi, g(lo), g_hi)
    }
}

/// Find the root of a decreasing function `g` bracketed by `g(lo) >= 0 >= g(hi)`.
fn invert_decreasing<G: Fn(f64) -> f64>(
    g: G,
    mut lo: f64,
    mut hi: f64,
    mut g_lo: f64,
    mut g_hi: f64,
) -> Result<f64> {
    const MAX_ITER: usize = 200;
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    // which end moved last: -1 lo, +1 hi
    let mut last_side = 0i8;
    for _ in 0..MAX_ITER {
        let width = hi - lo;
        let mut x = if g_lo.is_finite() && g_hi.is_finite() {
            lo + width * g_lo / (g_lo - g_hi)
        } else {
            f64::NAN
        };
        // keep the step well inside the bracket
        if !(x > lo + 1e-3 * width && x < hi - 1e-3 * width) {
            x = 0.5 * (lo + hi);
        }
        let gx = g(x);
        if gx.abs() <= 1e-13 {
            return Ok(x);
        }
        if gx > 0.0 {
            lo = x;
            g_lo = gx;
            if last_side == -1 && g_hi.is_finite() {
                g_hi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            g_hi = gx;
            if last_side == 1 {
                g_lo *= 0.5;
            }
            last_side = 1;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-300) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NumericalFailure(
        "quantile inversion did not converge in 200 iterations".into(),
    ))
}

/// Fit the Liu approximation to the quadratic form with the given eigenvalues.
pub fn liu_fit(eigs: &[f64]) -> Result<QuadFormDist> {
    let eigs = positive_eigs(eigs)?;
    let [c1, c2, c3, c4] = power_sums(&eigs);
    if c2 <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let s1 = c3 / c2.powf(1.5);
    let s2 = c4 / (c2 * c2);
    let gap = s1 * s1 - s2;
    let (liu_l, liu_delta) = if gap > 1e-10 * s2 {
        let a = 1.0 / (s1 - gap.sqrt());
        let delta = s1 * a * a * a - a * a;
        (a * a - 2.0 * delta, delta)
    } else {
        (1.0 / (s1 * s1), 0.0)
    };
    Ok(QuadFormDist {
        eigs,
        mean: c1,
        variance: 2.0 * c2,
        liu_l,
        liu_delta,
    })
}

/// `P(Q > t)` under the Liu approximation.
pub fn qf_survival(dist: &QuadFormDist, t: f64) -> f64 {
    dist.survival(t)
}

/// Inverse of [`qf_survival`].
pub fn qf_quantile(dist: &QuadFormDist, p_upper: f64) -> Result<f64> {
    dist.quantile(p_upper)
}

/// Deterministic stream of exact draws of `sum_j lambda_j Z_j^2`.
pub struct QfSampler {
    eigs: Vec<f64>,
    rng: ChaCha8Rng,
}

impl QfSampler {
    pub fn new(eigs: &[f64], seed: u64) -> Self {
        QfSampler {
            eigs: eigs.to_vec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Iterator for QfSampler {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let mut q = 0.0;
        for &l in &self.eigs {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            q += l * z * z;
        }
        Some(q)
    }
}

/// Monte-Carlo sample of the quadratic form (test oracle).
pub fn qf_mc_sample(eigs: &[f64], draws: usize, seed: u64) -> Vec<f64> {
    QfSampler::new(eigs, seed).take(draws.max(1)).collect()
}
