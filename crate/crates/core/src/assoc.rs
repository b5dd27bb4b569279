//! The test family: MANOVA, SSU, per-trait marginal tests, Fisher and minP
//! combinations, the weighted statistics `T_w = w T_M + (1 - w) T_S`, and
//! USAT (the smallest `p_w` over a weight grid) with its integrated p-value.

use std::fmt;

use crate::distributions::{chi2_ln_norm, chi2_pdf_with_norm, chi2_sf, student_t_two_sided};
use crate::error::{Error, Result};
use crate::model::{dot, GenotypeRecord, SufficientStats, TraitMatrix, MONOMORPHIC_TOL};
use crate::quadform::{liu_fit, ssu_params, QuadFormDist, SsuNullParams};
use crate::quadrature::{integrate, QuadSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Manova,
    Ssu,
    /// Single-trait regression on trait `k` (0-based).
    Marginal(usize),
    Fisher,
    MinP,
    Usat,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Manova => write!(f, "MANOVA"),
            Method::Ssu => write!(f, "SSU"),
            Method::Marginal(k) => write!(f, "MARGINAL_{}", k + 1),
            Method::Fisher => write!(f, "FISHER"),
            Method::MinP => write!(f, "MINP"),
            Method::Usat => write!(f, "USAT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsatDetail {
    /// Weight attaining the smallest `p_w` (first one on ties).
    pub omega_star: f64,
    pub omegas: Vec<f64>,
    pub p_omega: Vec<f64>,
    /// `min_w p_w`.
    pub t_usat: f64,
    pub t_manova: f64,
    pub t_ssu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detail {
    None,
    Marginal { beta: f64, se: f64, t: f64, df: f64 },
    Ssu(SsuNullParams),
    Usat(UsatDetail),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub detail: Detail,
}

impl TestOutcome {
    fn plain(method: Method, statistic: f64, p_value: f64) -> Self {
        TestOutcome {
            method,
            statistic,
            p_value,
            detail: Detail::None,
        }
    }

    pub fn usat_detail(&self) -> Option<&UsatDetail> {
        match &self.detail {
            Detail::Usat(d) => Some(d),
            _ => None,
        }
    }
}

/// Sorted weights in `[0, 1]` that include both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    weights: Vec<f64>,
}

impl Default for WeightGrid {
    fn default() -> Self {
        WeightGrid::evenly_spaced(11).expect("11-point grid is valid")
    }
}

impl WeightGrid {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 || weights[0] != 0.0 || *weights.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput(
                "weight grid must start at 0 and end at 1".into(),
            ));
        }
        if weights.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("weight grid must be strictly increasing".into()));
        }
        Ok(WeightGrid { weights })
    }

    /// `m >= 2` evenly spaced weights from 0 to 1.
    pub fn evenly_spaced(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput("weight grid needs at least 2 points".into()));
        }
        let last = (m - 1) as f64;
        WeightGrid::new((0..m).map(|i| i as f64 / last).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `-n log(|E| / |H + E|)` from the rank-one identity `|H + E| = |E| (1 + q)`.
pub fn manova_statistic(n: usize, wilks_q: f64) -> f64 {
    n as f64 * wilks_q.ln_1p()
}

/// MANOVA (Wilks' lambda) test, referred to `chi2_K`.
pub fn manova_test(stats: &SufficientStats) -> Result<TestOutcome> {
    let t = manova_statistic(stats.n, stats.wilks_q);
    if !t.is_finite() {
        return Err(Error::DegenerateTraits("error SSCP is singular".into()));
    }
    Ok(TestOutcome::plain(Method::Manova, t, chi2_sf(t, stats.k as f64)))
}

/// `T_S = U'U` with `U = Y'X / sigma0^2`.
pub fn ssu_statistic(stats: &SufficientStats) -> f64 {
    stats.ytx.norm_squared() / (stats.sigma0_sq * stats.sigma0_sq)
}

/// SSU score test with the scaled-shifted chi-square null.
pub fn ssu_test(stats: &SufficientStats) -> Result<TestOutcome> {
    let t = ssu_statistic(stats);
    let params = ssu_params(&stats.cov_um_eigs)?;
    Ok(TestOutcome {
        method: Method::Ssu,
        statistic: t,
        p_value: params.sf(t),
        detail: Detail::Ssu(params),
    })
}

/// Per-trait least-squares tests of `Y_k` on `X`, with `n - 2` degrees of freedom.
pub fn marginal_tests(y: &TraitMatrix, x: &GenotypeRecord) -> Result<Vec<TestOutcome>> {
    if x.n() != y.n() {
        return Err(Error::InvalidInput("genotype and trait sample counts differ".into()));
    }
    let yty: Vec<f64> = (0..y.k()).map(|j| dot(y.column(j), y.column(j))).collect();
    let ytx: Vec<f64> = (0..y.k()).map(|j| dot(y.column(j), x.dosage())).collect();
    marginal_from_cross(&yty, &ytx, x.xtx(), y.n() as f64 - 2.0)
}

/// Marginal tests from centered cross-products `Y_k'Y_k`, `Y_k'X` and `X'X`.
pub fn marginal_from_cross(yty_diag: &[f64], ytx: &[f64], xtx: f64, df: f64) -> Result<Vec<TestOutcome>> {
    if !(xtx > MONOMORPHIC_TOL) {
        return Err(Error::MonomorphicVariant);
    }
    if !(df > 0.0) {
        return Err(Error::InvalidInput("no residual degrees of freedom".into()));
    }
    Ok(yty_diag
        .iter()
        .zip(ytx)
        .enumerate()
        .map(|(k, (&yy, &yx))| {
            let beta = yx / xtx;
            let rss = (yy - yx * beta).max(0.0);
            let se = (rss / (df * xtx)).sqrt();
            let t = if yx == 0.0 {
                0.0
            } else if rss <= 1e-14 * yy {
                f64::INFINITY.copysign(yx)
            } else {
                beta / se
            };
            TestOutcome {
                method: Method::Marginal(k),
                statistic: t,
                p_value: student_t_two_sided(t, df),
                detail: Detail::Marginal { beta, se, t, df },
            }
        })
        .collect())
}

fn check_pvalues(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidInput("no p-values to combine".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("p-value {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Fisher's combination `-2 sum log p_k`, referred to `chi2_{2K}`.
pub fn fisher_combine(p: &[f64]) -> Result<TestOutcome> {
    check_pvalues(p)?;
    let stat = -2.0 * p.iter().map(|v| v.ln()).sum::<f64>();
    let pv = if stat.is_infinite() { 0.0 } else { chi2_sf(stat, 2.0 * p.len() as f64) };
    Ok(TestOutcome::plain(Method::Fisher, stat, pv))
}

/// Bonferroni minimum `min(1, K min_k p_k)`.
pub fn minp_combine(p: &[f64]) -> Result<TestOutcome> {
    check_pvalues(p)?;
    let k = p.len() as f64;
    let m = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let stat = (k * m).min(1.0);
    Ok(TestOutcome::plain(Method::MinP, stat, stat))
}

/// Eigenvalues `w + (1 - w) c_j` of the null quadratic form of `T_w`.
pub fn omega_eigs(cov_um_eigs: &[f64], omega: f64) -> Vec<f64> {
    cov_um_eigs.iter().map(|c| omega + (1.0 - omega) * c).collect()
}

/// Null laws of every `T_w` on a grid for one score-covariance spectrum.
///
/// Depends on the data only through `cov_um_eigs`, so one instance serves
/// any number of `(T_M, T_S)` pairs sharing that spectrum (e.g. permutations).
#[derive(Debug, Clone)]
pub struct UsatNull {
    k: usize,
    omegas: Vec<f64>,
    dists: Vec<QuadFormDist>,
    ssu: SsuNullParams,
}

impl UsatNull {
    pub fn new(cov_um_eigs: &[f64], k: usize, grid: &WeightGrid) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput("USAT null needs at least two traits".into()));
        }
        if cov_um_eigs.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} eigenvalues for {k} traits",
                cov_um_eigs.len()
            )));
        }
        let dists = grid
            .weights()
            .iter()
            .map(|&w| liu_fit(&omega_eigs(cov_um_eigs, w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(UsatNull {
            k,
            omegas: grid.weights().to_vec(),
            dists,
            ssu: ssu_params(cov_um_eigs)?,
        })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// `p_w` for every grid weight.
    pub fn p_omega(&self, t_manova: f64, t_ssu: f64) -> Vec<f64> {
        self.omegas
            .iter()
            .zip(&self.dists)
            .map(|(&w, d)| d.survival(w * t_manova + (1.0 - w) * t_ssu))
            .collect()
    }

    /// `(t_usat, index of the first minimizing weight, p_w vector)`.
    pub fn t_usat(&self, t_manova: f64, t_ssu: f64) -> (f64, usize, Vec<f64>) {
        let p = self.p_omega(t_manova, t_ssu);
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v < p[best] {
                best = i;
            }
        }
        (p[best], best, p)
    }

    /// Integrated p-value of the observed minimum `t_usat`.
    ///
    /// With `q_w` the `(1 - t)` quantile of `T_w`, the acceptance region is
    /// `{T_M < q_1, T_S < delta(T_M)}` where `delta(x) = min_{w<1} (q_w - w x)/(1 - w)`.
    /// Treating `T_S` as independent of `T_M` in that region,
    /// `p = 1 - int_0^{q_1} F_S(delta(x)) f_K(x) dx`, evaluated in the
    /// cancellation-free complement form
    /// `p = P(chi2_K > q_1) + int_0^{q_1} S_S(delta(x)) f_K(x) dx`.
    pub fn pvalue(&self, t_usat: f64) -> Result<f64> {
        if t_usat.is_nan() {
            return Err(Error::InvalidInput("t_usat is NaN".into()));
        }
        if t_usat <= 0.0 {
            return Ok(0.0);
        }
        if t_usat >= 1.0 {
            return Ok(1.0);
        }
        let upper = (self.omegas.len() as f64 * t_usat).min(1.0);
        let tol = (1e-12f64).min(1e-7 * t_usat);
        let raw = self.integrate_pvalue(t_usat, tol)?;
        let raw = if raw < t_usat || raw > upper {
            self.integrate_pvalue(t_usat, (1e-14f64).min(1e-9 * t_usat))?
        } else {
            raw
        };
        Ok(raw.clamp(t_usat, upper))
    }

    fn integrate_pvalue(&self, t: f64, abs_tol: f64) -> Result<f64> {
        let kf = self.k as f64;
        let q: Vec<f64> = self
            .dists
            .iter()
            .map(|d| d.quantile(t))
            .collect::<Result<_>>()?;
        let q1 = *q.last().unwrap();
        // lines delta_w(x) = icpt - slope x for w < 1
        let lines: Vec<(f64, f64)> = self
            .omegas
            .iter()
            .zip(&q)
            .filter(|(&w, _)| w < 1.0)
            .map(|(&w, &qw)| (qw / (1.0 - w), w / (1.0 - w)))
            .collect();
        let delta = |x: f64| {
            lines
                .iter()
                .map(|&(c, s)| c - s * x)
                .fold(f64::INFINITY, f64::min)
        };
        let mut bps = vec![0.0, q1];
        let b = self.ssu.b;
        for (i, &(ci, si)) in lines.iter().enumerate() {
            if si > 0.0 {
                bps.push((ci - b) / si);
            }
            for &(cj, sj) in &lines[i + 1..] {
                if si != sj {
                    bps.push((ci - cj) / (si - sj));
                }
            }
        }
        bps.retain(|x| x.is_finite() && *x >= 0.0 && *x <= q1);
        bps.sort_by(f64::total_cmp);
        bps.dedup();

        let ln_norm = chi2_ln_norm(kf);
        let ssu = self.ssu;
        let integrand = |x: f64| ssu.sf(delta(x)) * chi2_pdf_with_norm(x, kf, ln_norm);
        let settings = QuadSettings {
            abs_tol,
            rel_tol: 1e-10,
            max_intervals: 4000,
        };
        let r = integrate(integrand, &bps, settings)?;
        Ok(chi2_sf(q1, kf) + r.value)
    }
}

/// Integrated USAT p-value for an observed `t_usat`.
pub fn usat_pvalue(t_usat: f64, cov_um_eigs: &[f64], k: usize, grid: &WeightGrid) -> Result<f64> {
    UsatNull::new(cov_um_eigs, k, grid)?.pvalue(t_usat)
}

/// USAT from precomputed `T_M`, `T_S` and score-covariance eigenvalues.
pub fn usat_from_parts(
    t_manova: f64,
    t_ssu: f64,
    cov_um_eigs: &[f64],
    k: usize,
    grid: &WeightGrid,
) -> Result<TestOutcome> {
    if k == 1 {
        let p = chi2_sf(t_manova, 1.0);
        return Ok(TestOutcome {
            method: Method::Usat,
            statistic: p,
            p_value: p,
            detail: Detail::Usat(UsatDetail {
                omega_star: 1.0,
                omegas: grid.weights().to_vec(),
                p_omega: vec![p; grid.len()],
                t_usat: p,
                t_manova,
                t_ssu,
            }),
        });
    }
    let null = UsatNull::new(cov_um_eigs, k, grid)?;
    usat_with_null(&null, t_manova, t_ssu)
}

/// USAT against a prepared null.
pub fn usat_with_null(null: &UsatNull, t_manova: f64, t_ssu: f64) -> Result<TestOutcome> {
    let (t_usat, best, p_omega) = null.t_usat(t_manova, t_ssu);
    let p_value = null.pvalue(t_usat)?;
    Ok(TestOutcome {
        method: Method::Usat,
        statistic: t_usat,
        p_value,
        detail: Detail::Usat(UsatDetail {
            omega_star: null.omegas[best],
            omegas: null.omegas.clone(),
            p_omega,
            t_usat,
            t_manova,
            t_ssu,
        }),
    })
}

/// USAT for one variant.
pub fn usat_test(stats: &SufficientStats, grid: &WeightGrid) -> Result<TestOutcome> {
    let t_m = manova_test(stats)?.statistic;
    let t_s = ssu_statistic(stats);
    usat_from_parts(t_m, t_s, &stats.cov_um_eigs, stats.k, grid)
}
