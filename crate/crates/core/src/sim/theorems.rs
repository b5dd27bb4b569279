//! Monte-Carlo checks of the large-sample MANOVA determinant limits.
//!
//! For centered data `|I + (H/n)(E/n)^{-1}| = 1 + X'X b' E^{-1} b`, the
//! quantity whose probability limit governs MANOVA power. Each scenario is
//! simulated `reps` times at sample size `n`; all association patterns of a
//! repetition share one noise draw, so differences between patterns carry
//! little Monte-Carlo noise.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::design::{first_u_pattern, CorrKind, CorrelationSpec};
use super::generate::{replicate_rng, sym_sqrt, CrossProducts, NoiseDraw};
use crate::error::{Error, Result};
use crate::model::{SigmaDivisor, TraitSummary};

/// `2 f (1 - f)`, the genotype variance under Hardy–Weinberg equilibrium.
fn geno_var(maf: f64) -> f64 {
    2.0 * maf * (1.0 - maf)
}

/// Limit of `|I + H E^{-1}|` when all `K` equicorrelated traits carry effect `beta`.
pub fn complete_limit(k: usize, rho: f64, beta: f64, sigma2: f64, maf: f64) -> f64 {
    1.0 + geno_var(maf) * beta * beta * k as f64 / (sigma2 * (1.0 + (k as f64 - 1.0) * rho))
}

/// Limit of `|I + H E^{-1}|` when the first `u` of `K` equicorrelated traits carry effect `beta`.
pub fn partial_limit(k: usize, u: usize, rho: f64, beta: f64, sigma2: f64, maf: f64) -> f64 {
    let (k, u) = (k as f64, u as f64);
    1.0 + geno_var(maf) * beta * beta / (sigma2 * (1.0 - rho)) * (1.0 + (k - u - 1.0) * rho) / (1.0 + (k - 1.0) * rho) * u
}

/// Whether partial association with `u` traits yields the larger limit: `u/K > (1-rho)/(1+(K-u-1)rho)`.
pub fn partial_exceeds_complete(k: usize, u: usize, rho: f64) -> bool {
    let (kf, uf) = (k as f64, u as f64);
    uf / kf > (1.0 - rho) / (1.0 + (kf - uf - 1.0) * rho)
}

/// Block structure: the first `m` traits are equicorrelated, the rest independent.
/// Returns the limits `(complete, partial)` for `u > m` associated traits.
pub fn block_limits(k: usize, m: usize, u: usize, rho: f64, beta: f64, sigma2: f64, maf: f64) -> (f64, f64) {
    let a = geno_var(maf) * beta * beta / (sigma2 * (1.0 + (m as f64 - 1.0) * rho));
    let b = geno_var(maf) * beta * beta / sigma2;
    let am = a * m as f64;
    (1.0 + b * (k - m) as f64 + am, 1.0 + b * (u - m) as f64 + am)
}

/// Limit of `det(H1/n + E/n) - det(H2/n + E/n)` for two traits, with `H1`
/// from effects `(beta1, 0)` and `H2` from `(beta1, beta2)`.
pub fn two_trait_det_gap(maf: f64, beta1: f64, beta2: f64, rho: f64, sigma2: f64) -> f64 {
    geno_var(maf) * beta2 * sigma2 * (2.0 * rho * beta1 - beta2)
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub n: usize,
    pub maf: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub reps: usize,
    pub seed: u64,
    /// Scenario for the determinant limits.
    pub det_k: usize,
    pub det_rho: f64,
    pub det_rel_tol: f64,
    /// Sign sweep.
    pub sweep_rhos: Vec<f64>,
    pub sweep_ks: Vec<usize>,
    /// A sign is checked only where the limit gap exceeds this many standard errors.
    pub sign_min_se: f64,
    /// Block-structure scenario.
    pub block_k: usize,
    pub block_m: usize,
    pub block_u: usize,
    pub block_rho: f64,
    pub block_beta: f64,
    pub block_sigma2: f64,
    /// Two-trait determinant gap scenario.
    pub gap_n: usize,
    pub gap_rho: f64,
    pub gap_beta1: f64,
    pub gap_beta2: f64,
    pub gap_rel_tol: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            n: 100_000,
            maf: 0.2,
            beta: 0.25,
            sigma2: 9.98,
            reps: 20,
            seed: 2017,
            det_k: 5,
            det_rho: 0.6,
            det_rel_tol: 0.01,
            sweep_rhos: vec![0.2, 0.4, 0.6, 0.8],
            sweep_ks: vec![2, 5, 10],
            sign_min_se: 4.0,
            block_k: 20,
            block_m: 16,
            block_u: 17,
            block_rho: 0.6,
            block_beta: 0.395,
            block_sigma2: 9.95,
            gap_n: 10_000_000,
            gap_rho: 0.6,
            gap_beta1: 0.25,
            gap_beta2: 0.2,
            gap_rel_tol: 0.05,
        }
    }
}

/// Empirical value against its closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub scenario: String,
    pub k: usize,
    pub u: usize,
    pub rho: f64,
    pub closed_form: f64,
    pub empirical: f64,
    pub se: f64,
    pub rel_dev: f64,
    /// Relative deviation of the excess over 1 (`(emp - 1) / (closed - 1) - 1`);
    /// only meaningful for determinant rows.
    pub excess_rel_dev: f64,
    pub pass: bool,
}

/// Sign of the partial-minus-complete gap against the analytic condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SignRow {
    pub k: usize,
    pub u: usize,
    pub rho: f64,
    pub closed_gap: f64,
    pub empirical_gap: f64,
    pub se: f64,
    pub partial_predicted_larger: bool,
    pub checked: bool,
    pub pass: bool,
}

impl SignRow {
    pub fn regime(&self) -> &'static str {
        if self.partial_predicted_larger {
            "partial > complete"
        } else {
            "complete >= partial"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub determinants: Vec<LimitRow>,
    pub signs: Vec<SignRow>,
    pub block: LimitRow,
    pub two_trait_gap: LimitRow,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.determinants.iter().all(|r| r.pass)
            && self.signs.iter().all(|r| r.pass)
            && self.block.pass
            && self.two_trait_gap.pass
    }

    /// Tab-separated report, one row per scenario.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("check\tscenario\tK\tu\trho\tclosed_form\tempirical\tse\trel_dev\tregime\tpass\n");
        let limit_rows = self.determinants.iter().chain([&self.block, &self.two_trait_gap]);
        for r in limit_rows {
            let _ = writeln!(
                s,
                "limit\t{}\t{}\t{}\t{}\t{:.8e}\t{:.8e}\t{:.3e}\t{:.3e}\t-\t{}",
                r.scenario,
                r.k,
                r.u,
                r.rho,
                r.closed_form,
                r.empirical,
                r.se,
                r.rel_dev,
                pass_str(r.pass)
            );
        }
        for r in &self.signs {
            let verdict = if r.checked { pass_str(r.pass) } else { "skip" };
            let _ = writeln!(
                s,
                "sign\tpartial_minus_complete\t{}\t{}\t{}\t{:.8e}\t{:.8e}\t{:.3e}\t-\t{}\t{}",
                r.k,
                r.u,
                r.rho,
                r.closed_gap,
                r.empirical_gap,
                r.se,
                r.regime(),
                verdict
            );
        }
        s
    }
}

fn pass_str(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Noise roots and effect vectors for a set of patterns sharing a covariance.
fn empirical_dets(
    n: usize,
    maf: f64,
    cov: &DMatrix<f64>,
    betas: &[Vec<f64>],
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<CrossProducts>>> {
    let k = cov.nrows();
    let root = sym_sqrt(cov)?;
    Ok((0..reps as u64)
        .map(|r| {
            let draw = NoiseDraw::draw(n, k, maf, &mut replicate_rng(seed, r));
            betas.iter().map(|b| draw.cross_products(b, &root)).collect()
        })
        .collect())
}

/// `|I + H E^{-1}|` of one set of cross-products.
fn hotelling_det(cp: &CrossProducts) -> Result<f64> {
    let s = TraitSummary::new(cp.yty.clone(), cp.n, SigmaDivisor::SampleKnm1)?;
    Ok(1.0 + s.stats(cp.ytx.clone(), cp.xtx)?.wilks_q)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

fn limit_row(scenario: &str, k: usize, u: usize, rho: f64, closed: f64, values: &[f64], tol: f64) -> LimitRow {
    let (m, se) = mean_se(values);
    let rel_dev = (m - closed) / closed.abs();
    LimitRow {
        scenario: scenario.to_string(),
        k,
        u,
        rho,
        closed_form: closed,
        empirical: m,
        se,
        rel_dev,
        excess_rel_dev: (m - 1.0) / (closed - 1.0) - 1.0,
        pass: rel_dev.abs() <= tol,
    }
}

fn cs_cov(k: usize, rho: f64, sigma2: f64) -> Result<DMatrix<f64>> {
    Ok(CorrelationSpec::cs(rho).matrix(k)? * sigma2)
}

/// Run every scenario of `config`.
pub fn verify_theorem_limits(config: &TheoremConfig) -> Result<TheoremReport> {
    let c = config;
    if c.reps < 2 {
        return Err(Error::InvalidDesign("at least two repetitions are needed".into()));
    }
    let all = |k: usize, beta: f64| -> Vec<Vec<f64>> { (1..=k).map(|u| first_u_pattern(k, u).iter().map(|p| p * beta).collect()).collect() };

    // determinant limits, u = 1..K (u = K is complete association)
    let cov = cs_cov(c.det_k, c.det_rho, c.sigma2)?;
    let sims = empirical_dets(c.n, c.maf, &cov, &all(c.det_k, c.beta), c.reps, c.seed)?;
    let mut determinants = Vec::new();
    for u in 1..=c.det_k {
        let vals = sims.iter().map(|rep| hotelling_det(&rep[u - 1])).collect::<Result<Vec<_>>>()?;
        let (name, closed) = if u == c.det_k {
            ("complete", complete_limit(c.det_k, c.det_rho, c.beta, c.sigma2, c.maf))
        } else {
            ("partial", partial_limit(c.det_k, u, c.det_rho, c.beta, c.sigma2, c.maf))
        };
        determinants.push(limit_row(name, c.det_k, u, c.det_rho, closed, &vals, c.det_rel_tol));
    }

    // sign sweep
    let mut signs = Vec::new();
    for (ki, &k) in c.sweep_ks.iter().enumerate() {
        for (ri, &rho) in c.sweep_rhos.iter().enumerate() {
            let cov = cs_cov(k, rho, c.sigma2)?;
            let seed = c.seed ^ ((ki as u64 + 1) << 32) ^ ((ri as u64 + 1) << 16);
            let sims = empirical_dets(c.n, c.maf, &cov, &all(k, c.beta), c.reps, seed)?;
            let complete = complete_limit(k, rho, c.beta, c.sigma2, c.maf);
            for u in 1..k {
                let gaps = sims
                    .iter()
                    .map(|rep| Ok(hotelling_det(&rep[u - 1])? - hotelling_det(&rep[k - 1])?))
                    .collect::<Result<Vec<_>>>()?;
                let (m, se) = mean_se(&gaps);
                let closed_gap = partial_limit(k, u, rho, c.beta, c.sigma2, c.maf) - complete;
                let predicted = partial_exceeds_complete(k, u, rho);
                let checked = closed_gap.abs() >= c.sign_min_se * se;
                signs.push(SignRow {
                    k,
                    u,
                    rho,
                    closed_gap,
                    empirical_gap: m,
                    se,
                    partial_predicted_larger: predicted,
                    checked,
                    pass: !checked || (m > 0.0) == predicted,
                });
            }
        }
    }

    // block structure difference b(K - u)
    let corr = CorrelationSpec {
        kind: CorrKind::BlockCs,
        rho: c.block_rho,
        block_fraction: c.block_m as f64 / c.block_k as f64,
    };
    if corr.block_size(c.block_k) != c.block_m || c.block_u <= c.block_m || c.block_u >= c.block_k {
        return Err(Error::InvalidDesign("block scenario needs m < u < K".into()));
    }
    let cov = corr.matrix(c.block_k)? * c.block_sigma2;
    let b = |u: usize| first_u_pattern(c.block_k, u).iter().map(|p| p * c.block_beta).collect::<Vec<_>>();
    let sims = empirical_dets(c.n, c.maf, &cov, &[b(c.block_k), b(c.block_u)], c.reps, c.seed ^ 0xB10C)?;
    let diffs = sims
        .iter()
        .map(|rep| Ok(hotelling_det(&rep[0])? - hotelling_det(&rep[1])?))
        .collect::<Result<Vec<_>>>()?;
    let (full, part) = block_limits(c.block_k, c.block_m, c.block_u, c.block_rho, c.block_beta, c.block_sigma2, c.maf);
    let block = limit_row("block_complete_minus_partial", c.block_k, c.block_u, c.block_rho, full - part, &diffs, c.gap_rel_tol);

    // two-trait determinant gap
    let cov = cs_cov(2, c.gap_rho, c.sigma2)?;
    let sims = empirical_dets(c.gap_n, c.maf, &cov, &[vec![c.gap_beta1, 0.0], vec![c.gap_beta1, c.gap_beta2]], c.reps, c.seed ^ 0x2)?;
    let gaps: Vec<f64> = sims
        .iter()
        .map(|rep| (rep[0].yty.determinant() - rep[1].yty.determinant()) / (c.gap_n as f64 * c.gap_n as f64))
        .collect();
    let closed = two_trait_det_gap(c.maf, c.gap_beta1, c.gap_beta2, c.gap_rho, c.sigma2);
    let two_trait_gap = limit_row("two_trait_det_gap", 2, 1, c.gap_rho, closed, &gaps, c.gap_rel_tol);

    Ok(TheoremReport {
        determinants,
        signs,
        block,
        two_trait_gap,
    })
}
