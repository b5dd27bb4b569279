//! Simulation designs: residual correlation structures and the
//! `Y = beta0 + X beta' + e` data-generating model.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    /// Compound symmetry: unit diagonal, `rho` everywhere else.
    Cs,
    /// `rho^|i - j|`.
    Ar1,
    Independent,
    /// Compound symmetry within the first `block_fraction` of the traits,
    /// independent elsewhere.
    BlockCs,
}

impl FromStr for CorrKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cs" => Ok(CorrKind::Cs),
            "ar1" => Ok(CorrKind::Ar1),
            "independent" | "ind" => Ok(CorrKind::Independent),
            "block_cs" | "blockcs" => Ok(CorrKind::BlockCs),
            other => Err(Error::Config(format!("unknown correlation structure '{other}'"))),
        }
    }
}

impl fmt::Display for CorrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrKind::Cs => "cs",
            CorrKind::Ar1 => "ar1",
            CorrKind::Independent => "independent",
            CorrKind::BlockCs => "block_cs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    pub kind: CorrKind,
    pub rho: f64,
    pub block_fraction: f64,
}

impl CorrelationSpec {
    pub fn cs(rho: f64) -> Self {
        CorrelationSpec {
            kind: CorrKind::Cs,
            rho,
            block_fraction: 0.8,
        }
    }

    pub fn new(kind: CorrKind, rho: f64) -> Self {
        CorrelationSpec {
            kind,
            rho,
            block_fraction: 0.8,
        }
    }

    /// Number of traits in the correlated block.
    pub fn block_size(&self, k: usize) -> usize {
        match self.kind {
            CorrKind::BlockCs => ((self.block_fraction * k as f64).round() as usize).min(k),
            CorrKind::Independent => 0,
            _ => k,
        }
    }

    /// The `K x K` correlation matrix, checked positive definite.
    pub fn matrix(&self, k: usize) -> Result<DMatrix<f64>> {
        if k == 0 {
            return Err(Error::InvalidDesign("K must be positive".into()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidDesign(format!("rho = {} outside (-1, 1)", self.rho)));
        }
        let rho = self.rho;
        let m = self.block_size(k);
        let r = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0
            } else {
                match self.kind {
                    CorrKind::Cs => rho,
                    CorrKind::Ar1 => rho.powi((i as i32 - j as i32).abs()),
                    CorrKind::Independent => 0.0,
                    CorrKind::BlockCs => {
                        if i < m && j < m {
                            rho
                        } else {
                            0.0
                        }
                    }
                }
            }
        });
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidDesign(format!(
                "{} correlation with rho = {rho} is not positive definite for K = {k}",
                self.kind
            )));
        }
        Ok(r)
    }
}

/// `beta = sqrt(h2 * total_var / (2 f (1 - f)))`: the effect size at which a
/// variant with allele frequency `f` explains a fraction `h2` of the variance.
pub fn effect_from_variance_explained(h2_fraction: f64, total_var: f64, maf: f64) -> f64 {
    (h2_fraction * total_var / (2.0 * maf * (1.0 - maf))).sqrt()
}

/// Effect pattern with the first `u` of `k` traits associated in the same direction.
pub fn first_u_pattern(k: usize, u: usize) -> Vec<f64> {
    (0..k).map(|j| if j < u { 1.0 } else { 0.0 }).collect()
}

/// One simulation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub n: usize,
    pub k: usize,
    pub maf: f64,
    pub beta0: f64,
    pub effect_size: f64,
    /// Multiplier of `effect_size` per trait; 0 marks an unassociated trait.
    pub assoc_pattern: Vec<f64>,
    pub total_var: f64,
    /// If set, every trait uses this residual variance instead of the
    /// variance-explained split.
    pub residual_var: Option<f64>,
    pub corr: CorrelationSpec,
    pub replicates: usize,
    pub seed: u64,
}

impl SimDesign {
    /// Null design with the conventional defaults (`beta0 = 1`, total variance 10).
    pub fn null(n: usize, k: usize, maf: f64, corr: CorrelationSpec, replicates: usize, seed: u64) -> Self {
        SimDesign {
            n,
            k,
            maf,
            beta0: 1.0,
            effect_size: 0.0,
            assoc_pattern: vec![0.0; k],
            total_var: 10.0,
            residual_var: None,
            corr,
            replicates,
            seed,
        }
    }

    pub fn with_effect(mut self, effect_size: f64, pattern: Vec<f64>) -> Self {
        self.effect_size = effect_size;
        self.assoc_pattern = pattern;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n <= self.k + 1 {
            return Err(Error::InvalidDesign(format!(
                "need n > K + 1 (n = {}, K = {})",
                self.n, self.k
            )));
        }
        if !(self.maf > 0.0 && self.maf <= 0.5) {
            return Err(Error::InvalidDesign(format!("maf = {} outside (0, 0.5]", self.maf)));
        }
        if self.assoc_pattern.len() != self.k {
            return Err(Error::InvalidDesign(format!(
                "association pattern has {} entries for K = {}",
                self.assoc_pattern.len(),
                self.k
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidDesign("replicates must be positive".into()));
        }
        self.corr.matrix(self.k)?;
        if self.residual_variances().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidDesign(
                "effect explains more than the total variance".into(),
            ));
        }
        Ok(())
    }

    /// Per-trait effects `effect_size * pattern`.
    pub fn beta(&self) -> Vec<f64> {
        self.assoc_pattern.iter().map(|p| p * self.effect_size).collect()
    }

    /// Residual variance per trait: `total_var - beta_k^2 2f(1-f)`.
    pub fn residual_variances(&self) -> Vec<f64> {
        let g = 2.0 * self.maf * (1.0 - self.maf);
        self.beta()
            .iter()
            .map(|b| match self.residual_var {
                Some(v) => v,
                None => self.total_var - b * b * g,
            })
            .collect()
    }

    /// Residual covariance `D^{1/2} R D^{1/2}`.
    pub fn noise_covariance(&self) -> Result<DMatrix<f64>> {
        let r = self.corr.matrix(self.k)?;
        let sd: Vec<f64> = self.residual_variances().iter().map(|v| v.sqrt()).collect();
        Ok(DMatrix::from_fn(self.k, self.k, |i, j| r[(i, j)] * sd[i] * sd[j]))
    }
}
