//! Covariate-adjusted MANOVA, SSU and USAT.
//!
//! The null model `Y_k = Z phi + e_k` is fitted once per dataset. In the
//! default `Shared` mode a single coefficient vector is used for every trait,
//! `phi = (1/K) sum_k (Z'Z)^{-1} Z'Y_k`; `PerTrait` fits each trait separately.
//! The adjusted score is `U = R'X / sigma0^2` with `R` the null residuals and
//! `sigma0^2 = tr(R'R) / (nK)`; its covariance is `X'X R'R / (n sigma0^4)`.
//! MANOVA compares the per-trait residual SSCP under `Z` alone with the one
//! under `(Z, X)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::assoc::{
    manova_statistic, marginal_from_cross, usat_from_parts, Method, TestOutcome, WeightGrid,
};
use crate::distributions::chi2_sf;
use crate::error::{Error, Result};
use crate::model::{center_columns, dot, GenotypeRecord, SigmaDivisor, TraitMatrix, TraitSummary, MONOMORPHIC_TOL};
use crate::quadform::ssu_params;

/// How the null-model coefficients are shared across traits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateMode {
    #[default]
    Shared,
    PerTrait,
}

impl FromStr for CovariateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(CovariateMode::Shared),
            "per_trait" => Ok(CovariateMode::PerTrait),
            other => Err(Error::Config(format!(
                "covariate_mode must be 'shared' or 'per_trait', got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for CovariateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateMode::Shared => "shared",
            CovariateMode::PerTrait => "per_trait",
        })
    }
}

/// `n x q` centered covariates of full column rank.
#[derive(Debug, Clone)]
pub struct CovariateMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
    ztz_chol: Option<Cholesky<f64, Dyn>>,
}

impl CovariateMatrix {
    pub fn new(mut values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let q = values.ncols();
        if names.len() != q {
            return Err(Error::InvalidInput(format!("{} covariate names for {q} columns", names.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates have missing or non-finite entries".into()));
        }
        center_columns(&mut values);
        let ztz_chol = if q == 0 {
            None
        } else {
            let ztz = values.tr_mul(&values);
            let chol = ztz.clone().cholesky().ok_or_else(|| {
                Error::SingularCovariates("Z'Z is not positive definite".into())
            })?;
            let l = chol.l();
            for j in 0..q {
                if !(l[(j, j)] * l[(j, j)] > 1e-10 * ztz[(j, j)]) || ztz[(j, j)] <= 0.0 {
                    return Err(Error::SingularCovariates(format!(
                        "covariate '{}' is constant or a linear combination of earlier columns",
                        names[j]
                    )));
                }
            }
            Some(chol)
        };
        Ok(CovariateMatrix {
            values,
            names,
            ztz_chol,
        })
    }

    /// No covariates for `n` samples.
    pub fn empty(n: usize) -> Self {
        CovariateMatrix {
            values: DMatrix::zeros(n, 0),
            names: Vec::new(),
            ztz_chol: None,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
    pub fn q(&self) -> usize {
        self.values.ncols()
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `(Z'Z)^{-1} Z'v` for each column of `v`.
    fn coefficients(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.ztz_chol {
            Some(chol) => chol.solve(&self.values.tr_mul(v)),
            None => DMatrix::zeros(0, v.ncols()),
        }
    }
}

/// Null-model fit shared by every variant of a scan.
#[derive(Debug, Clone)]
pub struct NullFit {
    mode: CovariateMode,
    n: usize,
    k: usize,
    q: usize,
    /// `q x 1` in shared mode, `q x K` per trait.
    phi_hat: DMatrix<f64>,
    adjusted: DMatrix<f64>,
    per_trait: DMatrix<f64>,
    sigma0_sq: f64,
    ssu_summary: TraitSummary,
    manova_summary: TraitSummary,
    per_trait_yy: Vec<f64>,
    z: CovariateMatrix,
}

/// Per-variant adjusted cross-products.
#[derive(Debug, Clone)]
pub struct AdjustedScores {
    /// `X'X` of the centered genotype.
    pub xtx: f64,
    /// `R'X` with `R` the null-model residuals.
    pub rtx: DVector<f64>,
    /// `R0'X` with `R0` the per-trait residuals on `Z`.
    pub r0tx: DVector<f64>,
    /// `X'M_Z X`, the genotype sum of squares after projecting out `Z`.
    pub xt_mz_x: f64,
}

/// Fit the null model `Y = Z phi` in the requested mode.
pub fn fit_null(y: &TraitMatrix, z: &CovariateMatrix, mode: CovariateMode) -> Result<NullFit> {
    let (n, k, q) = (y.n(), y.k(), z.q());
    if z.n() != n {
        return Err(Error::InvalidInput(format!("covariates have {} samples, traits have {n}", z.n())));
    }
    if q + k >= n {
        return Err(Error::InvalidInput(format!(
            "need q < n - K (q = {q}, n = {n}, K = {k})"
        )));
    }
    let yv = y.values();
    let phi_trait = z.coefficients(yv);
    let per_trait = if q == 0 { yv.clone() } else { yv - z.values() * &phi_trait };
    let (phi_hat, adjusted) = match mode {
        CovariateMode::PerTrait => (phi_trait, per_trait.clone()),
        CovariateMode::Shared => {
            let mut phi = DMatrix::zeros(q, 1);
            for j in 0..k {
                phi += phi_trait.column(j);
            }
            phi /= k as f64;
            let fitted = z.values() * &phi;
            let mut r = yv.clone();
            for j in 0..k {
                let mut col = r.column_mut(j);
                col -= fitted.column(0);
            }
            (phi, r)
        }
    };
    let ssu_summary = TraitSummary::new(adjusted.tr_mul(&adjusted), n, SigmaDivisor::MleKn)?;
    let r0r0 = per_trait.tr_mul(&per_trait);
    let per_trait_yy = r0r0.diagonal().iter().cloned().collect();
    let manova_summary = TraitSummary::new(r0r0, n, SigmaDivisor::MleKn)?;
    Ok(NullFit {
        mode,
        n,
        k,
        q,
        phi_hat,
        sigma0_sq: ssu_summary.sigma0_sq(),
        adjusted,
        per_trait,
        ssu_summary,
        manova_summary,
        per_trait_yy,
        z: z.clone(),
    })
}

impl NullFit {
    pub fn mode(&self) -> CovariateMode {
        self.mode
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn phi_hat(&self) -> &DMatrix<f64> {
        &self.phi_hat
    }
    /// Residuals `Y - Z phi_hat` used by the score.
    pub fn adjusted_traits(&self) -> &DMatrix<f64> {
        &self.adjusted
    }
    /// Per-trait residuals `M_Z Y` used by MANOVA and the marginal tests.
    pub fn per_trait_residuals(&self) -> &DMatrix<f64> {
        &self.per_trait
    }
    /// `tr(R'R) / (nK)`.
    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    /// Eigenvalues of the adjusted score covariance for a variant with this `X'X`.
    pub fn cov_um_eigs(&self, xtx: f64) -> Vec<f64> {
        self.ssu_summary.cov_um_eigs(xtx)
    }

    pub fn scores(&self, x: &GenotypeRecord) -> Result<AdjustedScores> {
        if x.n() != self.n {
            return Err(Error::InvalidInput(format!(
                "genotype has {} samples, null fit has {}",
                x.n(),
                self.n
            )));
        }
        let d = x.dosage();
        let n = self.n;
        let col = |m: &DMatrix<f64>, j: usize| dot(&m.as_slice()[j * n..(j + 1) * n], d);
        let xtx = dot(d, d);
        if !(xtx > MONOMORPHIC_TOL) {
            return Err(Error::MonomorphicVariant);
        }
        let rtx = DVector::from_iterator(self.k, (0..self.k).map(|j| col(&self.adjusted, j)));
        let r0tx = if self.mode == CovariateMode::PerTrait {
            rtx.clone()
        } else {
            DVector::from_iterator(self.k, (0..self.k).map(|j| col(&self.per_trait, j)))
        };
        let xt_mz_x = match &self.z.ztz_chol {
            None => xtx,
            Some(chol) => {
                let ztx = DVector::from_iterator(self.q, (0..self.q).map(|j| col(self.z.values(), j)));
                xtx - ztx.dot(&chol.solve(&ztx))
            }
        };
        Ok(AdjustedScores {
            xtx,
            rtx,
            r0tx,
            xt_mz_x,
        })
    }

    fn check_not_confounded(&self, s: &AdjustedScores) -> Result<()> {
        if !(s.xt_mz_x > 1e-10 * s.xtx) {
            return Err(Error::SingularCovariates(
                "genotype lies in the covariate column space".into(),
            ));
        }
        Ok(())
    }

    /// Adjusted SSU statistic `|R'X|^2 / sigma0^4`.
    pub fn ssu_statistic(&self, s: &AdjustedScores) -> f64 {
        s.rtx.norm_squared() / (self.sigma0_sq * self.sigma0_sq)
    }

    pub fn ssu(&self, s: &AdjustedScores) -> Result<TestOutcome> {
        let t = self.ssu_statistic(s);
        let params = ssu_params(&self.cov_um_eigs(s.xtx))?;
        Ok(TestOutcome {
            method: Method::Ssu,
            statistic: t,
            p_value: params.sf(t),
            detail: crate::assoc::Detail::Ssu(params),
        })
    }

    /// Adjusted MANOVA statistic `-n log(|E| / |H + E|)`.
    pub fn manova_statistic(&self, s: &AdjustedScores) -> Result<f64> {
        self.check_not_confounded(s)?;
        let st = self.manova_summary.stats(s.r0tx.clone(), s.xt_mz_x)?;
        Ok(manova_statistic(self.n, st.wilks_q))
    }

    pub fn manova(&self, s: &AdjustedScores) -> Result<TestOutcome> {
        let t = self.manova_statistic(s)?;
        Ok(TestOutcome {
            method: Method::Manova,
            statistic: t,
            p_value: chi2_sf(t, self.k as f64),
            detail: crate::assoc::Detail::None,
        })
    }

    pub fn usat(&self, s: &AdjustedScores, grid: &WeightGrid) -> Result<TestOutcome> {
        let t_m = self.manova_statistic(s)?;
        let t_s = self.ssu_statistic(s);
        usat_from_parts(t_m, t_s, &self.cov_um_eigs(s.xtx), self.k, grid)
    }

    /// Per-trait tests on `M_Z Y` and `M_Z X` with `n - 2 - q` degrees of freedom.
    pub fn marginal(&self, s: &AdjustedScores) -> Result<Vec<TestOutcome>> {
        self.check_not_confounded(s)?;
        let df = self.n as f64 - 2.0 - self.q as f64;
        marginal_from_cross(&self.per_trait_yy, s.r0tx.as_slice(), s.xt_mz_x, df)
    }
}

pub fn adjusted_ssu(null: &NullFit, x: &GenotypeRecord) -> Result<TestOutcome> {
    null.ssu(&null.scores(x)?)
}

pub fn adjusted_manova(null: &NullFit, x: &GenotypeRecord) -> Result<TestOutcome> {
    null.manova(&null.scores(x)?)
}

pub fn adjusted_usat(null: &NullFit, x: &GenotypeRecord, grid: &WeightGrid) -> Result<TestOutcome> {
    null.usat(&null.scores(x)?, grid)
}

pub fn adjusted_marginal(null: &NullFit, x: &GenotypeRecord) -> Result<Vec<TestOutcome>> {
    null.marginal(&null.scores(x)?)
}
