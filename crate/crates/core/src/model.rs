//! Centered trait and genotype data and the sufficient statistics shared by
//! every test.
//!
//! All tests depend on the data only through `Y'Y` (fixed per dataset),
//! `Y'X` and `X'X` (per variant). [`TraitSummary`] holds the per-dataset
//! part, including the eigenvalues of `Y'Y / (n sigma0^4)`; the eigenvalues of
//! the score covariance for any variant are these scaled by `X'X`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::quadform::EIGEN_ZERO_TOL;

/// Subtract the mean from a vector, returning the centered copy.
pub fn center(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    center_in_place(&mut v);
    v
}

/// Center in place; returns the mean that was removed.
pub fn center_in_place(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= mean;
    }
    mean
}

/// Center every column of a matrix; returns the column means.
pub fn center_columns(m: &mut DMatrix<f64>) -> Vec<f64> {
    let (n, k) = m.shape();
    let mut means = Vec::with_capacity(k);
    for j in 0..k {
        let col = &mut m.as_mut_slice()[j * n..(j + 1) * n];
        means.push(center_in_place(col));
    }
    means
}

/// Minor allele frequency `min(m, 1 - m)` with `m = mean(dosage) / 2`.
/// `NaN` entries are treated as missing and skipped; an all-missing vector
/// has frequency 0.
pub fn compute_maf(dosage: &[f64]) -> Result<f64> {
    if dosage.is_empty() {
        return Err(Error::InvalidInput("empty dosage vector".into()));
    }
    let (sum, count) = dosage
        .iter()
        .filter(|v| !v.is_nan())
        .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
    if count == 0 {
        return Ok(0.0);
    }
    let m = sum / (2.0 * count as f64);
    Ok(m.min(1.0 - m).clamp(0.0, 0.5))
}

/// `n x K` matrix of centered quantitative traits.
#[derive(Debug, Clone)]
pub struct TraitMatrix {
    values: DMatrix<f64>,
    trait_names: Vec<String>,
    means: Vec<f64>,
}

impl TraitMatrix {
    /// Validate and center `values` (columns are traits).
    pub fn new(mut values: DMatrix<f64>, trait_names: Vec<String>) -> Result<Self> {
        let (n, k) = values.shape();
        if k == 0 {
            return Err(Error::InvalidInput("trait matrix has no columns".into()));
        }
        if trait_names.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} trait names for {k} trait columns",
                trait_names.len()
            )));
        }
        if n <= k {
            return Err(Error::InvalidInput(format!(
                "need more samples than traits (n = {n}, K = {k})"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trait matrix has missing or non-finite entries".into()));
        }
        let means = center_columns(&mut values);
        Ok(TraitMatrix {
            values,
            trait_names,
            means,
        })
    }

    /// Build from trait columns, naming them `trait_1..trait_K`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("trait columns differ in length".into()));
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        let names = (1..=columns.len()).map(|j| format!("trait_{j}")).collect();
        TraitMatrix::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
    pub fn k(&self) -> usize {
        self.values.ncols()
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn trait_names(&self) -> &[String] {
        &self.trait_names
    }
    /// Column means removed at construction.
    pub fn means(&self) -> &[f64] {
        &self.means
    }
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// `Y'Y`.
    pub fn cross_product(&self) -> DMatrix<f64> {
        self.values.tr_mul(&self.values)
    }

    /// `Y'x` for a length-`n` vector.
    pub fn ytx(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.k(), (0..self.k()).map(|j| dot(self.column(j), x)))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators let the compiler vectorize without reassociation flags
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// One variant: identifiers, centered (mean-imputed) dosage and allele frequency.
#[derive(Debug, Clone)]
pub struct GenotypeRecord {
    pub snp_id: String,
    pub chrom: String,
    pub pos: u64,
    dosage: Vec<f64>,
    maf: f64,
    n_missing: usize,
}

impl GenotypeRecord {
    /// Build from raw dosages in `[0, 2]`, with `NaN` marking missing calls.
    /// The allele frequency is taken over observed calls; missing calls are
    /// then set to the observed mean and the vector is centered.
    pub fn from_raw(
        snp_id: impl Into<String>,
        chrom: impl Into<String>,
        pos: u64,
        mut dosage: Vec<f64>,
    ) -> Result<Self> {
        if let Some(bad) = dosage.iter().find(|v| !v.is_nan() && !(0.0..=2.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("dosage {bad} outside [0, 2]")));
        }
        let maf = compute_maf(&dosage)?;
        let (sum, observed) = dosage
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
        let n_missing = dosage.len() - observed;
        let mean = if observed > 0 { sum / observed as f64 } else { 0.0 };
        for v in dosage.iter_mut() {
            *v = if v.is_nan() { 0.0 } else { *v - mean };
        }
        Ok(GenotypeRecord {
            snp_id: snp_id.into(),
            chrom: chrom.into(),
            pos,
            dosage,
            maf,
            n_missing,
        })
    }

    /// Anonymous record from raw dosages.
    pub fn from_dosage(dosage: Vec<f64>) -> Result<Self> {
        GenotypeRecord::from_raw("", "", 0, dosage)
    }

    /// Centered dosage.
    pub fn dosage(&self) -> &[f64] {
        &self.dosage
    }
    pub fn maf(&self) -> f64 {
        self.maf
    }
    pub fn n(&self) -> usize {
        self.dosage.len()
    }
    pub fn n_missing(&self) -> usize {
        self.n_missing
    }
    /// `X'X` of the centered dosage.
    pub fn xtx(&self) -> f64 {
        dot(&self.dosage, &self.dosage)
    }
}

/// Divisor of the pooled null variance `sigma0^2 = tr(Y'Y) / divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaDivisor {
    /// `K (n - 1)`; used without covariates.
    SampleKnm1,
    /// `n K`; used for covariate-adjusted residuals.
    MleKn,
}

impl SigmaDivisor {
    pub fn value(self, n: usize, k: usize) -> f64 {
        match self {
            SigmaDivisor::SampleKnm1 => (k * (n - 1)) as f64,
            SigmaDivisor::MleKn => (n * k) as f64,
        }
    }
}

/// Per-dataset precomputation: `Y'Y`, `sigma0^2` and the eigenvalues of
/// `Y'Y / (n sigma0^4)`. Immutable and shareable across variant workers.
#[derive(Debug, Clone)]
pub struct TraitSummary {
    n: usize,
    k: usize,
    yty: DMatrix<f64>,
    sigma0_sq: f64,
    base_eigs: Vec<f64>,
}

impl TraitSummary {
    /// From a centered cross-product matrix `Y'Y` over `n` samples.
    pub fn new(yty: DMatrix<f64>, n: usize, divisor: SigmaDivisor) -> Result<Self> {
        let k = yty.nrows();
        if k == 0 || yty.ncols() != k {
            return Err(Error::InvalidInput("Y'Y must be a nonempty square matrix".into()));
        }
        if n <= k {
            return Err(Error::InvalidInput(format!(
                "need more samples than traits (n = {n}, K = {k})"
            )));
        }
        if yty.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateTraits("Y'Y has non-finite entries".into()));
        }
        let trace = yty.trace();
        if !(trace > 0.0) {
            return Err(Error::DegenerateTraits("all traits are constant".into()));
        }
        let sigma0_sq = trace / divisor.value(n, k);
        let scaled = &yty / (n as f64 * sigma0_sq * sigma0_sq);
        let mut eigs: Vec<f64> = SymmetricEigen::new(scaled).eigenvalues.iter().cloned().collect();
        eigs.sort_by(|a, b| b.total_cmp(a));
        let max = eigs[0];
        if eigs.iter().any(|&v| v < -1e-8 * max) {
            return Err(Error::DegenerateTraits("Y'Y is not positive semi-definite".into()));
        }
        for v in eigs.iter_mut() {
            if *v < EIGEN_ZERO_TOL * max {
                *v = 0.0;
            }
        }
        Ok(TraitSummary {
            n,
            k,
            yty,
            sigma0_sq,
            base_eigs: eigs,
        })
    }

    pub fn from_traits(y: &TraitMatrix) -> Result<Self> {
        TraitSummary::new(y.cross_product(), y.n(), SigmaDivisor::SampleKnm1)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn yty(&self) -> &DMatrix<f64> {
        &self.yty
    }
    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }
    /// Eigenvalues of `Y'Y / (n sigma0^4)`, descending.
    pub fn base_eigs(&self) -> &[f64] {
        &self.base_eigs
    }

    /// Eigenvalues of the score covariance `X'X Y'Y / (n sigma0^4)`.
    pub fn cov_um_eigs(&self, xtx: f64) -> Vec<f64> {
        self.base_eigs.iter().map(|c| c * xtx).collect()
    }

    /// Sufficient statistics for one variant given `Y'X` and `X'X`.
    pub fn stats(&self, ytx: DVector<f64>, xtx: f64) -> Result<SufficientStats> {
        let k = self.k;
        if ytx.len() != k {
            return Err(Error::InvalidInput(format!("Y'X has length {}, expected {k}", ytx.len())));
        }
        if !(xtx > MONOMORPHIC_TOL) {
            return Err(Error::MonomorphicVariant);
        }
        let beta_hat = &ytx / xtx;
        let h_mat = &ytx * ytx.transpose() / xtx;
        let e_mat = &self.yty - &h_mat;
        let chol = e_mat
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DegenerateTraits("error SSCP is not positive definite".into()))?;
        let l = chol.l();
        for j in 0..k {
            if !(l[(j, j)] * l[(j, j)] > 1e-10 * self.yty[(j, j)]) {
                return Err(Error::DegenerateTraits(format!(
                    "error SSCP is numerically singular in trait {}",
                    j + 1
                )));
            }
        }
        let w = l
            .solve_lower_triangular(&ytx)
            .ok_or_else(|| Error::DegenerateTraits("error SSCP triangular solve failed".into()))?;
        let wilks_q = w.norm_squared() / xtx;
        Ok(SufficientStats {
            n: self.n,
            k,
            xtx,
            ytx,
            beta_hat,
            h_mat,
            e_mat,
            sigma0_sq: self.sigma0_sq,
            cov_um_eigs: self.cov_um_eigs(xtx),
            wilks_q,
        })
    }
}

/// `X'X` at or below this value is treated as a monomorphic variant.
pub const MONOMORPHIC_TOL: f64 = 1e-10;

/// Everything the MANOVA, SSU and USAT statistics need for one variant.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub n: usize,
    pub k: usize,
    /// `X'X` of the centered genotype.
    pub xtx: f64,
    /// `Y'X`.
    pub ytx: DVector<f64>,
    /// `Y'X / X'X`.
    pub beta_hat: DVector<f64>,
    /// Hypothesis SSCP `beta_hat X'X beta_hat'`.
    pub h_mat: DMatrix<f64>,
    /// Error SSCP `Y'Y - H`.
    pub e_mat: DMatrix<f64>,
    pub sigma0_sq: f64,
    /// Eigenvalues of `Cov(U_M) = X'X Y'Y / (n sigma0^4)`, descending, clamped at 0.
    pub cov_um_eigs: Vec<f64>,
    /// `X'X beta_hat' E^{-1} beta_hat`, so that `|H + E| / |E| = 1 + wilks_q`.
    pub wilks_q: f64,
}

impl SufficientStats {
    /// Wilks' lambda `|E| / |H + E|`.
    pub fn wilks_lambda(&self) -> f64 {
        1.0 / (1.0 + self.wilks_q)
    }

    /// Score vector `U_M = Y'X / sigma0^2`.
    pub fn score(&self) -> DVector<f64> {
        &self.ytx / self.sigma0_sq
    }
}

/// Sufficient statistics for one variant against a trait matrix.
pub fn build_sufficient_stats(y: &TraitMatrix, x: &GenotypeRecord) -> Result<SufficientStats> {
    if x.n() != y.n() {
        return Err(Error::InvalidInput(format!(
            "genotype has {} samples, traits have {}",
            x.n(),
            y.n()
        )));
    }
    TraitSummary::from_traits(y)?.stats(y.ytx(x.dosage()), x.xtx())
}
