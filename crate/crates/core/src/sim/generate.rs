//! Random generation of genotypes, traits and their cross-products.
//!
//! Every statistic in this crate depends on a dataset only through the
//! centered cross-products `Y'Y`, `Y'X` and `X'X`. Besides full `n x K`
//! datasets, this module draws those cross-products directly from their exact
//! joint law. With centered noise `E = Z S'` (rows of `Z` standard normal,
//! `S` the symmetric root of the noise covariance) and `x = X / |X|`,
//! `Z'x = g ~ N(0, I_K)` and `Z'(I - J/n)Z = g g' + W` with
//! `W ~ Wishart_K(n - 2, I)` independent of `g`. A replicate then costs
//! `O(K^2)` draws instead of `O(nK)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, StandardNormal};

use super::design::SimDesign;
use crate::error::{Error, Result};
use crate::model::{center_columns, center_in_place, dot};

/// Deterministic per-replicate generator: stream `stream` of `seed`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Hardy–Weinberg genotypes: 0/1/2 with probabilities `(1-f)^2, 2f(1-f), f^2`.
pub fn simulate_genotype<R: Rng + ?Sized>(n: usize, maf: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| (rng.random::<f64>() < maf) as u8 as f64 + (rng.random::<f64>() < maf) as u8 as f64)
        .collect()
}

/// Symmetric positive-definite square root.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidDesign("noise covariance is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Uncentered `n x K` traits `beta0 + x beta' + e`, rows of `e` drawn from
/// `N(0, D^{1/2} R D^{1/2})`.
pub fn simulate_phenotypes<R: Rng + ?Sized>(x: &[f64], design: &SimDesign, rng: &mut R) -> Result<DMatrix<f64>> {
    let root = sym_sqrt(&design.noise_covariance()?)?;
    let beta = design.beta();
    let (n, k) = (x.len(), design.k);
    let mut y = DMatrix::zeros(n, k);
    let mut z = vec![0.0; k];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for j in 0..k {
            let e: f64 = (0..k).map(|l| root[(j, l)] * z[l]).sum();
            y[(i, j)] = design.beta0 + beta[j] * x[i] + e;
        }
    }
    Ok(y)
}

/// Centered cross-products of one dataset.
#[derive(Debug, Clone)]
pub struct CrossProducts {
    pub n: usize,
    pub xtx: f64,
    pub ytx: DVector<f64>,
    pub yty: DMatrix<f64>,
}

impl CrossProducts {
    /// From a raw genotype vector and raw trait matrix (both centered here).
    pub fn from_data(x: &[f64], y: &DMatrix<f64>) -> Self {
        let mut xc = x.to_vec();
        center_in_place(&mut xc);
        let mut yc = y.clone();
        center_columns(&mut yc);
        let n = x.len();
        let k = y.ncols();
        let ytx = DVector::from_iterator(k, (0..k).map(|j| dot(&yc.as_slice()[j * n..(j + 1) * n], &xc)));
        CrossProducts {
            n,
            xtx: dot(&xc, &xc),
            ytx,
            yty: yc.tr_mul(&yc),
        }
    }
}

/// The random ingredients of one replicate, shared across effect patterns.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub n: usize,
    pub xtx: f64,
    pub g: DVector<f64>,
    pub w: DMatrix<f64>,
}

/// Centered `X'X` of `n` Hardy–Weinberg genotypes, via the genotype counts.
pub fn draw_xtx<R: Rng + ?Sized>(n: usize, maf: f64, rng: &mut R) -> f64 {
    let p2 = maf * maf;
    let p1 = 2.0 * maf * (1.0 - maf);
    let n2 = Binomial::new(n as u64, p2).expect("valid binomial").sample(rng);
    let rest = n as u64 - n2;
    let p1_cond = (p1 / (1.0 - p2)).min(1.0);
    let n1 = Binomial::new(rest, p1_cond).expect("valid binomial").sample(rng);
    let (n1, n2) = (n1 as f64, n2 as f64);
    let sum = n1 + 2.0 * n2;
    (n1 + 4.0 * n2) - sum * sum / n as f64
}

/// `W ~ Wishart_K(df, I)` by the Bartlett decomposition.
pub fn draw_wishart<R: Rng + ?Sized>(k: usize, df: usize, rng: &mut R) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(k, k);
    for i in 0..k {
        let chi = ChiSquared::new((df - i) as f64).expect("positive df").sample(rng);
        l[(i, i)] = chi.sqrt();
        for j in 0..i {
            l[(i, j)] = rng.sample(StandardNormal);
        }
    }
    &l * l.transpose()
}

impl NoiseDraw {
    pub fn draw<R: Rng + ?Sized>(n: usize, k: usize, maf: f64, rng: &mut R) -> Self {
        let xtx = draw_xtx(n, maf, rng);
        let g = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let w = draw_wishart(k, n - 2, rng);
        NoiseDraw { n, xtx, g, w }
    }

    /// Cross-products for effects `beta` and noise root `root`.
    pub fn cross_products(&self, beta: &[f64], root: &DMatrix<f64>) -> CrossProducts {
        let k = self.g.len();
        let b = DVector::from_column_slice(beta);
        let sx = self.xtx.sqrt();
        let sg = root * &self.g;
        let ytx = &b * self.xtx + &sg * sx;
        let noise = root * (&self.w + &self.g * self.g.transpose()) * root.transpose();
        let cross = &b * sg.transpose() * sx;
        let yty = &b * b.transpose() * self.xtx + &cross + cross.transpose() + noise;
        debug_assert_eq!(yty.nrows(), k);
        CrossProducts {
            n: self.n,
            xtx: self.xtx,
            ytx,
            yty,
        }
    }
}

/// How replicates are generated in simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimMode {
    /// Exact draws of the cross-products.
    #[default]
    CrossProducts,
    /// Full genotype and trait matrices.
    FullData,
}
