//! Synthetic genome scans with planted pleiotropic signals.
//!
//! Traits share a compound-symmetric residual correlation. A planted variant
//! moves traits 1 and 2 in opposite directions, along the residual direction
//! with the smallest variance: each trait alone sees a weak effect, while the
//! joint tests see one amplified by `1 / (1 - rho)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::design::CorrelationSpec;
use super::generate::{replicate_rng, simulate_genotype, sym_sqrt};
use crate::error::{Error, Result};

/// One planted association.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSignal {
    /// Position of the variant in the file (0-based).
    pub index: usize,
    /// Per-trait effects.
    pub effects: Vec<f64>,
}

/// Parameters of a synthetic scan dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGwas {
    pub n: usize,
    pub k: usize,
    pub n_variants: usize,
    /// Residual correlation between every pair of traits.
    pub rho: f64,
    pub maf_min: f64,
    pub maf_max: f64,
    /// Fraction of dosages written as `NA`, on every tenth variant.
    pub missing_rate: f64,
    pub planted: Vec<PlantedSignal>,
    pub seed: u64,
}

/// Paths of a written dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub pheno: PathBuf,
    pub geno: PathBuf,
    pub covar: PathBuf,
}

impl SyntheticGwas {
    /// `n_planted` variants, evenly spread, with contrast effects `b (1, -1, 0, ...)`
    /// where `b` gives each single-trait test a noncentrality of `marginal_ncp`
    /// at allele frequency `maf` (residual variance 1).
    pub fn pleiotropic(n: usize, k: usize, n_variants: usize, n_planted: usize, marginal_ncp: f64, seed: u64) -> Self {
        let maf: f64 = 0.3;
        let b = (marginal_ncp / (n as f64 * 2.0 * maf * (1.0 - maf))).sqrt();
        let step = n_variants / n_planted.max(1);
        let planted = (0..n_planted)
            .map(|i| PlantedSignal {
                index: i * step + step / 2,
                effects: (0..k)
                    .map(|j| match j {
                        0 => b,
                        1 => -b,
                        _ => 0.0,
                    })
                    .collect(),
            })
            .collect();
        SyntheticGwas {
            n,
            k,
            n_variants,
            rho: 0.95,
            maf_min: 0.05,
            maf_max: 0.5,
            missing_rate: 0.0,
            planted,
            seed,
        }
    }

    pub fn sample_ids(&self) -> Vec<String> {
        (0..self.n).map(|i| format!("ind{i}")).collect()
    }

    pub fn is_planted(&self, index: usize) -> bool {
        self.planted.iter().any(|p| p.index == index)
    }

    /// Allele frequency and raw dosages of variant `index` (`NaN` = missing).
    pub fn variant(&self, index: usize) -> (f64, Vec<f64>) {
        let mut rng = replicate_rng(self.seed, index as u64);
        let maf = if self.is_planted(index) { 0.3 } else { rng.random_range(self.maf_min..=self.maf_max) };
        let mut x = simulate_genotype(self.n, maf, &mut rng);
        if self.missing_rate > 0.0 && index % 10 == 9 {
            for v in x.iter_mut() {
                if rng.random::<f64>() < self.missing_rate {
                    *v = f64::NAN;
                }
            }
        }
        (maf, x)
    }

    /// Traits `sum_s X_s beta_s' + e` and two covariates (age-like, sex-like)
    /// that shift every trait.
    pub fn traits(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let root = sym_sqrt(&CorrelationSpec::cs(self.rho).matrix(self.k)?)?;
        let mut rng = replicate_rng(self.seed, u64::MAX);
        let mut y = DMatrix::zeros(self.n, self.k);
        let mut z = DMatrix::zeros(self.n, 2);
        let mut e = vec![0.0; self.k];
        for i in 0..self.n {
            for v in e.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let age = 45.0 + 10.0 * rng.sample::<f64, _>(StandardNormal);
            let sex = (rng.random::<f64>() < 0.5) as u8 as f64;
            z[(i, 0)] = age;
            z[(i, 1)] = sex;
            for j in 0..self.k {
                let noise: f64 = (0..self.k).map(|l| root[(j, l)] * e[l]).sum();
                y[(i, j)] = noise + 0.02 * (age - 45.0) + 0.3 * sex;
            }
        }
        for p in &self.planted {
            let (_, x) = self.variant(p.index);
            for i in 0..self.n {
                let xi = if x[i].is_nan() { 0.0 } else { x[i] };
                for j in 0..self.k {
                    y[(i, j)] += p.effects[j] * xi;
                }
            }
        }
        Ok((y, z))
    }

    /// Write `pheno.tsv`, `covar.tsv` and `geno.tsv` into `dir`, creating it if needed.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SyntheticFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SyntheticFiles {
            pheno: dir.join("pheno.tsv"),
            geno: dir.join("geno.tsv"),
            covar: dir.join("covar.tsv"),
        };
        let ids = self.sample_ids();
        let (y, z) = self.traits()?;
        let names: Vec<String> = (1..=self.k).map(|j| format!("trait{j}")).collect();
        write_table(&files.pheno, &ids, &names, &y)?;
        write_table(&files.covar, &ids, &["age".to_string(), "sex".to_string()], &z)?;

        let path = &files.geno;
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::with_capacity(1 << 20, File::create(path).map_err(io)?);
        write!(w, "snp_id\tchrom\tpos").map_err(io)?;
        for id in &ids {
            write!(w, "\t{id}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        let mut line = Vec::with_capacity(self.n * 2 + 64);
        for v in 0..self.n_variants {
            let (_, x) = self.variant(v);
            line.clear();
            let chrom = 1 + v * 22 / self.n_variants.max(1);
            write!(line, "snp{v}\t{chrom}\t{}", 10_000 + 1_000 * v).map_err(io)?;
            for d in x {
                line.push(b'\t');
                if d.is_nan() {
                    line.extend_from_slice(b"NA");
                } else {
                    line.push(b'0' + d as u8);
                }
            }
            line.push(b'\n');
            w.write_all(&line).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(files)
    }
}

fn write_table(path: &Path, ids: &[String], names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "sample_id\t{}", names.join("\t")).map_err(io)?;
    for (i, id) in ids.iter().enumerate() {
        write!(w, "{id}").map_err(io)?;
        for j in 0..m.ncols() {
            write!(w, "\t{}", m[(i, j)]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
