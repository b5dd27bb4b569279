//! Run configuration in TOML.
//!
//! A scan config is a flat table of keys. An experiment config holds global
//! keys plus one `[[design]]` table per simulated setting, and an optional
//! `[theorems]` table.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::assoc::WeightGrid;
use crate::covariates::CovariateMode;
use crate::error::{Error, Result};
use crate::sim::{CorrKind, CorrelationSpec, SimDesign, SimMode, TestKind, TheoremConfig};

/// Tests available in a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanTest {
    Manova,
    Ssu,
    Usat,
    Fisher,
    MinP,
    Marginal,
}

impl ScanTest {
    pub const ALL: [ScanTest; 6] = [
        ScanTest::Manova,
        ScanTest::Ssu,
        ScanTest::Usat,
        ScanTest::Fisher,
        ScanTest::MinP,
        ScanTest::Marginal,
    ];
}

impl FromStr for ScanTest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "manova" => Ok(ScanTest::Manova),
            "ssu" => Ok(ScanTest::Ssu),
            "usat" => Ok(ScanTest::Usat),
            "fisher" => Ok(ScanTest::Fisher),
            "minp" => Ok(ScanTest::MinP),
            "marginal" => Ok(ScanTest::Marginal),
            other => Err(Error::Config(format!("unknown test '{other}'"))),
        }
    }
}

impl fmt::Display for ScanTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanTest::Manova => "manova",
            ScanTest::Ssu => "ssu",
            ScanTest::Usat => "usat",
            ScanTest::Fisher => "fisher",
            ScanTest::MinP => "minp",
            ScanTest::Marginal => "marginal",
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn toml_err(path: Option<&Path>, e: toml::de::Error) -> Error {
    match path {
        Some(p) => Error::Config(format!("{}: {e}", p.display())),
        None => Error::Config(e.to_string()),
    }
}

fn parse_list<T: FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.parse()).collect()
}

fn grid_from(weights: Option<Vec<f64>>) -> Result<WeightGrid> {
    match weights {
        Some(w) => WeightGrid::new(w).map_err(|e| Error::Config(e.to_string())),
        None => Ok(WeightGrid::default()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    pheno_path: PathBuf,
    geno_path: PathBuf,
    covar_path: Option<PathBuf>,
    out_path: PathBuf,
    tests: Option<Vec<String>>,
    maf_min: Option<f64>,
    max_missing: Option<f64>,
    weight_grid: Option<Vec<f64>>,
    threads: Option<usize>,
    covariate_mode: Option<String>,
    chunk_size: Option<usize>,
}

/// Genome scan settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub pheno_path: PathBuf,
    pub geno_path: PathBuf,
    pub covar_path: Option<PathBuf>,
    pub out_path: PathBuf,
    pub tests: Vec<ScanTest>,
    /// Variants with a minor allele frequency below this are skipped.
    pub maf_min: f64,
    /// Variants with a larger fraction of missing dosages are skipped.
    pub max_missing: f64,
    pub weight_grid: WeightGrid,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub covariate_mode: CovariateMode,
    /// Variants per unit of parallel work.
    pub chunk_size: usize,
}

impl ScanConfig {
    /// Defaults for everything but the paths.
    pub fn new(pheno: impl Into<PathBuf>, geno: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        ScanConfig {
            pheno_path: pheno.into(),
            geno_path: geno.into(),
            covar_path: None,
            out_path: out.into(),
            tests: ScanTest::ALL.to_vec(),
            maf_min: 0.01,
            max_missing: 0.1,
            weight_grid: WeightGrid::default(),
            threads: None,
            covariate_mode: CovariateMode::Shared,
            chunk_size: 256,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_raw(toml::from_str(s).map_err(|e| toml_err(None, e))?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_raw(toml::from_str(&read_text(path)?).map_err(|e| toml_err(Some(path), e))?)
    }

    fn from_raw(r: RawScan) -> Result<Self> {
        let mut c = ScanConfig::new(r.pheno_path, r.geno_path, r.out_path);
        c.covar_path = r.covar_path;
        if let Some(t) = r.tests {
            c.tests = parse_list(&t)?;
        }
        if let Some(v) = r.maf_min {
            c.maf_min = v;
        }
        if let Some(v) = r.max_missing {
            c.max_missing = v;
        }
        c.weight_grid = grid_from(r.weight_grid)?;
        c.threads = r.threads;
        if let Some(m) = r.covariate_mode {
            c.covariate_mode = m.parse()?;
        }
        if let Some(v) = r.chunk_size {
            c.chunk_size = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.maf_min) {
            return Err(Error::Config(format!("maf_min = {} outside [0, 0.5)", self.maf_min)));
        }
        if !(0.0..=1.0).contains(&self.max_missing) {
            return Err(Error::Config(format!("max_missing = {} outside [0, 1]", self.max_missing)));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("no tests selected".into()));
        }
        if self.threads == Some(0) || self.chunk_size == 0 {
            return Err(Error::Config("threads and chunk_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Null replicates; rejection rates at fixed levels.
    Type1,
    /// Empirical power over numbers of associated traits.
    Power,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    name: Option<String>,
    n: usize,
    k: usize,
    maf: Option<f64>,
    beta0: Option<f64>,
    effect_size: Option<f64>,
    h2_fraction: Option<f64>,
    total_var: Option<f64>,
    residual_var: Option<f64>,
    corr: Option<String>,
    rho: Option<f64>,
    block_fraction: Option<f64>,
    replicates: Option<usize>,
    n_assoc: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: Option<String>,
    tests: Option<Vec<String>>,
    alphas: Option<Vec<f64>>,
    level: Option<f64>,
    mode: Option<String>,
    weight_grid: Option<Vec<f64>>,
    seed: Option<u64>,
    replicates: Option<usize>,
    #[serde(default)]
    design: Vec<RawDesign>,
    theorems: Option<TheoremConfig>,
}

/// One simulated setting.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignEntry {
    pub name: String,
    pub design: SimDesign,
    /// Numbers of associated traits for power curves.
    pub n_assoc: Vec<usize>,
}

/// Simulation experiment: a list of designs sharing tests and levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub tests: Vec<TestKind>,
    pub alphas: Vec<f64>,
    pub level: f64,
    pub mode: SimMode,
    pub weight_grid: WeightGrid,
    pub seed: u64,
    pub designs: Vec<DesignEntry>,
    pub theorems: Option<TheoremConfig>,
}

/// Seed of design `index` derived from the experiment seed.
pub fn design_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_raw(toml::from_str(s).map_err(|e| toml_err(None, e))?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_raw(toml::from_str(&read_text(path)?).map_err(|e| toml_err(Some(path), e))?)
    }

    fn from_raw(r: RawExperiment) -> Result<Self> {
        let kind = match r.kind.as_deref().unwrap_or("type1") {
            "type1" => ExperimentKind::Type1,
            "power" => ExperimentKind::Power,
            other => return Err(Error::Config(format!("kind must be 'type1' or 'power', got '{other}'"))),
        };
        let mode = match r.mode.as_deref().unwrap_or("cross_products") {
            "cross_products" => SimMode::CrossProducts,
            "full_data" => SimMode::FullData,
            other => return Err(Error::Config(format!("mode must be 'cross_products' or 'full_data', got '{other}'"))),
        };
        let tests = match r.tests {
            Some(t) => parse_list(&t)?,
            None => TestKind::ALL.to_vec(),
        };
        let seed = r.seed.unwrap_or(1);
        let mut designs = Vec::with_capacity(r.design.len());
        for (i, d) in r.design.into_iter().enumerate() {
            let maf = d.maf.unwrap_or(0.2);
            let total_var = d.total_var.unwrap_or(10.0);
            let effect_size = match (d.effect_size, d.h2_fraction) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config("give effect_size or h2_fraction, not both".into()))
                }
                (Some(b), None) => b,
                (None, Some(h)) => crate::sim::effect_from_variance_explained(h, total_var, maf),
                (None, None) => 0.0,
            };
            let kind: CorrKind = d.corr.as_deref().unwrap_or("cs").parse()?;
            let corr = CorrelationSpec {
                kind,
                rho: d.rho.unwrap_or(0.0),
                block_fraction: d.block_fraction.unwrap_or(0.8),
            };
            let replicates = d.replicates.or(r.replicates).unwrap_or(1000);
            let mut design = SimDesign::null(d.n, d.k, maf, corr, replicates, design_seed(seed, i));
            design.beta0 = d.beta0.unwrap_or(1.0);
            design.total_var = total_var;
            design.residual_var = d.residual_var;
            design.effect_size = effect_size;
            design.assoc_pattern = vec![1.0; d.k];
            let name = d.name.unwrap_or_else(|| format!("K{}_{}{}", d.k, kind, corr.rho));
            let n_assoc = d.n_assoc.unwrap_or_else(|| (0..=d.k).collect());
            design
                .validate()
                .map_err(|e| Error::Config(format!("design '{name}': {e}")))?;
            designs.push(DesignEntry { name, design, n_assoc });
        }
        let c = ExperimentConfig {
            kind,
            tests,
            alphas: r.alphas.unwrap_or_else(|| vec![0.01, 0.05]),
            level: r.level.unwrap_or(0.05),
            mode,
            weight_grid: grid_from(r.weight_grid)?,
            seed,
            designs,
            theorems: r.theorems,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("levels must lie in (0, 1]".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("no tests selected".into()));
        }
        Ok(())
    }

    /// Apply command-line overrides: a new base seed and/or replicate count.
    pub fn override_run(&mut self, seed: Option<u64>, replicates: Option<usize>) {
        if let Some(s) = seed {
            self.seed = s;
            for (i, d) in self.designs.iter_mut().enumerate() {
                d.design.seed = design_seed(s, i);
            }
            if let Some(t) = self.theorems.as_mut() {
                t.seed = s;
            }
        }
        if let Some(r) = replicates {
            for d in &mut self.designs {
                d.design.replicates = r;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_defaults() {
        let c = ScanConfig::from_toml_str("pheno_path='p'\ngeno_path='g'\nout_path='o'\n").unwrap();
        assert_eq!(c.maf_min, 0.01);
        assert_eq!(c.max_missing, 0.1);
        assert_eq!(c.weight_grid.len(), 11);
        assert_eq!(c.tests.len(), 6);
        assert_eq!(c.covariate_mode, CovariateMode::Shared);
        assert!(c.covar_path.is_none());
    }

    #[test]
    fn scan_rejects_bad_values() {
        let base = "pheno_path='p'\ngeno_path='g'\nout_path='o'\n";
        for extra in [
            "maf_min = 0.5",
            "maf_min = -0.1",
            "weight_grid = [0.1, 1.0]",
            "weight_grid = [0.0, 0.5]",
            "tests = ['tates']",
            "covariate_mode = 'joint'",
            "threads = 0",
            "unknown_key = 1",
        ] {
            let r = ScanConfig::from_toml_str(&format!("{base}{extra}\n"));
            assert!(matches!(r, Err(Error::Config(_))), "{extra}: {r:?}");
        }
        assert!(matches!(ScanConfig::from_toml_str("pheno_path='p'\n"), Err(Error::Config(_))));
    }

    #[test]
    fn experiment_designs() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            kind = "power"
            tests = ["manova", "ssu", "usat"]
            seed = 9
            replicates = 500
            [[design]]
            n = 400
            k = 10
            rho = 0.6
            h2_fraction = 0.005
            [[design]]
            name = "ar"
            n = 400
            k = 5
            corr = "ar1"
            rho = 0.3
            effect_size = 0.3
            replicates = 50
            n_assoc = [0, 5]
            "#,
        )
        .unwrap();
        assert_eq!(c.kind, ExperimentKind::Power);
        assert_eq!(c.designs.len(), 2);
        let d0 = &c.designs[0];
        assert!((d0.design.effect_size - 0.395).abs() < 5e-4);
        assert_eq!(d0.design.replicates, 500);
        assert_eq!(d0.n_assoc, (0..=10).collect::<Vec<_>>());
        assert_eq!(c.designs[1].design.corr.kind, CorrKind::Ar1);
        assert_eq!(c.designs[1].design.replicates, 50);
        assert_ne!(d0.design.seed, c.designs[1].design.seed);
        let mut c2 = c.clone();
        c2.override_run(Some(10), Some(10));
        assert!(c2.designs.iter().all(|d| d.design.replicates == 10));
        assert_ne!(c2.designs[0].design.seed, d0.design.seed);
    }

    #[test]
    fn experiment_rejects_invalid_design() {
        let r = ExperimentConfig::from_toml_str("[[design]]\nn = 100\nk = 3\nrho = -0.9\n");
        assert!(matches!(r, Err(Error::Config(_))));
        let r = ExperimentConfig::from_toml_str("[[design]]\nn = 100\nk = 3\nrho = 0.2\ncorr = 'xyz'\n");
        assert!(r.is_err());
    }

    #[test]
    fn theorem_section_with_defaults() {
        let c = ExperimentConfig::from_toml_str("[theorems]\nreps = 5\nsweep_ks = [2]\n").unwrap();
        let t = c.theorems.unwrap();
        assert_eq!(t.reps, 5);
        assert_eq!(t.sweep_ks, [2]);
        assert_eq!(t.n, 100_000);
    }
}
