//! Genome scan engine.
//!
//! One reader thread parses the dosage file and hands chunks of variants to
//! the coordinator through a bounded channel. Each chunk is tested in
//! parallel on a rayon pool and its rows are collected in input order, so
//! the coordinator, the sole owner of the output file, writes identical
//! bytes for any number of threads.
//!
//! Everything that depends only on the traits (the `Y'Y` eigendecomposition
//! and, with covariates, the null-model fit) is computed once; the
//! score-covariance spectrum of a variant is that fixed spectrum scaled by
//! its `X'X`.

use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::assoc::{fisher_combine, manova_test, marginal_from_cross, minp_combine, ssu_test, usat_test, TestOutcome, WeightGrid};
use crate::covariates::{fit_null, CovariateMatrix, CovariateMode, NullFit};
use crate::error::{Error, Result};
use crate::io::config::{ScanConfig, ScanTest};
use crate::io::genotype::{DosageReader, RawVariant};
use crate::io::results::{ResultRow, ResultsWriter, REASON_OK};
use crate::io::table::{parse_covariates, parse_phenotypes};
use crate::model::{GenotypeRecord, TraitMatrix, TraitSummary};

/// Which tests run, resolved from the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Selection {
    manova: bool,
    ssu: bool,
    usat: bool,
    fisher: bool,
    minp: bool,
    marginal: bool,
}

impl Selection {
    fn from_tests(tests: &[ScanTest]) -> Self {
        let has = |t| tests.contains(&t);
        Selection {
            manova: has(ScanTest::Manova),
            ssu: has(ScanTest::Ssu),
            usat: has(ScanTest::Usat),
            fisher: has(ScanTest::Fisher),
            minp: has(ScanTest::MinP),
            marginal: has(ScanTest::Marginal),
        }
    }

    fn needs_marginal(&self) -> bool {
        self.fisher || self.minp || self.marginal
    }
}

/// Per-dataset state shared by all variants.
enum Model {
    Plain { traits: TraitMatrix, summary: TraitSummary, yty_diag: Vec<f64> },
    Adjusted(Box<NullFit>),
}

/// Tests single variants against a fixed set of traits.
pub struct ScanEngine {
    model: Model,
    select: Selection,
    grid: WeightGrid,
    maf_min: f64,
    max_missing: f64,
    k: usize,
    n: usize,
}

/// Why a variant produced no row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    LowMaf,
    TooManyMissing,
}

/// Outcome of one variant.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantResult {
    Row(Box<ResultRow>),
    Skipped(SkipReason),
}

/// Keep the first error's tag as the row reason.
fn note<T>(reason: &mut Option<&'static str>, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            reason.get_or_insert(e.reason_tag());
            None
        }
    }
}

impl ScanEngine {
    /// Without covariates; `traits` must be centered (as built by [`TraitMatrix::new`]).
    pub fn new(traits: TraitMatrix, config: &ScanConfig) -> Result<Self> {
        let summary = TraitSummary::from_traits(&traits)?;
        let yty_diag = (0..traits.k()).map(|j| summary.yty()[(j, j)]).collect();
        Ok(Self::build(
            Model::Plain {
                summary,
                yty_diag,
                traits: traits.clone(),
            },
            traits.n(),
            traits.k(),
            config,
        ))
    }

    /// With covariates, fitting the null model once.
    pub fn with_covariates(traits: &TraitMatrix, z: &CovariateMatrix, mode: CovariateMode, config: &ScanConfig) -> Result<Self> {
        let fit = fit_null(traits, z, mode)?;
        Ok(Self::build(Model::Adjusted(Box::new(fit)), traits.n(), traits.k(), config))
    }

    fn build(model: Model, n: usize, k: usize, config: &ScanConfig) -> Self {
        ScanEngine {
            model,
            select: Selection::from_tests(&config.tests),
            grid: config.weight_grid.clone(),
            maf_min: config.maf_min,
            max_missing: config.max_missing,
            k,
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Apply the filters and run the selected tests on one variant.
    pub fn test_variant(&self, v: RawVariant) -> Result<VariantResult> {
        if v.dosage.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "variant {} has {} dosages for {} samples",
                v.snp_id,
                v.dosage.len(),
                self.n
            )));
        }
        if v.missing_fraction() > self.max_missing {
            log::debug!("{}: skipped, {:.1}% missing", v.snp_id, 100.0 * v.missing_fraction());
            return Ok(VariantResult::Skipped(SkipReason::TooManyMissing));
        }
        let rec = v.into_record()?;
        if rec.maf() < self.maf_min {
            log::debug!("{}: skipped, maf {:.3e}", rec.snp_id, rec.maf());
            return Ok(VariantResult::Skipped(SkipReason::LowMaf));
        }
        Ok(VariantResult::Row(Box::new(self.test_record(&rec))))
    }

    /// Run the selected tests on a prepared record. Failures leave `NA`
    /// values and set the reason column.
    pub fn test_record(&self, rec: &GenotypeRecord) -> ResultRow {
        let mut row = ResultRow::empty(&rec.snp_id, &rec.chrom, rec.pos, rec.maf(), rec.n() - rec.n_missing(), self.k);
        let mut reason = None;
        let s = self.select;
        let (manova, ssu, usat, marginal) = match &self.model {
            Model::Plain { traits, summary, yty_diag } => {
                let stats = note(&mut reason, summary.stats(traits.ytx(rec.dosage()), rec.xtx()));
                match stats {
                    None => (None, None, None, None),
                    Some(st) => (
                        s.manova.then(|| note(&mut reason, manova_test(&st))).flatten(),
                        s.ssu.then(|| note(&mut reason, ssu_test(&st))).flatten(),
                        s.usat.then(|| note(&mut reason, usat_test(&st, &self.grid))).flatten(),
                        s.needs_marginal()
                            .then(|| note(&mut reason, marginal_from_cross(yty_diag, st.ytx.as_slice(), st.xtx, self.n as f64 - 2.0)))
                            .flatten(),
                    ),
                }
            }
            Model::Adjusted(fit) => match note(&mut reason, fit.scores(rec)) {
                None => (None, None, None, None),
                Some(sc) => (
                    s.manova.then(|| note(&mut reason, fit.manova(&sc))).flatten(),
                    s.ssu.then(|| note(&mut reason, fit.ssu(&sc))).flatten(),
                    s.usat.then(|| note(&mut reason, fit.usat(&sc, &self.grid))).flatten(),
                    s.needs_marginal().then(|| note(&mut reason, fit.marginal(&sc))).flatten(),
                ),
            },
        };
        let p = |o: &Option<TestOutcome>| o.as_ref().map(|o| o.p_value);
        row.p_manova = p(&manova);
        row.t_manova = manova.as_ref().map(|o| o.statistic);
        row.p_ssu = p(&ssu);
        row.t_ssu = ssu.as_ref().map(|o| o.statistic);
        row.p_usat = p(&usat);
        if let Some(d) = usat.as_ref().and_then(|o| o.usat_detail()) {
            row.usat_omega_star = Some(d.omega_star);
            row.t_usat = Some(d.t_usat);
        }
        if let Some(m) = marginal {
            let pv: Vec<f64> = m.iter().map(|o| o.p_value).collect();
            if s.marginal {
                row.p_traits = pv.iter().map(|&v| Some(v)).collect();
            }
            if s.fisher {
                row.p_fisher = note(&mut reason, fisher_combine(&pv)).map(|o| o.p_value);
            }
            if s.minp {
                row.p_minp = note(&mut reason, minp_combine(&pv)).map(|o| o.p_value);
            }
        }
        row.reason = reason.unwrap_or(REASON_OK).to_string();
        row
    }
}

/// Counters and timing of a finished scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    pub variants_read: usize,
    pub rows_written: usize,
    pub skipped_maf: usize,
    pub skipped_missing: usize,
    /// Rows whose reason is not `ok`.
    pub failed: usize,
    pub elapsed: Duration,
    pub threads: usize,
}

impl ScanSummary {
    pub fn variants_per_second(&self) -> f64 {
        self.variants_read as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

/// Run a scan as configured, writing the results file atomically.
///
/// Configuration, phenotype, covariate and header errors abort before any
/// variant is tested; a malformed genotype row aborts the scan and leaves
/// no output file.
pub fn run_scan(config: &ScanConfig) -> Result<ScanSummary> {
    config.validate()?;
    let start = Instant::now();
    let pheno = parse_phenotypes(&config.pheno_path)?;
    let engine = match &config.covar_path {
        Some(p) => {
            let z = parse_covariates(p, &pheno.sample_ids)?;
            ScanEngine::with_covariates(&pheno.traits, &z, config.covariate_mode, config)?
        }
        None => ScanEngine::new(pheno.traits, config)?,
    };
    let reader = DosageReader::open(&config.geno_path, &pheno.sample_ids)?;
    let threads = config.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut writer = ResultsWriter::create(&config.out_path, engine.k())?;

    let chunk_size = config.chunk_size;
    let (tx, rx) = sync_channel::<Result<Vec<RawVariant>>>(2 * threads + 2);
    let producer = std::thread::spawn(move || {
        let mut chunk = Vec::with_capacity(chunk_size);
        for item in reader {
            match item {
                Ok(v) => {
                    chunk.push(v);
                    if chunk.len() == chunk_size {
                        let full = std::mem::replace(&mut chunk, Vec::with_capacity(chunk_size));
                        if tx.send(Ok(full)).is_err() {
                            return;
                        }
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        }
        if !chunk.is_empty() {
            let _ = tx.send(Ok(chunk));
        }
    });

    let mut summary = ScanSummary {
        variants_read: 0,
        rows_written: 0,
        skipped_maf: 0,
        skipped_missing: 0,
        failed: 0,
        elapsed: Duration::ZERO,
        threads,
    };
    let mut outcome = Ok(());
    for chunk in rx {
        let chunk = match chunk {
            Ok(c) => c,
            Err(e) => {
                outcome = Err(e);
                break;
            }
        };
        summary.variants_read += chunk.len();
        let results: Vec<Result<VariantResult>> =
            pool.install(|| chunk.into_par_iter().map(|v| engine.test_variant(v)).collect());
        for r in results {
            match r {
                Ok(VariantResult::Row(row)) => {
                    if row.reason != REASON_OK {
                        summary.failed += 1;
                    }
                    if let Err(e) = writer.write_row(&row) {
                        outcome = Err(e);
                        break;
                    }
                }
                Ok(VariantResult::Skipped(SkipReason::LowMaf)) => summary.skipped_maf += 1,
                Ok(VariantResult::Skipped(SkipReason::TooManyMissing)) => summary.skipped_missing += 1,
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        if outcome.is_err() {
            break;
        }
    }
    let _ = producer.join();
    outcome?;
    summary.rows_written = writer.rows_written();
    writer.finish()?;
    summary.elapsed = start.elapsed();
    log::info!(
        "scanned {} variants ({} rows, {} low maf, {} high missingness, {} failed) in {:.2?}: {:.0} variants/s on {} threads",
        summary.variants_read,
        summary.rows_written,
        summary.skipped_maf,
        summary.skipped_missing,
        summary.failed,
        summary.elapsed,
        summary.variants_per_second(),
        threads
    );
    Ok(summary)
}
