//! File formats: phenotype and covariate tables, streaming genotype
//! dosages, scan results and run configuration.
//!
//! All tables are tab-separated text with a header row. Numbers use a
//! decimal point regardless of locale.

pub mod config;
pub mod genotype;
pub mod report;
pub mod results;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind, ScanConfig, ScanTest};
pub use genotype::{DosageReader, RawVariant};
pub use results::{read_results, ResultRow, ResultsWriter};
pub use table::{parse_covariates, parse_phenotypes, PhenotypeTable};
