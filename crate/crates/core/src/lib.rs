//! Multivariate single-variant association tests for correlated quantitative
//! traits: MANOVA (Wilks' lambda), the SSU score test, Fisher and minP
//! combinations of per-trait p-values, and the unified USAT statistic that
//! takes the best of a grid of MANOVA/SSU mixtures.
//!
//! Also contains the simulation harness for type-I, power and large-sample
//! determinant checks, plus the streaming scan engine behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod covariates;
pub mod distributions;
pub mod error;
pub mod io;
pub mod model;
pub mod quadform;
pub mod quadrature;
pub mod scan;
pub mod sim;

pub use assoc::{
    fisher_combine, manova_test, marginal_tests, minp_combine, omega_eigs, ssu_test, usat_pvalue,
    usat_test, Detail, Method, TestOutcome, UsatDetail, WeightGrid,
};
pub use error::{Error, Result};
pub use model::{
    build_sufficient_stats, center, compute_maf, GenotypeRecord, SigmaDivisor, SufficientStats,
    TraitMatrix, TraitSummary,
};
pub use quadform::{liu_fit, qf_mc_sample, qf_quantile, qf_survival, ssu_params, QuadFormDist, SsuNullParams};
