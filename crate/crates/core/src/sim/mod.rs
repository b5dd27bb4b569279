//! Simulation harness: data-generating designs, type-I and power studies,
//! and checks of the asymptotic MANOVA determinant limits.

pub mod design;
pub mod generate;
pub mod gwas;
pub mod study;
pub mod theorems;

pub use design::{effect_from_variance_explained, first_u_pattern, CorrKind, CorrelationSpec, SimDesign};
pub use generate::{
    draw_wishart, draw_xtx, replicate_rng, simulate_genotype, simulate_phenotypes, sym_sqrt, CrossProducts, NoiseDraw,
    SimMode,
};
pub use gwas::{PlantedSignal, SyntheticFiles, SyntheticGwas};
pub use study::{
    evaluate_tests, quantile, run_power_study, run_type1_study, PowerRow, PowerTable, TestKind, TestValue, Type1Row,
    Type1Table,
};
pub use theorems::{
    block_limits, complete_limit, partial_exceeds_complete, partial_limit, two_trait_det_gap, verify_theorem_limits,
    LimitRow, SignRow, TheoremConfig, TheoremReport,
};
