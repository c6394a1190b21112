//! Self-Validated Ensemble Models (SVEM) with a randomized-permutation
//! whole-model test.
//!
//! The library fits fractional-weight bootstrap ensembles of forward
//! selection or Lasso base learners, and tests the null hypothesis of a
//! constant response surface by comparing reduced-rank Mahalanobis distances
//! of standardized ensemble predictions against a reference distribution
//! built from response permutations. A simulation harness estimates power
//! against the classical ANOVA whole-model F test on central composite
//! designs.

pub mod dist;
pub mod ensemble;
pub mod error;
pub mod factor;
pub mod learners;
mod linalg;
pub mod lnp;
// pub mod plot;
// pub mod report;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod weights;
pub mod wmt;

pub use ensemble::{svem_fit, svem_predict, EnsembleModel, PredictionSummary};
pub use error::{Result, SvemError};
pub use factor::{
    expand_terms, parse_factor_specs, FactorRole, FactorSpec, FactorTable, FactorValue,
    ModelMatrix, StudyConfig, Term, TermKind,
};
pub use learners::{
    forward_selection_fit, lasso_path_fit, weighted_least_squares, FitResult, Learner,
};
pub use sampler::{sample_points, sample_points_with, SamplerMode};
pub use weights::{draw_weight_pair, WeightPair};
pub use wmt::{
    build_observed_matrix, build_reference_matrix, p_value_from_distances,
    reduced_rank_mahalanobis, standardized_prediction_row, whole_model_test, ReferenceFamily,
    ReferenceFit, TestResult, TestSettings,
};
