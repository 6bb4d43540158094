//! Sparse domination of differentially subordinate martingales on finite
//! measure trees.
//!
//! The crate works on finite filtered probability spaces represented as
//! trees. It builds martingales and martingale transforms on them, checks
//! differential subordination, constructs the stopping-time decomposition
//! that bounds `Y*` by a sparse operator applied to `|X|`, and evaluates the
//! weighted bounds that follow from it. Every routine is generic over
//! [`Scalar`], so the same code runs in floating point or exact rationals.

pub mod error;
pub mod form;
pub mod generators;
pub mod lerner;
pub mod linalg;
pub mod martingale;
pub mod scalar;
pub mod sparse;
pub mod tree;
pub mod weights;

pub use error::{Error, Result, Witness};
pub use linalg::Matrix;
pub use martingale::{
    is_differentially_subordinate, maximal_function, square_bracket, transform, weak_type_check,
    AdaptedScalarProcess, Martingale, Multipliers,
};
pub use scalar::{
    eq_with_slack, exponent_scalar, le_with_slack, sqrt_le_sum, Exponent, Rational, Scalar, FLOAT_TOL,
};
pub use tree::{
    build_tree, hitting_time, stopped_atoms, Branching, FiltrationTree, Node, NodeId,
    StoppingTime, TreeSpec,
};
pub use weights::{
    ap_characteristic, doob_ratio, dual_weight, weighted_conditional_expectation, weighted_maximal,
    weighted_norm, ApWeight, Weight,
};
pub use sparse::{
    decompose, decompose_with, evaluate_sparse, verify_pointwise_domination, verify_sparsity,
    Certificate, DecomposeOptions, DecompositionReport, DominationReport, JumpCorrection,
    SparseOperator, SparsityReport, StopAtom,
};
pub use form::{
    bilinear_form, duality_check, form_bound_chain, theorem1_check, theorem1_with, BilinearForm,
    FormEstimateReport, Theorem1Report,
};
pub use lerner::{lerner_pointwise, theorem2_check, LernerPointwise, LernerReport};
pub use generators::{
    doubling_martingale, jump_tree, power_weight, random_contraction, random_direction,
    random_subordinate_pair, rng_for, seeded_pair, two_value_weight, VolatilityProfile,
};
