//! Error and risk functionals for plug-in level-set estimates.

pub mod symdiff;
pub mod theory;
pub mod verify;
pub mod weight;

pub use symdiff::{
    error_grid, sym_diff_error, sym_diff_grid, sym_diff_line, truth_grid, Estimate, LineEstimate, SymDiffError,
    DEFAULT_ERROR_RES,
};
pub use theory::{
    bias_term, gamma_fn, normal_abs_moment, theoretical_risk, theoretical_risk_on, variance_term, RiskForm,
    RiskMethod, RiskReport,
};
pub use verify::{
    h1_statistic, theorem1_ratio, theorem1_ratios, verify_bias_variance, verify_corollary1, verify_proposition1,
    verify_theorem1_ratio, proposition1_points, proposition1_replicates, Corollary1Outcome, PointwiseMoments,
    Proposition1Point, Proposition1Replicate, Theorem1Ratio,
};
pub use weight::{WeightFunction, WeightKind};
