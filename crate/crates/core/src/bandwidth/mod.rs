//! Bandwidth selection: the risk objective and its minimiser, surface
//! functionals, pilot rules, the plug-in selector and the LSCV baseline.

pub mod functionals;
pub mod lscv;
pub mod neldermead;
pub mod pilot;
pub mod q;
pub mod select;

pub use functionals::{
    estimate_surface_functionals, exact_boundary, exact_surface_functionals, FunctionalOptions, FunctionalSource,
    SurfaceFunctionals,
};
pub use lscv::{lscv_score, select_lscv, LscvSelection, SearchBox};
pub use pilot::{pilot_bandwidths, Pilots};
pub use q::{q_minimize, q_value, scaling_transport, QProblem, ScalingTransport};
pub use select::{m_tilde, optimal_from_functionals, q_problem_for, sample_hdr_level, select_optimal, select_optimal_with, OptimalSelection};
