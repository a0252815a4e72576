//! Contraction-map fixed-point algorithms for labeling problems with pairwise
//! costs on arbitrary graphs.
//!
//! Two maps are provided, a diffusion map `T` and an optimal-control map `S`
//! (see [`maps`]). Both are contractions, so iterating them converges to a
//! unique fixed point from any start. The fixed point of `T` gives a lower
//! bound on the energy of every labeling; the fixed point of `S` gives lower
//! bounds on the max-marginals.

pub mod baselines;
pub mod error;
pub mod fastmin;
pub mod maps;
pub mod model;
pub mod modelfile;
pub mod oracles;
pub mod pnm;
pub mod problems;
pub mod verify;

pub use error::{Error, Result};
pub use maps::{
    apply_s, apply_t, bracket, check_lp_feasible, decode, factored_bound, solve, value_lower_bounds, BeliefField,
    Bracket, FixedPointReport, MapKind, SolveParams,
};
pub use model::{Graph, Labeling, Model, Orientation, PairwiseCost, WalkWeights};
