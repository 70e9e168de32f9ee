//! Quantitative machinery for generalized Fejér monotone iterations.
//!
//! The crate provides, in rough dependency order:
//!
//! - [`moduli`]: first-class number-theoretic and real-valued moduli
//!   (rates of convergence, Cauchy rates, G/H-moduli, ...) together with
//!   the small algebra that combines them,
//! - [`distances`]: generalized distance functions over finite-dimensional
//!   spaces, including the duality-map based distance on `l_p` spaces and
//!   its certified consistency/triangularity moduli,
//! - [`framework`]: the partial/variable-distance quasi-Fejér definitions
//!   as empirical checkers plus the moduli conversion constructions,
//! - [`rates`]: exact arbitrary-precision evaluators for the metastability
//!   rates and the regularity-based convergence rates, with a brute-force
//!   oracle to validate them against recorded runs,
//! - [`hilbert`]: the alternating-inertia iteration for averaged maps on
//!   `R^d` with its closed-form bound stack,
//! - [`banach`]: the Mann-type proximal point algorithm in `l_p^d` with
//!   numerically solved resolvents and its bound stack.
//!
//! All bound evaluation is exact (big integers / big rationals); only
//! iteration trajectories and the Monte-Carlo checkers use `f64`.

pub mod banach;
pub mod distances;
pub mod framework;
pub mod hilbert;
pub mod moduli;
mod num_util;
pub mod rates;

pub use num_util::{ceil_rational, ceil_root_scaled, dotminus, int_to_rational, inv_succ, parse_rational};
