//! Evolution-map toolkit for system-environment circuits.
//!
//! A system S interacts with an environment E it may initially be correlated
//! with. This crate distinguishes two objects that are often conflated:
//!
//! * the **input-output relation** of a family of preparations — the list of
//!   (initial system state, final system state) pairs a circuit produces as a
//!   preparation setting varies, and
//! * the **do-conditional evolution map** — the channel obtained by cutting
//!   the system away from its causes and feeding an intervention through the
//!   same interaction with the environment's natural marginal.
//!
//! The relation can fail to define any map, define only a nonlinear one, or
//! define a linear map that is not completely positive (not stochastic, in
//! the classical regime); the [`analyzer`] module classifies which. The
//! do-conditional map, computed in [`causal`], is always a channel (CPTP /
//! column-stochastic) regardless of initial correlations, and depends only on
//! the interaction and the environment marginal. Quantum and classical
//! regimes are implemented side by side with a dephasing bridge between them.
//!
//! Modules, bottom up:
//! * [`mat`] / [`eig`] — dense complex matrices, tensor-factor bookkeeping and
//!   a Jacobi Hermitian eigensolver;
//! * [`quantum`] — density operators, channels in Choi form, instruments;
//! * [`classical`] — distributions, column-stochastic matrices, conditioning;
//! * [`scenarios`] — circuit descriptions (fiducial state, preparation family,
//!   interaction) and relation generation;
//! * [`analyzer`] — relation classification (one-to-many, nonlinearity
//!   witnesses, least-squares fit, CP / stochastic feasibility);
//! * [`causal`] — do-maps, combs, link products, steering, composition and
//!   tomography;
//! * [`corpus`] — built-in worked examples and parametric scenario families.

pub mod analyzer;
pub mod causal;
pub mod classical;
pub mod corpus;
pub mod eig;
pub mod emit;
pub mod error;
pub mod mat;
pub mod quantum;
pub mod scenarios;

pub use error::{Error, Result};

/// Default numerical tolerance for validity checks and comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Mass threshold below which an outcome or conditional is treated as zero.
pub const ZERO_MASS: f64 = 1e-12;
