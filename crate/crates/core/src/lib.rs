//! Numerical laboratory for nonsymmetric jump kernels, the lower bounded
//! semi-Dirichlet forms they generate, and the stable-like, censored and
//! part processes associated with them.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`], [`exponent`], [`kernel`] and [`conditions`] define jump
//!   kernels and verify the integrability conditions on their symmetric and
//!   antisymmetric parts, producing the form constants.
//! * [`grid`] and [`forms`] assemble Galerkin matrices of the truncated forms
//!   and check the quantitative form inequalities.
//! * [`resolvent`] and [`drifted`] build finite-state generators, resolvents
//!   and semigroups, and realise the drifted Brownian motion example whose
//!   dual semigroup fails to be Markovian.
//! * [`operator`] evaluates the integro-differential generator and its dual.
//! * [`sampler`], [`ecf`] and [`simulate`] provide exact symmetric stable
//!   sampling and the Monte-Carlo process simulator.
//! * [`experiment`] ties everything into config-driven experiments with
//!   serialised reports.

// NaN must fail validation, so `!(x > 0.0)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod drifted;
pub mod ecf;
pub mod error;
pub mod exit;
pub mod experiment;
pub mod exponent;
pub mod forms;
pub mod grid;
pub mod kernel;
pub mod operator;
pub mod quadrature;
pub mod report;
pub mod resolvent;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use conditions::{
    admissible_gamma, check_conditions, check_lower_order, ConditionReport, GammaInterval,
    QuadratureConfig,
};
pub use error::{Error, Result};
pub use exponent::{ExponentField, ExponentProfile};
pub use kernel::{
    decompose, dual_kernel, stable_like_kernel, JumpKernel, KernelDecomposition, Normalization,
    SharedKernel,
};
