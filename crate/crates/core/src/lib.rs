//! Concavity and rigidity of Jacobi fields along geodesics.
//!
//! The numerical side integrates Lagrange tensors `A'' + R A = 0`, evaluates
//! the functions `g_v(t) = ‖v‖² / ‖A_t^{-*} v‖` and their volume analogues
//! `g_W`, and detects parallel Jacobi fields. The combinatorial side
//! ([`cohomone`]) classifies the group diagrams of the `P`, `Q` and `N`
//! families of cohomogeneity one 7-manifolds under `S³ × S³` with exact
//! integer arithmetic.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod models;
pub mod scalar;
pub mod jacobi;
pub mod concavity;
pub mod rigidity;
pub mod cohomone;
pub mod cli;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CurvatureField64 = models::CurvatureField<f64>;
pub type Model64 = models::ModelGeometry<f64>;
pub type JacobiPath64 = jacobi::JacobiTensorPath<f64>;
pub type SingularPoint64 = jacobi::SingularPointRecord<f64>;
pub type Profile64 = concavity::ConcavityProfile<f64>;
pub type VolumeProfile64 = concavity::VolumeProfile<f64>;
pub type RigidityReport64 = rigidity::RigidityReport<f64>;
