//! Continuous-variable phase-space machinery: symplectic geometry, Gaussian
//! and Fock-truncated states, Wigner and characteristic functions, quadrature
//! measurement statistics, Wigner-based hidden-variable models, and a
//! compiler from quadrature expressions to phase-shift/CZ/homodyne circuits.
//!
//! Conventions: ħ = 1, phase-space coordinates ordered `(q_1..q_M, p_1..p_M)`,
//! vacuum quadrature variance 1/2, `α = (q + ip)/√2`. Wigner functions are
//! normalized so that integrating out the momenta gives `(2π)^{M/2} |ψ(q)|²`;
//! their total mass is therefore `(2π)^{M/2}`.

pub mod error;
pub mod fock_basis;
pub mod hvm;
pub mod measurement;
pub mod phase_space;
pub mod qcompile;
pub mod scalar;
pub mod states;
pub mod wigner;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use scalar::Real;

/// Double-precision phase-space point; the workhorse type of the crate.
pub type PhasePoint = phase_space::PhasePoint<f64>;
pub type SymplecticMap = phase_space::SymplecticMap<f64>;
pub type LagrangianSubspace = phase_space::LagrangianSubspace<f64>;

pub type PhasePoint32 = phase_space::PhasePoint<f32>;
pub type SymplecticMap32 = phase_space::SymplecticMap<f32>;
pub type LagrangianSubspace32 = phase_space::LagrangianSubspace<f32>;

pub use states::StateHandle;
