//! Numerical laboratory for the viscous-plastic (Hibler) sea-ice model.
//!
//! The crate is organised bottom-up:
//!
//! * [`rheology`]: pointwise constitutive law (the 𝕊 map, regularised
//!   deformation rate, pressure, viscosities, stress, coefficient tensor).
//! * [`symbol`]: principal symbol of the frozen-coefficient operator,
//!   strong/parameter ellipticity sampling, the boundary-form inequalities
//!   and a Lopatinskii–Shapiro check for the Dirichlet problem.
//! * [`discretization`]: structured collocated grid, discrete strain rate,
//!   sparse assembly of the Hibler block, Neumann Laplacians and the
//!   coupled block operator, and a sparse linear solver.
//! * [`dynamics`]: forcing, source terms and the backward-Euler IMEX
//!   stepper for `v' + A(v) v = F(v)`.
//! * [`stability`]: linearisation at constant equilibria, dense spectra,
//!   energy identities and decay experiments.
//! * [`output`]: CSV / snapshot / PPM writers shared by the CLI.
//! * [`verify`]: sampled property suites with pinned tolerances.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` / `*F32` aliases at the crate root fix the scalar.

pub mod discretization;
pub mod dynamics;
pub mod output;
pub mod rheology;
pub mod sampling;
pub mod scalar;
pub mod stability;
pub mod symbol;
pub mod verify;

pub use scalar::Real;

pub type RheologyParamsF64 = rheology::RheologyParams<f64>;
pub type RheologyParamsF32 = rheology::RheologyParams<f32>;
pub type StrainRateF64 = rheology::StrainRate<f64>;
pub type Stress2F64 = rheology::Stress2<f64>;
pub type CoefficientTensorF64 = rheology::CoefficientTensor<f64>;
pub type SymbolMatrixF64 = symbol::SymbolMatrix<f64>;
pub type LsProbeF64 = symbol::LsProbe<f64>;
pub type GridF64 = discretization::Grid<f64>;
pub type FieldSetF64 = discretization::FieldSet<f64>;
pub type SparseOperatorF64 = discretization::SparseOperator<f64>;
pub type ForcingInputsF64 = dynamics::ForcingInputs<f64>;
pub type StepperConfigF64 = dynamics::StepperConfig<f64>;
pub type EquilibriumF64 = stability::Equilibrium<f64>;
pub type StrainRateF32 = rheology::StrainRate<f32>;
pub type GridF32 = discretization::Grid<f32>;
pub type FieldSetF32 = discretization::FieldSet<f32>;
pub type SparseOperatorF32 = discretization::SparseOperator<f32>;
pub type StepperConfigF32 = dynamics::StepperConfig<f32>;
