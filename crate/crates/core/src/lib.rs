//! Numerical laboratory for online least-squares SGD viewed as a
//! high-dimensional interacting particle system.
//!
//! The centralized iterate `Δθ^t = θ^t − θ*` evolves as
//!
//! ```text
//! Δθ^{t+1}_i = Δθ^t_i − η Σ_j x^t_i x^t_j Δθ^t_j + η x^t_i ε^t
//! ```
//!
//! with data `x^t_i = W(t/T, i/d)` drawn from a Gaussian field with a smooth
//! stationary covariance `A`. As `d, T → ∞` the space-time interpolation of
//! the iterates converges to the solution of an infinite-dimensional ODE or
//! SDE depending on the noise level, and its rescaled deviation converges to
//! a linear SDE driven by Gaussian field noise.
//!
//! | module | contents |
//! |--------|----------|
//! | [`covariance`] | sinusoidal kernels `A`, Gaussian moments `B`, `E`, spectral data |
//! | [`field`] | data-field and observation-noise samplers, seeded substreams |
//! | [`sgdsim`] | the particle system and its space-time interpolation |
//! | [`limit`] | ODE/SDE solvers in the kernel eigenbasis, Picard iteration |
//! | [`diagnostics`] | MSE/PE functionals, regime classification, KS normality |
//! | [`experiments`] | config files, replication sweeps, CSV/JSON output |

pub mod covariance;
pub mod diagnostics;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod limit;
pub mod sgdsim;
pub mod streams;

mod error;

pub use covariance::{CovarianceModel, SpectralData};
pub use error::{Error, Result};
pub use field::{FieldSampler, NoiseDistribution, NoiseSpec, SamplerMode};
pub use grid::{GridFunction, InitProfile};
pub use limit::{FluctuationRegime, FluctuationSpec, LimitSolution, SdeScheme, TimeGrid};
pub use sgdsim::{SgdConfig, Trajectory};
pub use streams::{Role, StreamId};
