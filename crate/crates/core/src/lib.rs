//! Optimal periodic control of a fractional-order chemostat.
//!
//! The substrate dynamics are driven by a Caputo derivative with sliding
//! memory (CFDS). On T-periodic functions that operator acts diagonally on
//! Fourier modes, so everything here is built on a periodic collocation grid:
//!
//! - [`frac`]: CFDS multipliers, operator application and quadrature oracles
//! - [`model`]: Contois chemostat kinetics and the reduced 1D right-hand side
//! - [`grid`]: equispaced periodic grids, Fourier analysis and resampling
//! - [`solver`]: Newton solve of the periodic state equation for a given control
//! - [`opc`]: direct transcription and the predictor optimization
//! - [`bangbang`]: switch detection, bang-bang reconstruction and PMP checks
//! - [`pipeline`]: the predictor-corrector driver tying the stages together

pub mod bangbang;
pub mod error;
pub mod frac;
pub mod grid;
pub mod model;
pub mod opc;
pub mod pipeline;
pub mod quadrature;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use frac::{FracOrder, MemoryLength, Side, SpectralMultiplierTable};
pub use grid::{ControlProfile, PeriodicGrid, Profile, StateProfile};
pub use model::{ChemostatParams, Equilibrium, ParamValues};
