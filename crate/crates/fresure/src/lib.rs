//! Simulator and spectral-analysis toolkit for frequency super-resolution in a
//! weakly coupled three-nuclear-spin system.
//!
//! A thermal-state NMR spectrum of the observed spin is a sum of overlapping
//! lines selected by the computational-basis state of the two "environment"
//! spins. Preparing the environment in each of its four pseudo-pure states
//! switches on a single line at a time, so the overlapped spectrum can be
//! decomposed physically instead of by multi-peak fitting, and peak positions
//! can be located far below the line width.
//!
//! The crate is organised as a pipeline:
//!
//! * [`quantum`] — dense complex operators, Pauli embedding, Hermitian
//!   eigendecomposition, unitary evolution;
//! * [`model`] — full and secular Hamiltonians of the three-spin molecule and
//!   the Lorentzian stray-field noise model;
//! * [`states`] — thermal and pseudo-pure initial density matrices;
//! * [`dynamics`] — free-induction-decay time series, Monte Carlo noise
//!   averaging, closed-form oracles;
//! * [`spectra`] — FFT spectroscopy, peak metrology, constrained Lorentzian
//!   fitting, decomposition-scale fitting, spectral infidelity;
//! * [`metrology`] — Allan deviation of repeated peak-position measurements.

pub mod dynamics;
pub mod error;
pub mod metrology;
pub mod model;
pub mod quantum;
pub mod spectra;
pub mod states;

pub use error::{Error, Result};
pub use quantum::{ComplexMatrix, DensityMatrix, C64};
