//! Initial density matrices: the thermal state of the three-spin system and
//! the four pseudo-pure states of the two environment spins, plus ideal
//! rotation pulses.
//!
//! Pseudo-pure states are constructed algebraically as density matrices;
//! pulse-sequence preparation is out of scope, but `rotate` provides the
//! ideal pulses used to move between them.

use crate::error::{Error, Result};
use crate::model::SpinSystemParams;
use crate::quantum::{pauli, pauli_embed, Axis, ComplexMatrix, DensityMatrix, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Pseudo-pure-state label; selects the environment basis state of spins
/// (F1, F2): A -> |00>, B -> |01>, C -> |10>, D -> |11>.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PpsLabel {
    A,
    B,
    C,
    D,
}

impl PpsLabel {
    pub const ALL: [PpsLabel; 4] = [PpsLabel::A, PpsLabel::B, PpsLabel::C, PpsLabel::D];

    /// Environment basis bits (F1, F2).
    pub fn environment_bits(self) -> (u8, u8) {
        match self {
            PpsLabel::A => (0, 0),
            PpsLabel::B => (0, 1),
            PpsLabel::C => (1, 0),
            PpsLabel::D => (1, 1),
        }
    }
}

impl std::fmt::Display for PpsLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PpsLabel::A => write!(f, "A"),
            PpsLabel::B => write!(f, "B"),
            PpsLabel::C => write!(f, "C"),
            PpsLabel::D => write!(f, "D"),
        }
    }
}

/// Initial-state selector used across the FID pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitialState {
    Thermal,
    Pps(PpsLabel),
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialState::Thermal => write!(f, "thermal"),
            InitialState::Pps(l) => write!(f, "pps{l}"),
        }
    }
}

/// High-temperature thermal equilibrium state, I/8 + (p/2) sum_i sigma_iz.
pub fn thermal_equilibrium(params: &SpinSystemParams) -> Result<DensityMatrix> {
    let p = params.thermal_p;
    let mut m = ComplexMatrix::identity(8).scale_re(1.0 / 8.0);
    for i in 1..=3 {
        m = m.add(&pauli_embed(Axis::Z, i, 3)?.scale_re(p / 2.0));
    }
    DensityMatrix::new(m)
}

/// Ideal rotation pulse: `R rho R^dag` with `R = exp(-i angle/2 sigma_axis)`
/// acting on the given spin.
pub fn rotate(
    rho: &DensityMatrix,
    target: usize,
    axis: Axis,
    angle_rad: f64,
) -> Result<DensityMatrix> {
    let n = rho.nqubits();
    let sigma = pauli_embed(axis, target, n)?;
    // sigma^2 = I, so exp(-i a/2 sigma) = cos(a/2) I - i sin(a/2) sigma.
    let half = angle_rad / 2.0;
    let r = ComplexMatrix::identity(rho.matrix().dim())
        .scale_re(half.cos())
        .add(&sigma.scale(C64::new(0.0, -half.sin())));
    let rotated = r.matmul(rho.matrix()).matmul(&r.dagger());
    Ok(DensityMatrix::from_matrix_unchecked(rotated, n))
}

/// Thermal initial state: the equilibrium state after a pi/2 pulse on the
/// observed spin about y, I/8 + (p/2)(sigma_1z + sigma_2z + sigma_3x).
pub fn thermal_initial(params: &SpinSystemParams) -> Result<DensityMatrix> {
    rotate(&thermal_equilibrium(params)?, 3, Axis::Y, FRAC_PI_2)
}

/// Pseudo-pure initial state
/// `(1-q)/8 I + q |ab><ab| (x) (I_2 + sigma_3x)/2` for the environment basis
/// state selected by `label`.
pub fn pps_initial(label: PpsLabel, q: f64) -> Result<DensityMatrix> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "pps purity q must lie in (0, 1], found {q}"
        )));
    }
    let (b1, b2) = label.environment_bits();
    let projector = |bit: u8| {
        let mut p = ComplexMatrix::zeros(2);
        p.set(bit as usize, bit as usize, C64::new(1.0, 0.0));
        p
    };
    let observed = ComplexMatrix::identity(2)
        .add(&pauli(Axis::X))
        .scale_re(0.5);
    let pure = projector(b1).kron(&projector(b2)).kron(&observed);
    let m = ComplexMatrix::identity(8)
        .scale_re((1.0 - q) / 8.0)
        .add(&pure.scale_re(q));
    DensityMatrix::new(m)
}

/// Initial state dispatch: thermal states use `params.thermal_p`, pseudo-pure
/// states use `params.pps_q`.
pub fn initial_state(state: InitialState, params: &SpinSystemParams) -> Result<DensityMatrix> {
    match state {
        InitialState::Thermal => thermal_initial(params),
        InitialState::Pps(label) => pps_initial(label, params.pps_q),
    }
}
