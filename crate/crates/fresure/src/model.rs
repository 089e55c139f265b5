//! Physical model of the three-spin system: full and secular Hamiltonians in
//! a rotating frame, derived line frequencies, and the Lorentzian stray-field
//! noise distribution with a counter-based sampler.
//!
//! All user-facing frequencies are cyclic (Hz). The conversion to angular
//! units (rad/s) happens only inside the Hamiltonian builders.

use crate::error::{Error, Result};
use crate::quantum::{pauli_embed, Axis, ComplexMatrix};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which Hamiltonian to evolve under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianKind {
    /// Full Heisenberg couplings.
    Full,
    /// Weak-coupling (Ising) approximation; exactly diagonal.
    Secular,
}

impl std::fmt::Display for HamiltonianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HamiltonianKind::Full => write!(f, "full"),
            HamiltonianKind::Secular => write!(f, "secular"),
        }
    }
}

/// Physical constants of the three-spin molecule, all frequencies in Hz.
///
/// The rotating frame is chosen so spectra appear in the audio band: the
/// multi-MHz Larmor carrier is removed and `larmor_offset_hz` (default 0)
/// only shifts the whole spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    /// Common frequency offset of the rotating frame, Hz.
    #[serde(default)]
    pub larmor_offset_hz: f64,
    /// Chemical shifts (delta_1, delta_2, delta_3), Hz.
    pub chemical_shift_hz: [f64; 3],
    /// Symmetric J-coupling matrix with zero diagonal, Hz.
    pub j_coupling_hz: [[f64; 3]; 3],
    /// Thermal polarization scale p (dimensionless).
    pub thermal_p: f64,
    /// Pseudo-pure-state purity parameter q in (0, 1].
    pub pps_q: f64,
}

impl SpinSystemParams {
    /// Bundled example parameter set for a weakly coupled three-spin
    /// fluorine system. The observed-spin quantities (delta_3 and its two
    /// couplings) reproduce lines at 1088.5, 1039.5, 1020.5 and 971.5 Hz;
    /// delta_1, delta_2 and J_12 are placeholders that keep every
    /// |J_ij / (delta_i - delta_j)| ratio near or below 0.1 and are meant to
    /// be overridden from a config file.
    pub fn baseline() -> Self {
        Self {
            larmor_offset_hz: 0.0,
            chemical_shift_hz: [0.0, -13000.0, 1030.0],
            j_coupling_hz: [[0.0, 69.0, 68.0], [69.0, 0.0, 49.0], [68.0, 49.0, 0.0]],
            thermal_p: 0.015,
            pps_q: 0.01,
        }
    }

    /// Checks structural invariants (J symmetry, zero diagonal, q range).
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.j_coupling_hz[i][i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "J matrix must have zero diagonal, found J[{i}][{i}] = {}",
                    self.j_coupling_hz[i][i]
                )));
            }
            for j in (i + 1)..3 {
                if self.j_coupling_hz[i][j] != self.j_coupling_hz[j][i] {
                    return Err(Error::InvalidArgument(format!(
                        "J matrix must be symmetric, J[{i}][{j}] != J[{j}][{i}]"
                    )));
                }
            }
        }
        if !(self.pps_q > 0.0 && self.pps_q <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pps_q must lie in (0, 1], found {}",
                self.pps_q
            )));
        }
        Ok(())
    }

    /// Weak-coupling diagnostic: max |J_ij / (delta_i - delta_j)|. Values
    /// above ~0.5 mean the secular approximation is unreliable.
    pub fn weak_coupling_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in (i + 1)..3 {
                let dd = self.chemical_shift_hz[i] - self.chemical_shift_hz[j];
                let r = if dd == 0.0 {
                    f64::INFINITY
                } else {
                    (self.j_coupling_hz[i][j] / dd).abs()
                };
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Threshold above which [`Self::weak_coupling_ratio`] should be flagged.
    pub const WEAK_COUPLING_WARN: f64 = 0.5;
}

impl Default for SpinSystemParams {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Returns a copy with every J coupling multiplied by `n`.
pub fn magnify_coupling(params: &SpinSystemParams, n: f64) -> Result<SpinSystemParams> {
    if n < 0.0 || n.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "coupling magnification must be non-negative, found {n}"
        )));
    }
    let mut out = params.clone();
    for row in out.j_coupling_hz.iter_mut() {
        for v in row.iter_mut() {
            *v *= n;
        }
    }
    Ok(out)
}

/// Stray-field noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Full width at half maximum of the frequency-noise distribution, Hz.
    pub gamma_fwhm_hz: f64,
    #[serde(default)]
    pub kind: NoiseKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Lorentzian,
}

impl Default for NoiseModel {
    /// 40 Hz FWHM, the width used by the bundled example setup.
    fn default() -> Self {
        Self::lorentzian(40.0)
    }
}

impl NoiseModel {
    pub fn lorentzian(gamma_fwhm_hz: f64) -> Self {
        Self {
            gamma_fwhm_hz,
            kind: NoiseKind::Lorentzian,
        }
    }

    /// Probability density f(eta) = (Gamma/2pi) / (eta^2 + (Gamma/2)^2).
    pub fn density(&self, eta_hz: f64) -> f64 {
        let half = self.gamma_fwhm_hz / 2.0;
        (self.gamma_fwhm_hz / (2.0 * PI)) / (eta_hz * eta_hz + half * half)
    }
}

/// Deterministic counter-based random stream. Each draw is a pure function
/// of (seed, counter), so concurrent samplers can consume disjoint counter
/// ranges without shared state and results do not depend on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Stream positioned at an absolute counter value; `at(s, i).next_u64()`
    /// equals the (i+1)-th draw of `new(s)`.
    pub fn at(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }
}

/// Draws one frequency offset (Hz) from the Lorentzian noise distribution by
/// inverse CDF: eta = (Gamma/2) tan(pi (u - 1/2)).
pub fn sample_eta(noise: &NoiseModel, rng: &mut CounterRng) -> f64 {
    let u = rng.next_open01();
    0.5 * noise.gamma_fwhm_hz * (PI * (u - 0.5)).tan()
}

/// Line frequencies of the observed spin, one per environment basis state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedFrequencies {
    /// Center frequency alpha = f0 + delta_3, Hz.
    pub alpha_hz: f64,
    /// Half the coupling to spin 1, J_13 / 2, Hz.
    pub beta_hz: f64,
    /// Half the coupling to spin 2, J_23 / 2, Hz.
    pub gamma_c_hz: f64,
    /// Peak positions (A, B, C, D) for environment states |00>, |01>, |10>, |11>.
    pub peak_hz: [f64; 4],
}

/// Line positions at eta = 0: peaks at alpha +/- beta +/- gamma_c.
pub fn derived_frequencies(params: &SpinSystemParams) -> DerivedFrequencies {
    let alpha = params.larmor_offset_hz + params.chemical_shift_hz[2];
    let beta = params.j_coupling_hz[0][2] / 2.0;
    let gamma_c = params.j_coupling_hz[1][2] / 2.0;
    DerivedFrequencies {
        alpha_hz: alpha,
        beta_hz: beta,
        gamma_c_hz: gamma_c,
        peak_hz: [
            alpha + beta + gamma_c,
            alpha + beta - gamma_c,
            alpha - beta + gamma_c,
            alpha - beta - gamma_c,
        ],
    }
}

/// Diagonal of the secular Hamiltonian in rad/s, indexed by computational
/// basis state (qubit 1 most significant).
fn secular_diagonal(params: &SpinSystemParams, eta_hz: f64) -> [f64; 8] {
    let f0 = params.larmor_offset_hz;
    let mut diag = [0.0; 8];
    for (basis, d) in diag.iter_mut().enumerate() {
        // Spin i z-eigenvalue: +1 for |0>, -1 for |1>.
        let s = [
            1.0 - 2.0 * ((basis >> 2) & 1) as f64,
            1.0 - 2.0 * ((basis >> 1) & 1) as f64,
            1.0 - 2.0 * (basis & 1) as f64,
        ];
        let mut e = 0.0;
        for (&si, &shift) in s.iter().zip(&params.chemical_shift_hz) {
            e += PI * (f0 + shift + eta_hz) * si;
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                e += PI * params.j_coupling_hz[i][j] / 2.0 * s[i] * s[j];
            }
        }
        *d = e;
    }
    diag
}

/// Secular (weak-coupling) Hamiltonian in rad/s; exactly diagonal.
pub fn build_secular_hamiltonian(params: &SpinSystemParams, eta_hz: f64) -> ComplexMatrix {
    ComplexMatrix::from_diag(&secular_diagonal(params, eta_hz))
}

/// Full Hamiltonian in rad/s: the secular part plus the transverse coupling
/// terms (sigma_ix sigma_jx + sigma_iy sigma_jy) scaled by pi J_ij / 2.
///
/// Built on top of the secular diagonal so the two Hamiltonians agree on the
/// diagonal bit-for-bit and coincide exactly when J = 0.
pub fn build_full_hamiltonian(params: &SpinSystemParams, eta_hz: f64) -> ComplexMatrix {
    let mut h = build_secular_hamiltonian(params, eta_hz);
    for i in 0..3 {
        for j in (i + 1)..3 {
            let jij = params.j_coupling_hz[i][j];
            if jij == 0.0 {
                continue;
            }
            let sxi = pauli_embed(Axis::X, i + 1, 3).expect("valid index");
            let sxj = pauli_embed(Axis::X, j + 1, 3).expect("valid index");
            let syi = pauli_embed(Axis::Y, i + 1, 3).expect("valid index");
            let syj = pauli_embed(Axis::Y, j + 1, 3).expect("valid index");
            let transverse = sxi.matmul(&sxj).add(&syi.matmul(&syj));
            h = h.add(&transverse.scale_re(PI * jij / 2.0));
        }
    }
    h
}

/// Hamiltonian dispatch by kind.
pub fn build_hamiltonian(
    kind: HamiltonianKind,
    params: &SpinSystemParams,
    eta_hz: f64,
) -> ComplexMatrix {
    match kind {
        HamiltonianKind::Full => build_full_hamiltonian(params, eta_hz),
        HamiltonianKind::Secular => build_secular_hamiltonian(params, eta_hz),
    }
}
