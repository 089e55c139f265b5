//! Free-induction-decay time series of the observed spin.
//!
//! The complex FID is `<sigma_3x>(t) + i <sigma_3y>(t)`. Numeric evolution
//! diagonalizes the Hamiltonian once per FID and evaluates every time sample
//! from the eigenpair decomposition of the signal; the closed-form secular
//! expressions and the analytic Lorentzian average serve as independent
//! oracles.
//!
//! Monte Carlo noise averaging is deterministic: sample i draws its frequency
//! offset from a counter-based stream at (seed, i), samples are accumulated
//! in fixed batches of [`MC_BATCH`] with compensated (Kahan) summation, and
//! batch partials are combined in batch order. The result is bit-identical
//! for any rayon worker count.

use crate::error::{Error, Result};
use crate::model::{
    build_hamiltonian, derived_frequencies, sample_eta, CounterRng, HamiltonianKind, NoiseModel,
    SpinSystemParams,
};
use crate::quantum::{pauli_embed, Axis, ComplexMatrix, DensityMatrix, HamiltonianEigen, C64};
use crate::states::{initial_state, InitialState, PpsLabel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

/// Sampling grid of an acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// Sampling interval, seconds.
    pub dt_s: f64,
    /// Number of samples.
    pub n_samples: usize,
}

impl Acquisition {
    /// 0.8 s of acquisition at dt = 0.2 ms: Nyquist 2500 Hz, bin 1.25 Hz.
    pub fn baseline() -> Self {
        Self {
            dt_s: 2.0e-4,
            n_samples: 4000,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.dt_s * self.n_samples as f64
    }
}

impl Default for Acquisition {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Provenance of an FID record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FidMeta {
    pub state: Option<InitialState>,
    pub model: Option<HamiltonianKind>,
    pub noise_gamma_hz: Option<f64>,
    /// Number of noise realizations averaged (1 for a single run).
    pub n_averaged: usize,
    pub seed: Option<u64>,
}

/// Uniformly sampled complex FID.
#[derive(Debug, Clone, PartialEq)]
pub struct FidRecord {
    pub dt_s: f64,
    pub values: Vec<C64>,
    pub meta: FidMeta,
}

impl FidRecord {
    pub fn n_samples(&self) -> usize {
        self.values.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.dt_s * self.values.len() as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.dt_s)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Copy with the quadrature channel dropped (real-only detection). Its
    /// spectrum shows mirrored lines at +/- the oscillation frequencies.
    pub fn real_only(&self) -> Self {
        Self {
            dt_s: self.dt_s,
            values: self.values.iter().map(|v| C64::new(v.re, 0.0)).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Writes `t_s, re, im` rows with a header, 17 significant digits so the
    /// round trip through text is exact.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,re,im")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                k as f64 * self.dt_s,
                v.re,
                v.im
            )?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if lineno == 0 {
                if !trimmed.starts_with("t_s") {
                    return Err(Error::Parse("missing FID CSV header 't_s,re,im'".into()));
                }
                continue;
            }
            let mut cols = trimmed.split(',');
            let mut field = |name: &str| -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing {name}", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {name}: {e}", lineno + 1)))
            };
            times.push(field("t_s")?);
            let re = field("re")?;
            let im = field("im")?;
            values.push(C64::new(re, im));
        }
        if values.len() < 2 {
            return Err(Error::Parse("FID CSV needs at least two samples".into()));
        }
        let dt = times[1] - times[0];
        if dt <= 0.0 {
            return Err(Error::Parse("FID time axis must increase".into()));
        }
        for (k, &t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-6 * dt.max(1e-12) {
                return Err(Error::Parse(format!(
                    "FID time axis not uniform at row {k}"
                )));
            }
        }
        Ok(Self {
            dt_s: dt,
            values,
            meta: FidMeta::default(),
        })
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// One oscillating component of the signal in the Hamiltonian eigenbasis.
#[derive(Debug, Clone, Copy)]
struct PairSignal {
    weight: C64,
    /// Eigenvalue difference lambda_a - lambda_b, rad/s.
    delta_rad_s: f64,
}

/// Decomposes `Tr(U rho U^dag (sigma_3x + i sigma_3y))` into eigenpair
/// components. Weights below 1e-16 of the largest are dropped.
fn pair_decomposition(rho: &ComplexMatrix, eigen: &HamiltonianEigen) -> Vec<PairSignal> {
    let n = rho.dim();
    let nqubits = n.trailing_zeros() as usize;
    let sx = pauli_embed(Axis::X, nqubits, nqubits).expect("valid index");
    let sy = pauli_embed(Axis::Y, nqubits, nqubits).expect("valid index");
    let complex_obs = sx.add(&sy.scale(C64::new(0.0, 1.0)));

    let rho_e = eigen.to_eigenbasis(rho);
    let obs_e = eigen.to_eigenbasis(&complex_obs);

    let mut pairs = Vec::with_capacity(n * n);
    let mut max_w: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let w = rho_e.get(a, b) * obs_e.get(b, a);
            let nw = w.norm();
            if nw > 0.0 {
                max_w = max_w.max(nw);
                pairs.push(PairSignal {
                    weight: w,
                    delta_rad_s: eigen.eigenvalues[a] - eigen.eigenvalues[b],
                });
            }
        }
    }
    let cutoff = 1e-16 * max_w;
    pairs.retain(|p| p.weight.norm() > cutoff);
    pairs
}

/// Evaluates the pair sum over the time grid using per-pair phase
/// recurrences; `out[k] = sum_p w_p exp(-i delta_p k dt)`.
fn eval_pairs(pairs: &[PairSignal], dt_s: f64, out: &mut [C64]) {
    for v in out.iter_mut() {
        *v = C64::new(0.0, 0.0);
    }
    for p in pairs {
        let step = C64::from_polar(1.0, -p.delta_rad_s * dt_s);
        let mut z = C64::new(1.0, 0.0);
        for v in out.iter_mut() {
            *v += p.weight * z;
            z *= step;
        }
    }
}

/// Exact FID under a fixed Hamiltonian (rad/s): one eigendecomposition is
/// reused for the whole time grid.
pub fn fid_numeric(
    rho0: &DensityMatrix,
    hamiltonian: &ComplexMatrix,
    acq: Acquisition,
) -> Result<FidRecord> {
    if hamiltonian.dim() != rho0.matrix().dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.matrix().dim(),
            found: hamiltonian.dim(),
        });
    }
    let eigen = HamiltonianEigen::new(hamiltonian)?;
    let pairs = pair_decomposition(rho0.matrix(), &eigen);
    let mut values = vec![C64::new(0.0, 0.0); acq.n_samples];
    eval_pairs(&pairs, acq.dt_s, &mut values);
    Ok(FidRecord {
        dt_s: acq.dt_s,
        values,
        meta: FidMeta {
            n_averaged: 1,
            ..FidMeta::default()
        },
    })
}

fn state_frequencies(state: InitialState, params: &SpinSystemParams) -> Vec<f64> {
    let freqs = derived_frequencies(params);
    match state {
        InitialState::Thermal => freqs.peak_hz.to_vec(),
        InitialState::Pps(label) => {
            let idx = PpsLabel::ALL.iter().position(|&l| l == label).unwrap();
            vec![freqs.peak_hz[idx]]
        }
    }
}

/// Closed-form secular FID: `polarization * sum_lines exp(i 2 pi (f + eta) t)`.
/// Serves as an independent oracle for [`fid_numeric`] under the secular
/// Hamiltonian.
pub fn fid_closed_form(
    state: InitialState,
    params: &SpinSystemParams,
    eta_hz: f64,
    polarization: f64,
    acq: Acquisition,
) -> FidRecord {
    let lines = state_frequencies(state, params);
    let values = (0..acq.n_samples)
        .map(|k| {
            let t = k as f64 * acq.dt_s;
            lines
                .iter()
                .map(|f| C64::from_polar(polarization, 2.0 * PI * (f + eta_hz) * t))
                .sum()
        })
        .collect();
    FidRecord {
        dt_s: acq.dt_s,
        values,
        meta: FidMeta {
            state: Some(state),
            model: Some(HamiltonianKind::Secular),
            n_averaged: 1,
            ..FidMeta::default()
        },
    }
}

/// Closed-form secular FID averaged exactly over the Lorentzian noise: the
/// common frequency offset only multiplies the signal by `exp(-pi Gamma t)`,
/// so this is the infinite-sample limit of [`fid_noise_averaged`].
pub fn fid_analytic_averaged(
    state: InitialState,
    params: &SpinSystemParams,
    gamma_fwhm_hz: f64,
    polarization: f64,
    acq: Acquisition,
    model: HamiltonianKind,
) -> Result<FidRecord> {
    if model != HamiltonianKind::Secular {
        return Err(Error::UnsupportedModel(
            "analytic noise averaging only exists for the secular model".into(),
        ));
    }
    let mut fid = fid_closed_form(state, params, 0.0, polarization, acq);
    for (k, v) in fid.values.iter_mut().enumerate() {
        let t = k as f64 * acq.dt_s;
        *v *= (-PI * gamma_fwhm_hz * t).exp();
    }
    fid.meta.noise_gamma_hz = Some(gamma_fwhm_hz);
    Ok(fid)
}

/// Fixed Monte Carlo batch size; partial sums are formed per batch and
/// combined in batch order, making the average independent of scheduling.
pub const MC_BATCH: usize = 256;

struct KahanVec {
    sum: Vec<C64>,
    comp: Vec<C64>,
}

impl KahanVec {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![C64::new(0.0, 0.0); len],
            comp: vec![C64::new(0.0, 0.0); len],
        }
    }

    fn add_slice(&mut self, xs: &[C64]) {
        for ((s, c), x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(xs) {
            let y_re = x.re - c.re;
            let t_re = s.re + y_re;
            c.re = (t_re - s.re) - y_re;
            s.re = t_re;
            let y_im = x.im - c.im;
            let t_im = s.im + y_im;
            c.im = (t_im - s.im) - y_im;
            s.im = t_im;
        }
    }
}

/// Monte Carlo average of the FID over `n_mc` draws of the stray-field
/// offset. Deterministic for a given seed: sample i's offset depends only on
/// (seed, i), so the same seed reproduces the same average bit-for-bit for
/// any worker count, and the same eta stream is shared by every initial
/// state (common random numbers).
pub fn fid_noise_averaged(
    state: InitialState,
    params: &SpinSystemParams,
    noise: &NoiseModel,
    n_mc: usize,
    acq: Acquisition,
    model: HamiltonianKind,
    seed: u64,
) -> Result<FidRecord> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be at least 1".into()));
    }
    params.validate()?;
    let rho0 = initial_state(state, params)?;

    let n_batches = n_mc.div_ceil(MC_BATCH);
    let partials: Vec<Vec<C64>> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut acc = KahanVec::new(acq.n_samples);
            let mut scratch = vec![C64::new(0.0, 0.0); acq.n_samples];
            let lo = batch * MC_BATCH;
            let hi = ((batch + 1) * MC_BATCH).min(n_mc);
            for i in lo..hi {
                let mut rng = CounterRng::at(seed, i as u64);
                let eta = sample_eta(noise, &mut rng);
                let h = build_hamiltonian(model, params, eta);
                let eigen = HamiltonianEigen::new(&h).expect("builder output is Hermitian");
                let pairs = pair_decomposition(rho0.matrix(), &eigen);
                eval_pairs(&pairs, acq.dt_s, &mut scratch);
                acc.add_slice(&scratch);
            }
            acc.sum
        })
        .collect();

    let mut total = KahanVec::new(acq.n_samples);
    for partial in &partials {
        total.add_slice(partial);
    }
    let scale = 1.0 / n_mc as f64;
    let values = total.sum.into_iter().map(|v| v * scale).collect();
    Ok(FidRecord {
        dt_s: acq.dt_s,
        values,
        meta: FidMeta {
            state: Some(state),
            model: Some(model),
            noise_gamma_hz: Some(noise.gamma_fwhm_hz),
            n_averaged: n_mc,
            seed: Some(seed),
        },
    })
}
