//! FFT spectroscopy and spectral analysis.
//!
//! Spectra are zero-phase absorption spectra: twice the real part of the
//! one-sided discrete transform with the first sample half-weighted, scaled
//! by the sampling interval. Under this convention a unit-amplitude
//! oscillation with envelope `exp(-pi Gamma t)` maps to a true Lorentzian
//! line of FWHM `Gamma` and height `2/(pi Gamma)`, so measured line widths
//! read back the noise FWHM directly. The energy identity of the transform
//! is `sum |S|^2 df = dt (Re(x_0)^2 + 2 sum_{k>=1} |x_k|^2)` (exact for
//! zero-pad factor >= 2), the one-sided counterpart of Parseval's theorem.
//!
//! Analysis operations (peak finding, decomposition-scale fitting,
//! multi-Lorentzian fitting, infidelity) all work on the amplitude array.

use crate::dynamics::{fid_noise_averaged, Acquisition, FidRecord};
use crate::error::{Error, Result};
use crate::model::{magnify_coupling, CounterRng, HamiltonianKind, NoiseModel, SpinSystemParams};
use crate::quantum::C64;
use crate::states::InitialState;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Analysis window used throughout: 850 to 1200 Hz.
pub const DEFAULT_WINDOW_HZ: (f64, f64) = (850.0, 1200.0);

/// Default prominence threshold for peak finding, fraction of window maximum.
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// Apodization applied before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    None,
    /// Multiply the FID by exp(-rate t).
    Exponential {
        rate_per_s: f64,
    },
}

/// Frequency-domain record on a uniform grid from -1/(2 dt) to +1/(2 dt).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub complex_values: Vec<C64>,
    /// `amplitude[k] = |complex_values[k]|`.
    pub amplitude: Vec<f64>,
    pub bin_hz: f64,
    pub window: WindowKind,
}

impl Spectrum {
    fn from_complex(freq_hz: Vec<f64>, complex_values: Vec<C64>, window: WindowKind) -> Self {
        let bin_hz = freq_hz[1] - freq_hz[0];
        let amplitude = complex_values.iter().map(|c| c.norm()).collect();
        Self {
            freq_hz,
            complex_values,
            amplitude,
            bin_hz,
            window,
        }
    }

    /// Builds a spectrum from a real-valued curve on a uniform grid
    /// (synthetic lines, signed sums, imported data); the amplitude array is
    /// its absolute value.
    pub fn from_amplitude(freq_hz: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if freq_hz.len() != values.len() || freq_hz.len() < 2 {
            return Err(Error::InvalidArgument(
                "amplitude and frequency arrays must have equal length >= 2".into(),
            ));
        }
        let bin = freq_hz[1] - freq_hz[0];
        if bin <= 0.0 {
            return Err(Error::InvalidArgument(
                "frequency axis must increase".into(),
            ));
        }
        for (k, w) in freq_hz.windows(2).enumerate() {
            if ((w[1] - w[0]) - bin).abs() > 1e-6 * bin {
                return Err(Error::InvalidArgument(format!(
                    "frequency grid not uniform at index {k}"
                )));
            }
        }
        let complex_values = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        Ok(Self::from_complex(
            freq_hz,
            complex_values,
            WindowKind::None,
        ))
    }

    /// Index range (inclusive start, exclusive end) covering `window_hz`.
    fn window_indices(&self, window_hz: (f64, f64)) -> Result<(usize, usize)> {
        let (lo, hi) = window_hz;
        if lo >= hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "window ({lo}, {hi}) is empty"
            )));
        }
        let first = *self.freq_hz.first().unwrap();
        let last = *self.freq_hz.last().unwrap();
        if lo < first || hi > last {
            return Err(Error::InvalidArgument(format!(
                "window ({lo}, {hi}) Hz outside spectrum range ({first}, {last})"
            )));
        }
        let start = self.freq_hz.partition_point(|&f| f < lo);
        let end = self.freq_hz.partition_point(|&f| f <= hi);
        Ok((start, end))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "freq_hz,amplitude,re,im")?;
        for (k, c) in self.complex_values.iter().enumerate() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.freq_hz[k], self.amplitude[k], c.re, c.im
            )?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut freq = Vec::new();
        let mut complex = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if lineno == 0 {
                if !trimmed.starts_with("freq_hz") {
                    return Err(Error::Parse(
                        "missing spectrum CSV header 'freq_hz,amplitude,re,im'".into(),
                    ));
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
            freq.push(field("freq_hz")?);
            let amp = field("amplitude")?;
            let re = field("re")?;
            let im = field("im")?;
            let c = C64::new(re, im);
            if (amp - c.norm()).abs() > 1e-6 * c.norm().max(1e-12) {
                return Err(Error::Parse(format!(
                    "line {}: amplitude column disagrees with |re + i im|",
                    lineno + 1
                )));
            }
            complex.push(c);
        }
        if freq.len() < 2 {
            return Err(Error::Parse("spectrum CSV needs at least two bins".into()));
        }
        let bin = freq[1] - freq[0];
        if bin <= 0.0 {
            return Err(Error::Parse("spectrum frequency axis must increase".into()));
        }
        for (k, w) in freq.windows(2).enumerate() {
            if ((w[1] - w[0]) - bin).abs() > 1e-6 * bin {
                return Err(Error::Parse(format!(
                    "spectrum grid not uniform at row {k}"
                )));
            }
        }
        Ok(Self::from_complex(freq, complex, WindowKind::None))
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Absorption-mode spectrum of a complex FID, optionally zero padded.
pub fn fft_spectrum(fid: &FidRecord, zero_pad_factor: usize) -> Result<Spectrum> {
    fft_spectrum_with_window(fid, zero_pad_factor, WindowKind::None)
}

/// Like [`fft_spectrum`] with an apodization window applied first.
pub fn fft_spectrum_with_window(
    fid: &FidRecord,
    zero_pad_factor: usize,
    window: WindowKind,
) -> Result<Spectrum> {
    if zero_pad_factor < 1 {
        return Err(Error::InvalidArgument(
            "zero_pad_factor must be at least 1".into(),
        ));
    }
    let n = fid.values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "FID needs at least two samples".into(),
        ));
    }
    let len = n * zero_pad_factor;
    let mut buf: Vec<C64> = Vec::with_capacity(len);
    for (k, &v) in fid.values.iter().enumerate() {
        let apodized = match window {
            WindowKind::None => v,
            WindowKind::Exponential { rate_per_s } => v * (-rate_per_s * k as f64 * fid.dt_s).exp(),
        };
        // Half weight on the first sample: the discrete analogue of the
        // one-sided integral's endpoint, keeps the baseline flat.
        buf.push(if k == 0 { apodized * 0.5 } else { apodized });
    }
    buf.resize(len, C64::new(0.0, 0.0));

    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let df = 1.0 / (len as f64 * fid.dt_s);
    let half = len / 2;
    let mut freq = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    for j in 0..len {
        // Output slot j holds unshifted bin (j + ceil(len/2)) mod len, so the
        // axis ascends from the most negative frequency through zero at
        // slot floor(len/2), for even and odd lengths alike.
        let m = (j + (len - half)) % len;
        freq.push((j as isize - half as isize) as f64 * df);
        values.push(C64::new(2.0 * fid.dt_s * buf[m].re, 0.0));
    }
    Ok(Spectrum::from_complex(freq, values, window))
}

/// Lorentzian line parameterized by its peak height:
/// `h (G/2)^2 / ((nu - nu0)^2 + (G/2)^2)` with `G` the FWHM.
pub fn lorentzian(nu_hz: f64, position_hz: f64, height: f64, fwhm_hz: f64) -> f64 {
    let g = fwhm_hz / 2.0;
    let d = nu_hz - position_hz;
    height * g * g / (d * d + g * g)
}

/// Location and width estimates for one spectral line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub position_hz: f64,
    /// Full width at half maximum from half-height crossings.
    pub fwhm_hz: f64,
    /// Width of a Lorentzian fitted to samples above 70% of the peak height.
    pub fwhm_lorentz_hz: f64,
    pub height: f64,
    pub position_uncertainty_hz: f64,
}

/// Finds local maxima whose prominence exceeds 5% of the window maximum;
/// positions are refined by three-point parabolic interpolation and widths by
/// linear interpolation of the half-height crossings. Returns up to
/// `max_peaks` peaks ordered by position.
///
/// Prominence is topological: the height of a maximum above the higher of
/// the two valleys separating it from taller terrain (or the window edge).
/// Sampling ripple riding on a line flank has prominence of only the local
/// dip depth and is rejected, while the line itself keeps its full height.
pub fn find_peaks(
    spec: &Spectrum,
    window_hz: (f64, f64),
    max_peaks: usize,
) -> Result<Vec<PeakEstimate>> {
    find_peaks_with_prominence(spec, window_hz, max_peaks, DEFAULT_PROMINENCE)
}

/// [`find_peaks`] with an explicit prominence threshold (fraction of the
/// window maximum).
pub fn find_peaks_with_prominence(
    spec: &Spectrum,
    window_hz: (f64, f64),
    max_peaks: usize,
    prominence: f64,
) -> Result<Vec<PeakEstimate>> {
    let (start, end) = spec.window_indices(window_hz)?;
    if end - start < 3 || max_peaks == 0 {
        return Ok(Vec::new());
    }
    let amp = &spec.amplitude;
    let window_max = amp[start..end].iter().fold(0.0f64, |a, &b| a.max(b));
    let threshold = prominence * window_max;

    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in (start + 1)..(end - 1) {
        if amp[i] > amp[i - 1] && amp[i] >= amp[i + 1] {
            let p = peak_prominence(&amp[start..end], i - start);
            if p > threshold {
                candidates.push((i, amp[i]));
            }
        }
    }
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    candidates.truncate(max_peaks);
    candidates.sort_by_key(|&(i, _)| i);

    let mut peaks = Vec::with_capacity(candidates.len());
    for (idx, _) in candidates {
        peaks.push(estimate_peak(spec, idx, start, end)?);
    }
    Ok(peaks)
}

/// Topological prominence of the local maximum at `idx` within `values`.
fn peak_prominence(values: &[f64], idx: usize) -> f64 {
    let peak = values[idx];
    let mut left_base = peak;
    for j in (0..idx).rev() {
        if values[j] > peak {
            break;
        }
        left_base = left_base.min(values[j]);
    }
    let mut right_base = peak;
    for &v in &values[idx + 1..] {
        if v > peak {
            break;
        }
        right_base = right_base.min(v);
    }
    peak - left_base.max(right_base)
}

/// Refines one detected maximum into a [`PeakEstimate`].
fn estimate_peak(spec: &Spectrum, idx: usize, start: usize, end: usize) -> Result<PeakEstimate> {
    let amp = &spec.amplitude;
    let bin = spec.bin_hz;
    let (ym, y0, yp) = (amp[idx - 1], amp[idx], amp[idx + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let offset = if denom.abs() > 1e-300 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let position = spec.freq_hz[idx] + offset * bin;
    let height = y0 - 0.25 * (ym - yp) * offset;

    // Half-height crossings by linear interpolation, clamped to the window.
    let half = height / 2.0;
    let mut left = spec.freq_hz[start];
    for j in (start..idx).rev() {
        if amp[j] < half {
            let frac = (half - amp[j]) / (amp[j + 1] - amp[j]);
            left = spec.freq_hz[j] + frac * bin;
            break;
        }
    }
    let mut right = spec.freq_hz[end - 1];
    for j in (idx + 1)..end {
        if amp[j] < half {
            let frac = (half - amp[j - 1]) / (amp[j] - amp[j - 1]);
            right = spec.freq_hz[j - 1] + frac * bin;
            break;
        }
    }
    let fwhm = (right - left).max(bin * 1e-3);

    // Lorentzian width from the samples above 70% of the peak height.
    let level = 0.7 * height;
    let mut lo = idx;
    while lo > start && amp[lo - 1] >= level {
        lo -= 1;
    }
    let mut hi = idx;
    while hi + 1 < end && amp[hi + 1] >= level {
        hi += 1;
    }
    let (fwhm_lorentz, position_uncertainty) = if hi - lo + 1 >= 4 {
        let freqs = &spec.freq_hz[lo..=hi];
        let data = &amp[lo..=hi];
        let init = [PeakInit {
            position_hz: position,
            height,
            fwhm_hz: fwhm,
        }];
        let bounds = [(position - fwhm, position + fwhm)];
        match fit_lorentzians_on(freqs, data, &init, &bounds, FitConstraint::None) {
            Ok(fit) if fit.converged => (
                fit.peaks[0].fwhm_lorentz_hz,
                fit.peaks[0].position_uncertainty_hz.max(0.0),
            ),
            _ => (fwhm, bin / 2.0),
        }
    } else {
        (fwhm, bin / 2.0)
    };

    Ok(PeakEstimate {
        position_hz: position,
        fwhm_hz: fwhm,
        fwhm_lorentz_hz: fwhm_lorentz,
        height,
        position_uncertainty_hz: if position_uncertainty > 0.0 {
            position_uncertainty
        } else {
            bin / 2.0
        },
    })
}

/// Scale factor between a thermal spectrum and the sum of its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub lambda: f64,
    /// Minimized integral of the squared difference over the window.
    pub residual: f64,
    pub window_hz: (f64, f64),
}

fn check_common_grid(a: &Spectrum, b: &Spectrum) -> Result<()> {
    if a.freq_hz.len() != b.freq_hz.len() {
        return Err(Error::GridMismatch);
    }
    let tol = 1e-9 * a.bin_hz;
    for (x, y) in a.freq_hz.iter().zip(&b.freq_hz) {
        if (x - y).abs() > tol {
            return Err(Error::GridMismatch);
        }
    }
    Ok(())
}

/// Least-squares scale between the thermal amplitude spectrum and the summed
/// part spectra: the minimizer of `integral (s_T - lambda s_S)^2`.
pub fn fit_decomposition_scale(
    thermal: &Spectrum,
    parts: &[Spectrum; 4],
    window_hz: (f64, f64),
) -> Result<DecompositionResult> {
    for part in parts {
        check_common_grid(thermal, part)?;
    }
    let (start, end) = thermal.window_indices(window_hz)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut summed = vec![0.0; end - start];
    for (offset, s) in summed.iter_mut().enumerate() {
        let k = start + offset;
        *s = parts.iter().map(|p| p.amplitude[k]).sum();
        num += thermal.amplitude[k] * *s;
        den += *s * *s;
    }
    if den <= 0.0 {
        return Err(Error::DegenerateFit(
            "summed spectrum has no energy inside the window".into(),
        ));
    }
    let lambda = num / den;
    let residual = summed
        .iter()
        .enumerate()
        .map(|(offset, s)| (thermal.amplitude[start + offset] - lambda * s).powi(2))
        .sum::<f64>()
        * thermal.bin_hz;
    Ok(DecompositionResult {
        lambda,
        residual,
        window_hz,
    })
}

/// Normalized L1 distance between two amplitude spectra over a window:
/// `sum |a1 - a2| / sum (a1 + a2)`, in [0, 1], exactly symmetric.
pub fn spectral_infidelity(s1: &Spectrum, s2: &Spectrum, window_hz: (f64, f64)) -> Result<f64> {
    check_common_grid(s1, s2)?;
    let (start, end) = s1.window_indices(window_hz)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in start..end {
        num += (s1.amplitude[k] - s2.amplitude[k]).abs();
        den += s1.amplitude[k] + s2.amplitude[k];
    }
    if den <= 0.0 {
        return Err(Error::DegenerateFit(
            "spectra carry no energy inside the window".into(),
        ));
    }
    Ok(num / den)
}

/// Constraint tying parameters across peaks in a multi-Lorentzian fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitConstraint {
    None,
    EqualWidth,
    EqualWidthAndHeight,
}

/// Initial guess for one Lorentzian component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakInit {
    pub position_hz: f64,
    pub height: f64,
    pub fwhm_hz: f64,
}

/// Outcome of a multi-Lorentzian least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLorentzianFit {
    pub peaks: Vec<PeakEstimate>,
    /// Fitted model evaluated on the data grid.
    pub fitted_curve: Vec<f64>,
    pub freq_hz: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub constraint: FitConstraint,
    /// Number of local maxima of the fitted sum; 1 means the components
    /// merge into a single broad feature.
    pub sum_local_maxima: usize,
}

impl MultiLorentzianFit {
    pub fn is_single_fat_peak(&self) -> bool {
        self.sum_local_maxima == 1
    }
}

/// Nonlinear least squares of `n_peaks` Lorentzians against the amplitude
/// spectrum (Levenberg-style damping, analytic Jacobian). Position bounds
/// are enforced by projection after every step. Convergence: relative cost
/// change below 1e-10, or 500 iterations (then flagged unconverged).
pub fn fit_multi_lorentzian(
    spec: &Spectrum,
    n_peaks: usize,
    init: &[PeakInit],
    bounds: &[(f64, f64)],
    constraint: FitConstraint,
) -> Result<MultiLorentzianFit> {
    if !(n_peaks == 3 || n_peaks == 4) {
        return Err(Error::InvalidArgument(format!(
            "n_peaks must be 3 or 4, found {n_peaks}"
        )));
    }
    if init.len() != n_peaks || bounds.len() != n_peaks {
        return Err(Error::InvalidArgument(
            "need one init and one position bound per peak".into(),
        ));
    }
    for (i, (guess, &(lo, hi))) in init.iter().zip(bounds).enumerate() {
        if !(lo <= guess.position_hz && guess.position_hz <= hi) {
            return Err(Error::InvalidArgument(format!(
                "initial position of peak {i} lies outside its bounds"
            )));
        }
    }
    fit_lorentzians_on(&spec.freq_hz, &spec.amplitude, init, bounds, constraint)
}

/// Core fitter over explicit grid/data slices (also used for the 70%-height
/// single-peak width fit).
fn fit_lorentzians_on(
    freq: &[f64],
    data: &[f64],
    init: &[PeakInit],
    bounds: &[(f64, f64)],
    constraint: FitConstraint,
) -> Result<MultiLorentzianFit> {
    let n = init.len();
    let n_params = match constraint {
        FitConstraint::None => 3 * n,
        FitConstraint::EqualWidth => 2 * n + 1,
        FitConstraint::EqualWidthAndHeight => n + 2,
    };
    if data.len() <= n_params {
        return Err(Error::DegenerateFit(format!(
            "{} samples cannot constrain {} parameters",
            data.len(),
            n_params
        )));
    }

    // Parameter vector layout: positions first, then heights (1 if shared),
    // then width(s).
    let mut theta = Vec::with_capacity(n_params);
    theta.extend(init.iter().map(|p| p.position_hz));
    match constraint {
        FitConstraint::None => {
            theta.extend(init.iter().map(|p| p.height));
            theta.extend(init.iter().map(|p| p.fwhm_hz));
        }
        FitConstraint::EqualWidth => {
            theta.extend(init.iter().map(|p| p.height));
            theta.push(init.iter().map(|p| p.fwhm_hz).sum::<f64>() / n as f64);
        }
        FitConstraint::EqualWidthAndHeight => {
            theta.push(init.iter().map(|p| p.height).sum::<f64>() / n as f64);
            theta.push(init.iter().map(|p| p.fwhm_hz).sum::<f64>() / n as f64);
        }
    }

    let height_of = |theta: &[f64], i: usize| match constraint {
        FitConstraint::None | FitConstraint::EqualWidth => theta[n + i],
        FitConstraint::EqualWidthAndHeight => theta[n],
    };
    let width_of = |theta: &[f64], i: usize| match constraint {
        FitConstraint::None => theta[2 * n + i],
        FitConstraint::EqualWidth => theta[2 * n],
        FitConstraint::EqualWidthAndHeight => theta[n + 1],
    };

    let clamp = |theta: &mut [f64]| {
        for i in 0..n {
            theta[i] = theta[i].clamp(bounds[i].0, bounds[i].1);
        }
        let width_floor = 1e-6;
        match constraint {
            FitConstraint::None => {
                for i in 0..n {
                    theta[n + i] = theta[n + i].max(0.0);
                    theta[2 * n + i] = theta[2 * n + i].max(width_floor);
                }
            }
            FitConstraint::EqualWidth => {
                for i in 0..n {
                    theta[n + i] = theta[n + i].max(0.0);
                }
                theta[2 * n] = theta[2 * n].max(width_floor);
            }
            FitConstraint::EqualWidthAndHeight => {
                theta[n] = theta[n].max(0.0);
                theta[n + 1] = theta[n + 1].max(width_floor);
            }
        }
    };

    let model_at = |theta: &[f64], nu: f64| -> f64 {
        (0..n)
            .map(|i| lorentzian(nu, theta[i], height_of(theta, i), width_of(theta, i)))
            .sum()
    };
    let cost_of = |theta: &[f64]| -> f64 {
        freq.iter()
            .zip(data)
            .map(|(&nu, &y)| (y - model_at(theta, nu)).powi(2))
            .sum()
    };

    clamp(&mut theta);
    let mut cost = cost_of(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let m = data.len();
    let mut jac = vec![0.0; m * n_params];
    let mut resid = vec![0.0; m];
    let mut jtj = vec![0.0; n_params * n_params];
    let data_scale: f64 = data.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);

    for _iter in 0..500 {
        iterations += 1;
        // Residuals and analytic Jacobian of the model.
        for (k, (&nu, &y)) in freq.iter().zip(data).enumerate() {
            resid[k] = y - model_at(&theta, nu);
            let row = &mut jac[k * n_params..(k + 1) * n_params];
            for v in row.iter_mut() {
                *v = 0.0;
            }
            for i in 0..n {
                let h = height_of(&theta, i);
                let g = width_of(&theta, i) / 2.0;
                let u = nu - theta[i];
                let denom = u * u + g * g;
                let denom2 = denom * denom;
                let d_pos = h * g * g * 2.0 * u / denom2;
                let d_height = g * g / denom;
                let d_width = h * g * u * u / denom2; // d/dG = (1/2) d/dg
                row[i] += d_pos;
                match constraint {
                    FitConstraint::None => {
                        row[n + i] += d_height;
                        row[2 * n + i] += d_width;
                    }
                    FitConstraint::EqualWidth => {
                        row[n + i] += d_height;
                        row[2 * n] += d_width;
                    }
                    FitConstraint::EqualWidthAndHeight => {
                        row[n] += d_height;
                        row[n + 1] += d_width;
                    }
                }
            }
        }
        // Normal equations.
        let mut grad = vec![0.0; n_params];
        for v in jtj.iter_mut() {
            *v = 0.0;
        }
        for k in 0..m {
            let row = &jac[k * n_params..(k + 1) * n_params];
            for a in 0..n_params {
                grad[a] += row[a] * resid[k];
                for b in a..n_params {
                    jtj[a * n_params + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..n_params {
            for b in 0..a {
                jtj[a * n_params + b] = jtj[b * n_params + a];
            }
        }
        let grad_sup = grad.iter().fold(0.0f64, |acc, &g| acc.max(g.abs()));
        if grad_sup < 1e-12 * data_scale.powi(2).max(1.0) {
            converged = true;
            break;
        }

        let mut improved = false;
        for _try in 0..40 {
            let mut damped = jtj.clone();
            for a in 0..n_params {
                let d = damped[a * n_params + a];
                damped[a * n_params + a] = d + lambda * d.max(1e-12);
            }
            let mut step = grad.clone();
            if !solve_in_place(&mut damped, &mut step, n_params) {
                lambda *= 10.0;
                continue;
            }
            let mut trial = theta.clone();
            for (t, s) in trial.iter_mut().zip(&step) {
                *t += s;
            }
            clamp(&mut trial);
            let trial_cost = cost_of(&trial);
            if trial_cost < cost {
                let rel = (cost - trial_cost) / cost.max(1e-300);
                theta = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !improved {
            // No descent step available; declare convergence only if the
            // gradient is already negligible at the data scale.
            converged = grad_sup < 1e-9 * data_scale.powi(2).max(1.0);
            break;
        }
    }

    // Covariance from the undamped normal equations at the solution.
    let dof = m.saturating_sub(n_params);
    let sigma2 = if dof > 0 { cost / dof as f64 } else { 0.0 };
    let position_sigma: Vec<f64> = (0..n)
        .map(|i| {
            invert_diagonal_entry(&jtj, n_params, i)
                .map(|v| (sigma2 * v).max(0.0).sqrt())
                .unwrap_or(0.0)
        })
        .collect();

    let fitted_curve: Vec<f64> = freq.iter().map(|&nu| model_at(&theta, nu)).collect();
    let sum_local_maxima = count_local_maxima(&fitted_curve);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| theta[a].partial_cmp(&theta[b]).unwrap());
    let peaks = order
        .into_iter()
        .map(|i| PeakEstimate {
            position_hz: theta[i],
            fwhm_hz: width_of(&theta, i),
            fwhm_lorentz_hz: width_of(&theta, i),
            height: height_of(&theta, i),
            position_uncertainty_hz: position_sigma[i],
        })
        .collect();

    Ok(MultiLorentzianFit {
        peaks,
        fitted_curve,
        freq_hz: freq.to_vec(),
        converged,
        iterations,
        cost,
        constraint,
        sum_local_maxima,
    })
}

/// Counts strict local maxima of a sampled curve.
pub fn count_local_maxima(values: &[f64]) -> usize {
    values
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count()
}

/// Gaussian elimination with partial pivoting; solves `A x = b` in place,
/// leaving the solution in `b`. Returns false if singular.
fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    true
}

/// Diagonal entry of the inverse of a symmetric matrix, via one solve.
fn invert_diagonal_entry(a: &[f64], n: usize, index: usize) -> Option<f64> {
    let mut work = a.to_vec();
    let mut rhs = vec![0.0; n];
    rhs[index] = 1.0;
    if solve_in_place(&mut work, &mut rhs, n) {
        Some(rhs[index])
    } else {
        None
    }
}

/// One point of the coupling-magnification sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfidelityResult {
    /// Coupling magnification factor.
    pub n: f64,
    pub delta_s_over_s: f64,
}

/// Settings shared by every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub mc_samples: usize,
    pub acquisition: Acquisition,
    pub zero_pad_factor: usize,
    pub window_hz: (f64, f64),
    pub seed: u64,
}

/// Thermal-spectrum infidelity between the full and secular models as the J
/// couplings are magnified by each value of `n_values`. Both models share
/// the same per-point noise stream, so the curve isolates model error.
pub fn coupling_sweep(
    params: &SpinSystemParams,
    noise: &NoiseModel,
    n_values: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<InfidelityResult>> {
    let mut out = Vec::with_capacity(n_values.len());
    for (idx, &n) in n_values.iter().enumerate() {
        let magnified = magnify_coupling(params, n)?;
        // Independent deterministic sub-seed per sweep point.
        let point_seed = CounterRng::at(settings.seed, 0x53_57_45_45_50 + idx as u64).next_u64();
        let spectrum_of = |kind: HamiltonianKind| -> Result<Spectrum> {
            let fid = fid_noise_averaged(
                InitialState::Thermal,
                &magnified,
                noise,
                settings.mc_samples,
                settings.acquisition,
                kind,
                point_seed,
            )?;
            fft_spectrum(&fid, settings.zero_pad_factor)
        };
        let full = spectrum_of(HamiltonianKind::Full)?;
        let secular = spectrum_of(HamiltonianKind::Secular)?;
        let delta = spectral_infidelity(&full, &secular, settings.window_hz)?;
        out.push(InfidelityResult {
            n,
            delta_s_over_s: delta,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{fid_analytic_averaged, fid_closed_form, FidMeta};
    use crate::model::derived_frequencies;
    use crate::states::PpsLabel;
    use std::f64::consts::PI;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    fn baseline_acq() -> Acquisition {
        Acquisition::baseline()
    }

    fn analytic_spectrum(label: PpsLabel, gamma: f64) -> Spectrum {
        let params = SpinSystemParams::baseline();
        let fid = fid_analytic_averaged(
            InitialState::Pps(label),
            &params,
            gamma,
            params.pps_q,
            baseline_acq(),
            HamiltonianKind::Secular,
        )
        .unwrap();
        fft_spectrum(&fid, 4).unwrap()
    }

    #[test]
    fn constant_fid_peaks_at_dc() {
        let fid = FidRecord {
            dt_s: 2.0e-4,
            values: vec![C64::new(1.0, 0.0); 512],
            meta: FidMeta::default(),
        };
        let spec = fft_spectrum(&fid, 2).unwrap();
        let (imax, _) = spec
            .amplitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!(spec.freq_hz[imax].abs() < spec.bin_hz / 2.0);
    }

    #[test]
    fn damped_line_has_position_and_width_of_the_noise() {
        let spec = analytic_spectrum(PpsLabel::A, 40.0);
        let peaks = find_peaks(&spec, DEFAULT_WINDOW_HZ, 4).unwrap();
        assert_eq!(peaks.len(), 1);
        let peak = &peaks[0];
        assert!((peak.position_hz - 1088.5).abs() < spec.bin_hz / 2.0);
        approx(peak.fwhm_hz, 40.0, 2.0);
        approx(peak.fwhm_lorentz_hz, 40.0, 2.0);
        // Height of the absorption line: 2 q / (pi Gamma).
        approx(
            peak.height,
            2.0 * 0.01 / (PI * 40.0),
            0.02 * 2.0 * 0.01 / (PI * 40.0),
        );
    }

    #[test]
    fn energy_identity_of_the_one_sided_transform() {
        // sum |S|^2 df = dt (Re(x0)^2 + 2 sum_{k>=1} |x_k|^2) for zp >= 2.
        let params = SpinSystemParams::baseline();
        let fid = fid_analytic_averaged(
            InitialState::Thermal,
            &params,
            40.0,
            params.thermal_p,
            Acquisition {
                dt_s: 2.0e-4,
                n_samples: 1000,
            },
            HamiltonianKind::Secular,
        )
        .unwrap();
        let spec = fft_spectrum(&fid, 2).unwrap();
        let lhs: f64 = spec.amplitude.iter().map(|a| a * a).sum::<f64>() * spec.bin_hz;
        let rhs = fid.dt_s
            * (fid.values[0].re.powi(2)
                + 2.0 * fid.values[1..].iter().map(|v| v.norm_sqr()).sum::<f64>());
        assert!((lhs - rhs).abs() < 1e-9 * rhs, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn transform_is_linear() {
        let params = SpinSystemParams::baseline();
        let acq = Acquisition {
            dt_s: 2.0e-4,
            n_samples: 600,
        };
        let f = fid_closed_form(InitialState::Pps(PpsLabel::A), &params, 0.0, 0.01, acq);
        let g = fid_closed_form(InitialState::Pps(PpsLabel::D), &params, 5.0, 0.02, acq);
        let (a, b) = (1.7, -0.4);
        let combined = FidRecord {
            dt_s: acq.dt_s,
            values: f
                .values
                .iter()
                .zip(&g.values)
                .map(|(x, y)| x * a + y * b)
                .collect(),
            meta: FidMeta::default(),
        };
        let sf = fft_spectrum(&f, 2).unwrap();
        let sg = fft_spectrum(&g, 2).unwrap();
        let sc = fft_spectrum(&combined, 2).unwrap();
        let scale = sf
            .complex_values
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        for ((cf, cg), cc) in sf
            .complex_values
            .iter()
            .zip(&sg.complex_values)
            .zip(&sc.complex_values)
        {
            assert!((cf * a + cg * b - cc).norm() < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn modulation_shifts_detected_peaks() {
        let params = SpinSystemParams::baseline();
        let acq = baseline_acq();
        let base = fid_analytic_averaged(
            InitialState::Pps(PpsLabel::B),
            &params,
            40.0,
            0.01,
            acq,
            HamiltonianKind::Secular,
        )
        .unwrap();
        let shift_hz = 37.7;
        let shifted = FidRecord {
            dt_s: acq.dt_s,
            values: base
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v * C64::from_polar(1.0, 2.0 * PI * shift_hz * k as f64 * acq.dt_s))
                .collect(),
            meta: FidMeta::default(),
        };
        let p0 = find_peaks(&fft_spectrum(&base, 4).unwrap(), DEFAULT_WINDOW_HZ, 1).unwrap();
        let p1 = find_peaks(&fft_spectrum(&shifted, 4).unwrap(), DEFAULT_WINDOW_HZ, 1).unwrap();
        let bin = fft_spectrum(&base, 4).unwrap().bin_hz;
        approx(p1[0].position_hz - p0[0].position_hz, shift_hz, bin / 2.0);
    }

    #[test]
    fn analytic_pps_peaks_satisfy_sum_relations() {
        let mut positions = Vec::new();
        for label in PpsLabel::ALL {
            let spec = analytic_spectrum(label, 40.0);
            let peaks = find_peaks(&spec, DEFAULT_WINDOW_HZ, 4).unwrap();
            assert_eq!(peaks.len(), 1, "label {label}");
            positions.push(peaks[0].position_hz);
        }
        approx(
            positions[0] + positions[3],
            positions[1] + positions[2],
            0.2,
        );
        let freqs = derived_frequencies(&SpinSystemParams::baseline());
        for (got, want) in positions.iter().zip(&freqs.peak_hz) {
            approx(*got, *want, 0.2);
        }
    }

    #[test]
    fn synthetic_lorentzian_widths_recovered() {
        let freq: Vec<f64> = (0..2048).map(|k| 800.0 + 0.25 * k as f64).collect();
        let values: Vec<f64> = freq
            .iter()
            .map(|&nu| lorentzian(nu, 1030.0, 1.0, 40.0))
            .collect();
        let spec = Spectrum::from_amplitude(freq, values).unwrap();
        let peaks = find_peaks(&spec, (850.0, 1200.0), 4).unwrap();
        assert_eq!(peaks.len(), 1);
        approx(peaks[0].fwhm_hz, 40.0, 1.0);
        approx(peaks[0].fwhm_lorentz_hz, 40.0, 1.0);
        approx(peaks[0].position_hz, 1030.0, 0.05);
    }

    #[test]
    fn real_only_fid_mirrors_the_line() {
        let spec = {
            let params = SpinSystemParams::baseline();
            let fid = fid_analytic_averaged(
                InitialState::Pps(PpsLabel::A),
                &params,
                40.0,
                0.01,
                baseline_acq(),
                HamiltonianKind::Secular,
            )
            .unwrap()
            .real_only();
            fft_spectrum(&fid, 2).unwrap()
        };
        let pos = find_peaks(&spec, (900.0, 1200.0), 1).unwrap();
        let neg = find_peaks(&spec, (-1200.0, -900.0), 1).unwrap();
        approx(pos[0].position_hz, 1088.5, 0.5);
        approx(neg[0].position_hz, -1088.5, 0.5);
        // Each mirror line carries half the single-sided height.
        approx(neg[0].height / pos[0].height, 1.0, 1e-6);
        approx(pos[0].height, 0.01 / (PI * 40.0), 0.02 * 0.01 / (PI * 40.0));
    }

    #[test]
    fn no_peaks_returns_empty_list() {
        let freq: Vec<f64> = (0..256).map(|k| 800.0 + 2.0 * k as f64).collect();
        let spec = Spectrum::from_amplitude(freq, vec![0.0; 256]).unwrap();
        let peaks = find_peaks(&spec, (850.0, 1200.0), 4).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn window_outside_range_is_rejected() {
        let spec = analytic_spectrum(PpsLabel::A, 40.0);
        assert!(find_peaks(&spec, (0.0, 99_000.0), 4).is_err());
    }

    #[test]
    fn decomposition_scale_examples() {
        let spec = analytic_spectrum(PpsLabel::A, 40.0);
        // Four identical copies: sum is 4x one part, so lambda = 1/4.
        let parts = [spec.clone(), spec.clone(), spec.clone(), spec.clone()];
        let result = fit_decomposition_scale(&spec, &parts, DEFAULT_WINDOW_HZ).unwrap();
        approx(result.lambda, 0.25, 1e-12);
        assert!(result.residual >= 0.0);
        assert!(result.residual < 1e-15);
    }

    #[test]
    fn decomposition_scale_recovers_population_ratio() {
        // Thermal at p and parts at q: lambda = p / q by the sum identity.
        let params = SpinSystemParams::baseline();
        let acq = baseline_acq();
        let gamma = 40.0;
        let thermal = fft_spectrum(
            &fid_analytic_averaged(
                InitialState::Thermal,
                &params,
                gamma,
                params.thermal_p,
                acq,
                HamiltonianKind::Secular,
            )
            .unwrap(),
            4,
        )
        .unwrap();
        let parts: Vec<Spectrum> = PpsLabel::ALL
            .iter()
            .map(|&l| {
                fft_spectrum(
                    &fid_analytic_averaged(
                        InitialState::Pps(l),
                        &params,
                        gamma,
                        params.pps_q,
                        acq,
                        HamiltonianKind::Secular,
                    )
                    .unwrap(),
                    4,
                )
                .unwrap()
            })
            .collect();
        let parts: [Spectrum; 4] = parts.try_into().unwrap();
        let result = fit_decomposition_scale(&thermal, &parts, DEFAULT_WINDOW_HZ).unwrap();
        approx(result.lambda, 1.5, 1e-3);
    }

    #[test]
    fn decomposition_rejects_degenerate_and_mismatched_input() {
        let spec = analytic_spectrum(PpsLabel::A, 40.0);
        let zero =
            Spectrum::from_amplitude(spec.freq_hz.clone(), vec![0.0; spec.freq_hz.len()]).unwrap();
        let parts = [zero.clone(), zero.clone(), zero.clone(), zero];
        assert!(matches!(
            fit_decomposition_scale(&spec, &parts, DEFAULT_WINDOW_HZ),
            Err(Error::DegenerateFit(_))
        ));

        let small = Spectrum::from_amplitude(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        let parts = [small.clone(), small.clone(), small.clone(), small];
        assert!(matches!(
            fit_decomposition_scale(&spec, &parts, DEFAULT_WINDOW_HZ),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn infidelity_examples() {
        let spec = analytic_spectrum(PpsLabel::B, 40.0);
        assert_eq!(
            spectral_infidelity(&spec, &spec, DEFAULT_WINDOW_HZ).unwrap(),
            0.0
        );

        // Disjoint supports: infidelity is exactly 1.
        let freq: Vec<f64> = (0..512).map(|k| 800.0 + k as f64).collect();
        let mut a = vec![0.0; 512];
        let mut b = vec![0.0; 512];
        for v in a.iter_mut().take(80).skip(60) {
            *v = 1.0;
        }
        for v in b.iter_mut().take(230).skip(200) {
            *v = 0.7;
        }
        let sa = Spectrum::from_amplitude(freq.clone(), a).unwrap();
        let sb = Spectrum::from_amplitude(freq, b).unwrap();
        assert_eq!(
            spectral_infidelity(&sa, &sb, DEFAULT_WINDOW_HZ).unwrap(),
            1.0
        );
        // Exactly symmetric.
        assert_eq!(
            spectral_infidelity(&sa, &sb, DEFAULT_WINDOW_HZ).unwrap(),
            spectral_infidelity(&sb, &sa, DEFAULT_WINDOW_HZ).unwrap()
        );
    }

    #[test]
    fn single_lorentzian_fit_recovers_truth_from_far_inits() {
        let freq: Vec<f64> = (0..1400).map(|k| 850.0 + 0.25 * k as f64).collect();
        let values: Vec<f64> = freq
            .iter()
            .map(|&nu| lorentzian(nu, 1030.0, 1.0, 40.0))
            .collect();
        let spec = Spectrum::from_amplitude(freq, values).unwrap();
        let init = [
            PeakInit {
                position_hz: 1027.0,
                height: 0.8,
                fwhm_hz: 55.0,
            },
            PeakInit {
                position_hz: 900.0,
                height: 0.2,
                fwhm_hz: 40.0,
            },
            PeakInit {
                position_hz: 1150.0,
                height: 0.2,
                fwhm_hz: 40.0,
            },
        ];
        let bounds = [(1020.0, 1040.0), (890.0, 910.0), (1140.0, 1160.0)];
        let fit = fit_multi_lorentzian(&spec, 3, &init, &bounds, FitConstraint::None).unwrap();
        assert!(fit.converged);
        let dominant = fit
            .peaks
            .iter()
            .max_by(|a, b| a.height.partial_cmp(&b.height).unwrap())
            .unwrap();
        approx(dominant.position_hz, 1030.0, 0.5);
        approx(dominant.fwhm_hz, 40.0, 1.0);
    }

    #[test]
    fn four_peak_fit_recovers_separated_lines() {
        let truth = [
            (971.5, 0.9, 38.0),
            (1020.5, 1.0, 40.0),
            (1100.0, 0.7, 35.0),
            (1180.0, 0.8, 42.0),
        ];
        let freq: Vec<f64> = (0..1600).map(|k| 900.0 + 0.25 * k as f64).collect();
        let values: Vec<f64> = freq
            .iter()
            .map(|&nu| truth.iter().map(|&(p, h, w)| lorentzian(nu, p, h, w)).sum())
            .collect();
        let spec = Spectrum::from_amplitude(freq, values).unwrap();
        let init: Vec<PeakInit> = truth
            .iter()
            .map(|&(p, h, w)| PeakInit {
                position_hz: p + 3.0,
                height: h * 0.7,
                fwhm_hz: w + 8.0,
            })
            .collect();
        let bounds: Vec<(f64, f64)> = truth
            .iter()
            .map(|&(p, _, _)| (p - 10.0, p + 10.0))
            .collect();
        let fit = fit_multi_lorentzian(&spec, 4, &init, &bounds, FitConstraint::None).unwrap();
        assert!(fit.converged);
        for (peak, &(p, _, _)) in fit.peaks.iter().zip(&truth) {
            approx(peak.position_hz, p, 1.0);
        }
    }

    #[test]
    fn truth_initialized_fit_has_negligible_cost() {
        let truth = [
            (971.5, 1.0, 40.0),
            (1020.5, 1.0, 40.0),
            (1039.5, 1.0, 40.0),
            (1088.5, 1.0, 40.0),
        ];
        let freq: Vec<f64> = (0..1400).map(|k| 850.0 + 0.25 * k as f64).collect();
        let values: Vec<f64> = freq
            .iter()
            .map(|&nu| truth.iter().map(|&(p, h, w)| lorentzian(nu, p, h, w)).sum())
            .collect();
        let n_bins = freq.len() as f64;
        let spec = Spectrum::from_amplitude(freq, values).unwrap();
        let init: Vec<PeakInit> = truth
            .iter()
            .map(|&(p, h, w)| PeakInit {
                position_hz: p,
                height: h,
                fwhm_hz: w,
            })
            .collect();
        let bounds: Vec<(f64, f64)> = truth
            .iter()
            .map(|&(p, _, _)| (p - 10.0, p + 10.0))
            .collect();
        let fit = fit_multi_lorentzian(&spec, 4, &init, &bounds, FitConstraint::None).unwrap();
        assert!(fit.converged);
        assert!(fit.cost < 1e-16 * n_bins, "cost {:.3e}", fit.cost);
    }

    #[test]
    fn bounds_are_honored() {
        let freq: Vec<f64> = (0..1400).map(|k| 850.0 + 0.25 * k as f64).collect();
        let values: Vec<f64> = freq
            .iter()
            .map(|&nu| lorentzian(nu, 1035.0, 1.0, 50.0))
            .collect();
        let spec = Spectrum::from_amplitude(freq, values).unwrap();
        // True line sits outside every allowed range; positions must stay inside.
        let init = [
            PeakInit {
                position_hz: 955.0,
                height: 0.5,
                fwhm_hz: 40.0,
            },
            PeakInit {
                position_hz: 1000.0,
                height: 0.5,
                fwhm_hz: 40.0,
            },
            PeakInit {
                position_hz: 1090.0,
                height: 0.5,
                fwhm_hz: 40.0,
            },
        ];
        let bounds = [(945.0, 965.0), (990.0, 1010.0), (1080.0, 1100.0)];
        let fit = fit_multi_lorentzian(&spec, 3, &init, &bounds, FitConstraint::None).unwrap();
        for (peak, &(lo, hi)) in fit.peaks.iter().zip(&bounds) {
            assert!(peak.position_hz >= lo && peak.position_hz <= hi);
        }
    }

    #[test]
    fn fit_rejects_malformed_requests() {
        let spec = analytic_spectrum(PpsLabel::A, 40.0);
        let init = [PeakInit {
            position_hz: 1000.0,
            height: 1.0,
            fwhm_hz: 40.0,
        }];
        let bounds = [(990.0, 1010.0)];
        assert!(fit_multi_lorentzian(&spec, 1, &init, &bounds, FitConstraint::None).is_err());
        assert!(fit_multi_lorentzian(&spec, 3, &init, &bounds, FitConstraint::None).is_err());
        let bad_init = [
            PeakInit {
                position_hz: 2000.0,
                height: 1.0,
                fwhm_hz: 40.0,
            },
            PeakInit {
                position_hz: 1000.0,
                height: 1.0,
                fwhm_hz: 40.0,
            },
            PeakInit {
                position_hz: 1100.0,
                height: 1.0,
                fwhm_hz: 40.0,
            },
        ];
        let bad_bounds = [(990.0, 1010.0), (990.0, 1010.0), (1090.0, 1110.0)];
        assert!(
            fit_multi_lorentzian(&spec, 3, &bad_init, &bad_bounds, FitConstraint::None).is_err()
        );
    }

    #[test]
    fn sweep_vanishes_without_coupling_and_is_deterministic() {
        let params = SpinSystemParams::baseline();
        let noise = NoiseModel::lorentzian(40.0);
        let settings = SweepSettings {
            mc_samples: 16,
            acquisition: Acquisition {
                dt_s: 2.0e-4,
                n_samples: 512,
            },
            zero_pad_factor: 2,
            window_hz: DEFAULT_WINDOW_HZ,
            seed: 5,
        };
        let curve = coupling_sweep(&params, &noise, &[0.0, 1.0], &settings).unwrap();
        // J = 0 makes the two Hamiltonians bit-identical.
        assert_eq!(curve[0].delta_s_over_s, 0.0);
        assert!(curve[1].delta_s_over_s > 0.0);
        let again = coupling_sweep(&params, &noise, &[0.0, 1.0], &settings).unwrap();
        assert_eq!(curve, again);
    }

    #[test]
    fn spectrum_csv_round_trip() {
        let spec = analytic_spectrum(PpsLabel::C, 40.0);
        let mut buf = Vec::new();
        spec.write_csv(&mut buf).unwrap();
        let back = Spectrum::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.freq_hz, spec.freq_hz);
        assert_eq!(back.complex_values, spec.complex_values);
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn odd_length_transforms_center_correctly() {
        // A pure oscillation lands on its frequency even for odd lengths,
        // where the zero bin sits at slot floor(len/2).
        let dt = 1.0e-3;
        let nu = 117.0;
        let n = 501;
        let fid = FidRecord {
            dt_s: dt,
            values: (0..n)
                .map(|k| C64::from_polar(1.0, 2.0 * PI * nu * k as f64 * dt))
                .collect(),
            meta: FidMeta::default(),
        };
        let spec = fft_spectrum(&fid, 1).unwrap();
        assert_eq!(spec.freq_hz.len(), n);
        let zero_slot = n / 2;
        assert!(spec.freq_hz[zero_slot].abs() < 1e-9);
        let (imax, _) = spec
            .amplitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!(
            (spec.freq_hz[imax] - nu).abs() <= spec.bin_hz,
            "peak at {} Hz",
            spec.freq_hz[imax]
        );
    }

    #[test]
    fn zero_pad_factor_must_be_positive() {
        let params = SpinSystemParams::baseline();
        let fid = fid_closed_form(
            InitialState::Thermal,
            &params,
            0.0,
            0.01,
            Acquisition {
                dt_s: 2.0e-4,
                n_samples: 64,
            },
        );
        assert!(fft_spectrum(&fid, 0).is_err());
    }
}
