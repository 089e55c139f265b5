//! Subcommand implementations: simulation runs, decomposition reports,
//! constrained fitting, the coupling sweep, Allan analysis, and FID import.
//! Every command is a pure function of (config, flags, seed): identical
//! invocations produce byte-identical files.

use crate::config::ExperimentConfig;
use crate::plot::{render, Plot, Series, PALETTE};
use anyhow::{bail, Context, Result};
use fresure::dynamics::{fid_noise_averaged, FidRecord};
use fresure::metrology::{allan_deviation, resolution_limit, AllanResult};
use fresure::model::{CounterRng, HamiltonianKind};
use fresure::spectra::{
    coupling_sweep, fft_spectrum_with_window, find_peaks_with_prominence, fit_decomposition_scale,
    fit_multi_lorentzian, FitConstraint, MultiLorentzianFit, PeakEstimate, PeakInit, Spectrum,
    SweepSettings, WindowKind,
};
use fresure::states::{InitialState, PpsLabel};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn apodization(config: &ExperimentConfig) -> WindowKind {
    if config.analysis.line_broadening_hz > 0.0 {
        WindowKind::Exponential {
            rate_per_s: PI * config.analysis.line_broadening_hz,
        }
    } else {
        WindowKind::None
    }
}

fn spectrum_of(config: &ExperimentConfig, fid: &FidRecord) -> Result<Spectrum> {
    Ok(fft_spectrum_with_window(
        fid,
        config.analysis.zero_pad_factor,
        apodization(config),
    )?)
}

/// Points of a spectrum restricted to the analysis window.
fn window_points(spec: &Spectrum, window: (f64, f64)) -> Vec<(f64, f64)> {
    spec.freq_hz
        .iter()
        .zip(&spec.amplitude)
        .filter(|(&f, _)| f >= window.0 && f <= window.1)
        .map(|(&f, &a)| (f, a))
        .collect()
}

pub fn all_states() -> [InitialState; 5] {
    [
        InitialState::Thermal,
        InitialState::Pps(PpsLabel::A),
        InitialState::Pps(PpsLabel::B),
        InitialState::Pps(PpsLabel::C),
        InitialState::Pps(PpsLabel::D),
    ]
}

pub fn simulate(
    config: &ExperimentConfig,
    states: &[InitialState],
    model: HamiltonianKind,
    out_dir: &Path,
    n_mc: usize,
    seed: u64,
    real_only: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut spectra: Vec<(InitialState, Spectrum)> = Vec::new();
    for &state in states {
        let mut fid = fid_noise_averaged(
            state,
            &config.system,
            &config.noise,
            n_mc,
            config.acquisition,
            model,
            seed,
        )?;
        if real_only {
            fid = fid.real_only();
        }
        let fid_path = out_dir.join(format!("fid_{state}.csv"));
        fid.save_csv(&fid_path)
            .with_context(|| format!("cannot write {}", fid_path.display()))?;
        let spec = spectrum_of(config, &fid)?;
        let spec_path = out_dir.join(format!("spectrum_{state}.csv"));
        spec.save_csv(&spec_path)
            .with_context(|| format!("cannot write {}", spec_path.display()))?;
        println!("wrote {} and {}", fid_path.display(), spec_path.display());
        spectra.push((state, spec));
    }

    // Full run: overlay all five spectra plus the scaled sum of the parts and
    // report how closely the sum reproduces the thermal spectrum. The sum is
    // taken on the signed spectra, the quantity the decomposition identity
    // constrains.
    if states.len() == 5 {
        let window = config.analysis.window_hz;
        let thermal = &spectra[0].1;
        let ratio = config.system.thermal_p / config.system.pps_q;
        let summed: Vec<f64> = (0..thermal.complex_values.len())
            .map(|k| {
                ratio
                    * spectra[1..]
                        .iter()
                        .map(|(_, s)| s.complex_values[k].re)
                        .sum::<f64>()
            })
            .collect();
        let sum_spec = Spectrum::from_amplitude(thermal.freq_hz.clone(), summed)?;
        let sum_path = out_dir.join("spectrum_sum.csv");
        sum_spec
            .save_csv(&sum_path)
            .with_context(|| format!("cannot write {}", sum_path.display()))?;

        let peak = thermal.amplitude.iter().fold(0.0f64, |a, &b| a.max(b));
        let max_dev = thermal
            .complex_values
            .iter()
            .zip(&sum_spec.complex_values)
            .map(|(a, b)| (a.re - b.re).abs())
            .fold(0.0, f64::max);
        println!(
            "wrote {}; sum-vs-thermal max deviation {:.3e} ({:.3e} of peak)",
            sum_path.display(),
            max_dev,
            max_dev / peak
        );

        let mut series = vec![Series {
            label: "thermal".into(),
            points: window_points(thermal, window),
            color: PALETTE[0],
            dashed: false,
        }];
        for (i, (state, spec)) in spectra[1..].iter().enumerate() {
            series.push(Series {
                label: state.to_string(),
                points: window_points(spec, window),
                color: PALETTE[1 + i],
                dashed: true,
            });
        }
        series.push(Series {
            label: "sum x p/q".into(),
            points: window_points(&sum_spec, window),
            color: PALETTE[5],
            dashed: false,
        });
        let plot = Plot::new(
            &format!("Spectral decomposition ({model} model, {n_mc} runs)"),
            "frequency (Hz)",
            "amplitude",
        );
        let svg_path = out_dir.join("spectra_overlay.svg");
        write_file(&svg_path, &render(&plot, &series))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct DecomposeReport {
    lambda: f64,
    residual: f64,
    window_hz: (f64, f64),
    peaks: BTreeMap<String, Option<PeakEstimate>>,
}

/// Linear interpolation of a spectrum onto a target grid.
fn resample_onto(spec: &Spectrum, freq: &[f64]) -> Result<Spectrum> {
    let values: Vec<f64> = freq
        .iter()
        .map(|&f| {
            if f <= spec.freq_hz[0] {
                return spec.amplitude[0];
            }
            if f >= *spec.freq_hz.last().unwrap() {
                return *spec.amplitude.last().unwrap();
            }
            let i = spec.freq_hz.partition_point(|&g| g <= f) - 1;
            let frac = (f - spec.freq_hz[i]) / spec.bin_hz;
            spec.amplitude[i] * (1.0 - frac) + spec.amplitude[i + 1] * frac
        })
        .collect();
    Ok(Spectrum::from_amplitude(freq.to_vec(), values)?)
}

pub fn decompose(
    config: &ExperimentConfig,
    thermal_path: &Path,
    pps_paths: &[PathBuf],
    window: Option<(f64, f64)>,
    resample: bool,
    out: &Path,
    svg: Option<&Path>,
) -> Result<()> {
    let window = window.unwrap_or(config.analysis.window_hz);
    let thermal = Spectrum::load_csv(thermal_path)
        .with_context(|| format!("cannot load {}", thermal_path.display()))?;
    let mut parts = Vec::new();
    for path in pps_paths {
        let mut part =
            Spectrum::load_csv(path).with_context(|| format!("cannot load {}", path.display()))?;
        let same_grid = part.freq_hz.len() == thermal.freq_hz.len()
            && part
                .freq_hz
                .iter()
                .zip(&thermal.freq_hz)
                .all(|(a, b)| (a - b).abs() < 1e-9 * thermal.bin_hz);
        if !same_grid {
            if resample {
                part = resample_onto(&part, &thermal.freq_hz)?;
            } else {
                bail!(
                    "{} is on a different frequency grid (rerun with --resample to interpolate)",
                    path.display()
                );
            }
        }
        parts.push(part);
    }
    let parts: [Spectrum; 4] = parts
        .try_into()
        .map_err(|_| anyhow::anyhow!("need exactly four pseudo-pure-state spectra"))?;

    let result = fit_decomposition_scale(&thermal, &parts, window)?;

    let mut peaks = BTreeMap::new();
    for (label, part) in PpsLabel::ALL.iter().zip(&parts) {
        let found = find_peaks_with_prominence(part, window, 4, config.analysis.prominence)?;
        let top = found
            .into_iter()
            .max_by(|a, b| a.height.partial_cmp(&b.height).unwrap());
        peaks.insert(label.to_string(), top);
    }
    let report = DecomposeReport {
        lambda: result.lambda,
        residual: result.residual,
        window_hz: window,
        peaks,
    };
    write_file(
        out,
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;
    println!(
        "wrote {}; lambda {:.6}, residual {:.3e}",
        out.display(),
        result.lambda,
        result.residual
    );

    if let Some(svg_path) = svg {
        let summed: Vec<f64> = (0..thermal.amplitude.len())
            .map(|k| result.lambda * parts.iter().map(|p| p.amplitude[k]).sum::<f64>())
            .collect();
        let sum_spec = Spectrum::from_amplitude(thermal.freq_hz.clone(), summed)?;
        let mut series = vec![Series {
            label: "thermal".into(),
            points: window_points(&thermal, window),
            color: PALETTE[0],
            dashed: false,
        }];
        for (i, (label, part)) in PpsLabel::ALL.iter().zip(&parts).enumerate() {
            series.push(Series {
                label: format!("pps{label}"),
                points: window_points(part, window),
                color: PALETTE[1 + i],
                dashed: true,
            });
        }
        series.push(Series {
            label: "lambda x sum".into(),
            points: window_points(&sum_spec, window),
            color: PALETTE[5],
            dashed: false,
        });
        let plot = Plot::new(
            "Physical spectral decomposition",
            "frequency (Hz)",
            "amplitude",
        );
        write_file(svg_path, &render(&plot, &series))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    constraint: FitConstraint,
    converged: bool,
    iterations: usize,
    cost: f64,
    sum_local_maxima: usize,
    single_fat_peak: bool,
    peaks: Vec<PeakEstimate>,
}

pub struct FitArgs<'a> {
    pub spectrum: &'a Path,
    pub n_peaks: usize,
    pub constraint: FitConstraint,
    pub inits: Vec<PeakInit>,
    pub bounds: Vec<(f64, f64)>,
    pub out: &'a Path,
    pub svg: Option<&'a Path>,
    pub allow_unconverged: bool,
}

pub fn fit(args: FitArgs<'_>) -> Result<()> {
    let spec = Spectrum::load_csv(args.spectrum)
        .with_context(|| format!("cannot load {}", args.spectrum.display()))?;
    if args.inits.len() != args.n_peaks {
        bail!(
            "--peaks {} needs exactly {} --init entries, got {}",
            args.n_peaks,
            args.n_peaks,
            args.inits.len()
        );
    }
    // Positions default to a +/- 10 Hz box around each guess.
    let bounds: Vec<(f64, f64)> = if args.bounds.is_empty() {
        args.inits
            .iter()
            .map(|p| (p.position_hz - 10.0, p.position_hz + 10.0))
            .collect()
    } else if args.bounds.len() == args.n_peaks {
        args.bounds.clone()
    } else {
        bail!("--bounds must appear once per peak or not at all");
    };

    let result: MultiLorentzianFit =
        fit_multi_lorentzian(&spec, args.n_peaks, &args.inits, &bounds, args.constraint)?;
    let report = FitReport {
        constraint: result.constraint,
        converged: result.converged,
        iterations: result.iterations,
        cost: result.cost,
        sum_local_maxima: result.sum_local_maxima,
        single_fat_peak: result.is_single_fat_peak(),
        peaks: result.peaks.clone(),
    };
    write_file(
        args.out,
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;
    println!(
        "wrote {}; converged {}, cost {:.3e}, fitted sum has {} local maximum(s)",
        args.out.display(),
        result.converged,
        result.cost,
        result.sum_local_maxima
    );

    if let Some(svg_path) = args.svg {
        let lo = bounds.iter().map(|b| b.0).fold(f64::INFINITY, f64::min) - 100.0;
        let hi = bounds.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max) + 100.0;
        let window = (
            lo.max(spec.freq_hz[0]),
            hi.min(*spec.freq_hz.last().unwrap()),
        );
        let fitted_points: Vec<(f64, f64)> = result
            .freq_hz
            .iter()
            .zip(&result.fitted_curve)
            .filter(|(&f, _)| f >= window.0 && f <= window.1)
            .map(|(&f, &v)| (f, v))
            .collect();
        let series = vec![
            Series {
                label: "data".into(),
                points: window_points(&spec, window),
                color: PALETTE[0],
                dashed: false,
            },
            Series {
                label: "fitted sum".into(),
                points: fitted_points,
                color: PALETTE[1],
                dashed: false,
            },
        ];
        let plot = Plot::new("Multi-Lorentzian fit", "frequency (Hz)", "amplitude");
        write_file(svg_path, &render(&plot, &series))?;
        println!("wrote {}", svg_path.display());
    }

    if !result.converged && !args.allow_unconverged {
        bail!("fit did not converge (pass --allow-unconverged to accept the diagnostic result)");
    }
    Ok(())
}

pub fn sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let settings = SweepSettings {
        mc_samples: config.mc.n_mc,
        acquisition: config.acquisition,
        zero_pad_factor: config.analysis.zero_pad_factor,
        window_hz: config.analysis.window_hz,
        seed: config.mc.seed,
    };
    let curve = coupling_sweep(
        &config.system,
        &config.noise,
        &config.sweep.n_values,
        &settings,
    )?;

    let mut csv = String::from("n,delta_s_over_s\n");
    for point in &curve {
        csv.push_str(&format!("{:.16e},{:.16e}\n", point.n, point.delta_s_over_s));
    }
    let csv_path = out_dir.join("infidelity.csv");
    write_file(&csv_path, &csv)?;
    println!("wrote {}", csv_path.display());

    if let Some(threshold) = config.sweep.threshold {
        let valid: Vec<f64> = curve
            .iter()
            .filter(|p| p.delta_s_over_s <= threshold)
            .map(|p| p.n)
            .collect();
        match valid.last() {
            Some(&n_max) => println!(
                "weak-coupling approximation valid up to n <= {n_max} (infidelity threshold {threshold})"
            ),
            None => println!(
                "no sweep point stays below the infidelity threshold {threshold}"
            ),
        }
    }

    let mut plot = Plot::new(
        "Spectral infidelity vs coupling magnification",
        "coupling magnification n",
        "infidelity",
    );
    plot.threshold = config.sweep.threshold;
    let series = [Series {
        label: "full vs secular".into(),
        points: curve.iter().map(|p| (p.n, p.delta_s_over_s)).collect(),
        color: PALETTE[0],
        dashed: false,
    }];
    let svg_path = out_dir.join("infidelity.svg");
    write_file(&svg_path, &render(&plot, &series))?;
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn read_series_csv(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(e) if i == 0 => {
                // Permit a single header line.
                let _ = e;
            }
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 1),
        }
    }
    if values.is_empty() {
        bail!("{} holds no numeric data", path.display());
    }
    Ok(values)
}

fn allan_csv(results: &[(String, AllanResult)]) -> String {
    let mut csv = String::from("m");
    for (label, _) in results {
        csv.push_str(&format!(",sigma_{label}"));
    }
    csv.push('\n');
    let m_values = &results[0].1.m_values;
    for (row, &m) in m_values.iter().enumerate() {
        csv.push_str(&m.to_string());
        for (_, r) in results {
            csv.push_str(&format!(",{:.16e}", r.sigma_hz[row]));
        }
        csv.push('\n');
    }
    csv
}

fn render_allan_svg(results: &[(String, AllanResult)], out: &Path) -> Result<()> {
    let mut plot = Plot::new(
        "Allan deviation vs averaging size",
        "averaged measurements M",
        "sigma (Hz)",
    );
    plot.log_x = true;
    plot.log_y = true;
    let series: Vec<Series> = results
        .iter()
        .enumerate()
        .map(|(i, (label, r))| Series {
            label: label.clone(),
            points: r
                .m_values
                .iter()
                .zip(&r.sigma_hz)
                .filter(|(_, &s)| s > 0.0)
                .map(|(&m, &s)| (m as f64, s))
                .collect(),
            color: PALETTE[i % PALETTE.len()],
            dashed: false,
        })
        .collect();
    write_file(out, &render(&plot, &series))
}

pub fn allan_from_series(input: &Path, m_values: &[usize], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let series = read_series_csv(input)?;
    let result = allan_deviation(&series, m_values)?;
    let (sigma_min, m_at_min) = resolution_limit(&result);
    println!("minimum sigma {sigma_min:.4} Hz at M = {m_at_min}");
    let results = vec![("series".to_string(), result)];
    let csv_path = out_dir.join("allan.csv");
    write_file(&csv_path, &allan_csv(&results))?;
    let svg_path = out_dir.join("allan.svg");
    render_allan_svg(&results, &svg_path)?;
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}

/// Pipeline mode: repeat simulate -> spectrum -> peak position per
/// pseudo-pure state, then take the Allan deviation of each position series.
pub fn allan_pipeline(
    config: &ExperimentConfig,
    repetitions: usize,
    m_values: &[usize],
    model: HamiltonianKind,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut results = Vec::new();
    for label in PpsLabel::ALL {
        let mut positions = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            // Independent deterministic sub-seed per repetition.
            let seed = CounterRng::at(config.mc.seed, 0x0041_4C4C_414E + rep as u64).next_u64();
            let fid = fid_noise_averaged(
                InitialState::Pps(label),
                &config.system,
                &config.noise,
                config.mc.n_mc,
                config.acquisition,
                model,
                seed,
            )?;
            let spec = spectrum_of(config, &fid)?;
            let peaks = find_peaks_with_prominence(
                &spec,
                config.analysis.window_hz,
                1,
                config.analysis.prominence,
            )?;
            match peaks.first() {
                Some(p) => positions.push(p.position_hz),
                None => bail!("repetition {rep}: no peak found for pps{label}"),
            }
        }
        let result = allan_deviation(&positions, m_values)?;
        let (sigma_min, m_at_min) = resolution_limit(&result);
        println!("pps{label}: minimum sigma {sigma_min:.4} Hz at M = {m_at_min}");
        results.push((format!("pps{label}"), result));
    }
    let csv_path = out_dir.join("allan_pipeline.csv");
    write_file(&csv_path, &allan_csv(&results))?;
    let svg_path = out_dir.join("allan_pipeline.svg");
    render_allan_svg(&results, &svg_path)?;
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}

pub fn import_fid(
    config: &ExperimentConfig,
    input: &Path,
    out: &Path,
    zero_pad: Option<usize>,
    svg: Option<&Path>,
) -> Result<()> {
    let fid =
        FidRecord::load_csv(input).with_context(|| format!("cannot load {}", input.display()))?;
    let spec = fft_spectrum_with_window(
        &fid,
        zero_pad.unwrap_or(config.analysis.zero_pad_factor),
        apodization(config),
    )?;
    spec.save_csv(out)
        .with_context(|| format!("cannot write {}", out.display()))?;
    println!("wrote {}", out.display());

    if let Some(svg_path) = svg {
        let window = config.analysis.window_hz;
        let in_range = window.0 >= spec.freq_hz[0] && window.1 <= *spec.freq_hz.last().unwrap();
        let window = if in_range {
            window
        } else {
            (spec.freq_hz[0], *spec.freq_hz.last().unwrap())
        };
        let series = [Series {
            label: "spectrum".into(),
            points: window_points(&spec, window),
            color: PALETTE[0],
            dashed: false,
        }];
        let plot = Plot::new("Imported FID spectrum", "frequency (Hz)", "amplitude");
        write_file(svg_path, &render(&plot, &series))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}
