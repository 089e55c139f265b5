//! `fresure` — simulate and analyse frequency super-resolution experiments
//! on a weakly coupled three-spin system.

mod commands;
mod config;
mod plot;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use config::ExperimentConfig;
use fresure::model::HamiltonianKind;
use fresure::spectra::{FitConstraint, PeakInit};
use fresure::states::{InitialState, PpsLabel};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fresure",
    about = "Three-spin NMR simulator and spectral decomposition toolkit",
    version
)]
struct Cli {
    /// JSON experiment config; baseline defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StateArg {
    All,
    Thermal,
    PpsA,
    PpsB,
    PpsC,
    PpsD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Full,
    Secular,
}

impl From<ModelArg> for HamiltonianKind {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::Full => HamiltonianKind::Full,
            ModelArg::Secular => HamiltonianKind::Secular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstraintArg {
    None,
    EqualWidth,
    EqualWidthAndHeight,
}

impl From<ConstraintArg> for FitConstraint {
    fn from(value: ConstraintArg) -> Self {
        match value {
            ConstraintArg::None => FitConstraint::None,
            ConstraintArg::EqualWidth => FitConstraint::EqualWidth,
            ConstraintArg::EqualWidthAndHeight => FitConstraint::EqualWidthAndHeight,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noise-averaged FIDs and spectra for the chosen initial states.
    Simulate {
        #[arg(long, value_enum, default_value_t = StateArg::All)]
        state: StateArg,
        #[arg(long, value_enum, default_value_t = ModelArg::Full)]
        model: ModelArg,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the configured Monte Carlo sample count.
        #[arg(long)]
        mc: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Drop the quadrature channel before writing and transforming.
        #[arg(long)]
        real_only: bool,
    },
    /// Fit the decomposition scale between a thermal spectrum and four
    /// pseudo-pure-state spectra, with per-state peak metrics.
    Decompose {
        #[arg(long)]
        thermal: PathBuf,
        /// Four spectrum CSVs in A, B, C, D order.
        #[arg(long, num_args = 4)]
        pps: Vec<PathBuf>,
        /// Analysis window "lo,hi" in Hz (default from config).
        #[arg(long)]
        window: Option<String>,
        /// Interpolate part spectra onto the thermal grid if they differ.
        #[arg(long)]
        resample: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Constrained multi-Lorentzian least squares on a spectrum CSV.
    Fit {
        #[arg(long)]
        spectrum: PathBuf,
        /// Number of Lorentzian components (3 or 4).
        #[arg(long)]
        peaks: usize,
        #[arg(long, value_enum, default_value_t = ConstraintArg::None)]
        constraint: ConstraintArg,
        /// Initial guess per peak as "position:height:fwhm" (repeat per peak).
        #[arg(long = "init")]
        inits: Vec<String>,
        /// Position bounds per peak as "lo:hi"; defaults to init +/- 10 Hz.
        #[arg(long = "bounds")]
        bounds: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Exit 0 even when the fit is flagged unconverged.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Sweep the coupling magnification and record the secular-vs-full
    /// spectral infidelity curve.
    Sweep {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Allan deviation of a measurement series, or of simulated repeated
    /// peak-position measurements (--pipeline).
    Allan {
        /// Single-column CSV of measurements (Hz).
        #[arg(long, conflicts_with = "pipeline")]
        input: Option<PathBuf>,
        /// Simulate repeated measurements for each pseudo-pure state.
        #[arg(long)]
        pipeline: bool,
        /// Repetitions in pipeline mode.
        #[arg(long, default_value_t = 64)]
        repetitions: usize,
        #[arg(long, value_enum, default_value_t = ModelArg::Secular)]
        model: ModelArg,
        /// Averaging group sizes, e.g. "1,2,4,8,16".
        #[arg(long)]
        m: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Transform an FID CSV into a spectrum CSV.
    ImportFid {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        zero_pad: Option<usize>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("{what} must be 'lo,hi', got '{text}'");
    }
    Ok((
        parts[0]
            .trim()
            .parse()
            .with_context(|| format!("bad {what}"))?,
        parts[1]
            .trim()
            .parse()
            .with_context(|| format!("bad {what}"))?,
    ))
}

fn parse_init(text: &str) -> Result<PeakInit> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("--init must be 'position:height:fwhm', got '{text}'");
    }
    Ok(PeakInit {
        position_hz: parts[0].trim().parse().context("bad init position")?,
        height: parts[1].trim().parse().context("bad init height")?,
        fwhm_hz: parts[2].trim().parse().context("bad init fwhm")?,
    })
}

fn parse_bound(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        bail!("--bounds must be 'lo:hi', got '{text}'");
    }
    Ok((
        parts[0].trim().parse().context("bad bound")?,
        parts[1].trim().parse().context("bad bound")?,
    ))
}

fn parse_m_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| p.trim().parse::<usize>().context("bad --m entry"))
        .collect()
}

fn main() -> Result<()> {
    // FRESURE_THREADS caps the rayon worker count; results are identical for
    // any value, this only trades latency for cores.
    if let Ok(value) = std::env::var("FRESURE_THREADS") {
        let threads: usize = value
            .parse()
            .context("FRESURE_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }

    let cli = Cli::parse();
    let config = ExperimentConfig::load(cli.config.as_deref())?;

    match cli.command {
        Command::Simulate {
            state,
            model,
            out_dir,
            mc,
            seed,
            real_only,
        } => {
            let states: Vec<InitialState> = match state {
                StateArg::All => commands::all_states().to_vec(),
                StateArg::Thermal => vec![InitialState::Thermal],
                StateArg::PpsA => vec![InitialState::Pps(PpsLabel::A)],
                StateArg::PpsB => vec![InitialState::Pps(PpsLabel::B)],
                StateArg::PpsC => vec![InitialState::Pps(PpsLabel::C)],
                StateArg::PpsD => vec![InitialState::Pps(PpsLabel::D)],
            };
            commands::simulate(
                &config,
                &states,
                model.into(),
                &out_dir,
                mc.unwrap_or(config.mc.n_mc),
                seed.unwrap_or(config.mc.seed),
                real_only,
            )
        }
        Command::Decompose {
            thermal,
            pps,
            window,
            resample,
            out,
            svg,
        } => {
            let window = window.map(|w| parse_pair(&w, "--window")).transpose()?;
            commands::decompose(
                &config,
                &thermal,
                &pps,
                window,
                resample,
                &out,
                svg.as_deref(),
            )
        }
        Command::Fit {
            spectrum,
            peaks,
            constraint,
            inits,
            bounds,
            out,
            svg,
            allow_unconverged,
        } => {
            let inits = inits
                .iter()
                .map(|s| parse_init(s))
                .collect::<Result<Vec<_>>>()?;
            let bounds = bounds
                .iter()
                .map(|s| parse_bound(s))
                .collect::<Result<Vec<_>>>()?;
            commands::fit(commands::FitArgs {
                spectrum: &spectrum,
                n_peaks: peaks,
                constraint: constraint.into(),
                inits,
                bounds,
                out: &out,
                svg: svg.as_deref(),
                allow_unconverged,
            })
        }
        Command::Sweep { out_dir } => commands::sweep(&config, &out_dir),
        Command::Allan {
            input,
            pipeline,
            repetitions,
            model,
            m,
            out_dir,
        } => {
            let m_values = match m {
                Some(text) => parse_m_list(&text)?,
                None => vec![1, 2, 4, 8, 16],
            };
            if pipeline {
                commands::allan_pipeline(&config, repetitions, &m_values, model.into(), &out_dir)
            } else if let Some(input) = input {
                commands::allan_from_series(&input, &m_values, &out_dir)
            } else {
                bail!("allan needs either --input or --pipeline");
            }
        }
        Command::ImportFid {
            input,
            out,
            zero_pad,
            svg,
        } => commands::import_fid(&config, &input, &out, zero_pad, svg.as_deref()),
    }
}
