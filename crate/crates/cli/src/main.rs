//! `cropdp`: privacy accounting for DP-SGD with random cropping.
//!
//! Every command reads `key = value` defaults from `--config` (flags win),
//! writes CSV to `--out DIR` (or `$CROPDP_OUT_DIR`, or stdout) and records
//! a `<command>.manifest.json` next to its outputs.
//!
//! Exit status: 0 on success, 2 for invalid input, 3 when calibration
//! cannot reach the target, 1 for other failures.

mod commands;
mod inputs;
mod output;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::SweepKind;
use crate::output::Output;
use crate::params::{Invalid, Params};

#[derive(Debug, Parser)]
#[command(
    name = "cropdp",
    version,
    about = "Patch-level DP accounting for DP-SGD with random cropping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probability that a random crop meets the private patch.
    Gamma {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        geometry: Geometry,
    },
    /// Composed privacy profiles delta(eps) of the three mechanisms.
    Profile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        geometry: Geometry,
        #[command(flatten)]
        training: Training,
        #[command(flatten)]
        accounting: Accounting,
        /// Gradient noise multiplier.
        #[arg(long)]
        sigma: Option<String>,
        /// Per-pixel noise scale of the data-level baseline.
        #[arg(long)]
        sigma_data: Option<String>,
        /// Charge data-level noise once per training step instead of once.
        #[arg(long)]
        data_noise_composed: bool,
        /// Epsilon grid as start:end:step.
        #[arg(long)]
        eps_range: Option<String>,
        /// Uncomposed single-step curves, which also cover negative eps.
        #[arg(long)]
        single_step: bool,
    },
    /// Composed epsilon across a range of crop sizes, patch sizes, paddings
    /// or noise multipliers.
    Sweep {
        #[arg(value_enum)]
        kind: Kind,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        geometry: Geometry,
        #[command(flatten)]
        training: Training,
        #[command(flatten)]
        accounting: Accounting,
        /// Swept values as start:end:step.
        #[arg(long)]
        range: Option<String>,
        /// Comma-separated noise multipliers (ignored by the noise sweep).
        #[arg(long)]
        sigmas: Option<String>,
    },
    /// Noise multipliers reaching each target epsilon.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        geometry: Geometry,
        #[command(flatten)]
        training: Training,
        #[command(flatten)]
        accounting: Accounting,
        /// Comma-separated target epsilons.
        #[arg(long)]
        targets: Option<String>,
        /// Relative tolerance of the search.
        #[arg(long)]
        tol: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Crop,
    Patch,
    Padding,
    Noise,
}

#[derive(Debug, Args)]
struct Common {
    /// File of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $CROPDP_OUT_DIR, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG chart.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct Geometry {
    /// Image size, WxH.
    #[arg(long)]
    image: Option<String>,
    /// Padding on each side, X,Y.
    #[arg(long)]
    pad: Option<String>,
    /// Crop size, WxH.
    #[arg(long)]
    crop: Option<String>,
    /// rect:WxH, mask:FILE, circle:R or circles:R,GAP.
    #[arg(long)]
    patch: Option<String>,
    /// Patch bottom-left corner, X,Y.
    #[arg(long, conflicts_with = "worst_case")]
    at: Option<String>,
    /// Place the patch where it is most exposed (the default).
    #[arg(long)]
    worst_case: bool,
}

#[derive(Debug, Args)]
struct Training {
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epoch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Target delta (default 1/epoch_size).
    #[arg(long)]
    delta: Option<String>,
    /// Sensitivity of the base Gaussian pair in clipping-norm units.
    #[arg(long)]
    sensitivity: Option<String>,
    /// Clipping norm; recorded only, it cancels out of the accounting.
    #[arg(long)]
    clip_norm: Option<String>,
}

#[derive(Debug, Args)]
struct Accounting {
    /// Largest privacy-loss grid spacing.
    #[arg(long)]
    grid_spacing: Option<String>,
    /// Tail mass dropped (pessimistically) per convolution.
    #[arg(long)]
    tail_mass: Option<String>,
    /// Largest grid spacing relative to the loss spread; 0 keeps one grid.
    #[arg(long)]
    resolution: Option<String>,
    /// Dominating pair orientation: both, forward or reverse.
    #[arg(long)]
    direction: Option<String>,
}

type Flags = Vec<(&'static str, Option<String>)>;

fn bool_flag(set: bool) -> Option<String> {
    set.then(|| "true".to_string())
}

impl Geometry {
    fn flags(self) -> Flags {
        let at = if self.worst_case {
            Some("worst-case".to_string())
        } else {
            self.at
        };
        vec![
            ("image", self.image),
            ("pad", self.pad),
            ("crop", self.crop),
            ("patch", self.patch),
            ("at", at),
        ]
    }
}

impl Training {
    fn flags(self) -> Flags {
        vec![
            ("batch-size", self.batch_size),
            ("epoch-size", self.epoch_size),
            ("epochs", self.epochs),
            ("delta", self.delta),
            ("sensitivity", self.sensitivity),
            ("clip-norm", self.clip_norm),
        ]
    }
}

impl Accounting {
    fn flags(self) -> Flags {
        vec![
            ("grid-spacing", self.grid_spacing),
            ("tail-mass", self.tail_mass),
            ("resolution", self.resolution),
            ("direction", self.direction),
        ]
    }
}

fn load(common: &Common, flags: Flags) -> anyhow::Result<(Params, Output)> {
    let mut params = Params::load(common.config.as_deref())?;
    params.apply(flags);
    params.apply([("svg", bool_flag(common.svg))]);
    Ok((params, Output::new(common.out.clone())?))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, common, flags, kind) = match cli.command {
        Command::Gamma { common, geometry } => ("gamma", common, geometry.flags(), None),
        Command::Profile {
            common,
            geometry,
            training,
            accounting,
            sigma,
            sigma_data,
            data_noise_composed,
            eps_range,
            single_step,
        } => {
            let mut flags = geometry.flags();
            flags.extend(training.flags());
            flags.extend(accounting.flags());
            flags.extend([
                ("sigma", sigma),
                ("sigma-data", sigma_data),
                ("data-noise-composed", bool_flag(data_noise_composed)),
                ("eps-range", eps_range),
                ("single-step", bool_flag(single_step)),
            ]);
            ("profile", common, flags, None)
        }
        Command::Sweep {
            kind,
            common,
            geometry,
            training,
            accounting,
            range,
            sigmas,
        } => {
            let mut flags = geometry.flags();
            flags.extend(training.flags());
            flags.extend(accounting.flags());
            flags.extend([("range", range), ("sigmas", sigmas)]);
            let kind = match kind {
                Kind::Crop => SweepKind::Crop,
                Kind::Patch => SweepKind::Patch,
                Kind::Padding => SweepKind::Padding,
                Kind::Noise => SweepKind::Noise,
            };
            ("sweep", common, flags, Some(kind))
        }
        Command::Calibrate {
            common,
            geometry,
            training,
            accounting,
            targets,
            tol,
        } => {
            let mut flags = geometry.flags();
            flags.extend(training.flags());
            flags.extend(accounting.flags());
            flags.extend([("targets", targets), ("tol", tol)]);
            ("calibrate", common, flags, None)
        }
    };
    let (mut params, mut out) = load(&common, flags)?;
    let manifest_name = match (name, kind) {
        ("gamma", _) => {
            commands::gamma(&mut params, &mut out)?;
            "gamma".to_string()
        }
        ("profile", _) => {
            commands::profile(&mut params, &mut out)?;
            "profile".to_string()
        }
        ("sweep", Some(kind)) => {
            commands::sweep(kind, &mut params, &mut out)?;
            format!("sweep_{}", kind.name())
        }
        _ => {
            commands::calibrate(&mut params, &mut out)?;
            "calibrate".to_string()
        }
    };
    out.finish(&manifest_name, &params)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match err.downcast_ref::<cropdp::Error>() {
        Some(cropdp::Error::BracketFailure { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
