use std::collections::HashMap;

use anyhow::Context as _;
use cropdp::geometry::{
    inclusion_probability, CropConfig, InclusionProbability, PatchShape, PatchSpec, Placement, Rect,
};
use cropdp::mechanisms::{
    account, calibrate_sigma, composed_profile, privacy_curve, MechanismSpec, SamplingConfig,
    Variant,
};
use cropdp::pld::{AccountingConfig, Direction};
use rayon::prelude::*;

use crate::inputs::{crop_config, patch_spec};
use crate::output::{line_chart, Chart, Output};
use crate::params::{invalid, Invalid, Params, Result};

/// Defaults for the training and accounting parameters of one command.
pub struct Defaults {
    pub image: &'static str,
    pub crop: &'static str,
    pub patch: &'static str,
    pub batch_size: &'static str,
    pub epoch_size: &'static str,
    pub epochs: &'static str,
}

pub const FIGURE2: Defaults = Defaults {
    image: "1000x1000",
    crop: "100x100",
    patch: "rect:10x10",
    batch_size: "100",
    epoch_size: "3000",
    epochs: "100",
};

pub const SWEEP: Defaults = Defaults {
    image: "1000x1000",
    crop: "450x450",
    patch: "rect:10x10",
    batch_size: "100",
    epoch_size: "100000",
    epochs: "100",
};

pub const CITYSCAPES: Defaults = Defaults {
    image: "2048x1024",
    crop: "505x505",
    patch: "rect:10x10",
    batch_size: "200",
    epoch_size: "2975",
    epochs: "100",
};

fn core(e: cropdp::Error) -> anyhow::Error {
    match e {
        // numerical failures are not the user's fault
        cropdp::Error::BracketFailure { .. }
        | cropdp::Error::GridOverflow { .. }
        | cropdp::Error::UnattainableDelta { .. }
        | cropdp::Error::QuadratureNonconvergence { .. }
        | cropdp::Error::NonMonotoneCurve { .. }
        | cropdp::Error::TooLargeDomain { .. } => e.into(),
        other => Invalid(other.to_string()).into(),
    }
}

fn sampling(p: &mut Params, d: &Defaults) -> Result<SamplingConfig> {
    let batch = p.get("batch-size", Some(d.batch_size))?;
    let epoch = p.get("epoch-size", Some(d.epoch_size))?;
    let epochs = p.get("epochs", Some(d.epochs))?;
    SamplingConfig::new(batch, epoch, epochs).map_err(|e| Invalid(e.to_string()))
}

/// `1 / epoch_size` unless given.
fn delta(p: &mut Params, sampling: &SamplingConfig) -> Result<f64> {
    let default = format!("{}", 1.0 / sampling.epoch_size as f64);
    let delta: f64 = p.get("delta", Some(&default))?;
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must be in (0, 1), got {delta}"));
    }
    Ok(delta)
}

fn accounting(p: &mut Params) -> Result<AccountingConfig> {
    let defaults = AccountingConfig::default();
    let direction = match p.raw("direction", Some("both"))?.as_str() {
        "both" => Direction::Both,
        "forward" => Direction::Forward,
        "reverse" => Direction::Reverse,
        other => {
            return invalid(format!(
                "direction must be both, forward or reverse, got {other:?}"
            ))
        }
    };
    let acct = AccountingConfig {
        grid_spacing: p.get("grid-spacing", Some(&defaults.grid_spacing.to_string()))?,
        tail_mass_truncation: p.get(
            "tail-mass",
            Some(&defaults.tail_mass_truncation.to_string()),
        )?,
        resolution: p.get("resolution", Some(&defaults.resolution.to_string()))?,
        direction,
        ..defaults
    };
    acct.validate().map_err(|e| Invalid(e.to_string()))?;
    Ok(acct)
}

/// Base-pair sensitivity and the clipping norm, which is recorded but does
/// not change any result.
#[derive(Clone, Copy)]
struct Gradient {
    sensitivity: f64,
    clip_norm: f64,
}

impl Gradient {
    fn read(p: &mut Params) -> Result<Self> {
        let sensitivity: f64 = p.get("sensitivity", Some("1"))?;
        let clip_norm: f64 = p.get("clip-norm", Some("1"))?;
        if !(sensitivity > 0.0) || !(clip_norm > 0.0) {
            return invalid("sensitivity and clip-norm must be positive");
        }
        Ok(Gradient {
            sensitivity,
            clip_norm,
        })
    }

    fn apply(self, spec: MechanismSpec) -> MechanismSpec {
        let mut spec = spec.with_sensitivity(self.sensitivity);
        spec.clip_norm = self.clip_norm;
        spec
    }
}

/// Resolves a worst-case placement once so later accounting does not
/// repeat the search.
fn pinned(
    cfg: &CropConfig,
    patch: &PatchSpec,
) -> anyhow::Result<(InclusionProbability, PatchSpec)> {
    let (gamma, at) = inclusion_probability(cfg, patch).map_err(core)?;
    let spec = PatchSpec {
        shape: patch.shape.clone(),
        placement: Placement::At(at),
    };
    Ok((gamma, spec))
}

fn bounding_rect(shape: &PatchShape) -> Rect {
    let (w, h) = shape.extent();
    Rect::new(w, h)
}

pub fn gamma(p: &mut Params, out: &mut Output) -> anyhow::Result<()> {
    let cfg = crop_config(p, FIGURE2.image, FIGURE2.crop)?;
    let patch = patch_spec(p, FIGURE2.patch)?;
    let (gamma, at) = inclusion_probability(&cfg, &patch).map_err(core)?;
    let (w_tot, h_tot) = cfg.origin_space().map_err(core)?;
    println!("origins = {w_tot} x {h_tot}");
    println!("placement = {},{}", at.x, at.y);
    println!(
        "gamma_crop = {}/{} = {}",
        gamma.favorable(),
        gamma.total(),
        crate::output::format_number(gamma.value())
    );
    if out.has_dir() {
        let header = ["favorable", "total", "gamma_crop", "x", "y"].map(String::from);
        let row = vec![
            gamma.favorable() as f64,
            gamma.total() as f64,
            gamma.value(),
            at.x as f64,
            at.y as f64,
        ];
        out.table("gamma", &header, &[row])?;
    }
    Ok(())
}

pub fn profile(p: &mut Params, out: &mut Output) -> anyhow::Result<()> {
    let cfg = crop_config(p, FIGURE2.image, FIGURE2.crop)?;
    let patch = patch_spec(p, FIGURE2.patch)?;
    let sampling = sampling(p, &FIGURE2)?;
    let acct = accounting(p)?;
    let delta = delta(p, &sampling)?;
    let sigma: f64 = p.get("sigma", Some("1"))?;
    let sigma_data: f64 = p.get("sigma-data", Some("1000"))?;
    let composed = p.flag("data-noise-composed")?;
    let single_step = p.flag("single-step")?;
    let grid = p.range("eps-range", Some("0:10:0.1"))?;
    let svg = p.flag("svg")?;
    if !(sigma > 0.0 && sigma_data > 0.0) {
        return Err(Invalid("sigma and sigma-data must be positive".into()).into());
    }
    if !single_step && grid.iter().any(|&e| e < 0.0) {
        return Err(Invalid(
            "composed profiles cover eps >= 0; use --single-step for negative eps".into(),
        )
        .into());
    }

    let grad = Gradient::read(p)?;

    let (gamma, patch) = pinned(&cfg, &patch)?;
    let patch_spec = grad.apply(MechanismSpec::patch_level(
        cfg,
        patch.clone(),
        sigma,
        sampling,
    ));
    let minibatch = grad.apply(MechanismSpec::minibatch_only(sigma, sampling));
    // masks are charged for their bounding box
    let data_noise = MechanismSpec {
        variant: Variant::DataNoise {
            patch: bounding_rect(&patch.shape),
            sigma_data,
            composed,
        },
        ..MechanismSpec::data_noise(Rect::square(1), sigma_data, sampling)
    };

    let specs = [&patch_spec, &minibatch, &data_noise];
    out.note("gamma_crop", gamma.value());
    out.note("gamma_wo", sampling.gamma_wo());
    out.note("gamma_eff", sampling.gamma_wo() * gamma.value());

    let rows: Vec<Vec<f64>> = if single_step {
        out.note("steps", 1);
        let curves = specs
            .iter()
            .map(|s| privacy_curve(s))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(core)?;
        grid.iter()
            .map(|&e| {
                std::iter::once(e)
                    .chain(curves.iter().map(|c| c.delta(e)))
                    .collect()
            })
            .collect()
    } else {
        let profiles = specs
            .par_iter()
            .map(|s| composed_profile(s, &acct))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(core)?;
        out.note("steps", sampling.steps());
        for (name, prof) in ["patch", "minibatch", "datanoise"].iter().zip(&profiles) {
            let eps = prof.epsilon_at(delta).ok().filter(|e| e.is_finite());
            out.note(&format!("epsilon_{name}_at_delta"), eps);
        }
        grid.iter()
            .map(|&e| {
                std::iter::once(e)
                    .chain(profiles.iter().map(|prof| prof.delta_at(e)))
                    .collect()
            })
            .collect()
    };
    let header = [
        "epsilon",
        "delta_patch",
        "delta_minibatch",
        "delta_datanoise",
    ]
    .map(String::from);
    out.table("profile", &header, &rows)?;
    if svg {
        let series: Vec<(String, Vec<f64>)> = header[1..]
            .iter()
            .enumerate()
            .map(|(i, h)| (h.clone(), rows.iter().map(|r| r[i + 1]).collect()))
            .collect();
        let chart = Chart {
            title: "privacy profile",
            x_label: "epsilon",
            y_label: "delta",
            log_y: true,
        };
        out.svg("profile", &line_chart(&chart, &grid, &series))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Crop,
    Patch,
    Padding,
    Noise,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Crop => "crop",
            SweepKind::Patch => "patch",
            SweepKind::Padding => "padding",
            SweepKind::Noise => "noise",
        }
    }

    fn default_range(self) -> &'static str {
        match self {
            SweepKind::Crop => "50:700:1",
            SweepKind::Patch => "1:120:1",
            SweepKind::Padding => "0:250:10",
            SweepKind::Noise => "1:5:0.5",
        }
    }

    fn default_crop(self) -> &'static str {
        match self {
            SweepKind::Crop | SweepKind::Patch => "450x450",
            SweepKind::Padding | SweepKind::Noise => "500x500",
        }
    }

    fn default_patch(self) -> &'static str {
        match self {
            SweepKind::Crop | SweepKind::Patch => "rect:10x10",
            SweepKind::Padding | SweepKind::Noise => "rect:20x20",
        }
    }
}

struct SweepPoint {
    x: f64,
    gamma: InclusionProbability,
    crop: CropConfig,
    patch: PatchSpec,
    sigmas: Vec<f64>,
}

fn whole(x: f64, what: &str) -> Result<u32> {
    if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
        Ok(x as u32)
    } else {
        invalid(format!("{what} must be a whole number of pixels, got {x}"))
    }
}

fn sigma_label(s: f64) -> String {
    format!("{s}")
}

pub fn sweep(kind: SweepKind, p: &mut Params, out: &mut Output) -> anyhow::Result<()> {
    let xs = p.range("range", Some(kind.default_range()))?;
    let base = crop_config(p, SWEEP.image, kind.default_crop())?;
    let patch = match kind {
        // the swept square replaces --patch
        SweepKind::Patch => None,
        _ => Some(patch_spec(p, kind.default_patch())?),
    };
    let placement = match kind {
        SweepKind::Patch => crate::inputs::placement(p)?,
        _ => patch
            .as_ref()
            .map(|s| s.placement)
            .unwrap_or(Placement::WorstCase),
    };
    let sampling = sampling(p, &SWEEP)?;
    let acct = accounting(p)?;
    let delta = delta(p, &sampling)?;
    let sigmas: Vec<f64> = match kind {
        SweepKind::Noise => Vec::new(),
        _ => p.list("sigmas", Some("4,4.5,5"))?,
    };
    if sigmas
        .iter()
        .chain(if kind == SweepKind::Noise {
            xs.as_slice()
        } else {
            &[]
        })
        .any(|&s| !(s > 0.0))
    {
        return Err(Invalid("noise multipliers must be positive".into()).into());
    }
    let svg = p.flag("svg")?;
    let grad = Gradient::read(p)?;

    let mut points = Vec::with_capacity(xs.len());
    for &x in &xs {
        let mut cfg = base;
        let mut spec = patch.clone().unwrap_or_else(|| PatchSpec {
            shape: PatchShape::Rect(Rect::square(1)),
            placement,
        });
        let mut point_sigmas = sigmas.clone();
        match kind {
            SweepKind::Crop => {
                let side = whole(x, "crop side")?;
                cfg = CropConfig::new(
                    (base.image_width, base.image_height),
                    (base.pad_x, base.pad_y),
                    (side, side),
                )
                .map_err(core)?;
            }
            SweepKind::Patch => {
                spec.shape = PatchShape::Rect(Rect::square(whole(x, "patch side")?))
            }
            SweepKind::Padding => {
                let pad = whole(x, "padding")?;
                cfg = CropConfig::new(
                    (base.image_width, base.image_height),
                    (pad, pad),
                    (base.crop_width, base.crop_height),
                )
                .map_err(core)?;
            }
            SweepKind::Noise => point_sigmas = vec![x],
        }
        let (gamma, spec) = pinned(&cfg, &spec).with_context(|| format!("sweep point {x}"))?;
        points.push(SweepPoint {
            x,
            gamma,
            crop: cfg,
            patch: spec,
            sigmas: point_sigmas,
        });
    }

    // identical (gamma, sigma) pairs account identically; evaluate each once
    let mut jobs: Vec<(Option<usize>, f64)> = Vec::new();
    let mut index: HashMap<(Option<(u64, u64)>, u64), usize> = HashMap::new();
    let mut lookup = |jobs: &mut Vec<(Option<usize>, f64)>,
                      point: Option<usize>,
                      gamma: Option<(u64, u64)>,
                      s: f64| {
        *index.entry((gamma, s.to_bits())).or_insert_with(|| {
            jobs.push((point, s));
            jobs.len() - 1
        })
    };
    let mut cells: Vec<Vec<(usize, usize)>> = Vec::with_capacity(points.len());
    for (i, pt) in points.iter().enumerate() {
        let g = reduced(&pt.gamma);
        let row = pt
            .sigmas
            .iter()
            .map(|&s| {
                (
                    lookup(&mut jobs, Some(i), Some(g), s),
                    lookup(&mut jobs, None, None, s),
                )
            })
            .collect();
        cells.push(row);
    }

    let specs: Vec<MechanismSpec> = jobs
        .iter()
        .map(|&(point, s)| {
            grad.apply(match point {
                Some(i) => {
                    MechanismSpec::patch_level(points[i].crop, points[i].patch.clone(), s, sampling)
                }
                None => MechanismSpec::minibatch_only(s, sampling),
            })
        })
        .collect();
    let eps = specs
        .par_iter()
        .map(|spec| account(spec, &acct, delta))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(core)?;

    let mut header = vec!["x".to_string(), "gamma_crop".to_string()];
    match kind {
        SweepKind::Noise => header.extend(["eps_patch".to_string(), "eps_minibatch".to_string()]),
        _ => {
            for &s in &sigmas {
                header.push(format!("eps_patch_sigma{}", sigma_label(s)));
                header.push(format!("eps_minibatch_sigma{}", sigma_label(s)));
            }
        }
    }
    let rows: Vec<Vec<f64>> = points
        .iter()
        .zip(&cells)
        .map(|(pt, row)| {
            let mut r = vec![pt.x, pt.gamma.value()];
            for &(patch_job, mb_job) in row {
                r.push(eps[patch_job]);
                r.push(eps[mb_job]);
            }
            r
        })
        .collect();

    out.note("steps", sampling.steps());
    out.note("gamma_wo", sampling.gamma_wo());
    out.note("delta", delta);
    out.note("distinct_accountings", jobs.len());
    let name = format!("sweep_{}", kind.name());
    out.table(&name, &header, &rows)?;
    if svg {
        let series: Vec<(String, Vec<f64>)> = header[2..]
            .iter()
            .enumerate()
            .map(|(i, h)| (h.clone(), rows.iter().map(|r| r[i + 2]).collect()))
            .collect();
        let chart = Chart {
            title: &format!("{} sweep", kind.name()),
            x_label: kind.name(),
            y_label: "epsilon",
            log_y: false,
        };
        out.svg(&name, &line_chart(&chart, &xs, &series))?;
    }
    Ok(())
}

fn reduced(g: &InclusionProbability) -> (u64, u64) {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let d = gcd(g.favorable(), g.total()).max(1);
    (g.favorable() / d, g.total() / d)
}

pub fn calibrate(p: &mut Params, out: &mut Output) -> anyhow::Result<()> {
    let cfg = crop_config(p, CITYSCAPES.image, CITYSCAPES.crop)?;
    let patch = patch_spec(p, CITYSCAPES.patch)?;
    let sampling = sampling(p, &CITYSCAPES)?;
    let acct = accounting(p)?;
    let delta = delta(p, &sampling)?;
    let targets: Vec<f64> = p.list("targets", Some("5,10,20,50,100"))?;
    let tol: f64 = p.get("tol", Some("1e-3"))?;

    let grad = Gradient::read(p)?;

    let (gamma, patch) = pinned(&cfg, &patch)?;
    let patch_spec = grad.apply(MechanismSpec::patch_level(cfg, patch, 1.0, sampling));
    let minibatch = grad.apply(MechanismSpec::minibatch_only(1.0, sampling));

    let jobs: Vec<(f64, &MechanismSpec)> = targets
        .iter()
        .flat_map(|&t| [(t, &patch_spec), (t, &minibatch)])
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(target, spec)| {
            let sigma = calibrate_sigma(spec, &acct, target, delta, tol)?;
            let eps = account(&spec.clone().with_noise_multiplier(sigma), &acct, delta)?;
            Ok((sigma, eps))
        })
        .collect::<cropdp::Result<Vec<_>>>()
        .map_err(core)?;

    let rows: Vec<Vec<f64>> = targets
        .iter()
        .zip(results.chunks(2))
        .map(|(&t, r)| vec![t, r[0].0, r[1].0, r[0].1, r[1].1])
        .collect();
    out.note("gamma_crop", gamma.value());
    out.note("gamma_wo", sampling.gamma_wo());
    out.note("steps", sampling.steps());
    out.note("delta", delta);
    if out.has_dir() {
        println!("target_epsilon  sigma_patch  sigma_minibatch");
        for r in &rows {
            println!("{:>14}  {:>11.6}  {:>15.6}", r[0], r[1], r[2]);
        }
    }
    let header = [
        "target_epsilon",
        "sigma_patch",
        "sigma_minibatch",
        "epsilon_patch",
        "epsilon_minibatch",
    ]
    .map(String::from);
    out.table("calibrate", &header, &rows)?;
    Ok(())
}
