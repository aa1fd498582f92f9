//! End-to-end accounting for the three compared mechanisms: DP-SGD with
//! patch-level (crop) subsampling, DP-SGD with minibatch subsampling only,
//! and Gaussian noise added once to the input pixels.
//!
//! The clipping norm `kappa` never enters the numbers: gradients of norm at
//! most `kappa` receive noise of scale `sigma * kappa`, and divergences of
//! Gaussians are scale invariant. It is carried in [`MechanismSpec`] only so
//! that configurations can be written down in full.

use crate::divergence::{
    hs_forward, hs_gaussian, hs_reverse, hs_subsampled, Alpha, GaussianPair, SubsampledPair,
};
use crate::error::{Error, Result};
use crate::geometry::{effective_rate, inclusion_probability, CropConfig, PatchSpec, Rect};
use crate::pld::{compose_curve, AccountingConfig, Direction, DiscretePld, PrivacyCurve};

/// Largest noise multiplier tried when calibrating.
pub const SIGMA_MAX: f64 = 1e3;

/// Minibatch sampling without replacement over a fixed-size dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamplingConfig {
    pub batch_size: u64,
    pub epoch_size: u64,
    pub epochs: u64,
}

impl SamplingConfig {
    pub fn new(batch_size: u64, epoch_size: u64, epochs: u64) -> Result<Self> {
        let cfg = SamplingConfig {
            batch_size,
            epoch_size,
            epochs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > self.epoch_size {
            return Err(Error::InvalidParameter(format!(
                "batch size must be in 1..={}, got {}",
                self.epoch_size, self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// `m / n`.
    pub fn gamma_wo(&self) -> f64 {
        self.batch_size as f64 / self.epoch_size as f64
    }

    /// `epochs * floor(n / m)`; the last incomplete batch of an epoch is
    /// dropped.
    pub fn steps(&self) -> u64 {
        self.epochs * (self.epoch_size / self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// DP-SGD where each sampled image is randomly cropped; the private
    /// patch is only seen when the crop meets it.
    PatchLevel { crop: CropConfig, patch: PatchSpec },
    /// DP-SGD accounted with minibatch subsampling alone.
    MinibatchOnly,
    /// Gaussian noise of scale `sigma_data` added to every pixel, with
    /// sensitivity `255 * sqrt(3 * H_R * W_R)` for a patch of size `patch`.
    ///
    /// Noise is added to the data once and training is post-processing, so
    /// by default there is a single step. `composed` instead charges one
    /// step per training iteration.
    DataNoise {
        patch: Rect,
        sigma_data: f64,
        composed: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    pub variant: Variant,
    /// Gradient noise multiplier (unused by `DataNoise`).
    pub noise_multiplier: f64,
    pub sampling: SamplingConfig,
    /// Sensitivity of the base Gaussian pair in units of `kappa`: 1 for the
    /// standard pair `N(1, sigma^2)` vs `N(0, sigma^2)`, 2 for clipped
    /// gradients under substitution.
    pub sensitivity: f64,
    /// Clipping norm; recorded but does not affect accounting.
    pub clip_norm: f64,
}

impl MechanismSpec {
    fn with_variant(variant: Variant, noise_multiplier: f64, sampling: SamplingConfig) -> Self {
        MechanismSpec {
            variant,
            noise_multiplier,
            sampling,
            sensitivity: 1.0,
            clip_norm: 1.0,
        }
    }

    pub fn patch_level(
        crop: CropConfig,
        patch: PatchSpec,
        noise_multiplier: f64,
        sampling: SamplingConfig,
    ) -> Self {
        Self::with_variant(
            Variant::PatchLevel { crop, patch },
            noise_multiplier,
            sampling,
        )
    }

    pub fn minibatch_only(noise_multiplier: f64, sampling: SamplingConfig) -> Self {
        Self::with_variant(Variant::MinibatchOnly, noise_multiplier, sampling)
    }

    pub fn data_noise(patch: Rect, sigma_data: f64, sampling: SamplingConfig) -> Self {
        Self::with_variant(
            Variant::DataNoise {
                patch,
                sigma_data,
                composed: false,
            },
            f64::NAN,
            sampling,
        )
    }

    pub fn with_sensitivity(mut self, sensitivity: f64) -> Self {
        self.sensitivity = sensitivity;
        self
    }

    pub fn with_noise_multiplier(mut self, sigma: f64) -> Self {
        self.noise_multiplier = sigma;
        self
    }

    /// Number of composed steps.
    pub fn steps(&self) -> u64 {
        match self.variant {
            Variant::DataNoise {
                composed: false, ..
            } => 1,
            _ => self.sampling.steps(),
        }
    }

    /// Sampling rate of the subsampled mechanisms: `gamma_wo * gamma_crop`
    /// for patch-level sampling with the worst-case patch placement, and
    /// `gamma_wo` for minibatch-only. `None` for data noise.
    pub fn effective_rate(&self) -> Result<Option<f64>> {
        self.sampling.validate()?;
        match &self.variant {
            Variant::PatchLevel { crop, patch } => {
                let (gamma_crop, _) = inclusion_probability(crop, patch)?;
                Ok(Some(effective_rate(
                    self.sampling.gamma_wo(),
                    gamma_crop.value(),
                )?))
            }
            Variant::MinibatchOnly => Ok(Some(self.sampling.gamma_wo())),
            Variant::DataNoise { .. } => Ok(None),
        }
    }

    fn subsampled_pair(&self, gamma: f64) -> Result<SubsampledPair> {
        SubsampledPair::new(
            GaussianPair::new(self.sensitivity, self.noise_multiplier)?,
            gamma,
        )
    }

    fn data_noise_pair(&self) -> Result<Option<GaussianPair>> {
        match self.variant {
            Variant::DataNoise {
                patch, sigma_data, ..
            } => Ok(Some(GaussianPair::new(
                data_noise_sensitivity(patch),
                sigma_data,
            )?)),
            _ => Ok(None),
        }
    }
}

/// `255 * sqrt(3 * H_R * W_R)`: the l2 distance between two RGB patches
/// that differ maximally in every channel.
pub fn data_noise_sensitivity(patch: Rect) -> f64 {
    255.0 * (3.0 * patch.width as f64 * patch.height as f64).sqrt()
}

/// The single-step privacy profile of the mechanism.
///
/// For the subsampled mechanisms this is the mixture bound: the
/// `((1 - g) Q + g P, Q)` divergence for `eps >= 0` and the
/// `(P, (1 - g) P + g Q)` divergence below.
pub fn privacy_curve(spec: &MechanismSpec) -> Result<PrivacyCurve> {
    if let Some(pair) = spec.data_noise_pair()? {
        return Ok(PrivacyCurve::new("data-level gaussian noise", move |e| {
            hs_gaussian(&pair, Alpha::from_epsilon(e))
        }));
    }
    let gamma = spec.effective_rate()?.expect("subsampled variant");
    let pair = spec.subsampled_pair(gamma)?;
    Ok(PrivacyCurve::new(
        format!("subsampled gaussian, gamma = {gamma}"),
        move |e| hs_subsampled(&pair, Alpha::from_epsilon(e)),
    ))
}

/// Privacy curves of the dominating pairs to compose, one per orientation.
///
/// A Gaussian pair is symmetric, so data noise has a single curve.
pub fn dominating_curves(
    spec: &MechanismSpec,
    direction: Direction,
) -> Result<Vec<(Direction, PrivacyCurve)>> {
    if let Some(pair) = spec.data_noise_pair()? {
        let curve = PrivacyCurve::new("data-level gaussian noise", move |e| {
            hs_gaussian(&pair, Alpha::from_epsilon(e))
        });
        return Ok(vec![(Direction::Forward, curve)]);
    }
    let gamma = spec.effective_rate()?.expect("subsampled variant");
    let pair = spec.subsampled_pair(gamma)?;
    let forward = || {
        PrivacyCurve::new(format!("forward mixture, gamma = {gamma}"), move |e| {
            hs_forward(&pair, Alpha::from_epsilon(e))
        })
    };
    let reverse = || {
        PrivacyCurve::new(format!("reverse mixture, gamma = {gamma}"), move |e| {
            hs_reverse(&pair, Alpha::from_epsilon(e))
        })
    };
    Ok(match direction {
        Direction::Forward => vec![(Direction::Forward, forward())],
        Direction::Reverse => vec![(Direction::Reverse, reverse())],
        Direction::Both => vec![
            (Direction::Forward, forward()),
            (Direction::Reverse, reverse()),
        ],
    })
}

/// The composed privacy profile of a mechanism: the pointwise maximum over
/// the composed dominating-pair PLDs.
#[derive(Debug, Clone)]
pub struct ComposedProfile {
    plds: Vec<(Direction, DiscretePld)>,
    steps: u64,
}

impl ComposedProfile {
    pub fn plds(&self) -> &[(Direction, DiscretePld)] {
        &self.plds
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn delta_at(&self, epsilon: f64) -> f64 {
        self.plds
            .iter()
            .map(|(_, p)| p.delta_at(epsilon))
            .fold(0.0, f64::max)
    }

    /// Smallest `eps` with `delta_at(eps) <= delta`, clamped to be at least 0.
    pub fn epsilon_at(&self, delta: f64) -> Result<f64> {
        let mut eps: f64 = 0.0;
        for (_, p) in &self.plds {
            eps = eps.max(p.epsilon_at(delta)?);
        }
        Ok(eps)
    }
}

/// Discretizes the mechanism's dominating curves and composes them over
/// the mechanism's step count (`acct.steps` is not used here), with grid
/// refinement as in [`compose_curve`].
pub fn composed_profile(spec: &MechanismSpec, acct: &AccountingConfig) -> Result<ComposedProfile> {
    acct.validate()?;
    let steps = spec.steps();
    let plds = dominating_curves(spec, acct.direction)?
        .into_iter()
        .map(|(dir, curve)| Ok((dir, compose_curve(&curve, steps, acct)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComposedProfile { plds, steps })
}

/// Composed `epsilon` at `delta`. Values below 0 are reported as 0.
pub fn account(spec: &MechanismSpec, acct: &AccountingConfig, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    composed_profile(spec, acct)?.epsilon_at(delta)
}

/// Smallest noise multiplier whose accounted `epsilon` is at most
/// `target_eps`, to relative precision `tol`.
///
/// The bracket is found by doubling (up to [`SIGMA_MAX`]) and halving from
/// `sigma = 1`, then bisected until its relative width is below `tol` and
/// the upper end accounts to at least `target_eps * (1 - tol)`. The upper
/// end is returned, so `account` at the result never exceeds the target.
pub fn calibrate_sigma(
    spec: &MechanismSpec,
    acct: &AccountingConfig,
    target_eps: f64,
    delta: f64,
    tol: f64,
) -> Result<f64> {
    if matches!(spec.variant, Variant::DataNoise { .. }) {
        return Err(Error::InvalidParameter(
            "data-level noise has no gradient noise multiplier to calibrate".into(),
        ));
    }
    if !(target_eps > 0.0) || !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need target epsilon > 0 and tolerance in (0, 1), got {target_eps} and {tol}"
        )));
    }
    let eps_of = |sigma: f64| -> Result<f64> {
        match account(&spec.clone().with_noise_multiplier(sigma), acct, delta) {
            // a grid too long to compose means far more loss than any target
            Err(Error::GridOverflow { .. }) | Err(Error::UnattainableDelta { .. }) => {
                Ok(f64::INFINITY)
            }
            other => other,
        }
    };
    let meets = |eps: f64| eps <= target_eps;

    let mut hi = 1.0;
    let mut eps_hi = eps_of(hi)?;
    let mut lo;
    if meets(eps_hi) {
        lo = hi / 2.0;
        loop {
            let eps = eps_of(lo)?;
            if !meets(eps) {
                break;
            }
            (hi, eps_hi) = (lo, eps);
            if lo < 1e-6 {
                return Ok(hi);
            }
            lo /= 2.0;
        }
    } else {
        loop {
            lo = hi;
            if hi >= SIGMA_MAX {
                return Err(Error::BracketFailure {
                    target: target_eps,
                    sigma_max: SIGMA_MAX,
                });
            }
            hi = (2.0 * hi).min(SIGMA_MAX);
            eps_hi = eps_of(hi)?;
            if meets(eps_hi) {
                break;
            }
        }
    }

    // invariant: eps(lo) > target >= eps(hi)
    while (hi - lo) > tol * hi || eps_hi < target_eps * (1.0 - tol) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let eps = eps_of(mid)?;
        if meets(eps) {
            (hi, eps_hi) = (mid, eps);
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
