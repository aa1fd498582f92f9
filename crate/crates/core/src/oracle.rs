//! Brute-force validators for the closed forms: literal enumeration of crop
//! origins and seeded Monte Carlo estimates of hockey-stick divergences.
//!
//! Monte Carlo runs split the sample budget into fixed-size chunks. Chunk
//! `k` draws from a ChaCha8 stream selected by `(seed, k)`, and partial sums
//! are reduced in chunk order, so results are bit-identical for a given seed
//! regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::divergence::{Alpha, SubsampledPair};
use crate::error::{check_probability, Error, Result};
use crate::geometry::{CropConfig, InclusionProbability, PatchShape, PatchSpec, Position};

/// Largest origin space [`enumerate_inclusion`] will walk.
pub const MAX_ENUMERATED_ORIGINS: u64 = 100_000_000;

const CHUNK: u64 = 1 << 16;

/// Counts, origin by origin, the crop windows that contain at least one
/// patch pixel.
pub fn enumerate_inclusion(
    cfg: &CropConfig,
    shape: &PatchShape,
    at: Position,
) -> Result<InclusionProbability> {
    let hits = hit_table(cfg, shape, at)?;
    let favorable = hits.iter().filter(|&&h| h).count() as u64;
    Ok(InclusionProbability::new(favorable, hits.len() as u64))
}

/// `hits[v * w_tot + u]` is true when the crop at origin `(u, v)` meets the
/// patch.
fn hit_table(cfg: &CropConfig, shape: &PatchShape, at: Position) -> Result<Vec<bool>> {
    let (w_tot, h_tot) = cfg.origin_space()?;
    let origins = w_tot * h_tot;
    if origins > MAX_ENUMERATED_ORIGINS {
        return Err(Error::TooLargeDomain {
            origins,
            limit: MAX_ENUMERATED_ORIGINS,
        });
    }
    let (pw, ph) = shape.extent();
    if at.x as u64 + pw as u64 > cfg.image_width as u64
        || at.y as u64 + ph as u64 > cfg.image_height as u64
    {
        return Err(Error::PlacementOutOfBounds(format!(
            "{pw}x{ph} patch at ({}, {}) extends past {}x{} image",
            at.x, at.y, cfg.image_width, cfg.image_height
        )));
    }
    // patch pixels in padded coordinates
    let pixels: Vec<(u64, u64)> = match shape {
        PatchShape::Rect(r) => (0..r.height)
            .flat_map(|y| (0..r.width).map(move |x| (x, y)))
            .collect::<Vec<_>>(),
        PatchShape::Mask(m) => m.pixels().collect(),
    }
    .into_iter()
    .map(|(x, y)| {
        (
            (at.x + x) as u64 + cfg.pad_x as u64,
            (at.y + y) as u64 + cfg.pad_y as u64,
        )
    })
    .collect();
    let (cw, ch) = (cfg.crop_width as u64, cfg.crop_height as u64);

    let mut hits = Vec::with_capacity(origins as usize);
    for v in 0..h_tot {
        for u in 0..w_tot {
            let hit = pixels
                .iter()
                .any(|&(x, y)| x >= u && x < u + cw && y >= v && y < v + ch);
            hits.push(hit);
        }
    }
    Ok(hits)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl MCEstimate {
    /// Number of standard errors separating the estimate from `value`.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.estimate == value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.estimate - value) / self.std_error
        }
    }
}

/// Runs `draw` `samples` times over chunked, seeded streams and returns the
/// sample mean and its standard error.
fn monte_carlo<F>(samples: u64, seed: u64, draw: F) -> MCEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = CHUNK.min(samples - k * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n {
                let v = draw(&mut rng);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    MCEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        samples,
    }
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "at least 1000 samples required, got {samples}"
        )));
    }
    Ok(())
}

/// Importance-sampling estimate of the subsampled-pair divergence at
/// `alpha`, as the mean of `max(0, 1 - alpha * dlower/dupper)` under the
/// upper distribution of the pair that applies at this `alpha`.
pub fn mc_hockey_stick(
    pair: &SubsampledPair,
    alpha: Alpha,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(samples)?;
    let mu = pair.base.ratio();
    let g = pair.gamma_eff;
    let a = alpha.value();
    let forward = a >= 1.0;
    Ok(monte_carlo(samples, seed, move |rng| {
        let z: f64 = rng.sample(StandardNormal);
        let shift = mu * mu / 2.0;
        let ratio = if forward {
            // x ~ (1 - g) Q + g P, ratio Q / mixture
            let from_p = rng.gen::<f64>() < g;
            let x = z + if from_p { mu } else { 0.0 };
            1.0 / ((1.0 - g) + g * (mu * x - shift).exp())
        } else {
            // x ~ P, ratio ((1 - g) P + g Q) / P
            let x = z + mu;
            (1.0 - g) + g * (shift - mu * x).exp()
        };
        (1.0 - a * ratio).max(0.0)
    }))
}

/// Simulates the worst-case clipped-gradient mechanism on a pair of
/// patch-level neighbouring datasets and estimates its divergence at
/// `e^epsilon`.
///
/// Each step draws the minibatch membership of the one image that differs
/// (probability `gamma_wo`) and a uniform crop origin. The gradient of that
/// image is `+kappa` along the first coordinate if its crop shows the
/// substituted patch and `-kappa` otherwise; every other image contributes
/// `-kappa` in both worlds and Gaussian noise of scale `sigma * kappa` is
/// added. Only the first coordinate is simulated, with `kappa = 1`, and the
/// common `-kappa` terms and `1 / m` averaging are dropped since shifts and
/// scalings leave the divergence unchanged.
///
/// The estimate is the mean of `1[y' in S] - alpha 1[y in S]` over coupled
/// draws, where `S` is the likelihood-ratio threshold set of the output
/// pair. For any `S` this is an unbiased estimate of a lower bound on the
/// divergence; with the optimal `S` it is the divergence itself.
pub fn worst_case_mechanism_divergence(
    gamma_wo: f64,
    crop: &CropConfig,
    patch: &PatchSpec,
    sigma: f64,
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_probability("gamma_wo", gamma_wo)?;
    check_samples(samples)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise multiplier must be positive, got {sigma}"
        )));
    }
    let (_, at) = crate::geometry::inclusion_probability(crop, patch)?;
    let hits = hit_table(crop, &patch.shape, at)?;
    let (w_tot, h_tot) = crop.origin_space()?;

    // In these units the differing gradient moves the output by 2.
    let jump = 2.0;
    let alpha = epsilon.exp();
    let gamma = gamma_wo * hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
    let sd2 = sigma * sigma;

    // Likelihood ratio of the substituted world's output to the original's
    // is (1 - gamma) + gamma exp((jump y - jump^2 / 2) / sigma^2), increasing
    // in y. For alpha >= 1 the test set is {ratio > alpha} = {y > t}; below 1
    // the roles swap and the set is {1 / ratio > alpha} = {y < t}.
    let (forward, c) = if alpha >= 1.0 {
        (true, alpha - 1.0 + gamma)
    } else {
        (false, 1.0 / alpha - 1.0 + gamma)
    };
    let threshold = if gamma == 0.0 {
        // identical outputs: empty set above 1, everything below
        f64::INFINITY
    } else if c <= 0.0 {
        f64::NEG_INFINITY
    } else {
        sd2 * (c / gamma).ln() / jump + jump / 2.0
    };

    Ok(monte_carlo(samples, seed, move |rng| {
        let member = rng.gen::<f64>() < gamma_wo;
        let u = rng.gen_range(0..w_tot);
        let v = rng.gen_range(0..h_tot);
        let shows_patch = member && hits[(v * w_tot + u) as usize];
        let noise = sigma * rng.sample::<f64, _>(StandardNormal);

        let original = -1.0;
        let substituted = if shows_patch { 1.0 } else { -1.0 };
        // shift so that the all-(-kappa) output is centred at zero
        let y = original + 1.0 + noise;
        let y_sub = substituted + 1.0 + noise;
        if forward {
            (y_sub > threshold) as u8 as f64 - alpha * (y > threshold) as u8 as f64
        } else {
            (y < threshold) as u8 as f64 - alpha * (y_sub < threshold) as u8 as f64
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{hs_subsampled, GaussianPair};
    use crate::geometry::{inclusion_probability_rect, Mask, Placement, Rect};

    fn pair(gamma: f64, s: f64, sigma: f64) -> SubsampledPair {
        SubsampledPair::new(GaussianPair::new(s, sigma).unwrap(), gamma).unwrap()
    }

    #[test]
    fn full_image_crop_hits_every_origin() {
        let cfg = CropConfig::new((30, 20), (0, 0), (30, 20)).unwrap();
        let p = enumerate_inclusion(
            &cfg,
            &PatchShape::Rect(Rect::new(3, 3)),
            Position::new(5, 5),
        )
        .unwrap();
        assert_eq!((p.favorable(), p.total()), (1, 1));
    }

    #[test]
    fn enumeration_matches_small_closed_form() {
        let cfg = CropConfig::new((12, 9), (2, 1), (5, 4)).unwrap();
        for y in 0..=6 {
            for x in 0..=9 {
                let at = Position::new(x, y);
                let rect = Rect::new(3, 3);
                assert_eq!(
                    enumerate_inclusion(&cfg, &PatchShape::Rect(rect), at).unwrap(),
                    inclusion_probability_rect(&cfg, rect, at).unwrap()
                );
            }
        }
    }

    #[test]
    fn enumeration_guards_domain_size() {
        let cfg = CropConfig::new((20_000, 20_000), (0, 0), (1, 1)).unwrap();
        let r = enumerate_inclusion(
            &cfg,
            &PatchShape::Rect(Rect::new(1, 1)),
            Position::new(0, 0),
        );
        assert!(matches!(r, Err(Error::TooLargeDomain { .. })));
    }

    #[test]
    fn mc_is_deterministic() {
        let p = pair(0.1, 1.0, 1.0);
        let a = mc_hockey_stick(&p, Alpha::from_epsilon(0.5), 200_000, 7).unwrap();
        let b = mc_hockey_stick(&p, Alpha::from_epsilon(0.5), 200_000, 7).unwrap();
        assert_eq!(a, b);
        let c = mc_hockey_stick(&p, Alpha::from_epsilon(0.5), 200_000, 8).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn mc_trivial_cases() {
        let p = pair(0.2, 1.0, 1.0);
        let zero = mc_hockey_stick(&p, Alpha::new(0.0).unwrap(), 10_000, 1).unwrap();
        assert_eq!(zero.estimate, 1.0);
        let none =
            mc_hockey_stick(&pair(0.0, 1.0, 1.0), Alpha::new(1.5).unwrap(), 10_000, 1).unwrap();
        assert_eq!(none.estimate, 0.0);
        assert!(mc_hockey_stick(&p, Alpha::new(1.0).unwrap(), 999, 1).is_err());
    }

    #[test]
    fn mc_agrees_with_closed_form() {
        for (g, eps) in [(0.03, 1.0), (0.3, -0.5), (0.5, 0.2)] {
            let p = pair(g, 1.0, 1.0);
            let alpha = Alpha::from_epsilon(eps);
            let mc = mc_hockey_stick(&p, alpha, 2_000_000, 11).unwrap();
            let z = mc.z_score(hs_subsampled(&p, alpha));
            assert!(z.abs() < 4.0, "gamma={g} eps={eps}: z={z}");
        }
    }

    #[test]
    fn worst_case_mechanism_attains_bound() {
        // 20x20 image, 5x5 crop, centred 4x4 patch: 8*8 / 16*16 = 0.25
        let crop = CropConfig::new((20, 20), (0, 0), (5, 5)).unwrap();
        let patch = PatchSpec::rect_worst_case(4, 4);
        for eps in [-0.5, 0.0, 1.0] {
            let mc = worst_case_mechanism_divergence(0.1, &crop, &patch, 1.0, eps, 2_000_000, 3)
                .unwrap();
            let bound = hs_subsampled(&pair(0.025, 2.0, 1.0), Alpha::from_epsilon(eps));
            assert!(
                mc.z_score(bound).abs() < 4.0,
                "eps={eps}: {mc:?} vs {bound}"
            );
        }
    }

    #[test]
    fn worst_case_mechanism_with_mask_and_large_noise() {
        let crop = CropConfig::new((20, 20), (0, 0), (5, 5)).unwrap();
        let patch = PatchSpec {
            shape: PatchShape::Mask(Mask::disk(2).unwrap()),
            placement: Placement::WorstCase,
        };
        let mc =
            worst_case_mechanism_divergence(0.5, &crop, &patch, 200.0, 0.5, 100_000, 5).unwrap();
        assert!(mc.estimate.abs() < 5.0 * mc.std_error + 1e-3);
    }
}
