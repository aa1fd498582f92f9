//! Hockey-stick divergences of Gaussian dominating pairs and their
//! subsampled mixtures.
//!
//! For a pair `P = N(s, sigma^2)`, `Q = N(0, sigma^2)` every divergence
//! depends on `(s, sigma)` only through `mu = s / sigma`, so the closed forms
//! below work in standardized units where `P = N(mu, 1)` and `Q = N(0, 1)`.
//!
//! The likelihood ratio of each mixture pair is monotone in the 1-D
//! coordinate, so `H_alpha` is an integral over a half-line beyond a single
//! crossing point and reduces to normal tail probabilities.

use crate::error::{check_probability, Error, Result};
use crate::quadrature;
use crate::special::{normal_pdf, normal_sf};

/// Gaussian dominating pair `P = N(s, sigma^2)`, `Q = N(0, sigma^2)`.
///
/// `s = 1` gives the standard pair for a unit-sensitivity Gaussian mechanism.
/// `s = 2` is the tight pair for clipped gradients under substitution, where
/// one example's clipped gradient can flip from `+kappa` to `-kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPair {
    sensitivity: f64,
    noise_multiplier: f64,
}

impl GaussianPair {
    pub fn new(sensitivity: f64, noise_multiplier: f64) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        if !(noise_multiplier > 0.0 && noise_multiplier.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise multiplier must be positive and finite, got {noise_multiplier}"
            )));
        }
        Ok(GaussianPair {
            sensitivity,
            noise_multiplier,
        })
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn noise_multiplier(&self) -> f64 {
        self.noise_multiplier
    }

    /// `s / sigma`, the only quantity divergences depend on.
    pub fn ratio(&self) -> f64 {
        self.sensitivity / self.noise_multiplier
    }
}

/// A Gaussian pair subsampled at effective rate `gamma_eff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsampledPair {
    pub base: GaussianPair,
    pub gamma_eff: f64,
}

impl SubsampledPair {
    pub fn new(base: GaussianPair, gamma_eff: f64) -> Result<Self> {
        check_probability("gamma_eff", gamma_eff)?;
        Ok(SubsampledPair { base, gamma_eff })
    }
}

/// The hockey-stick order `alpha = e^epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha >= 0.0 {
            Ok(Alpha(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "alpha must be >= 0, got {alpha}"
            )))
        }
    }

    pub fn from_epsilon(epsilon: f64) -> Self {
        Alpha(epsilon.exp())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn epsilon(self) -> f64 {
        self.0.ln()
    }
}

/// `H_alpha((1 - g) Q + g P || Q)` with `P = N(mu, 1)`, `Q = N(0, 1)`.
pub(crate) fn mixture_vs_base(mu: f64, gamma: f64, alpha: f64) -> f64 {
    if gamma == 0.0 {
        return (1.0 - alpha).max(0.0);
    }
    // ratio (1 - g) + g exp(mu x - mu^2 / 2) exceeds alpha for x > x*
    let c = alpha - 1.0 + gamma;
    if c <= 0.0 {
        return 1.0 - alpha;
    }
    let x = (c / gamma).ln() / mu + 0.5 * mu;
    (gamma * normal_sf(x - mu) - c * normal_sf(x)).max(0.0)
}

/// `H_alpha(P || (1 - g) P + g Q)` with `P = N(mu, 1)`, `Q = N(0, 1)`.
pub(crate) fn base_vs_mixture(mu: f64, gamma: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    if gamma == 0.0 {
        return (1.0 - alpha).max(0.0);
    }
    // ratio 1 / ((1 - g) + g exp(mu^2 / 2 - mu x)) exceeds alpha for x > x*
    let c = 1.0 / alpha - 1.0 + gamma;
    if c <= 0.0 {
        return 0.0;
    }
    let x = 0.5 * mu - (c / gamma).ln() / mu;
    (alpha * (c * normal_sf(x - mu) - gamma * normal_sf(x))).max(0.0)
}

/// `H_alpha(P || Q)` for the Gaussian pair.
pub fn hs_gaussian(pair: &GaussianPair, alpha: Alpha) -> f64 {
    mixture_vs_base(pair.ratio(), 1.0, alpha.0)
}

/// Tight hockey-stick bound of the subsampled mechanism:
/// `H_alpha((1 - g) Q + g P || Q)` for `alpha >= 1` and
/// `H_alpha(P || (1 - g) P + g Q)` for `alpha < 1`.
pub fn hs_subsampled(pair: &SubsampledPair, alpha: Alpha) -> f64 {
    let mu = pair.base.ratio();
    if alpha.0 >= 1.0 {
        mixture_vs_base(mu, pair.gamma_eff, alpha.0)
    } else {
        base_vs_mixture(mu, pair.gamma_eff, alpha.0)
    }
}

/// `H_alpha((1 - g) Q + g P || Q)` at every `alpha`: the forward
/// (removal-like) direction used for composition.
pub fn hs_forward(pair: &SubsampledPair, alpha: Alpha) -> f64 {
    mixture_vs_base(pair.base.ratio(), pair.gamma_eff, alpha.0)
}

/// `H_alpha(P || (1 - g) P + g Q)` at every `alpha`: the reverse
/// (addition-like) direction used for composition.
pub fn hs_reverse(pair: &SubsampledPair, alpha: Alpha) -> f64 {
    base_vs_mixture(pair.base.ratio(), pair.gamma_eff, alpha.0)
}

/// Epsilon of the subsampled mechanism from the classical amplification
/// bound, `log(1 + gamma (e^eps_base - 1))`.
pub fn naive_amplified_epsilon(gamma: f64, eps_base: f64) -> Result<f64> {
    check_probability("gamma", gamma)?;
    if !(eps_base >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base epsilon must be >= 0, got {eps_base}"
        )));
    }
    Ok((gamma * eps_base.exp_m1()).ln_1p())
}

/// Finite mixture of unit-variance-scaled Gaussians sharing one standard
/// deviation, given as `(weight, mean)` components.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub sd: f64,
    pub components: Vec<(f64, f64)>,
}

impl GaussianMixture {
    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m)| w * normal_pdf(x, m, self.sd))
            .sum()
    }
}

/// Two 1-D distributions whose likelihood ratio `upper / lower` is monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePair {
    pub upper: GaussianMixture,
    pub lower: GaussianMixture,
}

impl MixturePair {
    /// `(P, Q)` in the pair's own units.
    pub fn gaussian(pair: &GaussianPair) -> Self {
        let sd = pair.noise_multiplier;
        MixturePair {
            upper: GaussianMixture {
                sd,
                components: vec![(1.0, pair.sensitivity)],
            },
            lower: GaussianMixture {
                sd,
                components: vec![(1.0, 0.0)],
            },
        }
    }

    /// `((1 - g) Q + g P, Q)`.
    pub fn forward(pair: &SubsampledPair) -> Self {
        let (g, s, sd) = (
            pair.gamma_eff,
            pair.base.sensitivity,
            pair.base.noise_multiplier,
        );
        MixturePair {
            upper: GaussianMixture {
                sd,
                components: vec![(1.0 - g, 0.0), (g, s)],
            },
            lower: GaussianMixture {
                sd,
                components: vec![(1.0, 0.0)],
            },
        }
    }

    /// `(P, (1 - g) P + g Q)`.
    pub fn reverse(pair: &SubsampledPair) -> Self {
        let (g, s, sd) = (
            pair.gamma_eff,
            pair.base.sensitivity,
            pair.base.noise_multiplier,
        );
        MixturePair {
            upper: GaussianMixture {
                sd,
                components: vec![(1.0, s)],
            },
            lower: GaussianMixture {
                sd,
                components: vec![(1.0 - g, s), (g, 0.0)],
            },
        }
    }

    /// The pair that bounds the subsampled mechanism at this `alpha`.
    pub fn for_alpha(pair: &SubsampledPair, alpha: Alpha) -> Self {
        if alpha.0 >= 1.0 {
            Self::forward(pair)
        } else {
            Self::reverse(pair)
        }
    }

    fn support(&self) -> (f64, f64) {
        let means = self
            .upper
            .components
            .iter()
            .chain(&self.lower.components)
            .map(|c| c.1);
        let lo = means.clone().fold(f64::INFINITY, f64::min);
        let hi = means.fold(f64::NEG_INFINITY, f64::max);
        let sd = self.upper.sd.max(self.lower.sd);
        (lo - 40.0 * sd, hi + 40.0 * sd)
    }
}

/// `H_alpha(upper || lower) = integral of max(p - alpha q, 0)` by adaptive
/// quadrature, to absolute error `tol`.
///
/// Sign changes of `p - alpha q` are located by scanning and bisection and
/// used as breakpoints, so each integrated piece is smooth.
pub fn hs_numeric(pair: &MixturePair, alpha: Alpha, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let a = alpha.0;
    let diff = |x: f64| pair.upper.pdf(x) - a * pair.lower.pdf(x);
    let (lo, hi) = pair.support();

    const SCAN: usize = 8000;
    let step = (hi - lo) / SCAN as f64;
    let mut breaks = vec![lo];
    let mut prev = diff(lo) > 0.0;
    for i in 1..=SCAN {
        let x = lo + step * i as f64;
        let here = diff(x) > 0.0;
        if here != prev {
            let (mut l, mut r) = (x - step, x);
            for _ in 0..200 {
                let m = 0.5 * (l + r);
                if m <= l || m >= r {
                    break;
                }
                if (diff(m) > 0.0) == prev {
                    l = m;
                } else {
                    r = m;
                }
            }
            breaks.push(0.5 * (l + r));
        }
        prev = here;
    }
    breaks.push(hi);

    let pieces = breaks.len() - 1;
    let mut total = 0.0;
    let mut error = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = quadrature::integrate(
            |x| diff(x).max(0.0),
            w[0],
            w[1],
            tol / pieces as f64,
            20_000,
        );
        total += v;
        error += e;
    }
    if error > tol {
        return Err(Error::QuadratureNonconvergence { error, tol });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(s: f64, sigma: f64, gamma: f64) -> SubsampledPair {
        SubsampledPair::new(GaussianPair::new(s, sigma).unwrap(), gamma).unwrap()
    }

    // 2 Phi(0.5) - 1 from mpmath
    const H1_UNIT: f64 = 0.38292492254802620727;

    #[test]
    fn gaussian_at_epsilon_zero() {
        let g = GaussianPair::new(1.0, 1.0).unwrap();
        let closed = hs_gaussian(&g, Alpha::new(1.0).unwrap());
        assert!((closed - H1_UNIT).abs() < 1e-15);
        let numeric =
            hs_numeric(&MixturePair::gaussian(&g), Alpha::new(1.0).unwrap(), 1e-12).unwrap();
        assert!((numeric - H1_UNIT).abs() < 1e-10);
    }

    #[test]
    fn gaussian_limits() {
        let g = GaussianPair::new(3.0, 2.0).unwrap();
        assert_eq!(hs_gaussian(&g, Alpha::new(0.0).unwrap()), 1.0);
        assert_eq!(
            hs_gaussian(
                &GaussianPair::new(1.0, 1.0).unwrap(),
                Alpha::from_epsilon(60.0)
            ),
            0.0
        );
    }

    #[test]
    fn subsampled_reductions() {
        for eps in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let a = Alpha::from_epsilon(eps);
            let full = pair(1.3, 0.9, 1.0);
            let expected = hs_gaussian(&full.base, a);
            assert!((hs_subsampled(&full, a) - expected).abs() < 1e-15);
            if eps >= 0.0 {
                assert_eq!(hs_subsampled(&pair(1.0, 1.0, 0.0), a), 0.0);
            }
        }
        let tenth = hs_subsampled(&pair(1.0, 1.0, 0.1), Alpha::new(1.0).unwrap());
        assert!((tenth - 0.1 * H1_UNIT).abs() < 1e-15);
    }

    #[test]
    fn branches_meet_at_alpha_one() {
        for gamma in [1e-4, 0.03, 0.5, 1.0] {
            for mu in [0.1, 1.0, 5.0] {
                let p = pair(mu, 1.0, gamma);
                let just_below = hs_subsampled(&p, Alpha::new(1.0 - 1e-12).unwrap());
                let at = hs_subsampled(&p, Alpha::new(1.0).unwrap());
                assert!((just_below - at).abs() < 1e-11, "gamma={gamma} mu={mu}");
            }
        }
    }

    #[test]
    fn quadrature_agrees_on_half_mixture() {
        let p = pair(1.0, 1.0, 0.5);
        let a = Alpha::new(2.0).unwrap();
        let numeric = hs_numeric(&MixturePair::for_alpha(&p, a), a, 1e-12).unwrap();
        assert!((hs_subsampled(&p, a) - numeric).abs() < 1e-10);
    }

    #[test]
    fn quadrature_at_alpha_zero_is_total_mass() {
        let p = pair(2.0, 0.7, 0.3);
        let a = Alpha::new(0.0).unwrap();
        let v = hs_numeric(&MixturePair::reverse(&p), a, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        for eps in [-2.0, 0.0, 1.5] {
            let a = Alpha::from_epsilon(eps);
            let x = hs_subsampled(&pair(1.0, 2.0, 0.2), a);
            let y = hs_subsampled(&pair(3.5, 7.0, 0.2), a);
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn advanced_joint_convexity() {
        for gamma in [0.01, 0.2, 0.9] {
            for eps in [0.0, 0.5, 2.0, 6.0] {
                let a = Alpha::from_epsilon(eps);
                let sub = hs_subsampled(&pair(1.0, 0.8, gamma), a);
                let base = hs_gaussian(&GaussianPair::new(1.0, 0.8).unwrap(), a);
                assert!(sub <= gamma * base + 1e-16);
            }
        }
    }

    #[test]
    fn naive_amplification() {
        assert!((naive_amplified_epsilon(1.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(naive_amplified_epsilon(0.0, 2.0).unwrap(), 0.0);
        let v = naive_amplified_epsilon(0.01, 1.0).unwrap();
        assert!((v - (1.0 + 0.01 * (std::f64::consts::E - 1.0)).ln()).abs() < 1e-15);
        assert!((v - 0.017_036_863_236).abs() < 1e-12);
        assert!(naive_amplified_epsilon(1.2, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianPair::new(0.0, 1.0).is_err());
        assert!(GaussianPair::new(1.0, -1.0).is_err());
        assert!(SubsampledPair::new(GaussianPair::new(1.0, 1.0).unwrap(), 1.01).is_err());
        assert!(Alpha::new(-0.1).is_err());
        let g = GaussianPair::new(1.0, 1.0).unwrap();
        assert!(hs_numeric(&MixturePair::gaussian(&g), Alpha::new(1.0).unwrap(), 0.0).is_err());
    }
}
