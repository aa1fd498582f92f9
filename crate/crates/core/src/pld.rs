//! Privacy loss distributions: pessimistic discretization of a privacy
//! curve, self-composition, and conversion between `delta(eps)` and
//! `eps(delta)`.
//!
//! A [`DiscretePld`] lives on the grid `k * grid_spacing` for integer `k`.
//! Its privacy curve is
//!
//! ```text
//! delta(eps) = infinity_mass + sum_k mass_k * max(0, 1 - exp(eps - k * grid_spacing))
//! ```
//!
//! which, as a function of `alpha = e^eps`, is convex and piecewise linear
//! with breakpoints at the grid. [`discretize`] picks the masses so that this
//! curve passes through the source curve at every grid point and joins them
//! by chords ("connect the dots"). Chords of a convex curve lie above it, so
//! the discrete curve is an upper bound everywhere.
//!
//! Because every distribution shares the same integer grid, convolution
//! never needs re-rounding; tails below the truncation threshold are moved
//! pessimistically (lower tail up to the first kept point, upper tail to the
//! mass at infinity).

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A privacy profile `eps -> delta(eps)`.
#[derive(Clone)]
pub struct PrivacyCurve {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    description: String,
}

impl PrivacyCurve {
    pub fn new(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PrivacyCurve {
            eval: Arc::new(f),
            description: description.into(),
        }
    }

    pub fn delta(&self, epsilon: f64) -> f64 {
        (self.eval)(epsilon)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl fmt::Debug for PrivacyCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivacyCurve")
            .field("description", &self.description)
            .finish()
    }
}

/// Which dominating-pair orientation(s) to account for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `((1 - g) Q + g P, Q)`
    Forward,
    /// `(P, (1 - g) P + g Q)`
    Reverse,
    /// The larger of the two.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvolutionMethod {
    Direct,
    Fft,
    /// Direct for small products of lengths, FFT otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountingConfig {
    pub steps: u64,
    pub grid_spacing: f64,
    pub tail_mass_truncation: f64,
    pub direction: Direction,
    pub max_grid_len: usize,
    pub convolution: ConvolutionMethod,
    /// Largest allowed ratio of grid spacing to the spread (standard
    /// deviation) of the privacy loss, used by [`compose_curve`]; `0`
    /// disables refinement and keeps every grid at `grid_spacing`.
    pub resolution: f64,
}

impl Default for AccountingConfig {
    fn default() -> Self {
        AccountingConfig {
            steps: 1,
            grid_spacing: 1e-3,
            tail_mass_truncation: 1e-15,
            direction: Direction::Both,
            max_grid_len: 1 << 24,
            convolution: ConvolutionMethod::Auto,
            resolution: 0.1,
        }
    }
}

impl AccountingConfig {
    pub fn with_steps(steps: u64) -> Self {
        AccountingConfig {
            steps,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        if !(self.grid_spacing > 0.0 && self.grid_spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {}",
                self.grid_spacing
            )));
        }
        if !(self.resolution >= 0.0 && self.resolution.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "resolution must be >= 0, got {}",
                self.resolution
            )));
        }
        if !(0.0..1.0).contains(&self.tail_mass_truncation) {
            return Err(Error::InvalidParameter(format!(
                "tail mass truncation must be in [0, 1), got {}",
                self.tail_mass_truncation
            )));
        }
        Ok(())
    }
}

/// Monotonicity slack tolerated when sampling a curve.
const MONOTONE_SLACK: f64 = 1e-12;

// Below this many multiply-adds, direct convolution beats the FFT.
const DIRECT_WORK_LIMIT: usize = 1 << 25;

/// A privacy loss distribution on an arithmetic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePld {
    grid_spacing: f64,
    offset: i64,
    masses: Vec<f64>,
    infinity_mass: f64,
}

/// Pessimistic connect-the-dots discretization of `curve` on the grid
/// `k * cfg.grid_spacing`.
///
/// The grid runs from the last point where the curve is within
/// `tail_mass_truncation` of its lower envelope `1 - e^eps` up to the first
/// point where `delta <= tail_mass_truncation`; `delta` there becomes the
/// mass at infinity.
pub fn discretize(curve: &PrivacyCurve, cfg: &AccountingConfig) -> Result<DiscretePld> {
    cfg.validate()?;
    let step = cfg.grid_spacing;
    let tau = cfg.tail_mass_truncation;
    let limit = cfg.max_grid_len as i64;
    let delta_at = |k: i64| curve.delta(k as f64 * step);
    let gap_at = |k: i64| {
        let eps = k as f64 * step;
        curve.delta(eps) + eps.exp_m1()
    };

    let hi = first_index(|k| delta_at(k) <= tau, 1, limit).ok_or(Error::GridOverflow {
        len: cfg.max_grid_len + 1,
        max: cfg.max_grid_len,
    })?;
    let lo = -first_index(|k| gap_at(-k) <= tau, 1, limit).ok_or(Error::GridOverflow {
        len: cfg.max_grid_len + 1,
        max: cfg.max_grid_len,
    })?;
    let len = (hi - lo + 1) as usize;
    if len > cfg.max_grid_len {
        return Err(Error::GridOverflow {
            len,
            max: cfg.max_grid_len,
        });
    }

    let mut deltas = Vec::with_capacity(len);
    let mut running = 1.0f64;
    for k in lo..=hi {
        let d = delta_at(k);
        if !d.is_finite() || d > running + MONOTONE_SLACK {
            return Err(Error::NonMonotoneCurve {
                epsilon: k as f64 * step,
                increase: d - running,
            });
        }
        running = d.clamp(0.0, running);
        deltas.push(running);
    }

    Ok(DiscretePld::from_grid_deltas(step, lo, &deltas))
}

/// Smallest `k >= 0` with `pred(k)`, assuming `pred` is monotone, searching
/// up to `limit`.
fn first_index(pred: impl Fn(i64) -> bool, start: i64, limit: i64) -> Option<i64> {
    if pred(0) {
        return Some(0);
    }
    let mut hi = start;
    while !pred(hi) {
        if hi > limit {
            return None;
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // pred(lo) is false, pred(hi) is true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

impl DiscretePld {
    /// Builds the connect-the-dots PLD whose curve takes the values
    /// `deltas[i]` at `eps = (offset + i) * step` (non-increasing).
    fn from_grid_deltas(step: f64, offset: i64, deltas: &[f64]) -> Self {
        let n = deltas.len();
        let infinity_mass = deltas[n - 1];
        let mut masses = vec![0.0; n];
        // Between grid points the curve is linear in alpha; the kink at
        // alpha_i carries mass_i / alpha_i of slope change.
        let growth = step.exp();
        let denom = step.exp_m1();
        for i in 1..n {
            let left_drop = deltas[i - 1] - deltas[i];
            let right_drop = if i + 1 < n {
                deltas[i] - deltas[i + 1]
            } else {
                0.0
            };
            masses[i] = ((growth * left_drop - right_drop) / denom).max(0.0);
        }
        let rest: f64 = masses[1..].iter().sum();
        masses[0] = (1.0 - infinity_mass - rest).max(0.0);
        let mut pld = DiscretePld {
            grid_spacing: step,
            offset,
            masses,
            infinity_mass,
        };
        // second differences can overshoot 1 by roundoff
        pld.restore_total_mass();
        pld
    }

    /// Point mass at loss zero (the identity for composition).
    pub fn identity(grid_spacing: f64) -> Self {
        DiscretePld {
            grid_spacing,
            offset: 0,
            masses: vec![1.0],
            infinity_mass: 0.0,
        }
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Privacy loss at index `i`.
    pub fn loss(&self, i: usize) -> f64 {
        (self.offset + i as i64) as f64 * self.grid_spacing
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.masses.len()).map(|i| self.loss(i))
    }

    /// Sum of finite masses plus the mass at infinity.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.infinity_mass
    }

    /// Standard deviation of the finite part of the loss distribution.
    pub fn loss_std(&self) -> f64 {
        let total: f64 = self.masses.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mean = self
            .losses()
            .zip(&self.masses)
            .map(|(l, m)| l * m)
            .sum::<f64>()
            / total;
        let var = self
            .losses()
            .zip(&self.masses)
            .map(|(l, m)| m * (l - mean) * (l - mean))
            .sum::<f64>()
            / total;
        var.max(0.0).sqrt()
    }

    /// The connect-the-dots discretization of this distribution's own
    /// privacy curve on the grid of twice the spacing.
    ///
    /// Atoms on even grid points stay put. An atom at `l` strictly between
    /// coarse points `a < l < b` is split so that `delta` is unchanged for
    /// `eps <= a` and `eps >= b`, which puts the fraction
    /// `(1 - e^(a - l)) / (1 - e^(a - b))` at `b`; in between the new curve
    /// is the chord, so it dominates the old one.
    pub fn coarsen(&self) -> DiscretePld {
        let h = self.grid_spacing;
        let up = 1.0 / (1.0 + (-h).exp());
        let first = self.offset.div_euclid(2);
        let last = (self.offset + self.masses.len() as i64 - 1).div_euclid(2) + 1;
        let mut masses = vec![0.0; (last - first + 1) as usize];
        for (i, &m) in self.masses.iter().enumerate() {
            let k = self.offset + i as i64;
            let j = (k.div_euclid(2) - first) as usize;
            if k.rem_euclid(2) == 0 {
                masses[j] += m;
            } else {
                masses[j + 1] += m * up;
                masses[j] += m * (1.0 - up);
            }
        }
        while masses.len() > 1 && masses[masses.len() - 1] == 0.0 {
            masses.pop();
        }
        let lead = masses
            .iter()
            .take_while(|&&m| m == 0.0)
            .count()
            .min(masses.len() - 1);
        masses.drain(..lead);
        DiscretePld {
            grid_spacing: 2.0 * h,
            offset: first + lead as i64,
            masses,
            infinity_mass: self.infinity_mass,
        }
    }

    /// `delta(eps)` of this distribution.
    pub fn delta_at(&self, epsilon: f64) -> f64 {
        if epsilon == f64::INFINITY {
            return self.infinity_mass;
        }
        let mut sum = 0.0;
        for i in (0..self.masses.len()).rev() {
            let l = self.loss(i);
            if l <= epsilon {
                break;
            }
            sum += self.masses[i] * -(epsilon - l).exp_m1();
        }
        (sum + self.infinity_mass).min(1.0)
    }

    /// Smallest `eps` with `delta_at(eps) <= delta`, never below the first
    /// grid point.
    ///
    /// Between grid points the curve is `A - e^eps B` for fixed `A, B`, so
    /// the crossing is solved in closed form and then checked.
    pub fn epsilon_at(&self, delta: f64) -> Result<f64> {
        if !(delta > self.infinity_mass) {
            return Err(Error::UnattainableDelta {
                delta,
                infinity_mass: self.infinity_mass,
            });
        }
        if self.delta_at(self.loss(0)) <= delta {
            return Ok(self.loss(0));
        }
        // delta_at(loss(lo)) > delta >= delta_at(loss(hi))
        let (mut lo, mut hi) = (0usize, self.masses.len() - 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.delta_at(self.loss(mid)) <= delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (left, right) = (self.loss(lo), self.loss(hi));
        let mut above = self.infinity_mass;
        let mut weighted = 0.0;
        for i in hi..self.masses.len() {
            above += self.masses[i];
            weighted += self.masses[i] * (-self.loss(i)).exp();
        }
        let mut eps = if weighted > 0.0 && above > delta {
            ((above - delta) / weighted).ln().clamp(left, right)
        } else {
            right
        };
        for _ in 0..64 {
            if self.delta_at(eps) <= delta {
                return Ok(eps);
            }
            eps = (eps + f64::EPSILON * eps.abs().max(1.0)).min(right);
        }
        Ok(right)
    }

    /// Composition with another PLD on the same grid.
    pub fn compose_with(&self, other: &DiscretePld, cfg: &AccountingConfig) -> Result<DiscretePld> {
        if self.grid_spacing != other.grid_spacing {
            return Err(Error::InvalidParameter(format!(
                "grid spacings differ: {} vs {}",
                self.grid_spacing, other.grid_spacing
            )));
        }
        let len = self.masses.len() + other.masses.len() - 1;
        if len > cfg.max_grid_len {
            return Err(Error::GridOverflow {
                len,
                max: cfg.max_grid_len,
            });
        }
        let use_fft = match cfg.convolution {
            ConvolutionMethod::Direct => false,
            ConvolutionMethod::Fft => true,
            ConvolutionMethod::Auto => {
                self.masses.len().saturating_mul(other.masses.len()) > DIRECT_WORK_LIMIT
            }
        };
        let mut masses = if use_fft {
            convolve_fft(&self.masses, &other.masses)
        } else {
            convolve_direct(&self.masses, &other.masses)
        };
        if use_fft {
            // transform noise can leave tiny negatives; restore the exact
            // finite mass after clamping them
            let expected = self.masses.iter().sum::<f64>() * other.masses.iter().sum::<f64>();
            let got: f64 = masses.iter().sum();
            if got > 0.0 {
                let scale = expected / got;
                masses.iter_mut().for_each(|m| *m *= scale);
            }
        }
        let infinity_mass =
            self.infinity_mass + other.infinity_mass - self.infinity_mass * other.infinity_mass;
        let mut pld = DiscretePld {
            grid_spacing: self.grid_spacing,
            offset: self.offset + other.offset,
            masses,
            infinity_mass,
        };
        pld.truncate_tails(cfg.tail_mass_truncation);
        pld.restore_total_mass();
        Ok(pld)
    }

    /// `steps`-fold self-composition by repeated squaring.
    pub fn compose(&self, steps: u64, cfg: &AccountingConfig) -> Result<DiscretePld> {
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        let mut result: Option<DiscretePld> = None;
        let mut power = self.clone();
        let mut remaining = steps;
        loop {
            if remaining & 1 == 1 {
                result = Some(match result {
                    None => power.clone(),
                    Some(r) => r.compose_with(&power, cfg)?,
                });
            }
            remaining >>= 1;
            if remaining == 0 {
                break;
            }
            power = power.compose_with(&power, cfg)?;
        }
        Ok(result.expect("steps >= 1"))
    }

    /// `steps`-fold self-composition by `steps - 1` sequential convolutions.
    pub fn compose_sequential(&self, steps: u64, cfg: &AccountingConfig) -> Result<DiscretePld> {
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        let mut result = self.clone();
        for _ in 1..steps {
            result = result.compose_with(self, cfg)?;
        }
        Ok(result)
    }

    /// Rounding in long convolutions lets the total drift from 1 (squaring
    /// doubles the error each time). A deficit is added to the mass at
    /// infinity; an excess, which is pure rounding, is taken from the
    /// lowest losses, where it affects `delta` least.
    fn restore_total_mass(&mut self) {
        let finite: f64 = self.masses.iter().sum();
        let gap = 1.0 - self.infinity_mass - finite;
        if gap > 0.0 {
            self.infinity_mass += gap;
            return;
        }
        let mut excess = -gap;
        for m in self.masses.iter_mut() {
            if excess <= 0.0 {
                break;
            }
            let take = m.min(excess);
            *m -= take;
            excess -= take;
        }
    }

    fn truncate_tails(&mut self, tau: f64) {
        let budget = 0.5 * tau;
        let n = self.masses.len();

        let mut upper = 0.0;
        let mut keep_end = n;
        while keep_end > 1 && upper + self.masses[keep_end - 1] <= budget {
            upper += self.masses[keep_end - 1];
            keep_end -= 1;
        }

        let mut lower = 0.0;
        let mut keep_start = 0;
        while keep_start + 1 < keep_end && lower + self.masses[keep_start] <= budget {
            lower += self.masses[keep_start];
            keep_start += 1;
        }

        if keep_start == 0 && keep_end == n {
            return;
        }
        self.masses.truncate(keep_end);
        self.masses.drain(..keep_start);
        self.masses[0] += lower;
        self.offset += keep_start as i64;
        self.infinity_mass += upper;
    }
}

/// Discretizes `curve` and composes it `steps` times with grid refinement.
///
/// Connect-the-dots is only accurate when the grid is fine compared to the
/// spread of the privacy loss; with strong subsampling single-step losses
/// can be far smaller than `grid_spacing`. The single step is therefore
/// discretized at `grid_spacing / 2^k` with `k` the smallest value making
/// the spacing at most `resolution` times the loss standard deviation.
/// During squaring the spread grows, and each power is coarsened (see
/// [`DiscretePld::coarsen`]) while the spacing stays within that ratio and
/// never above `grid_spacing`. Every step is pessimistic.
pub fn compose_curve(
    curve: &PrivacyCurve,
    steps: u64,
    cfg: &AccountingConfig,
) -> Result<DiscretePld> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let r = cfg.resolution;
    let mut single = discretize(curve, cfg)?;
    if r > 0.0 {
        let mut spacing = cfg.grid_spacing;
        for _ in 0..40 {
            let spread = single.loss_std();
            if spread == 0.0 || spacing <= r * spread {
                break;
            }
            let halvings = (spacing / (r * spread)).log2().ceil().max(1.0) as i32;
            spacing *= 0.5f64.powi(halvings);
            single = discretize(
                curve,
                &AccountingConfig {
                    grid_spacing: spacing,
                    ..*cfg
                },
            )?;
        }
    }
    let fits = |p: &DiscretePld| {
        r > 0.0
            && 2.0 * p.grid_spacing <= cfg.grid_spacing * (1.0 + 1e-9)
            && 2.0 * p.grid_spacing <= r * p.loss_std()
    };

    let mut result: Option<DiscretePld> = None;
    let mut power = single;
    let mut remaining = steps;
    loop {
        if remaining & 1 == 1 {
            result = Some(match result {
                None => power.clone(),
                Some(mut acc) => {
                    while acc.grid_spacing < power.grid_spacing * (1.0 - 1e-9) {
                        acc = acc.coarsen();
                    }
                    acc.compose_with(&power, cfg)?
                }
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        power = power.compose_with(&power, cfg)?;
        while fits(&power) {
            power = power.coarsen();
        }
    }
    Ok(result.expect("steps >= 1"))
}

/// `T`-fold composition, see [`DiscretePld::compose`].
pub fn compose(pld: &DiscretePld, steps: u64, cfg: &AccountingConfig) -> Result<DiscretePld> {
    pld.compose(steps, cfg)
}

fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let load = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &x) in buf.iter_mut().zip(v) {
            slot.re = x;
        }
        buf
    };
    let mut fa = load(a);
    forward.process(&mut fa);
    if std::ptr::eq(a, b) {
        fa.iter_mut().for_each(|z| *z = *z * *z);
    } else {
        let mut fb = load(b);
        forward.process(&mut fb);
        fa.iter_mut().zip(&fb).for_each(|(z, w)| *z *= w);
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..len].iter().map(|z| (z.re * scale).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{hs_forward, Alpha, GaussianPair, SubsampledPair};

    fn subsampled_curve(gamma: f64, sigma: f64) -> PrivacyCurve {
        let pair = SubsampledPair::new(GaussianPair::new(1.0, sigma).unwrap(), gamma).unwrap();
        PrivacyCurve::new("forward subsampled gaussian", move |e| {
            hs_forward(&pair, Alpha::from_epsilon(e))
        })
    }

    #[test]
    fn zero_rate_is_point_mass_at_zero() {
        let curve = subsampled_curve(0.0, 1.0);
        let pld = discretize(&curve, &AccountingConfig::default()).unwrap();
        assert_eq!(pld.masses(), &[1.0]);
        assert_eq!(pld.loss(0), 0.0);
        assert_eq!(pld.infinity_mass(), 0.0);
    }

    #[test]
    fn discretization_is_pessimistic_and_tight() {
        let curve = subsampled_curve(0.05, 1.0);
        let cfg = AccountingConfig::default();
        let pld = discretize(&curve, &cfg).unwrap();
        assert!((pld.total_mass() - 1.0).abs() < 1e-12);
        let mut worst_gap: f64 = 0.0;
        for i in 0..4000 {
            // off-grid sample points
            let eps = -0.2 + i as f64 * 1.37e-3 + 3.1e-4;
            let exact = curve.delta(eps);
            let discrete = pld.delta_at(eps);
            assert!(discrete >= exact - 1e-15, "eps={eps}: {discrete} < {exact}");
            worst_gap = worst_gap.max(discrete - exact);
        }
        assert!(worst_gap <= 1e-4, "gap {worst_gap}");
    }

    #[test]
    fn grid_points_are_interpolated_exactly() {
        let curve = subsampled_curve(0.2, 0.8);
        let pld = discretize(&curve, &AccountingConfig::default()).unwrap();
        for i in (0..pld.len()).step_by(97) {
            let eps = pld.loss(i);
            assert!((pld.delta_at(eps) - curve.delta(eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_monotone_curve_is_rejected() {
        let curve = PrivacyCurve::new("bumpy", |e: f64| {
            if (0.5..0.6).contains(&e) {
                0.4
            } else {
                (0.3 - 0.1 * e).clamp(0.0, 1.0)
            }
        });
        assert!(matches!(
            discretize(&curve, &AccountingConfig::default()),
            Err(Error::NonMonotoneCurve { .. })
        ));
    }

    #[test]
    fn compose_once_is_identity() {
        let pld = discretize(&subsampled_curve(0.1, 1.0), &AccountingConfig::default()).unwrap();
        assert_eq!(pld.compose(1, &AccountingConfig::default()).unwrap(), pld);
    }

    #[test]
    fn squaring_matches_sequential() {
        let cfg = AccountingConfig::default();
        let pld = discretize(&subsampled_curve(0.1, 1.0), &cfg).unwrap();
        let a = pld.compose(4, &cfg).unwrap();
        let b = pld.compose_sequential(4, &cfg).unwrap();
        for i in 0..200 {
            let eps = i as f64 * 0.01;
            assert!((a.delta_at(eps) - b.delta_at(eps)).abs() <= 1e-12);
        }
    }

    #[test]
    fn fft_and_direct_agree() {
        let pld = discretize(&subsampled_curve(0.3, 0.7), &AccountingConfig::default()).unwrap();
        let direct = AccountingConfig {
            convolution: ConvolutionMethod::Direct,
            ..Default::default()
        };
        let fft = AccountingConfig {
            convolution: ConvolutionMethod::Fft,
            ..Default::default()
        };
        let a = pld.compose(5, &direct).unwrap();
        let b = pld.compose(5, &fft).unwrap();
        for i in 0..100 {
            let eps = i as f64 * 0.05;
            assert!((a.delta_at(eps) - b.delta_at(eps)).abs() <= 1e-12);
        }
        assert!((b.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn composition_is_monotone_in_steps() {
        let cfg = AccountingConfig::default();
        let pld = discretize(&subsampled_curve(0.05, 1.0), &cfg).unwrap();
        let curves: Vec<_> = [1, 2, 5, 13, 40]
            .iter()
            .map(|&t| pld.compose(t, &cfg).unwrap())
            .collect();
        for eps in [0.0, 0.1, 0.5, 1.0, 2.0] {
            for w in curves.windows(2) {
                assert!(w[1].delta_at(eps) >= w[0].delta_at(eps) - 1e-15);
            }
        }
    }

    #[test]
    fn epsilon_round_trip() {
        let cfg = AccountingConfig::default();
        let pld = discretize(&subsampled_curve(0.05, 1.0), &cfg)
            .unwrap()
            .compose(100, &cfg)
            .unwrap();
        for delta in [1e-2, 1e-5, 1e-9] {
            let eps = pld.epsilon_at(delta).unwrap();
            assert!(pld.delta_at(eps) <= delta);
            // and nothing slightly smaller works
            assert!(pld.delta_at(eps - 1e-9) > delta);
        }
        assert_eq!(pld.epsilon_at(1.0).unwrap(), pld.loss(0));
        assert!(pld.delta_at(f64::INFINITY) == pld.infinity_mass());
        assert!(pld.delta_at(-1e6) <= 1.0);
    }

    #[test]
    fn unattainable_delta() {
        let pld = DiscretePld {
            grid_spacing: 0.1,
            offset: 0,
            masses: vec![0.5, 0.49],
            infinity_mass: 0.01,
        };
        assert!(matches!(
            pld.epsilon_at(0.01),
            Err(Error::UnattainableDelta { .. })
        ));
        assert!(pld.epsilon_at(0.02).is_ok());
    }

    #[test]
    fn truncation_moves_tails_pessimistically() {
        let mut pld = DiscretePld {
            grid_spacing: 1.0,
            offset: -2,
            masses: vec![1e-18, 2e-18, 0.5, 0.5 - 4e-18, 1e-18],
            infinity_mass: 0.0,
        };
        let before: Vec<f64> = (0..30)
            .map(|i| pld.delta_at(i as f64 * 0.1 - 1.0))
            .collect();
        pld.truncate_tails(1e-15);
        assert_eq!(pld.len(), 2);
        assert_eq!(pld.loss(0), 0.0);
        assert!((pld.total_mass() - 1.0).abs() < 1e-15);
        for (i, b) in before.iter().enumerate() {
            assert!(pld.delta_at(i as f64 * 0.1 - 1.0) >= *b);
        }
    }

    #[test]
    fn coarsening_conserves_mass_and_dominates() {
        let cfg = AccountingConfig {
            grid_spacing: 1e-4,
            ..Default::default()
        };
        let fine = discretize(&subsampled_curve(0.01, 1.0), &cfg)
            .unwrap()
            .compose(7, &cfg)
            .unwrap();
        let coarse = fine.coarsen();
        assert_eq!(coarse.grid_spacing(), 2e-4);
        assert!((coarse.total_mass() - fine.total_mass()).abs() < 1e-13);
        for i in 0..2000 {
            let eps = -0.05 + i as f64 * 7.3e-5;
            assert!(coarse.delta_at(eps) >= fine.delta_at(eps) - 1e-15);
        }
        // exact at the coarse grid points
        for i in (0..coarse.len()).step_by(5) {
            let eps = coarse.loss(i);
            assert!((coarse.delta_at(eps) - fine.delta_at(eps)).abs() < 1e-14);
        }
    }

    #[test]
    fn refined_composition_converges() {
        // per-step losses far below the default spacing
        let curve = subsampled_curve(5e-4, 1.0);
        let reference = {
            let cfg = AccountingConfig {
                grid_spacing: 2e-5,
                resolution: 0.0,
                ..Default::default()
            };
            discretize(&curve, &cfg)
                .unwrap()
                .compose(1000, &cfg)
                .unwrap()
                .epsilon_at(1e-5)
                .unwrap()
        };
        let coarse = {
            let cfg = AccountingConfig {
                resolution: 0.0,
                ..Default::default()
            };
            compose_curve(&curve, 1000, &cfg)
                .unwrap()
                .epsilon_at(1e-5)
                .unwrap()
        };
        let refined = compose_curve(&curve, 1000, &AccountingConfig::default()).unwrap();
        let eps = refined.epsilon_at(1e-5).unwrap();
        assert!(
            (eps - reference).abs() / reference < 5e-3,
            "{eps} vs {reference}"
        );
        assert!(
            (coarse - reference) / reference > 0.02,
            "fixed grid should be visibly loose"
        );
        assert!((refined.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refined_single_step_is_pessimistic() {
        let curve = subsampled_curve(1e-3, 2.0);
        let pld = compose_curve(&curve, 1, &AccountingConfig::default()).unwrap();
        for i in 0..3000 {
            let eps = -0.01 + i as f64 * 1.1e-5;
            assert!(pld.delta_at(eps) >= curve.delta(eps) - 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        assert!(AccountingConfig {
            steps: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AccountingConfig {
            grid_spacing: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AccountingConfig::default().validate().is_ok());
    }
}
