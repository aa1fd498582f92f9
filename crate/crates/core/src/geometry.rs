//! Crop-origin spaces and patch inclusion probabilities.
//!
//! Coordinates are in pixels with a bottom-left origin. A crop of size
//! `crop_width x crop_height` is drawn uniformly from every origin `(u, v)`
//! for which the window fits inside the symmetrically padded image. A private
//! patch is *included* in a crop when the crop window shares at least one
//! pixel with it.
//!
//! All counts are exact integers; the floating-point quotient is formed once,
//! at the end.

use crate::error::{check_probability, Error, Result};

/// Image, padding and crop dimensions that define the crop-origin space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub pad_x: u32,
    pub pad_y: u32,
    pub crop_width: u32,
    pub crop_height: u32,
}

impl CropConfig {
    /// Builds and validates a configuration from `(width, height)` pairs.
    pub fn new(image: (u32, u32), pad: (u32, u32), crop: (u32, u32)) -> Result<Self> {
        let cfg = CropConfig {
            image_width: image.0,
            image_height: image.1,
            pad_x: pad.0,
            pad_y: pad.1,
            crop_width: crop.0,
            crop_height: crop.1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn padded_width(&self) -> u64 {
        self.image_width as u64 + 2 * self.pad_x as u64
    }

    pub fn padded_height(&self) -> u64 {
        self.image_height as u64 + 2 * self.pad_y as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidConfig(format!(
                "image must be at least 1x1, got {}x{}",
                self.image_width, self.image_height
            )));
        }
        if self.crop_width == 0 || self.crop_height == 0 {
            return Err(Error::InvalidConfig(format!(
                "crop must be at least 1x1, got {}x{}",
                self.crop_width, self.crop_height
            )));
        }
        if self.crop_width as u64 > self.padded_width() {
            return Err(Error::InvalidConfig(format!(
                "crop width {} exceeds padded image width {}",
                self.crop_width,
                self.padded_width()
            )));
        }
        if self.crop_height as u64 > self.padded_height() {
            return Err(Error::InvalidConfig(format!(
                "crop height {} exceeds padded image height {}",
                self.crop_height,
                self.padded_height()
            )));
        }
        Ok(())
    }

    /// Number of horizontal and vertical crop origins.
    pub fn origin_space(&self) -> Result<(u64, u64)> {
        self.validate()?;
        Ok((
            self.padded_width() - self.crop_width as u64 + 1,
            self.padded_height() - self.crop_height as u64 + 1,
        ))
    }

    /// Total number of crop origins, `|Omega|`.
    pub fn origin_count(&self) -> Result<u64> {
        let (w, h) = self.origin_space()?;
        Ok(w * h)
    }
}

/// Returns `(W_tot, H_tot)`, the number of valid horizontal and vertical crop
/// origins.
pub fn origin_space(cfg: &CropConfig) -> Result<(u64, u64)> {
    cfg.origin_space()
}

/// Bottom-left corner of a patch, in original (unpadded) image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub x: u32,
    pub y: u32,
}

impl Position {
    pub fn new(x: u32, y: u32) -> Self {
        Position { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(width: u32, height: u32) -> Self {
        Rect { width, height }
    }

    pub fn square(side: u32) -> Self {
        Rect::new(side, side)
    }
}

/// A private region given as a bitmap.
///
/// Rows are indexed by `y` offset from the patch origin, columns by `x`
/// offset. The bitmap is stored trimmed to the bounding box of its set
/// pixels, so a placement always refers to that bounding box.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    /// Builds a mask from rows of pixels; `rows[y][x]`.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        Self::from_fn(width as u32, rows.len() as u32, |x, y| {
            rows[y as usize].get(x as usize).copied().unwrap_or(false)
        })
    }

    /// Builds a `width x height` mask from a predicate over `(x, y)`.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Result<Self> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if x0 == u32::MAX {
            return Err(Error::EmptyMask);
        }
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut bits = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                bits.push(f(x0 + x, y0 + y));
            }
        }
        Ok(Mask {
            width: w,
            height: h,
            bits,
        })
    }

    /// A solid rectangle.
    pub fn rect(width: u32, height: u32) -> Result<Self> {
        Self::from_fn(width, height, |_, _| true)
    }

    /// Digital disk: pixels whose centre lies within `radius` of the centre
    /// pixel. The bounding box is `(2r + 1) x (2r + 1)`.
    pub fn disk(radius: u32) -> Result<Self> {
        let side = 2 * radius + 1;
        let r = radius as i64;
        Self::from_fn(side, side, |x, y| {
            let (dx, dy) = (x as i64 - r, y as i64 - r);
            dx * dx + dy * dy <= r * r
        })
    }

    /// Two disks of the given radius side by side, separated by `gap` empty
    /// columns.
    pub fn disk_cluster(radius: u32, gap: u32) -> Result<Self> {
        let side = 2 * radius + 1;
        let r = radius as i64;
        let second = (side + gap) as i64;
        Self::from_fn(2 * side + gap, side, |x, y| {
            let dy = y as i64 - r;
            let in_disk = |cx: i64| {
                let dx = x as i64 - cx;
                dx * dx + dy * dy <= r * r
            };
            in_disk(r) || in_disk(second + r)
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Offsets `(x, y)` of every set pixel.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatchShape {
    Rect(Rect),
    Mask(Mask),
}

impl PatchShape {
    /// Bounding-box size `(width, height)`.
    pub fn extent(&self) -> (u32, u32) {
        match self {
            PatchShape::Rect(r) => (r.width, r.height),
            PatchShape::Mask(m) => (m.width, m.height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    At(Position),
    WorstCase,
}

/// A private region together with where it sits in the image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatchSpec {
    pub shape: PatchShape,
    pub placement: Placement,
}

impl PatchSpec {
    pub fn rect_worst_case(width: u32, height: u32) -> Self {
        PatchSpec {
            shape: PatchShape::Rect(Rect::new(width, height)),
            placement: Placement::WorstCase,
        }
    }
}

/// Exact probability that a uniformly drawn crop intersects a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionProbability {
    favorable: u64,
    total: u64,
    value: f64,
}

impl InclusionProbability {
    pub(crate) fn new(favorable: u64, total: u64) -> Self {
        debug_assert!(total > 0 && favorable <= total);
        InclusionProbability {
            favorable,
            total,
            value: favorable as f64 / total as f64,
        }
    }

    /// `|Omega_R|`, the number of crop origins whose window meets the patch.
    pub fn favorable(&self) -> u64 {
        self.favorable
    }

    /// `|Omega|`, the number of crop origins.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_saturated(&self) -> bool {
        self.favorable == self.total
    }
}

fn check_fits(cfg: &CropConfig, width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::PatchTooLarge(format!(
            "patch must be at least 1x1, got {width}x{height}"
        )));
    }
    if width > cfg.image_width || height > cfg.image_height {
        return Err(Error::PatchTooLarge(format!(
            "{width}x{height} patch does not fit in {}x{} image",
            cfg.image_width, cfg.image_height
        )));
    }
    Ok(())
}

fn check_placement(cfg: &CropConfig, width: u32, height: u32, at: Position) -> Result<()> {
    check_fits(cfg, width, height)?;
    if at.x as u64 + width as u64 > cfg.image_width as u64
        || at.y as u64 + height as u64 > cfg.image_height as u64
    {
        return Err(Error::PlacementOutOfBounds(format!(
            "{width}x{height} patch at ({}, {}) extends past {}x{} image",
            at.x, at.y, cfg.image_width, cfg.image_height
        )));
    }
    Ok(())
}

/// Number of crop origins along one axis whose window meets the patch span.
fn favorable_span(image: u32, pad: u32, crop: u32, patch_start: u32, patch_len: u32) -> u64 {
    let start = patch_start as i64 + pad as i64;
    let lo = (start - crop as i64 + 1).max(0);
    let hi = (image as i64 + 2 * pad as i64 - crop as i64).min(start + patch_len as i64 - 1);
    (hi - lo + 1).max(0) as u64
}

/// Inclusion probability of a rectangle at a fixed position, in closed form.
pub fn inclusion_probability_rect(
    cfg: &CropConfig,
    rect: Rect,
    at: Position,
) -> Result<InclusionProbability> {
    let (w_tot, h_tot) = cfg.origin_space()?;
    check_placement(cfg, rect.width, rect.height, at)?;
    let fx = favorable_span(cfg.image_width, cfg.pad_x, cfg.crop_width, at.x, rect.width);
    let fy = favorable_span(
        cfg.image_height,
        cfg.pad_y,
        cfg.crop_height,
        at.y,
        rect.height,
    );
    Ok(InclusionProbability::new(fx * fy, w_tot * h_tot))
}

/// The centrally placed rectangle, which attains the worst case.
pub fn center_placement(cfg: &CropConfig, rect: Rect) -> Result<Position> {
    check_fits(cfg, rect.width, rect.height)?;
    Ok(Position::new(
        (cfg.image_width - rect.width) / 2,
        (cfg.image_height - rect.height) / 2,
    ))
}

/// The mask dilated by the crop window, in crop-origin space, with a 2-D
/// prefix sum for O(1) box counts.
///
/// Cell `(a, b)` is set when the crop with origin `(ox + a, oy + b)` meets
/// the mask, where `(ox, oy)` is the mask position in padded coordinates
/// minus `(crop_width - 1, crop_height - 1)`.
struct DilatedMask {
    width: usize,
    height: usize,
    // (width + 1) x (height + 1), row-major by y
    prefix: Vec<u64>,
}

impl DilatedMask {
    fn new(mask: &Mask, crop_width: u32, crop_height: u32) -> Self {
        let (mw, mh) = (mask.width as usize, mask.height as usize);
        let (cw, ch) = (crop_width as usize, crop_height as usize);
        let dw = mw + cw - 1;
        let dh = mh + ch - 1;

        // horizontal pass: rows of the mask, each dilated to length dw
        let mut rows = vec![false; dw * mh];
        let mut run = vec![0u32; mw + 1];
        for y in 0..mh {
            for x in 0..mw {
                run[x + 1] = run[x] + mask.bits[y * mw + x] as u32;
            }
            for a in 0..dw {
                let lo = (a + 1).saturating_sub(cw);
                let hi = a.min(mw - 1);
                rows[y * dw + a] = lo <= hi && run[hi + 1] > run[lo];
            }
        }

        // vertical pass over columns of the row-dilated image
        let mut cells = vec![false; dw * dh];
        let mut col = vec![0u32; mh + 1];
        for a in 0..dw {
            for y in 0..mh {
                col[y + 1] = col[y] + rows[y * dw + a] as u32;
            }
            for b in 0..dh {
                let lo = (b + 1).saturating_sub(ch);
                let hi = b.min(mh - 1);
                cells[b * dw + a] = lo <= hi && col[hi + 1] > col[lo];
            }
        }

        let stride = dw + 1;
        let mut prefix = vec![0u64; stride * (dh + 1)];
        for b in 0..dh {
            let mut row_sum = 0u64;
            for a in 0..dw {
                row_sum += cells[b * dw + a] as u64;
                prefix[(b + 1) * stride + a + 1] = prefix[b * stride + a + 1] + row_sum;
            }
        }
        DilatedMask {
            width: dw,
            height: dh,
            prefix,
        }
    }

    /// Set cells with `a` in `[a0, a1)` and `b` in `[b0, b1)`.
    fn box_sum(&self, a0: usize, a1: usize, b0: usize, b1: usize) -> u64 {
        if a0 >= a1 || b0 >= b1 {
            return 0;
        }
        let s = self.width + 1;
        self.prefix[b1 * s + a1] + self.prefix[b0 * s + a0]
            - self.prefix[b0 * s + a1]
            - self.prefix[b1 * s + a0]
    }

    /// Favorable origins when the dilated image starts at `(ox, oy)` in
    /// origin space and the origin space is `[0, w_tot) x [0, h_tot)`.
    fn favorable(&self, ox: i64, oy: i64, w_tot: u64, h_tot: u64) -> u64 {
        let clamp = |lo: i64, hi: i64, len: usize| {
            let lo = lo.clamp(0, len as i64) as usize;
            let hi = hi.clamp(0, len as i64) as usize;
            (lo, hi)
        };
        let (a0, a1) = clamp(-ox, w_tot as i64 - ox, self.width);
        let (b0, b1) = clamp(-oy, h_tot as i64 - oy, self.height);
        self.box_sum(a0, a1, b0, b1)
    }
}

fn dilation_offset(pos: u32, pad: u32, crop: u32) -> i64 {
    pos as i64 + pad as i64 - crop as i64 + 1
}

/// Inclusion probability of an arbitrary mask at a fixed position.
pub fn inclusion_probability_mask(
    cfg: &CropConfig,
    mask: &Mask,
    at: Position,
) -> Result<InclusionProbability> {
    let (w_tot, h_tot) = cfg.origin_space()?;
    check_placement(cfg, mask.width, mask.height, at)?;
    let dilated = DilatedMask::new(mask, cfg.crop_width, cfg.crop_height);
    let favorable = dilated.favorable(
        dilation_offset(at.x, cfg.pad_x, cfg.crop_width),
        dilation_offset(at.y, cfg.pad_y, cfg.crop_height),
        w_tot,
        h_tot,
    );
    Ok(InclusionProbability::new(favorable, w_tot * h_tot))
}

/// Worst-case (maximal) inclusion probability and a placement attaining it.
///
/// Rectangles use the centred placement. Masks are searched exhaustively
/// over every translation inside the image; among maximizers the smallest
/// `(y, x)` wins.
pub fn worst_case_inclusion(
    cfg: &CropConfig,
    shape: &PatchShape,
) -> Result<(InclusionProbability, Position)> {
    match shape {
        PatchShape::Rect(rect) => {
            cfg.validate()?;
            let at = center_placement(cfg, *rect)?;
            Ok((inclusion_probability_rect(cfg, *rect, at)?, at))
        }
        PatchShape::Mask(mask) => {
            let (w_tot, h_tot) = cfg.origin_space()?;
            check_fits(cfg, mask.width, mask.height)?;
            let dilated = DilatedMask::new(mask, cfg.crop_width, cfg.crop_height);
            let mut best = (0u64, Position::new(0, 0));
            for y in 0..=(cfg.image_height - mask.height) {
                let oy = dilation_offset(y, cfg.pad_y, cfg.crop_height);
                for x in 0..=(cfg.image_width - mask.width) {
                    let ox = dilation_offset(x, cfg.pad_x, cfg.crop_width);
                    let count = dilated.favorable(ox, oy, w_tot, h_tot);
                    if count > best.0 {
                        best = (count, Position::new(x, y));
                    }
                }
            }
            Ok((InclusionProbability::new(best.0, w_tot * h_tot), best.1))
        }
    }
}

/// Inclusion probability for a patch spec, resolving worst-case placement.
pub fn inclusion_probability(
    cfg: &CropConfig,
    patch: &PatchSpec,
) -> Result<(InclusionProbability, Position)> {
    match (&patch.shape, patch.placement) {
        (PatchShape::Rect(r), Placement::At(at)) => {
            Ok((inclusion_probability_rect(cfg, *r, at)?, at))
        }
        (PatchShape::Mask(m), Placement::At(at)) => {
            Ok((inclusion_probability_mask(cfg, m, at)?, at))
        }
        (shape, Placement::WorstCase) => worst_case_inclusion(cfg, shape),
    }
}

/// Effective sampling rate `gamma_wo * gamma_crop`.
pub fn effective_rate(gamma_wo: f64, gamma_crop: f64) -> Result<f64> {
    check_probability("gamma_wo", gamma_wo)?;
    check_probability("gamma_crop", gamma_crop)?;
    Ok(gamma_wo * gamma_crop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_inclusion;
    use proptest::prelude::*;

    fn square(image: u32, pad: u32, crop: u32) -> CropConfig {
        CropConfig::new((image, image), (pad, pad), (crop, crop)).unwrap()
    }

    #[test]
    fn origin_space_examples() {
        assert_eq!(square(1000, 0, 100).origin_space().unwrap().0, 901);
        assert_eq!(square(1000, 0, 1000).origin_space().unwrap().0, 1);
        assert_eq!(square(1000, 50, 100).origin_space().unwrap().0, 1001);
    }

    #[test]
    fn crop_larger_than_padded_image_is_rejected() {
        let cfg = CropConfig {
            image_width: 100,
            image_height: 100,
            pad_x: 5,
            pad_y: 0,
            crop_width: 111,
            crop_height: 10,
        };
        assert!(matches!(cfg.origin_space(), Err(Error::InvalidConfig(_))));
        assert!(CropConfig::new((100, 100), (5, 0), (110, 10)).is_ok());
        assert!(CropConfig::new((0, 10), (0, 0), (1, 1)).is_err());
    }

    #[test]
    fn centred_ten_pixel_patch() {
        let cfg = square(1000, 0, 100);
        let rect = Rect::square(10);
        let at = center_placement(&cfg, rect).unwrap();
        assert_eq!(at, Position::new(495, 495));
        let p = inclusion_probability_rect(&cfg, rect, at).unwrap();
        assert_eq!((p.favorable(), p.total()), (109 * 109, 901 * 901));
        assert!((p.value() - 0.014_635_360_143_680_5).abs() < 1e-15);
    }

    #[test]
    fn full_image_crop_always_includes() {
        let cfg = square(64, 3, 70);
        let p = inclusion_probability_rect(&cfg, Rect::new(2, 5), Position::new(0, 59)).unwrap();
        assert_eq!((p.favorable(), p.total()), (1, 1));
    }

    #[test]
    fn saturation_cutoff_for_crop_side() {
        let rect = Rect::square(10);
        let at = Position::new(495, 495);
        let at_496 = inclusion_probability_rect(&square(1000, 0, 496), rect, at).unwrap();
        let at_495 = inclusion_probability_rect(&square(1000, 0, 495), rect, at).unwrap();
        assert!(at_496.is_saturated());
        assert!(!at_495.is_saturated());
    }

    #[test]
    fn both_bounds_active_regime() {
        // 20 + 2*1 < 2*12 + 4 - 2, so some placements clip on both sides:
        // padded x in 8..=10 has x - 12 + 1 < 0 and x + 4 - 1 > 10.
        let cfg = CropConfig::new((20, 9), (1, 0), (12, 3)).unwrap();
        let rect = Rect::new(4, 2);
        assert!(cfg.padded_width() < 2 * 12 + 4 - 2);
        let (w_tot, _) = cfg.origin_space().unwrap();
        for x in 7..=9 {
            let p = inclusion_probability_rect(&cfg, rect, Position::new(x, 3)).unwrap();
            let e =
                enumerate_inclusion(&cfg, &PatchShape::Rect(rect), Position::new(x, 3)).unwrap();
            assert_eq!(p, e);
            // the horizontal factor is the full origin width
            assert_eq!(p.favorable() % w_tot, 0);
            assert_eq!(p.favorable() / w_tot, 4);
        }
    }

    #[test]
    fn single_pixel_mask() {
        let cfg = square(1000, 0, 100);
        let mask = Mask::rect(1, 1).unwrap();
        let p = inclusion_probability_mask(&cfg, &mask, Position::new(500, 500)).unwrap();
        assert_eq!(p.favorable(), 100 * 100);
        assert_eq!(p.value(), (100.0 * 100.0) / (901.0 * 901.0));
    }

    #[test]
    fn solid_mask_matches_rectangle() {
        let cfg = square(1000, 0, 100);
        let at = Position::new(495, 495);
        let rect = inclusion_probability_rect(&cfg, Rect::square(10), at).unwrap();
        let mask = inclusion_probability_mask(&cfg, &Mask::rect(10, 10).unwrap(), at).unwrap();
        assert_eq!(rect, mask);
    }

    #[test]
    fn disk_cluster_sits_between_disk_and_bounding_box() {
        let cfg = square(1000, 0, 100);
        let cluster = Mask::disk_cluster(4, 2).unwrap();
        assert_eq!((cluster.width(), cluster.height()), (20, 9));
        let (p_cluster, at) =
            worst_case_inclusion(&cfg, &PatchShape::Mask(cluster.clone())).unwrap();
        let (p_disk, _) =
            worst_case_inclusion(&cfg, &PatchShape::Mask(Mask::disk(4).unwrap())).unwrap();
        let (p_box, _) = worst_case_inclusion(&cfg, &PatchShape::Rect(Rect::new(20, 9))).unwrap();
        assert!(p_disk.value() < p_cluster.value());
        assert!(p_cluster.value() < p_box.value());
        let e = enumerate_inclusion(&cfg, &PatchShape::Mask(cluster), at).unwrap();
        assert_eq!(e, p_cluster);
    }

    #[test]
    fn whole_image_patch() {
        let cfg = square(50, 4, 20);
        let (p, at) = worst_case_inclusion(&cfg, &PatchShape::Rect(Rect::square(50))).unwrap();
        assert_eq!(at, Position::new(0, 0));
        assert!(p.is_saturated());
    }

    #[test]
    fn mask_worst_case_agrees_with_centred_rectangle() {
        for (image, pad, crop, w, h) in [(40, 0, 9, 5, 3), (31, 2, 30, 7, 7), (25, 1, 4, 25, 1)] {
            let cfg = square(image, pad, crop);
            let (rect, _) = worst_case_inclusion(&cfg, &PatchShape::Rect(Rect::new(w, h))).unwrap();
            let (mask, _) =
                worst_case_inclusion(&cfg, &PatchShape::Mask(Mask::rect(w, h).unwrap())).unwrap();
            assert_eq!(rect, mask);
        }
    }

    #[test]
    fn mask_tie_break_is_lexicographic_in_y_then_x() {
        // crop equals image: every placement saturates, so (0, 0) wins
        let cfg = square(12, 0, 12);
        let (_, at) =
            worst_case_inclusion(&cfg, &PatchShape::Mask(Mask::disk(2).unwrap())).unwrap();
        assert_eq!(at, Position::new(0, 0));
    }

    #[test]
    fn placement_errors() {
        let cfg = square(100, 0, 10);
        assert!(matches!(
            inclusion_probability_rect(&cfg, Rect::square(10), Position::new(91, 0)),
            Err(Error::PlacementOutOfBounds(_))
        ));
        assert!(matches!(
            worst_case_inclusion(&cfg, &PatchShape::Rect(Rect::new(101, 1))),
            Err(Error::PatchTooLarge(_))
        ));
        assert!(matches!(
            Mask::from_rows(&[vec![false; 3]]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn mask_is_trimmed_to_set_pixels() {
        let rows = vec![
            vec![false, false, false],
            vec![false, true, true],
            vec![false; 3],
        ];
        let mask = Mask::from_rows(&rows).unwrap();
        assert_eq!((mask.width(), mask.height(), mask.count()), (2, 1, 2));
    }

    #[test]
    fn effective_rate_examples() {
        let g = effective_rate(100.0 / 3000.0, 109.0 * 109.0 / (901.0 * 901.0)).unwrap();
        assert!((g - 4.878_453_381_2e-4).abs() < 1e-14);
        assert_eq!(effective_rate(0.25, 1.0).unwrap(), 0.25);
        assert_eq!(effective_rate(0.0, 0.7).unwrap(), 0.0);
        assert!(effective_rate(1.5, 0.5).is_err());
        assert!(effective_rate(0.5, -0.1).is_err());
    }

    fn small_config() -> impl Strategy<Value = (CropConfig, Rect, Position)> {
        (1u32..=60, 1u32..=60, 0u32..=8, 0u32..=8)
            .prop_flat_map(|(iw, ih, px, py)| {
                (
                    Just((iw, ih, px, py)),
                    1..=iw + 2 * px,
                    1..=ih + 2 * py,
                    1..=iw,
                    1..=ih,
                )
            })
            .prop_flat_map(|((iw, ih, px, py), cw, ch, rw, rh)| {
                let cfg = CropConfig::new((iw, ih), (px, py), (cw, ch)).unwrap();
                (Just(cfg), Just(Rect::new(rw, rh)), 0..=iw - rw, 0..=ih - rh)
            })
            .prop_map(|(cfg, rect, x, y)| (cfg, rect, Position::new(x, y)))
    }

    proptest! {
        #[test]
        fn closed_form_equals_enumeration((cfg, rect, at) in small_config()) {
            let closed = inclusion_probability_rect(&cfg, rect, at).unwrap();
            let brute = enumerate_inclusion(&cfg, &PatchShape::Rect(rect), at).unwrap();
            prop_assert_eq!(closed, brute);
        }

        #[test]
        fn mask_path_equals_rectangle_path((cfg, rect, at) in small_config()) {
            let closed = inclusion_probability_rect(&cfg, rect, at).unwrap();
            let mask = Mask::rect(rect.width, rect.height).unwrap();
            prop_assert_eq!(closed, inclusion_probability_mask(&cfg, &mask, at).unwrap());
        }

        #[test]
        fn monotone_in_crop_and_patch((cfg, rect, _) in small_config()) {
            let base = worst_case_inclusion(&cfg, &PatchShape::Rect(rect)).unwrap().0.value();
            if cfg.crop_width as u64 + 1 <= cfg.padded_width() {
                let bigger = CropConfig { crop_width: cfg.crop_width + 1, ..cfg };
                let p = worst_case_inclusion(&bigger, &PatchShape::Rect(rect)).unwrap().0.value();
                prop_assert!(p >= base);
            }
            if rect.height < cfg.image_height {
                let taller = Rect::new(rect.width, rect.height + 1);
                let p = worst_case_inclusion(&cfg, &PatchShape::Rect(taller)).unwrap().0.value();
                prop_assert!(p >= base);
            }
            let padded = CropConfig { pad_x: cfg.pad_x + 1, ..cfg };
            let p = worst_case_inclusion(&padded, &PatchShape::Rect(rect)).unwrap().0.value();
            prop_assert!(p <= base);
            let wider_image = CropConfig { image_height: cfg.image_height + 1, ..cfg };
            let p = worst_case_inclusion(&wider_image, &PatchShape::Rect(rect)).unwrap().0.value();
            prop_assert!(p <= base);
        }

        #[test]
        fn mask_subset_monotone(
            bits in proptest::collection::vec(any::<bool>(), 36),
            extra in proptest::collection::vec(any::<bool>(), 36),
            crop in 1u32..=20,
            x in 0u32..=14,
            y in 0u32..=14,
        ) {
            prop_assume!(bits.iter().any(|&b| b));
            let cfg = CropConfig::new((20, 20), (1, 1), (crop, crop)).unwrap();
            // keep a fixed 6x6 frame by setting a corner pixel in both
            let a = Mask::from_fn(6, 6, |i, j| (i, j) == (0, 0) || (i, j) == (5, 5) || bits[(j * 6 + i) as usize]).unwrap();
            let b = Mask::from_fn(6, 6, |i, j| a.get(i, j) || extra[(j * 6 + i) as usize]).unwrap();
            let at = Position::new(x, y);
            let pa = inclusion_probability_mask(&cfg, &a, at).unwrap();
            let pb = inclusion_probability_mask(&cfg, &b, at).unwrap();
            prop_assert!(pa.favorable() <= pb.favorable());
            prop_assert_eq!(pa, enumerate_inclusion(&cfg, &PatchShape::Mask(a), at).unwrap());
        }
    }
}
