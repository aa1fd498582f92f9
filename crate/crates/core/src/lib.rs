//! Differential-privacy accounting for DP-SGD when random cropping acts as
//! patch-level subsampling.
//!
//! A private region (patch) of one training image only influences a
//! gradient step if that image is in the minibatch *and* the random crop
//! overlaps the patch. The probability of the second event, `gamma_crop`,
//! multiplies the minibatch rate into an effective sampling rate, and the
//! usual subsampled-Gaussian machinery does the rest.
//!
//! ```
//! use cropdp::geometry::{worst_case_inclusion, CropConfig, PatchShape, Rect};
//!
//! let crop = CropConfig::new((1000, 1000), (0, 0), (100, 100))?;
//! let (gamma, at) = worst_case_inclusion(&crop, &PatchShape::Rect(Rect::square(10)))?;
//! assert_eq!((gamma.favorable(), gamma.total()), (109 * 109, 901 * 901));
//! assert_eq!((at.x, at.y), (495, 495));
//! # Ok::<(), cropdp::Error>(())
//! ```
//!
//! Modules, bottom up:
//!
//! - [`geometry`]: crop-origin spaces and patch inclusion probabilities.
//! - [`divergence`]: hockey-stick divergences of (subsampled) Gaussian pairs.
//! - [`pld`]: privacy loss distributions and their composition.
//! - [`mechanisms`]: the compared mechanisms, accounting and calibration.
//! - [`oracle`]: brute-force and Monte Carlo cross-checks.

pub mod divergence;
pub mod error;
pub mod geometry;
pub mod mechanisms;
pub mod oracle;
pub mod pld;
mod quadrature;
pub mod special;

pub use error::{Error, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/divergences.md")]
    mod divergences {}
    #[doc = include_str!("../../../book/src/pld.md")]
    mod pld {}
    #[doc = include_str!("../../../book/src/mechanisms.md")]
    mod mechanisms {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
}
