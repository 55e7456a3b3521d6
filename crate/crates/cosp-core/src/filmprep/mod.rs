//! Film-scan geometry recovery.
//!
//! A film strip arrives as four overlapping scanner parts. The stages here
//! run in a fixed order: [`stitch`] merges the parts into one raster,
//! [`align_exposed_area`] removes the scanner skew, [`trace_stripes`]
//! follows the two edge reference lines, [`correct_bending`] resamples each
//! column so the traced lines come out straight, and [`finalize`] clips the
//! unusable strip ends and flips aft scans into fore orientation. Bending
//! is corrected before clipping so the trace support is as long as
//! possible.
//!
//! Rasters are plain [`GrayImage`]s in scanner pixels; nothing here is
//! georeferenced yet.

use serde::{Deserialize, Serialize};

mod align;
mod bend;
mod stitch;
mod stripes;

pub use align::{align_exposed_area, AlignedFilm};
pub use bend::{clip_columns, correct_bending, finalize, BendingModel, MAX_TRACE_GAP_COLS};
pub use stitch::{stitch, SeamMatch, StitchMatches, StitchedFilm};
pub use stripes::{trace_stripes, StripeSide, StripeTrace};

use crate::imgproc::ImageError;

/// A rigid motion of the scan plane: rotation about the pixel origin
/// followed by a translation. Maps part coordinates into film coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Rigid2D {
    pub rotation_rad: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Rigid2D {
    pub fn identity() -> Self {
        Rigid2D { rotation_rad: 0.0, tx: 0.0, ty: 0.0 }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation_rad.sin_cos();
        (c * x - s * y + self.tx, s * x + c * y + self.ty)
    }

    pub fn inverse(&self) -> Rigid2D {
        let (s, c) = self.rotation_rad.sin_cos();
        Rigid2D {
            rotation_rad: -self.rotation_rad,
            tx: -(c * self.tx + s * self.ty),
            ty: -(-s * self.tx + c * self.ty),
        }
    }

    /// `self` after `other`: the composite maps `x` to `self(other(x))`.
    pub fn compose(&self, other: &Rigid2D) -> Rigid2D {
        let (tx, ty) = self.apply(other.tx, other.ty);
        Rigid2D { rotation_rad: self.rotation_rad + other.rotation_rad, tx, ty }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FilmprepError {
    #[error("seam {seam}: {found} usable matches, need at least 3")]
    InsufficientMatches { seam: String, found: usize },
    #[error("seam {seam}: matches are collinear, the placement is ambiguous")]
    DegenerateGeometry { seam: String },
    #[error("no threshold separates exposed film from the margins")]
    ThresholdNotFound,
    #[error("no {side} reference stripe found")]
    StripesNotFound { side: StripeSide },
    #[error("{side} stripe trace has a {len}-column gap at column {start_col}")]
    TraceGap { side: StripeSide, start_col: usize, len: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
}
