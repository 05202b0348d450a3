use thiserror::Error;

use crate::propagation::SamplingViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid beam: {0}")]
    InvalidBeam(String),

    #[error("window too small: width {window:.4e} m must exceed 6x beam diameter {diameter:.4e} m")]
    WindowTooSmall { window: f64, diameter: f64 },

    #[error("charge {0} outside supported range |l| <= 64")]
    ChargeOutOfRange(i32),

    #[error("phase undefined on winding loop: relative intensity {relative:.3e} at radius {radius:.4e} m")]
    UndefinedPhase { radius: f64, relative: f64 },

    #[error("winding loop of radius {radius:.4e} m does not fit inside the grid")]
    LoopOutsideGrid { radius: f64 },

    #[error("ambiguous (half-integer) phase winding {0:.3}")]
    AmbiguousWinding(f64),

    #[error("sampling guard: {0}")]
    Sampling(SamplingViolation),

    #[error("invalid optical element: {0}")]
    InvalidElement(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("no lobes found: {0}")]
    NoLobes(String),

    #[error("ambiguous lobe orientation (anisotropy {anisotropy:.3}) with {lobes} lobes")]
    AmbiguousOrientation { anisotropy: f64, lobes: usize },

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("fringe undersampling: period {period_px:.2} px is below 4 px")]
    FringeUndersampling { period_px: f64 },

    #[error("invalid interferometer configuration: {0}")]
    InvalidMzi(String),

    #[error("cut at offset {offset:.4e} m runs through the dark core")]
    CutThroughCore { offset: f64 },

    #[error("no fringes found: {0}")]
    NoFringes(String),

    #[error("invalid HOM model: {0}")]
    InvalidHom(String),

    #[error("no dip: {0}")]
    NoDip(String),

    #[error("invalid detector configuration: {0}")]
    InvalidDetector(String),

    #[error("probability image has zero total weight")]
    ZeroTotalPdf,

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("count image holds zero counts")]
    ZeroCounts,
}

impl From<SamplingViolation> for Error {
    fn from(v: SamplingViolation) -> Self {
        Error::Sampling(v)
    }
}
