//! Simulation core for characterizing single photons carrying orbital
//! angular momentum: field synthesis, free-space propagation, lobe and ring
//! metrology, interferometry and photon-counting image formation.

pub mod error;
pub mod field;
pub mod image;
pub mod imaging;
pub mod interferometry;
pub mod metrology;
pub mod propagation;

pub use error::{Error, Result};
pub use field::{
    intensity, make_grid, phase_winding_charge, synthesize, BeamKind, BeamSpec, ComplexField,
    GridSpec,
};
pub use image::RealImage;
pub use propagation::{
    apply_lens, apply_tilted_lens, check_sampling, propagate, tilted_lens_transform, LensElement,
    SamplingViolation, TiltedLensElement,
};
