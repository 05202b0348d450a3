//! Angular-spectrum free-space propagation, thin and tilted lenses.
//!
//! The transfer function is the exact scalar one,
//! `H(nu) = exp(i 2 pi z sqrt(1/lambda^2 - |nu|^2))`, with evanescent
//! components zeroed. Every call to [`propagate`] first runs the sampling
//! guard: the transfer phase must change by less than `pi` between adjacent
//! frequency samples, and the beam's predicted second-moment radius must stay
//! inside the central 80% of the window.

use std::f64::consts::PI;
use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{ComplexField, GridSpec};

/// Fraction of the window half-width the beam radius may reach.
pub const WINDOW_FILL_LIMIT: f64 = 0.8;
/// Maximum transfer phase change between adjacent frequency samples.
pub const TRANSFER_STEP_LIMIT: f64 = PI;
/// Largest paraxially valid lens tilt.
pub const MAX_TILT: f64 = PI / 3.0;

const ROWS_PER_TASK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingViolation {
    /// Transfer phase changes by `step` radians between neighbouring
    /// frequency samples.
    TransferPhase { distance: f64, step: f64, limit: f64 },
    /// Predicted second-moment radius exceeds the usable window.
    BeamExtent { distance: f64, radius: f64, limit: f64 },
}

impl SamplingViolation {
    /// How far past the bound, as a ratio (> 1).
    pub fn excess(&self) -> f64 {
        match *self {
            Self::TransferPhase { step, limit, .. } => step / limit,
            Self::BeamExtent { radius, limit, .. } => radius / limit,
        }
    }
}

impl fmt::Display for SamplingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::TransferPhase {
                distance,
                step,
                limit,
            } => write!(
                f,
                "transfer phase step {step:.3} rad exceeds {limit:.3} rad at z = {distance:.4e} m (x{:.2})",
                self.excess()
            ),
            Self::BeamExtent {
                distance,
                radius,
                limit,
            } => write!(
                f,
                "beam radius {radius:.4e} m exceeds usable half-window {limit:.4e} m at z = {distance:.4e} m (x{:.2})",
                self.excess()
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensElement {
    pub focal_length: f64,
}

impl LensElement {
    pub fn new(focal_length: f64) -> Result<Self> {
        if focal_length == 0.0 || !focal_length.is_finite() {
            return Err(Error::InvalidElement(format!(
                "focal length {focal_length} must be finite and non-zero"
            )));
        }
        Ok(Self { focal_length })
    }
}

/// A thin lens rotated about an axis in the transverse plane. The rotation
/// splits the focal length into `f cos(tilt)` along `astig_axis_angle`
/// (measured from +x) and `f / cos(tilt)` perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedLensElement {
    pub focal_length: f64,
    pub tilt_angle: f64,
    pub astig_axis_angle: f64,
}

impl TiltedLensElement {
    pub fn new(focal_length: f64, tilt_angle: f64, astig_axis_angle: f64) -> Result<Self> {
        LensElement::new(focal_length)?;
        if !(0.0..MAX_TILT).contains(&tilt_angle) {
            return Err(Error::InvalidElement(format!(
                "tilt angle {tilt_angle} rad outside [0, pi/3)"
            )));
        }
        if !astig_axis_angle.is_finite() {
            return Err(Error::InvalidElement("astigmatism axis must be finite".into()));
        }
        Ok(Self {
            focal_length,
            tilt_angle,
            astig_axis_angle,
        })
    }

    /// Focal lengths along and across the astigmatism axis.
    pub fn principal_focal_lengths(&self) -> (f64, f64) {
        let c = self.tilt_angle.cos();
        (self.focal_length * c, self.focal_length / c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMethod {
    AngularSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPlan {
    pub distance: f64,
    pub method: PropagationMethod,
}

impl PropagationPlan {
    /// Validates the grid-only part of the sampling guard.
    pub fn new(grid: &GridSpec, distance: f64) -> Result<Self> {
        check_sampling(grid, distance)?;
        Ok(Self {
            distance,
            method: PropagationMethod::AngularSpectrum,
        })
    }
}

pub(crate) fn frequency(k: usize, n: usize, d: f64) -> f64 {
    let k = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    k / (n as f64 * d)
}

fn transpose(src: &Array2<Complex64>) -> Array2<Complex64> {
    const B: usize = 32;
    let (rows, cols) = src.dim();
    let mut dst = Array2::zeros((cols, rows));
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    dst[(j, i)] = src[(i, j)];
                }
            }
        }
    }
    dst
}

fn fft_rows(data: &mut Array2<Complex64>, inverse: bool) {
    let n = data.ncols();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let slice = data
        .as_slice_mut()
        .expect("field arrays are in standard layout");
    slice
        .par_chunks_mut(n * ROWS_PER_TASK)
        .for_each(|chunk| fft.process(chunk));
}

/// Unnormalized forward 2-D DFT in natural (unshifted) frequency order.
pub fn fft2(data: &Array2<Complex64>) -> Array2<Complex64> {
    let mut a = data.as_standard_layout().into_owned();
    fft_rows(&mut a, false);
    let mut t = transpose(&a);
    fft_rows(&mut t, false);
    transpose(&t)
}

/// Inverse of [`fft2`], including the `1/(nx ny)` factor.
pub fn ifft2(data: &Array2<Complex64>) -> Array2<Complex64> {
    let mut a = data.as_standard_layout().into_owned();
    fft_rows(&mut a, true);
    let mut t = transpose(&a);
    fft_rows(&mut t, true);
    let mut out = transpose(&t);
    let s = 1.0 / (out.len() as f64);
    out.mapv_inplace(|v| v * s);
    out
}

/// Grid-only sampling guard: transfer phase step at the band corner.
pub fn check_sampling(grid: &GridSpec, distance: f64) -> std::result::Result<(), SamplingViolation> {
    if distance == 0.0 {
        return Ok(());
    }
    let inv_l2 = 1.0 / (grid.wavelength * grid.wavelength);
    let nux = 0.5 / grid.dx;
    let nuy = 0.5 / grid.dy;
    // Clamp to the propagating band; beyond it the transfer is zeroed.
    let nu2 = (nux * nux + nuy * nuy).min(inv_l2 * (1.0 - 1e-9));
    let scale = (nu2 / (nux * nux + nuy * nuy)).sqrt();
    let root = (inv_l2 - nu2).sqrt();
    let z = distance.abs();
    let step_x = 2.0 * PI * z * nux * scale / root / grid.window_x();
    let step_y = 2.0 * PI * z * nuy * scale / root / grid.window_y();
    let step = step_x.max(step_y);
    if step >= TRANSFER_STEP_LIMIT {
        return Err(SamplingViolation::TransferPhase {
            distance,
            step,
            limit: TRANSFER_STEP_LIMIT,
        });
    }
    Ok(())
}

/// Second moments `<x^2>`, `<y^2>` (about the optical axis) predicted at
/// distance `z` from the paraxial moment-transport law
/// `<x^2>(z) = <x^2> + 2 lambda z <x nu_x> + lambda^2 z^2 <nu_x^2>`.
fn predicted_moments(field: &ComplexField, spectrum: &Array2<Complex64>, z: f64) -> (f64, f64) {
    let g = &field.grid;
    let a = &field.amplitude;
    let (ny, nx) = a.dim();
    let mut p = 0.0;
    let mut mx2 = 0.0;
    let mut my2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..ny {
        let y = g.y(i);
        for j in 0..nx {
            let u = a[(i, j)];
            let w = u.norm_sqr();
            if w == 0.0 {
                continue;
            }
            let x = g.x(j);
            p += w;
            mx2 += w * x * x;
            my2 += w * y * y;
            if j > 0 && j + 1 < nx {
                let gx = (a[(i, j + 1)] * a[(i, j - 1)].conj()).arg() / (2.0 * g.dx);
                cx += w * x * gx;
            }
            if i > 0 && i + 1 < ny {
                let gy = (a[(i + 1, j)] * a[(i - 1, j)].conj()).arg() / (2.0 * g.dy);
                cy += w * y * gy;
            }
        }
    }
    if p == 0.0 {
        return (0.0, 0.0);
    }
    let mut sp = 0.0;
    let mut nu2x = 0.0;
    let mut nu2y = 0.0;
    for ((i, j), s) in spectrum.indexed_iter() {
        let w = s.norm_sqr();
        let fx = frequency(j, nx, g.dx);
        let fy = frequency(i, ny, g.dy);
        sp += w;
        nu2x += w * fx * fx;
        nu2y += w * fy * fy;
    }
    let lam = g.wavelength;
    let linx = lam / PI * cx / p;
    let liny = lam / PI * cy / p;
    let x2 = mx2 / p + z * linx + lam * lam * z * z * nu2x / sp;
    let y2 = my2 / p + z * liny + lam * lam * z * z * nu2y / sp;
    (x2.max(0.0), y2.max(0.0))
}

fn check_extent(
    field: &ComplexField,
    spectrum: &Array2<Complex64>,
    distance: f64,
) -> std::result::Result<(), SamplingViolation> {
    let g = &field.grid;
    let limit = 0.5 * WINDOW_FILL_LIMIT * g.window_x().min(g.window_y());
    let (x2, y2) = predicted_moments(field, spectrum, distance);
    let radius = 2.0 * x2.max(y2).sqrt();
    if radius > limit {
        return Err(SamplingViolation::BeamExtent {
            distance,
            radius,
            limit,
        });
    }
    Ok(())
}

/// Full sampling guard for a concrete field.
pub fn check_field_sampling(
    field: &ComplexField,
    distance: f64,
) -> std::result::Result<(), SamplingViolation> {
    check_sampling(&field.grid, distance)?;
    let spectrum = fft2(&field.amplitude);
    check_extent(field, &spectrum, distance)
}

/// Predicted D4-sigma radius (larger of the two axes) after `distance`.
pub fn predicted_radius(field: &ComplexField, distance: f64) -> f64 {
    let spectrum = fft2(&field.amplitude);
    let (x2, y2) = predicted_moments(field, &spectrum, distance);
    2.0 * x2.max(y2).sqrt()
}

/// Exact scalar angular-spectrum propagation over `distance` meters.
pub fn propagate(field: &ComplexField, distance: f64) -> Result<ComplexField> {
    if distance == 0.0 {
        return Ok(field.clone());
    }
    let g = field.grid;
    check_sampling(&g, distance)?;
    let mut spectrum = fft2(&field.amplitude);
    check_extent(field, &spectrum, distance)?;

    let inv_l2 = 1.0 / (g.wavelength * g.wavelength);
    let k = g.wavenumber();
    // Piston reduced modulo one wave to keep the phase argument small.
    let piston = 2.0 * PI * (distance / g.wavelength).fract();
    let (ny, nx) = spectrum.dim();
    let fx: Vec<f64> = (0..nx).map(|j| frequency(j, nx, g.dx)).collect();
    spectrum
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let fy = frequency(i, ny, g.dy);
            for (j, s) in row.iter_mut().enumerate() {
                let nu2 = fx[j] * fx[j] + fy * fy;
                if nu2 >= inv_l2 {
                    *s = Complex64::new(0.0, 0.0);
                    continue;
                }
                let q: f64 = nu2 / inv_l2;
                // sqrt(1 - q) - 1 without cancellation
                let dev = -q / ((1.0 - q).sqrt() + 1.0);
                *s *= Complex64::from_polar(1.0, piston + k * distance * dev);
            }
        });
    ComplexField::new(g, ifft2(&spectrum))
}

fn apply_phase<F>(field: &ComplexField, phase: F) -> ComplexField
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let g = field.grid;
    let mut amplitude = field.amplitude.clone();
    amplitude
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let y = g.y(i);
            for (j, a) in row.iter_mut().enumerate() {
                *a *= Complex64::from_polar(1.0, phase(g.x(j), y));
            }
        });
    ComplexField {
        grid: g,
        amplitude,
    }
}

/// Thin-lens phase `exp(-i k (x^2 + y^2) / 2f)`.
pub fn apply_lens(field: &ComplexField, lens: &LensElement) -> ComplexField {
    let k = field.grid.wavenumber();
    let c = k / (2.0 * lens.focal_length);
    apply_phase(field, |x, y| -c * (x * x + y * y))
}

/// Astigmatic phase of a tilted thin lens.
pub fn apply_tilted_lens(field: &ComplexField, lens: &TiltedLensElement) -> ComplexField {
    let k = field.grid.wavenumber();
    let (fa, fb) = lens.principal_focal_lengths();
    let (s, c) = lens.astig_axis_angle.sin_cos();
    let ca = k / (2.0 * fa);
    let cb = k / (2.0 * fb);
    apply_phase(field, |x, y| {
        let u = x * c + y * s;
        let v = -x * s + y * c;
        -(ca * u * u + cb * v * v)
    })
}

/// Field at the back focal plane of a tilted lens: lens phase, then one
/// angular-spectrum hop of length `f`.
pub fn tilted_lens_transform(field: &ComplexField, lens: &TiltedLensElement) -> Result<ComplexField> {
    propagate(&apply_tilted_lens(field, lens), lens.focal_length)
}

/// Ideal 4f relay (the delay line): identity imaging, optionally mirrored.
pub fn relay(field: &ComplexField, parity_flip: bool) -> ComplexField {
    if parity_flip {
        field.mirrored_x()
    } else {
        field.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, synthesize, BeamSpec};

    #[test]
    fn fft_roundtrip() {
        let g = make_grid(64, 64, 1e-3, 810e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::phase_vortex(0.05e-3, 3)).unwrap();
        let back = ifft2(&fft2(&f.amplitude));
        let err = back
            .iter()
            .zip(f.amplitude.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = f.peak_intensity().sqrt();
        assert!(err < 1e-12 * scale, "{err}");
    }

    #[test]
    fn frequencies_in_natural_order() {
        assert_eq!(frequency(0, 8, 1.0), 0.0);
        assert_eq!(frequency(3, 8, 1.0), 3.0 / 8.0);
        assert_eq!(frequency(4, 8, 1.0), -4.0 / 8.0);
        assert_eq!(frequency(7, 8, 1.0), -1.0 / 8.0);
    }

    #[test]
    fn sampling_guard_examples() {
        let g = make_grid(1024, 1024, 20e-3, 405e-9).unwrap();
        assert!(check_sampling(&g, 0.1).is_ok());
        assert!(check_sampling(&g, 0.0).is_ok());
        let v = check_sampling(&g, 1e6).unwrap_err();
        assert!(matches!(v, SamplingViolation::TransferPhase { .. }));
        assert!(v.excess() > 1.0);
    }

    #[test]
    fn tilt_range_enforced() {
        assert!(TiltedLensElement::new(1.0, -0.1, 0.0).is_err());
        assert!(TiltedLensElement::new(1.0, MAX_TILT, 0.0).is_err());
        assert!(TiltedLensElement::new(0.0, 0.1, 0.0).is_err());
        assert!(LensElement::new(0.0).is_err());
    }

    #[test]
    fn beam_extent_guard_trips_for_wide_divergence() {
        let g = make_grid(128, 128, 2e-3, 810e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::gaussian(0.05e-3)).unwrap();
        // z_R ~ 9.7 mm; after 1 m the beam is ~100x larger than the window.
        let err = propagate(&f, 1.0).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }

    #[test]
    fn relay_parity_flip_negates_charge() {
        let g = make_grid(256, 256, 8e-3, 810e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::laguerre_gauss(0.4e-3, 3, 0)).unwrap();
        let r = 0.4e-3 * 1.5f64.sqrt();
        use crate::field::phase_winding_charge;
        assert_eq!(phase_winding_charge(&relay(&f, false), r).unwrap(), 3);
        assert_eq!(phase_winding_charge(&relay(&f, true), r).unwrap(), -3);
    }
}
