//! Sampled scalar fields: grids, beam synthesis and elementary measurements.
//!
//! The optical axis sits at pixel `(ny/2, nx/2)` and the azimuth is
//! `atan2(y, x)`, so a charge-`l` vortex carries `exp(i l phi)` around that
//! pixel.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{bilinear, RealImage};

/// Largest supported |l|.
pub const MAX_CHARGE: i32 = 64;
/// Samples on the phase-winding loop.
pub const WINDING_LOOP_SAMPLES: usize = 4096;
/// Loop intensity floor, relative to the field's peak intensity.
pub const WINDING_INTENSITY_FLOOR: f64 = 1e-6;
/// Window must exceed this multiple of the beam's second-moment diameter.
pub const WINDOW_TO_BEAM_RATIO: f64 = 6.0;

const MIN_SAMPLES: usize = 64;
const MAX_SAMPLES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub wavelength: f64,
}

impl GridSpec {
    /// Square window of physical width `window_width` sampled by `nx` x `ny`.
    pub fn new(nx: usize, ny: usize, window_width: f64, wavelength: f64) -> Result<Self> {
        let mut problems = Vec::new();
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < MIN_SAMPLES {
                problems.push(format!("{name} = {n} is below {MIN_SAMPLES}"));
            } else if n > MAX_SAMPLES {
                problems.push(format!("{name} = {n} exceeds 2^20"));
            }
        }
        if !(window_width > 0.0 && window_width.is_finite()) {
            problems.push(format!("window width {window_width} must be positive"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            problems.push(format!("wavelength {wavelength} must be positive"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidGrid(problems.join("; ")));
        }
        Ok(Self {
            nx,
            ny,
            dx: window_width / nx as f64,
            dy: window_width / ny as f64,
            wavelength,
        })
    }

    pub fn window_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn window_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - (self.nx / 2) as f64) * self.dx
    }

    pub fn y(&self, i: usize) -> f64 {
        (i as f64 - (self.ny / 2) as f64) * self.dy
    }

    /// Same sampling at another wavelength.
    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        let mut g = Self::new(self.nx, self.ny, self.window_x(), wavelength)?;
        g.dy = self.dy;
        Ok(g)
    }
}

/// `make_grid`: square window of width `window_width`.
pub fn make_grid(nx: usize, ny: usize, window_width: f64, wavelength: f64) -> Result<GridSpec> {
    GridSpec::new(nx, ny, window_width, wavelength)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: GridSpec,
    /// Shape `(ny, nx)`.
    pub amplitude: Array2<Complex64>,
}

impl ComplexField {
    pub fn new(grid: GridSpec, amplitude: Array2<Complex64>) -> Result<Self> {
        if amplitude.dim() != (grid.ny, grid.nx) {
            return Err(Error::DimensionMismatch {
                left: (grid.nx, grid.ny),
                right: (amplitude.ncols(), amplitude.nrows()),
            });
        }
        Ok(Self { grid, amplitude })
    }

    /// Unit-amplitude plane wave.
    pub fn plane_wave(grid: GridSpec) -> Self {
        Self {
            grid,
            amplitude: Array2::from_elem((grid.ny, grid.nx), Complex64::new(1.0, 0.0)),
        }
    }

    pub fn total_power(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx * self.grid.dy
    }

    pub fn conjugate(&self) -> Self {
        Self {
            grid: self.grid,
            amplitude: self.amplitude.mapv(|a| a.conj()),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            amplitude: self.amplitude.mapv(|a| a * c),
        }
    }

    pub fn normalized(mut self) -> Self {
        let p = self.total_power();
        if p > 0.0 {
            let s = p.sqrt().recip();
            self.amplitude.mapv_inplace(|a| a * s);
        }
        self
    }

    /// Reflection `x -> -x` about the optical axis; flips the sign of the charge.
    pub fn mirrored_x(&self) -> Self {
        let nx = self.grid.nx;
        let amplitude = Array2::from_shape_fn(self.amplitude.dim(), |(i, j)| {
            self.amplitude[(i, (nx - j) % nx)]
        });
        Self {
            grid: self.grid,
            amplitude,
        }
    }

    pub fn peak_intensity(&self) -> f64 {
        self.amplitude
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// Relative L2 distance `|a - b| / |b|`.
    pub fn relative_l2(&self, reference: &ComplexField) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in self.amplitude.iter().zip(reference.amplitude.iter()) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        (num / den).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamKind {
    Gaussian,
    LaguerreGauss,
    /// Gaussian envelope times `exp(i l phi)`, the output of a phase-only SLM.
    PhaseVortex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub kind: BeamKind,
    pub w0: f64,
    pub l: i32,
    pub p: u32,
}

impl BeamSpec {
    pub fn gaussian(w0: f64) -> Self {
        Self {
            kind: BeamKind::Gaussian,
            w0,
            l: 0,
            p: 0,
        }
    }

    pub fn laguerre_gauss(w0: f64, l: i32, p: u32) -> Self {
        Self {
            kind: BeamKind::LaguerreGauss,
            w0,
            l,
            p,
        }
    }

    pub fn phase_vortex(w0: f64, l: i32) -> Self {
        Self {
            kind: BeamKind::PhaseVortex,
            w0,
            l,
            p: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(Error::InvalidBeam(format!("waist {} must be positive", self.w0)));
        }
        if self.l.abs() > MAX_CHARGE {
            return Err(Error::ChargeOutOfRange(self.l));
        }
        match self.kind {
            BeamKind::Gaussian if self.l != 0 => Err(Error::InvalidBeam(
                "gaussian beam carries no charge".into(),
            )),
            BeamKind::Gaussian | BeamKind::PhaseVortex if self.p != 0 => Err(
                Error::InvalidBeam("radial index requires a laguerre_gauss beam".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Beam diameter used by the window rule: twice the radius of the
    /// outermost intensity maximum, but at least the Gaussian `2 w0`.
    pub fn diameter(&self) -> f64 {
        (2.0 * self.ring_radius()).max(2.0 * self.w0)
    }

    /// Radius of the outermost intensity maximum at the waist; zero for
    /// beams that peak on axis. Equals `w0 sqrt(|l|/2)` for p = 0 LG modes.
    pub fn ring_radius(&self) -> f64 {
        if self.kind != BeamKind::LaguerreGauss || (self.l == 0 && self.p == 0) {
            return 0.0;
        }
        let a = self.l.unsigned_abs() as f64;
        if self.p == 0 {
            return self.w0 * (a / 2.0).sqrt();
        }
        let profile = |s: f64| {
            let lp = generalized_laguerre(self.p, a, s);
            s.powf(a) * lp * lp * (-s).exp()
        };
        let s_end = 4.0 * (2.0 * self.p as f64 + a + 1.0) + 8.0;
        let steps = 20_000;
        let ds = s_end / steps as f64;
        let mut best = 0.0;
        for k in 1..steps {
            let s = k as f64 * ds;
            let v = profile(s);
            if v >= profile(s - ds) && v >= profile(s + ds) && v > 0.0 {
                best = s;
            }
        }
        self.w0 * (best / 2.0).sqrt()
    }
}

/// Generalized Laguerre polynomial `L_p^alpha(x)` by upward recurrence.
pub fn generalized_laguerre(p: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Beam synthesis at its waist, normalized to unit power.
pub fn synthesize(grid: &GridSpec, spec: &BeamSpec) -> Result<ComplexField> {
    spec.validate()?;
    let window = grid.window_x().min(grid.window_y());
    let diameter = spec.diameter();
    if window <= WINDOW_TO_BEAM_RATIO * diameter {
        return Err(Error::WindowTooSmall { window, diameter });
    }
    let w0 = spec.w0;
    let l = spec.l;
    let abs_l = l.unsigned_abs() as i32;
    let amplitude = Array2::from_shape_fn((grid.ny, grid.nx), |(i, j)| {
        let x = grid.x(j);
        let y = grid.y(i);
        let r2 = x * x + y * y;
        let envelope = (-r2 / (w0 * w0)).exp();
        let phase = if l == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, l as f64 * y.atan2(x))
        };
        match spec.kind {
            BeamKind::Gaussian | BeamKind::PhaseVortex => phase * envelope,
            BeamKind::LaguerreGauss => {
                let s = 2.0 * r2 / (w0 * w0);
                let radial = s.sqrt().powi(abs_l) * generalized_laguerre(spec.p, abs_l as f64, s);
                phase * (radial * envelope)
            }
        }
    });
    Ok(ComplexField::new(*grid, amplitude)?.normalized())
}

/// Per-pixel `|amplitude|^2`.
pub fn intensity(field: &ComplexField) -> RealImage {
    RealImage {
        data: field.amplitude.mapv(|a| a.norm_sqr()),
        dx: field.grid.dx,
        dy: field.grid.dy,
    }
}

pub fn total_power(field: &ComplexField) -> f64 {
    field.total_power()
}

/// Signed number of `2 pi` phase windings on a circle of `loop_radius`
/// around the optical axis.
pub fn phase_winding_charge(field: &ComplexField, loop_radius: f64) -> Result<i32> {
    let g = &field.grid;
    let half = 0.5 * g.window_x().min(g.window_y()) - 2.0 * g.dx.max(g.dy);
    if !(loop_radius >= 0.0) || loop_radius > half {
        return Err(Error::LoopOutsideGrid {
            radius: loop_radius,
        });
    }
    let peak = field.peak_intensity();
    if peak <= 0.0 {
        return Err(Error::UndefinedPhase {
            radius: loop_radius,
            relative: 0.0,
        });
    }
    let cx = (g.nx / 2) as f64;
    let cy = (g.ny / 2) as f64;
    let zero = Complex64::new(0.0, 0.0);
    let samples: Vec<Complex64> = (0..WINDING_LOOP_SAMPLES)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / WINDING_LOOP_SAMPLES as f64;
            let col = cx + loop_radius * t.cos() / g.dx;
            let row = cy + loop_radius * t.sin() / g.dy;
            bilinear(&field.amplitude, row, col, zero)
        })
        .collect();
    if let Some(weakest) = samples
        .iter()
        .map(|a| a.norm_sqr() / peak)
        .min_by(f64::total_cmp)
    {
        if weakest < WINDING_INTENSITY_FLOOR {
            return Err(Error::UndefinedPhase {
                radius: loop_radius,
                relative: weakest,
            });
        }
    }
    let total: f64 = (0..WINDING_LOOP_SAMPLES)
        .map(|k| {
            let a = samples[k];
            let b = samples[(k + 1) % WINDING_LOOP_SAMPLES];
            (b * a.conj()).arg()
        })
        .sum();
    let winding = total / (2.0 * PI);
    let nearest = winding.round();
    if (winding - nearest).abs() > 0.25 {
        return Err(Error::AmbiguousWinding(winding));
    }
    Ok(nearest as i32)
}

/// Radius (from the optical axis) of the maximum azimuthally averaged
/// intensity, on one-pixel bins.
pub fn max_intensity_radius(field: &ComplexField) -> f64 {
    let g = &field.grid;
    let step = g.dx.min(g.dy);
    let nbins = (0.5 * g.window_x().min(g.window_y()) / step) as usize;
    let mut sum = vec![0.0; nbins];
    let mut count = vec![0usize; nbins];
    for ((i, j), a) in field.amplitude.indexed_iter() {
        let r = g.x(j).hypot(g.y(i));
        let b = (r / step).round() as usize;
        if b < nbins {
            sum[b] += a.norm_sqr();
            count[b] += 1;
        }
    }
    let (best, _) = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    best as f64 * step
}

/// Winding charge on the loop through the brightest ring (at least four
/// pixels out so a Gaussian core still has a well-defined loop).
pub fn winding_charge_at_ring(field: &ComplexField) -> Result<i32> {
    let r = max_intensity_radius(field).max(4.0 * field.grid.dx.max(field.grid.dy));
    phase_winding_charge(field, r)
}
