//! Mach-Zehnder self-interference with fork-fringe counting, and the
//! parametric Hong-Ou-Mandel dip.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    intensity, make_grid, synthesize, BeamSpec, ComplexField, GridSpec, WINDOW_TO_BEAM_RATIO,
};
use crate::image::{moving_average, RealImage};
use crate::propagation::{fft2, frequency, ifft2};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Shortest resolvable fringe period, in pixels.
pub const MIN_FRINGE_PERIOD_PX: f64 = 4.0;
/// Fringe period used when none is configured, in pixels.
pub const DEFAULT_FRINGE_PERIOD_PX: f64 = 4.5;
/// Cut offset in units of `|l| * period / pi`; see [`default_cut_offset`].
pub const CUT_OFFSET_FACTOR: f64 = 1.1;

/// Cut offset for charges up to `max_charge` with fringe period `period`.
///
/// Along a cut at height `c` the vortex adds a phase slope of at most
/// `2|l|/c` on top of the tilt `2 pi / period`. Keeping `c` a little above
/// `|l| period / pi` keeps the fringe phase monotone on both cuts, while a
/// small `c` keeps the residual winding outside the counting interval
/// (about `4 |l| atan(c / x_edge) / pi` fringes) below one half.
pub fn default_cut_offset(max_charge: u32, period: f64) -> f64 {
    (CUT_OFFSET_FACTOR * max_charge as f64 * period / PI).max(2.0 * period)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArmParity {
    /// Arm B carries the same charge as arm A.
    SameSign,
    /// Arm B is the mirror image of arm A, so its charge is flipped.
    OppositeSign,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziConfig {
    /// Relative tilt between the arms (radians), applied along x.
    pub tilt: f64,
    /// Lateral shear of arm B along x (meters).
    pub displacement: f64,
    pub arm_charge_parity: ArmParity,
    pub phase_offset: f64,
    /// Replace arm B by a Gaussian of this waist (a near-plane-wave reference).
    pub reference_waist: Option<f64>,
}

impl MziConfig {
    pub fn new(tilt: f64, arm_charge_parity: ArmParity) -> Self {
        Self {
            tilt,
            displacement: 0.0,
            arm_charge_parity,
            phase_offset: 0.0,
            reference_waist: None,
        }
    }

    /// Fringe period produced by the tilt at `wavelength`.
    pub fn fringe_period(&self, wavelength: f64) -> f64 {
        wavelength / self.tilt.sin().abs()
    }

    /// Tilt that produces a fringe period of `period`.
    pub fn tilt_for_period(period: f64, wavelength: f64) -> f64 {
        (wavelength / period).asin()
    }

    /// Tilt giving [`DEFAULT_FRINGE_PERIOD_PX`] on `grid`.
    pub fn default_tilt(grid: &GridSpec) -> f64 {
        Self::tilt_for_period(DEFAULT_FRINGE_PERIOD_PX * grid.dx, grid.wavelength)
    }
}

fn shift_x(field: &ComplexField, d: f64) -> ComplexField {
    if d == 0.0 {
        return field.clone();
    }
    let g = field.grid;
    let mut spec = fft2(&field.amplitude);
    let nx = g.nx;
    for mut row in spec.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, -2.0 * PI * frequency(j, nx, g.dx) * d);
        }
    }
    ComplexField {
        grid: g,
        amplitude: ifft2(&spec),
    }
}

/// Broad Gaussian with the peak amplitude of `field`; being a stand-in for a
/// plane wave it may extend past the window.
fn reference_beam(field: &ComplexField, waist: f64) -> Result<ComplexField> {
    if !(waist > 0.0) {
        return Err(Error::InvalidMzi("reference waist must be positive".into()));
    }
    let g = field.grid;
    let a = field.peak_intensity().sqrt();
    let amplitude = ndarray::Array2::from_shape_fn((g.ny, g.nx), |(i, j)| {
        let r2 = g.x(j).powi(2) + g.y(i).powi(2);
        Complex64::new(a * (-r2 / (waist * waist)).exp(), 0.0)
    });
    ComplexField::new(g, amplitude)
}

/// Output port of the interferometer: `(A + B) / sqrt(2)`.
pub fn mzi_superpose(field: &ComplexField, config: &MziConfig) -> Result<ComplexField> {
    let g = field.grid;
    if config.tilt != 0.0 {
        let period_px = config.fringe_period(g.wavelength) / g.dx;
        if period_px < MIN_FRINGE_PERIOD_PX {
            return Err(Error::FringeUndersampling { period_px });
        }
    }
    if config.displacement.abs() >= g.window_x() / 4.0 {
        return Err(Error::InvalidMzi(format!(
            "displacement {:.3e} m exceeds a quarter of the window",
            config.displacement
        )));
    }
    let base = match config.reference_waist {
        Some(w) => reference_beam(field, w)?,
        None => match config.arm_charge_parity {
            ArmParity::SameSign => field.clone(),
            ArmParity::OppositeSign => field.mirrored_x(),
        },
    };
    let b = shift_x(&base, config.displacement);
    let kx = g.wavenumber() * config.tilt.sin();
    let mut out = field.amplitude.clone();
    out.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .zip(b.amplitude.axis_iter(ndarray::Axis(0)).into_par_iter())
        .for_each(|(mut row, brow)| {
            for (j, (a, bv)) in row.iter_mut().zip(brow.iter()).enumerate() {
                let ramp = Complex64::from_polar(1.0, kx * g.x(j) + config.phase_offset);
                *a = (*a + bv * ramp) * std::f64::consts::FRAC_1_SQRT_2;
            }
        });
    ComplexField::new(g, out)
}

/// Counting policy along the horizontal cuts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeParams {
    pub threshold: f64,
    pub min_separation: usize,
    pub smoothing: usize,
    /// Cut sample spacing in pixels.
    pub sample_spacing: f64,
}

impl Default for FringeParams {
    fn default() -> Self {
        Self {
            threshold: 0.10,
            min_separation: 3,
            smoothing: 5,
            sample_spacing: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramAnalysis {
    pub fringes_upper: usize,
    pub fringes_lower: usize,
    pub fork_order: usize,
    /// Offsets of the two cuts from the pattern centroid (meters, y up).
    pub cut_offsets: (f64, f64),
    /// Counting interval along x (meters).
    pub window: (f64, f64),
}

fn local_maxima(values: &[f64], lo: usize, hi: usize, cut: f64, min_sep: usize) -> usize {
    let mut count = 0;
    let mut last: Option<usize> = None;
    for k in lo.max(1)..hi.min(values.len() - 1) {
        let v = values[k];
        if v >= cut && v > values[k - 1] && v >= values[k + 1] {
            if last.is_some_and(|q| k - q < min_sep) {
                continue;
            }
            count += 1;
            last = Some(k);
        }
    }
    count
}

/// Counts fringe maxima along horizontal cuts at `+offset` and `-offset`
/// from the intensity centroid.
///
/// Both cuts are counted over one interval whose ends sit on minima of the
/// summed cuts. Far from the singularity the two cuts are in phase, so each
/// count then spans whole fringes and the difference reflects only the
/// enclosed phase winding.
pub fn count_fringe_difference(
    image: &RealImage,
    offset: f64,
    params: &FringeParams,
) -> Result<InterferogramAnalysis> {
    image.check_values()?;
    let peak = image.max();
    let (ci, cj) = image
        .centroid_index()
        .filter(|_| peak > 0.0)
        .ok_or_else(|| Error::NoFringes("image is blank".into()))?;
    if !(offset > 0.0) {
        return Err(Error::InvalidMzi("cut offset must be positive".into()));
    }
    let cy = image.y_of(ci);
    let step = params.sample_spacing * image.dx;
    let n = ((image.nx() - 1) as f64 / params.sample_spacing).floor() as usize + 1;
    let cut = |y: f64| -> Vec<f64> {
        let row = image.row_of(y);
        (0..n)
            .map(|k| image.sample(row, k as f64 * params.sample_spacing))
            .collect()
    };
    let upper_raw = cut(cy + offset);
    let lower_raw = cut(cy - offset);

    // horizontal extent of the beam from its second moment
    let mut s = 0.0;
    let mut sxx = 0.0;
    let cx = image.x_of(cj);
    for ((_, j), &v) in image.data.indexed_iter() {
        let x = image.x_of(j as f64) - cx;
        s += v;
        sxx += v * x * x;
    }
    let sigma = (sxx / s).sqrt();
    let x0 = image.x_of(0.0);
    let index_of = |x: f64| (((x - x0) / step).round().max(0.0) as usize).min(n - 1);
    let (ka, kb) = (index_of(cx - 2.0 * sigma), index_of(cx + 2.0 * sigma));
    for (raw, sign) in [(&upper_raw, 1.0), (&lower_raw, -1.0)] {
        let dark = raw[ka..=kb].iter().filter(|&&v| v < 0.05 * peak).count();
        if 2 * dark > kb - ka + 1 {
            return Err(Error::CutThroughCore {
                offset: sign * offset,
            });
        }
    }

    let upper = moving_average(&upper_raw, params.smoothing);
    let lower = moving_average(&lower_raw, params.smoothing);
    let sum: Vec<f64> = upper.iter().zip(&lower).map(|(a, b)| a + b).collect();
    let smax = sum.iter().copied().fold(0.0, f64::max);
    // Counting interval: the outermost minima of the summed cuts inside the
    // bright region, where both cuts are dark together.
    let above = |k: &usize| sum[*k] >= params.threshold * smax;
    let lo = (0..n).find(above).unwrap_or(0);
    let hi = (0..n).rev().find(above).unwrap_or(n - 1);
    let minima: Vec<usize> = (lo.max(1)..hi.min(n - 1))
        .filter(|&k| sum[k] <= sum[k - 1] && sum[k] < sum[k + 1])
        .collect();
    let (start, end) = match (minima.first(), minima.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(Error::NoFringes("no fringe minima on the cuts".into())),
    };
    let min_sep = params.min_separation.max(1);
    // The interval already lies inside the thresholded region, so every
    // maximum of either cut within it counts.
    let fringes_upper = local_maxima(&upper, start, end + 1, 0.0, min_sep);
    let fringes_lower = local_maxima(&lower, start, end + 1, 0.0, min_sep);
    if fringes_upper + fringes_lower == 0 {
        return Err(Error::NoFringes("no maxima inside the counting window".into()));
    }
    Ok(InterferogramAnalysis {
        fringes_upper,
        fringes_lower,
        fork_order: fringes_upper.abs_diff(fringes_lower),
        cut_offsets: (offset, -offset),
        window: (x0 + start as f64 * step, x0 + end as f64 * step),
    })
}

/// Reference self-interference arrangement: a phase vortex imaged at its
/// source plane, where its intensity has no dark core to dodge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziSetup {
    pub w0: f64,
    pub wavelength: f64,
    pub grid_size: usize,
    /// Largest |l| the cut offset must resolve.
    pub max_charge: u32,
    pub fringe_period_px: f64,
    /// `None` picks a window just above the minimum for the beam.
    pub window: Option<f64>,
}

impl Default for MziSetup {
    fn default() -> Self {
        Self {
            w0: 0.5e-3,
            wavelength: 405e-9,
            grid_size: 2048,
            max_charge: 7,
            fringe_period_px: DEFAULT_FRINGE_PERIOD_PX,
            window: None,
        }
    }
}

impl MziSetup {
    pub fn grid(&self) -> Result<GridSpec> {
        let window = self
            .window
            .unwrap_or(1.025 * WINDOW_TO_BEAM_RATIO * 2.0 * self.w0);
        make_grid(self.grid_size, self.grid_size, window, self.wavelength)
    }

    pub fn config(&self, grid: &GridSpec, parity: ArmParity) -> MziConfig {
        let period = self.fringe_period_px * grid.dx;
        MziConfig::new(MziConfig::tilt_for_period(period, grid.wavelength), parity)
    }

    pub fn cut_offset(&self, grid: &GridSpec) -> f64 {
        default_cut_offset(self.max_charge, self.fringe_period_px * grid.dx)
    }

    /// Interferogram of charge `l` through `config`.
    pub fn interferogram(&self, l: i32, config: &MziConfig) -> Result<RealImage> {
        let grid = self.grid()?;
        let field = synthesize(&grid, &BeamSpec::phase_vortex(self.w0, l))?;
        Ok(intensity(&mzi_superpose(&field, config)?))
    }

    /// Fork order of charge `l` with the default tilt and cuts.
    pub fn fork_order(&self, l: i32, parity: ArmParity) -> Result<InterferogramAnalysis> {
        let grid = self.grid()?;
        let image = self.interferogram(l, &self.config(&grid, parity))?;
        count_fringe_difference(&image, self.cut_offset(&grid), &FringeParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectrumKind {
    Gaussian,
    Sinc2,
}

/// Spectral intensity `sinc^2(x)` falls to one half at this `x`.
const SINC2_HALF_POINT: f64 = 1.391_557_377_276_34;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomModel {
    pub wavelength: f64,
    /// Spectral FWHM in wavelength (meters).
    pub spectral_fwhm: f64,
    pub visibility: f64,
    /// Coincidences per bin far from the dip.
    pub baseline: f64,
    pub spectrum_kind: SpectrumKind,
}

impl HomModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::InvalidHom(format!("visibility {} outside [0, 1]", self.visibility)));
        }
        if !(self.spectral_fwhm > 0.0 && self.wavelength > 0.0 && self.baseline >= 0.0) {
            return Err(Error::InvalidHom(
                "wavelength and spectral width must be positive, baseline non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Spectral FWHM in frequency (Hz).
    pub fn frequency_fwhm(&self) -> f64 {
        SPEED_OF_LIGHT * self.spectral_fwhm / (self.wavelength * self.wavelength)
    }

    /// Normalized two-photon overlap at path delay `delta` (meters).
    pub fn overlap(&self, delta: f64) -> f64 {
        let tau = delta / SPEED_OF_LIGHT;
        let dnu = self.frequency_fwhm();
        match self.spectrum_kind {
            SpectrumKind::Gaussian => (-(PI * dnu * tau).powi(2) / (4.0 * LN_2)).exp(),
            SpectrumKind::Sinc2 => {
                let tau0 = 2.0 * SINC2_HALF_POINT / (PI * dnu);
                (1.0 - tau.abs() / tau0).max(0.0)
            }
        }
    }

    /// Analytic dip FWHM (meters of path delay).
    pub fn dip_fwhm(&self) -> f64 {
        let lam2 = self.wavelength * self.wavelength / self.spectral_fwhm;
        match self.spectrum_kind {
            SpectrumKind::Gaussian => 4.0 * LN_2 / PI * lam2,
            SpectrumKind::Sinc2 => 2.0 * SINC2_HALF_POINT / PI * lam2,
        }
    }

    /// Symmetric delay grid of `points` samples spanning `+-half_span`.
    pub fn delay_grid(half_span: f64, points: usize) -> Vec<f64> {
        let m = points.max(2) - 1;
        (0..=m)
            .map(|k| half_span * (2.0 * k as f64 / m as f64 - 1.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipCurve {
    pub delays: Vec<f64>,
    pub coincidences: Vec<f64>,
}

/// `C(delta) = baseline * (1 - V g(delta))`.
pub fn hom_dip(model: &HomModel, delays: &[f64]) -> Result<DipCurve> {
    model.validate()?;
    let coincidences = delays
        .iter()
        .map(|&d| model.baseline * (1.0 - model.visibility * model.overlap(d)))
        .collect();
    Ok(DipCurve {
        delays: delays.to_vec(),
        coincidences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipMetrics {
    pub fwhm: f64,
    pub visibility: f64,
}

/// Visibility `(Cmax - Cmin) / Cmax` and half-depth width.
pub fn dip_metrics(curve: &DipCurve) -> Result<DipMetrics> {
    let c = &curve.coincidences;
    let d = &curve.delays;
    if c.len() != d.len() || c.len() < 3 {
        return Err(Error::NoDip("need at least three samples".into()));
    }
    let (kmin, cmin) = c
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(cmax > cmin) || kmin == 0 || kmin + 1 == c.len() {
        return Err(Error::NoDip("curve has no interior minimum".into()));
    }
    let half = cmin + 0.5 * (cmax - cmin);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = kmin;
        for k in range {
            if c[k] >= half {
                let t = (half - c[prev]) / (c[k] - c[prev]);
                return Some(d[prev] + t * (d[k] - d[prev]));
            }
            prev = k;
        }
        None
    };
    let left = cross(&mut (0..kmin).rev());
    let right = cross(&mut (kmin + 1..c.len()));
    match (left, right) {
        (Some(a), Some(b)) => Ok(DipMetrics {
            fwhm: (b - a).abs(),
            visibility: (cmax - cmin) / cmax,
        }),
        _ => Err(Error::NoDip("dip does not recover to half depth on both sides".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(v: f64, kind: SpectrumKind) -> HomModel {
        HomModel {
            wavelength: 810e-9,
            spectral_fwhm: 0.85e-9,
            visibility: v,
            baseline: 1000.0,
            spectrum_kind: kind,
        }
    }

    #[test]
    fn dip_bottom_and_flat_curve() {
        let m = model(0.9, SpectrumKind::Gaussian);
        let c = hom_dip(&m, &[0.0]).unwrap();
        assert_relative_eq!(c.coincidences[0], 100.0, max_relative = 1e-12);
        let flat = hom_dip(&model(0.0, SpectrumKind::Gaussian), &[-1e-3, 0.0, 1e-3]).unwrap();
        assert!(flat.coincidences.iter().all(|&v| v == 1000.0));
        assert!(matches!(dip_metrics(&flat), Err(Error::NoDip(_))));
    }

    #[test]
    fn curves_are_symmetric() {
        for kind in [SpectrumKind::Gaussian, SpectrumKind::Sinc2] {
            let m = model(0.737, kind);
            for d in [1e-5, 2.3e-4, 9e-4] {
                assert_eq!(m.overlap(d), m.overlap(-d));
            }
        }
    }

    #[test]
    fn half_overlap_at_half_width() {
        for kind in [SpectrumKind::Gaussian, SpectrumKind::Sinc2] {
            let m = model(1.0, kind);
            assert_relative_eq!(m.overlap(0.5 * m.dip_fwhm()), 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn monotone_curve_has_no_dip() {
        let curve = DipCurve {
            delays: vec![0.0, 1.0, 2.0, 3.0],
            coincidences: vec![1.0, 2.0, 3.0, 4.0],
        };
        assert!(dip_metrics(&curve).is_err());
    }

    #[test]
    fn undersampled_tilt_is_rejected() {
        let g = crate::field::make_grid(128, 128, 4e-3, 810e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::phase_vortex(0.3e-3, 1)).unwrap();
        // period = 810 nm / 0.3 ~ 2.7 um < one pixel
        let cfg = MziConfig::new(0.3, ArmParity::OppositeSign);
        assert!(matches!(mzi_superpose(&f, &cfg), Err(Error::FringeUndersampling { .. })));
        let cfg = MziConfig {
            displacement: 1.5e-3,
            ..MziConfig::new(0.0, ArmParity::SameSign)
        };
        assert!(matches!(mzi_superpose(&f, &cfg), Err(Error::InvalidMzi(_))));
    }

    #[test]
    fn output_power_is_interferometric_sum() {
        let g = crate::field::make_grid(128, 128, 4e-3, 810e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::phase_vortex(0.2e-3, 2)).unwrap();
        let mut cfg = MziConfig::new(0.0, ArmParity::SameSign);
        assert_relative_eq!(mzi_superpose(&f, &cfg).unwrap().total_power(), 2.0, max_relative = 1e-12);
        cfg.phase_offset = PI;
        assert!(mzi_superpose(&f, &cfg).unwrap().total_power() < 1e-20);
        cfg.phase_offset = PI / 2.0;
        assert_relative_eq!(mzi_superpose(&f, &cfg).unwrap().total_power(), 1.0, max_relative = 1e-12);
    }

    fn fork(n: usize, w0: f64, l: i32, cfg_of: impl Fn(f64) -> MziConfig) -> usize {
        let g = crate::field::make_grid(n, n, 12.3 * w0, 405e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::phase_vortex(w0, l)).unwrap();
        let cfg = cfg_of(MziConfig::default_tilt(&g));
        let img = crate::field::intensity(&mzi_superpose(&f, &cfg).unwrap());
        let c = default_cut_offset(3, DEFAULT_FRINGE_PERIOD_PX * g.dx);
        count_fringe_difference(&img, c, &FringeParams::default())
            .unwrap()
            .fork_order
    }

    #[test]
    fn small_charges_fork_on_small_grid() {
        for l in [-3, -1, 0, 1, 2, 3] {
            let opp = fork(1024, 0.25e-3, l, |t| MziConfig::new(t, ArmParity::OppositeSign));
            assert_eq!(opp, 2 * l.unsigned_abs() as usize, "l={l}");
            let same = fork(1024, 0.25e-3, l, |t| MziConfig::new(t, ArmParity::SameSign));
            assert_eq!(same, 0, "l={l}");
        }
    }

    #[test]
    fn plane_wave_reference_gives_single_fork() {
        let cfg = |t| MziConfig {
            reference_waist: Some(0.75e-3),
            ..MziConfig::new(t, ArmParity::SameSign)
        };
        assert_eq!(fork(1024, 0.25e-3, 1, cfg), 1);
        assert_eq!(fork(1024, 0.25e-3, 0, cfg), 0);
    }

    #[test]
    fn cut_through_dark_core_is_reported() {
        let g = crate::field::make_grid(256, 256, 4e-3, 405e-9).unwrap();
        let f = synthesize(&g, &BeamSpec::laguerre_gauss(0.1e-3, 16, 0)).unwrap();
        let img = crate::field::intensity(&f);
        let r = count_fringe_difference(&img, 0.5 * g.dx, &FringeParams::default());
        assert!(matches!(r, Err(Error::CutThroughCore { .. })), "{r:?}");
    }

    #[test]
    fn cut_offset_scales_with_charge() {
        let p = 13.5e-6;
        assert_relative_eq!(default_cut_offset(7, p), 1.1 * 7.0 * p / PI);
        assert_eq!(default_cut_offset(0, p), 2.0 * p);
    }
}
