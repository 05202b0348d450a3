//! Charge decoding from tilted-lens images, doughnut ring profiles and
//! ring-radius divergence fits.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    intensity, make_grid, synthesize, BeamKind, BeamSpec, ComplexField, GridSpec,
    WINDOW_TO_BEAM_RATIO,
};
use crate::image::{moving_average, RealImage};
use crate::propagation::{apply_lens, propagate, tilted_lens_transform, LensElement, TiltedLensElement};

/// Confidence below which a decoded charge should not be trusted.
pub const LOW_CONFIDENCE: f64 = 0.5;

/// Tunables for [`count_lobes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobeParams {
    /// Peaks below this fraction of the projection maximum are ignored.
    pub threshold: f64,
    /// Minimum distance between counted peaks, in projection samples.
    pub min_separation: usize,
    /// Moving-average width applied to the projection, in samples.
    pub smoothing: usize,
    /// Projection sample spacing in pixels.
    pub sample_spacing: f64,
    /// Pixels below this fraction of the peak are excluded from the moments.
    pub background_floor: f64,
    /// Below this moment anisotropy the orientation is undefined.
    pub min_anisotropy: f64,
    /// Half-width of the projection strip in minor-axis standard deviations.
    pub band: f64,
    /// Largest tilt (radians) of the summation direction away from the
    /// perpendicular; lobes sheared by residual defocus are summed along
    /// their own direction.
    pub max_skew: f64,
    /// Skew search step (radians).
    pub skew_step: f64,
}

impl Default for LobeParams {
    fn default() -> Self {
        Self {
            threshold: 0.10,
            min_separation: 3,
            smoothing: 5,
            sample_spacing: 0.5,
            background_floor: 0.05,
            min_anisotropy: 0.10,
            band: 3.0,
            max_skew: 50f64.to_radians(),
            skew_step: 2f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LobeAnalysis {
    pub lobe_count: usize,
    /// Principal-axis angle from +x towards +y, in (-pi/2, pi/2].
    pub orientation: f64,
    pub charge_estimate: i32,
    pub confidence: f64,
    pub anisotropy: f64,
    /// Tilt of the summation direction that gave the sharpest projection.
    pub skew: f64,
    /// Smoothed 1-D projection along the principal axis.
    pub projection: Vec<f64>,
    /// Indices of the counted peaks in `projection`.
    pub peaks: Vec<usize>,
}

impl LobeAnalysis {
    pub fn orientation_degrees(&self) -> f64 {
        self.orientation.to_degrees()
    }

    pub fn is_confident(&self) -> bool {
        self.confidence >= LOW_CONFIDENCE
    }
}

struct Moments {
    cx: f64,
    cy: f64,
    major: f64,
    minor: f64,
    angle: f64,
}

/// Background-suppressed second moments in physical coordinates (y up).
fn weighted_moments(image: &RealImage, floor: f64) -> Option<Moments> {
    let cut = floor * image.max();
    let mut s = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for ((i, j), &v) in image.data.indexed_iter() {
        let w = v - cut;
        if w <= 0.0 {
            continue;
        }
        let x = image.x_of(j as f64);
        let y = image.y_of(i as f64);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        syy += w * y * y;
        sxy += w * x * y;
    }
    if s <= 0.0 {
        return None;
    }
    let cx = sx / s;
    let cy = sy / s;
    let vxx = sxx / s - cx * cx;
    let vyy = syy / s - cy * cy;
    let vxy = sxy / s - cx * cy;
    let mean = 0.5 * (vxx + vyy);
    let half_diff = (0.25 * (vxx - vyy).powi(2) + vxy * vxy).sqrt();
    Some(Moments {
        cx,
        cy,
        major: (mean + half_diff).max(0.0),
        minor: (mean - half_diff).max(0.0),
        angle: 0.5 * (2.0 * vxy).atan2(vxx - vyy),
    })
}

/// Projection of the image onto the principal axis, summing along a
/// direction tilted by `skew` from the perpendicular.
fn projection(image: &RealImage, m: &Moments, half_len: f64, half_width: f64, step: f64, skew: f64) -> Vec<f64> {
    let (s, c) = m.angle.sin_cos();
    let (ss, cs) = skew.sin_cos();
    // summation direction: perpendicular rotated towards the axis
    let (ex, ey) = (-s * cs + c * ss, c * cs + s * ss);
    let nt = (half_len / step).ceil() as isize;
    let ns = (half_width / cs / step).ceil() as isize;
    (-nt..=nt)
        .into_par_iter()
        .map(|a| {
            let t = a as f64 * step;
            let mut acc = 0.0;
            for b in -ns..=ns {
                let u = b as f64 * step;
                let x = m.cx + t * c + u * ex;
                let y = m.cy + t * s + u * ey;
                acc += image.sample(image.row_of(y), image.col_of(x));
            }
            acc
        })
        .collect()
}

/// Total variation relative to the maximum: how strongly the lobes modulate
/// the projection.
fn modulation(values: &[f64]) -> f64 {
    let top = values.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0.0;
    }
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / top
}

/// Local maxima above `threshold * max`, thinned so that no two survivors are
/// closer than `min_sep` samples (larger peak wins).
fn find_peaks(values: &[f64], threshold: f64, min_sep: usize) -> Vec<usize> {
    let top = values.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    let cut = threshold * top;
    let n = values.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&k| {
            let v = values[k];
            let left = if k > 0 { values[k - 1] } else { f64::NEG_INFINITY };
            let right = if k + 1 < n { values[k + 1] } else { f64::NEG_INFINITY };
            v >= cut && v > left && v >= right
        })
        .collect();
    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for k in candidates {
        if kept.iter().all(|&q| q.abs_diff(k) >= min_sep) {
            kept.push(k);
        }
    }
    kept.sort_unstable();
    kept
}

/// Relative prominence of each peak: depth of the deeper-of-the-two
/// surrounding valleys' shallower side, over the peak height.
fn prominences(values: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .enumerate()
        .map(|(q, &k)| {
            let lo = if q > 0 { peaks[q - 1] } else { 0 };
            let hi = if q + 1 < peaks.len() { peaks[q + 1] } else { values.len() - 1 };
            let left = values[lo..=k].iter().copied().fold(f64::INFINITY, f64::min);
            let right = values[k..=hi].iter().copied().fold(f64::INFINITY, f64::min);
            let base = left.max(right);
            if values[k] > 0.0 {
                ((values[k] - base) / values[k]).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Counts the lobes of a tilted-lens image and reads the charge sign from
/// their orientation: lobes along +45 degrees mean positive charge.
pub fn count_lobes(image: &RealImage, params: &LobeParams) -> Result<LobeAnalysis> {
    image.check_values()?;
    let peak = image.max();
    if peak <= 0.0 {
        return Err(Error::NoLobes("image is blank".into()));
    }
    let mut sorted: Vec<f64> = image.data.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if peak < 5.0 * median {
        return Err(Error::NoLobes(format!(
            "peak/background {:.2} below 5",
            peak / median
        )));
    }
    let m = weighted_moments(image, params.background_floor)
        .ok_or_else(|| Error::NoLobes("no pixels above background".into()))?;
    let anisotropy = if m.major + m.minor > 0.0 {
        (m.major - m.minor) / (m.major + m.minor)
    } else {
        0.0
    };

    let pitch = image.dx.min(image.dy);
    let step = params.sample_spacing * pitch;
    let half_len = (4.0 * m.major.sqrt()).max(8.0 * pitch);
    let half_width = (params.band * m.minor.sqrt()).max(2.0 * pitch);
    let nskew = if params.skew_step > 0.0 {
        (params.max_skew / params.skew_step).floor() as i32
    } else {
        0
    };
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for k in 0..=2 * nskew {
        // 0, +1, -1, +2, ... so ties keep the smaller skew
        let q = if k % 2 == 0 { -(k / 2) } else { k / 2 + 1 };
        let skew = q as f64 * params.skew_step;
        let smooth = moving_average(&projection(image, &m, half_len, half_width, step, skew), params.smoothing);
        let score = modulation(&smooth);
        if best.as_ref().is_none_or(|b| score > b.0 * (1.0 + 1e-9)) {
            best = Some((score, skew, smooth));
        }
    }
    let (_, skew, smooth) = best.expect("at least one skew evaluated");
    let peaks = find_peaks(&smooth, params.threshold, params.min_separation.max(1));
    if peaks.is_empty() {
        return Err(Error::NoLobes("projection has no peaks".into()));
    }
    let n = peaks.len();
    let prominence = prominences(&smooth, &peaks);
    let mean_prominence = if n > 1 {
        prominence.iter().sum::<f64>() / n as f64
    } else {
        1.0
    };

    let mut orientation = m.angle;
    if orientation <= -FRAC_PI_2 {
        orientation += PI;
    }
    let defined = anisotropy >= params.min_anisotropy;
    if n > 1 && !defined {
        return Err(Error::AmbiguousOrientation {
            anisotropy,
            lobes: n,
        });
    }
    let charge_estimate = if n == 1 {
        0
    } else {
        let sign = if orientation > 0.0 && orientation < FRAC_PI_2 { 1 } else { -1 };
        sign * (n as i32 - 1)
    };
    // A single lobe carries no sign information.
    let confidence = if n == 1 {
        0.25 * mean_prominence
    } else {
        (mean_prominence * (2.0 * orientation).sin().abs()).clamp(0.0, 1.0)
    };
    Ok(LobeAnalysis {
        lobe_count: n,
        orientation,
        charge_estimate,
        confidence,
        anisotropy,
        skew,
        projection: smooth,
        peaks,
    })
}

/// Noiseless end-to-end decoder: tilted-lens transform, intensity, lobe count.
pub fn estimate_charge(field: &ComplexField, lens: &TiltedLensElement) -> Result<i32> {
    decode_field(field, lens, &LobeParams::default()).map(|a| a.charge_estimate)
}

pub fn decode_field(
    field: &ComplexField,
    lens: &TiltedLensElement,
    params: &LobeParams,
) -> Result<LobeAnalysis> {
    let focal = tilted_lens_transform(field, lens)?;
    count_lobes(&intensity(&focal), params)
}

/// Reference tilted-lens decoder: lens 1 m at 35 degrees with its long
/// focal axis along y, camera at the nominal back focal plane.
///
/// The lobe pattern only forms in a narrow band of astigmatism per beam
/// size, so the waist is tied to the wavelength: a phase vortex needs a
/// Fresnel number `w0^2 / (lambda f)` near 7, an LG mode near 1.6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeSetup {
    pub kind: BeamKind,
    pub w0: f64,
    pub lens: TiltedLensElement,
    pub grid_size: usize,
    /// Largest |l| the window must hold.
    pub max_charge: u32,
    /// `None` picks the window from [`DecodeSetup::window_for`].
    pub window: Option<f64>,
}

pub const DECODE_FOCAL_LENGTH: f64 = 1.0;
pub const DECODE_TILT_DEGREES: f64 = 35.0;

impl DecodeSetup {
    pub fn new(kind: BeamKind, wavelength: f64) -> Self {
        Self {
            kind,
            w0: Self::default_waist(kind, wavelength),
            lens: TiltedLensElement::new(DECODE_FOCAL_LENGTH, DECODE_TILT_DEGREES.to_radians(), FRAC_PI_2)
                .expect("reference lens is valid"),
            grid_size: 1024,
            max_charge: 14,
            window: None,
        }
    }

    /// Waist for a 1 m lens: 1.7 mm (vortex) or 0.8 mm (LG) at 405 nm,
    /// scaled by `sqrt(lambda)` to keep the Fresnel number.
    pub fn default_waist(kind: BeamKind, wavelength: f64) -> f64 {
        let at_405 = match kind {
            BeamKind::LaguerreGauss => 0.8e-3,
            _ => 1.7e-3,
        };
        at_405 * (wavelength / 405e-9).sqrt()
    }

    /// Smallest window that holds the widest beam of the sweep and samples
    /// the lens chirp.
    pub fn window_for(&self, wavelength: f64) -> f64 {
        self.window.unwrap_or_else(|| {
            let widest = BeamSpec {
                kind: self.kind,
                w0: self.w0,
                l: self.max_charge as i32,
                p: 0,
            };
            let beam = 1.05 * WINDOW_TO_BEAM_RATIO * widest.diameter();
            let chirp = 1.05 * (wavelength * self.lens.focal_length * self.grid_size as f64).sqrt();
            beam.max(chirp)
        })
    }

    pub fn grid(&self, wavelength: f64) -> Result<GridSpec> {
        make_grid(self.grid_size, self.grid_size, self.window_for(wavelength), wavelength)
    }

    pub fn beam(&self, l: i32) -> BeamSpec {
        BeamSpec {
            kind: self.kind,
            w0: self.w0,
            l,
            p: 0,
        }
    }

    /// Intensity at the back focal plane for charge `l`.
    pub fn focal_image(&self, l: i32, wavelength: f64) -> Result<RealImage> {
        let field = synthesize(&self.grid(wavelength)?, &self.beam(l))?;
        Ok(intensity(&tilted_lens_transform(&field, &self.lens)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingProfile {
    /// Ring center (x, y) in meters.
    pub center: (f64, f64),
    pub radii: Vec<f64>,
    pub mean_intensity: Vec<f64>,
    pub r_max: f64,
}

pub const RING_ANGULAR_SAMPLES: usize = 720;

/// Azimuthally averaged radial profile about the intensity centroid.
pub fn ring_profile(image: &RealImage) -> Result<RingProfile> {
    image.check_values()?;
    let peak = image.max();
    let (ci, cj) = image
        .centroid_index()
        .filter(|_| peak > 0.0)
        .ok_or_else(|| Error::DegenerateImage("image is blank".into()))?;
    let (ny, nx) = image.data.dim();
    let border = (0..nx)
        .flat_map(|j| [image.data[(0, j)], image.data[(ny - 1, j)]])
        .chain((0..ny).flat_map(|i| [image.data[(i, 0)], image.data[(i, nx - 1)]]))
        .fold(0.0, f64::max);
    if border > 0.05 * peak {
        return Err(Error::DegenerateImage(format!(
            "beam clipped: edge intensity {:.3} of peak",
            border / peak
        )));
    }
    let bin = image.dx.min(image.dy);
    let reach = [
        ci * image.dy,
        (ny - 1) as f64 * image.dy - ci * image.dy,
        cj * image.dx,
        (nx - 1) as f64 * image.dx - cj * image.dx,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let nbins = (reach / bin).floor() as usize + 1;
    if nbins < 3 {
        return Err(Error::DegenerateImage("centroid too close to the edge".into()));
    }
    let sin_cos: Vec<(f64, f64)> = (0..RING_ANGULAR_SAMPLES)
        .map(|k| (2.0 * PI * k as f64 / RING_ANGULAR_SAMPLES as f64).sin_cos())
        .collect();
    let radii: Vec<f64> = (0..nbins).map(|k| k as f64 * bin).collect();
    let mean_intensity: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            sin_cos
                .iter()
                .map(|&(s, c)| image.sample(ci + r * s / image.dy, cj + r * c / image.dx))
                .sum::<f64>()
                / RING_ANGULAR_SAMPLES as f64
        })
        .collect();
    let k = mean_intensity
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc })
        .0;
    let r_max = if k == 0 || k + 1 == nbins {
        radii[k]
    } else {
        let (a, b, c) = (mean_intensity[k - 1], mean_intensity[k], mean_intensity[k + 1]);
        let den = a - 2.0 * b + c;
        let shift = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        radii[k] + shift.clamp(-0.5, 0.5) * bin
    };
    Ok(RingProfile {
        center: (image.x_of(cj), image.y_of(ci)),
        radii,
        mean_intensity,
        r_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceFit {
    pub r0: f64,
    pub z_r: f64,
    /// Far-field growth rate `r0 / z_r`.
    pub slope: f64,
    /// RMS radius residual (meters).
    pub residual: f64,
}

impl DivergenceFit {
    pub fn radius_at(&self, z: f64) -> f64 {
        self.r0 * (1.0 + (z / self.z_r).powi(2)).sqrt()
    }
}

/// Least-squares fit of `r^2 = r0^2 + (r0/zR)^2 z^2`, linear in `z^2`.
pub fn fit_divergence(series: &[(f64, f64)]) -> Result<DivergenceFit> {
    if series.len() < 4 {
        return Err(Error::IllConditioned(format!(
            "{} points, need at least 4",
            series.len()
        )));
    }
    if series.iter().any(|&(z, r)| !(r > 0.0) || !z.is_finite() || !r.is_finite()) {
        return Err(Error::FitFailure("radii must be positive and finite".into()));
    }
    let n = series.len() as f64;
    let xs: Vec<f64> = series.iter().map(|&(z, _)| z * z).collect();
    let ys: Vec<f64> = series.iter().map(|&(_, r)| r * r).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if sxx <= 1e-12 * scale * scale * n {
        return Err(Error::IllConditioned("all z^2 values coincide".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::FitFailure(format!(
            "non-physical parameters r0^2 = {a:.3e}, slope^2 = {b:.3e}"
        )));
    }
    let r0 = a.sqrt();
    let z_r = (a / b).sqrt();
    let (zmin, zmax) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(z, _)| (lo.min(z), hi.max(z)));
    if zmax - zmin < z_r {
        return Err(Error::IllConditioned(format!(
            "z span {:.3e} m shorter than fitted z_R {z_r:.3e} m",
            zmax - zmin
        )));
    }
    let fit = DivergenceFit {
        r0,
        z_r,
        slope: b.sqrt(),
        residual: 0.0,
    };
    let residual = (series
        .iter()
        .map(|&(z, r)| (fit.radius_at(z) - r).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DivergenceFit { residual, ..fit })
}

/// Focusing arm shared by the divergence study: the beam waist sits on the
/// lens, and distances are measured from the back focal plane.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceGeometry {
    pub kind: BeamKind,
    pub w0: f64,
    pub focal_length: f64,
    pub distances: Vec<f64>,
    pub grid_size: usize,
    /// Window width; `None` picks the smallest window whose transfer
    /// function is sampled finely enough for the longest hop.
    pub window: Option<f64>,
}

impl DivergenceGeometry {
    pub fn window_for(&self, wavelength: f64) -> f64 {
        self.window.unwrap_or_else(|| {
            let hop = self
                .distances
                .iter()
                .fold(self.focal_length, |a, &z| a.max(z.abs()));
            1.05 * (wavelength * hop * self.grid_size as f64).sqrt()
        })
    }
}

/// Ring radius at each distance behind the focal plane.
pub fn divergence_series(l: i32, wavelength: f64, geom: &DivergenceGeometry) -> Result<Vec<(f64, f64)>> {
    let grid = make_grid(geom.grid_size, geom.grid_size, geom.window_for(wavelength), wavelength)?;
    let spec = BeamSpec {
        kind: geom.kind,
        w0: geom.w0,
        l,
        p: 0,
    };
    let at_lens = synthesize(&grid, &spec)?;
    let focal = propagate(
        &apply_lens(&at_lens, &LensElement::new(geom.focal_length)?),
        geom.focal_length,
    )?;
    geom.distances
        .iter()
        .map(|&z| {
            let f = propagate(&focal, z)?;
            Ok((z, ring_profile(&intensity(&f))?.r_max))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceRow {
    pub l: i32,
    pub fit_a: DivergenceFit,
    pub fit_b: DivergenceFit,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceStudy {
    pub rows: Vec<DivergenceRow>,
    pub mean_ratio: f64,
    /// Largest `|ratio - mean| / mean` over the rows.
    pub spread: f64,
}

/// Fits the divergence of each order at two wavelengths and compares the
/// slopes (`slope_a / slope_b`).
pub fn divergence_ratio_study(
    orders: &[i32],
    wavelength_a: f64,
    wavelength_b: f64,
    geom: &DivergenceGeometry,
) -> Result<DivergenceStudy> {
    if orders.is_empty() {
        return Err(Error::InvalidBeam("no orders to study".into()));
    }
    let rows = orders
        .iter()
        .map(|&l| {
            let fit_a = fit_divergence(&divergence_series(l, wavelength_a, geom)?)?;
            let fit_b = fit_divergence(&divergence_series(l, wavelength_b, geom)?)?;
            Ok(DivergenceRow {
                l,
                fit_a,
                fit_b,
                ratio: fit_a.slope / fit_b.slope,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_ratio = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64;
    let spread = rows
        .iter()
        .map(|r| (r.ratio - mean_ratio).abs() / mean_ratio)
        .fold(0.0, f64::max);
    Ok(DivergenceStudy {
        rows,
        mean_ratio,
        spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn blobs(centers: &[(f64, f64)], sigma: f64) -> RealImage {
        let n = 128;
        let data = Array2::from_shape_fn((n, n), |(i, j)| {
            let x = j as f64 - 64.0;
            let y = i as f64 - 64.0;
            centers
                .iter()
                .map(|&(cx, cy)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp())
                .sum()
        });
        RealImage::square(data, 1.0).unwrap()
    }

    #[test]
    fn peaks_respect_threshold_and_separation() {
        let v = [0.0, 1.0, 0.0, 0.05, 0.0, 0.9, 0.95, 0.0];
        assert_eq!(find_peaks(&v, 0.1, 1), vec![1, 6]);
        assert_eq!(find_peaks(&v, 0.1, 6), vec![1]);
    }

    #[test]
    fn synthetic_lobe_rows() {
        let d = 45f64.to_radians();
        for (n, sign) in [(2, 1.0), (3, -1.0), (5, 1.0)] {
            let centers: Vec<(f64, f64)> = (0..n)
                .map(|k| {
                    let t = (k as f64 - (n - 1) as f64 / 2.0) * 10.0;
                    (t * d.cos(), sign * t * d.sin())
                })
                .collect();
            let a = count_lobes(&blobs(&centers, 2.0), &LobeParams::default()).unwrap();
            assert_eq!(a.lobe_count, n);
            assert_eq!(a.charge_estimate, sign as i32 * (n as i32 - 1));
            assert!((a.orientation_degrees().abs() - 45.0).abs() < 1.0);
            assert!(a.is_confident());
        }
    }

    #[test]
    fn single_spot_is_charge_zero_low_confidence() {
        let a = count_lobes(&blobs(&[(0.0, 0.0)], 3.0), &LobeParams::default()).unwrap();
        assert_eq!((a.lobe_count, a.charge_estimate), (1, 0));
        assert!(!a.is_confident());
    }

    #[test]
    fn blank_and_flat_images_have_no_lobes() {
        let z = RealImage::square(Array2::zeros((64, 64)), 1.0).unwrap();
        assert!(matches!(count_lobes(&z, &LobeParams::default()), Err(Error::NoLobes(_))));
        let f = RealImage::square(Array2::from_elem((64, 64), 3.0), 1.0).unwrap();
        assert!(matches!(count_lobes(&f, &LobeParams::default()), Err(Error::NoLobes(_))));
    }

    #[test]
    fn fit_recovers_model_parameters() {
        let (r0, zr) = (1e-3, 2.0);
        let series: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let z = k as f64 * 0.8;
                (z, r0 * (1.0 + (z / zr).powi(2)).sqrt())
            })
            .collect();
        let fit = fit_divergence(&series).unwrap();
        assert_relative_eq!(fit.r0, r0, max_relative = 1e-6);
        assert_relative_eq!(fit.z_r, zr, max_relative = 1e-6);
        assert_relative_eq!(fit.slope, r0 / zr, max_relative = 1e-6);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_series() {
        let same = [(0.1, 1e-3); 5];
        assert!(matches!(fit_divergence(&same), Err(Error::IllConditioned(_))));
        let short = [(0.0, 1e-3), (0.1, 2e-3)];
        assert!(fit_divergence(&short).is_err());
        let shrinking: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 1e-3 / (1.0 + k as f64))).collect();
        assert!(matches!(fit_divergence(&shrinking), Err(Error::FitFailure(_))));
    }
}
