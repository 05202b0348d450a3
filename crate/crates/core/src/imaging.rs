//! Heralded coincidence imaging on an intensified camera: photon positions
//! drawn from a field's intensity, detector losses and dark counts, frame
//! accumulation, and comparison of the result back to the intensity.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::RealImage;

/// Detected pairs per second per milliwatt of pump. Chosen so a 1 s frame at
/// 10 mW holds about 10^3 photons with the default detector and herald.
pub const PAIRS_PER_SECOND_PER_MW: f64 = 2.0e3;

/// Charge carried by the signal photon when the idler is projected onto
/// `l = 0` by a single-mode fiber: conservation hands it the pump's charge.
pub fn herald_projection(pump_charge: i32) -> i32 {
    pump_charge
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub quantum_efficiency: f64,
    /// Mean dark counts per frame, spread uniformly over the pixels.
    pub dark_counts_per_frame: f64,
    /// (nx, ny)
    pub pixels: (usize, usize),
    /// Seconds.
    pub exposure: f64,
}

impl DetectorConfig {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self {
            quantum_efficiency: 0.25,
            dark_counts_per_frame: 0.0,
            pixels: (nx, ny),
            exposure: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::InvalidDetector(format!(
                "quantum efficiency {} outside [0, 1]",
                self.quantum_efficiency
            )));
        }
        if !(self.dark_counts_per_frame >= 0.0 && self.dark_counts_per_frame.is_finite()) {
            return Err(Error::InvalidDetector(format!(
                "dark counts per frame must be finite and non-negative, got {}",
                self.dark_counts_per_frame
            )));
        }
        if self.pixels.0 == 0 || self.pixels.1 == 0 {
            return Err(Error::InvalidDetector("detector has no pixels".into()));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::InvalidDetector(format!(
                "exposure must be positive, got {}",
                self.exposure
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceConfig {
    /// Pairs per second reaching the herald.
    pub pair_rate: f64,
    pub herald_efficiency: f64,
    /// Seconds.
    pub coincidence_window: f64,
    /// Seconds. Carried for bookkeeping only; the delay line compensates it.
    pub trigger_latency: f64,
}

impl CoincidenceConfig {
    pub fn from_pump_power(milliwatts: f64) -> Self {
        Self {
            pair_rate: PAIRS_PER_SECOND_PER_MW * milliwatts,
            herald_efficiency: 0.2,
            coincidence_window: 5e-9,
            trigger_latency: 80e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate >= 0.0 && self.pair_rate.is_finite()) {
            return Err(Error::InvalidDetector(format!(
                "pair rate must be finite and non-negative, got {}",
                self.pair_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.herald_efficiency) {
            return Err(Error::InvalidDetector(format!(
                "herald efficiency {} outside [0, 1]",
                self.herald_efficiency
            )));
        }
        if !(self.coincidence_window > 0.0 && self.coincidence_window.is_finite()) {
            return Err(Error::InvalidDetector(format!(
                "coincidence window must be positive, got {}",
                self.coincidence_window
            )));
        }
        if !self.trigger_latency.is_finite() {
            return Err(Error::InvalidDetector("trigger latency must be finite".into()));
        }
        Ok(())
    }
}

/// Mean number of detected signal photons in one frame.
pub fn mean_signal_per_frame(det: &DetectorConfig, coin: &CoincidenceConfig) -> f64 {
    coin.pair_rate * det.exposure * coin.herald_efficiency * det.quantum_efficiency
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountImage {
    /// Indexed `[row, col]` like [`RealImage`].
    pub counts: Array2<u32>,
    pub frames_accumulated: u32,
    pub rng_seed: u64,
}

impl CountImage {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// `(nx, ny)`, as for [`RealImage::dims`].
    pub fn dims(&self) -> (usize, usize) {
        let (ny, nx) = self.counts.dim();
        (nx, ny)
    }

    /// Counts as a real image with the given pitch.
    pub fn to_image(&self, pitch: f64) -> Result<RealImage> {
        RealImage::square(self.counts.mapv(|c| c as f64), pitch)
    }
}

/// 64-bit finalizer from SplitMix64.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of frame `frame` under master seed `seed`.
pub fn frame_seed(seed: u64, frame: u32) -> u64 {
    mix64(seed ^ mix64(frame as u64))
}

fn weights(pdf: &RealImage) -> Result<WeightedIndex<f64>> {
    pdf.check_values()?;
    if !(pdf.sum() > 0.0) {
        return Err(Error::ZeroTotalPdf);
    }
    WeightedIndex::new(pdf.data.iter().copied())
        .map_err(|e| Error::InvalidImage(format!("probability image rejected: {e}")))
}

/// `n` independent pixel draws `(row, col)` from the normalized `pdf`.
pub fn sample_photons(pdf: &RealImage, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let dist = weights(pdf)?;
    let nx = pdf.nx();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let k = dist.sample(&mut rng);
            (k / nx, k % nx)
        })
        .collect())
}

struct FrameModel {
    dist: WeightedIndex<f64>,
    signal: Option<Poisson<f64>>,
    dark: Option<Poisson<f64>>,
    pixels: usize,
}

impl FrameModel {
    fn new(
        pdf: &RealImage,
        det: &DetectorConfig,
        coin: &CoincidenceConfig,
    ) -> Result<Self> {
        det.validate()?;
        coin.validate()?;
        let (nx, ny) = det.pixels;
        if (nx, ny) != pdf.dims() {
            return Err(Error::DimensionMismatch {
                left: (nx, ny),
                right: pdf.dims(),
            });
        }
        let poisson = |mean: f64| -> Result<Option<Poisson<f64>>> {
            if mean == 0.0 {
                return Ok(None);
            }
            Poisson::new(mean)
                .map(Some)
                .map_err(|e| Error::InvalidDetector(format!("mean {mean}: {e}")))
        };
        Ok(Self {
            dist: weights(pdf)?,
            signal: poisson(mean_signal_per_frame(det, coin))?,
            dark: poisson(det.dark_counts_per_frame)?,
            pixels: nx * ny,
        })
    }

    /// Flat pixel indices hit during one frame.
    fn events(&self, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_signal = self.signal.map_or(0, |p| p.sample(&mut rng) as usize);
        let n_dark = self.dark.map_or(0, |p| p.sample(&mut rng) as usize);
        let mut hits = Vec::with_capacity(n_signal + n_dark);
        hits.extend((0..n_signal).map(|_| self.dist.sample(&mut rng)));
        hits.extend((0..n_dark).map(|_| rng.random_range(0..self.pixels)));
        hits
    }
}

/// Sums `frames` independent frames. Frame `k` depends only on
/// `frame_seed(seed, k)`, so the result does not depend on scheduling.
pub fn accumulate_frames(
    pdf: &RealImage,
    frames: u32,
    det: &DetectorConfig,
    coin: &CoincidenceConfig,
    seed: u64,
) -> Result<CountImage> {
    accumulate_range(pdf, 0..frames, det, coin, seed)
}

/// One frame of [`accumulate_frames`] in isolation.
pub fn single_frame(
    pdf: &RealImage,
    frame: u32,
    det: &DetectorConfig,
    coin: &CoincidenceConfig,
    seed: u64,
) -> Result<CountImage> {
    accumulate_range(pdf, frame..frame + 1, det, coin, seed)
}

fn accumulate_range(
    pdf: &RealImage,
    frames: std::ops::Range<u32>,
    det: &DetectorConfig,
    coin: &CoincidenceConfig,
    seed: u64,
) -> Result<CountImage> {
    if frames.is_empty() {
        return Err(Error::InvalidDetector("at least one frame is required".into()));
    }
    let model = FrameModel::new(pdf, det, coin)?;
    let per_frame: Vec<Vec<usize>> = frames
        .clone()
        .into_par_iter()
        .map(|k| model.events(frame_seed(seed, k)))
        .collect();
    let (nx, ny) = pdf.dims();
    let mut counts = Array2::<u32>::zeros((ny, nx));
    for hits in &per_frame {
        for &k in hits {
            counts[(k / nx, k % nx)] += 1;
        }
    }
    Ok(CountImage {
        counts,
        frames_accumulated: frames.len() as u32,
        rng_seed: seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfComparison {
    pub l1_distance: f64,
    pub total_counts: u64,
}

/// L1 distance between the normalized counts and the normalized `pdf`.
pub fn compare_to_pdf(img: &CountImage, pdf: &RealImage) -> Result<PdfComparison> {
    if img.dims() != pdf.dims() {
        return Err(Error::DimensionMismatch {
            left: img.dims(),
            right: pdf.dims(),
        });
    }
    pdf.check_values()?;
    let total_counts = img.total();
    if total_counts == 0 {
        return Err(Error::ZeroCounts);
    }
    let mass = pdf.sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroTotalPdf);
    }
    let n = total_counts as f64;
    let l1_distance = img
        .counts
        .iter()
        .zip(pdf.data.iter())
        .map(|(&c, &p)| (c as f64 / n - p / mass).abs())
        .sum();
    Ok(PdfComparison {
        l1_distance,
        total_counts,
    })
}
