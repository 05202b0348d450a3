//! Scenario runners. Sweep points are evaluated in parallel; files are
//! written afterwards in sweep order and the manifest last.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use twistbench_core::imaging::{accumulate_frames, compare_to_pdf, herald_projection, mix64, CountImage};
use twistbench_core::interferometry::{
    count_fringe_difference, dip_metrics, hom_dip, mzi_superpose, ArmParity, FringeParams, HomModel,
    MziSetup,
};
use twistbench_core::metrology::{
    count_lobes, divergence_series, fit_divergence, DecodeSetup, DivergenceGeometry, LobeAnalysis,
    LobeParams,
};
use twistbench_core::propagation::TiltedLensElement;
use twistbench_core::{intensity, phase_winding_charge, synthesize, BeamKind, RealImage};

use crate::config::{ExperimentConfig, ImagingTarget, Scenario};
use crate::error::BenchError;
use crate::io::{
    encode_pgm16, encode_pgm8, encode_sidecar, fmt_f64, read_pgm, read_sidecar, sha256_hex,
    sidecar_path, write_file, Csv,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub files: Vec<OutputFile>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Hash of the parsed config, independent of where outputs go.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output_dir = PathBuf::new();
    sha256_hex(format!("{canonical:?}").as_bytes())
}

type Outputs = Vec<(String, Vec<u8>)>;

fn signed(l: i32) -> String {
    if l == 0 {
        "0".into()
    } else {
        format!("{l:+}")
    }
}

fn charge_tag(l: i32) -> String {
    format!("{}{:02}", if l < 0 { 'm' } else { 'p' }, l.unsigned_abs())
}

fn max_charge(cfg: &ExperimentConfig) -> u32 {
    cfg.charges.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0)
}

fn decode_setup(cfg: &ExperimentConfig) -> Result<DecodeSetup, BenchError> {
    let lambda = cfg.beam.wavelength;
    let lens = TiltedLensElement::new(cfg.optics.focal_length, cfg.optics.tilt, cfg.optics.astig_axis)
        .map_err(BenchError::core("tilted lens"))?;
    Ok(DecodeSetup {
        kind: cfg.beam.kind,
        w0: cfg
            .beam
            .w0
            .unwrap_or_else(|| DecodeSetup::default_waist(cfg.beam.kind, lambda)),
        lens,
        grid_size: cfg.grid.size,
        max_charge: max_charge(cfg),
        window: cfg.grid.window,
    })
}

fn image_sidecar(cfg: &ExperimentConfig, hash: &str, l: i32, pitch: f64, extra: &[(&str, String)]) -> Vec<u8> {
    let mut fields = vec![
        ("scenario", cfg.scenario.name().to_string()),
        ("charge", signed(l)),
        ("pitch_m", fmt_f64(pitch)),
        ("wavelength_m", fmt_f64(cfg.beam.wavelength)),
        ("config_hash", hash.to_string()),
    ];
    fields.extend(extra.iter().cloned());
    encode_sidecar(&fields)
}

fn lobe_cells(a: &LobeAnalysis) -> Vec<String> {
    vec![
        a.lobe_count.to_string(),
        fmt_f64(a.orientation_degrees()),
        signed(a.charge_estimate),
        fmt_f64(a.confidence),
        (!a.is_confident() as u8).to_string(),
    ]
}

fn tilted_lens(cfg: &ExperimentConfig, hash: &str) -> Result<Outputs, BenchError> {
    let setup = decode_setup(cfg)?;
    let lambda = cfg.beam.wavelength;
    let grid = setup.grid(lambda).map_err(BenchError::core("tilted_lens grid"))?;
    let results = cfg
        .charges
        .par_iter()
        .map(|&l| {
            let ctx = format!("tilted_lens l={l}");
            let field = synthesize(&grid, &setup.beam(l)).map_err(BenchError::core(&ctx))?;
            let loop_radius = setup.beam(l).ring_radius().max(0.5 * setup.w0);
            let winding = phase_winding_charge(&field, loop_radius).map_err(BenchError::core(&ctx))?;
            let focal = twistbench_core::tilted_lens_transform(&field, &setup.lens)
                .map_err(BenchError::core(&ctx))?;
            let image = intensity(&focal);
            let analysis = count_lobes(&image, &LobeParams::default()).map_err(BenchError::core(&ctx))?;
            Ok((l, winding, image, analysis))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let mut out = Outputs::new();
    let mut csv = Csv::new(&[
        "l",
        "winding_charge",
        "lobe_count",
        "orientation_deg",
        "charge_estimate",
        "confidence",
        "low_confidence",
        "image",
    ]);
    for (l, winding, image, analysis) in results {
        let name = format!("tilted_lens_{}.pgm", charge_tag(l));
        let mut row = vec![signed(l), signed(winding)];
        row.extend(lobe_cells(&analysis));
        row.push(name.clone());
        csv.row(&row);
        let extra = [("kind", format!("{:?}", cfg.beam.kind)), ("w0_m", fmt_f64(setup.w0))];
        out.push((sidecar_name(&name), image_sidecar(cfg, hash, l, image.dx, &extra)));
        out.push((name, encode_pgm8(&image)));
    }
    out.push(("tilted_lens.csv".into(), csv.into_bytes()));
    Ok(out)
}

fn sidecar_name(image: &str) -> String {
    sidecar_path(Path::new(image)).to_string_lossy().into_owned()
}

fn mzi(cfg: &ExperimentConfig, hash: &str) -> Result<Outputs, BenchError> {
    let setup = MziSetup {
        w0: cfg.beam.w0.unwrap_or(MziSetup::default().w0),
        wavelength: cfg.beam.wavelength,
        grid_size: cfg.grid.size,
        max_charge: max_charge(cfg),
        fringe_period_px: cfg.mzi.fringe_period_px,
        window: cfg.grid.window,
    };
    let grid = setup.grid().map_err(BenchError::core("mzi grid"))?;
    let config = twistbench_core::interferometry::MziConfig {
        phase_offset: cfg.mzi.phase_offset,
        displacement: cfg.mzi.displacement,
        reference_waist: cfg.mzi.reference_waist,
        ..setup.config(&grid, cfg.mzi.parity)
    };
    let offset = cfg.mzi.cut_offset.unwrap_or_else(|| setup.cut_offset(&grid));
    let results = cfg
        .charges
        .par_iter()
        .map(|&l| {
            let ctx = format!("mzi l={l}");
            let spec = twistbench_core::BeamSpec {
                kind: cfg.beam.kind,
                w0: setup.w0,
                l,
                p: 0,
            };
            let field = synthesize(&grid, &spec).map_err(BenchError::core(&ctx))?;
            let image = intensity(&mzi_superpose(&field, &config).map_err(BenchError::core(&ctx))?);
            let a = count_fringe_difference(&image, offset, &FringeParams::default())
                .map_err(BenchError::core(&ctx))?;
            Ok((l, image, a))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let parity = match cfg.mzi.parity {
        ArmParity::OppositeSign => "opposite_sign",
        ArmParity::SameSign => "same_sign",
    };
    let mut out = Outputs::new();
    let mut csv = Csv::new(&[
        "l",
        "parity",
        "reference",
        "fringes_upper",
        "fringes_lower",
        "fork_order",
        "cut_offset_m",
        "image",
    ]);
    for (l, image, a) in results {
        let name = format!("mzi_{}.pgm", charge_tag(l));
        csv.row(&[
            signed(l),
            parity.into(),
            (cfg.mzi.reference_waist.is_some() as u8).to_string(),
            a.fringes_upper.to_string(),
            a.fringes_lower.to_string(),
            a.fork_order.to_string(),
            fmt_f64(a.cut_offsets.0),
            name.clone(),
        ]);
        let extra = [("tilt_rad", fmt_f64(config.tilt)), ("parity", parity.to_string())];
        out.push((sidecar_name(&name), image_sidecar(cfg, hash, l, image.dx, &extra)));
        out.push((name, encode_pgm8(&image)));
    }
    out.push(("mzi.csv".into(), csv.into_bytes()));
    Ok(out)
}

fn power_tag(mw: f64) -> String {
    format!("{mw}").replace('.', "p")
}

fn hom(cfg: &ExperimentConfig) -> Result<Outputs, BenchError> {
    let mut out = Outputs::new();
    let mut metrics = Csv::new(&[
        "pump_power_mw",
        "visibility_config",
        "visibility_measured",
        "fwhm_measured_m",
        "fwhm_model_m",
    ]);
    let curves = cfg
        .hom
        .visibilities
        .par_iter()
        .map(|&(p, v)| {
            let ctx = format!("hom {p} mW");
            let model = HomModel {
                wavelength: cfg.beam.wavelength,
                spectral_fwhm: cfg.hom.spectral_fwhm,
                visibility: v,
                baseline: cfg.hom.baseline,
                spectrum_kind: cfg.hom.spectrum,
            };
            let span = cfg.hom.half_span.unwrap_or(2.5 * model.dip_fwhm());
            let delays = HomModel::delay_grid(span, cfg.hom.points);
            let curve = hom_dip(&model, &delays).map_err(BenchError::core(&ctx))?;
            let m = dip_metrics(&curve).map_err(BenchError::core(&ctx))?;
            Ok((p, v, model, curve, m))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    for (p, v, model, curve, m) in curves {
        let mut csv = Csv::new(&["delay_m", "coincidences"]);
        for (d, c) in curve.delays.iter().zip(&curve.coincidences) {
            csv.row(&[fmt_f64(*d), fmt_f64(*c)]);
        }
        out.push((format!("hom_dip_{}mW.csv", power_tag(p)), csv.into_bytes()));
        metrics.row(&[
            fmt_f64(p),
            fmt_f64(v),
            fmt_f64(m.visibility),
            fmt_f64(m.fwhm),
            fmt_f64(model.dip_fwhm()),
        ]);
    }
    out.push(("hom_metrics.csv".into(), metrics.into_bytes()));
    Ok(out)
}

fn divergence(cfg: &ExperimentConfig) -> Result<Outputs, BenchError> {
    let geom = DivergenceGeometry {
        kind: cfg.beam.kind,
        w0: cfg.beam.w0.unwrap_or(0.5e-3),
        focal_length: cfg.optics.focal_length,
        distances: cfg.distances.clone(),
        grid_size: cfg.grid.size,
        window: cfg.grid.window,
    };
    let mut wavelengths = vec![cfg.beam.wavelength];
    wavelengths.extend(cfg.compare_wavelength);
    let jobs: Vec<(i32, f64)> = cfg
        .charges
        .iter()
        .flat_map(|&l| wavelengths.iter().map(move |&w| (l, w)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(l, w)| {
            let ctx = format!("divergence l={l} lambda={w:e}");
            let series = divergence_series(l, w, &geom).map_err(BenchError::core(&ctx))?;
            let fit = fit_divergence(&series).map_err(BenchError::core(&ctx))?;
            Ok((l, w, series, fit))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let mut radii = Csv::new(&["l", "wavelength_m", "z_m", "ring_radius_m"]);
    let mut fits = Csv::new(&["l", "wavelength_m", "r0_m", "z_r_m", "slope_rad", "residual_m"]);
    for (l, w, series, fit) in &results {
        for (z, r) in series {
            radii.row(&[signed(*l), fmt_f64(*w), fmt_f64(*z), fmt_f64(*r)]);
        }
        fits.row(&[
            signed(*l),
            fmt_f64(*w),
            fmt_f64(fit.r0),
            fmt_f64(fit.z_r),
            fmt_f64(fit.slope),
            fmt_f64(fit.residual),
        ]);
    }
    let mut out: Outputs = vec![
        ("divergence_radii.csv".into(), radii.into_bytes()),
        ("divergence_fit.csv".into(), fits.into_bytes()),
    ];
    if let Some(wb) = cfg.compare_wavelength {
        let mut ratio = Csv::new(&["l", "slope_a_rad", "slope_b_rad", "ratio"]);
        let slope = |l: i32, w: f64| {
            results
                .iter()
                .find(|r| r.0 == l && r.1 == w)
                .map(|r| r.3.slope)
                .unwrap_or(f64::NAN)
        };
        let mut ratios = vec![];
        for &l in &cfg.charges {
            let (a, b) = (slope(l, cfg.beam.wavelength), slope(l, wb));
            ratio.row(&[signed(l), fmt_f64(a), fmt_f64(b), fmt_f64(a / b)]);
            ratios.push(a / b);
        }
        out.push(("divergence_ratio.csv".into(), ratio.into_bytes()));
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let spread = ratios.iter().map(|r| (r - mean).abs() / mean).fold(0.0, f64::max);
        let mut summary = Csv::new(&["wavelength_a_m", "wavelength_b_m", "mean_ratio", "max_relative_spread"]);
        summary.row(&[fmt_f64(cfg.beam.wavelength), fmt_f64(wb), fmt_f64(mean), fmt_f64(spread)]);
        out.push(("divergence_summary.csv".into(), summary.into_bytes()));
    }
    Ok(out)
}

/// Seed of the count image for charge `l`.
pub fn charge_seed(seed: u64, l: i32) -> u64 {
    mix64(seed ^ mix64(l as i64 as u64 ^ 0x9e37_79b9_7f4a_7c15))
}

fn coincidence_imaging(cfg: &ExperimentConfig, hash: &str) -> Result<Outputs, BenchError> {
    let setup = decode_setup(cfg)?;
    let lambda = cfg.beam.wavelength;
    let grid = setup.grid(lambda).map_err(BenchError::core("coincidence_imaging grid"))?;
    let mut det = cfg.detector;
    det.pixels = (grid.nx, grid.ny);
    let jobs: Vec<(usize, i32)> = cfg.charges.iter().copied().enumerate().collect();
    let results = jobs
        .par_iter()
        .map(|&(k, l)| {
            let ctx = format!("coincidence_imaging l={l}");
            let signal = herald_projection(l);
            let field = synthesize(&grid, &setup.beam(signal)).map_err(BenchError::core(&ctx))?;
            let pdf = match cfg.imaging_target {
                ImagingTarget::TiltedLens => intensity(
                    &twistbench_core::tilted_lens_transform(&field, &setup.lens)
                        .map_err(BenchError::core(&ctx))?,
                ),
                ImagingTarget::Direct => intensity(&field),
            };
            let seed = charge_seed(cfg.seed, l);
            let frames = cfg.frames_for(k);
            let counts = accumulate_frames(&pdf, frames, &det, &cfg.coincidence, seed)
                .map_err(BenchError::core(&ctx))?;
            let cmp = compare_to_pdf(&counts, &pdf).map_err(BenchError::core(&ctx))?;
            let analysis = match cfg.imaging_target {
                ImagingTarget::TiltedLens => Some(
                    count_lobes(&counts.to_image(grid.dx).map_err(BenchError::core(&ctx))?, &LobeParams::default())
                        .map_err(BenchError::core(&ctx))?,
                ),
                ImagingTarget::Direct => None,
            };
            Ok((l, counts, cmp, analysis))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let mut out = Outputs::new();
    let mut csv = Csv::new(&[
        "l",
        "frames",
        "seed",
        "total_counts",
        "l1_distance",
        "lobe_count",
        "orientation_deg",
        "charge_estimate",
        "confidence",
        "low_confidence",
        "image",
    ]);
    for (l, counts, cmp, analysis) in results {
        let CountImage {
            frames_accumulated,
            rng_seed,
            ..
        } = counts;
        let name = format!("coincidence_{}.pgm", charge_tag(l));
        let mut row = vec![
            signed(l),
            frames_accumulated.to_string(),
            rng_seed.to_string(),
            cmp.total_counts.to_string(),
            fmt_f64(cmp.l1_distance),
        ];
        match &analysis {
            Some(a) => row.extend(lobe_cells(a)),
            None => row.extend(std::iter::repeat_n("NA".to_string(), 5)),
        }
        row.push(name.clone());
        csv.row(&row);
        let extra = [
            ("seed", rng_seed.to_string()),
            ("frames", frames_accumulated.to_string()),
        ];
        out.push((sidecar_name(&name), image_sidecar(cfg, hash, l, grid.dx, &extra)));
        out.push((name, encode_pgm16(&counts.counts)?));
    }
    out.push(("coincidence.csv".into(), csv.into_bytes()));
    Ok(out)
}

/// Result of decoding one image file.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub analysis: LobeAnalysis,
    pub pitch: f64,
}

impl Decoded {
    /// `charge=+9 n=10 orientation=+47deg confidence=0.61`
    pub fn summary(&self) -> String {
        let a = &self.analysis;
        let mut s = format!(
            "charge={} n={} orientation={:+.0}deg confidence={:.2}",
            signed(a.charge_estimate),
            a.lobe_count,
            a.orientation_degrees(),
            a.confidence
        );
        if !a.is_confident() {
            s.push_str(" low-confidence");
        }
        s
    }
}

/// Pixel pitch from `pitch`, or else the image's sidecar.
fn resolve_pitch(path: &Path, pitch: Option<f64>) -> Result<f64, BenchError> {
    if let Some(p) = pitch {
        return Ok(p);
    }
    let meta = sidecar_path(path);
    if !meta.exists() {
        return Err(BenchError::Usage(format!(
            "no --pitch given and no sidecar {} found",
            meta.display()
        )));
    }
    read_sidecar(&meta)?
        .into_iter()
        .find(|(k, _)| k == "pitch_m")
        .and_then(|(_, v)| v.parse().ok())
        .filter(|p: &f64| *p > 0.0)
        .ok_or_else(|| BenchError::Usage(format!("{} holds no valid pitch_m", meta.display())))
}

pub fn decode_image(path: &Path, pitch: Option<f64>) -> Result<Decoded, BenchError> {
    let pitch = resolve_pitch(path, pitch)?;
    let image: RealImage = read_pgm(path, pitch)?;
    let analysis = count_lobes(&image, &LobeParams::default())
        .map_err(BenchError::core(format!("decode {}", path.display())))?;
    Ok(Decoded { analysis, pitch })
}

/// Runs the configured scenario and writes its outputs and manifest.
///
/// Returns the manifest together with any text meant for stdout.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<(RunManifest, String), BenchError> {
    let start = Instant::now();
    let hash = config_hash(cfg);
    let mut stdout = String::new();
    let outputs = match cfg.scenario {
        Scenario::TiltedLens => tilted_lens(cfg, &hash)?,
        Scenario::Mzi => mzi(cfg, &hash)?,
        Scenario::Hom => hom(cfg)?,
        Scenario::Divergence => divergence(cfg)?,
        Scenario::CoincidenceImaging => coincidence_imaging(cfg, &hash)?,
        Scenario::Decode => {
            let path = cfg.decode_image.as_deref().expect("validated");
            let d = decode_image(path, cfg.decode_pitch)?;
            stdout = d.summary();
            let mut csv = Csv::new(&["image", "lobe_count", "orientation_deg", "charge_estimate", "confidence", "low_confidence"]);
            let mut row = vec![path.display().to_string()];
            row.extend(lobe_cells(&d.analysis));
            csv.row(&row);
            vec![("decode.csv".into(), csv.into_bytes())]
        }
    };
    let mut files = Vec::with_capacity(outputs.len());
    for (name, data) in &outputs {
        write_file(&cfg.output_dir.join(name), data)?;
        files.push(OutputFile {
            path: name.clone(),
            sha256: sha256_hex(data),
            bytes: data.len(),
        });
    }
    let manifest = RunManifest {
        scenario: cfg.scenario.name().into(),
        config_hash: hash,
        tool_version: TOOL_VERSION.into(),
        seed: cfg.seed,
        files,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(&cfg.output_dir.join(MANIFEST_NAME), &json)?;
    Ok((manifest, stdout))
}

pub fn beam_kind_name(kind: BeamKind) -> &'static str {
    match kind {
        BeamKind::PhaseVortex => "phase_vortex",
        BeamKind::LaguerreGauss => "laguerre_gauss",
        BeamKind::Gaussian => "gaussian",
    }
}
