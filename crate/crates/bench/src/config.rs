//! Experiment configuration: INI-style sections of `key = value` lines.
//!
//! Parsing is strict. Unknown sections or keys, duplicates, malformed
//! numbers and invariant violations are all collected and reported
//! together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use twistbench_core::imaging::{CoincidenceConfig, DetectorConfig, PAIRS_PER_SECOND_PER_MW};
use twistbench_core::interferometry::{
    ArmParity, HomModel, SpectrumKind, DEFAULT_FRINGE_PERIOD_PX, MIN_FRINGE_PERIOD_PX,
};
use twistbench_core::metrology::{DECODE_FOCAL_LENGTH, DECODE_TILT_DEGREES};
use twistbench_core::propagation::TiltedLensElement;
use twistbench_core::{make_grid, BeamKind, BeamSpec};

use crate::units::{parse_int, parse_int_list, parse_quantity, parse_quantity_list, Dim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    TiltedLens,
    Mzi,
    Hom,
    Divergence,
    CoincidenceImaging,
    Decode,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::TiltedLens => "tilted_lens",
            Scenario::Mzi => "mzi",
            Scenario::Hom => "hom",
            Scenario::Divergence => "divergence",
            Scenario::CoincidenceImaging => "coincidence_imaging",
            Scenario::Decode => "decode",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "tilted_lens" => Scenario::TiltedLens,
            "mzi" => Scenario::Mzi,
            "hom" => Scenario::Hom,
            "divergence" => Scenario::Divergence,
            "coincidence_imaging" => Scenario::CoincidenceImaging,
            "decode" => Scenario::Decode,
            _ => return Err(format!("unknown scenario '{s}'")),
        })
    }
}

/// What the camera sees in the coincidence imaging scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImagingTarget {
    /// Back focal plane of the tilted lens (lobes).
    TiltedLens,
    /// The beam itself at its source plane.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub kind: BeamKind,
    /// `None` picks the scenario default.
    pub w0: Option<f64>,
    pub wavelength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub size: usize,
    /// `None` picks the smallest admissible window.
    pub window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticsConfig {
    pub focal_length: f64,
    pub tilt: f64,
    pub astig_axis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MziSection {
    pub parity: ArmParity,
    pub fringe_period_px: f64,
    pub cut_offset: Option<f64>,
    pub phase_offset: f64,
    pub displacement: f64,
    pub reference_waist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomSection {
    pub spectral_fwhm: f64,
    pub spectrum: SpectrumKind,
    pub baseline: f64,
    /// (pump power in mW, visibility)
    pub visibilities: Vec<(f64, f64)>,
    pub points: usize,
    pub half_span: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub beam: BeamConfig,
    pub grid: GridConfig,
    pub optics: OpticsConfig,
    pub mzi: MziSection,
    pub hom: HomSection,
    pub detector: DetectorConfig,
    pub coincidence: CoincidenceConfig,
    pub pump_power_mw: f64,
    pub charges: Vec<i32>,
    pub distances: Vec<f64>,
    pub frames: Vec<u32>,
    pub imaging_target: ImagingTarget,
    pub compare_wavelength: Option<f64>,
    pub decode_image: Option<PathBuf>,
    pub decode_pitch: Option<f64>,
}

/// Every problem found in a config document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} config error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["scenario", "seed", "output_dir"]),
    ("beam", &["kind", "w0", "l", "wavelength"]),
    ("grid", &["size", "window"]),
    ("optics", &["focal_length", "tilt", "astig_axis"]),
    (
        "mzi",
        &["parity", "fringe_period_px", "cut_offset", "phase_offset", "displacement", "reference_waist"],
    ),
    ("hom", &["spectral_fwhm", "spectrum", "baseline", "visibilities", "points", "half_span"]),
    ("detector", &["quantum_efficiency", "dark_counts", "exposure"]),
    (
        "coincidence",
        &["pump_power", "pairs_per_mw", "herald_efficiency", "window", "trigger_latency"],
    ),
    ("sweep", &["l", "z", "frames"]),
    ("imaging", &["target"]),
    ("divergence", &["compare_wavelength"]),
    ("decode", &["image", "pitch"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Doc {
    entries: BTreeMap<(String, String), Entry>,
    errors: Vec<String>,
}

impl Doc {
    fn parse(text: &str) -> Self {
        let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
        let mut errors = vec![];
        let mut section: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let s = raw.split(['#', ';']).next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(name) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !KNOWN.iter().any(|(sec, _)| *sec == name) {
                    errors.push(format!("line {line}: unknown section [{name}]"));
                }
                section = Some(name);
                continue;
            }
            let Some((key, value)) = s.split_once('=') else {
                errors.push(format!("line {line}: expected 'key = value', got '{s}'"));
                continue;
            };
            let Some(sec) = section.clone() else {
                errors.push(format!("line {line}: key outside of any section"));
                continue;
            };
            let key = key.trim().to_string();
            let known = KNOWN
                .iter()
                .find(|(name, _)| *name == sec)
                .map_or(true, |(_, keys)| keys.contains(&key.as_str()));
            if !known {
                errors.push(format!("line {line}: unknown key '{key}' in [{sec}]"));
                continue;
            }
            if let Some(prev) = entries.get(&(sec.clone(), key.clone())) {
                errors.push(format!(
                    "line {line}: duplicate key '{key}' in [{sec}] (first on line {})",
                    prev.line
                ));
                continue;
            }
            entries.insert(
                (sec, key),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Doc { entries, errors }
    }

    /// Parses `[section] key` with `f` if present.
    fn get<T>(&mut self, section: &str, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Option<T> {
        let e = self.entries.get(&(section.to_string(), key.to_string()))?;
        match f(&e.value) {
            Ok(v) => Some(v),
            Err(msg) => {
                let line = e.line;
                self.errors.push(format!("line {line}: [{section}] {key}: {msg}"));
                None
            }
        }
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.entries.contains_key(&(section.to_string(), key.to_string()))
    }

    fn quantity(&mut self, section: &str, key: &str, dim: Dim) -> Option<f64> {
        self.get(section, key, |v| parse_quantity(v, dim))
    }

    fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }
}

fn parse_bool_none<T>(v: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, String> {
    if v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn parse_kind(v: &str) -> Result<BeamKind, String> {
    match v {
        "phase_vortex" => Ok(BeamKind::PhaseVortex),
        "laguerre_gauss" | "lg" => Ok(BeamKind::LaguerreGauss),
        "gaussian" => Ok(BeamKind::Gaussian),
        _ => Err(format!("unknown beam kind '{v}' (phase_vortex, laguerre_gauss, gaussian)")),
    }
}

fn parse_visibilities(v: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = vec![];
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (p, vis) = item
            .split_once(':')
            .ok_or_else(|| format!("expected 'power: visibility', got '{item}'"))?;
        let watts = parse_quantity(p, Dim::Power)?;
        let vis = parse_quantity(vis, Dim::Plain)?;
        out.push((watts * 1e3, vis));
    }
    if out.is_empty() {
        return Err("visibility table is empty".into());
    }
    Ok(out)
}

/// Measured HOM visibility against pump power (mW) for the lab source.
pub const HOM_VISIBILITY_TABLE: [(f64, f64); 4] = [(1.0, 0.90), (5.0, 0.82), (10.0, 0.737), (15.0, 0.66)];

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut d = Doc::parse(text);

    let scenario = match d.get("run", "scenario", Scenario::parse) {
        Some(s) => Some(s),
        None => {
            if !d.has("run", "scenario") {
                d.error("missing required key [run] scenario");
            }
            None
        }
    };
    let seed = d.get("run", "seed", |v| parse_int::<u64>(v, "seed")).unwrap_or(1);
    let output_dir = d
        .get("run", "output_dir", |v| Ok(PathBuf::from(v)))
        .unwrap_or_else(|| PathBuf::from("twistbench-output"));

    let kind = d.get("beam", "kind", parse_kind).unwrap_or(BeamKind::PhaseVortex);
    let w0 = d.quantity("beam", "w0", Dim::Length);
    let beam_l = d.get("beam", "l", |v| parse_int::<i32>(v, "charge"));
    let wavelength = d.quantity("beam", "wavelength", Dim::Length).unwrap_or(810e-9);

    let default_size = if scenario == Some(Scenario::Mzi) { 2048 } else { 1024 };
    let size = d.get("grid", "size", |v| parse_int::<usize>(v, "grid size")).unwrap_or(default_size);
    let window = d.quantity("grid", "window", Dim::Length);

    let default_f = if scenario == Some(Scenario::Divergence) { 0.5 } else { DECODE_FOCAL_LENGTH };
    let optics = OpticsConfig {
        focal_length: d.quantity("optics", "focal_length", Dim::Length).unwrap_or(default_f),
        tilt: d
            .quantity("optics", "tilt", Dim::Angle)
            .unwrap_or(DECODE_TILT_DEGREES.to_radians()),
        astig_axis: d
            .quantity("optics", "astig_axis", Dim::Angle)
            .unwrap_or(std::f64::consts::FRAC_PI_2),
    };

    let mzi = MziSection {
        parity: d
            .get("mzi", "parity", |v| match v {
                "opposite_sign" => Ok(ArmParity::OppositeSign),
                "same_sign" => Ok(ArmParity::SameSign),
                _ => Err(format!("unknown parity '{v}' (opposite_sign, same_sign)")),
            })
            .unwrap_or(ArmParity::OppositeSign),
        fringe_period_px: d
            .quantity("mzi", "fringe_period_px", Dim::Plain)
            .unwrap_or(DEFAULT_FRINGE_PERIOD_PX),
        cut_offset: d
            .get("mzi", "cut_offset", |v| parse_bool_none(v, |v| parse_quantity(v, Dim::Length)))
            .flatten(),
        phase_offset: d.quantity("mzi", "phase_offset", Dim::Angle).unwrap_or(0.0),
        displacement: d.quantity("mzi", "displacement", Dim::Length).unwrap_or(0.0),
        reference_waist: d
            .get("mzi", "reference_waist", |v| parse_bool_none(v, |v| parse_quantity(v, Dim::Length)))
            .flatten(),
    };

    let hom = HomSection {
        spectral_fwhm: d.quantity("hom", "spectral_fwhm", Dim::Length).unwrap_or(0.85e-9),
        spectrum: d
            .get("hom", "spectrum", |v| match v {
                "gaussian" => Ok(SpectrumKind::Gaussian),
                "sinc2" => Ok(SpectrumKind::Sinc2),
                _ => Err(format!("unknown spectrum '{v}' (gaussian, sinc2)")),
            })
            .unwrap_or(SpectrumKind::Gaussian),
        baseline: d.quantity("hom", "baseline", Dim::Plain).unwrap_or(1000.0),
        visibilities: d
            .get("hom", "visibilities", parse_visibilities)
            .unwrap_or_else(|| HOM_VISIBILITY_TABLE.to_vec()),
        points: d.get("hom", "points", |v| parse_int::<usize>(v, "points")).unwrap_or(1001),
        half_span: d
            .get("hom", "half_span", |v| parse_bool_none(v, |v| parse_quantity(v, Dim::Length)))
            .flatten(),
    };

    let mut detector = DetectorConfig::new(size, size);
    if let Some(q) = d.quantity("detector", "quantum_efficiency", Dim::Plain) {
        detector.quantum_efficiency = q;
    }
    if let Some(q) = d.quantity("detector", "dark_counts", Dim::Plain) {
        detector.dark_counts_per_frame = q;
    }
    if let Some(q) = d.quantity("detector", "exposure", Dim::Time) {
        detector.exposure = q;
    }

    let pump_power_mw = d.quantity("coincidence", "pump_power", Dim::Power).unwrap_or(0.01) * 1e3;
    let pairs_per_mw = d
        .quantity("coincidence", "pairs_per_mw", Dim::Plain)
        .unwrap_or(PAIRS_PER_SECOND_PER_MW);
    let mut coincidence = CoincidenceConfig::from_pump_power(pump_power_mw);
    coincidence.pair_rate = pairs_per_mw * pump_power_mw;
    if let Some(v) = d.quantity("coincidence", "herald_efficiency", Dim::Plain) {
        coincidence.herald_efficiency = v;
    }
    if let Some(v) = d.quantity("coincidence", "window", Dim::Time) {
        coincidence.coincidence_window = v;
    }
    if let Some(v) = d.quantity("coincidence", "trigger_latency", Dim::Time) {
        coincidence.trigger_latency = v;
    }

    let sweep_l = d.get("sweep", "l", |v| {
        parse_int_list(v, "charge")?
            .into_iter()
            .map(|l| i32::try_from(l).map_err(|_| format!("charge {l} out of range")))
            .collect::<Result<Vec<i32>, String>>()
    });
    let charges = match (beam_l, sweep_l) {
        (Some(_), Some(_)) => {
            d.error("give the charge either as [beam] l or as [sweep] l, not both");
            vec![]
        }
        (Some(l), None) => vec![l],
        (None, Some(ls)) => ls,
        (None, None) => vec![],
    };
    let distances = d
        .get("sweep", "z", |v| parse_quantity_list(v, Dim::Length))
        .unwrap_or_else(|| (0..8).map(|k| 0.05 * k as f64).collect());
    let frames = d
        .get("sweep", "frames", |v| {
            parse_int_list(v, "frames")?
                .into_iter()
                .map(|f| u32::try_from(f).ok().filter(|&f| f > 0).ok_or(format!("frames must be positive, got {f}")))
                .collect::<Result<Vec<u32>, String>>()
        })
        .unwrap_or_else(|| vec![30]);

    let imaging_target = d
        .get("imaging", "target", |v| match v {
            "tilted_lens" => Ok(ImagingTarget::TiltedLens),
            "direct" => Ok(ImagingTarget::Direct),
            _ => Err(format!("unknown target '{v}' (tilted_lens, direct)")),
        })
        .unwrap_or(ImagingTarget::TiltedLens);
    let compare_wavelength = if d.has("divergence", "compare_wavelength") {
        d.get("divergence", "compare_wavelength", |v| {
            parse_bool_none(v, |v| parse_quantity(v, Dim::Length))
        })
        .flatten()
    } else {
        Some(405e-9)
    };
    let decode_image = d.get("decode", "image", |v| Ok(PathBuf::from(v)));
    let decode_pitch = d.quantity("decode", "pitch", Dim::Length);

    let cfg = ExperimentConfig {
        scenario: scenario.unwrap_or(Scenario::TiltedLens),
        seed,
        output_dir,
        beam: BeamConfig { kind, w0, wavelength },
        grid: GridConfig { size, window },
        optics,
        mzi,
        hom,
        detector,
        coincidence,
        pump_power_mw,
        charges,
        distances,
        frames,
        imaging_target,
        compare_wavelength,
        decode_image,
        decode_pitch,
    };
    let mut errors = d.errors;
    if scenario.is_some() {
        validate(&cfg, &mut errors);
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

/// Module invariants, reported with the module that owns them.
fn validate(cfg: &ExperimentConfig, errors: &mut Vec<String>) {
    let s = cfg.scenario;
    let needs_charges = matches!(
        s,
        Scenario::TiltedLens | Scenario::Mzi | Scenario::Divergence | Scenario::CoincidenceImaging
    );
    if needs_charges && cfg.charges.is_empty() {
        errors.push(format!("scenario {} needs a charge: set [beam] l or [sweep] l", s.name()));
    }
    for &l in &cfg.charges {
        let spec = BeamSpec {
            kind: cfg.beam.kind,
            w0: cfg.beam.w0.unwrap_or(1e-3),
            l,
            p: 0,
        };
        if let Err(e) = spec.validate() {
            errors.push(format!("beam (field-core): {e}"));
        }
    }
    if cfg.beam.kind == BeamKind::Gaussian && cfg.charges.iter().any(|&l| l != 0) {
        errors.push("beam (field-core): a gaussian beam carries no charge".into());
    }
    if let Some(w0) = cfg.beam.w0 {
        if !(w0 > 0.0) {
            errors.push(format!("beam (field-core): w0 must be positive, got {w0}"));
        }
    }
    if let Err(e) = make_grid(cfg.grid.size, cfg.grid.size, cfg.grid.window.unwrap_or(1.0), cfg.beam.wavelength) {
        errors.push(format!("grid (field-core): {e}"));
    }
    if matches!(s, Scenario::TiltedLens | Scenario::CoincidenceImaging) {
        if let Err(e) = TiltedLensElement::new(cfg.optics.focal_length, cfg.optics.tilt, cfg.optics.astig_axis) {
            errors.push(format!("optics (optics-propagation): {e}"));
        }
    }
    if s == Scenario::Divergence && !(cfg.optics.focal_length > 0.0) {
        errors.push("optics (optics-propagation): focal length must be positive".into());
    }
    if s == Scenario::Divergence && cfg.distances.len() < 4 {
        errors.push("sweep (oam-metrology): a divergence fit needs at least 4 distances".into());
    }
    if s == Scenario::Mzi {
        if cfg.mzi.fringe_period_px < MIN_FRINGE_PERIOD_PX {
            errors.push(format!(
                "mzi (interferometry): fringe period {} px is below {MIN_FRINGE_PERIOD_PX} px",
                cfg.mzi.fringe_period_px
            ));
        }
        if cfg.beam.kind != BeamKind::PhaseVortex && cfg.beam.kind != BeamKind::LaguerreGauss {
            errors.push("mzi (interferometry): beam must carry a vortex".into());
        }
    }
    if s == Scenario::Hom {
        for &(p, v) in &cfg.hom.visibilities {
            let m = HomModel {
                wavelength: cfg.beam.wavelength,
                spectral_fwhm: cfg.hom.spectral_fwhm,
                visibility: v,
                baseline: cfg.hom.baseline,
                spectrum_kind: cfg.hom.spectrum,
            };
            if let Err(e) = m.validate() {
                errors.push(format!("hom (interferometry): {p} mW: {e}"));
            }
        }
        if cfg.hom.points < 5 {
            errors.push("hom (interferometry): at least 5 delay points are needed".into());
        }
    }
    if s == Scenario::CoincidenceImaging {
        if let Err(e) = cfg.detector.validate() {
            errors.push(format!("detector (photon-imaging): {e}"));
        }
        if let Err(e) = cfg.coincidence.validate() {
            errors.push(format!("coincidence (photon-imaging): {e}"));
        }
        if cfg.frames.len() != 1 && cfg.frames.len() != cfg.charges.len() {
            errors.push(format!(
                "sweep (photon-imaging): {} frame counts for {} charges",
                cfg.frames.len(),
                cfg.charges.len()
            ));
        }
    }
    if s == Scenario::Decode && cfg.decode_image.is_none() {
        errors.push("missing required key [decode] image".into());
    }
    if let Some(p) = cfg.decode_pitch {
        if !(p > 0.0) {
            errors.push("decode (bench-cli): pitch must be positive".into());
        }
    }
}

impl ExperimentConfig {
    /// Frames for the `k`-th charge of the sweep.
    pub fn frames_for(&self, k: usize) -> u32 {
        if self.frames.len() == 1 {
            self.frames[0]
        } else {
            self.frames[k]
        }
    }
}
