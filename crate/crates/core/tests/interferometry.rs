use std::f64::consts::{LN_2, PI};

use proptest::prelude::*;
use twistbench_core::interferometry::*;

fn model(v: f64, kind: SpectrumKind) -> HomModel {
    HomModel {
        wavelength: 810e-9,
        spectral_fwhm: 0.85e-9,
        visibility: v,
        baseline: 1000.0,
        spectrum_kind: kind,
    }
}

/// `|∫ S(nu) exp(2 pi i nu delta / c) dnu| / ∫ S` by the midpoint rule over
/// the detuning, straight from the spectral intensity.
fn overlap_by_quadrature(m: &HomModel, delta: f64) -> f64 {
    let dnu = SPEED_OF_LIGHT * m.spectral_fwhm / (m.wavelength * m.wavelength);
    let tau = delta / SPEED_OF_LIGHT;
    let spectrum = |nu: f64| match m.spectrum_kind {
        SpectrumKind::Gaussian => (-4.0 * LN_2 * (nu / dnu).powi(2)).exp(),
        SpectrumKind::Sinc2 => {
            // sinc^2(x) is one half at x = 1.3915573...
            let x = 2.0 * 1.391_557_377_276_34 * nu / dnu;
            if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) }
        }
    };
    let span = match m.spectrum_kind {
        SpectrumKind::Gaussian => 8.0 * dnu,
        SpectrumKind::Sinc2 => 4000.0 * dnu,
    };
    let n = 2_000_000;
    let h = 2.0 * span / n as f64;
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let nu = -span + (k as f64 + 0.5) * h;
        let s = spectrum(nu);
        let ph = 2.0 * PI * nu * tau;
        re += s * ph.cos();
        im += s * ph.sin();
        norm += s;
    }
    (re * re + im * im).sqrt() / norm
}

#[test]
fn overlap_matches_spectral_quadrature() {
    for (kind, tol) in [(SpectrumKind::Gaussian, 1e-9), (SpectrumKind::Sinc2, 2e-4)] {
        let m = model(1.0, kind);
        for delta in [0.0, 100e-6, 340e-6, 600e-6, 900e-6] {
            let got = m.overlap(delta);
            let want = overlap_by_quadrature(&m, delta);
            assert!((got - want).abs() < tol, "{kind:?} {delta}: {got} vs {want}");
        }
    }
}

#[test]
fn dip_width_near_measured_760_um() {
    let mut best = f64::INFINITY;
    for kind in [SpectrumKind::Gaussian, SpectrumKind::Sinc2] {
        let m = model(0.9, kind);
        let fwhm = m.dip_fwhm();
        let delays = HomModel::delay_grid(2.5 * fwhm, 2001);
        let measured = dip_metrics(&hom_dip(&m, &delays).unwrap()).unwrap().fwhm;
        best = best.min((measured / 760e-6 - 1.0).abs());
    }
    assert!(best <= 0.15, "closest kind is {:.1}% off", 100.0 * best);
}

#[test]
fn gaussian_width_has_closed_form() {
    let m = model(0.5, SpectrumKind::Gaussian);
    let want = 4.0 * LN_2 / PI * 810e-9 * 810e-9 / 0.85e-9;
    assert!((m.dip_fwhm() / want - 1.0).abs() < 1e-12);
    assert!((m.dip_fwhm() - 681e-6).abs() < 1e-6);
}

#[test]
fn metrics_invert_the_dip() {
    for kind in [SpectrumKind::Gaussian, SpectrumKind::Sinc2] {
        for k in 1..=9 {
            let v = k as f64 / 10.0;
            let m = model(v, kind);
            let delays = HomModel::delay_grid(2.5 * m.dip_fwhm(), 1001);
            let step = delays[1] - delays[0];
            let d = dip_metrics(&hom_dip(&m, &delays).unwrap()).unwrap();
            assert!((d.visibility - v).abs() < 1e-6, "{kind:?} V={v}: {}", d.visibility);
            assert!((d.fwhm - m.dip_fwhm()).abs() <= step, "{kind:?} V={v}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dip_is_even_in_delay(v in 0.0f64..=1.0, d in 0.0f64..3e-3, sinc in any::<bool>()) {
        let kind = if sinc { SpectrumKind::Sinc2 } else { SpectrumKind::Gaussian };
        let c = hom_dip(&model(v, kind), &[-d, d]).unwrap();
        prop_assert_eq!(c.coincidences[0], c.coincidences[1]);
        prop_assert!(c.coincidences[0] >= 0.0);
    }
}

#[test]
fn fork_order_is_twice_the_charge() {
    let setup = MziSetup::default();
    for l in 0..=7 {
        let a = setup.fork_order(l, ArmParity::OppositeSign).unwrap();
        assert_eq!(a.fork_order, 2 * l as usize, "l={l}: {a:?}");
        assert_eq!(a.cut_offsets.0, -a.cut_offsets.1);
    }
    for l in [-7, -4, -1] {
        let a = setup.fork_order(l, ArmParity::OppositeSign).unwrap();
        assert_eq!(a.fork_order, 2 * l.unsigned_abs() as usize, "l={l}");
    }
}

#[test]
fn coaxial_same_charge_has_no_fork() {
    let setup = MziSetup::default();
    for l in [1, 4, 7] {
        let a = setup.fork_order(l, ArmParity::SameSign).unwrap();
        assert_eq!(a.fork_order, 0, "l={l}");
    }
}

#[test]
fn fork_order_ignores_scale_and_phase() {
    let setup = MziSetup::default();
    let grid = setup.grid().unwrap();
    let offset = setup.cut_offset(&grid);
    let params = FringeParams::default();
    for phase_offset in [0.0, 0.7, 2.0, PI] {
        let cfg = MziConfig {
            phase_offset,
            ..setup.config(&grid, ArmParity::OppositeSign)
        };
        let img = setup.interferogram(4, &cfg).unwrap();
        for scale in [1e-6, 1.0, 3e4] {
            let a = count_fringe_difference(&img.scaled(scale), offset, &params).unwrap();
            assert_eq!(a.fork_order, 8, "phase {phase_offset} scale {scale}");
        }
    }
}

#[test]
fn plane_wave_reference_counts_the_charge() {
    let setup = MziSetup::default();
    let grid = setup.grid().unwrap();
    let cfg = MziConfig {
        reference_waist: Some(3.0 * setup.w0),
        ..setup.config(&grid, ArmParity::SameSign)
    };
    for l in [0, 1, 3] {
        let img = setup.interferogram(l, &cfg).unwrap();
        let a = count_fringe_difference(&img, setup.cut_offset(&grid), &FringeParams::default())
            .unwrap();
        assert_eq!(a.fork_order, l as usize, "l={l}");
    }
}
