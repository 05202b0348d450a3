use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use twistbench_core::metrology::*;
use twistbench_core::*;

const LAMBDA: f64 = 405e-9;

fn winding_oracle(setup: &DecodeSetup, l: i32) -> i32 {
    let f = synthesize(&setup.grid(LAMBDA).unwrap(), &setup.beam(l)).unwrap();
    // a phase vortex is bright near its axis, an LG mode on its ring
    let radius = setup.beam(l).ring_radius().max(0.5 * setup.w0);
    phase_winding_charge(&f, radius).unwrap()
}

#[test]
fn decoded_charge_matches_phase_winding() {
    for kind in [BeamKind::PhaseVortex, BeamKind::LaguerreGauss] {
        let setup = DecodeSetup::new(kind, LAMBDA);
        let grid = setup.grid(LAMBDA).unwrap();
        for l in [-14, -9, -5, -1, 0, 1, 5, 9, 14] {
            let f = synthesize(&grid, &setup.beam(l)).unwrap();
            let decoded = estimate_charge(&f, &setup.lens).unwrap();
            assert_eq!(decoded, winding_oracle(&setup, l), "{kind:?} l={l}");
            assert_eq!(decoded, l);
        }
    }
}

#[test]
fn conjugate_field_decodes_to_opposite_charge() {
    let setup = DecodeSetup::new(BeamKind::PhaseVortex, LAMBDA);
    let grid = setup.grid(LAMBDA).unwrap();
    for l in [2, 7, -11] {
        let f = synthesize(&grid, &setup.beam(l)).unwrap();
        let a = estimate_charge(&f, &setup.lens).unwrap();
        let b = estimate_charge(&f.conjugate(), &setup.lens).unwrap();
        assert_eq!(a, -b, "l={l}");
    }
}

#[test]
fn opposite_charges_give_mirror_images() {
    let setup = DecodeSetup::new(BeamKind::LaguerreGauss, LAMBDA);
    for l in [1, 6] {
        let plus = setup.focal_image(l, LAMBDA).unwrap();
        let minus = setup.focal_image(-l, LAMBDA).unwrap();
        // column j sits at x = (j - n/2) dx, so x -> -x maps j to n - j
        let n = plus.nx();
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..plus.ny() {
            for j in 1..n {
                diff += (plus.data[(i, j)] - minus.data[(i, n - j)]).powi(2);
                norm += plus.data[(i, j)].powi(2);
            }
        }
        assert!((diff / norm).sqrt() < 1e-6, "l={l}: {}", (diff / norm).sqrt());
    }
}

#[test]
fn focused_gaussian_is_one_low_confidence_spot() {
    let setup = DecodeSetup::new(BeamKind::LaguerreGauss, LAMBDA);
    let a = count_lobes(&setup.focal_image(0, LAMBDA).unwrap(), &LobeParams::default()).unwrap();
    assert_eq!((a.lobe_count, a.charge_estimate), (1, 0));
    assert!(!a.is_confident());
}

fn l9_image() -> &'static RealImage {
    static IMG: OnceLock<RealImage> = OnceLock::new();
    IMG.get_or_init(|| {
        DecodeSetup::new(BeamKind::PhaseVortex, LAMBDA)
            .focal_image(9, LAMBDA)
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lobe_count_ignores_intensity_scale(exp in -8.0f64..8.0) {
        let img = l9_image();
        let base = count_lobes(img, &LobeParams::default()).unwrap();
        let scaled = count_lobes(&img.scaled(10f64.powf(exp)), &LobeParams::default()).unwrap();
        prop_assert_eq!(base.lobe_count, scaled.lobe_count);
        prop_assert_eq!(base.charge_estimate, scaled.charge_estimate);
        prop_assert_eq!(base.charge_estimate, 9);
    }
}

#[test]
fn ring_of_lg2_at_waist() {
    let g = make_grid(512, 512, 14e-3, 810e-9).unwrap();
    let f = synthesize(&g, &BeamSpec::laguerre_gauss(1e-3, 2, 0)).unwrap();
    let p = ring_profile(&intensity(&f)).unwrap();
    assert!((p.r_max - 1e-3).abs() <= 0.5 * g.dx, "{}", p.r_max);
    let f = synthesize(&g, &BeamSpec::gaussian(1e-3)).unwrap();
    assert_eq!(ring_profile(&intensity(&f)).unwrap().r_max, 0.0);
}

/// Brute-force ring radius: mean intensity of all pixels grouped by their
/// rounded distance from the intensity centroid.
fn pixel_binned_ring_radius(img: &RealImage) -> f64 {
    let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ((i, j), &v) in img.data.indexed_iter() {
        s += v;
        sx += v * j as f64;
        sy += v * i as f64;
    }
    let (cj, ci) = (sx / s, sy / s);
    let mut bins: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for ((i, j), &v) in img.data.indexed_iter() {
        let r = ((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt().round() as usize;
        let e = bins.entry(r).or_default();
        e.0 += v;
        e.1 += 1;
    }
    let (r, _) = bins
        .iter()
        .map(|(&r, &(sum, n))| (r, sum / n as f64))
        .fold((0, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best });
    r as f64 * img.dx
}

#[test]
fn ring_profile_agrees_with_pixel_scan() {
    let g = make_grid(512, 512, 12e-3, 810e-9).unwrap();
    let f = synthesize(&g, &BeamSpec::phase_vortex(0.6e-3, 3)).unwrap();
    let img = intensity(&propagate(&f, 0.2).unwrap());
    let r = ring_profile(&img).unwrap().r_max;
    let oracle = pixel_binned_ring_radius(&img);
    assert!((r - oracle).abs() <= g.dx, "{r} vs {oracle}");
}

#[test]
fn blank_and_clipped_images_are_rejected() {
    let blank = RealImage::square(ndarray::Array2::zeros((64, 64)), 1e-5).unwrap();
    assert!(matches!(ring_profile(&blank), Err(Error::DegenerateImage(_))));
    assert!(matches!(count_lobes(&blank, &LobeParams::default()), Err(Error::NoLobes(_))));
    let flat = RealImage::square(ndarray::Array2::from_elem((64, 64), 1.0), 1e-5).unwrap();
    assert!(ring_profile(&flat).is_err());
}

fn geometry(kind: BeamKind) -> DivergenceGeometry {
    DivergenceGeometry {
        kind,
        w0: 0.5e-3,
        focal_length: 0.5,
        distances: (0..8).map(|k| 0.05 * k as f64).collect(),
        grid_size: 1024,
        window: None,
    }
}

#[test]
fn divergence_grows_with_order() {
    for kind in [BeamKind::PhaseVortex, BeamKind::LaguerreGauss] {
        let geom = geometry(kind);
        let mut slopes = vec![];
        for l in [1, 3, 5] {
            let series = divergence_series(l, 810e-9, &geom).unwrap();
            assert_eq!(series.len(), 8);
            assert!(series.windows(2).all(|w| w[1].1 > w[0].1), "{kind:?} l={l}: {series:?}");
            slopes.push(fit_divergence(&series).unwrap().slope);
        }
        assert!(slopes.windows(2).all(|w| w[1] > w[0]), "{kind:?}: {slopes:?}");
        if kind == BeamKind::PhaseVortex {
            assert!(r_squared(&[1.0, 3.0, 5.0], &slopes) >= 0.98, "{slopes:?}");
        }
    }
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn same_wavelength_ratio_is_one() {
    let geom = geometry(BeamKind::PhaseVortex);
    let s = divergence_ratio_study(&[1, 3], 810e-9, 810e-9, &geom).unwrap();
    assert!(s.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-6));
    let single = divergence_ratio_study(&[1], 810e-9, 405e-9, &geom).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert_eq!(single.spread, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_model_parameters(r0 in 1e-4f64..5e-3, zr in 0.05f64..2.0) {
        let series: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let z = k as f64 * zr / 4.0;
                (z, r0 * (1.0 + (z / zr).powi(2)).sqrt())
            })
            .collect();
        let fit = fit_divergence(&series).unwrap();
        prop_assert!((fit.r0 / r0 - 1.0).abs() < 1e-6);
        prop_assert!((fit.z_r / zr - 1.0).abs() < 1e-6);
        prop_assert!((fit.slope - r0 / zr).abs() <= 1e-6 * r0 / zr);
    }
}
