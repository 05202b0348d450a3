use std::f64::consts::PI;

use proptest::prelude::*;
use twistbench_core::metrology::ring_profile;
use twistbench_core::propagation::check_field_sampling;
use twistbench_core::*;

const LAMBDA: f64 = 810e-9;
const W0: f64 = 0.4e-3;

fn wide_grid() -> GridSpec {
    make_grid(1024, 1024, 23.9e-3, LAMBDA).unwrap()
}

fn rayleigh() -> f64 {
    PI * W0 * W0 / LAMBDA
}

/// Gaussian radius `w = 2 sigma` from the intensity second moments.
fn second_moment_radius(img: &RealImage) -> f64 {
    let (mut s, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((i, j), &v) in img.data.indexed_iter() {
        let (x, y) = (img.x_of(j as f64), img.y_of(i as f64));
        s += v;
        sx += v * x;
        sy += v * y;
        sxx += v * x * x;
        syy += v * y * y;
    }
    let vx = sxx / s - (sx / s).powi(2);
    let vy = syy / s - (sy / s).powi(2);
    (vx + vy).sqrt() * 2f64.sqrt()
}

#[test]
fn power_is_conserved() {
    let g = make_grid(512, 512, 8e-3, LAMBDA).unwrap();
    for spec in [
        BeamSpec::gaussian(0.5e-3),
        BeamSpec::laguerre_gauss(0.5e-3, 3, 0),
        BeamSpec::phase_vortex(0.5e-3, -4),
    ] {
        let f = synthesize(&g, &spec).unwrap();
        for z in [0.0, 0.01, 0.1] {
            let p = propagate(&f, z).unwrap().total_power();
            assert!((p / f.total_power() - 1.0).abs() < 1e-10, "{spec:?} z={z}: {p}");
        }
    }
}

#[test]
fn gaussian_radius_at_rayleigh_length() {
    let g = wide_grid();
    let f = synthesize(&g, &BeamSpec::gaussian(W0)).unwrap();
    let w = second_moment_radius(&intensity(&propagate(&f, rayleigh()).unwrap()));
    let want = 2f64.sqrt() * W0;
    assert!((w / want - 1.0).abs() < 5e-3, "w(z_R) = {w}, want {want}");
}

#[test]
fn lg_ring_radius_follows_beam_width() {
    let g = wide_grid();
    let z = rayleigh();
    let wz = W0 * (1.0 + (z / rayleigh()).powi(2)).sqrt();
    for l in 1..=9 {
        let f = synthesize(&g, &BeamSpec::laguerre_gauss(W0, l, 0)).unwrap();
        let r = ring_profile(&intensity(&propagate(&f, z).unwrap())).unwrap().r_max;
        let want = (l as f64 / 2.0).sqrt() * wz;
        assert!((r / want - 1.0).abs() < 0.01, "l={l}: r={r} want {want}");
    }
}

#[test]
fn charge_survives_propagation() {
    let g = wide_grid();
    let z = 0.3;
    let wz = W0 * (1.0 + (z / rayleigh()).powi(2)).sqrt();
    for l in [-14, -9, -3, -1, 1, 2, 7, 14] {
        let f = synthesize(&g, &BeamSpec::laguerre_gauss(W0, l, 0)).unwrap();
        let out = propagate(&f, z).unwrap();
        let loop_radius = (l.abs() as f64 / 2.0).sqrt() * wz;
        assert_eq!(phase_winding_charge(&out, loop_radius).unwrap(), l);
    }
}

#[test]
fn check_sampling_reports_absurd_distance() {
    let g = make_grid(1024, 1024, 20e-3, 405e-9).unwrap();
    assert!(check_sampling(&g, 0.1).is_ok());
    assert!(check_sampling(&g, 0.0).is_ok());
    let v = check_sampling(&g, 1e6).unwrap_err();
    assert!(v.excess() > 1.0);
}

#[test]
fn field_sampling_guard_trips_before_wraparound() {
    let g = make_grid(256, 256, 4e-3, LAMBDA).unwrap();
    let f = synthesize(&g, &BeamSpec::gaussian(0.2e-3)).unwrap();
    assert!(check_field_sampling(&f, 0.01).is_ok());
    assert!(matches!(propagate(&f, 0.3), Err(Error::Sampling(_))));
}

fn small_field(l: i32, vortex: bool) -> ComplexField {
    let g = make_grid(256, 256, 6e-3, LAMBDA).unwrap();
    let spec = if vortex {
        BeamSpec::phase_vortex(0.3e-3, l)
    } else {
        BeamSpec::laguerre_gauss(0.3e-3, l, 0)
    };
    synthesize(&g, &spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagation_is_unitary(l in -5i32..=5, vortex in any::<bool>(), z in 0.0f64..0.05) {
        let f = small_field(l, vortex);
        let p = propagate(&f, z).unwrap().total_power();
        prop_assert!((p / f.total_power() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hops_compose(l in -5i32..=5, a in 0.0f64..0.025, b in 0.0f64..0.025) {
        let f = small_field(l, false);
        let two = propagate(&propagate(&f, a).unwrap(), b).unwrap();
        let one = propagate(&f, a + b).unwrap();
        prop_assert!(two.relative_l2(&one) < 1e-8, "{}", two.relative_l2(&one));
    }

    #[test]
    fn negative_hop_undoes_positive(l in -5i32..=5, z in 0.0f64..0.04) {
        let f = small_field(l, true);
        let back = propagate(&propagate(&f, z).unwrap(), -z).unwrap();
        prop_assert!(back.relative_l2(&f) < 1e-8);
    }
}
