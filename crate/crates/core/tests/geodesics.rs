mod common;

use common::random_points;
use curvhom::families::{term, FamilySpec};
use curvhom::geodesics::{
    energy_along, exp_map, family_order, geodesic_symmetry, integrate_recursive, integrate_rk4, isometry_check,
    log_map, verify_triangular, QUADRATURE_TOLERANCE,
};
use curvhom::profile::{MultiProfile, ScalarProfile};

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn specs() -> Vec<FamilySpec> {
    let mut v = Vec::new();
    for k in [2, 3] {
        for fam in 1..=3 {
            v.push(FamilySpec::symmetric(fam, k).unwrap());
        }
        v.push(common::family1(k));
        v.push(common::family2(k));
        v.push(common::family3(k));
    }
    v
}

#[test]
fn triangular_order_holds_on_fifty_points() {
    for spec in specs() {
        let pts = random_points(spec.dim(), 11, 50, 2.0);
        verify_triangular(&spec, &family_order(&spec), &pts).unwrap();
    }
}

#[test]
fn recursive_agrees_with_rk4_to_t_ten() {
    for (n, spec) in specs().iter().enumerate() {
        let dim = spec.dim();
        let pts = random_points(dim, 100 + n as u64, 10, 1.0);
        let vels = random_points(dim, 200 + n as u64, 10, 0.15);
        for (p, v) in pts.iter().zip(&vels) {
            let rec = integrate_recursive(spec, p, v, 10.0, QUADRATURE_TOLERANCE).unwrap();
            let rk = integrate_rk4(spec, p, v, 10.0, 2e-3).unwrap();
            let (x0, v0) = rec.at(0.0).unwrap();
            assert!(max_dev(&x0, p) < 1e-12 && max_dev(&v0, v) < 1e-12);
            let worst = (0..=200)
                .map(|k| {
                    let t = k as f64 * 0.05;
                    max_dev(&rec.position(t).unwrap(), &rk.position(t).unwrap())
                })
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "{spec:?} at {p:?}: {worst:e}");
        }
    }
}

#[test]
fn exp_log_round_trip_twenty_pairs() {
    for (n, spec) in specs().iter().enumerate() {
        let dim = spec.dim();
        let ps = random_points(dim, 300 + n as u64, 20, 1.0);
        let qs = random_points(dim, 400 + n as u64, 20, 5.0 / (dim as f64).sqrt());
        for (p, q) in ps.iter().zip(&qs) {
            let v = log_map(spec, p, q).unwrap();
            let back = exp_map(spec, p, &v).unwrap();
            assert!(max_dev(&back, q) < 1e-8, "{spec:?}: {p:?} -> {q:?}");
        }
    }
}

#[test]
fn energy_conserved_along_rk4_and_recursive() {
    for (n, spec) in specs().iter().enumerate() {
        let dim = spec.dim();
        let p = &random_points(dim, 500 + n as u64, 1, 1.0)[0];
        let v = &random_points(dim, 600 + n as u64, 1, 0.15)[0];
        let ts: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        for geo in [
            integrate_rk4(spec, p, v, 10.0, 2e-3).unwrap(),
            integrate_recursive(spec, p, v, 10.0, QUADRATURE_TOLERANCE).unwrap(),
        ] {
            let e = energy_along(&geo, &ts).unwrap();
            let spread = e.iter().copied().fold(f64::MIN, f64::max) - e.iter().copied().fold(f64::MAX, f64::min);
            assert!(spread < 1e-8, "{spec:?} {:?}: {spread:e}", geo.method);
        }
    }
}

#[test]
fn unit_spacelike_start_stays_unit() {
    let spec = common::family2(2);
    let p = [0.3, -0.2, 0.1, 0.4, -0.3, 0.2];
    let g = spec.metric_at(&p).unwrap();
    let mut w = [0.0; 6];
    w[0] = 1.0;
    w[4] = (1.0 - g.get(0, 0)) / 2.0;
    assert!((g.quadratic(&w) - 1.0).abs() < 1e-14);
    let geo = integrate_rk4(&spec, &p, &w, 5.0, 1e-3).unwrap();
    let e = energy_along(&geo, &[0.0, 2.5, 5.0]).unwrap();
    assert!(e.iter().all(|x| (x - 1.0).abs() < 1e-9), "{e:?}");
}

#[test]
fn homogeneity_of_geodesics() {
    for (n, spec) in specs().iter().enumerate() {
        let dim = spec.dim();
        let p = &random_points(dim, 700 + n as u64, 1, 1.0)[0];
        let v = &random_points(dim, 800 + n as u64, 1, 0.5)[0];
        let geo = integrate_recursive(spec, p, v, 2.0, QUADRATURE_TOLERANCE).unwrap();
        for t in [0.5, 2.0] {
            let tv: Vec<f64> = v.iter().map(|x| t * x).collect();
            let dev = max_dev(&exp_map(spec, p, &tv).unwrap(), &geo.position(t).unwrap());
            assert!(dev < 1e-8, "{spec:?} t = {t}: {dev:e}");
        }
    }
}

#[test]
fn family1_exp_and_log_affine_in_x() {
    let spec = FamilySpec::symmetric(1, 3).unwrap();
    let p = [0.5, -0.25, 0.75, 1.0, -1.0, 0.5];
    let v = [0.125, 0.5, -0.375, 0.2, 0.1, -0.3];
    let q = exp_map(&spec, &p, &v).unwrap();
    for i in 0..3 {
        assert_eq!(q[i], p[i] + v[i]);
    }
    let w = log_map(&spec, &p, &q).unwrap();
    for i in 0..3 {
        assert_eq!(w[i], q[i] - p[i]);
    }
}

#[test]
fn flat_fixture_symmetry_is_point_reflection() {
    let f = MultiProfile::polynomial(2, vec![term(&[1, 0], 1.0), term(&[0, 1], -0.5)]).unwrap();
    let spec = FamilySpec::family1(2, f).unwrap();
    let p = [0.5, -0.25, 0.75, 1.0];
    for q in random_points(4, 9, 5, 3.0) {
        let s = geodesic_symmetry(&spec, &p, &q).unwrap();
        let expected: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 2.0 * a - b).collect();
        assert!(max_dev(&s, &expected) < 1e-14, "{s:?}");
    }
}

#[test]
fn symmetry_involution_twenty_points() {
    for (n, spec) in specs().iter().enumerate() {
        let dim = spec.dim();
        let p = &random_points(dim, 900 + n as u64, 1, 1.0)[0];
        assert!(max_dev(&geodesic_symmetry(spec, p, p).unwrap(), p) < 1e-14);
        for q in random_points(dim, 1000 + n as u64, 20, 1.5) {
            let back = geodesic_symmetry(spec, p, &geodesic_symmetry(spec, p, &q).unwrap()).unwrap();
            assert!(max_dev(&back, &q) < 1e-7, "{spec:?}");
        }
    }
}

#[test]
fn symmetry_isometric_exactly_on_symmetric_profiles() {
    let spec = FamilySpec::symmetric(3, 2).unwrap();
    let p = [0.2, -0.4, 0.3, 0.1, -0.2, 0.5];
    let samples = random_points(6, 17, 10, 1.0);
    let rep = isometry_check(&spec, |x| geodesic_symmetry(&spec, &p, x), &samples, 1e-5).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn symmetry_fails_off_the_symmetric_locus() {
    let spec = FamilySpec::family3(2, ScalarProfile::monomial(1.0, 3)).unwrap();
    let p = [0.2, 0.8, 0.3, 0.1, -0.2, 0.5];
    let samples = random_points(6, 19, 10, 1.5);
    let rep = isometry_check(&spec, |x| geodesic_symmetry(&spec, &p, x), &samples, 1e-5).unwrap();
    println!("psi = u^3: max isometry deviation {:e}", rep.max_deviation);
    assert!(rep.max_deviation > 1e-3, "{rep:?}");
}
