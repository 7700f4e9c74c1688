//! Acceptance suite. Run with `cargo test -p curvhom --test acceptance -- --nocapture`
//! to see one `[PASS]` or `[FAIL]` line per criterion.

mod common;

use common::random_points;
use curvhom::curvature::{check_curvature_symmetries, check_nabla_symmetries, CurvaturePackage, Depth};
use curvhom::families::{term, FamilySpec};
use curvhom::geodesics::{
    energy_along, exp_map, geodesic_symmetry, integrate_recursive, integrate_rk4, isometry_check, log_map,
    QUADRATURE_TOLERANCE,
};
use curvhom::homogeneity::{alpha1, alpha1_literal, alpha2, constancy_scan, kp_scan, Invariant, KPClass};
use curvhom::models::{
    build_model, injectivity_probe, normalize, normalize_family3, verify_model_match, ModelKind,
};
use curvhom::operators::{
    ip_probe, jacobi, jordan_probe, search_witness, Causal, ProbeKind, SamplerConfig, WitnessSearch,
};
use curvhom::profile::{MultiProfile, ScalarProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZES: [usize; 2] = [2, 3];

struct Outcome {
    lines: Vec<(bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.lines.push((ok, detail));
    }

    fn finish(self, n: usize, title: &str) {
        let ok = self.lines.iter().all(|(p, _)| *p);
        let mut text = format!("\n[{}] criterion {n}: {title}\n", if ok { "PASS" } else { "FAIL" });
        for (p, d) in &self.lines {
            text.push_str(&format!("    {} {d}\n", if *p { "ok  " } else { "FAIL" }));
        }
        print!("{text}");
        assert!(ok, "criterion {n} failed");
    }
}

fn generic(family: u8, size: usize) -> FamilySpec {
    match family {
        1 => common::family1(size),
        2 => common::family2(size),
        _ => common::family3(size),
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cfg(seed: u64, count: usize) -> SamplerConfig {
    SamplerConfig {
        seed,
        count,
        ..Default::default()
    }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            let spec = generic(family, size);
            let (mut dr, mut dn) = (0.0f64, 0.0f64);
            for p in random_points(spec.dim(), 100 + family as u64, 20, 1.0) {
                let pkg = CurvaturePackage::compute(&spec, &p, Depth::Nabla).unwrap();
                let (r, nr) = spec.curvature_oracle(&p).unwrap();
                dr = dr.max(pkg.riemann.max_diff(&r));
                dn = dn.max(pkg.nabla().unwrap().max_diff(&nr));
            }
            out.check(
                dr < 1e-9 && dn < 1e-9,
                format!("family {family} size {size}: max |R - oracle| = {dr:.2e}, max |nabla R - oracle| = {dn:.2e}"),
            );
        }
    }
    out.finish(1, "engine R and nabla R match the closed-form tables");
}

fn fd_first(spec: &FamilySpec, p: &[f64], v: usize, h: f64) -> Vec<f64> {
    let at = |s: f64| {
        let mut q = p.to_vec();
        q[v] += s;
        spec.metric_at(&q).unwrap().matrix().iter().copied().collect::<Vec<_>>()
    };
    let (m2, m1, p1, p2) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
    (0..m2.len()).map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h)).collect()
}

#[test]
fn criterion_02_finite_difference_independence() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            let spec = generic(family, size);
            let n = spec.dim();
            let mut worst = 0.0f64;
            for p in random_points(n, 200 + family as u64, 20, 1.0) {
                let mp = spec.metric_partials(&p, 1).unwrap();
                for v in 0..n {
                    let fd = fd_first(&spec, &p, v, 1e-3);
                    let scale = fd.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                    for a in 0..n {
                        for b in 0..n {
                            // column-major storage; g is symmetric
                            let rel = (mp.partial(a, b, &[v]).unwrap() - fd[b * n + a]).abs() / scale;
                            worst = worst.max(rel);
                        }
                    }
                }
            }
            out.check(worst < 1e-5, format!("family {family} size {size}: max relative error {worst:.2e}"));
        }
    }
    out.finish(2, "metric partials agree with 4th-order central differences");
}

#[test]
fn criterion_03_symmetric_profiles() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            let spec = FamilySpec::symmetric(family, size).unwrap();
            let worst = random_points(spec.dim(), 300 + family as u64, 20, 1.0)
                .iter()
                .map(|p| CurvaturePackage::compute(&spec, p, Depth::Nabla).unwrap().nabla().unwrap().max_abs())
                .fold(0.0, f64::max);
            out.check(worst < 1e-9, format!("family {family} size {size}: max |nabla R| = {worst:.2e}"));
        }
    }
    out.finish(3, "symmetric-space profiles have nabla R = 0");
}

#[test]
fn criterion_04_model_matching() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            let spec = generic(family, size);
            let model = build_model(ModelKind::for_family(&spec), size).unwrap();
            let mut worst = 0.0f64;
            let mut passed = true;
            for p in random_points(spec.dim(), 400 + family as u64, 20, 1.0) {
                let basis = normalize(&spec, &p).unwrap();
                let pkg = CurvaturePackage::compute(&spec, &p, Depth::Riemann).unwrap();
                let rep = verify_model_match(&basis, &pkg, &model, 1e-10).unwrap();
                worst = worst.max(rep.g_deviation).max(rep.a_deviation);
                passed &= rep.passed;
            }
            out.check(passed, format!("family {family} size {size}: max deviation {worst:.2e}"));
        }
        let spec = FamilySpec::family3(size, ScalarProfile::exp()).unwrap();
        let model = build_model(ModelKind::U3r1, size).unwrap();
        let mut worst = 0.0f64;
        let mut passed = true;
        for p in random_points(spec.dim(), 450, 20, 1.0) {
            let basis = normalize_family3(&spec, &p, 1).unwrap();
            let pkg = CurvaturePackage::compute(&spec, &p, Depth::Nabla).unwrap();
            let rep = verify_model_match(&basis, &pkg, &model, 1e-10).unwrap();
            worst = worst.max(rep.a_deviation).max(rep.a1_deviation.unwrap_or(f64::INFINITY));
            passed &= rep.passed && rep.a1_deviation.is_some();
        }
        out.check(passed, format!("family 3 order 1, psi = exp, size {size}: max deviation {worst:.2e}"));
    }
    out.finish(4, "normalized frames realize the model spaces");
}

#[test]
fn criterion_05_nilpotency() {
    let mut out = Outcome::new();
    for r in SIZES {
        let spec = generic(3, r);
        let mut rng = ChaCha8Rng::seed_from_u64(500 + r as u64);
        let mut worst = 0.0f64;
        let mut count = 0;
        for p in random_points(spec.dim(), 501 + r as u64, 10, 1.0) {
            let pkg = CurvaturePackage::compute(&spec, &p, Depth::Riemann).unwrap();
            for _ in 0..20 {
                let xi: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let j = jacobi(&pkg.riemann, &pkg.g, &xi).unwrap();
                let ratio = j.pow(2 * r).norm() / j.norm().max(1.0).powi(2 * r as i32);
                worst = worst.max(ratio);
                count += 1;
            }
        }
        out.check(worst < 1e-8, format!("r = {r}: max ||J^(2r)|| / max(1, ||J||)^(2r) = {worst:.2e} over {count} xi"));

        let model = build_model(ModelKind::U3r, r).unwrap();
        let n = model.dim;
        let mut x = vec![0.0; n];
        x[2 * r] = 1.0;
        let mut u1 = vec![0.0; n];
        u1[0] = 1.0;
        let mut v1 = vec![0.0; n];
        v1[r] = 1.0;
        let j = jacobi(&model.a, &model.g, &x).unwrap();
        let image = j.pow(2 * r - 1).apply(&u1);
        out.check(image == v1, format!("r = {r}: J(X)^(2r-1) U1 = {image:?}"));
    }
    out.finish(5, "family 3 Jacobi operators are nilpotent of order 2r");
}

#[test]
fn criterion_06_osserman_probes() {
    let mut out = Outcome::new();
    for size in SIZES {
        let f1 = generic(1, size);
        let pts = random_points(f1.dim(), 600, 4, 1.0);
        for causal in [Causal::Spacelike, Causal::Timelike] {
            let v = jordan_probe(&f1, &pts, causal, &cfg(601, 25)).unwrap();
            out.check(
                v.constant && v.samples == 100,
                format!("family 1 size {size} {causal:?}: {} samples, rank sequences {:?}", v.samples, v.rank_sequences),
            );
        }
        let f2 = generic(2, size);
        let pts = random_points(f2.dim(), 602, 4, 1.0);
        let v = jordan_probe(&f2, &pts, Causal::Spacelike, &cfg(603, 25)).unwrap();
        out.check(
            v.constant && v.samples == 100,
            format!("family 2 size {size} spacelike: {} samples, rank sequences {:?}", v.samples, v.rank_sequences),
        );
        match search_witness(&f2, &pts, ProbeKind::Osserman, Causal::Timelike, &cfg(604, 25)).unwrap() {
            WitnessSearch::Found { verdict } => {
                let (a, b) = verdict.witness.clone().unwrap();
                out.check(
                    a.rank_sequence != b.rank_sequence && verdict.samples <= 1000,
                    format!(
                        "family 2 size {size} timelike witness within {} samples: {:?} vs {:?}",
                        verdict.samples, a.rank_sequence, b.rank_sequence
                    ),
                );
            }
            WitnessSearch::Inconclusive { samples } => {
                out.check(false, format!("family 2 size {size} timelike: no witness in {samples} samples"))
            }
        }
    }
    out.finish(6, "Osserman probes");
}

#[test]
fn criterion_07_ivanov_petrova_probes() {
    let mut out = Outcome::new();
    for size in SIZES {
        let f1 = generic(1, size);
        let pts = random_points(f1.dim(), 700, 4, 1.0);
        for causal in [Causal::Spacelike, Causal::Timelike] {
            let v = ip_probe(&f1, &pts, causal, &cfg(701, 25)).unwrap();
            out.check(
                v.common_rank() == Some(2) && v.samples == 100,
                format!("family 1 size {size} {causal:?}: rank {:?} over {} planes", v.common_rank(), v.samples),
            );
        }
        let f2 = generic(2, size);
        let pts = random_points(f2.dim(), 702, 4, 1.0);
        let v = ip_probe(&f2, &pts, Causal::Spacelike, &cfg(703, 25)).unwrap();
        out.check(
            v.common_rank() == Some(4) && v.samples == 100,
            format!("family 2 size {size} spacelike: rank {:?} over {} planes", v.common_rank(), v.samples),
        );
    }
    out.finish(7, "skew-symmetric curvature operator ranks");
}

fn quartic_perturbed() -> FamilySpec {
    let f = MultiProfile::polynomial(
        3,
        vec![term(&[2, 0, 0], 1.0), term(&[0, 2, 0], 1.0), term(&[0, 0, 2], 1.0), term(&[4, 0, 0], 1.0)],
    )
    .unwrap();
    FamilySpec::family1(3, f).unwrap()
}

#[test]
fn criterion_08_invariant_scans() {
    let mut out = Outcome::new();
    for size in SIZES {
        let spec = FamilySpec::symmetric(1, size).unwrap();
        let worst = random_points(spec.dim(), 800, 50, 1.0)
            .iter()
            .map(|p| alpha1(&spec, p).unwrap().abs())
            .fold(0.0, f64::max);
        out.check(worst < 1e-12, format!("alpha1, f = sum x_i^2, p = {size}: max |alpha1| = {worst:.2e}"));
        let spec = FamilySpec::symmetric(2, size).unwrap();
        let worst = random_points(spec.dim(), 801, 50, 1.0)
            .iter()
            .map(|p| alpha2(&spec, p).unwrap().abs())
            .fold(0.0, f64::max);
        out.check(worst < 1e-12, format!("alpha2, F = -sum u_i^4/6, s = {size}: max |alpha2| = {worst:.2e}"));
    }
    let rep = constancy_scan(Invariant::Alpha1, &quartic_perturbed(), &random_points(6, 802, 50, 1.0), 1e-12).unwrap();
    out.check(
        !rep.constant && rep.spread > 1e-3,
        format!("alpha1, f = x1^2 + x2^2 + x3^2 + x1^4: {} with spread {:.3e}", rep.verdict, rep.spread),
    );
    for size in SIZES {
        let spec = FamilySpec::family2(size, vec![ScalarProfile::monomial(1.0, 5); size]).unwrap();
        let rep = constancy_scan(Invariant::Alpha2, &spec, &random_points(3 * size, 803, 50, 1.0), 1e-12).unwrap();
        out.check(
            !rep.constant && rep.spread > 1e-3,
            format!("alpha2, f_i = u^5, s = {size}: {} with spread {:.3e}", rep.verdict, rep.spread),
        );
    }
    for size in SIZES {
        let spec = generic(1, size);
        let worst = random_points(spec.dim(), 804, 10, 1.0)
            .iter()
            .map(|p| {
                let (fast, slow) = (alpha1(&spec, p).unwrap(), alpha1_literal(&spec, p).unwrap());
                (fast - slow).abs() / slow.abs().max(1e-300)
            })
            .fold(0.0, f64::max);
        out.check(worst < 1e-9, format!("alpha1 fast path vs brute force, p = {size}: max relative gap {worst:.2e}"));
    }
    out.finish(8, "alpha1 / alpha2 constancy scans");
}

#[test]
fn criterion_09_kp_classification() {
    let mut out = Outcome::new();
    for r in SIZES {
        let mut p = vec![0.4; 2 * r + 2];
        let mut q = p.clone();
        p[r - 2] = 1.0;
        q[r - 2] = 0.0;
        for (psi, name, expected) in [
            (ScalarProfile::monomial(1.0, 4), "u_r^4", (KPClass::BothNonzero, KPClass::OnlyQuartic)),
            (ScalarProfile::monomial(1.0, 3), "u_r^3", (KPClass::OnlyMixed, KPClass::Empty)),
        ] {
            let spec = FamilySpec::family3(r, psi).unwrap();
            let cmp = kp_scan(&spec, &p, &q).unwrap();
            let got = (cmp.p.class, cmp.q.class);
            out.check(
                got == expected && cmp.differ && cmp.p.nabla2_agrees && cmp.q.nabla2_agrees,
                format!(
                    "r = {r}, psi = {name}: u_(r-1) = 1 -> {:?} (nabla^2 R support {:?}), u_(r-1) = 0 -> {:?} (support {:?})",
                    got.0, cmp.p.nabla2_support, got.1, cmp.q.nabla2_support
                ),
            );
        }
    }
    out.finish(9, "K_P classification cases");
}

#[test]
fn criterion_10_geodesics() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            let spec = generic(family, size);
            let dim = spec.dim();
            let seed = 1000 + 10 * size as u64 + family as u64;
            let (mut rk_dev, mut spread) = (0.0f64, 0.0f64);
            let ts: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
            for (p, v) in random_points(dim, seed, 10, 1.0).iter().zip(random_points(dim, seed + 100, 10, 0.15)) {
                let rec = integrate_recursive(&spec, p, &v, 10.0, QUADRATURE_TOLERANCE).unwrap();
                let rk = integrate_rk4(&spec, p, &v, 10.0, 2e-3).unwrap();
                for &t in &ts {
                    rk_dev = rk_dev.max(max_dev(&rec.position(t).unwrap(), &rk.position(t).unwrap()));
                }
                for geo in [&rec, &rk] {
                    let e = energy_along(geo, &ts).unwrap();
                    let hi = e.iter().copied().fold(f64::MIN, f64::max);
                    let lo = e.iter().copied().fold(f64::MAX, f64::min);
                    spread = spread.max(hi - lo);
                }
            }
            out.check(rk_dev < 1e-6, format!("family {family} size {size}: recursive vs RK4 on [0, 10] {rk_dev:.2e}"));
            out.check(spread < 1e-8, format!("family {family} size {size}: energy spread {spread:.2e}"));

            let mut trip = 0.0f64;
            let qs = random_points(dim, seed + 200, 20, 5.0 / (dim as f64).sqrt());
            for (p, q) in random_points(dim, seed + 300, 20, 1.0).iter().zip(&qs) {
                let v = log_map(&spec, p, q).unwrap();
                trip = trip.max(max_dev(&exp_map(&spec, p, &v).unwrap(), q));
            }
            out.check(trip < 1e-8, format!("family {family} size {size}: exp/log round trip {trip:.2e} on 20 pairs"));
        }
        let spec = generic(1, size);
        let mut affine = true;
        for (p, v) in random_points(2 * size, 1400, 10, 1.0).iter().zip(random_points(2 * size, 1401, 10, 1.0)) {
            let q = exp_map(&spec, p, &v).unwrap();
            let w = log_map(&spec, p, &q).unwrap();
            affine &= (0..size).all(|i| q[i] == p[i] + v[i] && w[i] == q[i] - p[i]);
        }
        out.check(affine, format!("family 1 size {size}: x-components of exp and log exactly affine"));
    }
    out.finish(10, "geodesic integrators, exp and log");
}

#[test]
fn criterion_11_geodesic_symmetry() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            let spec = FamilySpec::symmetric(family, size).unwrap();
            let p = &random_points(spec.dim(), 1100 + family as u64, 1, 1.0)[0];
            let samples = random_points(spec.dim(), 1110 + family as u64, 10, 1.0);
            let rep = isometry_check(&spec, |x| geodesic_symmetry(&spec, p, x), &samples, 1e-5).unwrap();
            out.check(
                rep.passed,
                format!("family {family} size {size}: max ||D^T g D - g|| = {:.2e} over 10 samples", rep.max_deviation),
            );
        }
    }
    out.finish(11, "geodesic symmetries of symmetric-space profiles are isometries");
}

#[test]
fn criterion_12_identity_suites() {
    let mut out = Outcome::new();
    for size in SIZES {
        for family in 1..=3 {
            for spec in [generic(family, size), FamilySpec::symmetric(family, size).unwrap()] {
                let (mut r_worst, mut n_worst) = (0.0f64, 0.0f64);
                let mut passed = true;
                for p in random_points(spec.dim(), 1200 + family as u64, 20, 1.0) {
                    let pkg = CurvaturePackage::compute(&spec, &p, Depth::Nabla).unwrap();
                    let a = check_curvature_symmetries(&pkg.riemann, 1e-10).unwrap();
                    let b = check_nabla_symmetries(pkg.nabla().unwrap(), 1e-10).unwrap();
                    r_worst = r_worst.max(a.max_violation());
                    n_worst = n_worst.max(b.max_violation());
                    passed &= a.passed() && b.passed();
                }
                out.check(
                    passed,
                    format!("family {family} size {size}: R violation {r_worst:.2e}, nabla R violation {n_worst:.2e}"),
                );
            }
        }
    }
    for dim in [3, 4] {
        let rep = injectivity_probe(dim, &cfg(1210 + dim as u64, 50)).unwrap();
        out.check(
            rep.passed && rep.pairs == 50,
            format!(
                "R(phi) injectivity, dim {dim}: {} pairs, min form gap {:.2e}, min tensor gap {:.2e}",
                rep.pairs, rep.min_form_gap, rep.min_tensor_gap
            ),
        );
    }
    out.finish(12, "curvature identities and injectivity of phi -> R(phi)");
}
