//! Command dispatch. Each command fills a [`Runner`] with named checks.

use curvhom::curvature::{check_curvature_symmetries, check_nabla_symmetries, connection, CurvaturePackage, Depth};
use curvhom::families::FamilySpec;
use curvhom::geodesics::{
    energy_along, exp_map_with, family_order, geodesic_symmetry, integrate_recursive, integrate_rk4, isometry_check,
    log_map_with, verify_triangular, Geodesic,
};
use curvhom::homogeneity::{alpha1, alpha1_literal, constancy_scan, kp_classify_with, Invariant, KPClassification};
use curvhom::models::{
    annihilator, annihilator_of, build_model, injectivity_probe, irreducibility_witness_probe, normalize, normalize_family3,
    u3_operator_identities, verify_model_match, ModelKind, ReducedModel,
};
use curvhom::operators::{jacobi, nilpotency_index, run_probe, search_witness, Causal, ProbeKind, ProbeVerdict, WitnessSearch};
use curvhom::{Error, Result};
use rand::Rng;
use serde_json::{json, Value};

use crate::config::{Command, DepthName, Expectation, GeodesicMethod, JobConfig, Tolerances};
use crate::report::{Outcome, Runner, Status};

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn tag(i: usize) -> String {
    format!("p{i:02}")
}

/// Largest value and the witness recorded with it.
struct Worst {
    value: f64,
    witness: Value,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            witness: Value::Null,
        }
    }

    fn offer(&mut self, value: f64, witness: impl FnOnce() -> Value) {
        let worse = self.witness.is_null() || value.is_nan() || value > self.value;
        if worse && !self.value.is_nan() {
            self.value = value;
            self.witness = witness();
        }
    }

    fn outcome(self, tol: f64) -> Outcome {
        Outcome::measured(self.value, tol, self.witness)
    }
}

fn draws(cfg: &JobConfig, stream: u64, count: usize, dim: usize, width: f64) -> Vec<Vec<f64>> {
    let mut rng = cfg.sampler().rng(stream);
    (0..count).map(|_| (0..dim).map(|_| rng.gen_range(-width..width)).collect()).collect()
}

fn causals(cfg: &JobConfig) -> Vec<Causal> {
    match cfg.causal {
        Some(c) => vec![c],
        None => vec![Causal::Spacelike, Causal::Timelike],
    }
}

fn causal_name(c: Causal) -> &'static str {
    match c {
        Causal::Spacelike => "spacelike",
        Causal::Timelike => "timelike",
    }
}

fn depth(name: DepthName) -> Depth {
    match name {
        DepthName::Riemann => Depth::Riemann,
        DepthName::Nabla => Depth::Nabla,
        DepthName::Nabla2 => Depth::Nabla2,
    }
}

/// Runs every command except `report`, which main handles directly.
pub fn run(cfg: &JobConfig, runner: &mut Runner) {
    let spec = match cfg.family_spec() {
        Ok(s) => s,
        Err(e) => {
            runner.check("config", || Err(Error::InvalidParameter(e.to_string())));
            return;
        }
    };
    let points = match cfg.resolve_points(spec.dim()) {
        Ok(p) => p,
        Err(e) => {
            runner.check("points", || Err(e));
            return;
        }
    };
    match cfg.command {
        Command::Curvature => curvature(cfg, &spec, &points, runner),
        Command::Verify => verify(cfg, &spec, &points, runner),
        Command::Geodesic => geodesic(cfg, &spec, &points[0], runner),
        Command::Invariants => invariants(cfg, &spec, &points, runner),
        Command::ProbeOsserman => probe(cfg, &spec, &points, ProbeKind::Osserman, runner),
        Command::ProbeIp => probe(cfg, &spec, &points, ProbeKind::IvanovPetrova, runner),
        Command::Normalize => normalize_cmd(cfg, &spec, &points, runner),
        Command::Kp => kp(cfg, &spec, &points, runner),
        Command::Report => unreachable!("handled by the caller"),
    }
}

fn curvature(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let depth = depth(cfg.depth.unwrap_or(DepthName::Nabla));
    let labels = spec.coordinate_labels();
    let tol = cfg.tolerances.identity;
    for (i, p) in points.iter().enumerate() {
        runner.check(format!("package.{}", tag(i)), || {
            let pkg = CurvaturePackage::compute(spec, p, depth)?;
            let mut worst = check_curvature_symmetries(&pkg.riemann, tol)?;
            if let Some(n) = &pkg.nabla_r {
                let rep = check_nabla_symmetries(n, tol)?;
                if rep.max_violation() / rep.threshold > worst.max_violation() / worst.threshold {
                    worst = rep;
                }
            }
            let ratio = worst.max_violation() / worst.threshold * tol;
            Ok(Outcome::measured(ratio, tol, json!({ "point": p, "identities": worst.checks })).data(pkg.to_json(&labels, 1e-14)))
        });
    }
}

fn verify(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let tol = &cfg.tolerances;
    oracle_checks(spec, points, tol, runner);
    model_checks(spec, points, tol, runner);
    match spec.family_number() {
        1 => family1_checks(cfg, spec, points, runner),
        2 => family2_checks(cfg, spec, points, runner),
        _ => family3_checks(cfg, spec, points, runner),
    }
    geodesic_checks(cfg, spec, points, runner);
}

fn oracle_checks(spec: &FamilySpec, points: &[Vec<f64>], tol: &Tolerances, runner: &mut Runner) {
    runner.check("oracle.christoffel", || {
        let mut worst = Worst::new();
        for p in points {
            let oracle = spec.christoffel_oracle(p)?;
            let pkg = CurvaturePackage::compute(spec, p, Depth::Riemann)?;
            let dev = pkg.gamma.max_diff(&oracle).max(connection(spec, p)?.max_diff(&oracle)) / oracle.max_abs().max(1.0);
            worst.offer(dev, || json!({ "point": p, "scaled_deviation": dev }));
        }
        Ok(worst.outcome(tol.oracle))
    });
    let packages: Vec<Result<(CurvaturePackage, (curvhom::tensor::Tensor, curvhom::tensor::Tensor))>> = points
        .iter()
        .map(|p| Ok((CurvaturePackage::compute(spec, p, Depth::Nabla)?, spec.curvature_oracle(p)?)))
        .collect();
    for (name, nabla) in [("oracle.riemann", false), ("oracle.nabla_r", true)] {
        runner.check(name, || {
            let mut worst = Worst::new();
            for (p, entry) in points.iter().zip(&packages) {
                let (pkg, (r, nr)) = entry.as_ref().map_err(Clone::clone)?;
                let (engine, oracle) = if nabla { (pkg.nabla()?, nr) } else { (&pkg.riemann, r) };
                let dev = engine.max_diff(oracle) / oracle.max_abs().max(1.0);
                worst.offer(dev, || json!({ "point": p, "scaled_deviation": dev }));
            }
            Ok(worst.outcome(tol.oracle))
        });
    }
    for (name, nabla) in [("identities.riemann", false), ("identities.nabla_r", true)] {
        runner.check(name, || {
            let mut worst = Worst::new();
            for (p, entry) in points.iter().zip(&packages) {
                let (pkg, _) = entry.as_ref().map_err(Clone::clone)?;
                let rep = if nabla {
                    check_nabla_symmetries(pkg.nabla()?, tol.identity)?
                } else {
                    check_curvature_symmetries(&pkg.riemann, tol.identity)?
                };
                let dev = rep.max_violation() / rep.threshold * tol.identity;
                worst.offer(dev, || json!({ "point": p, "identities": rep.checks }));
            }
            Ok(worst.outcome(tol.identity))
        });
    }
    runner.check("metric.finite_difference", || {
        let n = spec.dim();
        let h = 1e-3;
        let mut worst = Worst::new();
        for p in points {
            let mp = spec.metric_partials(p, 1)?;
            for v in 0..n {
                let at = |s: f64| -> Result<Vec<f64>> {
                    let mut q = p.clone();
                    q[v] += s;
                    Ok(spec.metric_at(&q)?.matrix().iter().copied().collect())
                };
                let (m2, m1, p1, p2) = (at(-2.0 * h)?, at(-h)?, at(h)?, at(2.0 * h)?);
                let fd: Vec<f64> = (0..n * n).map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h)).collect();
                let scale = fd.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                for a in 0..n {
                    for b in 0..n {
                        let exact = mp.partial(a, b, &[v])?;
                        let rel = (exact - fd[b * n + a]).abs() / scale;
                        worst.offer(rel, || json!({ "point": p, "entry": [a, b], "variable": v, "exact": exact, "difference": fd[b * n + a] }));
                    }
                }
            }
        }
        Ok(worst.outcome(tol.finite_difference))
    });
}

fn model_checks(spec: &FamilySpec, points: &[Vec<f64>], tol: &Tolerances, runner: &mut Runner) {
    let kind = ModelKind::for_family(spec);
    runner.check("model.match", || {
        let model = build_model(kind, spec.size())?;
        let mut worst = Worst::new();
        for p in points {
            let basis = normalize(spec, p)?;
            let pkg = CurvaturePackage::compute(spec, p, Depth::Riemann)?;
            let rep = verify_model_match(&basis, &pkg, &model, tol.model)?;
            let dev = rep.g_deviation.max(rep.a_deviation);
            worst.offer(dev, || json!({ "point": p, "worst": rep.worst }));
        }
        Ok(worst.outcome(tol.model).detail(format!("{kind:?}")))
    });
    runner.check("model.annihilator", || {
        let model = build_model(kind, spec.size())?;
        let expected = annihilator(&model, 1e-10)?.len();
        let mut worst = Worst::new();
        for p in points {
            let pkg = CurvaturePackage::compute(spec, p, Depth::Riemann)?;
            let found = annihilator_of(&pkg.riemann, 1e-10)?.len();
            let gap = found.abs_diff(expected) as f64;
            worst.offer(gap, || json!({ "point": p, "dimension": found, "model_dimension": expected }));
        }
        Ok(worst.outcome(0.0).detail(format!("dimension {expected}")))
    });
}

fn probe_constant(verdict: &ProbeVerdict, rank: Option<usize>) -> Outcome {
    let rank_ok = rank.is_none_or(|r| verdict.common_rank() == Some(r));
    let seqs: Vec<&Vec<usize>> = verdict.rank_sequences.iter().map(|r| &r.0).collect();
    let detail = format!("{} samples, rank sequences {seqs:?}", verdict.samples);
    if verdict.constant && rank_ok {
        return Outcome::pass().detail(detail);
    }
    let witness = match &verdict.witness {
        Some((a, b)) => json!({ "first": a, "second": b }),
        None => json!({ "expected_rank": rank, "common_rank": verdict.common_rank(), "reference": verdict.reference }),
    };
    Outcome::fail(witness).detail(detail)
}

fn witness_expected(search: WitnessSearch) -> Outcome {
    match search {
        WitnessSearch::Found { verdict } => {
            let (a, b) = verdict.witness.clone().expect("found verdicts carry a witness");
            Outcome::pass()
                .detail(format!("witness within {} samples", verdict.samples))
                .data(json!({ "first": a, "second": b }))
        }
        WitnessSearch::Inconclusive { samples } => Outcome::inconclusive(format!("no witness among {samples} samples")),
    }
}

fn family1_checks(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let sampler = cfg.sampler();
    for causal in [Causal::Spacelike, Causal::Timelike] {
        let c = causal_name(causal);
        runner.check(format!("osserman.{c}"), || {
            Ok(probe_constant(&run_probe(spec, points, ProbeKind::Osserman, causal, &sampler)?, None))
        });
        runner.check(format!("ivanov_petrova.{c}"), || {
            Ok(probe_constant(&run_probe(spec, points, ProbeKind::IvanovPetrova, causal, &sampler)?, Some(2)))
        });
    }
    reduced_model_check(ReducedModel::B1p, spec.size(), cfg, runner);
    if spec.size() >= 3 {
        runner.check("model.injectivity", || {
            let rep = injectivity_probe(spec.size(), &sampler)?;
            let o = if rep.passed {
                Outcome::pass()
            } else {
                Outcome::fail(serde_json::to_value(&rep).unwrap_or_default())
            };
            Ok(o.detail(format!("min tensor gap {:.3e} over {} pairs", rep.min_tensor_gap, rep.pairs)))
        });
    }
    alpha1_agreement(spec, points, &cfg.tolerances, runner);
    scan_check(Invariant::Alpha1, cfg, spec, points, runner);
}

fn family2_checks(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let sampler = cfg.sampler();
    runner.check("osserman.spacelike", || {
        Ok(probe_constant(&run_probe(spec, points, ProbeKind::Osserman, Causal::Spacelike, &sampler)?, None))
    });
    runner.check("osserman.timelike_witness", || {
        Ok(witness_expected(search_witness(spec, points, ProbeKind::Osserman, Causal::Timelike, &sampler)?))
    });
    runner.check("ivanov_petrova.spacelike", || {
        Ok(probe_constant(&run_probe(spec, points, ProbeKind::IvanovPetrova, Causal::Spacelike, &sampler)?, Some(4)))
    });
    reduced_model_check(ReducedModel::B2s, spec.size(), cfg, runner);
    scan_check(Invariant::Alpha2, cfg, spec, points, runner);
}

fn reduced_model_check(which: ReducedModel, size: usize, cfg: &JobConfig, runner: &mut Runner) {
    runner.check("model.reduced_witness", || {
        let rep = irreducibility_witness_probe(which, size, &cfg.sampler())?;
        let dev = rep.hypothesis_max.max(rep.conclusion_max);
        let mut o = Outcome::measured(dev, rep.tol, serde_json::to_value(&rep).unwrap_or_default());
        if rep.generic_min <= rep.tol {
            o = Outcome::fail(json!({ "generic_min": rep.generic_min }));
        }
        Ok(o.detail(format!("{which:?}, {} trials", rep.trials)))
    });
}

fn family3_checks(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let r = spec.size();
    let tol = &cfg.tolerances;
    runner.check("model.match_order1", || {
        let model = build_model(ModelKind::U3r1, r)?;
        let mut worst = Worst::new();
        let mut used = 0;
        for p in points {
            let basis = match normalize_family3(spec, p, 1) {
                Err(Error::PsiThirdVanishes) => continue,
                other => other?,
            };
            used += 1;
            let pkg = CurvaturePackage::compute(spec, p, Depth::Nabla)?;
            let rep = verify_model_match(&basis, &pkg, &model, tol.model)?;
            let dev = rep.g_deviation.max(rep.a_deviation).max(rep.a1_deviation.unwrap_or(0.0));
            worst.offer(dev, || json!({ "point": p, "worst": rep.worst }));
        }
        if used == 0 {
            return Ok(Outcome::inconclusive("psi''' vanishes at every point"));
        }
        Ok(worst.outcome(tol.model).detail(format!("{used} of {} points", points.len())))
    });
    runner.check("jacobi.nilpotency", || {
        let mut worst = Worst::new();
        let mut longest = 0;
        let xis = draws(cfg, 3, 40 * points.len(), spec.dim(), 1.0);
        for (k, xi) in xis.iter().enumerate() {
            let p = &points[k % points.len()];
            let pkg = CurvaturePackage::compute(spec, p, Depth::Riemann)?;
            let j = jacobi(&pkg.riemann, &pkg.g, xi)?;
            let ratio = j.pow(2 * r).norm() / j.norm().max(1.0).powi(2 * r as i32);
            worst.offer(ratio, || json!({ "point": p, "xi": xi, "ratio": ratio }));
            longest = longest.max(nilpotency_index(&j, 1e-8).unwrap_or(usize::MAX));
        }
        let o = worst.outcome(1e-8).detail(format!("largest nilpotency index {longest}"));
        if o.status == Status::Pass && longest != 2 * r {
            return Ok(Outcome::fail(json!({ "largest_index": longest, "expected": 2 * r })));
        }
        Ok(o)
    });
    runner.check("model.operator_table", || {
        let model = build_model(ModelKind::U3r, r)?;
        let table = u3_operator_identities(&model)?;
        let n = model.dim;
        let image = jacobi(&model.a, &model.g, &unit(n, 2 * r))?.pow(2 * r - 1).apply(&unit(n, 0));
        let bad: Vec<_> = table.iter().filter(|t| !t.exact).collect();
        if !bad.is_empty() {
            return Ok(Outcome::fail(serde_json::to_value(&bad).unwrap_or_default()));
        }
        if image != unit(n, r) {
            return Ok(Outcome::fail(json!({ "jacobi_chain_image": image })));
        }
        Ok(Outcome::pass().detail(format!("{} identities exact", table.len() + 1)))
    });
    kp_checks(cfg, spec, points, runner);
}

fn alpha1_agreement(spec: &FamilySpec, points: &[Vec<f64>], tol: &Tolerances, runner: &mut Runner) {
    runner.check("alpha1.fast_vs_literal", || {
        let mut worst = Worst::new();
        for p in points {
            let (fast, literal) = (alpha1(spec, p)?, alpha1_literal(spec, p)?);
            let rel = (fast - literal).abs() / literal.abs().max(1e-300).max(fast.abs());
            let rel = if fast == literal { 0.0 } else { rel };
            worst.offer(rel, || json!({ "point": p, "fast": fast, "literal": literal }));
        }
        Ok(worst.outcome(tol.oracle))
    });
}

fn scan_check(inv: Invariant, cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let name = match inv {
        Invariant::Alpha1 => "alpha1.scan",
        Invariant::Alpha2 => "alpha2.scan",
    };
    runner.check(name, || {
        if points.len() < 2 {
            return Ok(Outcome::inconclusive("a scan needs at least two points"));
        }
        let rep = constancy_scan(inv, spec, points, cfg.tolerances.invariant)?;
        let extremes = || {
            let lo = rep.values.iter().min_by(|a, b| a.value.total_cmp(&b.value));
            let hi = rep.values.iter().max_by(|a, b| a.value.total_cmp(&b.value));
            json!({ "min": lo, "max": hi, "spread": rep.spread })
        };
        let mut o = match (cfg.expect, rep.constant) {
            (Some(Expectation::Constant), false) => Outcome::fail(extremes()),
            (Some(Expectation::NonConstant), true) => Outcome::fail(extremes()),
            _ => Outcome::pass(),
        };
        if cfg.expect.is_some() {
            o.max_deviation = Some(rep.spread);
            o.tolerance = Some(rep.tol);
        }
        Ok(o.detail(rep.verdict.clone()).data(serde_json::to_value(&rep).unwrap_or_default()))
    });
}

/// K_P labels presume `psi''' != 0` wherever `u_{r-1} != 0`.
fn kp_covered(spec: &FamilySpec, c: &KPClassification, p: &[f64]) -> Result<bool> {
    let FamilySpec::Family3 { r, psi } = spec else {
        return Ok(false);
    };
    Ok(!c.mixed_nonzero || psi.derivative(p[r - 1], 3)?.abs() > c.threshold)
}

fn kp_outcome(spec: &FamilySpec, p: &[f64], threshold: f64) -> Result<Outcome> {
    let c = kp_classify_with(spec, p, threshold)?;
    let covered = kp_covered(spec, &c, p)?;
    let data = serde_json::to_value(&c).unwrap_or_default();
    let detail = format!("{:?}", c.class);
    Ok(if c.nabla2_agrees {
        Outcome::pass()
    } else if !covered {
        Outcome::inconclusive("psi''' vanishes with u_{r-1} != 0")
    } else {
        Outcome::fail(json!({ "point": p, "class": c.class, "nabla2_support": c.nabla2_support }))
    }
    .detail(detail)
    .data(data))
}

fn kp_checks(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let threshold = cfg.tolerances.kp_threshold;
    runner.check("kp.classification", || {
        let mut classes = Vec::new();
        let mut skipped = 0;
        for p in points {
            let o = kp_outcome(spec, p, threshold)?;
            match o.status {
                Status::Fail => return Ok(o),
                Status::Inconclusive => skipped += 1,
                Status::Pass => {}
            }
            classes.push(o.detail.unwrap_or_default());
        }
        if skipped == points.len() {
            return Ok(Outcome::inconclusive("no point satisfies the label hypotheses"));
        }
        Ok(Outcome::pass().detail(format!("{classes:?}, {skipped} outside the label hypotheses")))
    });
}

fn geodesic_checks(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let tol = &cfg.tolerances;
    let dim = spec.dim();
    let t_max = cfg.t_max;
    let ts: Vec<f64> = (0..cfg.samples).map(|k| t_max * k as f64 / (cfg.samples - 1) as f64).collect();
    runner.check("geodesic.triangular_order", || {
        let order = verify_triangular(spec, &family_order(spec), points)?;
        Ok(Outcome::pass().detail(order.labels(spec).join(" < ")))
    });
    let velocities = draws(cfg, 1, points.len(), dim, 0.15);
    let pairs: Vec<Result<(Geodesic, Geodesic)>> = points
        .iter()
        .zip(&velocities)
        .map(|(p, v)| Ok((integrate_recursive(spec, p, v, t_max, tol.quadrature)?, integrate_rk4(spec, p, v, t_max, cfg.step)?)))
        .collect();
    runner.check("geodesic.solver_agreement", || {
        let mut worst = Worst::new();
        for entry in &pairs {
            let (rec, rk) = entry.as_ref().map_err(Clone::clone)?;
            for &t in &ts {
                let dev = max_dev(&rec.position(t)?, &rk.position(t)?);
                worst.offer(dev, || json!({ "point": rec.point, "velocity": rec.velocity, "t": t }));
            }
        }
        Ok(worst.outcome(tol.solver_agreement))
    });
    runner.check("geodesic.energy", || {
        let mut worst = Worst::new();
        for entry in &pairs {
            let (rec, rk) = entry.as_ref().map_err(Clone::clone)?;
            for geo in [rec, rk] {
                let e = energy_along(geo, &ts)?;
                let spread = e.iter().copied().fold(f64::MIN, f64::max) - e.iter().copied().fold(f64::MAX, f64::min);
                worst.offer(spread, || json!({ "point": geo.point, "velocity": geo.velocity, "method": geo.method }));
            }
        }
        Ok(worst.outcome(tol.energy))
    });
    let targets = draws(cfg, 2, points.len(), dim, cfg.point_width);
    runner.check("geodesic.exp_log_round_trip", || {
        let mut worst = Worst::new();
        for (p, q) in points.iter().zip(&targets) {
            let v = log_map_with(spec, p, q, tol.quadrature)?;
            let back = exp_map_with(spec, p, &v, tol.quadrature)?;
            let dev = max_dev(&back, q);
            worst.offer(dev, || json!({ "point": p, "target": q, "image": back }));
        }
        Ok(worst.outcome(tol.round_trip))
    });
    runner.check("geodesic.symmetry_involution", || {
        let mut worst = Worst::new();
        for (p, q) in points.iter().zip(&targets) {
            let back = geodesic_symmetry(spec, p, &geodesic_symmetry(spec, p, q)?)?;
            let dev = max_dev(&back, q);
            worst.offer(dev, || json!({ "point": p, "target": q, "image": back }));
        }
        Ok(worst.outcome(tol.involution))
    });
    let flat_nabla = points.iter().all(|p| {
        CurvaturePackage::compute(spec, p, Depth::Nabla)
            .and_then(|pkg| Ok(pkg.nabla()?.max_abs() <= tol.oracle))
            .unwrap_or(false)
    });
    if flat_nabla {
        runner.check("geodesic.symmetry_isometry", || {
            let p = &points[0];
            let samples: Vec<Vec<f64>> = draws(cfg, 4, 5, dim, 1.0)
                .into_iter()
                .map(|d| p.iter().zip(d).map(|(a, b)| a + b).collect())
                .collect();
            let rep = isometry_check(spec, |x| geodesic_symmetry(spec, p, x), &samples, tol.isometry)?;
            let worst_at = rep.deviations.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
            Ok(Outcome::measured(rep.max_deviation, tol.isometry, json!({ "center": p, "sample": samples[worst_at] })))
        });
    }
}

fn geodesic(cfg: &JobConfig, spec: &FamilySpec, p: &[f64], runner: &mut Runner) {
    let tol = &cfg.tolerances;
    let velocity = match (&cfg.velocity, &cfg.target) {
        (Some(v), _) => Ok(v.clone()),
        (None, Some(q)) => log_map_with(spec, p, q, tol.quadrature),
        (None, None) => unreachable!("validated"),
    };
    let geo = velocity.and_then(|v| match cfg.method {
        GeodesicMethod::Recursive => integrate_recursive(spec, p, &v, cfg.t_max, tol.quadrature),
        GeodesicMethod::Rk4 => integrate_rk4(spec, p, &v, cfg.t_max, cfg.step),
    });
    let geo = match geo {
        Ok(g) => g,
        Err(e) => {
            runner.check("geodesic.integrate", || Err(e));
            return;
        }
    };
    let ts: Vec<f64> = (0..cfg.samples).map(|k| cfg.t_max * k as f64 / (cfg.samples - 1) as f64).collect();
    runner.check("geodesic.trajectory", || {
        let samples = geo.samples(&ts)?;
        let (x0, v0) = geo.at(0.0)?;
        let dev = max_dev(&x0, p).max(max_dev(&v0, &geo.velocity));
        Ok(Outcome::measured(dev, 1e-12, json!({ "position": x0, "velocity": v0 }))
            .detail(format!("{} intervals", geo.intervals()))
            .data(json!({ "method": geo.method, "velocity": geo.velocity, "samples": samples })))
    });
    runner.check("geodesic.energy", || {
        let e = energy_along(&geo, &ts)?;
        let (lo, hi) = e.iter().enumerate().fold((0, 0), |(lo, hi), (k, x)| {
            (if *x < e[lo] { k } else { lo }, if *x > e[hi] { k } else { hi })
        });
        Ok(Outcome::measured(e[hi] - e[lo], tol.energy, json!({ "t_min": ts[lo], "t_max": ts[hi], "low": e[lo], "high": e[hi] })))
    });
    if let Some(q) = &cfg.target {
        runner.check("geodesic.endpoint", || {
            if cfg.t_max < 1.0 {
                return Ok(Outcome::inconclusive("t_max below 1 does not reach the target"));
            }
            let end = geo.position(1.0)?;
            let dev = max_dev(&end, q);
            Ok(Outcome::measured(dev, tol.round_trip, json!({ "target": q, "reached": end })))
        });
    }
}

fn invariants(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let inv = cfg.invariant.unwrap_or(if spec.family_number() == 1 { Invariant::Alpha1 } else { Invariant::Alpha2 });
    if inv == Invariant::Alpha1 {
        alpha1_agreement(spec, points, &cfg.tolerances, runner);
    }
    scan_check(inv, cfg, spec, points, runner);
}

fn probe(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], kind: ProbeKind, runner: &mut Runner) {
    let prefix = match kind {
        ProbeKind::Osserman => "osserman",
        ProbeKind::IvanovPetrova => "ivanov_petrova",
    };
    let sampler = cfg.sampler();
    for causal in causals(cfg) {
        runner.check(format!("{prefix}.{}", causal_name(causal)), || {
            Ok(match cfg.expect.unwrap_or(Expectation::Constant) {
                Expectation::Constant => {
                    let v = run_probe(spec, points, kind, causal, &sampler)?;
                    probe_constant(&v, None).data(json!({ "rank_sequences": v.rank_sequences, "common_rank": v.common_rank() }))
                }
                Expectation::NonConstant => witness_expected(search_witness(spec, points, kind, causal, &sampler)?),
            })
        });
    }
}

fn normalize_cmd(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let order = if spec.family_number() == 3 { cfg.order.unwrap_or(0) } else { 0 };
    let kind = match (spec.family_number(), order) {
        (3, 1) => ModelKind::U3r1,
        _ => ModelKind::for_family(spec),
    };
    for (i, p) in points.iter().enumerate() {
        runner.check(format!("model_match.{}", tag(i)), || {
            let model = build_model(kind, spec.size())?;
            let basis = if spec.family_number() == 3 { normalize_family3(spec, p, order)? } else { normalize(spec, p)? };
            let depth = if model.a1.is_some() { Depth::Nabla } else { Depth::Riemann };
            let pkg = CurvaturePackage::compute(spec, p, depth)?;
            let rep = verify_model_match(&basis, &pkg, &model, cfg.tolerances.model)?;
            let dev = rep.g_deviation.max(rep.a_deviation).max(rep.a1_deviation.unwrap_or(0.0));
            Ok(Outcome::measured(dev, cfg.tolerances.model, json!({ "point": p, "worst": rep.worst }))
                .detail(format!("{kind:?}"))
                .data(json!({ "basis": basis, "match": rep })))
        });
    }
}

fn kp(cfg: &JobConfig, spec: &FamilySpec, points: &[Vec<f64>], runner: &mut Runner) {
    let threshold = cfg.tolerances.kp_threshold;
    for (i, p) in points.iter().enumerate() {
        runner.check(format!("kp.{}", tag(i)), || kp_outcome(spec, p, threshold));
    }
    for i in 1..points.len() {
        runner.check(format!("kp_compare.{}_{}", tag(i - 1), tag(i)), || {
            let a = kp_classify_with(spec, &points[i - 1], threshold)?;
            let b = kp_classify_with(spec, &points[i], threshold)?;
            let differ = a.class != b.class;
            let verdict = if differ {
                "labels differ: not 2-curvature homogeneous"
            } else {
                "labels agree"
            };
            Ok(Outcome::pass()
                .detail(format!("{:?} vs {:?}, {verdict}", a.class, b.class))
                .data(json!({ "p": a.class, "q": b.class, "differ": differ })))
        });
    }
}
