//! Geodesics of metrics whose connection is triangular in some coordinate
//! order: `G_ab^c != 0` only for `c > a, b`, and `G_ab^c` depends only on
//! `z_1..z_{c-1}`.
//!
//! The geodesic equation then decouples into `z_c'' = -F_c(t)` with `F_c`
//! built from lower components only, so components are integrated one after
//! another:
//!
//! `z_c(t) = z_c(0) + z_c'(0) t - int_0^t int_0^s F_c(r) dr ds`.
//!
//! Integrals are cumulative six-point Lagrange quadratures on a shared
//! uniform grid, refined dyadically until two levels agree. Between nodes the
//! curve is a quintic Hermite interpolant of position, velocity and
//! acceleration.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::connection;
use crate::error::{Error, Result};
use crate::families::FamilySpec;

/// Default refinement tolerance of the recursive integrator.
pub const QUADRATURE_TOLERANCE: f64 = 1e-11;
/// Largest grid the recursive integrator will try.
pub const MAX_INTERVALS: usize = 1 << 20;
const START_INTERVALS: usize = 32;
const VERIFY_POINTS: usize = 8;
const FD_STEP: f64 = 1e-4;

/// Coordinate order making the connection triangular, plus the dependency
/// data found while verifying it.
#[derive(Debug, Clone, Serialize)]
pub struct TriangularOrder {
    /// `order[k]` is the chart index of `z_{k+1}`.
    pub order: Vec<usize>,
    /// `depends[c][j]`: some `G_ab^{z_c}` changes with `z_j`.
    depends: Vec<Vec<bool>>,
    /// `feeds[c][a]`: some `G_ab^{z_c}` or `G_ba^{z_c}` is nonzero.
    feeds: Vec<Vec<bool>>,
    /// Consecutive runs of z-positions whose right-hand sides do not involve
    /// each other; each run shares one connection evaluation per node.
    groups: Vec<(usize, usize)>,
}

impl TriangularOrder {
    pub fn labels(&self, spec: &FamilySpec) -> Vec<String> {
        let names = spec.coordinate_labels();
        self.order.iter().map(|&c| names[c].clone()).collect()
    }
}

/// `(x, y)`, `(u, t, v)` and `(x, u_1..u_r, v_r..v_1, y)` in chart indices.
pub fn family_order(spec: &FamilySpec) -> Vec<usize> {
    let n = spec.dim();
    match spec {
        FamilySpec::Family1 { .. } | FamilySpec::Family2 { .. } => (0..n).collect(),
        FamilySpec::Family3 { r, .. } => {
            let r = *r;
            std::iter::once(2 * r)
                .chain(0..r)
                .chain((r..2 * r).rev())
                .chain(std::iter::once(2 * r + 1))
                .collect()
        }
    }
}

/// The family's order, verified on seeded random points.
pub fn triangular_order(spec: &FamilySpec) -> Result<TriangularOrder> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7269_616e);
    let points: Vec<Vec<f64>> = (0..VERIFY_POINTS)
        .map(|_| (0..spec.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    verify_triangular(spec, &family_order(spec), &points)
}

/// Checks the triangular conditions for `order` at `points`: no
/// `G_ab^c` with `c <= max(a, b)` and no change of `G_ab^c` under a
/// perturbation of any `z_j` with `j >= c`.
pub fn verify_triangular(spec: &FamilySpec, order: &[usize], points: &[Vec<f64>]) -> Result<TriangularOrder> {
    let n = spec.dim();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::TriangularOrder(format!("{order:?} is not a permutation of 0..{n}")));
    }
    let mut pos = vec![0; n];
    for (k, &c) in order.iter().enumerate() {
        pos[c] = k;
    }
    let names = spec.coordinate_labels();
    let mut depends = vec![vec![false; n]; n];
    let mut feeds = vec![vec![false; n]; n];
    for x in points {
        let gamma = connection(spec, x)?;
        let g = gamma.data();
        let scale = 1.0 + gamma.max_abs();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if g[(a * n + b) * n + c].abs() > 1e-12 * scale {
                        if pos[c] <= pos[a] || pos[c] <= pos[b] {
                            return Err(Error::TriangularOrder(format!(
                                "G_{}{}^{} is nonzero",
                                names[a], names[b], names[c]
                            )));
                        }
                        feeds[pos[c]][pos[a]] = true;
                        feeds[pos[c]][pos[b]] = true;
                    }
                }
            }
        }
        for j in 0..n {
            let mut y = x.clone();
            y[j] += 0.731;
            let moved = connection(spec, &y)?;
            let scale = scale.max(1.0 + moved.max_abs());
            for (k, (u, v)) in g.iter().zip(moved.data()).enumerate() {
                if (u - v).abs() > 1e-12 * scale {
                    let c = k % n;
                    if pos[j] >= pos[c] {
                        return Err(Error::TriangularOrder(format!(
                            "G^{} depends on {}",
                            names[c], names[j]
                        )));
                    }
                    depends[pos[c]][pos[j]] = true;
                }
            }
        }
    }
    let mut groups = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (start..end).all(|j| !depends[end][j] && !feeds[end][j]) {
            end += 1;
        }
        groups.push((start, end));
        start = end;
    }
    Ok(TriangularOrder {
        order: order.to_vec(),
        depends,
        feeds,
        groups,
    })
}

/// Weights `w[m][j] = int_m^{m+1} L_j(s) ds` for Lagrange basis polynomials
/// on the nodes `0..6`.
fn lagrange_weights() -> &'static [[f64; 6]; 5] {
    static W: OnceLock<[[f64; 6]; 5]> = OnceLock::new();
    W.get_or_init(|| {
        let mut w = [[0.0; 6]; 5];
        for j in 0..6 {
            // coefficients of L_j, lowest degree first
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for i in (0..6).filter(|&i| i != j) {
                let mut next = vec![0.0; poly.len() + 1];
                for (d, c) in poly.iter().enumerate() {
                    next[d + 1] += c;
                    next[d] -= c * i as f64;
                }
                poly = next;
                denom *= j as f64 - i as f64;
            }
            let antideriv = |s: f64| poly.iter().enumerate().map(|(d, c)| c * s.powi(d as i32 + 1) / (d + 1) as f64).sum::<f64>();
            for (m, row) in w.iter_mut().enumerate() {
                row[j] = (antideriv(m as f64 + 1.0) - antideriv(m as f64)) / denom;
            }
        }
        w
    })
}

/// `out[k] = int_0^{t_k} y` on a uniform grid with at least six nodes.
fn cumulative(y: &[f64], h: f64) -> Vec<f64> {
    let w = lagrange_weights();
    let last = y.len() - 1;
    let mut out = vec![0.0; y.len()];
    for k in 0..last {
        let s = k.saturating_sub(2).min(last - 5);
        let row = &w[k - s];
        let piece: f64 = (0..6).map(|j| row[j] * y[s + j]).sum();
        out[k + 1] = out[k] + h * piece;
    }
    out
}

/// How a geodesic was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Recursive { intervals: usize, tol: f64 },
    Rk4 { steps: usize },
}

/// A geodesic sampled on a uniform grid over `[0, t_max]`.
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub spec: FamilySpec,
    pub point: Vec<f64>,
    pub velocity: Vec<f64>,
    pub t_max: f64,
    pub method: Method,
    h: f64,
    pos: Vec<Vec<f64>>,
    vel: Vec<Vec<f64>>,
    acc: Vec<Vec<f64>>,
}

/// One trajectory sample.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicSample {
    pub t: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub energy: f64,
}

impl Geodesic {
    pub fn intervals(&self) -> usize {
        self.pos.len() - 1
    }

    /// Position and velocity at `t` in `[0, t_max]`.
    pub fn at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(0.0..=self.t_max * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::InvalidParameter(format!("t = {t} lies outside [0, {}]", self.t_max)));
        }
        let n = self.intervals();
        let k = ((t / self.h).floor() as usize).min(n - 1);
        let s = (t - k as f64 * self.h) / self.h;
        let h = self.h;
        let (s2, s3, s4, s5) = (s * s, s * s * s, s.powi(4), s.powi(5));
        let b = [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
            0.5 * s3 - s4 + 0.5 * s5,
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        ];
        let db = [
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
            1.5 * s2 - 4.0 * s3 + 2.5 * s4,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        ];
        let dim = self.point.len();
        let mut x = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        for c in 0..dim {
            let coef = [
                self.pos[k][c],
                h * self.vel[k][c],
                h * h * self.acc[k][c],
                h * h * self.acc[k + 1][c],
                h * self.vel[k + 1][c],
                self.pos[k + 1][c],
            ];
            x[c] = (0..6).map(|i| coef[i] * b[i]).sum();
            v[c] = (0..6).map(|i| coef[i] * db[i]).sum::<f64>() / h;
        }
        Ok((x, v))
    }

    pub fn position(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.at(t)?.0)
    }

    /// `(t, position, velocity, energy)` at each requested time.
    pub fn samples(&self, ts: &[f64]) -> Result<Vec<GeodesicSample>> {
        ts.iter()
            .map(|&t| {
                let (position, velocity) = self.at(t)?;
                let energy = self.spec.metric_at(&position)?.quadratic(&velocity);
                Ok(GeodesicSample {
                    t,
                    position,
                    velocity,
                    energy,
                })
            })
            .collect()
    }
}

/// `g(gamma', gamma')` at each sample time.
pub fn energy_along(geodesic: &Geodesic, ts: &[f64]) -> Result<Vec<f64>> {
    Ok(geodesic.samples(ts)?.into_iter().map(|s| s.energy).collect())
}

enum Boundary<'a> {
    Velocity(&'a [f64]),
    Target(&'a [f64]),
}

struct GridSolution {
    /// z-ordered component arrays over the nodes.
    z: Vec<Vec<f64>>,
    zd: Vec<Vec<f64>>,
    zdd: Vec<Vec<f64>>,
}

fn solve_on_grid(
    spec: &FamilySpec,
    tri: &TriangularOrder,
    p: &[f64],
    boundary: &Boundary,
    t_max: f64,
    intervals: usize,
) -> Result<GridSolution> {
    let n = spec.dim();
    let nodes = intervals + 1;
    let h = t_max / intervals as f64;
    let order = &tri.order;
    let mut z: Vec<Vec<f64>> = order.iter().map(|&c| vec![p[c]; nodes]).collect();
    let mut zd = vec![vec![0.0; nodes]; n];
    let mut zdd = vec![vec![0.0; nodes]; n];
    for &(start, end) in &tri.groups {
        let active: Vec<usize> = (start..end).filter(|&d| tri.feeds[d].iter().any(|f| *f)).collect();
        let forcing: Vec<Vec<f64>> = if active.is_empty() {
            vec![vec![0.0; nodes]; end - start]
        } else {
            let per_node: Vec<Vec<f64>> = (0..nodes)
                .into_par_iter()
                .map(|k| -> Result<Vec<f64>> {
                    let mut x = vec![0.0; n];
                    for (zi, &c) in order.iter().enumerate() {
                        x[c] = z[zi][k];
                    }
                    let gamma = connection(spec, &x)?;
                    let g = gamma.data();
                    Ok((start..end)
                        .map(|d| {
                            let cd = order[d];
                            let mut acc = 0.0;
                            for a in (0..start).filter(|&a| tri.feeds[d][a]) {
                                let va = zd[a][k];
                                if va == 0.0 {
                                    continue;
                                }
                                let ca = order[a];
                                for b in (0..start).filter(|&b| tri.feeds[d][b]) {
                                    acc += va * zd[b][k] * g[(ca * n + order[b]) * n + cd];
                                }
                            }
                            acc
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            (0..end - start).map(|i| per_node.iter().map(|row| row[i]).collect()).collect()
        };
        for (i, f) in forcing.into_iter().enumerate() {
            let d = start + i;
            let c = order[d];
            let inner = cumulative(&f, h);
            let outer = cumulative(&inner, h);
            let z1 = match boundary {
                Boundary::Velocity(v) => v[c],
                Boundary::Target(q) => q[c] - p[c] + outer[intervals],
            };
            for k in 0..nodes {
                let t = k as f64 * h;
                z[d][k] = p[c] + z1 * t - outer[k];
                zd[d][k] = z1 - inner[k];
                zdd[d][k] = -f[k];
            }
        }
    }
    Ok(GridSolution { z, zd, zdd })
}

fn refine(spec: &FamilySpec, p: &[f64], boundary: Boundary, t_max: f64, tol: f64) -> Result<(GridSolution, usize)> {
    spec.check_point(p)?;
    let vec = match &boundary {
        Boundary::Velocity(v) | Boundary::Target(v) => v,
    };
    spec.check_point(vec)?;
    if !(t_max > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter("t_max and tol must be positive".into()));
    }
    let tri = triangular_order(spec)?;
    let mut intervals = START_INTERVALS;
    let mut prev = solve_on_grid(spec, &tri, p, &boundary, t_max, intervals)?;
    let mut change = f64::INFINITY;
    while intervals * 2 <= MAX_INTERVALS {
        intervals *= 2;
        let next = solve_on_grid(spec, &tri, p, &boundary, t_max, intervals)?;
        let mut scale: f64 = 1.0;
        change = 0.0;
        for d in 0..spec.dim() {
            for k in 0..prev.z[d].len() {
                let (a, b) = (next.z[d][2 * k], prev.z[d][k]);
                let (va, vb) = (next.zd[d][2 * k], prev.zd[d][k]);
                scale = scale.max(a.abs()).max(va.abs());
                change = change.max((a - b).abs()).max((va - vb).abs());
            }
        }
        if change <= tol * scale {
            return Ok((next, intervals));
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        max_intervals: MAX_INTERVALS,
        change,
    })
}

fn unpermute(order: &[usize], comps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nodes = comps[0].len();
    (0..nodes)
        .map(|k| {
            let mut x = vec![0.0; order.len()];
            for (zi, &c) in order.iter().enumerate() {
                x[c] = comps[zi][k];
            }
            x
        })
        .collect()
}

/// Geodesic with `gamma(0) = point`, `gamma'(0) = velocity`, by the
/// component-by-component recursion.
pub fn integrate_recursive(spec: &FamilySpec, point: &[f64], velocity: &[f64], t_max: f64, tol: f64) -> Result<Geodesic> {
    let (sol, intervals) = refine(spec, point, Boundary::Velocity(velocity), t_max, tol)?;
    let order = family_order(spec);
    Ok(Geodesic {
        spec: spec.clone(),
        point: point.to_vec(),
        velocity: velocity.to_vec(),
        t_max,
        method: Method::Recursive { intervals, tol },
        h: t_max / intervals as f64,
        pos: unpermute(&order, &sol.z),
        vel: unpermute(&order, &sol.zd),
        acc: unpermute(&order, &sol.zdd),
    })
}

fn geodesic_acceleration(spec: &FamilySpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let gamma = connection(spec, x)?;
    let g = gamma.data();
    let mut out = vec![0.0; n];
    for a in 0..n {
        if v[a] == 0.0 {
            continue;
        }
        for b in 0..n {
            let w = v[a] * v[b];
            if w == 0.0 {
                continue;
            }
            let row = &g[(a * n + b) * n..(a * n + b + 1) * n];
            for c in 0..n {
                out[c] -= w * row[c];
            }
        }
    }
    Ok(out)
}

/// Classical fixed-step Runge-Kutta integration of the full geodesic system.
pub fn integrate_rk4(spec: &FamilySpec, point: &[f64], velocity: &[f64], t_max: f64, step: f64) -> Result<Geodesic> {
    spec.check_point(point)?;
    spec.check_point(velocity)?;
    if !(step > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidParameter("t_max and step must be positive".into()));
    }
    let steps = ((t_max / step).ceil() as usize).max(1);
    let h = t_max / steps as f64;
    let n = point.len();
    let mut x = point.to_vec();
    let mut v = velocity.to_vec();
    let mut pos = vec![x.clone()];
    let mut vel = vec![v.clone()];
    let mut acc = vec![geodesic_acceleration(spec, &x, &v)?];
    let shift = |base: &[f64], d: &[f64], s: f64| -> Vec<f64> { base.iter().zip(d).map(|(b, d)| b + s * d).collect() };
    for _ in 0..steps {
        let a1 = acc.last().expect("nonempty").clone();
        let k1x = v.clone();
        let x2 = shift(&x, &k1x, 0.5 * h);
        let v2 = shift(&v, &a1, 0.5 * h);
        let a2 = geodesic_acceleration(spec, &x2, &v2)?;
        let x3 = shift(&x, &v2, 0.5 * h);
        let v3 = shift(&v, &a2, 0.5 * h);
        let a3 = geodesic_acceleration(spec, &x3, &v3)?;
        let x4 = shift(&x, &v3, h);
        let v4 = shift(&v, &a3, h);
        let a4 = geodesic_acceleration(spec, &x4, &v4)?;
        for c in 0..n {
            x[c] += h / 6.0 * (k1x[c] + 2.0 * v2[c] + 2.0 * v3[c] + v4[c]);
            v[c] += h / 6.0 * (a1[c] + 2.0 * a2[c] + 2.0 * a3[c] + a4[c]);
        }
        pos.push(x.clone());
        vel.push(v.clone());
        acc.push(geodesic_acceleration(spec, &x, &v)?);
    }
    Ok(Geodesic {
        spec: spec.clone(),
        point: point.to_vec(),
        velocity: velocity.to_vec(),
        t_max,
        method: Method::Rk4 { steps },
        h,
        pos,
        vel,
        acc,
    })
}

/// `gamma_v(1)` for the geodesic from `point` with initial velocity `v`.
pub fn exp_map(spec: &FamilySpec, point: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    exp_map_with(spec, point, v, QUADRATURE_TOLERANCE)
}

pub fn exp_map_with(spec: &FamilySpec, point: &[f64], v: &[f64], tol: f64) -> Result<Vec<f64>> {
    let (sol, _) = refine(spec, point, Boundary::Velocity(v), 1.0, tol)?;
    Ok(endpoint(spec, &sol.z))
}

fn endpoint(spec: &FamilySpec, comps: &[Vec<f64>]) -> Vec<f64> {
    let order = family_order(spec);
    let mut x = vec![0.0; order.len()];
    for (zi, &c) in order.iter().enumerate() {
        x[c] = *comps[zi].last().expect("nonempty grid");
    }
    x
}

/// Initial velocity of the unique geodesic from `p` to `q` in unit time,
/// solved component by component in the triangular order.
pub fn log_map(spec: &FamilySpec, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    log_map_with(spec, p, q, QUADRATURE_TOLERANCE)
}

pub fn log_map_with(spec: &FamilySpec, p: &[f64], q: &[f64], tol: f64) -> Result<Vec<f64>> {
    let (sol, _) = refine(spec, p, Boundary::Target(q), 1.0, tol)?;
    let order = family_order(spec);
    let mut v = vec![0.0; order.len()];
    for (zi, &c) in order.iter().enumerate() {
        v[c] = sol.zd[zi][0];
    }
    Ok(v)
}

/// `S_P(Q) = exp_P(-exp_P^{-1}(Q))`.
pub fn geodesic_symmetry(spec: &FamilySpec, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let v = log_map(spec, p, q)?;
    let back: Vec<f64> = v.iter().map(|x| -x).collect();
    exp_map(spec, p, &back)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsometryReport {
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Largest entry of `D^T g(map(x)) D - g(x)` at each sample, with `D` the
/// central-difference Jacobian of `map`.
pub fn isometry_check<F>(spec: &FamilySpec, map: F, samples: &[Vec<f64>], tol: f64) -> Result<IsometryReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let deviations: Vec<f64> = samples
        .par_iter()
        .map(|x| -> Result<f64> {
            let n = x.len();
            spec.check_point(x)?;
            let image = map(x)?;
            let mut jac = vec![vec![0.0; n]; n];
            for j in 0..n {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[j] += FD_STEP;
                minus[j] -= FD_STEP;
                let (fp, fm) = (map(&plus)?, map(&minus)?);
                for i in 0..n {
                    jac[i][j] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
                }
            }
            let gy = spec.metric_at(&image)?;
            let gx = spec.metric_at(x)?;
            let mut worst: f64 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for k in 0..n {
                            acc += jac[i][a] * gy.get(i, k) * jac[k][b];
                        }
                    }
                    worst = worst.max((acc - gx.get(a, b)).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(IsometryReport {
        deviations,
        max_deviation,
        tol,
        passed: max_deviation <= tol,
    })
}
