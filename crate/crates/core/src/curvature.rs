//! Coordinate curvature engine.
//!
//! Convention: `R(x,y,z,w) = g((nabla_x nabla_y - nabla_y nabla_x - nabla_[x,y]) z, w)`,
//! so in coordinates
//! `R_abcd = d_a G_bcd - d_b G_acd - G^k_bc G_adk + G^k_ac G_bdk`
//! with `G_abc = g(nabla_a d_b, d_c)`. Flipping the convention negates `R`.
//!
//! Every stage runs on truncated Taylor jets of the metric, so derivatives
//! of `Gamma`, `R` and `nabla R` are exact rather than finite differences.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::jet::{JetSpace, JetTensor};
use crate::tensor::{BilinearForm, Tensor, Variance};

/// How far up the derivative tower a package is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Depth {
    Riemann,
    Nabla,
    Nabla2,
}

impl Depth {
    fn metric_order(self) -> usize {
        match self {
            Depth::Riemann => 2,
            Depth::Nabla => 3,
            Depth::Nabla2 => 4,
        }
    }
}

/// Curvature data of one family at one point.
#[derive(Debug, Clone)]
pub struct CurvaturePackage {
    pub point: Vec<f64>,
    pub g: BilinearForm,
    /// `Gamma_ab^c` at `[a, b, c]`.
    pub gamma: Tensor,
    pub riemann: Tensor,
    pub nabla_r: Option<Tensor>,
    pub nabla2_r: Option<Tensor>,
}

impl CurvaturePackage {
    pub fn compute(spec: &FamilySpec, point: &[f64], depth: Depth) -> Result<Self> {
        let order = depth.metric_order();
        let (space, gj) = spec.metric_partials(point, order)?.into_jets();
        let tower = Tower::build(&space, &gj, order)?;
        let n = spec.dim();
        Ok(CurvaturePackage {
            point: point.to_vec(),
            g: BilinearForm::new(DMatrix::from_row_slice(n, n, &gj.values()))?,
            gamma: to_tensor(&tower.second, mixed3()),
            riemann: to_tensor(&tower.riemann, vec![Variance::Covariant; 4]),
            nabla_r: tower.nabla.as_ref().map(|t| to_tensor(t, vec![Variance::Covariant; 5])),
            nabla2_r: tower.nabla2.as_ref().map(|t| to_tensor(t, vec![Variance::Covariant; 6])),
        })
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// `nabla R`, or a derivative-order error if the package stops at `R`.
    pub fn nabla(&self) -> Result<&Tensor> {
        self.nabla_r.as_ref().ok_or(Error::DerivativeOrder(3))
    }

    pub fn nabla2(&self) -> Result<&Tensor> {
        self.nabla2_r.as_ref().ok_or(Error::DerivativeOrder(4))
    }

    /// Component lists with index tuples; zeros are omitted.
    pub fn to_json(&self, labels: &[String], tol: f64) -> Value {
        let list = |t: &Tensor| -> Value {
            t.nonzero_components(tol)
                .into_iter()
                .map(|(idx, v)| {
                    let names: Vec<&str> = idx.iter().map(|&i| labels[i].as_str()).collect();
                    json!({ "index": idx, "labels": names, "value": v })
                })
                .collect()
        };
        let mut out = json!({
            "point": self.point,
            "metric": list(&self.g.to_tensor()),
            "christoffel": list(&self.gamma),
            "riemann": list(&self.riemann),
        });
        if let Some(t) = &self.nabla_r {
            out["nabla_r"] = list(t);
        }
        if let Some(t) = &self.nabla2_r {
            out["nabla2_r"] = list(t);
        }
        out
    }
}

fn mixed3() -> Vec<Variance> {
    vec![Variance::Covariant, Variance::Covariant, Variance::Contravariant]
}

fn to_tensor(jt: &JetTensor, variances: Vec<Variance>) -> Tensor {
    Tensor::from_data(jt.n, variances, jt.values()).expect("jet tensor shape")
}

/// All jet stages for a metric jet of degree `order`.
struct Tower {
    second: JetTensor,
    riemann: JetTensor,
    nabla: Option<JetTensor>,
    nabla2: Option<JetTensor>,
}

impl Tower {
    fn build(space: &JetSpace, g: &JetTensor, order: usize) -> Result<Tower> {
        let (first, second) = christoffel_jets(space, g, order - 1)?;
        let riemann = riemann_jet(space, &first, &second, order - 2);
        let nabla = (order >= 3).then(|| covariant_derivative_jet(space, &riemann, &second, order - 3));
        let nabla2 = match &nabla {
            Some(nr) if order >= 4 => Some(covariant_derivative_jet(space, nr, &second, order - 4)),
            _ => None,
        };
        Ok(Tower {
            second,
            riemann,
            nabla,
            nabla2,
        })
    }
}

/// Jet of `g^{-1}` to degree `deg` via the Neumann series
/// `sum_m (-A N)^m A`, `A = g(P)^{-1}`, `N = g - g(P)`.
fn inverse_jet(space: &JetSpace, g: &JetTensor, deg: usize) -> Result<JetTensor> {
    let n = g.n;
    let g0 = BilinearForm::new(DMatrix::from_row_slice(n, n, &g.values()))?;
    let a = g0.inverse()?;
    let mut nil = JetTensor::zeros(space, n, 2, deg);
    for c in 0..n * n {
        let src = g.jet(c);
        let dst = nil.jet_mut(c);
        let len = dst.len().min(src.len());
        dst[1..len].copy_from_slice(&src[1..len]);
    }
    let mut term = JetTensor::zeros(space, n, 2, deg);
    for i in 0..n {
        for j in 0..n {
            term.jet_mut(i * n + j)[0] = a[(i, j)];
        }
    }
    let mut total = term.clone();
    for _ in 0..deg {
        // term <- -A (N term)
        let prod = matmul_jet(space, &nil, &term, deg);
        let mut next = JetTensor::zeros(space, n, 2, deg);
        for i in 0..n {
            for k in 0..n {
                let w = a[(i, k)];
                if w == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let src = prod.jet(k * n + j);
                    let dst = next.jet_mut(i * n + j);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d -= w * s;
                    }
                }
            }
        }
        for (t, v) in total.data.iter_mut().zip(&next.data) {
            *t += v;
        }
        term = next;
    }
    Ok(total)
}

fn matmul_jet(space: &JetSpace, a: &JetTensor, b: &JetTensor, deg: usize) -> JetTensor {
    let n = a.n;
    let mut out = JetTensor::zeros(space, n, 2, deg);
    for i in 0..n {
        for k in 0..n {
            if a.is_zero(i * n + k) {
                continue;
            }
            for j in 0..n {
                if b.is_zero(k * n + j) {
                    continue;
                }
                let c = i * n + j;
                let mut acc = vec![0.0; out.stride];
                space.mul_acc(&mut acc, a.jet(i * n + k), b.jet(k * n + j), 1.0, deg);
                for (o, v) in out.jet_mut(c).iter_mut().zip(&acc) {
                    *o += v;
                }
            }
        }
    }
    out
}

/// First-kind `G_abc` and second-kind `G_ab^c` jets, degree `deg`.
fn christoffel_jets(space: &JetSpace, g: &JetTensor, deg: usize) -> Result<(JetTensor, JetTensor)> {
    let n = g.n;
    let ginv = inverse_jet(space, g, deg)?;
    // dg[(a*n + b)*n + v] = d_v g_ab
    let mut dg = JetTensor::zeros(space, n, 3, deg);
    for ab in 0..n * n {
        if g.is_zero(ab) {
            continue;
        }
        for v in 0..n {
            let c = ab * n + v;
            let mut buf = vec![0.0; dg.stride];
            space.diff_into(&mut buf, g.jet(ab), v, deg);
            dg.jet_mut(c).copy_from_slice(&buf);
        }
    }
    let mut first = JetTensor::zeros(space, n, 3, deg);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let parts = [(dg.flat(&[b, c, a]), 0.5), (dg.flat(&[a, c, b]), 0.5), (dg.flat(&[a, b, c]), -0.5)];
                let stride = first.stride;
                let mut buf = vec![0.0; stride];
                for (comp, w) in parts {
                    for (o, v) in buf.iter_mut().zip(dg.jet(comp)) {
                        *o += w * v;
                    }
                }
                let dst = first.flat(&[a, b, c]);
                first.jet_mut(dst).copy_from_slice(&buf);
            }
        }
    }
    let mut second = JetTensor::zeros(space, n, 3, deg);
    for a in 0..n {
        for b in 0..n {
            for l in 0..n {
                let fc = first.flat(&[a, b, l]);
                if first.is_zero(fc) {
                    continue;
                }
                for k in 0..n {
                    if ginv.is_zero(k * n + l) {
                        continue;
                    }
                    let dst = second.flat(&[a, b, k]);
                    let mut buf = second.jet(dst).to_vec();
                    space.mul_acc(&mut buf, ginv.jet(k * n + l), first.jet(fc), 1.0, deg);
                    second.jet_mut(dst).copy_from_slice(&buf);
                }
            }
        }
    }
    Ok((first, second))
}

/// `nonzero[a*n + b]` lists `c` with `G_ab^c` not identically zero.
fn nonzero_second(second: &JetTensor) -> Vec<Vec<usize>> {
    let n = second.n;
    (0..n * n)
        .map(|ab| (0..n).filter(|&c| !second.is_zero(ab * n + c)).collect())
        .collect()
}

fn riemann_jet(space: &JetSpace, first: &JetTensor, second: &JetTensor, deg: usize) -> JetTensor {
    let n = first.n;
    let nz = nonzero_second(second);
    let mut out = JetTensor::zeros(space, n, 4, deg);
    let mut buf = vec![0.0; out.stride];
    let mut tmp = vec![0.0; out.stride];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    for (x, y, sign) in [(a, b, 1.0), (b, a, -1.0)] {
                        let fc = first.flat(&[y, c, d]);
                        if !first.is_zero(fc) {
                            space.diff_into(&mut tmp, first.jet(fc), x, deg);
                            for (o, v) in buf.iter_mut().zip(&tmp) {
                                *o += sign * v;
                            }
                        }
                        // -/+ G^k_{yc} G_{xdk}
                        for &k in &nz[y * n + c] {
                            let fx = first.flat(&[x, d, k]);
                            if !first.is_zero(fx) {
                                space.mul_acc(&mut buf, second.jet(second.flat(&[y, c, k])), first.jet(fx), -sign, deg);
                            }
                        }
                    }
                    let dst = out.flat(&[a, b, c, d]);
                    out.jet_mut(dst).copy_from_slice(&buf);
                }
            }
        }
    }
    out
}

/// `(nabla T)(a_1..a_k; e) = d_e T - sum_s G^m_{e a_s} T(..m..)`, degree `deg`.
fn covariant_derivative_jet(space: &JetSpace, t: &JetTensor, second: &JetTensor, deg: usize) -> JetTensor {
    let n = t.n;
    let rank = t.rank;
    let nz = nonzero_second(second);
    let mut out = JetTensor::zeros(space, n, rank + 1, deg);
    let mut idx = vec![0usize; rank];
    let mut buf = vec![0.0; out.stride];
    let pow: Vec<usize> = (0..rank).map(|s| n.pow((rank - 1 - s) as u32)).collect();
    for comp in 0..t.components() {
        let mut rest = comp;
        for s in 0..rank {
            idx[s] = rest / pow[s];
            rest %= pow[s];
        }
        for e in 0..n {
            buf.iter_mut().for_each(|v| *v = 0.0);
            if !t.is_zero(comp) {
                space.diff_into(&mut buf, t.jet(comp), e, deg);
            }
            for s in 0..rank {
                for &m in &nz[e * n + idx[s]] {
                    let other = comp - idx[s] * pow[s] + m * pow[s];
                    if t.is_zero(other) {
                        continue;
                    }
                    let gj = second.jet(second.flat(&[e, idx[s], m]));
                    space.mul_acc(&mut buf, gj, t.jet(other), -1.0, deg);
                }
            }
            out.jet_mut(comp * n + e).copy_from_slice(&buf);
        }
    }
    out
}

/// Packs `tensors[k]` (rank `rank + k`, trailing slots are derivative
/// directions) into a degree-`tensors.len() - 1` jet tensor.
fn jets_from_partials(tensors: &[&Tensor], rank: usize) -> Result<(Arc<JetSpace>, JetTensor)> {
    let n = tensors[0].dim();
    let deg = tensors.len() - 1;
    for (k, t) in tensors.iter().enumerate() {
        if t.rank() != rank + k {
            return Err(Error::RankMismatch {
                expected: rank + k,
                found: t.rank(),
            });
        }
        if t.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: t.dim(),
            });
        }
    }
    let space = JetSpace::get(n, deg);
    let mut jt = JetTensor::zeros(&space, n, rank, deg);
    let mut full = Vec::with_capacity(rank + deg);
    for (comp, idx) in crate::tensor::IndexIter::new(n, rank).enumerate() {
        for j in 0..space.len(deg) {
            let e = space.exponents(j);
            full.clear();
            full.extend_from_slice(&idx);
            for (v, &cnt) in e.iter().enumerate() {
                full.extend(std::iter::repeat(v).take(cnt as usize));
            }
            let k = full.len() - rank;
            let value = tensors[k].get(&full) / space.factorial(j);
            jt.jet_mut(comp)[j] = value;
        }
    }
    Ok((space, jt))
}

fn check_metric_shape(g: &BilinearForm, t: &Tensor, rank: usize) -> Result<()> {
    if t.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: t.dim(),
        });
    }
    if t.rank() != rank {
        return Err(Error::RankMismatch {
            expected: rank,
            found: t.rank(),
        });
    }
    Ok(())
}

/// `G_ab^c` of a family at `point`, stored at `[a, b, c]`.
pub fn connection(spec: &FamilySpec, point: &[f64]) -> Result<Tensor> {
    let (_, gj) = spec.metric_jet(point, 1)?;
    let n = gj.n;
    let g = DMatrix::from_fn(n, n, |a, b| gj.jet(a * n + b)[0]);
    let det = g.determinant();
    let ginv = g.try_inverse().ok_or(Error::SingularMetric { det })?;
    // dg[(a*n + b)*n + v] = d_v g_ab
    let mut dg = vec![0.0; n * n * n];
    for ab in 0..n * n {
        if !gj.is_zero(ab) {
            dg[ab * n..(ab + 1) * n].copy_from_slice(&gj.jet(ab)[1..]);
        }
    }
    let mut data = vec![0.0; n * n * n];
    for a in 0..n {
        for b in a..n {
            for d in 0..n {
                let first = 0.5 * (dg[(b * n + d) * n + a] + dg[(a * n + d) * n + b] - dg[(a * n + b) * n + d]);
                if first == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let w = ginv[(c, d)];
                    if w != 0.0 {
                        data[(a * n + b) * n + c] += w * first;
                    }
                }
            }
            if a != b {
                for c in 0..n {
                    data[(b * n + a) * n + c] = data[(a * n + b) * n + c];
                }
            }
        }
    }
    Tensor::from_data(n, mixed3(), data)
}

/// First-kind `G_abc` (all covariant) and second-kind `G_ab^c` from `g(P)`
/// and `dg[a, b, i] = d_i g_ab (P)`.
pub fn christoffels(g: &BilinearForm, dg: &Tensor) -> Result<(Tensor, Tensor)> {
    check_metric_shape(g, dg, 3)?;
    let gt = g.to_tensor();
    let (space, gj) = jets_from_partials(&[&gt, dg], 2)?;
    let (first, second) = christoffel_jets(&space, &gj, 0)?;
    Ok((to_tensor(&first, vec![Variance::Covariant; 3]), to_tensor(&second, mixed3())))
}

/// `R_abcd(P)` from `g`, first partials `dg[a,b,i]` and second partials
/// `d2g[a,b,i,j]`.
pub fn riemann(g: &BilinearForm, dg: &Tensor, d2g: &Tensor) -> Result<Tensor> {
    check_metric_shape(g, dg, 3)?;
    check_metric_shape(g, d2g, 4)?;
    let gt = g.to_tensor();
    let (space, gj) = jets_from_partials(&[&gt, dg, d2g], 2)?;
    let (first, second) = christoffel_jets(&space, &gj, 1)?;
    Ok(to_tensor(&riemann_jet(&space, &first, &second, 0), vec![Variance::Covariant; 4]))
}

/// Covariant derivative of an all-covariant tensor `t` given its partials
/// `dt[.., e] = d_e t(..)` and the connection `gamma[a, b, c] = G_ab^c`.
pub fn covariant_derivative(gamma: &Tensor, t: &Tensor, dt: &Tensor) -> Result<Tensor> {
    if gamma.rank() != 3 {
        return Err(Error::RankMismatch {
            expected: 3,
            found: gamma.rank(),
        });
    }
    if !t.is_covariant() {
        let slot = t.variances().iter().position(|v| *v == Variance::Contravariant).unwrap_or(0);
        return Err(Error::ContravariantSlot(slot));
    }
    let (space, tj) = jets_from_partials(&[t, dt], t.rank())?;
    let n = t.dim();
    if gamma.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: gamma.dim(),
        });
    }
    let mut gj = JetTensor::zeros(&space, n, 3, 0);
    for (c, v) in gamma.data().iter().enumerate() {
        gj.jet_mut(c)[0] = *v;
    }
    let out = covariant_derivative_jet(&space, &tj, &gj, 0);
    Ok(to_tensor(&out, vec![Variance::Covariant; t.rank() + 1]))
}

/// `nabla R(a,b,c,d; e)` from `R` and `dr[a,b,c,d,e] = d_e R_abcd`.
pub fn covariant_derivative_r(gamma: &Tensor, r: &Tensor, dr: &Tensor) -> Result<Tensor> {
    if r.rank() != 4 {
        return Err(Error::RankMismatch {
            expected: 4,
            found: r.rank(),
        });
    }
    covariant_derivative(gamma, r, dr)
}

/// `nabla^2 R(a,b,c,d; e, f)` from `nabla R` and its partials.
pub fn second_covariant_derivative_r(gamma: &Tensor, nabla_r: &Tensor, d_nabla_r: &Tensor) -> Result<Tensor> {
    if nabla_r.rank() != 5 {
        return Err(Error::RankMismatch {
            expected: 5,
            found: nabla_r.rank(),
        });
    }
    covariant_derivative(gamma, nabla_r, d_nabla_r)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub max_violation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    /// Absolute threshold actually applied: `tol * max(1, max |A|)`.
    pub threshold: f64,
    pub checks: Vec<IdentityCheck>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn max_violation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_violation).fold(0.0, f64::max)
    }

    fn new(tensor: &Tensor, tol: f64, violations: Vec<(&'static str, f64)>) -> Self {
        let threshold = tol * tensor.max_abs().max(1.0);
        SymmetryReport {
            threshold,
            checks: violations
                .into_iter()
                .map(|(name, v)| IdentityCheck {
                    name,
                    max_violation: v,
                    pass: v <= threshold,
                })
                .collect(),
        }
    }
}

fn algebraic_violations(a: &Tensor) -> Vec<(&'static str, f64)> {
    let mut worst = [0.0f64; 4];
    let mut swapped = vec![0usize; a.rank()];
    let mut put = |i: &[usize], p: [usize; 4]| {
        swapped[..4].copy_from_slice(&p);
        swapped[4..].copy_from_slice(&i[4..]);
        a.get(&swapped)
    };
    for idx in a.indices() {
        let [x, y, z, w] = [idx[0], idx[1], idx[2], idx[3]];
        let v = a.get(&idx);
        worst[0] = worst[0].max((v + put(&idx, [y, x, z, w])).abs());
        worst[1] = worst[1].max((v + put(&idx, [x, y, w, z])).abs());
        worst[2] = worst[2].max((v - put(&idx, [z, w, x, y])).abs());
        worst[3] = worst[3].max((v + put(&idx, [y, z, x, w]) + put(&idx, [z, x, y, w])).abs());
    }
    vec![
        ("antisymmetry_12", worst[0]),
        ("antisymmetry_34", worst[1]),
        ("pair_symmetry", worst[2]),
        ("first_bianchi", worst[3]),
    ]
}

fn check_covariant_rank(a: &Tensor, rank: usize) -> Result<()> {
    if a.rank() != rank {
        return Err(Error::RankMismatch {
            expected: rank,
            found: a.rank(),
        });
    }
    if let Some(slot) = a.variances().iter().position(|v| *v == Variance::Contravariant) {
        return Err(Error::ContravariantSlot(slot));
    }
    Ok(())
}

/// Antisymmetries, pair symmetry and first Bianchi for a rank-4 tensor.
pub fn check_curvature_symmetries(a: &Tensor, tol: f64) -> Result<SymmetryReport> {
    check_covariant_rank(a, 4)?;
    Ok(SymmetryReport::new(a, tol, algebraic_violations(a)))
}

/// The rank-4 identities in the first four slots for each fixed fifth slot,
/// plus `A(x,y,z,w;v) + A(x,y,w,v;z) + A(x,y,v,z;w) = 0`.
pub fn check_nabla_symmetries(a: &Tensor, tol: f64) -> Result<SymmetryReport> {
    check_covariant_rank(a, 5)?;
    let mut violations = algebraic_violations(a);
    let mut worst = 0.0f64;
    for idx in a.indices() {
        let [x, y, z, w, v] = [idx[0], idx[1], idx[2], idx[3], idx[4]];
        let s = a.get(&idx) + a.get(&[x, y, w, v, z]) + a.get(&[x, y, v, z, w]);
        worst = worst.max(s.abs());
    }
    violations.push(("second_bianchi", worst));
    Ok(SymmetryReport::new(a, tol, violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::set_with_symmetries;
    use crate::profile::ScalarProfile;

    #[test]
    fn flat_metric_has_no_connection_or_curvature() {
        let g = BilinearForm::identity(3);
        let dg = Tensor::covariant(3, 3);
        let d2g = Tensor::covariant(3, 4);
        let (first, second) = christoffels(&g, &dg).unwrap();
        assert_eq!(first.max_abs(), 0.0);
        assert_eq!(second.max_abs(), 0.0);
        assert_eq!(riemann(&g, &dg, &d2g).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn two_sphere_curvature() {
        // g = dth^2 + sin^2 th dph^2 at th = 0.7: R(th,ph,ph,th) = sin^2 th
        let th: f64 = 0.7;
        let (s, c) = th.sin_cos();
        let g = BilinearForm::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s * s])).unwrap();
        let mut dg = Tensor::covariant(2, 3);
        dg.set(&[1, 1, 0], 2.0 * s * c);
        let mut d2g = Tensor::covariant(2, 4);
        d2g.set(&[1, 1, 0, 0], 2.0 * (c * c - s * s));
        let (_, second) = christoffels(&g, &dg).unwrap();
        assert!((second.get(&[1, 1, 0]) + s * c).abs() < 1e-14);
        assert!((second.get(&[0, 1, 1]) - c / s).abs() < 1e-14);
        let r = riemann(&g, &dg, &d2g).unwrap();
        assert!((r.get(&[0, 1, 1, 0]) - s * s).abs() < 1e-14);
        assert!((r.get(&[0, 1, 0, 1]) + s * s).abs() < 1e-14);
    }

    #[test]
    fn singular_metric_rejected() {
        let g = BilinearForm::zeros(2);
        let dg = Tensor::covariant(2, 3);
        assert!(matches!(christoffels(&g, &dg), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn package_depths() {
        let spec = FamilySpec::symmetric(3, 2).unwrap();
        let p = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let pkg = CurvaturePackage::compute(&spec, &p, Depth::Riemann).unwrap();
        assert!(pkg.nabla().is_err());
        let pkg = CurvaturePackage::compute(&spec, &p, Depth::Nabla2).unwrap();
        assert!(pkg.nabla2().unwrap().max_abs() < 1e-12);
        let f1 = FamilySpec::symmetric(1, 2).unwrap();
        assert!(matches!(
            CurvaturePackage::compute(&f1, &[0.0; 4], Depth::Nabla2),
            Err(Error::DerivativeOrder(_))
        ));
    }

    #[test]
    fn family3_second_derivative_patterns() {
        // psi = u^4 at u_r = 0.5, u_{r-1} = 0.8
        let spec = FamilySpec::family3(2, ScalarProfile::monomial(1.0, 4)).unwrap();
        let p = [0.8, 0.5, 0.3, -0.2, 0.1, 0.4];
        let pkg = CurvaturePackage::compute(&spec, &p, Depth::Nabla2).unwrap();
        let n2 = pkg.nabla2().unwrap();
        let (x, ur) = (4, 1);
        assert!((n2.get(&[x, ur, ur, x, ur, ur]) - 24.0).abs() < 1e-10);
        // psi''' = 24 u = 12; the standard formula gives -u_{r-1} psi'''
        assert!((n2.get(&[x, ur, ur, x, x, x]) + 0.8 * 12.0).abs() < 1e-10);
        assert!(n2.get(&[x, ur, ur, x, x, ur]).abs() < 1e-10);
    }

    #[test]
    fn symmetry_checks() {
        let mut a = Tensor::covariant(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    set_with_symmetries(&mut a, [i, j, j, i], &[], 1.0);
                }
            }
        }
        assert!(check_curvature_symmetries(&a, 1e-12).unwrap().passed());
        let mut bad = a.clone();
        bad.set(&[0, 1, 1, 0], 1.0 + 1e-3);
        let rep = check_curvature_symmetries(&bad, 1e-10).unwrap();
        assert!(!rep.passed());
        assert!((rep.max_violation() - 1e-3).abs() < 1e-9);
        assert!(check_curvature_symmetries(&Tensor::covariant(3, 4), 0.0).unwrap().passed());
        assert!(check_nabla_symmetries(&Tensor::covariant(3, 5), 0.0).unwrap().passed());
        assert!(matches!(
            check_curvature_symmetries(&Tensor::covariant(3, 3), 1e-10),
            Err(Error::RankMismatch { .. })
        ));
    }

    #[test]
    fn model_nabla_tensor_passes() {
        // A^1(X, U_r, U_r, X; U_r) = 1 in dimension 2r + 2 with r = 2
        let mut a1 = Tensor::covariant(6, 5);
        set_with_symmetries(&mut a1, [4, 1, 1, 4], &[1], 1.0);
        assert!(check_nabla_symmetries(&a1, 0.0).unwrap().passed());
    }
}
