//! The three metric families and their closed-form curvature data.
//!
//! Coordinates are stored in chart order:
//!
//! * family 1 on `R^{2p}`: `(x_1..x_p, y_1..y_p)`
//! * family 2 on `R^{3s}`: `(u_1..u_s, t_1..t_s, v_1..v_s)`
//! * family 3 on `R^{2r+2}`: `(u_1..u_r, v_1..v_r, x, y)`

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::jet::{JetSpace, JetTensor};
use crate::profile::{MultiProfile, ScalarProfile, Term, MAX_DERIVATIVE_ORDER};
use crate::tensor::{BilinearForm, Tensor, Variance};

#[derive(Debug, Clone)]
pub enum FamilySpec {
    /// Neutral signature `(p, p)`, profile `f(x_1..x_p)`.
    Family1 { p: usize, f: MultiProfile },
    /// Signature `(2s, s)`, profile `F = f_1(u_1) + .. + f_s(u_s)`.
    Family2 { s: usize, f: Vec<ScalarProfile> },
    /// Signature `(r+1, r+1)`, profile `psi(u_r)`.
    Family3 { r: usize, psi: ScalarProfile },
}

impl FamilySpec {
    pub fn family1(p: usize, f: MultiProfile) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParameter(format!("family 1 needs p >= 2, got {p}")));
        }
        if f.nvars() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: f.nvars(),
            });
        }
        Ok(FamilySpec::Family1 { p, f })
    }

    pub fn family2(s: usize, f: Vec<ScalarProfile>) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidParameter(format!("family 2 needs s >= 2, got {s}")));
        }
        if f.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: f.len(),
            });
        }
        Ok(FamilySpec::Family2 { s, f })
    }

    pub fn family3(r: usize, psi: ScalarProfile) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidParameter(format!("family 3 needs r >= 2, got {r}")));
        }
        Ok(FamilySpec::Family3 { r, psi })
    }

    /// The symmetric-space member of each family: `f = sum x_i^2`,
    /// `F = -sum u_i^4 / 6`, `psi = u_r^2`.
    pub fn symmetric(family: u8, size: usize) -> Result<Self> {
        match family {
            1 => Self::family1(size, MultiProfile::sum_of_squares(size)),
            2 => Self::family2(size, vec![ScalarProfile::monomial(-1.0 / 6.0, 4); size]),
            3 => Self::family3(size, ScalarProfile::monomial(1.0, 2)),
            other => Err(Error::InvalidParameter(format!("unknown family {other}"))),
        }
    }

    pub fn family_number(&self) -> u8 {
        match self {
            FamilySpec::Family1 { .. } => 1,
            FamilySpec::Family2 { .. } => 2,
            FamilySpec::Family3 { .. } => 3,
        }
    }

    /// `p`, `s` or `r`.
    pub fn size(&self) -> usize {
        match self {
            FamilySpec::Family1 { p, .. } => *p,
            FamilySpec::Family2 { s, .. } => *s,
            FamilySpec::Family3 { r, .. } => *r,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FamilySpec::Family1 { p, .. } => 2 * p,
            FamilySpec::Family2 { s, .. } => 3 * s,
            FamilySpec::Family3 { r, .. } => 2 * r + 2,
        }
    }

    /// Deepest metric derivative the profile oracles can support.
    pub fn max_metric_order(&self) -> usize {
        match self {
            // g is quadratic in first partials of f.
            FamilySpec::Family1 { .. } => MAX_DERIVATIVE_ORDER - 1,
            _ => MAX_DERIVATIVE_ORDER,
        }
    }

    pub fn coordinate_labels(&self) -> Vec<String> {
        match self {
            FamilySpec::Family1 { p, .. } => (1..=*p)
                .map(|i| format!("x{i}"))
                .chain((1..=*p).map(|i| format!("y{i}")))
                .collect(),
            FamilySpec::Family2 { s, .. } => ["u", "t", "v"]
                .iter()
                .flat_map(|c| (1..=*s).map(move |i| format!("{c}{i}")))
                .collect(),
            FamilySpec::Family3 { r, .. } => (1..=*r)
                .map(|i| format!("u{i}"))
                .chain((1..=*r).map(|i| format!("v{i}")))
                .chain(["x".to_string(), "y".to_string()])
                .collect(),
        }
    }

    pub fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: point.len(),
            });
        }
        Ok(())
    }

    /// Hessian of `f` at the x-part of `point` (family 1 only).
    pub fn hessian_at(&self, point: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            FamilySpec::Family1 { p, f } => {
                self.check_point(point)?;
                f.hessian(&point[..*p])
            }
            _ => Err(Error::InvalidParameter("Hessian is defined for family 1 only".into())),
        }
    }

    /// Metric components at `point`, evaluated directly from the definitions.
    pub fn metric_at(&self, point: &[f64]) -> Result<BilinearForm> {
        self.check_point(point)?;
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        match self {
            FamilySpec::Family1 { p, f } => {
                let grad = f.gradient(&point[..*p])?;
                for i in 0..*p {
                    for j in 0..*p {
                        m[(i, j)] = grad[i] * grad[j];
                    }
                    m[(i, p + i)] = 1.0;
                    m[(p + i, i)] = 1.0;
                }
            }
            FamilySpec::Family2 { s, f } => {
                let s = *s;
                let big_f: f64 = (0..s).map(|k| f[k].value(point[k])).sum();
                let ut: f64 = (0..s).map(|k| point[k] * point[s + k]).sum();
                for i in 0..s {
                    m[(i, i)] = -2.0 * (big_f + ut);
                    m[(i, 2 * s + i)] = 1.0;
                    m[(2 * s + i, i)] = 1.0;
                    m[(s + i, s + i)] = -1.0;
                }
            }
            FamilySpec::Family3 { r, psi } => {
                let r = *r;
                let (x, y) = (2 * r, 2 * r + 1);
                m[(x, y)] = 1.0;
                m[(y, x)] = 1.0;
                for i in 0..r {
                    m[(i, r + i)] = 1.0;
                    m[(r + i, i)] = 1.0;
                }
                let mixed: f64 = (0..r - 1).map(|i| point[i] * point[r + i + 1]).sum();
                m[(x, x)] = -2.0 * mixed - 2.0 * psi.value(point[r - 1]);
            }
        }
        BilinearForm::new(m)
    }

    /// Jets of every metric component to degree `order` at `point`.
    pub(crate) fn metric_jet(&self, point: &[f64], order: usize) -> Result<(Arc<JetSpace>, JetTensor)> {
        self.check_point(point)?;
        if order > self.max_metric_order() {
            return Err(Error::DerivativeOrder(order + (MAX_DERIVATIVE_ORDER - self.max_metric_order())));
        }
        let n = self.dim();
        let one = |jt: &mut JetTensor, a: usize, b: usize, v: f64| {
            let c = jt.flat(&[a, b]);
            jt.jet_mut(c)[0] = v;
        };
        match self {
            FamilySpec::Family1 { p, f } => {
                let p = *p;
                let space = JetSpace::get(n, order + 1);
                let x = &point[..p];
                let mut fjet = vec![0.0; space.len(order + 1)];
                for (k, slot) in fjet.iter_mut().enumerate() {
                    let e = space.exponents(k);
                    if e[p..].iter().any(|&d| d > 0) {
                        continue;
                    }
                    let alpha: Vec<usize> = e[..p].iter().map(|&d| d as usize).collect();
                    *slot = f.partial(x, &alpha)? / space.factorial(k);
                }
                let grads: Vec<Vec<f64>> = (0..p)
                    .map(|i| {
                        let mut d = vec![0.0; space.len(order)];
                        space.diff_into(&mut d, &fjet, i, order);
                        d
                    })
                    .collect();
                let mut g = JetTensor::zeros(&space, n, 2, order);
                for i in 0..p {
                    for j in 0..p {
                        let c = g.flat(&[i, j]);
                        space.mul_acc(g.jet_mut(c), &grads[i], &grads[j], 1.0, order);
                    }
                    one(&mut g, i, p + i, 1.0);
                    one(&mut g, p + i, i, 1.0);
                }
                Ok((space, g))
            }
            FamilySpec::Family2 { s, f } => {
                let s = *s;
                let space = JetSpace::get(n, order);
                let len = space.len(order);
                let mut uu = vec![0.0; len];
                for k in 0..s {
                    let derivs = f[k].derivatives(point[k], order)?;
                    let fk = space.compose_scalar(&derivs, k, order);
                    for (acc, v) in uu.iter_mut().zip(&fk) {
                        *acc += v;
                    }
                    let u = space.variable(k, point[k], order);
                    let t = space.variable(s + k, point[s + k], order);
                    space.mul_acc(&mut uu, &u, &t, 1.0, order);
                }
                uu.iter_mut().for_each(|v| *v *= -2.0);
                let mut g = JetTensor::zeros(&space, n, 2, order);
                for i in 0..s {
                    let c = g.flat(&[i, i]);
                    g.jet_mut(c).copy_from_slice(&uu);
                    one(&mut g, i, 2 * s + i, 1.0);
                    one(&mut g, 2 * s + i, i, 1.0);
                    one(&mut g, s + i, s + i, -1.0);
                }
                Ok((space, g))
            }
            FamilySpec::Family3 { r, psi } => {
                let r = *r;
                let space = JetSpace::get(n, order);
                let (x, y) = (2 * r, 2 * r + 1);
                let mut xx = space.compose_scalar(&psi.derivatives(point[r - 1], order)?, r - 1, order);
                for i in 0..r - 1 {
                    let u = space.variable(i, point[i], order);
                    let v = space.variable(r + i + 1, point[r + i + 1], order);
                    space.mul_acc(&mut xx, &u, &v, 1.0, order);
                }
                xx.iter_mut().for_each(|v| *v *= -2.0);
                let mut g = JetTensor::zeros(&space, n, 2, order);
                let c = g.flat(&[x, x]);
                g.jet_mut(c).copy_from_slice(&xx);
                one(&mut g, x, y, 1.0);
                one(&mut g, y, x, 1.0);
                for i in 0..r {
                    one(&mut g, i, r + i, 1.0);
                    one(&mut g, r + i, i, 1.0);
                }
                Ok((space, g))
            }
        }
    }

    /// Exact partial derivatives of the metric up to `order`.
    pub fn metric_partials(&self, point: &[f64], order: usize) -> Result<MetricPartials> {
        let (space, jets) = self.metric_jet(point, order)?;
        Ok(MetricPartials { space, jets, order })
    }

    /// Connection coefficients `Gamma_ab^c` from the closed-form tables,
    /// stored at index `[a, b, c]`.
    pub fn christoffel_oracle(&self, point: &[f64]) -> Result<Tensor> {
        self.check_point(point)?;
        let n = self.dim();
        let mut gamma = Tensor::zeros(n, vec![Variance::Covariant, Variance::Covariant, Variance::Contravariant]);
        match self {
            FamilySpec::Family1 { p, f } => {
                let p = *p;
                let x = &point[..p];
                let grad = f.gradient(x)?;
                let hess = f.hessian(x)?;
                // Gamma_{ijk} = H_ij f_k lands on d/dy_k.
                for i in 0..p {
                    for j in 0..p {
                        for k in 0..p {
                            gamma.set(&[i, j, p + k], hess[i][j] * grad[k]);
                        }
                    }
                }
            }
            FamilySpec::Family2 { s, f } => {
                let s = *s;
                let (u, t, v) = (|i: usize| i, |i: usize| s + i, |i: usize| 2 * s + i);
                let w: Vec<f64> = (0..s)
                    .map(|k| Ok(f[k].derivative(point[u(k)], 1)? + point[t(k)]))
                    .collect::<Result<_>>()?;
                for i in 0..s {
                    for k in 0..s {
                        let coeff = if k == i { -w[i] } else { w[k] };
                        gamma.set(&[u(i), u(i), v(k)], coeff);
                        gamma.set(&[u(i), u(i), t(k)], -point[u(k)]);
                    }
                    for j in 0..s {
                        if j != i {
                            gamma.set(&[u(i), u(j), v(i)], -w[j]);
                            gamma.set(&[u(i), u(j), v(j)], -w[i]);
                        }
                        gamma.set(&[u(i), t(j), v(i)], -point[u(j)]);
                        gamma.set(&[t(j), u(i), v(i)], -point[u(j)]);
                    }
                }
            }
            FamilySpec::Family3 { r, psi } => {
                let r = *r;
                let (x, y) = (2 * r, 2 * r + 1);
                let (u, v) = (|i: usize| i, |i: usize| r + i);
                let dpsi = psi.derivative(point[u(r - 1)], 1)?;
                for i in 0..r - 1 {
                    gamma.set(&[x, x, u(i + 1)], point[u(i)]);
                    gamma.set(&[x, x, v(i)], point[v(i + 1)]);
                    for (a, b) in [(x, u(i)), (u(i), x)] {
                        gamma.set(&[a, b, y], -point[v(i + 1)]);
                    }
                    for (a, b) in [(x, v(i + 1)), (v(i + 1), x)] {
                        gamma.set(&[a, b, y], -point[u(i)]);
                    }
                }
                gamma.set(&[x, x, v(r - 1)], dpsi);
                // Raised from g(nabla_x d_{u_r}, d_x) = -psi'.
                gamma.set(&[x, u(r - 1), y], -dpsi);
                gamma.set(&[u(r - 1), x, y], -dpsi);
            }
        }
        Ok(gamma)
    }

    /// `(R, nabla R)` from the closed-form component tables, with every
    /// Z_2 image filled in.
    pub fn curvature_oracle(&self, point: &[f64]) -> Result<(Tensor, Tensor)> {
        self.check_point(point)?;
        let n = self.dim();
        let mut riem = Tensor::covariant(n, 4);
        let mut nabla = Tensor::covariant(n, 5);
        match self {
            FamilySpec::Family1 { p, f } => {
                let p = *p;
                let x = &point[..p];
                let h = f.hessian(x)?;
                let mut third = vec![vec![vec![0.0; p]; p]; p];
                for (i, plane) in third.iter_mut().enumerate() {
                    for (j, row) in plane.iter_mut().enumerate() {
                        for (k, v) in row.iter_mut().enumerate() {
                            *v = f.partial_along(x, &[i, j, k])?;
                        }
                    }
                }
                for i in 0..p {
                    for j in 0..p {
                        for k in 0..p {
                            for l in 0..p {
                                riem.set(&[i, j, k, l], h[i][l] * h[j][k] - h[i][k] * h[j][l]);
                                for m in 0..p {
                                    let d = third[i][l][m] * h[j][k] + h[i][l] * third[j][k][m]
                                        - third[i][k][m] * h[j][l]
                                        - h[i][k] * third[j][l][m];
                                    nabla.set(&[i, j, k, l, m], d);
                                }
                            }
                        }
                    }
                }
            }
            FamilySpec::Family2 { s, f } => {
                let s = *s;
                let (u, t) = (|i: usize| i, |i: usize| s + i);
                let u2: f64 = (0..s).map(|k| point[k] * point[k]).sum();
                for i in 0..s {
                    let fi2 = f[i].derivative(point[u(i)], 2)?;
                    let fi3 = f[i].derivative(point[u(i)], 3)?;
                    for j in 0..s {
                        if i == j {
                            continue;
                        }
                        let fj2 = f[j].derivative(point[u(j)], 2)?;
                        set_with_symmetries(&mut riem, [u(i), u(j), u(j), u(i)], &[], fi2 + fj2 + u2);
                        set_with_symmetries(&mut riem, [u(i), u(j), u(j), t(i)], &[], 1.0);
                        set_with_symmetries(&mut nabla, [u(i), u(j), u(j), u(i)], &[u(i)], fi3 + 4.0 * point[u(i)]);
                    }
                }
            }
            FamilySpec::Family3 { r, psi } => {
                let r = *r;
                let x = 2 * r;
                let (u, v) = (|i: usize| i, |i: usize| r + i);
                let ur = point[u(r - 1)];
                set_with_symmetries(&mut riem, [x, u(r - 1), u(r - 1), x], &[], psi.derivative(ur, 2)?);
                for i in 0..r - 1 {
                    set_with_symmetries(&mut riem, [x, u(i), v(i + 1), x], &[], 1.0);
                }
                set_with_symmetries(&mut nabla, [x, u(r - 1), u(r - 1), x], &[u(r - 1)], psi.derivative(ur, 3)?);
            }
        }
        Ok((riem, nabla))
    }
}

/// The eight images of `(a, b, c, d)` under the curvature symmetries
/// `A(x,y,z,w) = -A(y,x,z,w) = A(z,w,x,y)`, with their signs.
pub fn curvature_images(idx: [usize; 4]) -> [([usize; 4], f64); 8] {
    let [a, b, c, d] = idx;
    [
        ([a, b, c, d], 1.0),
        ([b, a, c, d], -1.0),
        ([a, b, d, c], -1.0),
        ([b, a, d, c], 1.0),
        ([c, d, a, b], 1.0),
        ([d, c, a, b], -1.0),
        ([c, d, b, a], -1.0),
        ([d, c, b, a], 1.0),
    ]
}

/// Sets component `(idx; tail)` and all its Z_2 images in the first four
/// slots; trailing derivative slots are left in place.
pub fn set_with_symmetries(t: &mut Tensor, idx: [usize; 4], tail: &[usize], value: f64) {
    let mut full = Vec::with_capacity(4 + tail.len());
    for (img, sign) in curvature_images(idx) {
        full.clear();
        full.extend_from_slice(&img);
        full.extend_from_slice(tail);
        t.set(&full, sign * value);
    }
}

/// Exact metric partials `d^alpha g_ab` at one point, up to a fixed order.
pub struct MetricPartials {
    space: Arc<JetSpace>,
    jets: JetTensor,
    order: usize,
}

impl MetricPartials {
    pub fn dim(&self) -> usize {
        self.jets.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `d_{vars[0]} .. d_{vars[k-1]} g_ab`.
    pub fn partial(&self, a: usize, b: usize, vars: &[usize]) -> Result<f64> {
        if vars.len() > self.order {
            return Err(Error::DerivativeOrder(vars.len()));
        }
        let mut alpha = vec![0usize; self.dim()];
        for &v in vars {
            alpha[v] += 1;
        }
        let k = self.space.index_of(&alpha).expect("within jet degree");
        let jet = self.jets.jet(self.jets.flat(&[a, b]));
        Ok(jet[k] * self.space.factorial(k))
    }

    /// Rank `2 + k` tensor with entry `[a, b, i_1, .., i_k] = d_{i_1..i_k} g_ab`.
    pub fn tensor(&self, k: usize) -> Result<Tensor> {
        if k > self.order {
            return Err(Error::DerivativeOrder(k));
        }
        let n = self.dim();
        let mut err = None;
        let t = Tensor::from_fn(n, vec![Variance::Covariant; 2 + k], |idx| {
            self.partial(idx[0], idx[1], &idx[2..]).unwrap_or_else(|e| {
                err = Some(e);
                0.0
            })
        });
        match err {
            Some(e) => Err(e),
            None => Ok(t),
        }
    }

    pub(crate) fn into_jets(self) -> (Arc<JetSpace>, JetTensor) {
        (self.space, self.jets)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilySpecDef {
    family: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    profiles: Vec<Value>,
}

impl FamilySpec {
    /// Parses `{"family": 1|2|3, "p"|"s"|"r": n, "profiles": [..]}`. For
    /// family 2 a single profile is used for every `f_i`.
    pub fn from_json_value(value: &Value) -> std::result::Result<Self, String> {
        let def: FamilySpecDef = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
        def.try_into()
    }
}

impl TryFrom<FamilySpecDef> for FamilySpec {
    type Error = String;

    fn try_from(def: FamilySpecDef) -> std::result::Result<Self, String> {
        let size = |name: &str, v: Option<usize>| v.ok_or_else(|| format!("missing field `{name}`"));
        let profile = |i: usize| -> std::result::Result<&Value, String> {
            def.profiles
                .get(i)
                .ok_or_else(|| format!("profiles[{i}]: missing profile"))
        };
        let spec = match def.family {
            1 => {
                let p = size("p", def.p)?;
                let f: MultiProfile =
                    serde_json::from_value(profile(0)?.clone()).map_err(|e| format!("profiles[0]: {e}"))?;
                FamilySpec::family1(p, f)
            }
            2 => {
                let s = size("s", def.s)?;
                let count = def.profiles.len();
                if count != 1 && count != s {
                    return Err(format!("profiles: expected 1 or {s} entries, found {count}"));
                }
                let f = (0..s)
                    .map(|i| {
                        let idx = if count == 1 { 0 } else { i };
                        serde_json::from_value::<ScalarProfile>(def.profiles[idx].clone())
                            .map_err(|e| format!("profiles[{idx}]: {e}"))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                FamilySpec::family2(s, f)
            }
            3 => {
                let r = size("r", def.r)?;
                let psi: ScalarProfile =
                    serde_json::from_value(profile(0)?.clone()).map_err(|e| format!("profiles[0]: {e}"))?;
                FamilySpec::family3(r, psi)
            }
            other => return Err(format!("family: expected 1, 2 or 3, found {other}")),
        };
        spec.map_err(|e| e.to_string())
    }
}

impl Serialize for FamilySpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let to_value = |v: std::result::Result<Value, serde_json::Error>| v.map_err(S::Error::custom);
        let def = match self {
            FamilySpec::Family1 { p, f } => FamilySpecDef {
                family: 1,
                p: Some(*p),
                s: None,
                r: None,
                profiles: vec![to_value(serde_json::to_value(f))?],
            },
            FamilySpec::Family2 { s, f } => FamilySpecDef {
                family: 2,
                p: None,
                s: Some(*s),
                r: None,
                profiles: f
                    .iter()
                    .map(|fi| to_value(serde_json::to_value(fi)))
                    .collect::<std::result::Result<_, _>>()?,
            },
            FamilySpec::Family3 { r, psi } => FamilySpecDef {
                family: 3,
                p: None,
                s: None,
                r: Some(*r),
                profiles: vec![to_value(serde_json::to_value(psi))?],
            },
        };
        def.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FamilySpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        FamilySpecDef::deserialize(deserializer)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// Convenience constructor for polynomial terms in tests and fixtures.
pub fn term(exponents: &[usize], coeff: f64) -> Term {
    Term {
        exponents: exponents.to_vec(),
        coeff,
    }
}
