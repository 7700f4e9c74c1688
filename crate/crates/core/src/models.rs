//! Constant model spaces, pointwise normalization onto them, and the
//! algebraic probes used to study their structure.
//!
//! Model bases follow the chart order of the matching family:
//!
//! * `U1p`: `(X_1..X_p, Y_1..Y_p)`
//! * `U2s`: `(U_1..U_s, T_1..T_s, V_1..V_s)`
//! * `U3r`, `U3r1`: `(U_1..U_r, V_1..V_r, X, Y)`

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvaturePackage;
use crate::error::{Error, Result};
use crate::families::{set_with_symmetries, FamilySpec};
use crate::operators::{curvature_operator, SamplerConfig};
use crate::tensor::{BilinearForm, LinearMap, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    U1p,
    U2s,
    U3r,
    U3r1,
}

impl ModelKind {
    /// The 0-model matching a family.
    pub fn for_family(spec: &FamilySpec) -> ModelKind {
        match spec.family_number() {
            1 => ModelKind::U1p,
            2 => ModelKind::U2s,
            _ => ModelKind::U3r,
        }
    }
}

/// `(V, g, A)` or `(V, g, A, A1)` with exact integer components.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    pub kind: ModelKind,
    pub size: usize,
    pub dim: usize,
    pub g: BilinearForm,
    pub a: Tensor,
    pub a1: Option<Tensor>,
}

impl ModelSpace {
    pub fn labels(&self) -> Vec<String> {
        let n = self.size;
        let seq = |c: &'static str| (1..=n).map(move |i| format!("{c}{i}"));
        match self.kind {
            ModelKind::U1p => seq("X").chain(seq("Y")).collect(),
            ModelKind::U2s => seq("U").chain(seq("T")).chain(seq("V")).collect(),
            ModelKind::U3r | ModelKind::U3r1 => seq("U")
                .chain(seq("V"))
                .chain(["X".to_string(), "Y".to_string()])
                .collect(),
        }
    }
}

pub fn build_model(kind: ModelKind, size: usize) -> Result<ModelSpace> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!("model size must be at least 2, got {size}")));
    }
    let n = size;
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let (dim, g, a, a1) = match kind {
        ModelKind::U1p => {
            let dim = 2 * n;
            let g = BilinearForm::from_fn(dim, |i, j| if j == i + n && i < n { 1.0 } else { 0.0 });
            let a = Tensor::from_fn(dim, vec![crate::tensor::Variance::Covariant; 4], |idx| {
                if idx.iter().all(|&k| k < n) {
                    let [i, j, k, l] = [idx[0], idx[1], idx[2], idx[3]];
                    delta(i, l) * delta(j, k) - delta(i, k) * delta(j, l)
                } else {
                    0.0
                }
            });
            (dim, g, a, None)
        }
        ModelKind::U2s => {
            let dim = 3 * n;
            let g = BilinearForm::from_fn(dim, |i, j| {
                if i < n && j == i + 2 * n {
                    1.0
                } else if (n..2 * n).contains(&i) && i == j {
                    -1.0
                } else {
                    0.0
                }
            });
            let mut a = Tensor::covariant(dim, 4);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let v = delta(i, l) * delta(j, k) - delta(i, k) * delta(j, l);
                            if v != 0.0 {
                                set_with_symmetries(&mut a, [i, j, k, n + l], &[], v);
                            }
                        }
                    }
                }
            }
            (dim, g, a, None)
        }
        ModelKind::U3r | ModelKind::U3r1 => {
            let dim = 2 * n + 2;
            let (x, y) = (2 * n, 2 * n + 1);
            let g = BilinearForm::from_fn(dim, |i, j| {
                if (i == x && j == y) || (i < n && j == i + n) {
                    1.0
                } else {
                    0.0
                }
            });
            let mut a = Tensor::covariant(dim, 4);
            set_with_symmetries(&mut a, [x, n - 1, n - 1, x], &[], 1.0);
            for i in 0..n - 1 {
                set_with_symmetries(&mut a, [x, i, n + i + 1, x], &[], 1.0);
            }
            let a1 = (kind == ModelKind::U3r1).then(|| {
                let mut t = Tensor::covariant(dim, 5);
                set_with_symmetries(&mut t, [x, n - 1, n - 1, x], &[n - 1], 1.0);
                t
            });
            (dim, g, a, a1)
        }
    };
    Ok(ModelSpace {
        kind,
        size,
        dim,
        g,
        a,
        a1,
    })
}

/// `R(phi)(x1, x2, x3, x4) = phi(x1, x4) phi(x2, x3) - phi(x1, x3) phi(x2, x4)`.
pub fn curvature_from_bilinear(phi: &BilinearForm) -> Tensor {
    let m = phi.matrix();
    Tensor::from_fn(phi.dim(), vec![crate::tensor::Variance::Covariant; 4], |idx| {
        let [a, b, c, d] = [idx[0], idx[1], idx[2], idx[3]];
        m[(a, d)] * m[(b, c)] - m[(a, c)] * m[(b, d)]
    })
}

/// As [`curvature_from_bilinear`], rejecting non-symmetric input.
pub fn curvature_from_matrix(phi: &DMatrix<f64>) -> Result<Tensor> {
    Ok(curvature_from_bilinear(&BilinearForm::new(phi.clone())?))
}

/// A frame of `T_P M` whose columns realize `Phi_P`.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizedBasis {
    pub point: Vec<f64>,
    pub labels: Vec<String>,
    /// Coordinate components of each basis vector, in model order.
    pub vectors: Vec<Vec<f64>>,
    #[serde(skip)]
    pub map: LinearMap,
}

impl NormalizedBasis {
    fn new(point: &[f64], labels: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let map = LinearMap::from_columns(&vectors)?;
        let det = map.det();
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(Error::SingularMap { det });
        }
        Ok(NormalizedBasis {
            point: point.to_vec(),
            labels,
            vectors,
            map,
        })
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Frame with `H_f(X_i, X_j) = delta_ij` from the Cholesky factor of `H_f`,
/// then shifted along the `Y` directions to make the `X` block null.
pub fn normalize_family1(spec: &FamilySpec, point: &[f64]) -> Result<NormalizedBasis> {
    let FamilySpec::Family1 { p, f } = spec else {
        return Err(Error::InvalidParameter("normalize_family1 needs a family 1 spec".into()));
    };
    let (p, n) = (*p, spec.dim());
    spec.check_point(point)?;
    let h = f.hessian(&point[..p])?;
    let h = DMatrix::from_fn(p, p, |i, j| h[i][j]);
    let l = Cholesky::new(h).ok_or(Error::HessianNotPositive)?.l();
    let xi = l.clone().try_inverse().ok_or(Error::HessianNotPositive)?;
    let grad = f.gradient(&point[..p])?;
    let dxi: Vec<f64> = (0..p).map(|i| (0..p).map(|j| xi[(i, j)] * grad[j]).sum()).collect();

    let ys: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut v = vec![0.0; n];
            for j in 0..p {
                v[p + j] = l[(j, i)];
            }
            v
        })
        .collect();
    let mut xs: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut v = vec![0.0; n];
            for j in 0..p {
                v[j] = xi[(i, j)];
            }
            v
        })
        .collect();
    for (i, x) in xs.iter_mut().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            axpy(-0.5 * dxi[i] * dxi[j], y, x);
        }
    }
    let labels = build_model(ModelKind::U1p, p)?.labels();
    NormalizedBasis::new(point, labels, xs.into_iter().chain(ys).collect())
}

/// `U_i = d_u + eps_i d_t + rho_i d_v`, `T_i = d_t + eps_i d_v`, `V_i = d_v`.
pub fn normalize_family2(spec: &FamilySpec, point: &[f64]) -> Result<NormalizedBasis> {
    let FamilySpec::Family2 { s, f } = spec else {
        return Err(Error::InvalidParameter("normalize_family2 needs a family 2 spec".into()));
    };
    let (s, n) = (*s, spec.dim());
    let g = spec.metric_at(point)?;
    let u2: f64 = point[..s].iter().map(|u| u * u).sum();
    let mut us = Vec::with_capacity(s);
    let mut ts = Vec::with_capacity(s);
    for i in 0..s {
        let eps = -0.5 * f[i].derivative(point[i], 2)? - 0.25 * u2;
        let rho = 0.5 * (eps * eps - g.get(i, i));
        let mut u = unit(n, i);
        u[s + i] = eps;
        u[2 * s + i] = rho;
        let mut t = unit(n, s + i);
        t[2 * s + i] = eps;
        us.push(u);
        ts.push(t);
    }
    let vs = (0..s).map(|i| unit(n, 2 * s + i));
    let labels = build_model(ModelKind::U2s, s)?.labels();
    NormalizedBasis::new(point, labels, us.into_iter().chain(ts).chain(vs).collect())
}

/// `X = e0 (d_x - g_xx/2 d_y)`, `Y = d_y / e0`, `U_i = e_i d_u`,
/// `V_i = d_v / e_i`. Order 0 targets `U3r`, order 1 targets `U3r1`.
pub fn normalize_family3(spec: &FamilySpec, point: &[f64], order: u8) -> Result<NormalizedBasis> {
    let FamilySpec::Family3 { r, psi } = spec else {
        return Err(Error::InvalidParameter("normalize_family3 needs a family 3 spec".into()));
    };
    let (r, n) = (*r, spec.dim());
    let g = spec.metric_at(point)?;
    let ur = point[r - 1];
    let d2 = psi.derivative(ur, 2)?;
    if !(d2 > 0.0) {
        return Err(Error::PsiSecondNotPositive(d2));
    }
    let mut eps = vec![0.0; r];
    let e0 = match order {
        0 => {
            eps.fill(d2.powf(-0.5));
            1.0
        }
        1 => {
            let d3 = psi.derivative(ur, 3)?;
            if d3.abs() <= 1e-12 * d2.max(1.0) {
                return Err(Error::PsiThirdVanishes);
            }
            eps[r - 1] = d2 / d3;
            let e0 = (eps[r - 1] * eps[r - 1] * d2).powf(-0.5);
            for i in (0..r - 1).rev() {
                eps[i] = eps[i + 1] / (e0 * e0);
            }
            e0
        }
        other => return Err(Error::InvalidParameter(format!("normalization order must be 0 or 1, got {other}"))),
    };
    let (x, y) = (2 * r, 2 * r + 1);
    let us = (0..r).map(|i| unit(n, i).into_iter().map(|c| c * eps[i]).collect::<Vec<_>>());
    let vs = (0..r).map(|i| unit(n, r + i).into_iter().map(|c| c / eps[i]).collect::<Vec<_>>());
    let mut xv = vec![0.0; n];
    xv[x] = e0;
    xv[y] = -0.5 * e0 * g.get(x, x);
    let mut yv = vec![0.0; n];
    yv[y] = 1.0 / e0;
    let kind = if order == 0 { ModelKind::U3r } else { ModelKind::U3r1 };
    let labels = build_model(kind, r)?.labels();
    NormalizedBasis::new(point, labels, us.chain(vs).chain([xv, yv]).collect())
}

/// Dispatches on the family; family 3 uses the 0-model normalization.
pub fn normalize(spec: &FamilySpec, point: &[f64]) -> Result<NormalizedBasis> {
    match spec.family_number() {
        1 => normalize_family1(spec, point),
        2 => normalize_family2(spec, point),
        _ => normalize_family3(spec, point, 0),
    }
}

/// Largest single discrepancy found by [`verify_model_match`].
#[derive(Debug, Clone, Serialize)]
pub struct MatchEntry {
    pub tensor: &'static str,
    pub labels: Vec<String>,
    pub model: f64,
    pub manifold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub g_deviation: f64,
    pub a_deviation: f64,
    pub a1_deviation: Option<f64>,
    pub tol: f64,
    pub passed: bool,
    pub worst: Option<MatchEntry>,
}

/// Compares `Phi_P^* g`, `Phi_P^* R` and, if the model has one,
/// `Phi_P^* nabla R` against the model tensors.
pub fn verify_model_match(
    basis: &NormalizedBasis,
    package: &CurvaturePackage,
    model: &ModelSpace,
    tol: f64,
) -> Result<MatchReport> {
    if package.dim() != model.dim || basis.map.target_dim() != model.dim || basis.map.source_dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: basis.map.source_dim(),
        });
    }
    let labels = model.labels();
    let mut worst: Option<(f64, MatchEntry)> = None;
    let mut compare = |name: &'static str, manifold: &Tensor, reference: &Tensor| -> Result<f64> {
        let pulled = manifold.pullback(&basis.map)?;
        let mut dev: f64 = 0.0;
        for (idx, (m, r)) in pulled.indices().zip(pulled.data().iter().zip(reference.data())) {
            let d = (m - r).abs();
            dev = dev.max(d);
            if d > tol && worst.as_ref().map_or(true, |(w, _)| d > *w) {
                worst = Some((
                    d,
                    MatchEntry {
                        tensor: name,
                        labels: idx.iter().map(|&i| labels[i].clone()).collect(),
                        model: *r,
                        manifold: *m,
                    },
                ));
            }
        }
        Ok(dev)
    };
    let g_dev = compare("g", &package.g.to_tensor(), &model.g.to_tensor())?;
    let a_dev = compare("A", &package.riemann, &model.a)?;
    let a1_dev = match &model.a1 {
        Some(a1) => Some(compare("A1", package.nabla()?, a1)?),
        None => None,
    };
    let passed = g_dev <= tol && a_dev <= tol && a1_dev.map_or(true, |d| d <= tol);
    Ok(MatchReport {
        g_deviation: g_dev,
        a_deviation: a_dev,
        a1_deviation: a1_dev,
        tol,
        passed,
        worst: worst.map(|(_, e)| e),
    })
}

/// Orthonormal basis of `{eta : A(e_i, e_j, e_k, eta) = 0 for all i, j, k}`.
pub fn annihilator_of(a: &Tensor, tol: f64) -> Result<Vec<Vec<f64>>> {
    if a.rank() != 4 {
        return Err(Error::RankMismatch {
            expected: 4,
            found: a.rank(),
        });
    }
    let n = a.dim();
    let rows = n * n * n;
    let m = DMatrix::from_fn(rows, n, |row, col| a.data()[row * n + col]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    Ok(svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| sigma_max == 0.0 || **s <= tol * sigma_max)
        .map(|(k, _)| vt.row(k).iter().copied().collect())
        .collect())
}

pub fn annihilator(model: &ModelSpace, tol: f64) -> Result<Vec<Vec<f64>>> {
    annihilator_of(&model.a, tol)
}

/// Reduced algebraic curvature tensors on the quotient by the annihilator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReducedModel {
    /// `B1p` on `R^p = span{X_i}`.
    B1p,
    /// `B2s` on `R^{2s} = span{U_i, T_i}`.
    B2s,
}

pub fn reduced_tensor(which: ReducedModel, size: usize) -> Result<Tensor> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!("model size must be at least 2, got {size}")));
    }
    Ok(match which {
        ReducedModel::B1p => curvature_from_bilinear(&BilinearForm::identity(size)),
        ReducedModel::B2s => {
            let full = build_model(ModelKind::U2s, size)?;
            let keep = 2 * size;
            Tensor::from_fn(keep, full.a.variances().to_vec(), |idx| full.a.get(idx))
        }
    })
}

/// Outcome of [`irreducibility_witness_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct WitnessProbeReport {
    pub model: ReducedModel,
    pub size: usize,
    pub trials: usize,
    /// Largest hypothesis-side component over the constructed pairs.
    pub hypothesis_max: f64,
    /// Largest violation of the conclusion over the constructed pairs.
    pub conclusion_max: f64,
    /// Recovered proportionality factors (`B1p` only).
    pub ratios: Vec<f64>,
    /// Smallest hypothesis-side component over generic pairs.
    pub generic_min: f64,
    pub tol: f64,
    pub passed: bool,
}

fn hypothesis_residual(b: &Tensor, which: ReducedModel, x1: &[f64], x2: &[f64]) -> f64 {
    let n = b.dim();
    let mut worst: f64 = 0.0;
    for e1 in 0..n {
        for e2 in 0..n {
            let mut first = 0.0;
            let mut second = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = x1[i] * x2[j];
                    if w == 0.0 {
                        continue;
                    }
                    first += w * b.get(&[i, j, e1, e2]);
                    second += w * b.get(&[i, e1, e2, j]);
                }
            }
            worst = worst.max(first.abs());
            if which == ReducedModel::B2s {
                worst = worst.max(second.abs());
            }
        }
    }
    worst
}

/// Constructs pairs satisfying the vanishing hypothesis, confirms the
/// stated conclusion on each, and confirms generic pairs break the hypothesis.
pub fn irreducibility_witness_probe(which: ReducedModel, size: usize, cfg: &SamplerConfig) -> Result<WitnessProbeReport> {
    cfg.validate()?;
    let b = reduced_tensor(which, size)?;
    let n = b.dim();
    let tol = 1e-10;
    let mut rng = cfg.rng(0);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-cfg.half_width..cfg.half_width)).collect()
    };
    let mut hypothesis_max: f64 = 0.0;
    let mut conclusion_max: f64 = 0.0;
    let mut ratios = Vec::new();
    let mut generic_min = f64::INFINITY;
    for _ in 0..cfg.count {
        let (x1, x2) = match which {
            ReducedModel::B1p => {
                let x1 = draw(&mut rng);
                let lambda = rng.gen_range(0.5..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let x2: Vec<f64> = x1.iter().map(|v| lambda * v).collect();
                (x1, x2)
            }
            ReducedModel::B2s => {
                let mut x1 = draw(&mut rng);
                let mut x2 = draw(&mut rng);
                x1[..size].fill(0.0);
                x2[..size].fill(0.0);
                (x1, x2)
            }
        };
        hypothesis_max = hypothesis_max.max(hypothesis_residual(&b, which, &x1, &x2));
        match which {
            ReducedModel::B1p => {
                let n11: f64 = x1.iter().map(|v| v * v).sum();
                let lambda = x1.iter().zip(&x2).map(|(a, b)| a * b).sum::<f64>() / n11;
                let resid = x1.iter().zip(&x2).map(|(a, b)| (b - lambda * a).abs()).fold(0.0, f64::max);
                conclusion_max = conclusion_max.max(resid);
                ratios.push(lambda);
            }
            ReducedModel::B2s => {
                let off = x1[..size].iter().chain(&x2[..size]).map(|v| v.abs()).fold(0.0, f64::max);
                conclusion_max = conclusion_max.max(off);
            }
        }
        let g1 = draw(&mut rng);
        let g2 = draw(&mut rng);
        generic_min = generic_min.min(hypothesis_residual(&b, which, &g1, &g2));
    }
    let passed = hypothesis_max <= tol && conclusion_max <= tol && generic_min > tol;
    Ok(WitnessProbeReport {
        model: which,
        size,
        trials: cfg.count,
        hypothesis_max,
        conclusion_max,
        ratios,
        generic_min,
        tol,
        passed,
    })
}

/// Outcome of [`injectivity_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct InjectivityReport {
    pub dim: usize,
    pub pairs: usize,
    /// Smallest `||phi_1 - phi_2||` over the pairs.
    pub min_form_gap: f64,
    /// Smallest `||R(phi_1) - R(phi_2)||` over the pairs.
    pub min_tensor_gap: f64,
    pub passed: bool,
}

/// Distinct positive definite forms must give distinct `R(phi)`.
pub fn injectivity_probe(dim: usize, cfg: &SamplerConfig) -> Result<InjectivityReport> {
    cfg.validate()?;
    if dim < 3 {
        return Err(Error::InvalidParameter(format!("injectivity needs dimension at least 3, got {dim}")));
    }
    let mut rng = cfg.rng(0);
    let random_pd = |rng: &mut rand_chacha::ChaCha8Rng| {
        let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let pd = m.transpose() * &m + DMatrix::identity(dim, dim) * 0.1;
        BilinearForm::from_fn(dim, |i, j| pd[(i, j)])
    };
    let mut min_form_gap = f64::INFINITY;
    let mut min_tensor_gap = f64::INFINITY;
    let mut accepted = 0;
    while accepted < cfg.count {
        let p1 = random_pd(&mut rng);
        // Alternate between independent forms and small perturbations.
        let p2 = if accepted % 2 == 0 {
            random_pd(&mut rng)
        } else {
            let d = random_pd(&mut rng);
            let scale = rng.gen_range(1e-3..1e-1);
            BilinearForm::from_fn(dim, |i, j| p1.get(i, j) + scale * d.get(i, j))
        };
        let form_gap = (p1.matrix() - p2.matrix()).norm();
        if form_gap <= 1e-3 {
            continue;
        }
        let gap = curvature_from_bilinear(&p1).sub(&curvature_from_bilinear(&p2))?.norm();
        min_form_gap = min_form_gap.min(form_gap);
        min_tensor_gap = min_tensor_gap.min(gap);
        accepted += 1;
    }
    Ok(InjectivityReport {
        dim,
        pairs: accepted,
        min_form_gap,
        min_tensor_gap,
        passed: min_tensor_gap > 1e-6,
    })
}

/// One line of the curvature-operator table of `U3r`.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorIdentity {
    pub label: String,
    pub expected: Vec<f64>,
    pub found: Vec<f64>,
    pub exact: bool,
}

/// `A(X,U_r)U_r = Y`, `A(X,U_r)X = -V_r`, and for `i < r`:
/// `A(X,U_i)V_{i+1} = Y`, `A(X,U_i)X = -U_{i+1}`, `A(X,V_{i+1})U_i = Y`,
/// `A(X,V_{i+1})X = -V_i`.
pub fn u3_operator_identities(model: &ModelSpace) -> Result<Vec<OperatorIdentity>> {
    if !matches!(model.kind, ModelKind::U3r | ModelKind::U3r1) {
        return Err(Error::UnsupportedModel(format!("{:?} has no operator table", model.kind)));
    }
    let r = model.size;
    let n = model.dim;
    let (x, y) = (2 * r, 2 * r + 1);
    let u = |i: usize| i;
    let v = |i: usize| r + i;
    let labels = model.labels();
    let neg = |i: usize| unit(n, i).into_iter().map(|c| -c).collect::<Vec<_>>();
    let mut cases: Vec<(usize, usize, usize, Vec<f64>)> = vec![(x, u(r - 1), u(r - 1), unit(n, y)), (x, u(r - 1), x, neg(v(r - 1)))];
    for i in 0..r - 1 {
        cases.push((x, u(i), v(i + 1), unit(n, y)));
        cases.push((x, u(i), x, neg(u(i + 1))));
        cases.push((x, v(i + 1), u(i), unit(n, y)));
        cases.push((x, v(i + 1), x, neg(v(i))));
    }
    cases
        .into_iter()
        .map(|(a, b, c, expected)| {
            let op = curvature_operator(&model.a, &model.g, &unit(n, a), &unit(n, b))?;
            let found = op.apply(&unit(n, c));
            Ok(OperatorIdentity {
                label: format!("A({},{}){}", labels[a], labels[b], labels[c]),
                exact: found == expected,
                expected,
                found,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{check_curvature_symmetries, check_nabla_symmetries, Depth};
    use crate::profile::{MultiProfile, ScalarProfile};

    fn get(m: &ModelSpace, idx: &[usize]) -> f64 {
        m.a.get(idx)
    }

    #[test]
    fn u22_components() {
        let m = build_model(ModelKind::U2s, 2).unwrap();
        // U1 U2 T1 T2 V1 V2
        assert_eq!(m.g.get(0, 4), 1.0);
        assert_eq!(m.g.get(2, 2), -1.0);
        assert_eq!(get(&m, &[0, 1, 1, 2]), 1.0);
        assert_eq!(get(&m, &[1, 0, 1, 2]), -1.0);
        assert_eq!(get(&m, &[2, 1, 1, 0]), 1.0);
        assert_eq!(get(&m, &[0, 0, 0, 2]), 0.0);
    }

    #[test]
    fn u32_components() {
        let m = build_model(ModelKind::U3r, 2).unwrap();
        // U1 U2 V1 V2 X Y
        assert_eq!(get(&m, &[4, 1, 1, 4]), 1.0);
        assert_eq!(get(&m, &[4, 0, 3, 4]), 1.0);
        assert_eq!(m.g.get(4, 5), 1.0);
        assert_eq!(m.g.get(0, 2), 1.0);
    }

    #[test]
    fn model_tensors_satisfy_identities_exactly() {
        for kind in [ModelKind::U1p, ModelKind::U2s, ModelKind::U3r, ModelKind::U3r1] {
            for size in [2, 3] {
                let m = build_model(kind, size).unwrap();
                let rep = check_curvature_symmetries(&m.a, 0.0).unwrap();
                assert_eq!(rep.max_violation(), 0.0, "{kind:?} {size}");
                if let Some(a1) = &m.a1 {
                    assert_eq!(check_nabla_symmetries(a1, 0.0).unwrap().max_violation(), 0.0);
                }
            }
        }
    }

    #[test]
    fn u1p_signature_is_neutral() {
        for p in 2..5 {
            let m = build_model(ModelKind::U1p, p).unwrap();
            let sig = m.g.signature(1e-12).unwrap();
            assert_eq!((sig.neg, sig.pos), (p, p));
        }
    }

    #[test]
    fn small_models_rejected() {
        assert!(build_model(ModelKind::U1p, 1).is_err());
    }

    #[test]
    fn bilinear_curvature() {
        let b = curvature_from_bilinear(&BilinearForm::identity(3));
        let m = build_model(ModelKind::U1p, 3).unwrap();
        for idx in crate::tensor::IndexIter::new(3, 4) {
            assert_eq!(b.get(&idx), m.a.get(&idx));
        }
        assert_eq!(curvature_from_bilinear(&BilinearForm::zeros(3)).max_abs(), 0.0);
        let rep = check_curvature_symmetries(&curvature_from_bilinear(&BilinearForm::from_fn(3, |i, j| (i + 2 * j) as f64)), 0.0).unwrap();
        assert_eq!(rep.max_violation(), 0.0);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(curvature_from_matrix(&asym), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn family1_sum_of_squares_frame() {
        let spec = FamilySpec::symmetric(1, 2).unwrap();
        let point = [0.0, 0.0, 0.3, -0.2];
        let b = normalize_family1(&spec, &point).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.vectors[0][0] - h).abs() < 1e-15);
        assert!((b.vectors[2][2] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn family1_generic_cubic_match() {
        let f = MultiProfile::polynomial(
            3,
            vec![
                crate::families::term(&[2, 0, 0], 1.0),
                crate::families::term(&[0, 2, 0], 1.0),
                crate::families::term(&[0, 0, 2], 1.0),
                crate::families::term(&[1, 1, 1], 1.0),
            ],
        )
        .unwrap();
        let spec = FamilySpec::family1(3, f).unwrap();
        // H at (1,1,1) = [[2,1,1],[1,2,1],[1,1,2]], positive definite.
        let point = [1.0, 1.0, 1.0, 0.5, -0.5, 2.0];
        let basis = normalize_family1(&spec, &point).unwrap();
        let pkg = CurvaturePackage::compute(&spec, &point, Depth::Riemann).unwrap();
        let model = build_model(ModelKind::U1p, 3).unwrap();
        let rep = verify_model_match(&basis, &pkg, &model, 1e-10).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn family1_indefinite_hessian_rejected() {
        let f = MultiProfile::polynomial(2, vec![crate::families::term(&[2, 0], 1.0), crate::families::term(&[0, 2], -1.0)]).unwrap();
        let spec = FamilySpec::family1(2, f).unwrap();
        assert_eq!(normalize_family1(&spec, &[0.0; 4]).unwrap_err(), Error::HessianNotPositive);
    }

    #[test]
    fn family2_trivial_and_symmetric() {
        let spec = FamilySpec::family2(2, vec![ScalarProfile::zero(); 2]).unwrap();
        let b = normalize_family2(&spec, &[0.0; 6]).unwrap();
        for (i, v) in b.vectors.iter().enumerate() {
            assert_eq!(v, &unit(6, i));
        }
        let spec = FamilySpec::symmetric(2, 3).unwrap();
        let point = [1.0, 1.0, 1.0, 0.2, 0.3, -0.1, 0.0, 0.0, 0.0];
        let b = normalize_family2(&spec, &point).unwrap();
        // eps_i = u_i^2 - s/4
        assert!((b.vectors[0][3] - 0.25).abs() < 1e-14);
        let pkg = CurvaturePackage::compute(&spec, &point, Depth::Riemann).unwrap();
        let rep = verify_model_match(&b, &pkg, &build_model(ModelKind::U2s, 3).unwrap(), 1e-10).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn identity_frame_on_family2_reports_metric_entry() {
        let spec = FamilySpec::family2(2, vec![ScalarProfile::monomial(1.0, 2); 2]).unwrap();
        let point = [0.5, 0.2, 0.0, 0.0, 0.0, 0.0];
        let pkg = CurvaturePackage::compute(&spec, &point, Depth::Riemann).unwrap();
        let basis = NormalizedBasis::new(&point, vec![String::new(); 6], (0..6).map(|i| unit(6, i)).collect()).unwrap();
        let rep = verify_model_match(&basis, &pkg, &build_model(ModelKind::U2s, 2).unwrap(), 1e-10).unwrap();
        assert!(!rep.passed);
        assert!(rep.g_deviation > 0.1);
    }

    #[test]
    fn model_matches_itself() {
        let m = build_model(ModelKind::U3r1, 2).unwrap();
        let id = LinearMap::identity(m.dim);
        assert_eq!(m.a.pullback(&id).unwrap(), m.a);
        assert_eq!(m.g.to_tensor().pullback(&id).unwrap(), m.g.to_tensor());
    }

    #[test]
    fn family3_orders() {
        let sq = FamilySpec::symmetric(3, 2).unwrap();
        let point = [0.3, -0.4, 1.0, 2.0, 0.5, 0.1];
        let b = normalize_family3(&sq, &point, 0).unwrap();
        assert!((b.vectors[1][1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(normalize_family3(&sq, &point, 1).unwrap_err(), Error::PsiThirdVanishes);

        let ex = FamilySpec::family3(2, ScalarProfile::exp()).unwrap();
        let b = normalize_family3(&ex, &point, 1).unwrap();
        assert!((b.vectors[1][1] - 1.0).abs() < 1e-15);
        let pkg = CurvaturePackage::compute(&ex, &point, Depth::Nabla).unwrap();
        let rep = verify_model_match(&b, &pkg, &build_model(ModelKind::U3r1, 2).unwrap(), 1e-10).unwrap();
        assert!(rep.passed, "{rep:?}");

        let neg = FamilySpec::family3(2, ScalarProfile::monomial(-1.0, 2)).unwrap();
        assert!(matches!(normalize_family3(&neg, &point, 0), Err(Error::PsiSecondNotPositive(_))));
    }

    #[test]
    fn annihilators() {
        let u1 = build_model(ModelKind::U1p, 3).unwrap();
        let k = annihilator(&u1, 1e-10).unwrap();
        assert_eq!(k.len(), 3);
        for v in &k {
            assert!(v[..3].iter().all(|c| c.abs() < 1e-12));
        }
        let u2 = build_model(ModelKind::U2s, 2).unwrap();
        let l = annihilator(&u2, 1e-10).unwrap();
        assert_eq!(l.len(), 2);
        for v in &l {
            assert!(v[..4].iter().all(|c| c.abs() < 1e-12));
        }
        assert_eq!(annihilator_of(&Tensor::covariant(4, 4), 1e-10).unwrap().len(), 4);
    }

    #[test]
    fn witness_probes() {
        let cfg = SamplerConfig {
            count: 20,
            ..SamplerConfig::default()
        };
        let b1 = irreducibility_witness_probe(ReducedModel::B1p, 3, &cfg).unwrap();
        assert!(b1.passed, "{b1:?}");
        let b2 = irreducibility_witness_probe(ReducedModel::B2s, 2, &cfg).unwrap();
        assert!(b2.passed, "{b2:?}");
    }

    #[test]
    fn b1_scaled_pair() {
        let b = reduced_tensor(ReducedModel::B1p, 3).unwrap();
        let x1 = [0.3, -1.0, 0.7];
        let x2: Vec<f64> = x1.iter().map(|v| 3.0 * v).collect();
        assert!(hypothesis_residual(&b, ReducedModel::B1p, &x1, &x2) < 1e-14);
        assert!(hypothesis_residual(&b, ReducedModel::B1p, &x1, &[0.0, 0.0, 1.0]) > 0.1);
    }

    #[test]
    fn injectivity() {
        let cfg = SamplerConfig {
            count: 10,
            ..SamplerConfig::default()
        };
        let rep = injectivity_probe(3, &cfg).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(injectivity_probe(2, &cfg).is_err());
    }

    #[test]
    fn operator_table() {
        for r in [2, 3, 4] {
            let m = build_model(ModelKind::U3r, r).unwrap();
            let ids = u3_operator_identities(&m).unwrap();
            assert_eq!(ids.len(), 2 + 4 * (r - 1));
            assert!(ids.iter().all(|i| i.exact), "{ids:?}");
        }
        assert!(u3_operator_identities(&build_model(ModelKind::U1p, 2).unwrap()).is_err());
    }
}
