//! Scalar curvature invariants, constancy scans and the `K_P` classifier for
//! family 3.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{CurvaturePackage, Depth};
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::tensor::{LinearMap, Tensor};

/// Default zero threshold of the `K_P` classifier.
pub const KP_THRESHOLD: f64 = 1e-10;

fn family1_data(spec: &FamilySpec, point: &[f64]) -> Result<(Tensor, DMatrix<f64>)> {
    let FamilySpec::Family1 { p, f } = spec else {
        return Err(Error::InvalidParameter("alpha1 is defined for family 1".into()));
    };
    let p = *p;
    spec.check_point(point)?;
    let h = f.hessian(&point[..p])?;
    let h = DMatrix::from_fn(p, p, |i, j| h[i][j]);
    let det = h.determinant();
    if !det.is_finite() || det.abs() < 1e-12 * h.norm().powi(p as i32).max(1e-300) {
        return Err(Error::SingularHessian { det });
    }
    let pkg = CurvaturePackage::compute(spec, point, Depth::Nabla)?;
    let nabla = pkg.nabla()?;
    let block = Tensor::from_fn(p, nabla.variances().to_vec(), |idx| nabla.get(idx));
    Ok((block, h))
}

/// Full contraction of `nabla R ⊗ nabla R` on the x-block against five
/// copies of `H_f^{-1}`.
///
/// With `H^{-1} = M S M^T` for a sign matrix `S`, the contraction equals the
/// signed sum of squares of the components of `M^* nabla R`.
pub fn alpha1(spec: &FamilySpec, point: &[f64]) -> Result<f64> {
    let (t, h) = family1_data(spec, point)?;
    let p = h.nrows();
    let eig = SymmetricEigen::new(h);
    let m = DMatrix::from_fn(p, p, |i, k| eig.eigenvectors[(i, k)] / eig.eigenvalues[k].abs().sqrt());
    let signs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.signum()).collect();
    let frame = t.pullback(&LinearMap::new(m))?;
    Ok(frame
        .indices()
        .zip(frame.data())
        .map(|(idx, v)| idx.iter().map(|&k| signs[k]).product::<f64>() * v * v)
        .sum())
}

/// The same contraction summed literally over all ten indices.
pub fn alpha1_literal(spec: &FamilySpec, point: &[f64]) -> Result<f64> {
    let (t, h) = family1_data(spec, point)?;
    let hinv = h.try_inverse().ok_or(Error::SingularHessian { det: 0.0 })?;
    let data = t.data();
    let p = hinv.nrows();
    let len = data.len();
    let digits = |mut k: usize| {
        let mut d = [0usize; 5];
        for slot in (0..5).rev() {
            d[slot] = k % p;
            k /= p;
        }
        d
    };
    let mut total = 0.0;
    for a in 0..len {
        if data[a] == 0.0 {
            continue;
        }
        let da = digits(a);
        for s in 0..len {
            if data[s] == 0.0 {
                continue;
            }
            let ds = digits(s);
            let w: f64 = (0..5).map(|k| hinv[(da[k], ds[k])]).product();
            total += w * data[a] * data[s];
        }
    }
    Ok(total)
}

/// Sum of squares of every `nabla R` component with all five slots in the
/// u-block.
pub fn alpha2(spec: &FamilySpec, point: &[f64]) -> Result<f64> {
    let FamilySpec::Family2 { s, .. } = spec else {
        return Err(Error::InvalidParameter("alpha2 is defined for family 2".into()));
    };
    let s = *s;
    let pkg = CurvaturePackage::compute(spec, point, Depth::Nabla)?;
    let nabla = pkg.nabla()?;
    Ok(crate::tensor::IndexIter::new(s, 5).map(|idx| nabla.get(&idx).powi(2)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Invariant {
    Alpha1,
    Alpha2,
}

impl Invariant {
    pub fn evaluate(self, spec: &FamilySpec, point: &[f64]) -> Result<f64> {
        match self {
            Invariant::Alpha1 => alpha1(spec, point),
            Invariant::Alpha2 => alpha2(spec, point),
        }
    }

    pub fn family(self) -> u8 {
        match self {
            Invariant::Alpha1 => 1,
            Invariant::Alpha2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanValue {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub invariant: Invariant,
    pub values: Vec<ScanValue>,
    pub spread: f64,
    pub tol: f64,
    pub constant: bool,
    pub verdict: String,
}

/// Evaluates the invariant at every point; the scan is non-constant when
/// `max - min > tol (1 + max |value|)`.
pub fn constancy_scan(invariant: Invariant, spec: &FamilySpec, points: &[Vec<f64>], tol: f64) -> Result<ScanReport> {
    if spec.family_number() != invariant.family() {
        return Err(Error::InvalidParameter(format!(
            "{invariant:?} does not apply to family {}",
            spec.family_number()
        )));
    }
    if points.len() < 2 {
        return Err(Error::InvalidParameter("a constancy scan needs at least two points".into()));
    }
    let values: Vec<f64> = points.par_iter().map(|p| invariant.evaluate(spec, p)).collect::<Result<_>>()?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_abs = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let spread = max - min;
    let constant = spread <= tol * (1.0 + max_abs);
    let verdict = if constant {
        "constant on sampled points"
    } else {
        "non-constant on sampled points"
    };
    Ok(ScanReport {
        invariant,
        values: points
            .iter()
            .zip(values)
            .map(|(p, value)| ScanValue { point: p.clone(), value })
            .collect(),
        spread,
        tol,
        constant,
        verdict: verdict.to_string(),
    })
}

/// Points along one coordinate axis through `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axis: usize,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Grid {
    pub fn points(&self, base: &[f64]) -> Result<Vec<Vec<f64>>> {
        if self.axis >= base.len() {
            return Err(Error::InvalidParameter(format!(
                "grid axis {} is outside a {}-dimensional chart",
                self.axis,
                base.len()
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter("a grid needs at least two steps".into()));
        }
        let h = (self.to - self.from) / (self.steps - 1) as f64;
        Ok((0..self.steps)
            .map(|k| {
                let mut p = base.to_vec();
                p[self.axis] = self.from + h * k as f64;
                p
            })
            .collect())
    }
}

/// Shape of `K_P` according to which second-derivative entries survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KPClass {
    /// `psi'''' != 0`, `u_{r-1} != 0`.
    BothNonzero,
    /// `psi'''' != 0`, `u_{r-1} = 0`.
    OnlyQuartic,
    /// `psi'''' = 0`, `u_{r-1} != 0`.
    OnlyMixed,
    /// `psi'''' = 0`, `u_{r-1} = 0`.
    Empty,
}

impl KPClass {
    pub fn from_indicators(quartic: bool, mixed: bool) -> Self {
        match (quartic, mixed) {
            (true, true) => KPClass::BothNonzero,
            (true, false) => KPClass::OnlyQuartic,
            (false, true) => KPClass::OnlyMixed,
            (false, false) => KPClass::Empty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPClassification {
    pub class: KPClass,
    pub psi4: f64,
    pub u_prev: f64,
    pub quartic_nonzero: bool,
    pub mixed_nonzero: bool,
    pub threshold: f64,
    /// Some indicator lies within two decades of the threshold.
    pub marginal: bool,
    /// Coordinate labels `k` such that some `nabla^2 R(..; .., d_k)` is nonzero.
    pub nabla2_support: Vec<String>,
    /// Whether `nabla2_support` has the shape the label predicts.
    pub nabla2_agrees: bool,
}

pub fn kp_classify(spec: &FamilySpec, point: &[f64]) -> Result<KPClassification> {
    kp_classify_with(spec, point, KP_THRESHOLD)
}

pub fn kp_classify_with(spec: &FamilySpec, point: &[f64], threshold: f64) -> Result<KPClassification> {
    let FamilySpec::Family3 { r, psi } = spec else {
        return Err(Error::InvalidParameter("K_P is defined for family 3".into()));
    };
    let r = *r;
    spec.check_point(point)?;
    let psi4 = psi.derivative(point[r - 1], 4)?;
    let u_prev = point[r - 2];
    let quartic = psi4.abs() > threshold;
    let mixed = u_prev.abs() > threshold;
    let near = |v: f64| v.abs() > threshold * 1e-2 && v.abs() < threshold * 1e2;
    let class = KPClass::from_indicators(quartic, mixed);

    let pkg = CurvaturePackage::compute(spec, point, Depth::Nabla2)?;
    let n2 = pkg.nabla2()?;
    let n = spec.dim();
    let scale = threshold * n2.max_abs().max(1.0);
    let mut hit = vec![false; n];
    for (idx, v) in n2.indices().zip(n2.data()) {
        if v.abs() > scale {
            hit[idx[5]] = true;
        }
    }
    let labels = spec.coordinate_labels();
    let (x, ur) = (2 * r, r - 1);
    let expected: Vec<usize> = match class {
        KPClass::BothNonzero => vec![ur, x],
        KPClass::OnlyQuartic => vec![ur],
        KPClass::OnlyMixed => vec![x],
        KPClass::Empty => vec![],
    };
    let found: Vec<usize> = (0..n).filter(|&k| hit[k]).collect();
    Ok(KPClassification {
        class,
        psi4,
        u_prev,
        quartic_nonzero: quartic,
        mixed_nonzero: mixed,
        threshold,
        marginal: near(psi4) || near(u_prev),
        nabla2_agrees: found == expected,
        nabla2_support: found.iter().map(|&k| labels[k].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPComparison {
    pub p: KPClassification,
    pub q: KPClassification,
    pub differ: bool,
}

/// Classifies two points; differing labels obstruct 2-curvature homogeneity.
pub fn kp_scan(spec: &FamilySpec, p: &[f64], q: &[f64]) -> Result<KPComparison> {
    let p = kp_classify(spec, p)?;
    let q = kp_classify(spec, q)?;
    let differ = p.class != q.class;
    Ok(KPComparison { p, q, differ })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::term;
    use crate::profile::{MultiProfile, ScalarProfile};

    fn quartic_f() -> FamilySpec {
        let f = MultiProfile::polynomial(
            3,
            vec![term(&[2, 0, 0], 1.0), term(&[0, 2, 0], 1.0), term(&[0, 0, 2], 1.0), term(&[4, 0, 0], 1.0)],
        )
        .unwrap();
        FamilySpec::family1(3, f).unwrap()
    }

    #[test]
    fn alpha1_vanishes_for_sum_of_squares() {
        let spec = FamilySpec::symmetric(1, 3).unwrap();
        assert_eq!(alpha1(&spec, &[0.3, -0.2, 1.0, 0.0, 2.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn alpha1_fast_matches_literal_and_varies() {
        let spec = quartic_f();
        let p0 = [0.0; 6];
        let p1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let a0 = alpha1(&spec, &p0).unwrap();
        let a1 = alpha1(&spec, &p1).unwrap();
        let l1 = alpha1_literal(&spec, &p1).unwrap();
        assert!((a1 - l1).abs() <= 1e-9 * l1.abs());
        assert!((a0 - a1).abs() > 1e-3);
    }

    #[test]
    fn alpha1_indefinite_hessian() {
        let f = MultiProfile::polynomial(2, vec![term(&[2, 0], 1.0), term(&[0, 2], -1.0), term(&[3, 0], 1.0), term(&[1, 2], 0.5)]).unwrap();
        let spec = FamilySpec::family1(2, f).unwrap();
        let p = [0.2, 0.4, 0.0, 0.0];
        let fast = alpha1(&spec, &p).unwrap();
        let lit = alpha1_literal(&spec, &p).unwrap();
        assert!((fast - lit).abs() <= 1e-9 * lit.abs().max(1e-12), "{fast} vs {lit}");
    }

    #[test]
    fn alpha1_singular_hessian() {
        let f = MultiProfile::polynomial(2, vec![term(&[2, 0], 1.0)]).unwrap();
        let spec = FamilySpec::family1(2, f).unwrap();
        assert!(matches!(alpha1(&spec, &[0.0; 4]), Err(Error::SingularHessian { .. })));
    }

    #[test]
    fn alpha2_zero_profile_at_two() {
        let spec = FamilySpec::family2(2, vec![ScalarProfile::zero(); 2]).unwrap();
        // The only pattern (i,j,j,i;i) = 4 u_i has 4 images per ordered pair.
        let u = [0.7, -0.3];
        let a = alpha2(&spec, &[u[0], u[1], 0.1, 0.2, 0.0, 0.0]).unwrap();
        let expected: f64 = u.iter().map(|x| 4.0 * (4.0 * x) * (4.0 * x)).sum();
        assert!((a - expected).abs() < 1e-10, "{a} vs {expected}");
    }

    #[test]
    fn alpha2_quintic_varies() {
        let spec = FamilySpec::family2(3, vec![ScalarProfile::monomial(1.0, 5); 3]).unwrap();
        let a0 = alpha2(&spec, &[0.0; 9]).unwrap();
        let mut p = [0.0; 9];
        p[0] = 1.0;
        assert!((alpha2(&spec, &p).unwrap() - a0).abs() > 1e-3);
    }

    #[test]
    fn scans() {
        let spec = FamilySpec::symmetric(1, 2).unwrap();
        let pts = vec![vec![0.1, 0.2, 0.0, 0.0], vec![1.0, -1.0, 3.0, 0.0]];
        assert!(constancy_scan(Invariant::Alpha1, &spec, &pts, 1e-12).unwrap().constant);
        assert!(constancy_scan(Invariant::Alpha2, &spec, &pts, 1e-12).is_err());
        assert!(constancy_scan(Invariant::Alpha1, &spec, &pts[..1], 1e-12).is_err());
        let dup = vec![vec![0.5, 0.1, 0.0, 0.0, 0.0, 0.0]; 2];
        assert!(constancy_scan(Invariant::Alpha1, &quartic_f(), &dup, 1e-12).unwrap().constant);
    }

    #[test]
    fn grid_points() {
        let g = Grid {
            axis: 1,
            from: -1.0,
            to: 1.0,
            steps: 5,
        };
        let pts = g.points(&[3.0, 0.0, 2.0]).unwrap();
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[4], vec![3.0, 1.0, 2.0]);
        assert!(Grid { axis: 3, ..g.clone() }.points(&[0.0; 3]).is_err());
    }

    #[test]
    fn kp_cases() {
        let quartic = FamilySpec::family3(2, ScalarProfile::monomial(1.0, 4)).unwrap();
        let p = [1.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        let q = [0.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        let cmp = kp_scan(&quartic, &p, &q).unwrap();
        assert_eq!((cmp.p.class, cmp.q.class), (KPClass::BothNonzero, KPClass::OnlyQuartic));
        assert!(cmp.differ && cmp.p.nabla2_agrees && cmp.q.nabla2_agrees);

        let cubic = FamilySpec::family3(2, ScalarProfile::polynomial(vec![0.0, 0.0, 1.0, 1.0])).unwrap();
        let cmp = kp_scan(&cubic, &p, &q).unwrap();
        assert_eq!((cmp.p.class, cmp.q.class), (KPClass::OnlyMixed, KPClass::Empty));
        assert!(cmp.p.nabla2_agrees && cmp.q.nabla2_agrees);

        let sq = FamilySpec::symmetric(3, 2).unwrap();
        let cmp = kp_scan(&sq, &q, &q).unwrap();
        assert_eq!(cmp.p.class, KPClass::Empty);
        assert!(!cmp.differ);
        // psi''' = 0 kills the mixed entry that the label anticipates.
        let mixed = kp_classify(&sq, &p).unwrap();
        assert_eq!(mixed.class, KPClass::OnlyMixed);
        assert!(!mixed.nabla2_agrees);
    }

    #[test]
    fn kp_marginal_flag() {
        let quartic = FamilySpec::family3(2, ScalarProfile::monomial(1.0, 4)).unwrap();
        let c = kp_classify(&quartic, &[1e-11, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(c.marginal);
        assert_eq!(c.class, KPClass::OnlyQuartic);
    }
}
