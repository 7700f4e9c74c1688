//! Dense tensors with per-slot variance, symmetric bilinear forms and linear
//! maps between small real vector spaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold below which a determinant counts as zero.
pub const DET_TOLERANCE: f64 = 1e-12;

/// Counts of negative and positive directions of a nondegenerate form.
///
/// The pair `(p, q)` of the literature is stored as `neg = p`, `pos = q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub neg: usize,
    pub pos: usize,
}

impl Signature {
    pub fn dim(&self) -> usize {
        self.neg + self.pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    Covariant,
    Contravariant,
}

/// Dense multi-index array; component `(i_1, .., i_k)` lives at the row-major
/// offset with the last index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dim: usize,
    variances: Vec<Variance>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dim: usize, variances: Vec<Variance>) -> Self {
        let len = dim.pow(variances.len() as u32);
        Tensor {
            dim,
            variances,
            data: vec![0.0; len],
        }
    }

    /// All-covariant zero tensor of the given rank.
    pub fn covariant(dim: usize, rank: usize) -> Self {
        Self::zeros(dim, vec![Variance::Covariant; rank])
    }

    pub fn from_fn(dim: usize, variances: Vec<Variance>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dim, variances);
        let rank = t.rank();
        let mut idx = vec![0usize; rank];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            advance(&mut idx, dim);
        }
        t
    }

    pub fn from_data(dim: usize, variances: Vec<Variance>, data: Vec<f64>) -> Result<Self> {
        let expected = dim.pow(variances.len() as u32);
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Tensor {
            dim,
            variances,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[Variance] {
        &self.variances
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_covariant(&self) -> bool {
        self.variances.iter().all(|v| *v == Variance::Covariant)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.dim);
            acc * self.dim + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn add_to(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] += value;
    }

    /// Iterates over every multi-index in storage order.
    pub fn indices(&self) -> IndexIter {
        IndexIter::new(self.dim, self.rank())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest componentwise difference; infinite when the shapes differ.
    pub fn max_diff(&self, other: &Tensor) -> f64 {
        if self.dim != other.dim || self.variances != other.variances {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn approx_eq(&self, other: &Tensor, tol: f64) -> bool {
        self.max_diff(other) <= tol
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            dim: self.dim,
            variances: self.variances.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            dim: self.dim,
            variances: self.variances.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.rank() != other.rank() {
            return Err(Error::RankMismatch {
                expected: self.rank(),
                found: other.rank(),
            });
        }
        Ok(())
    }

    pub fn outer(&self, other: &Tensor) -> Result<Tensor> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut variances = self.variances.clone();
        variances.extend_from_slice(&other.variances);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            data.extend(other.data.iter().map(|b| a * b));
        }
        Ok(Tensor {
            dim: self.dim,
            variances,
            data,
        })
    }

    /// Traces slots `a` and `b` against the inverse metric (both covariant),
    /// the metric (both contravariant) or the Kronecker delta (mixed).
    pub fn contract(&self, a: usize, b: usize, metric: &BilinearForm) -> Result<Tensor> {
        let rank = self.rank();
        for slot in [a, b] {
            if slot >= rank {
                return Err(Error::SlotOutOfRange { slot, rank });
            }
        }
        if a == b {
            return Err(Error::RepeatedSlot(a));
        }
        if metric.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: metric.dim(),
            });
        }
        let n = self.dim;
        let pairing: DMatrix<f64> = match (self.variances[a], self.variances[b]) {
            (Variance::Covariant, Variance::Covariant) => metric.inverse()?,
            (Variance::Contravariant, Variance::Contravariant) => metric.matrix().clone(),
            _ => DMatrix::identity(n, n),
        };
        let kept: Vec<usize> = (0..rank).filter(|s| *s != a && *s != b).collect();
        let variances = kept.iter().map(|s| self.variances[*s]).collect();
        let mut full = vec![0usize; rank];
        Ok(Tensor::from_fn(n, variances, |idx| {
            for (k, s) in kept.iter().enumerate() {
                full[*s] = idx[k];
            }
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = pairing[(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    full[a] = i;
                    full[b] = j;
                    acc += w * self.get(&full);
                }
            }
            acc
        }))
    }

    /// `(m^* t)(v_1, .., v_k) = t(m v_1, .., m v_k)` for all-covariant `t`.
    pub fn pullback(&self, m: &LinearMap) -> Result<Tensor> {
        if let Some(slot) = self.variances.iter().position(|v| *v == Variance::Contravariant) {
            return Err(Error::ContravariantSlot(slot));
        }
        if m.target_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.target_dim(),
            });
        }
        let rank = self.rank();
        let src = m.source_dim();
        let mat = m.matrix();
        // One slot at a time; intermediate shapes are mixed, so work on raw
        // strided buffers.
        let mut dims = vec![self.dim; rank];
        let mut cur = self.data.clone();
        for slot in 0..rank {
            let outer: usize = dims[..slot].iter().product();
            let inner: usize = dims[slot + 1..].iter().product();
            let old = dims[slot];
            let mut next = vec![0.0; outer * src * inner];
            for o in 0..outer {
                for j in 0..old {
                    let base_old = (o * old + j) * inner;
                    for i in 0..src {
                        let w = mat[(j, i)];
                        if w == 0.0 {
                            continue;
                        }
                        let base_new = (o * src + i) * inner;
                        for r in 0..inner {
                            next[base_new + r] += w * cur[base_old + r];
                        }
                    }
                }
            }
            dims[slot] = src;
            cur = next;
        }
        Ok(Tensor {
            dim: src,
            variances: self.variances.clone(),
            data: cur,
        })
    }

    /// Components with magnitude above `tol`, in storage order.
    pub fn nonzero_components(&self, tol: f64) -> Vec<(Vec<usize>, f64)> {
        self.indices()
            .zip(self.data.iter())
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, v)| (i, *v))
            .collect()
    }
}

fn advance(idx: &mut [usize], dim: usize) {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return;
        }
        *slot = 0;
    }
}

/// Odometer over `[0, dim)^rank`.
pub struct IndexIter {
    dim: usize,
    current: Option<Vec<usize>>,
}

impl IndexIter {
    pub fn new(dim: usize, rank: usize) -> Self {
        let current = if dim == 0 && rank > 0 {
            None
        } else {
            Some(vec![0; rank])
        };
        IndexIter { dim, current }
    }
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        let mut carried = true;
        for slot in next.iter_mut().rev() {
            *slot += 1;
            if *slot < self.dim {
                carried = false;
                break;
            }
            *slot = 0;
        }
        if !carried {
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Symmetric real bilinear form on `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    matrix: DMatrix<f64>,
}

impl BilinearForm {
    /// Rejects matrices that are not exactly symmetric.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in i + 1..n {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::Asymmetric { i, j });
                }
            }
        }
        Ok(BilinearForm { matrix })
    }

    /// Builds from the upper triangle of `f`, mirroring it below the diagonal.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut matrix = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        BilinearForm { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        BilinearForm {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        BilinearForm {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                acc += u[i] * self.matrix[(i, j)] * v[j];
            }
        }
        acc
    }

    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.eval(v, v)
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn is_nondegenerate(&self, tol: f64) -> bool {
        self.det().abs() > tol
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let det = self.det();
        if det.abs() <= DET_TOLERANCE {
            return Err(Error::SingularMetric { det });
        }
        self.matrix
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMetric { det })
    }

    /// Eigenvalue sign counts; eigenvalues within `tol` of zero make the form
    /// degenerate.
    pub fn signature(&self, tol: f64) -> Result<Signature> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut sig = Signature { neg: 0, pos: 0 };
        for lambda in eig.eigenvalues.iter() {
            if lambda.abs() <= tol {
                return Err(Error::SingularMetric { det: self.det() });
            }
            if *lambda < 0.0 {
                sig.neg += 1;
            } else {
                sig.pos += 1;
            }
        }
        Ok(sig)
    }

    pub fn to_tensor(&self) -> Tensor {
        let n = self.dim();
        Tensor::from_fn(n, vec![Variance::Covariant; 2], |i| self.matrix[(i[0], i[1])])
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::RankMismatch {
                expected: 2,
                found: t.rank(),
            });
        }
        let n = t.dim();
        Self::new(DMatrix::from_fn(n, n, |i, j| t.get(&[i, j])))
    }
}

/// Linear map `R^source -> R^target`; column `i` of the matrix is the image
/// of the `i`-th source basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        LinearMap { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != nrows) {
            return Err(Error::DimensionMismatch {
                expected: nrows,
                found: bad.len(),
            });
        }
        Ok(LinearMap {
            matrix: DMatrix::from_fn(nrows, ncols, |i, j| columns[j][i]),
        })
    }

    pub fn source_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let out = &self.matrix * DVector::from_column_slice(v);
        out.iter().copied().collect()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.matrix.column(i).iter().copied().collect()
    }

    pub fn det(&self) -> f64 {
        if self.matrix.nrows() != self.matrix.ncols() {
            return 0.0;
        }
        self.matrix.determinant()
    }

    pub fn inverse(&self) -> Result<LinearMap> {
        let det = self.det();
        if det.abs() <= DET_TOLERANCE {
            return Err(Error::SingularMap { det });
        }
        self.matrix
            .clone()
            .try_inverse()
            .map(LinearMap::new)
            .ok_or(Error::SingularMap { det })
    }

    pub fn compose(&self, inner: &LinearMap) -> Result<LinearMap> {
        if self.source_dim() != inner.target_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim(),
                found: inner.target_dim(),
            });
        }
        Ok(LinearMap::new(&self.matrix * &inner.matrix))
    }
}
