//! Jacobi and skew-symmetric curvature operators, nilpotency and rank
//! structure, causal samplers and the Jordan probes built on them.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{CurvaturePackage, Depth};
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::tensor::{BilinearForm, Tensor};

/// Default relative threshold for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-8;
/// Orthonormality tolerance for skew-operator inputs.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// A linear operator on a tangent space; column `j` is the image of `e_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Endomorphism {
    matrix: DMatrix<f64>,
}

impl Endomorphism {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Endomorphism { matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Endomorphism {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    /// Nilpotent Jordan block of size `k`: `e_1 -> 0`, `e_{i+1} -> e_i`.
    pub fn jordan_block(k: usize) -> Self {
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k.saturating_sub(1) {
            m[(i, i + 1)] = 1.0;
        }
        Endomorphism { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn pow(&self, k: usize) -> Endomorphism {
        let mut out = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..k {
            out = &self.matrix * out;
        }
        Endomorphism { matrix: out }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// `B^{-1} A B` for a change of basis `B`.
    pub fn conjugate(&self, b: &DMatrix<f64>) -> Result<Endomorphism> {
        let inv = b
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMap { det: b.determinant() })?;
        Ok(Endomorphism {
            matrix: inv * &self.matrix * b,
        })
    }
}

/// `rank(A^k)` for `k = 1..dim`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankSequence(pub Vec<usize>);

impl RankSequence {
    pub fn first(&self) -> usize {
        self.0.first().copied().unwrap_or(0)
    }
}

fn check_vector(g: &BilinearForm, v: &[f64]) -> Result<()> {
    if v.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: v.len(),
        });
    }
    Ok(())
}

fn check_rank4(r: &Tensor, g: &BilinearForm) -> Result<()> {
    if r.rank() != 4 {
        return Err(Error::RankMismatch {
            expected: 4,
            found: r.rank(),
        });
    }
    if r.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: r.dim(),
        });
    }
    Ok(())
}

/// `g(J(x) y, z) = R(y, x, x, z)`.
pub fn jacobi(r: &Tensor, g: &BilinearForm, x: &[f64]) -> Result<Endomorphism> {
    check_rank4(r, g)?;
    check_vector(g, x)?;
    let n = g.dim();
    let ginv = g.inverse()?;
    let mut m = DMatrix::zeros(n, n);
    for y in 0..n {
        for z in 0..n {
            let mut acc = 0.0;
            for (a, xa) in x.iter().enumerate() {
                if *xa == 0.0 {
                    continue;
                }
                for (b, xb) in x.iter().enumerate() {
                    acc += xa * xb * r.get(&[y, a, b, z]);
                }
            }
            // row z, column y: component z of the covector g(J e_y, .)
            m[(z, y)] = acc;
        }
    }
    Endomorphism::new(ginv * m)
}

/// `rho(x, x) = Tr J(x)`.
pub fn ricci(r: &Tensor, g: &BilinearForm, x: &[f64]) -> Result<f64> {
    Ok(jacobi(r, g, x)?.trace())
}

/// `g(A(x, y) z, w) = A(x, y, z, w)` for arbitrary `x, y`.
pub fn curvature_operator(a: &Tensor, g: &BilinearForm, x: &[f64], y: &[f64]) -> Result<Endomorphism> {
    check_rank4(a, g)?;
    check_vector(g, x)?;
    check_vector(g, y)?;
    let n = g.dim();
    let ginv = g.inverse()?;
    let mut m = DMatrix::zeros(n, n);
    for z in 0..n {
        for w in 0..n {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate() {
                if *xi == 0.0 {
                    continue;
                }
                for (j, yj) in y.iter().enumerate() {
                    acc += xi * yj * a.get(&[i, j, z, w]);
                }
            }
            m[(w, z)] = acc;
        }
    }
    Endomorphism::new(ginv * m)
}

/// Skew-symmetric curvature operator of the plane spanned by the
/// orthonormal pair `(e1, e2)`.
pub fn skew_curvature_operator(r: &Tensor, g: &BilinearForm, e1: &[f64], e2: &[f64]) -> Result<Endomorphism> {
    check_vector(g, e1)?;
    check_vector(g, e2)?;
    let deviation = (g.quadratic(e1).abs() - 1.0)
        .abs()
        .max((g.quadratic(e2).abs() - 1.0).abs())
        .max(g.eval(e1, e2).abs());
    if deviation > ORTHONORMAL_TOLERANCE {
        return Err(Error::NotOrthonormal { deviation });
    }
    curvature_operator(r, g, e1, e2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `(e1, e2)` has the orientation of `(v1, v2)`.
    Preserve,
    Reverse,
}

/// Gram-Schmidt in the (definite) restriction of `g` to `span{v1, v2}`.
pub fn orthonormalize_plane(
    g: &BilinearForm,
    v1: &[f64],
    v2: &[f64],
    orientation: Orientation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_vector(g, v1)?;
    check_vector(g, v2)?;
    let (a, b, c) = (g.quadratic(v1), g.eval(v1, v2), g.quadratic(v2));
    let det = a * c - b * b;
    let scale = (a.abs() + c.abs() + b.abs()).powi(2).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale {
        return Err(Error::DegeneratePlane { det });
    }
    if det < 0.0 {
        return Err(Error::IndefinitePlane { det });
    }
    let sigma = a.signum();
    let e1: Vec<f64> = v1.iter().map(|x| x / a.abs().sqrt()).collect();
    let proj = sigma * g.eval(v2, &e1);
    let w: Vec<f64> = v2.iter().zip(&e1).map(|(x, e)| x - proj * e).collect();
    let norm = g.quadratic(&w).abs().sqrt();
    let flip = if orientation == Orientation::Reverse { -1.0 } else { 1.0 };
    let e2 = w.iter().map(|x| flip * x / norm).collect();
    Ok((e1, e2))
}

/// Smallest `k` with `||A^k|| <= tol ||A||^k`, or `None` if no
/// `k <= dim` qualifies.
pub fn nilpotency_index(a: &Endomorphism, tol: f64) -> Option<usize> {
    let norm = a.norm();
    let mut p = a.matrix.clone();
    for k in 1..=a.dim().max(1) {
        if p.norm() <= tol * norm.powi(k as i32) {
            return Some(k);
        }
        p = &a.matrix * p;
    }
    None
}

/// Ranks of `A^k`, counting singular values above `tol * sigma_max(A)^k * dim`.
pub fn rank_sequence(a: &Endomorphism, tol: f64) -> RankSequence {
    let n = a.dim();
    let sigma_max = a.matrix.clone().singular_values().max();
    let mut p = a.matrix.clone();
    let mut ranks = Vec::with_capacity(n);
    for k in 1..=n {
        let threshold = tol * sigma_max.powi(k as i32) * n as f64;
        let rank = if sigma_max == 0.0 {
            0
        } else {
            p.clone().singular_values().iter().filter(|s| **s > threshold).count()
        };
        ranks.push(rank);
        p = &a.matrix * p;
    }
    RankSequence(ranks)
}

/// Coefficients `[c_{n-1}, .., c_0]` of `det(lambda - A) = lambda^n + c_{n-1} lambda^{n-1} + ..`,
/// by Faddeev-LeVerrier.
pub fn char_poly(a: &Endomorphism) -> Vec<f64> {
    let n = a.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut c_prev = 1.0;
    let mut coeffs = Vec::with_capacity(n);
    for k in 1..=n {
        m = &a.matrix * &m + &id * c_prev;
        let c = -(&a.matrix * &m).trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Seeded sampling parameters shared by the probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Samples per point.
    pub count: usize,
    /// Maximum raw draws per requested sample batch.
    pub rejection_cap: usize,
    /// Raw draws are uniform in `[-half_width, half_width]^n`.
    pub half_width: f64,
    /// Probability that a raw draw has a random subset of its coordinates
    /// zeroed, which reaches the lower-dimensional strata where Jordan
    /// types change.
    pub sparse_fraction: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            seed: 0,
            count: 100,
            rejection_cap: 100_000,
            half_width: 2.0,
            sparse_fraction: 0.25,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("sampler count must be at least 1".into()));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::InvalidParameter("half_width must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sparse_fraction) {
            return Err(Error::InvalidParameter("sparse_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Independent generator for task `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Causal type: `+1` spacelike, `-1` timelike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Causal {
    Spacelike,
    Timelike,
}

impl Causal {
    pub fn sign(self) -> f64 {
        match self {
            Causal::Spacelike => 1.0,
            Causal::Timelike => -1.0,
        }
    }
}

fn raw_draw(rng: &mut ChaCha8Rng, n: usize, cfg: &SamplerConfig) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-cfg.half_width..cfg.half_width)).collect();
    if rng.gen_bool(cfg.sparse_fraction) {
        let keep = rng.gen_range(0..n);
        for (i, x) in v.iter_mut().enumerate() {
            if i != keep && rng.gen_bool(0.5) {
                *x = 0.0;
            }
        }
    }
    v
}

fn has_sign(g: &BilinearForm, causal: Causal) -> Result<bool> {
    let sig = g.signature(1e-12)?;
    Ok(match causal {
        Causal::Spacelike => sig.pos > 0,
        Causal::Timelike => sig.neg > 0,
    })
}

/// One normalized vector with `g(v, v) = sign`, drawn by rejection.
fn draw_unit(g: &BilinearForm, causal: Causal, rng: &mut ChaCha8Rng, cfg: &SamplerConfig, draws: &mut usize) -> Option<Vec<f64>> {
    let sign = causal.sign();
    while *draws < cfg.rejection_cap {
        *draws += 1;
        let v = raw_draw(rng, g.dim(), cfg);
        let q = g.quadratic(&v);
        let len2: f64 = v.iter().map(|x| x * x).sum();
        if sign * q > 1e-6 * len2 {
            let s = q.abs().sqrt();
            return Some(v.iter().map(|x| x / s).collect());
        }
    }
    None
}

/// `cfg.count` unit vectors of the requested causal type.
pub fn sample_unit_vectors(g: &BilinearForm, causal: Causal, cfg: &SamplerConfig) -> Result<Vec<Vec<f64>>> {
    sample_unit_vectors_stream(g, causal, cfg, 0)
}

fn sample_unit_vectors_stream(g: &BilinearForm, causal: Causal, cfg: &SamplerConfig, stream: u64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if !has_sign(g, causal)? {
        return Err(Error::RejectionCap {
            cap: cfg.rejection_cap,
            accepted: 0,
        });
    }
    let mut rng = cfg.rng(stream);
    let mut draws = 0;
    let mut out = Vec::with_capacity(cfg.count);
    while out.len() < cfg.count {
        match draw_unit(g, causal, &mut rng, cfg, &mut draws) {
            Some(v) => out.push(v),
            None => {
                return Err(Error::RejectionCap {
                    cap: cfg.rejection_cap,
                    accepted: out.len(),
                })
            }
        }
    }
    Ok(out)
}

/// Oriented orthonormal pairs spanning definite planes of the given type.
pub fn sample_planes(g: &BilinearForm, causal: Causal, cfg: &SamplerConfig) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    sample_planes_stream(g, causal, cfg, 0)
}

fn sample_planes_stream(
    g: &BilinearForm,
    causal: Causal,
    cfg: &SamplerConfig,
    stream: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    cfg.validate()?;
    let sig = g.signature(1e-12)?;
    let available = match causal {
        Causal::Spacelike => sig.pos,
        Causal::Timelike => sig.neg,
    };
    if available < 2 {
        return Err(Error::RejectionCap {
            cap: cfg.rejection_cap,
            accepted: 0,
        });
    }
    let sign = causal.sign();
    let mut rng = cfg.rng(stream);
    let mut draws = 0;
    let mut out = Vec::with_capacity(cfg.count);
    while out.len() < cfg.count {
        let cap_hit = || Error::RejectionCap {
            cap: cfg.rejection_cap,
            accepted: out.len(),
        };
        let e1 = draw_unit(g, causal, &mut rng, cfg, &mut draws).ok_or_else(cap_hit)?;
        loop {
            if draws >= cfg.rejection_cap {
                return Err(cap_hit());
            }
            draws += 1;
            let v2 = raw_draw(&mut rng, g.dim(), cfg);
            let proj = sign * g.eval(&v2, &e1);
            let w: Vec<f64> = v2.iter().zip(&e1).map(|(x, e)| x - proj * e).collect();
            let len2: f64 = w.iter().map(|x| x * x).sum();
            if sign * g.quadratic(&w) > 1e-6 * len2 {
                if let Ok(pair) = orthonormalize_plane(g, &e1, &w, Orientation::Preserve) {
                    out.push(pair);
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Which operator a probe inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// Jacobi operators on unit vectors.
    Osserman,
    /// Skew-symmetric curvature operators on oriented definite planes.
    IvanovPetrova,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSample {
    pub point_index: usize,
    pub point: Vec<f64>,
    /// One vector for Jacobi samples, an orthonormal pair for planes.
    pub vectors: Vec<Vec<f64>>,
    pub rank_sequence: RankSequence,
    pub char_poly: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeVerdict {
    pub kind: ProbeKind,
    pub causal: Causal,
    pub seed: u64,
    pub samples: usize,
    pub constant: bool,
    /// Distinct rank sequences seen, sorted.
    pub rank_sequences: Vec<RankSequence>,
    pub reference: ProbeSample,
    pub witness: Option<(ProbeSample, ProbeSample)>,
}

impl ProbeVerdict {
    /// `rank(A)` if it is the same for every sample.
    pub fn common_rank(&self) -> Option<usize> {
        let first = self.rank_sequences.first()?.first();
        self.rank_sequences.iter().all(|r| r.first() == first).then_some(first)
    }
}

fn poly_agrees(a: &ProbeSample, b: &ProbeSample, scale: f64, tol: f64) -> bool {
    a.char_poly
        .iter()
        .zip(&b.char_poly)
        .enumerate()
        .all(|(k, (x, y))| (x - y).abs() <= tol * (1.0 + scale).powi(k as i32 + 1))
}

fn probe_point(
    spec: &FamilySpec,
    index: usize,
    point: &[f64],
    kind: ProbeKind,
    causal: Causal,
    cfg: &SamplerConfig,
) -> Result<(Vec<ProbeSample>, f64)> {
    let pkg = CurvaturePackage::compute(spec, point, Depth::Riemann)?;
    let stream = index as u64 + 1;
    let ops: Vec<(Vec<Vec<f64>>, Endomorphism)> = match kind {
        ProbeKind::Osserman => sample_unit_vectors_stream(&pkg.g, causal, cfg, stream)?
            .into_iter()
            .map(|v| {
                let j = jacobi(&pkg.riemann, &pkg.g, &v)?;
                Ok((vec![v], j))
            })
            .collect::<Result<_>>()?,
        ProbeKind::IvanovPetrova => sample_planes_stream(&pkg.g, causal, cfg, stream)?
            .into_iter()
            .map(|(e1, e2)| {
                let s = skew_curvature_operator(&pkg.riemann, &pkg.g, &e1, &e2)?;
                Ok((vec![e1, e2], s))
            })
            .collect::<Result<_>>()?,
    };
    let mut scale = 0.0f64;
    let samples = ops
        .into_iter()
        .map(|(vectors, op)| {
            scale = scale.max(op.norm());
            ProbeSample {
                point_index: index,
                point: point.to_vec(),
                vectors,
                rank_sequence: rank_sequence(&op, RANK_TOLERANCE),
                char_poly: char_poly(&op),
            }
        })
        .collect();
    Ok((samples, scale))
}

/// Compares Jordan data (rank sequences and characteristic polynomials)
/// across `cfg.count` samples at each point.
pub fn run_probe(
    spec: &FamilySpec,
    points: &[Vec<f64>],
    kind: ProbeKind,
    causal: Causal,
    cfg: &SamplerConfig,
) -> Result<ProbeVerdict> {
    if points.is_empty() || points.len() * cfg.count < 2 {
        return Err(Error::InvalidParameter("a probe needs at least two samples".into()));
    }
    for p in points {
        spec.check_point(p)?;
    }
    let per_point: Vec<(Vec<ProbeSample>, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| probe_point(spec, i, p, kind, causal, cfg))
        .collect::<Result<_>>()?;
    let scale = per_point.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    let samples: Vec<ProbeSample> = per_point.into_iter().flat_map(|(s, _)| s).collect();
    let reference = samples[0].clone();
    let witness = samples
        .iter()
        .find(|s| s.rank_sequence != reference.rank_sequence || !poly_agrees(&reference, s, scale, RANK_TOLERANCE))
        .map(|s| (reference.clone(), s.clone()));
    let mut rank_sequences: Vec<RankSequence> = samples.iter().map(|s| s.rank_sequence.clone()).collect();
    rank_sequences.sort();
    rank_sequences.dedup();
    Ok(ProbeVerdict {
        kind,
        causal,
        seed: cfg.seed,
        samples: samples.len(),
        constant: witness.is_none(),
        rank_sequences,
        reference,
        witness,
    })
}

/// Jacobi-operator Jordan probe.
pub fn jordan_probe(spec: &FamilySpec, points: &[Vec<f64>], causal: Causal, cfg: &SamplerConfig) -> Result<ProbeVerdict> {
    run_probe(spec, points, ProbeKind::Osserman, causal, cfg)
}

/// Skew-operator Jordan probe.
pub fn ip_probe(spec: &FamilySpec, points: &[Vec<f64>], causal: Causal, cfg: &SamplerConfig) -> Result<ProbeVerdict> {
    run_probe(spec, points, ProbeKind::IvanovPetrova, causal, cfg)
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum WitnessSearch {
    Found { verdict: Box<ProbeVerdict> },
    /// No witness among `samples` draws; not evidence of constancy.
    Inconclusive { samples: usize },
}

/// Looks for a non-constancy witness with sample counts escalating from
/// `cfg.count` up to `10 * cfg.count` per point.
pub fn search_witness(
    spec: &FamilySpec,
    points: &[Vec<f64>],
    kind: ProbeKind,
    causal: Causal,
    cfg: &SamplerConfig,
) -> Result<WitnessSearch> {
    let mut last = 0;
    for factor in [1, 2, 5, 10] {
        let round = SamplerConfig {
            count: cfg.count * factor,
            ..cfg.clone()
        };
        let verdict = run_probe(spec, points, kind, causal, &round)?;
        last = verdict.samples;
        if !verdict.constant {
            return Ok(WitnessSearch::Found {
                verdict: Box::new(verdict),
            });
        }
    }
    Ok(WitnessSearch::Inconclusive { samples: last })
}
