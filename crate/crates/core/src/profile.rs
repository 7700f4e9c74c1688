//! Profile functions given as derivative oracles.
//!
//! A [`ScalarProfile`] answers `d^k/du^k f(u)` for `k <= 4`; a
//! [`MultiProfile`] answers mixed partials of a function on `R^p` up to total
//! order 4. Polynomial profiles are exact.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_DERIVATIVE_ORDER: usize = 4;

type ScalarOracle = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;
type MultiOracle = Arc<dyn Fn(&[f64], &[usize]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum ScalarRepr {
    Polynomial(Vec<f64>),
    Exp,
    Oracle { name: String, eval: ScalarOracle },
}

/// `f: R -> R` with derivatives up to order 4.
#[derive(Clone)]
pub struct ScalarProfile {
    repr: ScalarRepr,
}

impl fmt::Debug for ScalarProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            ScalarRepr::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            ScalarRepr::Exp => f.write_str("Exp"),
            ScalarRepr::Oracle { name, .. } => f.debug_tuple("Oracle").field(name).finish(),
        }
    }
}

impl ScalarProfile {
    /// `c[0] + c[1] u + c[2] u^2 + ...`
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        ScalarProfile {
            repr: ScalarRepr::Polynomial(coeffs),
        }
    }

    pub fn zero() -> Self {
        Self::polynomial(Vec::new())
    }

    /// `coeff * u^power`
    pub fn monomial(coeff: f64, power: usize) -> Self {
        let mut c = vec![0.0; power + 1];
        c[power] = coeff;
        Self::polynomial(c)
    }

    pub fn exp() -> Self {
        ScalarProfile {
            repr: ScalarRepr::Exp,
        }
    }

    /// User oracle: `eval(u, k)` must return the `k`-th derivative at `u`.
    pub fn oracle(name: impl Into<String>, eval: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        ScalarProfile {
            repr: ScalarRepr::Oracle {
                name: name.into(),
                eval: Arc::new(eval),
            },
        }
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.repr, ScalarRepr::Polynomial(_))
    }

    pub fn derivative(&self, u: f64, order: usize) -> Result<f64> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::DerivativeOrder(order));
        }
        Ok(match &self.repr {
            ScalarRepr::Polynomial(c) => poly_derivative(c, u, order),
            ScalarRepr::Exp => u.exp(),
            ScalarRepr::Oracle { eval, .. } => eval(u, order),
        })
    }

    pub fn value(&self, u: f64) -> f64 {
        self.derivative(u, 0).expect("order 0 is always supported")
    }

    /// Values `f(u), f'(u), .., f^(order)(u)`.
    pub fn derivatives(&self, u: f64, order: usize) -> Result<Vec<f64>> {
        (0..=order).map(|k| self.derivative(u, k)).collect()
    }

    /// Largest relative disagreement between each derivative of order
    /// `1..=4` and a central difference of the one below it.
    pub fn oracle_consistency(&self, u: f64, step: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 1..=MAX_DERIVATIVE_ORDER {
            let lo = self.derivative(u - step, k - 1).unwrap_or(f64::NAN);
            let hi = self.derivative(u + step, k - 1).unwrap_or(f64::NAN);
            let fd = (hi - lo) / (2.0 * step);
            let exact = self.derivative(u, k).unwrap_or(f64::NAN);
            worst = worst.max((fd - exact).abs() / (1.0 + exact.abs()));
        }
        worst
    }
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

fn poly_derivative(coeffs: &[f64], u: f64, order: usize) -> f64 {
    // Horner on the differentiated coefficients.
    let mut acc = 0.0;
    for n in (order..coeffs.len()).rev() {
        acc = acc * u + coeffs[n] * falling(n, order);
    }
    acc
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ScalarProfileDef {
    Polynomial { coeffs: Vec<f64> },
    Exp,
}

impl Serialize for ScalarProfile {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let def = match &self.repr {
            ScalarRepr::Polynomial(c) => ScalarProfileDef::Polynomial { coeffs: c.clone() },
            ScalarRepr::Exp => ScalarProfileDef::Exp,
            ScalarRepr::Oracle { name, .. } => {
                return Err(serde::ser::Error::custom(Error::NotSerializable(name.clone())))
            }
        };
        def.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ScalarProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(match ScalarProfileDef::deserialize(deserializer)? {
            ScalarProfileDef::Polynomial { coeffs } => ScalarProfile::polynomial(coeffs),
            ScalarProfileDef::Exp => ScalarProfile::exp(),
        })
    }
}

/// One term `coeff * x_1^e_1 * .. * x_p^e_p` of a multivariate polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exponents: Vec<usize>,
    pub coeff: f64,
}

#[derive(Clone)]
enum MultiRepr {
    Polynomial(Vec<Term>),
    Oracle { name: String, eval: MultiOracle },
}

/// `f: R^p -> R` with mixed partials up to total order 4.
#[derive(Clone)]
pub struct MultiProfile {
    nvars: usize,
    repr: MultiRepr,
}

impl fmt::Debug for MultiProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            MultiRepr::Polynomial(t) => f.debug_tuple("Polynomial").field(t).finish(),
            MultiRepr::Oracle { name, .. } => f.debug_tuple("Oracle").field(name).finish(),
        }
    }
}

impl MultiProfile {
    pub fn polynomial(nvars: usize, terms: Vec<Term>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.exponents.len() != nvars) {
            return Err(Error::DimensionMismatch {
                expected: nvars,
                found: t.exponents.len(),
            });
        }
        Ok(MultiProfile {
            nvars,
            repr: MultiRepr::Polynomial(terms),
        })
    }

    /// `x_1^2 + .. + x_p^2`
    pub fn sum_of_squares(nvars: usize) -> Self {
        let terms = (0..nvars)
            .map(|i| {
                let mut e = vec![0; nvars];
                e[i] = 2;
                Term { exponents: e, coeff: 1.0 }
            })
            .collect();
        MultiProfile {
            nvars,
            repr: MultiRepr::Polynomial(terms),
        }
    }

    /// User oracle: `eval(x, alpha)` returns `d^alpha f(x)` where `alpha[i]`
    /// counts derivatives in variable `i`.
    pub fn oracle(
        name: impl Into<String>,
        nvars: usize,
        eval: impl Fn(&[f64], &[usize]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MultiProfile {
            nvars,
            repr: MultiRepr::Oracle {
                name: name.into(),
                eval: Arc::new(eval),
            },
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.repr, MultiRepr::Polynomial(_))
    }

    /// Mixed partial with multi-index `alpha` (derivative counts per variable).
    pub fn partial(&self, x: &[f64], alpha: &[usize]) -> Result<f64> {
        if x.len() != self.nvars || alpha.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                found: if x.len() != self.nvars { x.len() } else { alpha.len() },
            });
        }
        let order: usize = alpha.iter().sum();
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::DerivativeOrder(order));
        }
        Ok(match &self.repr {
            MultiRepr::Polynomial(terms) => terms
                .iter()
                .map(|t| {
                    let mut v = t.coeff;
                    for ((&e, &a), &xi) in t.exponents.iter().zip(alpha).zip(x) {
                        if a > e {
                            return 0.0;
                        }
                        v *= falling(e, a) * xi.powi((e - a) as i32);
                    }
                    v
                })
                .sum(),
            MultiRepr::Oracle { eval, .. } => eval(x, alpha),
        })
    }

    /// Partial derivative along a list of variable indices, e.g. `[0, 0, 2]`
    /// for `d^3 f / dx_1^2 dx_3`.
    pub fn partial_along(&self, x: &[f64], vars: &[usize]) -> Result<f64> {
        let mut alpha = vec![0; self.nvars];
        for &v in vars {
            if v >= self.nvars {
                return Err(Error::InvalidParameter(format!("variable index {v} out of range")));
            }
            alpha[v] += 1;
        }
        self.partial(x, &alpha)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.partial(x, &vec![0; self.nvars])
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.nvars).map(|i| self.partial_along(x, &[i])).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.nvars)
            .map(|i| (0..self.nvars).map(|j| self.partial_along(x, &[i, j])).collect())
            .collect()
    }

    /// Checks each oracle partial of order `1..=4` against central differences
    /// of every lower partial it can be reached from. A symmetric oracle passes
    /// every route; the worst relative disagreement is returned.
    pub fn oracle_consistency(&self, x: &[f64], step: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for alpha in multi_indices(self.nvars, MAX_DERIVATIVE_ORDER) {
            let order: usize = alpha.iter().sum();
            if order == 0 {
                continue;
            }
            let exact = self.partial(x, &alpha)?;
            for i in 0..self.nvars {
                if alpha[i] == 0 {
                    continue;
                }
                let mut lower = alpha.clone();
                lower[i] -= 1;
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += step;
                xm[i] -= step;
                let fd = (self.partial(&xp, &lower)? - self.partial(&xm, &lower)?) / (2.0 * step);
                worst = worst.max((fd - exact).abs() / (1.0 + exact.abs()));
            }
        }
        Ok(worst)
    }
}

/// All exponent vectors in `nvars` variables with total degree `<= max_deg`.
pub(crate) fn multi_indices(nvars: usize, max_deg: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; nvars];
    fn rec(var: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if var == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[var] = e;
            rec(var + 1, left - e, cur, out);
        }
        cur[var] = 0;
    }
    rec(0, max_deg, &mut cur, &mut out);
    out
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum MultiProfileDef {
    Polynomial { terms: Vec<Term> },
}

impl Serialize for MultiProfile {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.repr {
            MultiRepr::Polynomial(terms) => MultiProfileDef::Polynomial { terms: terms.clone() }.serialize(serializer),
            MultiRepr::Oracle { name, .. } => Err(serde::ser::Error::custom(Error::NotSerializable(name.clone()))),
        }
    }
}

impl<'de> Deserialize<'de> for MultiProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let MultiProfileDef::Polynomial { terms } = MultiProfileDef::deserialize(deserializer)?;
        let nvars = terms
            .first()
            .map(|t| t.exponents.len())
            .ok_or_else(|| serde::de::Error::custom("polynomial needs at least one term"))?;
        MultiProfile::polynomial(nvars, terms).map_err(serde::de::Error::custom)
    }
}
