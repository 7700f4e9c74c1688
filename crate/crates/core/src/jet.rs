//! Truncated multivariate Taylor polynomials ("jets") around a base point.
//!
//! A jet of degree `d` in `n` variables stores the coefficients `c_alpha` of
//! `f(P + h) = sum_{|alpha| <= d} c_alpha h^alpha`, so that
//! `d^alpha f(P) = alpha! c_alpha`. Monomials are kept in graded order, which
//! makes a degree-`d` jet a prefix of any higher-degree one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub(crate) struct JetSpace {
    nvars: usize,
    exps: Vec<Vec<u8>>,
    deg_len: Vec<usize>,
    lookup: HashMap<Vec<u8>, usize>,
    // (i, j, k): monomial i times monomial j is monomial k; sorted by deg(k).
    products: Vec<(u32, u32, u32)>,
    prod_len: Vec<usize>,
    // raise[var][k] = index of monomial k + e_var, or NONE.
    raise: Vec<Vec<u32>>,
    factorial: Vec<f64>,
}

const NONE: u32 = u32::MAX;

impl JetSpace {
    /// Shared, cached space for `(nvars, max_deg)`.
    pub fn get(nvars: usize, max_deg: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet cache poisoned");
        guard
            .entry((nvars, max_deg))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, max_deg)))
            .clone()
    }

    fn build(nvars: usize, max_deg: usize) -> JetSpace {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut deg_len = Vec::with_capacity(max_deg + 1);
        for d in 0..=max_deg {
            let mut cur = vec![0u8; nvars];
            push_degree(0, d, &mut cur, &mut exps);
            deg_len.push(exps.len());
        }
        let lookup: HashMap<Vec<u8>, usize> = exps.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        let degree: Vec<usize> = exps.iter().map(|e| e.iter().map(|&x| x as usize).sum()).collect();

        let mut products = Vec::new();
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                if degree[i] + degree[j] > max_deg {
                    continue;
                }
                let sum: Vec<u8> = exps[i].iter().zip(&exps[j]).map(|(a, b)| a + b).collect();
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        products.sort_by_key(|&(_, _, k)| (degree[k as usize], k));
        let prod_len = (0..=max_deg)
            .map(|d| products.iter().take_while(|p| degree[p.2 as usize] <= d).count())
            .collect();

        let raise = (0..nvars)
            .map(|v| {
                exps.iter()
                    .map(|e| {
                        let mut up = e.clone();
                        up[v] += 1;
                        lookup.get(&up).map_or(NONE, |&k| k as u32)
                    })
                    .collect()
            })
            .collect();
        let factorial = exps
            .iter()
            .map(|e| e.iter().map(|&x| (1..=x as u32).product::<u32>() as f64).product())
            .collect();
        JetSpace {
            nvars,
            exps,
            deg_len,
            lookup,
            products,
            prod_len,
            raise,
            factorial,
        }
    }

    /// Number of coefficients of a degree-`deg` jet.
    pub fn len(&self, deg: usize) -> usize {
        self.deg_len[deg]
    }

    pub fn index_of(&self, alpha: &[usize]) -> Option<usize> {
        let key: Vec<u8> = alpha.iter().map(|&a| a as u8).collect();
        self.lookup.get(&key).copied()
    }

    pub fn exponents(&self, k: usize) -> &[u8] {
        &self.exps[k]
    }

    pub fn factorial(&self, k: usize) -> f64 {
        self.factorial[k]
    }

    /// `out += scale * a * b`, truncated at `deg`.
    pub fn mul_acc(&self, out: &mut [f64], a: &[f64], b: &[f64], scale: f64, deg: usize) {
        if a.is_empty() || b.is_empty() {
            return;
        }
        if deg == 0 {
            out[0] += scale * a[0] * b[0];
            return;
        }
        let (la, lb) = (a.len(), b.len());
        for &(i, j, k) in &self.products[..self.prod_len[deg]] {
            let (i, j) = (i as usize, j as usize);
            if i < la && j < lb {
                out[k as usize] += scale * a[i] * b[j];
            }
        }
    }

    /// Writes `d a / d h_var`, truncated at `deg`, into `out`.
    pub fn diff_into(&self, out: &mut [f64], a: &[f64], var: usize, deg: usize) {
        let raise = &self.raise[var];
        for k in 0..self.deg_len[deg] {
            let up = raise[k];
            out[k] = if up != NONE && (up as usize) < a.len() {
                (self.exps[k][var] as f64 + 1.0) * a[up as usize]
            } else {
                0.0
            };
        }
    }

    /// Jet of `u_var` at base value `value`.
    pub fn variable(&self, var: usize, value: f64, deg: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len(deg)];
        out[0] = value;
        if deg >= 1 {
            out[1 + var] = 1.0;
        }
        out
    }

    /// Jet of `f(u_var)` from `derivs[m] = f^(m)(u_var(P))`.
    pub fn compose_scalar(&self, derivs: &[f64], var: usize, deg: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len(deg)];
        let mut alpha = vec![0usize; self.nvars];
        let mut fact = 1.0;
        for (m, d) in derivs.iter().enumerate().take(deg + 1) {
            if m > 0 {
                fact *= m as f64;
            }
            alpha[var] = m;
            out[self.index_of(&alpha).expect("monomial within degree")] = d / fact;
        }
        out
    }
}

fn push_degree(var: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if var + 1 == cur.len() {
        cur[var] = left as u8;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[var] = e as u8;
        push_degree(var + 1, left - e, cur, out);
    }
    cur[var] = 0;
}

/// Dense array of jets, one per component of a rank-`rank` tensor over
/// `[0, n)`; each jet is a contiguous block of `stride` coefficients.
#[derive(Clone)]
pub(crate) struct JetTensor {
    pub n: usize,
    pub rank: usize,
    pub stride: usize,
    pub data: Vec<f64>,
}

impl JetTensor {
    pub fn zeros(space: &JetSpace, n: usize, rank: usize, deg: usize) -> Self {
        let stride = space.len(deg);
        JetTensor {
            n,
            rank,
            stride,
            data: vec![0.0; n.pow(rank as u32) * stride],
        }
    }

    pub fn components(&self) -> usize {
        self.n.pow(self.rank as u32)
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn jet(&self, comp: usize) -> &[f64] {
        &self.data[comp * self.stride..(comp + 1) * self.stride]
    }

    pub fn jet_mut(&mut self, comp: usize) -> &mut [f64] {
        &mut self.data[comp * self.stride..(comp + 1) * self.stride]
    }

    pub fn is_zero(&self, comp: usize) -> bool {
        self.jet(comp).iter().all(|v| *v == 0.0)
    }

    /// Base-point values of every component.
    pub fn values(&self) -> Vec<f64> {
        (0..self.components()).map(|c| self.data[c * self.stride]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_counts() {
        let s = JetSpace::get(3, 4);
        assert_eq!(s.len(0), 1);
        assert_eq!(s.len(1), 4);
        assert_eq!(s.len(2), 10);
        assert_eq!(s.len(4), 35);
        assert_eq!(s.index_of(&[0, 0, 0]), Some(0));
        assert_eq!(s.index_of(&[0, 1, 0]), Some(2));
    }

    #[test]
    fn product_of_linear_jets() {
        // (1 + h0)(2 + h1) = 2 + 2 h0 + h1 + h0 h1
        let s = JetSpace::get(2, 3);
        let a = s.variable(0, 1.0, 3);
        let b = s.variable(1, 2.0, 3);
        let mut out = vec![0.0; s.len(3)];
        s.mul_acc(&mut out, &a, &b, 1.0, 3);
        assert_eq!(out[0], 2.0);
        assert_eq!(out[s.index_of(&[1, 0]).unwrap()], 2.0);
        assert_eq!(out[s.index_of(&[0, 1]).unwrap()], 1.0);
        assert_eq!(out[s.index_of(&[1, 1]).unwrap()], 1.0);
    }

    #[test]
    fn derivative_of_composed_cube() {
        // u^3 around u = 2 in variable 1 of 2; d/du = 3u^2 -> 12 + 12 h + 3 h^2
        let s = JetSpace::get(2, 4);
        let j = s.compose_scalar(&[8.0, 12.0, 12.0, 6.0, 0.0], 1, 4);
        let mut d = vec![0.0; s.len(3)];
        s.diff_into(&mut d, &j, 1, 3);
        assert_eq!(d[0], 12.0);
        assert_eq!(d[s.index_of(&[0, 1]).unwrap()], 12.0);
        assert_eq!(d[s.index_of(&[0, 2]).unwrap()], 3.0);
        assert_eq!(d[s.index_of(&[0, 3]).unwrap()], 0.0);
        let mut dx = vec![0.0; s.len(3)];
        s.diff_into(&mut dx, &j, 0, 3);
        assert!(dx.iter().all(|v| *v == 0.0));
    }
}
