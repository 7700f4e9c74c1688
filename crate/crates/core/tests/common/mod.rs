#![allow(dead_code)]

use curvhom::families::{set_with_symmetries, term, FamilySpec};
use curvhom::profile::{MultiProfile, ScalarProfile};
use curvhom::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `sum_i (x_i^2 + x_i^4) + 0.2 x_1 x_2^2`; Hessian positive on `|x_i| <= 1`.
pub fn family1(p: usize) -> FamilySpec {
    let mut terms = Vec::new();
    for i in 0..p {
        let mut e = vec![0; p];
        e[i] = 2;
        terms.push(term(&e, 1.0));
        e[i] = 4;
        terms.push(term(&e, 1.0));
    }
    let mut e = vec![0; p];
    e[0] = 1;
    e[1] = 2;
    terms.push(term(&e, 0.2));
    FamilySpec::family1(p, MultiProfile::polynomial(p, terms).unwrap()).unwrap()
}

pub fn family2(s: usize) -> FamilySpec {
    let f = (0..s)
        .map(|i| ScalarProfile::polynomial(vec![0.1 * i as f64, 0.3, -0.2, 0.4, 0.05 * (i + 1) as f64]))
        .collect();
    FamilySpec::family2(s, f).unwrap()
}

/// `psi'' > 0` on `[-1, 1]`, `psi''' != 0` generically.
pub fn family3(r: usize) -> FamilySpec {
    FamilySpec::family3(r, ScalarProfile::polynomial(vec![0.2, -0.1, 0.5, 0.3, 0.25])).unwrap()
}

pub fn generic_specs() -> Vec<FamilySpec> {
    let mut v = Vec::new();
    for k in [2, 3] {
        v.push(family1(k));
        v.push(family2(k));
        v.push(family3(k));
        v.push(FamilySpec::family3(k, ScalarProfile::exp()).unwrap());
    }
    v
}

pub fn random_points(dim: usize, seed: u64, count: usize, half_width: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-half_width..half_width)).collect())
        .collect()
}

/// Family 2 `nabla R` with every nonzero component, derived symbolically
/// from the metric. On top of the `(u_i,u_j,u_j,u_i; u_i)` entries, for
/// distinct `i, j, k` (only possible when `s >= 3`):
/// `nabla R(u_i,u_j,u_j,u_i; u_k) = 2 u_k` and
/// `nabla R(u_i,u_j,u_j,u_k; u_k) = u_i`.
pub fn family2_nabla_complete(spec: &FamilySpec, point: &[f64]) -> Tensor {
    let (_, mut nr) = spec.curvature_oracle(point).unwrap();
    let s = spec.size();
    for i in 0..s {
        for j in 0..s {
            for k in 0..s {
                if i == j || j == k || i == k {
                    continue;
                }
                set_with_symmetries(&mut nr, [i, j, j, i], &[k], 2.0 * point[k]);
                set_with_symmetries(&mut nr, [i, j, j, k], &[k], point[i]);
            }
        }
    }
    nr
}
