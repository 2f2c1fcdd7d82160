//! Independent oracles and random instance families for the test suites.
//!
//! Nothing here calls the code under test to compute an expected value; the
//! library types are only used to package inputs.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddleflow::oracle::DenseQp;
use saddleflow::problem::{Affine, FieldRef, Quadratic};
use saddleflow::{ConvexProgram, Label, SvmDataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences with step `1e-6 * max(1, |x_i|)`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b|_inf / max(1, |b|_inf)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Distance in units in the last place; `u64::MAX` across a sign change or NaN.
pub fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_nan() || b.is_nan() || a.is_sign_negative() != b.is_sign_negative() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `{((0,1),+1), ((0,-1),-1)}`: optimum beta = (0,1), beta0 = 0, mu = (1/2, 1/2).
pub fn two_point() -> SvmDataset {
    SvmDataset::new(vec![[0.0, 1.0], [0.0, -1.0]], vec![Label::Positive, Label::Negative]).unwrap()
}

/// Positive points uniform in `[-1,1] x [0.5,2.5]`, negative in
/// `[-1,1] x [-2.5,-0.5]`; always separable by `x2 = 0`.
pub fn box_dataset(rng: &mut impl Rng, per_class: (usize, usize)) -> SvmDataset {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (count, centre, label) in [(per_class.0, 1.5, Label::Positive), (per_class.1, -1.5, Label::Negative)] {
        for _ in 0..count {
            points.push([rng.random_range(-1.0..1.0), centre + rng.random_range(-1.0..1.0)]);
            labels.push(label);
        }
    }
    SvmDataset::new(points, labels).unwrap()
}

/// Random SVM state: `beta`, `beta0` in `[-3,3]`, multipliers in `[0,2]`
/// with roughly one in four exactly zero.
pub fn svm_state(rng: &mut impl Rng, p: usize) -> (Vec<f64>, Vec<f64>) {
    let z = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mu = (0..p)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.0..2.0) })
        .collect();
    (z, mu)
}

fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.1 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// A strictly convex QP with a strictly feasible point.
///
/// `Q = B B^T / n + I`, so its spectrum lies in `[1, 1 + n]`. Constraint rows
/// have norm `sqrt(1 / (2 (p + m)))`, so the stacked constraint matrix has
/// spectral norm at most `1/sqrt(2)`. A random `x_f` in `[-1,1]^n` satisfies
/// every inequality with slack in `[0.1, 1]` and every equality exactly; the
/// unconstrained minimizer sits 1 to 3 away from `x_f`.
pub fn strictly_convex_qp(rng: &mut impl Rng, n: usize, p: usize, m: usize) -> DenseQp {
    let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
            q[i * n + j] = s / n as f64 + if i == j { 1.0 } else { 0.0 };
        }
    }
    let xf: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dir = unit_vector(rng, n);
    let radius = rng.random_range(1.0..3.0);
    let xu: Vec<f64> = xf.iter().zip(&dir).map(|(a, d)| a + radius * d).collect();
    let c: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| q[i * n + j] * xu[j]).sum::<f64>()).collect();
    let row_norm = (1.0 / (2.0 * (p + m) as f64)).sqrt();
    let dot = |a: &[f64], x: &[f64]| a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
    let equalities = (0..m)
        .map(|_| {
            let a: Vec<f64> = unit_vector(rng, n).into_iter().map(|v| v * row_norm).collect();
            let d = dot(&a, &xf);
            (a, d)
        })
        .collect();
    let inequalities = (0..p)
        .map(|_| {
            let a: Vec<f64> = unit_vector(rng, n).into_iter().map(|v| v * row_norm).collect();
            let slack = rng.random_range(0.1..1.0);
            let rhs = dot(&a, &xf) + slack;
            (a, rhs)
        })
        .collect();
    DenseQp::new(q, c, equalities, inequalities).unwrap()
}

/// `min 0.5 (x - a)^2` subject to `1 - x <= 0`. For `a > 1` the constraint is
/// inactive at the optimum `x = a`, so a run from `x = 0` violates it first and
/// then drives its multiplier back to zero.
pub fn shifted_square(a: f64) -> ConvexProgram {
    let f: FieldRef = Arc::new(Quadratic::new(vec![1.0], vec![-a], 0.5 * a * a).unwrap());
    let g: FieldRef = Arc::new(Affine::new(vec![-1.0], 1.0));
    ConvexProgram::new(f, vec![], vec![g]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_a_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, -1.0]);
        assert!((g[0] - 12.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn ulp_distance() {
        assert_eq!(ulps(1.0, 1.0), 0);
        assert_eq!(ulps(1.0, f64::from_bits(1.0f64.to_bits() + 1)), 1);
        assert_eq!(ulps(0.0, -0.0), 0);
        assert_eq!(ulps(1.0, -1.0), u64::MAX);
    }

    #[test]
    fn qp_feasible_point_is_strict() {
        let mut r = rng(3);
        for _ in 0..20 {
            let n = r.random_range(1..=4);
            let p = r.random_range(1..=6);
            let qp = strictly_convex_qp(&mut r, n, p, 0);
            for (a, b) in qp.inequalities() {
                let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - (1.0 / (2.0 * p as f64)).sqrt()).abs() < 1e-12);
                assert!(b.is_finite());
            }
        }
    }
}
