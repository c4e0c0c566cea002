#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slqr::{CostWeights, FeedbackGain, StochasticLinearSystem, SymMatrix};

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let normal = rand_distr::StandardNormal;
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(normal))
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let g = gaussian_matrix(rng, n, n);
    SymMatrix::symmetrize(&g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5)
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// `A`, `C_i` with `‖A‖² + Σ‖C_i‖² = budget < 1`, which is sufficient for
/// mean-square stability without consulting any eigenvalue solver.
pub fn random_asms_pair(rng: &mut ChaCha8Rng, n: usize, channels: usize, budget: f64) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let a = gaussian_matrix(rng, n, n);
    let cs: Vec<_> = (0..channels).map(|_| gaussian_matrix(rng, n, n) * 0.4).collect();
    let total = spectral_norm(&a).powi(2) + cs.iter().map(|c| spectral_norm(c).powi(2)).sum::<f64>();
    let scale = (budget / total).sqrt();
    (a * scale, cs.into_iter().map(|c| c * scale).collect())
}

/// Truncated series `Σ_k L^k(Q)`, `L(S) = A'SA + Σ C'SC`.
pub fn gle_series(a: &DMatrix<f64>, cs: &[DMatrix<f64>], q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut term = q.clone();
    let mut sum = q.clone();
    for _ in 0..100_000 {
        let mut next = a.transpose() * &term * a;
        for c in cs {
            next += c.transpose() * &term * c;
        }
        term = next;
        sum += &term;
        if term.norm() <= 1e-16 * sum.norm() {
            break;
        }
    }
    sum
}

/// Stabilizable instance built around a known stabilizing gain: the closed
/// loop under `f0` is mean-square stable by construction.
pub struct Instance {
    pub sys: StochasticLinearSystem,
    pub w: CostWeights,
    pub f0: FeedbackGain,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, channels: usize) -> Instance {
    let budget = rng.gen_range(0.3..0.9);
    let (acl, ccl) = random_asms_pair(rng, n, channels, budget);
    let b = gaussian_matrix(rng, n, m);
    let f0 = gaussian_matrix(rng, m, n) * 0.5;
    let ds: Vec<_> = (0..channels).map(|_| gaussian_matrix(rng, n, m) * 0.1).collect();
    let a = &acl - &b * &f0;
    let cs: Vec<_> = ccl.iter().zip(&ds).map(|(c, d)| c - d * &f0).collect();
    let sys = StochasticLinearSystem::new(a, b, cs, ds).unwrap();
    let w = CostWeights::new(random_pd(rng, n), random_pd(rng, m));
    Instance {
        sys,
        w,
        f0: FeedbackGain(f0),
    }
}

/// Riccati value iteration from `P = 0`.
pub fn riccati_value_iteration(sys: &StochasticLinearSystem, w: &CostWeights) -> (DMatrix<f64>, DMatrix<f64>) {
    let (q, r) = (w.q.matrix(), w.r.matrix());
    let mut p = DMatrix::zeros(sys.n(), sys.n());
    let mut gain = DMatrix::zeros(sys.m(), sys.n());
    for _ in 0..200_000 {
        let mut h = r + sys.b.transpose() * &p * &sys.b;
        let mut g = sys.b.transpose() * &p * &sys.a;
        let mut next = q + sys.a.transpose() * &p * &sys.a;
        for (c, d) in sys.c.iter().zip(&sys.d) {
            h += d.transpose() * &p * d;
            g += d.transpose() * &p * c;
            next += c.transpose() * &p * c;
        }
        let k = h.clone().lu().solve(&g).unwrap();
        next -= g.transpose() * &k;
        next = (&next + next.transpose()) * 0.5;
        gain = -k;
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-14 * p.norm() {
            break;
        }
    }
    (p, gain)
}

/// Scalar GARE as a quadratic: clearing the denominator of
/// `p = q + s p - u²p² / (r + t p)` gives `α p² + β p + γ = 0` with
/// `s = a² + c²`, `t = b² + d²`, `u = ab + cd`. Returns the positive root
/// and its gain.
pub fn scalar_gare_root(a: f64, b: f64, c: f64, d: f64, q: f64, r: f64) -> (f64, f64) {
    let s = a * a + c * c;
    let t = b * b + d * d;
    let u = a * b + c * d;
    let alpha = t * (1.0 - s) + u * u;
    let beta = r * (1.0 - s) - q * t;
    let gamma = -q * r;
    let disc = (beta * beta - 4.0 * alpha * gamma).sqrt();
    let p = [(-beta + disc) / (2.0 * alpha), (-beta - disc) / (2.0 * alpha)]
        .into_iter()
        .filter(|p| *p > 0.0)
        .fold(f64::NAN, f64::max);
    (p, -u * p / (r + t * p))
}
