#![allow(dead_code)]

use mi_sensor_qubo::{validate_covariance, CovarianceMatrix, SpinAssignment};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_a() -> CovarianceMatrix {
    validate_covariance(&[
        vec![2.0, 0.1, 1.0],
        vec![0.1, 2.0, 0.1],
        vec![1.0, 0.1, 2.0],
    ])
    .unwrap()
}

pub fn toy_b() -> CovarianceMatrix {
    validate_covariance(&[
        vec![2.0, 0.5, 1.0],
        vec![0.5, 2.0, 0.1],
        vec![1.0, 0.1, 2.0],
    ])
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `B Bᵀ + 0.5 I` with `B` uniform on [-1, 1].
pub fn random_pd<R: Rng>(rng: &mut R, n: usize) -> CovarianceMatrix {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let m = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)]).collect())
        .collect();
    validate_covariance(&rows).unwrap()
}

/// `det(Σ_SS)·det(Σ_TT)` by cofactor expansion on explicit submatrices;
/// shares no code with the library's LU or Leibniz paths.
pub fn cofactor_objective(cov: &CovarianceMatrix, s: &SpinAssignment) -> f64 {
    let n = cov.n();
    let s_idx: Vec<usize> = (0..n).filter(|&i| s.get(i) > 0).collect();
    let t_idx: Vec<usize> = (0..n).filter(|&i| s.get(i) < 0).collect();
    let block = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| idx.iter().map(|&j| cov.get(i, j)).collect())
            .collect()
    };
    cofactor_det(&block(&s_idx)) * cofactor_det(&block(&t_idx))
}

pub fn cofactor_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    match n {
        0 => 1.0,
        1 => m[0][0],
        _ => (0..n)
            .map(|col| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != col)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][col] * cofactor_det(&minor)
            })
            .sum(),
    }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
