//! Ground-truth computations that never touch the spin expansion: Gaussian
//! entropy and mutual information from block determinants, exhaustive subset
//! search, and multilinear interpolation of an arbitrary spin function.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CovarianceMatrix, Monomial, SensorSelection, SpinAssignment, SpinPolynomial};

/// Largest `n` accepted by [`brute_force_optimum`].
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// Largest `n` accepted by [`interpolate_polynomial`].
pub const INTERPOLATION_LIMIT: usize = 20;

/// Relative tolerance for treating two objective values as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Differential entropy of a multivariate normal in nats.
pub fn entropy(cov: &CovarianceMatrix) -> f64 {
    gaussian_entropy(cov.determinant(), cov.n())
}

fn gaussian_entropy(det: f64, n: usize) -> f64 {
    0.5 * det.ln() + 0.5 * n as f64 * (1.0 + (2.0 * PI).ln())
}

/// Entropy of the marginal on `indices`; zero for the empty block.
pub fn block_entropy(cov: &CovarianceMatrix, indices: &[usize]) -> f64 {
    gaussian_entropy(cov.block_determinant(indices), indices.len())
}

/// `det(Σ_SS) · det(Σ_TT)` from the two principal submatrices.
pub fn subset_objective(cov: &CovarianceMatrix, sel: &SensorSelection) -> f64 {
    cov.block_determinant(&sel.selected()) * cov.block_determinant(&sel.unselected())
}

/// `I(S; T) = ½ ln[det(Σ_SS) det(Σ_TT) / det(Σ_XX)]` in nats.
pub fn mutual_information(cov: &CovarianceMatrix, sel: &SensorSelection) -> f64 {
    let (s, t) = (sel.selected(), sel.unselected());
    if s.is_empty() || t.is_empty() {
        return 0.0;
    }
    0.5 * (cov.block_determinant(&s) * cov.block_determinant(&t) / cov.determinant()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceOptimum {
    /// Maximum of [`subset_objective`].
    pub value: f64,
    /// Every maximizer. Without a cardinality constraint each partition is
    /// listed once, in canonical form; with one, the selections of size `k`.
    pub maximizers: Vec<SensorSelection>,
}

/// Enumerates every subset (or every subset of size `k`) and returns all
/// maximizers of [`subset_objective`].
pub fn brute_force_optimum(cov: &CovarianceMatrix, k: Option<usize>) -> Result<BruteForceOptimum> {
    let n = cov.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::ProblemTooLarge {
            what: "brute-force size n",
            size: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if let Some(k) = k {
        if k > n {
            return Err(Error::InvalidCardinality { k, n });
        }
    }

    let scored: Vec<(u64, f64)> = (0..1u64 << n)
        .into_par_iter()
        .filter(|mask| match k {
            Some(k) => mask.count_ones() as usize == k,
            // one representative per partition: the side holding sensor 0
            None => n == 0 || mask & 1 == 1,
        })
        .map(|mask| {
            (
                mask,
                subset_objective(cov, &SensorSelection::from_mask(mask, n)),
            )
        })
        .collect();

    let best = scored
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let mut maximizers: Vec<SensorSelection> = scored
        .iter()
        .filter(|&&(_, v)| best - v <= tol)
        .map(|&(mask, _)| {
            let sel = SensorSelection::from_mask(mask, n);
            if k.is_none() {
                sel.canonical()
            } else {
                sel
            }
        })
        .collect();
    maximizers.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.selected().cmp(&b.selected()))
    });

    Ok(BruteForceOptimum {
        value: best,
        maximizers,
    })
}

/// Fits the unique multilinear spin polynomial that agrees with `evaluator`
/// on all `2^n` assignments, via a fast Walsh–Hadamard transform.
///
/// The coefficient of monomial `M` is `2^-n Σ_s f(s) ∏_{i∈M} s_i`.
pub fn interpolate_polynomial<F>(evaluator: F, n: usize) -> Result<SpinPolynomial>
where
    F: Fn(&SpinAssignment) -> f64 + Sync,
{
    if n > INTERPOLATION_LIMIT {
        return Err(Error::ProblemTooLarge {
            what: "interpolation size n",
            size: n,
            limit: INTERPOLATION_LIMIT,
        });
    }
    let size = 1usize << n;
    // bit i of the index set means s_i = -1, so the character of M at x is
    // (-1)^{|M ∧ x|}
    let mut values: Vec<f64> = (0..size as u64)
        .into_par_iter()
        .map(|mask| evaluator(&SpinAssignment::from_mask(mask, n)))
        .collect();
    walsh_hadamard(&mut values);

    let scale = 1.0 / size as f64;
    let mut poly = SpinPolynomial::new(n);
    for (mask, v) in values.into_iter().enumerate() {
        poly.add_term(Monomial::from_mask(mask as u64), v * scale);
    }
    Ok(poly)
}

/// In-place unnormalized Walsh–Hadamard transform.
fn walsh_hadamard(values: &mut [f64]) {
    let len = values.len();
    let mut h = 1;
    while h < len {
        for block in (0..len).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (values[i], values[i + h]);
                values[i] = a + b;
                values[i + h] = a - b;
            }
        }
        h *= 2;
    }
}
