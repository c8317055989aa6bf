//! Compiles a covariance matrix into the spin polynomial
//! `f(s) = det(Σ_SS) · det(Σ_TT)`.
//!
//! Masking the covariance with `k_ij = (s_i s_j + 1) / 2` zeroes every entry
//! that couples the two blocks, so the masked matrix is a simultaneous
//! row/column permutation of `diag(Σ_SS, Σ_TT)` and shares its determinant.
//! Expanding that determinant with the Leibniz sum and multiplying out the
//! masking factors gives a multilinear polynomial in the spins once every
//! `s_i²` is replaced by 1.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    determinant, CovarianceMatrix, MaskingMatrix, Monomial, SensorSelection, SpinAssignment,
    SpinPolynomial,
};

/// Largest `n` accepted by [`expand_objective`] (n! permutations).
pub const EXPANSION_LIMIT: usize = 10;

/// Coefficients below this fraction of the largest coefficient are treated
/// as cancellation residue and dropped.
pub const RELATIVE_DROP_TOLERANCE: f64 = 1e-12;

/// `k_ij = (s_i s_j + 1) / 2`, always 0 or 1.
pub fn masking_value(s: &SpinAssignment, i: usize, j: usize) -> Result<u8> {
    let n = s.len();
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    Ok(((s.get(i) * s.get(j) + 1) / 2) as u8)
}

/// Covariance with cross-block entries zeroed: `a_ij = Σ_ij k_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    n: usize,
    a: Vec<f64>,
}

impl MaskedMatrix {
    pub fn new(cov: &CovarianceMatrix, sel: &SensorSelection) -> Self {
        let n = cov.n();
        assert_eq!(n, sel.n(), "selection size must match covariance");
        let mask = MaskingMatrix::from_selection(sel);
        let a = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                cov.get(i, j) * f64::from(mask.get(i, j))
            })
            .collect();
        Self { n, a }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn determinant(&self) -> f64 {
        determinant(&nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.a))
    }
}

/// `det(A)` for the masked matrix of `sel`, computed numerically by LU.
pub fn masked_determinant(cov: &CovarianceMatrix, sel: &SensorSelection) -> f64 {
    MaskedMatrix::new(cov, sel).determinant()
}

/// Keeps the indices that occur an odd number of times (`s_i² = 1`).
pub fn reduce_monomial(indices: &[usize]) -> Monomial {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let mut odd = Vec::with_capacity(sorted.len());
    for chunk in sorted.chunk_by(|a, b| a == b) {
        if chunk.len() % 2 == 1 {
            odd.push(chunk[0]);
        }
    }
    Monomial::new(odd)
}

/// Expands `det(Σ_SS)·det(Σ_TT)` into a multilinear spin polynomial.
pub fn expand_objective(cov: &CovarianceMatrix) -> Result<SpinPolynomial> {
    expand_objective_with_limit(cov, EXPANSION_LIMIT)
}

pub fn expand_objective_with_limit(cov: &CovarianceMatrix, limit: usize) -> Result<SpinPolynomial> {
    let n = cov.n();
    // dense accumulator indexed by monomial bitmask
    let hard_limit = limit.min(20);
    if n > hard_limit {
        return Err(Error::ProblemTooLarge {
            what: "expansion size n",
            size: n,
            limit: hard_limit,
        });
    }

    // Fix the image of row 0 per worker; merge in branch order.
    let branches: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut acc = vec![0.0; 1 << n];
            let mut perm: Vec<usize> = (0..n).collect();
            perm.swap(0, first);
            let sign = if first == 0 { 1.0 } else { -1.0 };
            let entry = cov.get(0, perm[0]);
            if entry != 0.0 {
                let mut walker = LeibnizWalker {
                    cov,
                    perm: &mut perm,
                    acc: &mut acc,
                    factors: Vec::with_capacity(n),
                };
                walker.descend(1, sign * entry);
            }
            acc
        })
        .collect();

    let mut acc = vec![0.0; 1 << n];
    for branch in &branches {
        for (total, v) in acc.iter_mut().zip(branch) {
            *total += v;
        }
    }

    let largest = acc.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut poly = SpinPolynomial::new(n);
    for (mask, &c) in acc.iter().enumerate() {
        if c != 0.0 && c.abs() >= RELATIVE_DROP_TOLERANCE * largest {
            poly.add_term(Monomial::from_mask(mask as u64), c);
        }
    }
    Ok(poly)
}

struct LeibnizWalker<'a> {
    cov: &'a CovarianceMatrix,
    perm: &'a mut Vec<usize>,
    acc: &'a mut Vec<f64>,
    factors: Vec<u64>,
}

impl LeibnizWalker<'_> {
    /// Swap-based permutation generation; every swap of two distinct
    /// positions flips the parity.
    fn descend(&mut self, depth: usize, coefficient: f64) {
        let n = self.perm.len();
        if depth == n {
            self.emit(coefficient);
            return;
        }
        for t in depth..n {
            self.perm.swap(depth, t);
            let entry = self.cov.get(depth, self.perm[depth]);
            if entry != 0.0 {
                let sign = if t == depth { 1.0 } else { -1.0 };
                self.descend(depth + 1, sign * coefficient * entry);
            }
            self.perm.swap(depth, t);
        }
    }

    /// Multiplies out `∏ (s_j s_{σ(j)} + 1) / 2` over non-fixed positions,
    /// walking the subsets in Gray-code order.
    fn emit(&mut self, coefficient: f64) {
        self.factors.clear();
        for (j, &image) in self.perm.iter().enumerate() {
            if image != j {
                self.factors.push((1u64 << j) ^ (1u64 << image));
            }
        }
        let m = self.factors.len();
        let scale = coefficient / (1u64 << m) as f64;
        let mut current = 0u64;
        self.acc[0] += scale;
        for g in 1u64..(1u64 << m) {
            current ^= self.factors[g.trailing_zeros() as usize];
            self.acc[current as usize] += scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{selection_from_spins, validate_covariance};

    fn toy_a() -> CovarianceMatrix {
        validate_covariance(&[
            vec![2.0, 0.1, 1.0],
            vec![0.1, 2.0, 0.1],
            vec![1.0, 0.1, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn masking_values() {
        let s = SpinAssignment::new(vec![1, 1, -1]).unwrap();
        assert_eq!(masking_value(&s, 0, 1).unwrap(), 1);
        assert_eq!(masking_value(&s, 0, 2).unwrap(), 0);
        for i in 0..3 {
            assert_eq!(masking_value(&s, i, i).unwrap(), 1);
        }
        // n = 4, S = {2, 4}
        let s = SpinAssignment::new(vec![-1, 1, -1, 1]).unwrap();
        assert_eq!(masking_value(&s, 1, 3).unwrap(), 1);
        assert_eq!(masking_value(&s, 0, 2).unwrap(), 1);
        assert_eq!(masking_value(&s, 0, 1).unwrap(), 0);
        assert_eq!(
            masking_value(&s, 4, 0).unwrap_err(),
            Error::IndexOutOfRange { index: 4, n: 4 }
        );
    }

    #[test]
    fn masked_determinant_toy_a() {
        let cov = toy_a();
        let sel = SensorSelection::from_indices(3, &[0, 1]).unwrap();
        assert!((masked_determinant(&cov, &sel) - 7.98).abs() < 1e-12);
        let empty = SensorSelection::from_indices(3, &[]).unwrap();
        assert!((masked_determinant(&cov, &empty) - cov.determinant()).abs() < 1e-12);
    }

    #[test]
    fn masked_matrix_zeroes_cross_block() {
        let cov = toy_a();
        let sel = SensorSelection::from_indices(3, &[0, 1]).unwrap();
        let a = MaskedMatrix::new(&cov, &sel);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.get(2, 1), 0.0);
        assert_eq!(a.get(0, 1), 0.1);
        assert_eq!(a.get(2, 2), 2.0);
    }

    #[test]
    fn reduce_monomial_parity() {
        assert_eq!(reduce_monomial(&[0, 1, 1, 0]), Monomial::constant());
        assert_eq!(reduce_monomial(&[0, 1, 1, 2]), Monomial::new(vec![0, 2]));
        assert_eq!(reduce_monomial(&[]), Monomial::constant());
        assert_eq!(reduce_monomial(&[3, 3, 3]), Monomial::new(vec![3]));
    }

    #[test]
    fn fourth_order_terms_for_transposition() {
        // (i1, i2, i3) = (2, 1, 3): pairwise products of s1 s2, s2 s1, s3 s3
        let factors = [[0usize, 1], [1, 0], [2, 2]];
        let mut p = SpinPolynomial::new(3);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let mut idx = factors[a].to_vec();
            idx.extend_from_slice(&factors[b]);
            p.add_term(reduce_monomial(&idx), 1.0);
        }
        let expected = SpinPolynomial::from_terms(3, [(vec![], 1.0), (vec![0, 1], 2.0)]).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn expand_two_by_two() {
        let cov = validate_covariance(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = expand_objective(&cov).unwrap();
        let expected = SpinPolynomial::from_terms(2, [(vec![], 3.5), (vec![0, 1], -0.5)]).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn expand_diagonal_is_constant() {
        let cov = validate_covariance(&[
            vec![1.5, 0.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 0.0],
            vec![0.0, 0.0, 3.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.5],
        ])
        .unwrap();
        let p = expand_objective(&cov).unwrap();
        assert_eq!(p, SpinPolynomial::constant(4, 4.5));
    }

    #[test]
    fn expand_toy_a_matches_frozen_coefficients() {
        // Frozen from a Walsh transform of the eight masked determinants.
        let p = expand_objective(&toy_a()).unwrap();
        let expected = [
            (vec![], 6.985),
            (vec![0, 1], -0.005),
            (vec![0, 2], -0.995),
            (vec![1, 2], -0.005),
        ];
        assert_eq!(p.len(), expected.len());
        for (idx, c) in expected {
            let got = p.coefficient(&Monomial::new(idx));
            assert!((got - c).abs() < 1e-12, "{got} vs {c}");
        }
        let s = SpinAssignment::new(vec![1, 1, -1]).unwrap();
        assert!((p.evaluate(&s).unwrap() - 7.98).abs() < 1e-12);
    }

    #[test]
    fn expansion_agrees_with_masked_determinant() {
        let cov = validate_covariance(&[
            vec![3.0, 0.4, -0.2, 0.7],
            vec![0.4, 2.5, 0.3, -0.1],
            vec![-0.2, 0.3, 2.0, 0.6],
            vec![0.7, -0.1, 0.6, 1.8],
        ])
        .unwrap();
        let p = expand_objective(&cov).unwrap();
        for s in SpinAssignment::all(4) {
            let want = masked_determinant(&cov, &selection_from_spins(&s));
            let got = p.evaluate(&s).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
        assert!(p.terms().keys().all(|m| m.degree() % 2 == 0));
    }

    #[test]
    fn expansion_limit_enforced() {
        let rows: Vec<Vec<f64>> = (0..11)
            .map(|i| (0..11).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let cov = validate_covariance(&rows).unwrap();
        assert!(matches!(
            expand_objective(&cov),
            Err(Error::ProblemTooLarge {
                size: 11,
                limit: 10,
                ..
            })
        ));
        assert!(expand_objective_with_limit(&cov, 11).is_ok());
    }
}
