//! Domain types shared across the pipeline: validated covariance matrices,
//! spin assignments, sensor selections and multilinear polynomials.
//!
//! Indices are 0-based throughout the library. Anything rendered for a user
//! (reports, exported files, CLI arguments) is converted to 1-based sensor
//! labels at the boundary.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking and repairing symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// A symmetric positive-definite covariance matrix over `n` sensor candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceMatrix {
    n: usize,
    entries: Vec<f64>,
}

/// Validates a raw square matrix and returns it as a [`CovarianceMatrix`].
///
/// Entries that are asymmetric within [`SYMMETRY_TOLERANCE`] are replaced by
/// their average. Positive definiteness is checked with a Cholesky
/// factorization; the first non-positive pivot is reported.
pub fn validate_covariance(raw: &[Vec<f64>]) -> Result<CovarianceMatrix> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    for (row, values) in raw.iter().enumerate() {
        if values.len() != n {
            return Err(Error::NotSquare {
                row,
                expected: n,
                found: values.len(),
            });
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
    }

    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = raw[i][i];
        for j in (i + 1)..n {
            let (upper, lower) = (raw[i][j], raw[j][i]);
            let scale = upper.abs().max(lower.abs()).max(1.0);
            if (upper - lower).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(Error::AsymmetricMatrix {
                    row: i,
                    col: j,
                    upper,
                    lower,
                });
            }
            let avg = if upper == lower {
                upper
            } else {
                0.5 * (upper + lower)
            };
            entries[i * n + j] = avg;
            entries[j * n + i] = avg;
        }
    }

    for i in 0..n {
        let d = entries[i * n + i];
        if d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: i, value: d });
        }
    }
    cholesky_pivots(n, &entries)?;

    Ok(CovarianceMatrix { n, entries })
}

/// Runs a Cholesky factorization, failing at the first pivot that is not
/// positive. Pivots within rounding of zero relative to their diagonal entry
/// count as zero, so numerically singular matrices are rejected.
fn cholesky_pivots(n: usize, entries: &[f64]) -> Result<()> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let diagonal = entries[j * n + j];
        let mut pivot = diagonal;
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k];
        }
        if pivot <= 4.0 * n as f64 * f64::EPSILON * diagonal || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let diag = pivot.sqrt();
        l[j * n + j] = diag;
        for i in (j + 1)..n {
            let mut v = entries[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / diag;
        }
    }
    Ok(())
}

impl CovarianceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `Σ_ij` (0-based).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// Principal submatrix on the given (0-based) indices.
    pub fn submatrix(&self, indices: &[usize]) -> DMatrix<f64> {
        let k = indices.len();
        DMatrix::from_fn(k, k, |r, c| self.get(indices[r], indices[c]))
    }

    /// Determinant of the full matrix.
    pub fn determinant(&self) -> f64 {
        determinant(&self.to_dmatrix())
    }

    /// Determinant of the principal submatrix on `indices`; the empty block
    /// has determinant 1.
    pub fn block_determinant(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 1.0;
        }
        determinant(&self.submatrix(indices))
    }
}

/// LU determinant with partial pivoting.
pub fn determinant(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

/// A vector of ±1 spins. `+1` marks a selected sensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinAssignment(Vec<i8>);

impl SpinAssignment {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpin(bad as i64));
        }
        Ok(Self(spins))
    }

    /// Decodes a bitmask where bit `i` set means `s_i = -1`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self(
            (0..n)
                .map(|i| if mask >> i & 1 == 1 { -1 } else { 1 })
                .collect(),
        )
    }

    /// Inverse of [`SpinAssignment::from_mask`].
    pub fn to_mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s < 0)
            .fold(0u64, |m, (i, _)| m | 1 << i)
    }

    /// Spin image of a boolean vector, `s = 2x - 1`.
    pub fn from_bits(bits: &[bool]) -> Self {
        Self(bits.iter().map(|&b| if b { 1 } else { -1 }).collect())
    }

    /// Every assignment of `n` spins, in mask order.
    pub fn all(n: usize) -> impl Iterator<Item = SpinAssignment> {
        assert!(n < 64);
        (0..1u64 << n).map(move |m| SpinAssignment::from_mask(m, n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }

    pub fn to_bits(&self) -> Vec<bool> {
        self.0.iter().map(|&s| s > 0).collect()
    }
}

/// A subset `S` of the sensor candidates; the complement `T` is implied.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorSelection {
    members: Vec<bool>,
}

impl SensorSelection {
    pub fn from_members(members: Vec<bool>) -> Self {
        Self { members }
    }

    /// Builds a selection from 0-based indices.
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut members = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            members[i] = true;
        }
        Ok(Self { members })
    }

    /// Bit `i` of `mask` set means sensor `i` is selected.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self {
            members: (0..n).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn to_mask(&self) -> u64 {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |m, (i, _)| m | 1 << i)
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 0-based indices of `S`.
    pub fn selected(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.members[i]).collect()
    }

    /// 0-based indices of `T`.
    pub fn unselected(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.members[i]).collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            members: self.members.iter().map(|b| !b).collect(),
        }
    }

    pub fn to_spins(&self) -> SpinAssignment {
        SpinAssignment::from_bits(&self.members)
    }

    /// Representative of the partition `{S, T}`: the larger block is taken
    /// as `S`; on equal sizes, the block holding the lowest index.
    pub fn canonical(&self) -> Self {
        let (s, t) = (self.len(), self.n() - self.len());
        let keep = match s.cmp(&t) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.members.first().copied().unwrap_or(true),
        };
        if keep {
            self.clone()
        } else {
            self.complement()
        }
    }

    /// `{S1,S2}|{S3}` style label.
    pub fn partition_label(&self) -> String {
        format!(
            "{}|{}",
            label_set(&self.selected()),
            label_set(&self.unselected())
        )
    }
}

impl fmt::Display for SensorSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&label_set(&self.selected()))
    }
}

/// Renders 0-based indices as `{S1,S3}`.
pub fn label_set(indices: &[usize]) -> String {
    let labels: Vec<String> = indices.iter().map(|i| format!("S{}", i + 1)).collect();
    format!("{{{}}}", labels.join(","))
}

/// `S = { i : s_i = +1 }`.
pub fn selection_from_spins(s: &SpinAssignment) -> SensorSelection {
    SensorSelection::from_members(s.to_bits())
}

/// The 0/1 masking matrix of a selection: `k_ij = 1` iff `i` and `j` lie in
/// the same block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskingMatrix {
    n: usize,
    k: Vec<u8>,
}

impl MaskingMatrix {
    pub fn from_selection(sel: &SensorSelection) -> Self {
        let n = sel.n();
        let mut k = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = u8::from(sel.contains(i) == sel.contains(j));
            }
        }
        Self { n, k }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.k[i * self.n + j]
    }
}

/// A duplicate-free, sorted set of variable indices. The empty monomial is
/// the constant term.
///
/// Ordered by degree first, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<usize>);

impl Monomial {
    pub fn constant() -> Self {
        Self(Vec::new())
    }

    /// Sorts and removes duplicates. Use [`crate::expansion::reduce_monomial`]
    /// for spin products, where repeated factors cancel instead.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn from_mask(mask: u64) -> Self {
        Self((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

fn add_term(terms: &mut BTreeMap<Monomial, f64>, monomial: Monomial, coefficient: f64) {
    if coefficient == 0.0 {
        return;
    }
    match terms.entry(monomial) {
        Entry::Vacant(v) => {
            v.insert(coefficient);
        }
        Entry::Occupied(mut o) => {
            *o.get_mut() += coefficient;
            if *o.get() == 0.0 {
                o.remove();
            }
        }
    }
}

/// Multilinear polynomial over `n` spin variables `s_i ∈ {−1, +1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpinPolynomial {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl SpinPolynomial {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        let mut p = Self::new(n);
        p.add_term(Monomial::constant(), value);
        p
    }

    pub fn from_terms(
        n: usize,
        terms: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        let mut p = Self::new(n);
        for (indices, c) in terms {
            if let Some(&i) = indices.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            p.add_term(Monomial::new(indices), c);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, f64> {
        &self.terms
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, monomial: Monomial, coefficient: f64) {
        add_term(&mut self.terms, monomial, coefficient);
    }

    /// `Σ c_M ∏_{i∈M} s_i`.
    pub fn evaluate(&self, s: &SpinAssignment) -> Result<f64> {
        if s.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: s.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|(m, &c)| {
                let sign: i8 = m.indices().iter().map(|&i| s.get(i)).product();
                c * f64::from(sign)
            })
            .sum())
    }

    /// Largest absolute coefficient; zero for the empty polynomial.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Free function form of [`SpinPolynomial::evaluate`].
pub fn evaluate_polynomial(p: &SpinPolynomial, s: &SpinAssignment) -> Result<f64> {
    p.evaluate(s)
}

impl Add for &SpinPolynomial {
    type Output = SpinPolynomial;

    fn add(self, rhs: &SpinPolynomial) -> SpinPolynomial {
        let mut out = self.clone();
        out.n = self.n.max(rhs.n);
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Neg for &SpinPolynomial {
    type Output = SpinPolynomial;

    fn neg(self) -> SpinPolynomial {
        SpinPolynomial {
            n: self.n,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl fmt::Display for SpinPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (idx, (m, c)) in self.terms.iter().enumerate() {
            if idx > 0 {
                f.write_str(if *c < 0.0 { " - " } else { " + " })?;
            } else if *c < 0.0 {
                f.write_str("-")?;
            }
            write!(f, "{}", c.abs())?;
            for i in m.indices() {
                write!(f, "·s{}", i + 1)?;
            }
        }
        Ok(())
    }
}

/// Kind of a boolean/QUBO variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariableKind {
    /// An original sensor variable (0-based sensor index).
    Original { sensor: usize },
    /// An auxiliary standing for the product of two earlier variables.
    Auxiliary { pair: (usize, usize) },
}

impl VariableKind {
    pub fn is_auxiliary(&self) -> bool {
        matches!(self, VariableKind::Auxiliary { .. })
    }
}

/// Record of an added cardinality penalty `λ(Σ x_i − k)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalityPenalty {
    pub k: usize,
    pub lambda: f64,
}

/// Multilinear polynomial over boolean variables `x_i ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BooleanPolynomial {
    variables: Vec<VariableKind>,
    terms: BTreeMap<Monomial, f64>,
    cardinality: Option<CardinalityPenalty>,
}

impl BooleanPolynomial {
    /// Empty polynomial over `n` original sensor variables.
    pub fn new(n: usize) -> Self {
        Self {
            variables: (0..n)
                .map(|sensor| VariableKind::Original { sensor })
                .collect(),
            terms: BTreeMap::new(),
            cardinality: None,
        }
    }

    pub fn from_terms(
        n: usize,
        terms: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        let mut p = Self::new(n);
        for (indices, c) in terms {
            if let Some(&i) = indices.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            p.add_term(Monomial::new(indices), c);
        }
        Ok(p)
    }

    pub fn variables(&self) -> &[VariableKind] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Number of original sensor variables.
    pub fn num_original(&self) -> usize {
        self.variables.iter().filter(|v| !v.is_auxiliary()).count()
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, f64> {
        &self.terms
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn cardinality(&self) -> Option<CardinalityPenalty> {
        self.cardinality
    }

    pub(crate) fn set_cardinality(&mut self, c: CardinalityPenalty) {
        self.cardinality = Some(c);
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, monomial: Monomial, coefficient: f64) {
        add_term(&mut self.terms, monomial, coefficient);
    }

    pub fn evaluate(&self, x: &[bool]) -> Result<f64> {
        if x.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                found: x.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .filter(|(m, _)| m.indices().iter().all(|&i| x[i]))
            .map(|(_, &c)| c)
            .sum())
    }
}
