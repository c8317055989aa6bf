//! Spin → boolean change of variables, higher-order → quadratic reduction,
//! cardinality constraints, and QUBO → Ising conversion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::expand_objective;
use crate::model::{
    BooleanPolynomial, CardinalityPenalty, CovarianceMatrix, Monomial, SpinPolynomial, VariableKind,
};

/// Penalty attached to one auxiliary substitution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub aux: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalties {
    pub substitutions: Vec<Substitution>,
    pub cardinality: Option<CardinalityPenalty>,
}

/// A quadratic objective over binary variables, to be minimized:
/// `offset + Σ linear_i x_i + Σ_{i<j} quadratic_ij x_i x_j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuboModel {
    pub variables: Vec<VariableKind>,
    pub linear: BTreeMap<usize, f64>,
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
    pub penalties: Penalties,
}

impl QuboModel {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_original(&self) -> usize {
        self.variables.iter().filter(|v| !v.is_auxiliary()).count()
    }

    pub fn num_auxiliary(&self) -> usize {
        self.variables.len() - self.num_original()
    }

    pub fn energy(&self, x: &[bool]) -> Result<f64> {
        if x.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                found: x.len(),
            });
        }
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &[bool]) -> f64 {
        let mut e = self.offset;
        for (&i, &c) in &self.linear {
            if x[i] {
                e += c;
            }
        }
        for (&(i, j), &c) in &self.quadratic {
            if x[i] && x[j] {
                e += c;
            }
        }
        e
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        let originals = self.num_original();
        let mut seen = vec![false; originals];
        for (id, kind) in self.variables.iter().enumerate() {
            if let VariableKind::Original { sensor } = *kind {
                if sensor >= originals || seen[sensor] {
                    return invalid(format!("variable {id} has invalid sensor index {sensor}"));
                }
                seen[sensor] = true;
            }
            if let VariableKind::Auxiliary { pair: (a, b) } = *kind {
                if a >= id || b >= id || a == b {
                    return invalid(format!(
                        "auxiliary {id} has invalid defining pair ({a}, {b})"
                    ));
                }
            }
        }
        if let Some(&i) = self.linear.keys().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        for &(i, j) in self.quadratic.keys() {
            if i >= j {
                return invalid(format!("quadratic key ({i}, {j}) must satisfy i < j"));
            }
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
        }
        for s in &self.penalties.substitutions {
            if s.aux >= n || !self.variables[s.aux].is_auxiliary() {
                return invalid(format!("substitution refers to non-auxiliary {}", s.aux));
            }
            if s.weight.is_nan() || s.weight <= 0.0 {
                return invalid(format!("substitution weight {} must be positive", s.weight));
            }
        }
        if let Some(c) = self.penalties.cardinality {
            if c.lambda.is_nan() || c.lambda <= 0.0 {
                return invalid(format!("cardinality weight {} must be positive", c.lambda));
            }
            if c.k > self.num_original() {
                return Err(Error::InvalidCardinality {
                    k: c.k,
                    n: self.num_original(),
                });
            }
        }
        Ok(())
    }
}

/// Substitutes `s_i = 2x_i − 1` and expands multilinearly.
pub fn spin_to_boolean(p: &SpinPolynomial) -> BooleanPolynomial {
    let mut out = BooleanPolynomial::new(p.n());
    for (m, &c) in p.terms() {
        let idx = m.indices();
        let d = idx.len();
        for subset in 0u64..(1u64 << d) {
            let chosen: Vec<usize> = (0..d)
                .filter(|b| subset >> b & 1 == 1)
                .map(|b| idx[b])
                .collect();
            let t = chosen.len();
            let sign = if (d - t).is_multiple_of(2) { 1.0 } else { -1.0 };
            out.add_term(Monomial::new(chosen), c * sign * (1u64 << t) as f64);
        }
    }
    out
}

/// Default cardinality weight: twice the sum of absolute non-constant
/// coefficients (1 for a constant objective).
pub fn default_cardinality_weight(p: &BooleanPolynomial) -> f64 {
    let total: f64 = p
        .terms()
        .iter()
        .filter(|(m, _)| !m.is_constant())
        .map(|(_, c)| c.abs())
        .sum();
    if total > 0.0 {
        2.0 * total
    } else {
        1.0
    }
}

/// Adds `λ (Σ x_i − k)²` over the original sensor variables.
pub fn add_cardinality_penalty(
    p: &BooleanPolynomial,
    k: usize,
    lambda: f64,
) -> Result<BooleanPolynomial> {
    let originals: Vec<usize> = p
        .variables()
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_auxiliary())
        .map(|(i, _)| i)
        .collect();
    let n = originals.len();
    if k > n {
        return Err(Error::InvalidCardinality { k, n });
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cardinality weight must be positive, got {lambda}"
        )));
    }
    if p.cardinality().is_some() {
        return Err(Error::InvalidParameter(
            "a cardinality penalty is already present".into(),
        ));
    }
    let kf = k as f64;
    let mut out = p.clone();
    out.add_term(Monomial::constant(), lambda * kf * kf);
    for (a, &i) in originals.iter().enumerate() {
        out.add_term(Monomial::new(vec![i]), lambda * (1.0 - 2.0 * kf));
        for &j in &originals[a + 1..] {
            out.add_term(Monomial::new(vec![i, j]), 2.0 * lambda);
        }
    }
    out.set_cardinality(CardinalityPenalty { k, lambda });
    Ok(out)
}

/// Reduces a boolean polynomial to a QUBO by repeated auxiliary
/// substitution `y = x_i x_j`.
///
/// Each round picks the pair occurring in the most monomials of degree ≥ 3
/// (smallest pair on ties), replaces it by a fresh auxiliary in those
/// monomials, and adds `M (x_i x_j − 2 x_i y − 2 x_j y + 3 y)` with `M` one
/// more than the absolute sum of the rewritten coefficients.
pub fn quadratize(p: &BooleanPolynomial) -> QuboModel {
    let mut variables = p.variables().to_vec();
    let mut terms: BTreeMap<Monomial, f64> = p.terms().clone();
    let mut substitutions = Vec::new();

    while let Some((i, j)) = most_frequent_pair(&terms) {
        let aux = variables.len();
        variables.push(VariableKind::Auxiliary { pair: (i, j) });

        let rewritten: Vec<(Monomial, f64)> = terms
            .iter()
            .filter(|(m, _)| m.degree() >= 3 && m.contains(i) && m.contains(j))
            .map(|(m, &c)| (m.clone(), c))
            .collect();
        let weight = 1.0 + rewritten.iter().map(|(_, c)| c.abs()).sum::<f64>();
        for (m, c) in rewritten {
            terms.remove(&m);
            let mut idx: Vec<usize> = m
                .indices()
                .iter()
                .copied()
                .filter(|&v| v != i && v != j)
                .collect();
            idx.push(aux);
            add(&mut terms, Monomial::new(idx), c);
        }
        add(&mut terms, Monomial::new(vec![i, j]), weight);
        add(&mut terms, Monomial::new(vec![i, aux]), -2.0 * weight);
        add(&mut terms, Monomial::new(vec![j, aux]), -2.0 * weight);
        add(&mut terms, Monomial::new(vec![aux]), 3.0 * weight);
        substitutions.push(Substitution { aux, weight });
    }

    let mut model = QuboModel {
        variables,
        penalties: Penalties {
            substitutions,
            cardinality: p.cardinality(),
        },
        ..QuboModel::default()
    };
    for (m, c) in terms {
        match *m.indices() {
            [] => model.offset += c,
            [i] => {
                model.linear.insert(i, c);
            }
            [i, j] => {
                model.quadratic.insert((i, j), c);
            }
            _ => unreachable!("substitution loop leaves degree <= 2"),
        }
    }
    model
}

fn add(terms: &mut BTreeMap<Monomial, f64>, m: Monomial, c: f64) {
    let entry = terms.entry(m.clone()).or_insert(0.0);
    *entry += c;
    if *entry == 0.0 {
        terms.remove(&m);
    }
}

fn most_frequent_pair(terms: &BTreeMap<Monomial, f64>) -> Option<(usize, usize)> {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for m in terms.keys().filter(|m| m.degree() >= 3) {
        let idx = m.indices();
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                *counts.entry((idx[a], idx[b])).or_insert(0) += 1;
            }
        }
    }
    let mut best: Option<((usize, usize), usize)> = None;
    for (pair, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((pair, count));
        }
    }
    best.map(|(pair, _)| pair)
}

/// Ising form `offset + Σ h_i s_i + Σ_{i<j} J_ij s_i s_j` of a QUBO.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IsingModel {
    pub h: Vec<f64>,
    pub j: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl IsingModel {
    pub fn energy(&self, s: &[i8]) -> Result<f64> {
        if s.len() != self.h.len() {
            return Err(Error::DimensionMismatch {
                expected: self.h.len(),
                found: s.len(),
            });
        }
        let mut e = self.offset;
        for (i, &h) in self.h.iter().enumerate() {
            e += h * f64::from(s[i]);
        }
        for (&(a, b), &c) in &self.j {
            e += c * f64::from(s[a] * s[b]);
        }
        Ok(e)
    }
}

/// Applies `x = (s + 1) / 2`.
pub fn qubo_to_ising(q: &QuboModel) -> IsingModel {
    let mut ising = IsingModel {
        h: vec![0.0; q.num_variables()],
        j: BTreeMap::new(),
        offset: q.offset,
    };
    for (&i, &a) in &q.linear {
        ising.h[i] += 0.5 * a;
        ising.offset += 0.5 * a;
    }
    for (&(i, j), &b) in &q.quadratic {
        let quarter = 0.25 * b;
        *ising.j.entry((i, j)).or_insert(0.0) += quarter;
        ising.h[i] += quarter;
        ising.h[j] += quarter;
        ising.offset += quarter;
    }
    ising
}

/// Options for [`build_qubo`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuboOptions {
    /// Require exactly `k` selected sensors.
    pub select_k: Option<usize>,
    /// Cardinality weight; defaults to [`default_cardinality_weight`].
    pub penalty_weight: Option<f64>,
}

/// Minimization objective `−f` in boolean form, before quadratization.
pub fn minimization_objective(
    cov: &CovarianceMatrix,
    options: QuboOptions,
) -> Result<BooleanPolynomial> {
    let f = expand_objective(cov)?;
    let objective = spin_to_boolean(&-&f);
    match options.select_k {
        Some(k) => {
            let lambda = options
                .penalty_weight
                .unwrap_or_else(|| default_cardinality_weight(&objective));
            add_cardinality_penalty(&objective, k, lambda)
        }
        None => Ok(objective),
    }
}

/// expand → negate → boolean → (cardinality) → quadratize.
pub fn build_qubo(cov: &CovarianceMatrix, options: QuboOptions) -> Result<QuboModel> {
    Ok(quadratize(&minimization_objective(cov, options)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_covariance, SpinAssignment};

    fn toy_a() -> CovarianceMatrix {
        validate_covariance(&[
            vec![2.0, 0.1, 1.0],
            vec![0.1, 2.0, 0.1],
            vec![1.0, 0.1, 2.0],
        ])
        .unwrap()
    }

    fn bits(mask: u64, n: usize) -> Vec<bool> {
        (0..n).map(|i| mask >> i & 1 == 1).collect()
    }

    #[test]
    fn spin_to_boolean_identities() {
        let p = SpinPolynomial::from_terms(1, [(vec![0], 1.0)]).unwrap();
        let b = spin_to_boolean(&p);
        assert_eq!(
            b,
            BooleanPolynomial::from_terms(1, [(vec![], -1.0), (vec![0], 2.0)]).unwrap()
        );

        let p = SpinPolynomial::from_terms(2, [(vec![0, 1], 1.0)]).unwrap();
        let b = spin_to_boolean(&p);
        let expected = BooleanPolynomial::from_terms(
            2,
            [
                (vec![], 1.0),
                (vec![0], -2.0),
                (vec![1], -2.0),
                (vec![0, 1], 4.0),
            ],
        )
        .unwrap();
        assert_eq!(b, expected);
    }

    #[test]
    fn spin_to_boolean_preserves_toy_values() {
        let f = expand_objective(&toy_a()).unwrap();
        let b = spin_to_boolean(&f);
        for mask in 0..8 {
            let x = bits(mask, 3);
            let s = SpinAssignment::from_bits(&x);
            assert!((b.evaluate(&x).unwrap() - f.evaluate(&s).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_input_passes_through() {
        let b =
            BooleanPolynomial::from_terms(3, [(vec![], 0.5), (vec![0], -1.0), (vec![1, 2], 2.0)])
                .unwrap();
        let q = quadratize(&b);
        assert_eq!(q.num_auxiliary(), 0);
        assert_eq!(q.offset, 0.5);
        assert_eq!(q.linear, BTreeMap::from([(0, -1.0)]));
        assert_eq!(q.quadratic, BTreeMap::from([((1, 2), 2.0)]));
        assert!(q.penalties.substitutions.is_empty());
    }

    #[test]
    fn cubic_term_gets_one_auxiliary() {
        let b = BooleanPolynomial::from_terms(3, [(vec![0, 1, 2], -1.0)]).unwrap();
        let q = quadratize(&b);
        assert_eq!(q.num_auxiliary(), 1);
        assert_eq!(q.variables[3], VariableKind::Auxiliary { pair: (0, 1) });
        assert_eq!(
            q.penalties.substitutions,
            vec![Substitution {
                aux: 3,
                weight: 2.0
            }]
        );
        q.validate().unwrap();

        let energies: Vec<f64> = (0..16).map(|m| q.energy(&bits(m, 4)).unwrap()).collect();
        let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(min, -1.0);
        let argmins: Vec<u64> = (0..16).filter(|&m| energies[m as usize] == min).collect();
        assert_eq!(argmins, vec![0b1111]);
    }

    #[test]
    fn tie_break_picks_smallest_pair() {
        // (0,1), (0,2) and (1,2) each occur twice
        let b = BooleanPolynomial::from_terms(4, [(vec![0, 1, 2], 1.0), (vec![0, 1, 2, 3], 1.0)])
            .unwrap();
        let q = quadratize(&b);
        assert_eq!(q.variables[4], VariableKind::Auxiliary { pair: (0, 1) });
    }

    #[test]
    fn cardinality_penalty_expansion() {
        let base = BooleanPolynomial::new(3);
        let lambda = 1.5;
        let p = add_cardinality_penalty(&base, 2, lambda).unwrap();
        assert_eq!(p.coefficient(&Monomial::constant()), 4.0 * lambda);
        for i in 0..3 {
            assert_eq!(p.coefficient(&Monomial::new(vec![i])), -3.0 * lambda);
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(p.coefficient(&Monomial::new(vec![i, j])), 2.0 * lambda);
        }
        assert_eq!(p.evaluate(&[true, true, false]).unwrap(), 0.0);
        for mask in 0..8u64 {
            let x = bits(mask, 3);
            let d = mask.count_ones() as f64 - 2.0;
            assert_eq!(p.evaluate(&x).unwrap(), lambda * d * d);
        }
        assert_eq!(
            add_cardinality_penalty(&base, 4, 1.0).unwrap_err(),
            Error::InvalidCardinality { k: 4, n: 3 }
        );
        assert!(add_cardinality_penalty(&base, 1, 0.0).is_err());
    }

    #[test]
    fn ising_conversion() {
        let mut q = QuboModel {
            variables: vec![VariableKind::Original { sensor: 0 }],
            ..QuboModel::default()
        };
        q.linear.insert(0, -1.0);
        let ising = qubo_to_ising(&q);
        assert_eq!(ising.h, vec![-0.5]);
        assert_eq!(ising.offset, -0.5);

        let zero = qubo_to_ising(&QuboModel::default());
        assert!(zero.h.is_empty() && zero.j.is_empty() && zero.offset == 0.0);

        let q = build_qubo(&toy_a(), QuboOptions::default()).unwrap();
        let ising = qubo_to_ising(&q);
        for mask in 0..8 {
            let x = bits(mask, 3);
            let s: Vec<i8> = x.iter().map(|&b| if b { 1 } else { -1 }).collect();
            assert!((ising.energy(&s).unwrap() - q.energy(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn validate_catches_bad_models() {
        let mut q = QuboModel {
            variables: vec![
                VariableKind::Original { sensor: 0 },
                VariableKind::Auxiliary { pair: (0, 1) },
            ],
            ..QuboModel::default()
        };
        assert!(q.validate().is_err());
        q.variables[1] = VariableKind::Original { sensor: 1 };
        q.quadratic.insert((1, 0), 1.0);
        assert!(q.validate().is_err());
    }
}
