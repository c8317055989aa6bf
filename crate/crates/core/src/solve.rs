//! Ground-state search for [`QuboModel`]s: exhaustive enumeration and
//! seeded single-flip simulated annealing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SensorSelection, VariableKind};
use crate::quadratize::QuboModel;

/// Largest variable count (original + auxiliary) for [`solve_exhaustive`].
pub const EXHAUSTIVE_LIMIT: usize = 25;

/// Relative tolerance for ties between ground states.
pub const GROUND_STATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveEntry {
    pub assignment: Vec<bool>,
    pub energy: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SolverDescriptor {
    Exhaustive,
    Annealing {
        t_initial: f64,
        t_final: f64,
        sweeps: usize,
        restarts: usize,
    },
}

impl std::fmt::Display for SolverDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverDescriptor::Exhaustive => f.write_str("exhaustive"),
            SolverDescriptor::Annealing {
                t_initial,
                t_final,
                sweeps,
                restarts,
            } => write!(
                f,
                "annealing (T0={t_initial:.6e}, Tf={t_final:.6e}, sweeps={sweeps}, restarts={restarts})"
            ),
        }
    }
}

/// Solver output, sorted by ascending energy then assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub entries: Vec<SolveEntry>,
    pub solver: SolverDescriptor,
    pub seed: Option<u64>,
}

impl SolveResult {
    pub fn min_energy(&self) -> Option<f64> {
        self.entries.first().map(|e| e.energy)
    }

    pub fn total_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }
}

fn sort_entries(entries: &mut [SolveEntry]) {
    entries.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| a.assignment.cmp(&b.assignment))
    });
}

/// Linear coefficients and symmetric adjacency, for O(degree) flip deltas.
struct Couplings {
    linear: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Couplings {
    fn new(q: &QuboModel) -> Self {
        let n = q.num_variables();
        let mut linear = vec![0.0; n];
        for (&i, &c) in &q.linear {
            linear[i] += c;
        }
        let mut neighbors = vec![Vec::new(); n];
        for (&(i, j), &c) in &q.quadratic {
            neighbors[i].push((j, c));
            neighbors[j].push((i, c));
        }
        Self { linear, neighbors }
    }

    fn local_field(&self, v: usize, x: &[bool]) -> f64 {
        self.linear[v]
            + self.neighbors[v]
                .iter()
                .filter(|(u, _)| x[*u])
                .map(|(_, c)| c)
                .sum::<f64>()
    }

    /// Upper bound on the magnitude of any single-flip energy change.
    fn max_flip_bound(&self) -> f64 {
        (0..self.linear.len())
            .map(|v| {
                self.linear[v].abs() + self.neighbors[v].iter().map(|(_, c)| c.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

fn mask_to_bits(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

/// Enumerates every assignment and returns all ground states.
pub fn solve_exhaustive(q: &QuboModel) -> Result<SolveResult> {
    let n = q.num_variables();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::ProblemTooLarge {
            what: "QUBO variable count",
            size: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let couplings = Couplings::new(q);
    let low = n.min(16);
    let high = n - low;
    // Screening uses incrementally updated energies; a looser tolerance
    // absorbs drift before the exact re-evaluation below.
    let screen_tol = 1e-7;

    let chunks: Vec<(f64, Vec<u64>)> = (0..1u64 << high)
        .into_par_iter()
        .map(|prefix| {
            let base = prefix << low;
            let mut x = mask_to_bits(base, n);
            let mut energy = q.energy_unchecked(&x);
            let mut mask = base;
            let mut best = energy;
            let mut candidates = vec![mask];
            for g in 1u64..(1u64 << low) {
                let v = g.trailing_zeros() as usize;
                let field = couplings.local_field(v, &x);
                energy += if x[v] { -field } else { field };
                x[v] = !x[v];
                mask ^= 1 << v;
                let tol = screen_tol * best.abs().max(1.0);
                if energy < best - tol {
                    best = energy;
                    candidates.clear();
                    candidates.push(mask);
                } else if energy <= best + tol {
                    if energy < best {
                        best = energy;
                    }
                    candidates.push(mask);
                }
            }
            (best, candidates)
        })
        .collect();

    let best = chunks.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let screen = screen_tol * best.abs().max(1.0);
    let mut exact: Vec<(u64, f64)> = chunks
        .iter()
        .filter(|(b, _)| *b <= best + screen)
        .flat_map(|(_, masks)| masks.iter().copied())
        .map(|m| (m, q.energy_unchecked(&mask_to_bits(m, n))))
        .collect();
    let min = exact.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let tol = GROUND_STATE_TOLERANCE * min.abs().max(1.0);
    exact.retain(|e| e.1 <= min + tol);

    let mut entries: Vec<SolveEntry> = exact
        .into_iter()
        .map(|(m, energy)| SolveEntry {
            assignment: mask_to_bits(m, n),
            energy,
            multiplicity: 1,
        })
        .collect();
    sort_entries(&mut entries);
    Ok(SolveResult {
        entries,
        solver: SolverDescriptor::Exhaustive,
        seed: None,
    })
}

/// Annealing schedule. Unset temperatures resolve from the model: `T0` is
/// the largest possible single-flip `|ΔE|` and `Tf = 1e-3 · T0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealParams {
    pub sweeps: usize,
    pub restarts: usize,
    pub t_initial: Option<f64>,
    pub t_final: Option<f64>,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            sweeps: 1000,
            restarts: 100,
            t_initial: None,
            t_final: None,
        }
    }
}

/// Runs `params.restarts` independent anneals with a geometric schedule and
/// aggregates the final states by assignment.
///
/// Restart `r` draws from a ChaCha stream keyed by `(seed, r)`, so the result
/// does not depend on how restarts are scheduled across threads.
pub fn solve_annealing(q: &QuboModel, params: AnnealParams, seed: u64) -> Result<SolveResult> {
    if params.restarts == 0 || params.sweeps == 0 {
        return Err(Error::InvalidParameter(
            "restarts and sweeps must be at least 1".into(),
        ));
    }
    let couplings = Couplings::new(q);
    let t_initial = match params.t_initial {
        Some(t) => t,
        None => {
            let bound = couplings.max_flip_bound();
            if bound > 0.0 {
                bound
            } else {
                1.0
            }
        }
    };
    let t_final = params.t_final.unwrap_or(1e-3 * t_initial);
    if !(t_initial > 0.0 && t_final > 0.0) || !t_initial.is_finite() || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "temperatures must be positive, got T0={t_initial}, Tf={t_final}"
        )));
    }

    let schedule: Vec<f64> = if params.sweeps == 1 {
        vec![t_initial]
    } else {
        let ratio = t_final / t_initial;
        (0..params.sweeps)
            .map(|s| t_initial * ratio.powf(s as f64 / (params.sweeps - 1) as f64))
            .collect()
    };

    let finals: Vec<Vec<bool>> = (0..params.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            anneal_once(&couplings, &schedule, &mut rng)
        })
        .collect();

    let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    for x in finals {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut entries: Vec<SolveEntry> = counts
        .into_iter()
        .map(|(assignment, multiplicity)| SolveEntry {
            energy: q.energy_unchecked(&assignment),
            assignment,
            multiplicity,
        })
        .collect();
    sort_entries(&mut entries);

    Ok(SolveResult {
        entries,
        solver: SolverDescriptor::Annealing {
            t_initial,
            t_final,
            sweeps: params.sweeps,
            restarts: params.restarts,
        },
        seed: Some(seed),
    })
}

fn anneal_once<R: Rng>(couplings: &Couplings, schedule: &[f64], rng: &mut R) -> Vec<bool> {
    let n = couplings.linear.len();
    let mut x: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    let mut field: Vec<f64> = (0..n).map(|v| couplings.local_field(v, &x)).collect();
    for &t in schedule {
        for v in 0..n {
            let delta = if x[v] { -field[v] } else { field[v] };
            if delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp() {
                x[v] = !x[v];
                let sign = if x[v] { 1.0 } else { -1.0 };
                for &(u, c) in &couplings.neighbors[v] {
                    field[u] += sign * c;
                }
            }
        }
    }
    x
}

/// An assignment projected back onto sensors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub selection: SensorSelection,
    /// Auxiliaries (variable ids) whose value differs from the product of
    /// their defining pair. Non-empty means the state is not a true ground
    /// state of the quadratized model.
    pub inconsistent_auxiliaries: Vec<usize>,
}

impl Projection {
    pub fn is_consistent(&self) -> bool {
        self.inconsistent_auxiliaries.is_empty()
    }
}

/// Drops auxiliaries and maps `x_i = 1` to sensor `i ∈ S`.
pub fn project_solution(assignment: &[bool], q: &QuboModel) -> Result<Projection> {
    if assignment.len() != q.num_variables() {
        return Err(Error::DimensionMismatch {
            expected: q.num_variables(),
            found: assignment.len(),
        });
    }
    let n = q.num_original();
    let mut members = vec![false; n];
    let mut inconsistent = Vec::new();
    for (id, kind) in q.variables.iter().enumerate() {
        match *kind {
            VariableKind::Original { sensor } => members[sensor] = assignment[id],
            VariableKind::Auxiliary { pair: (a, b) } => {
                if assignment[id] != (assignment[a] && assignment[b]) {
                    inconsistent.push(id);
                }
            }
        }
    }
    Ok(Projection {
        selection: SensorSelection::from_members(members),
        inconsistent_auxiliaries: inconsistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_covariance;
    use crate::quadratize::{build_qubo, QuboOptions};

    fn toy(b12: f64) -> QuboModel {
        let cov = validate_covariance(&[
            vec![2.0, b12, 1.0],
            vec![b12, 2.0, 0.1],
            vec![1.0, 0.1, 2.0],
        ])
        .unwrap();
        build_qubo(&cov, QuboOptions::default()).unwrap()
    }

    fn single(c: f64) -> QuboModel {
        let mut q = QuboModel {
            variables: vec![VariableKind::Original { sensor: 0 }],
            ..QuboModel::default()
        };
        q.linear.insert(0, c);
        q
    }

    #[test]
    fn exhaustive_single_variable() {
        let r = solve_exhaustive(&single(-1.0)).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].assignment, vec![true]);
        assert_eq!(r.entries[0].energy, -1.0);
    }

    #[test]
    fn exhaustive_toy_a_four_ground_states() {
        let r = solve_exhaustive(&toy(0.1)).unwrap();
        let got: Vec<Vec<bool>> = r.entries.iter().map(|e| e.assignment.clone()).collect();
        assert_eq!(
            got,
            vec![
                vec![false, false, true],
                vec![false, true, true],
                vec![true, false, false],
                vec![true, true, false],
            ]
        );
        for e in &r.entries {
            assert!((e.energy + 7.98).abs() < 1e-9);
            assert_eq!(e.multiplicity, 1);
        }
    }

    #[test]
    fn exhaustive_matches_rescan() {
        let q = toy(0.5);
        let r = solve_exhaustive(&q).unwrap();
        let all: Vec<(Vec<bool>, f64)> = (0..8)
            .map(|m| {
                let x = mask_to_bits(m, 3);
                let e = q.energy(&x).unwrap();
                (x, e)
            })
            .collect();
        let min = all.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
        let expected: Vec<&Vec<bool>> = all
            .iter()
            .filter(|a| a.1 <= min + 1e-9)
            .map(|a| &a.0)
            .collect();
        assert_eq!(expected.len(), r.entries.len());
        for e in &r.entries {
            assert!(expected.contains(&&e.assignment));
        }
    }

    #[test]
    fn exhaustive_limit() {
        let q = QuboModel {
            variables: (0..26)
                .map(|sensor| VariableKind::Original { sensor })
                .collect(),
            ..QuboModel::default()
        };
        assert!(matches!(
            solve_exhaustive(&q),
            Err(Error::ProblemTooLarge { size: 26, .. })
        ));
    }

    #[test]
    fn annealing_flat_model_returns_offset() {
        let mut q = QuboModel {
            variables: (0..4)
                .map(|sensor| VariableKind::Original { sensor })
                .collect(),
            ..QuboModel::default()
        };
        q.offset = 2.5;
        let params = AnnealParams {
            sweeps: 20,
            restarts: 10,
            ..AnnealParams::default()
        };
        let r = solve_annealing(&q, params, 7).unwrap();
        assert_eq!(r.total_multiplicity(), 10);
        assert!(r.entries.iter().all(|e| e.energy == 2.5));
    }

    #[test]
    fn annealing_is_deterministic_and_bounded_by_truth() {
        let q = toy(0.5);
        let a = solve_annealing(&q, AnnealParams::default(), 42).unwrap();
        let b = solve_annealing(&q, AnnealParams::default(), 42).unwrap();
        assert_eq!(a, b);
        let truth = solve_exhaustive(&q).unwrap().min_energy().unwrap();
        assert!(a.min_energy().unwrap() >= truth);
        assert_eq!(a.total_multiplicity(), 100);
        assert_eq!(a.seed, Some(42));
    }

    #[test]
    fn annealing_rejects_zero_restarts() {
        let params = AnnealParams {
            restarts: 0,
            ..AnnealParams::default()
        };
        assert!(solve_annealing(&single(1.0), params, 0).is_err());
    }

    #[test]
    fn projection_and_inconsistent_aux() {
        let q = toy(0.1);
        let p = project_solution(&[true, true, false], &q).unwrap();
        assert_eq!(p.selection.selected(), vec![0, 1]);
        assert!(p.is_consistent());

        let q = QuboModel {
            variables: vec![
                VariableKind::Original { sensor: 0 },
                VariableKind::Original { sensor: 1 },
                VariableKind::Auxiliary { pair: (0, 1) },
            ],
            ..QuboModel::default()
        };
        let p = project_solution(&[true, false, true], &q).unwrap();
        assert_eq!(p.inconsistent_auxiliaries, vec![2]);
        assert!(project_solution(&[true], &q).is_err());
    }
}
