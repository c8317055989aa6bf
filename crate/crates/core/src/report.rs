//! Human-readable placement reports and the cardinality sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::model::{CovarianceMatrix, SensorSelection};
use crate::oracle::mutual_information;
use crate::quadratize::{build_qubo, QuboModel, QuboOptions};
use crate::solve::{
    project_solution, solve_annealing, solve_exhaustive, AnnealParams, SolveResult,
    SolverDescriptor,
};

/// One partition class `{S, T} ~ {T, S}` of solver output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    /// 1-based sensor numbers in `S`.
    pub selected: Vec<usize>,
    /// 1-based sensor numbers in `T`.
    pub unselected: Vec<usize>,
    pub partition: String,
    /// Distinct spin patterns over the original sensors.
    pub spins: Vec<Vec<i8>>,
    /// Lowest energy seen for the class.
    pub energy: f64,
    pub mutual_information: f64,
    pub count: usize,
    /// False when some state in the class violated an auxiliary definition.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementReport {
    pub n: usize,
    pub select_k: Option<usize>,
    pub solver: SolverDescriptor,
    pub seed: Option<u64>,
    pub rows: Vec<ReportRow>,
}

struct RowAcc {
    orientation: SensorSelection,
    spins: Vec<Vec<i8>>,
    energy: f64,
    count: usize,
    consistent: bool,
}

/// Projects solver states onto sensors, merges complementary selections,
/// and recomputes mutual information from the covariance.
pub fn report(
    result: &SolveResult,
    cov: &CovarianceMatrix,
    q: &QuboModel,
) -> Result<PlacementReport> {
    let k = q.penalties.cardinality.map(|c| c.k);
    let mut classes: BTreeMap<Vec<bool>, RowAcc> = BTreeMap::new();
    for entry in &result.entries {
        let projection = project_solution(&entry.assignment, q)?;
        let sel = projection.selection;
        let canonical = sel.canonical();
        let pattern = sel.to_spins().spins().to_vec();
        let acc = classes
            .entry(canonical.members().to_vec())
            .or_insert_with(|| RowAcc {
                orientation: orient(&canonical, k),
                spins: Vec::new(),
                energy: entry.energy,
                count: 0,
                consistent: true,
            });
        if !acc.spins.contains(&pattern) {
            acc.spins.push(pattern);
        }
        acc.energy = acc.energy.min(entry.energy);
        acc.count += entry.multiplicity;
        acc.consistent &= projection.inconsistent_auxiliaries.is_empty();
    }

    let mut rows: Vec<ReportRow> = classes
        .into_values()
        .map(|mut acc| {
            acc.spins.sort_by(|a, b| b.cmp(a));
            let sel = acc.orientation;
            ReportRow {
                selected: sel.selected().iter().map(|i| i + 1).collect(),
                unselected: sel.unselected().iter().map(|i| i + 1).collect(),
                partition: sel.partition_label(),
                spins: acc.spins,
                energy: acc.energy,
                mutual_information: mutual_information(cov, &sel),
                count: acc.count,
                consistent: acc.consistent,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| b.selected.len().cmp(&a.selected.len()))
            .then_with(|| a.selected.cmp(&b.selected))
    });

    Ok(PlacementReport {
        n: cov.n(),
        select_k: k,
        solver: result.solver,
        seed: result.seed,
        rows,
    })
}

/// Under a cardinality constraint, show the side of size `k` as `S`.
fn orient(canonical: &SensorSelection, k: Option<usize>) -> SensorSelection {
    match k {
        Some(k) if canonical.len() != k && canonical.n() - canonical.len() == k => {
            canonical.complement()
        }
        _ => canonical.clone(),
    }
}

fn spin_label(spins: &[i8]) -> String {
    let parts: Vec<String> = spins.iter().map(|s| s.to_string()).collect();
    format!("[{}]", parts.join(","))
}

impl PlacementReport {
    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let k = self.select_k.map_or("none".to_string(), |k| k.to_string());
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "n = {}, k = {}, solver = {}, seed = {}",
            self.n, k, self.solver, seed
        );

        let header = ["partition", "spin patterns", "energy", "MI (nats)", "count"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                let spins: Vec<String> = r.spins.iter().map(|s| spin_label(s)).collect();
                let mut partition = r.partition.clone();
                if !r.consistent {
                    partition.push_str(" *");
                }
                [
                    partition,
                    spins.join(" "),
                    format!("{:.9}", r.energy),
                    format!("{:.6}", r.mutual_information),
                    r.count.to_string(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cols: [&str; 5]| {
            format!(
                "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
                cols[0],
                cols[1],
                cols[2],
                cols[3],
                cols[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4],
            )
            .trim_end()
            .to_string()
        };
        let _ = writeln!(out, "{}", line(header));
        for row in &cells {
            let _ = writeln!(
                out,
                "{}",
                line([&row[0], &row[1], &row[2], &row[3], &row[4]])
            );
        }
        if self.rows.iter().any(|r| !r.consistent) {
            let _ = writeln!(
                out,
                "* includes states with an auxiliary variable violating its definition"
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverChoice {
    Exhaustive,
    Annealing { params: AnnealParams, seed: u64 },
}

impl SolverChoice {
    pub fn solve(&self, q: &QuboModel) -> Result<SolveResult> {
        match *self {
            SolverChoice::Exhaustive => solve_exhaustive(q),
            SolverChoice::Annealing { params, seed } => solve_annealing(q, params, seed),
        }
    }
}

/// Best placement found for one sensor count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub k: usize,
    /// `None` when the solver returned no state with exactly `k` sensors.
    pub mutual_information: Option<f64>,
    pub selections: Vec<SensorSelection>,
}

impl FrontierPoint {
    pub fn labels(&self) -> Vec<String> {
        self.selections.iter().map(|s| s.to_string()).collect()
    }
}

/// Solves the `k`-constrained problem for every `k` in `0..=n`.
///
/// Among the lowest-energy states that select exactly `k` sensors, the one
/// with the largest mutual information is kept (all of them on ties).
pub fn sweep_cardinality(
    cov: &CovarianceMatrix,
    solver: SolverChoice,
) -> Result<Vec<FrontierPoint>> {
    let n = cov.n();
    let mut frontier = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let q = build_qubo(
            cov,
            QuboOptions {
                select_k: Some(k),
                penalty_weight: None,
            },
        )?;
        let result = solver.solve(&q)?;
        let mut feasible: Vec<(f64, SensorSelection)> = Vec::new();
        for entry in &result.entries {
            let p = project_solution(&entry.assignment, &q)?;
            if p.is_consistent() && p.selection.len() == k {
                feasible.push((entry.energy, p.selection));
            }
        }
        let best_energy = feasible.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * best_energy.abs().max(1.0);
        let mut candidates: Vec<(f64, SensorSelection)> = feasible
            .into_iter()
            .filter(|f| f.0 <= best_energy + tol)
            .map(|(_, sel)| (mutual_information(cov, &sel), sel))
            .collect();
        let best_mi = candidates
            .iter()
            .map(|c| c.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let mi_tol = 1e-12 * best_mi.abs().max(1.0);
        candidates.retain(|c| c.0 >= best_mi - mi_tol);
        let mut selections: Vec<SensorSelection> = candidates.into_iter().map(|c| c.1).collect();
        selections.sort_by_key(|s| s.selected());
        selections.dedup();
        frontier.push(FrontierPoint {
            k,
            mutual_information: best_mi.is_finite().then_some(best_mi),
            selections,
        });
    }
    Ok(frontier)
}

pub fn frontier_to_text(frontier: &[FrontierPoint]) -> String {
    let mut out = String::from("k  MI (nats)  selections\n");
    for p in frontier {
        let mi = p
            .mutual_information
            .map_or("-".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(out, "{:<2} {:>10}  {}", p.k, mi, p.labels().join(" "));
    }
    out
}
