//! Covariance and sample ingestion, covariance estimation, and the QUBO JSON
//! exchange format.
//!
//! QUBO files are a single JSON object with sorted keys. Variable ids and
//! sensor numbers in the file are 1-based; for an original variable the id
//! equals its sensor number.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{validate_covariance, CardinalityPenalty, CovarianceMatrix, VariableKind};
use crate::quadratize::{Penalties, QuboModel, Substitution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceFormat {
    Csv,
    Json,
}

impl CovarianceFormat {
    /// Guesses from the file extension; anything other than `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => CovarianceFormat::Json,
            _ => CovarianceFormat::Csv,
        }
    }
}

pub fn load_covariance(path: &Path, format: CovarianceFormat) -> Result<CovarianceMatrix> {
    let text = fs::read_to_string(path)?;
    match format {
        CovarianceFormat::Csv => parse_covariance_csv(&text),
        CovarianceFormat::Json => parse_covariance_json(&text),
    }
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: invalid number {:?}", field.trim())))
}

fn read_grid(text: &str, has_headers: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| parse_number(f, line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Plain `n × n` numeric grid, no header.
pub fn parse_covariance_csv(text: &str) -> Result<CovarianceMatrix> {
    let rows = read_grid(text, false)?;
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Parse(format!(
            "row {} has {} values, expected {n}",
            i + 1,
            r.len()
        )));
    }
    validate_covariance(&rows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CovarianceJson {
    n: usize,
    sigma: Vec<Vec<f64>>,
}

/// `{"n": <int>, "sigma": [[...], ...]}`.
pub fn parse_covariance_json(text: &str) -> Result<CovarianceMatrix> {
    let doc: CovarianceJson =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.sigma.len() != doc.n || doc.sigma.iter().any(|r| r.len() != doc.n) {
        return Err(Error::Parse(format!(
            "sigma is not {0}x{0} as declared by n",
            doc.n
        )));
    }
    validate_covariance(&doc.sigma)
}

pub fn covariance_to_json(cov: &CovarianceMatrix) -> String {
    json!({ "n": cov.n(), "sigma": cov.rows() }).to_string()
}

/// Observation table: optional header line, one row per observation.
pub fn parse_samples_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let header = first.split(',').any(|f| f.trim().parse::<f64>().is_err());
    let rows = read_grid(text, header)?;
    if let Some(width) = rows.first().map(Vec::len) {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Parse(format!(
                "observation {} has {} values, expected {width}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(rows)
}

pub fn load_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_samples_csv(&fs::read_to_string(path)?)
}

/// Unbiased sample covariance (`1/(N−1)`) about the sample mean.
#[allow(clippy::needless_range_loop)]
pub fn estimate_covariance(samples: &[Vec<f64>]) -> Result<CovarianceMatrix> {
    let count = samples.len();
    if count < 2 {
        return Err(Error::InsufficientSamples(count));
    }
    let n = samples[0].len();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if let Some(r) = samples.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: r.len(),
        });
    }
    let mut mean = vec![0.0; n];
    for row in samples {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut cov = vec![vec![0.0; n]; n];
    for row in samples {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (count - 1) as f64;
    for i in 0..n {
        for j in i..n {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    validate_covariance(&cov)
}

/// Serializes a model as a single JSON object with sorted keys.
pub fn qubo_to_json(q: &QuboModel) -> String {
    let variables: Vec<Value> = q
        .variables
        .iter()
        .enumerate()
        .map(|(id, kind)| match *kind {
            VariableKind::Original { sensor } => json!({
                "id": id + 1,
                "kind": "original",
                "sensor": sensor + 1,
                "pair": Value::Null,
            }),
            VariableKind::Auxiliary { pair: (a, b) } => json!({
                "id": id + 1,
                "kind": "auxiliary",
                "sensor": Value::Null,
                "pair": [a + 1, b + 1],
            }),
        })
        .collect();
    let linear: Map<String, Value> = q
        .linear
        .iter()
        .map(|(&i, &c)| ((i + 1).to_string(), json!(c)))
        .collect();
    let quadratic: Map<String, Value> = q
        .quadratic
        .iter()
        .map(|(&(i, j), &c)| (format!("{},{}", i + 1, j + 1), json!(c)))
        .collect();
    let substitutions: Vec<Value> = q
        .penalties
        .substitutions
        .iter()
        .map(|s| json!({ "aux": s.aux + 1, "weight": s.weight }))
        .collect();
    let cardinality = match q.penalties.cardinality {
        Some(c) => json!({ "k": c.k, "lambda": c.lambda }),
        None => Value::Null,
    };
    let doc = json!({
        "num_variables": q.num_variables(),
        "variables": variables,
        "linear": linear,
        "quadratic": quadratic,
        "offset": q.offset,
        "penalties": {
            "substitutions": substitutions,
            "cardinality": cardinality,
        },
    });
    let mut out = doc.to_string();
    out.push('\n');
    out
}

pub fn export_qubo(q: &QuboModel, path: &Path) -> Result<()> {
    fs::write(path, qubo_to_json(q))?;
    Ok(())
}

#[derive(Deserialize)]
struct VariableJson {
    id: usize,
    kind: String,
    sensor: Option<usize>,
    pair: Option<(usize, usize)>,
}

#[derive(Deserialize)]
struct SubstitutionJson {
    aux: usize,
    weight: f64,
}

#[derive(Deserialize)]
struct PenaltiesJson {
    substitutions: Vec<SubstitutionJson>,
    cardinality: Option<CardinalityPenalty>,
}

#[derive(Deserialize)]
struct QuboJson {
    num_variables: usize,
    variables: Vec<VariableJson>,
    linear: BTreeMap<String, f64>,
    quadratic: BTreeMap<String, f64>,
    offset: f64,
    penalties: PenaltiesJson,
}

fn parse_id(s: &str, n: usize) -> Result<usize> {
    let id: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid variable id {s:?}")))?;
    if id == 0 || id > n {
        return Err(Error::Parse(format!(
            "variable id {id} out of range 1..={n}"
        )));
    }
    Ok(id - 1)
}

/// Parses the QUBO JSON format and checks the model invariants.
pub fn parse_qubo_json(text: &str) -> Result<QuboModel> {
    let doc: QuboJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = doc.num_variables;
    if doc.variables.len() != n {
        return Err(Error::Parse(format!(
            "num_variables is {n} but {} variables are listed",
            doc.variables.len()
        )));
    }
    let mut variables = Vec::with_capacity(n);
    for (pos, v) in doc.variables.iter().enumerate() {
        if v.id != pos + 1 {
            return Err(Error::Parse(format!(
                "variable ids must be 1..={n} in order"
            )));
        }
        let kind = match (v.kind.as_str(), v.sensor, v.pair) {
            ("original", Some(sensor), None) if sensor >= 1 => {
                VariableKind::Original { sensor: sensor - 1 }
            }
            ("auxiliary", None, Some((a, b))) if a >= 1 && b >= 1 => VariableKind::Auxiliary {
                pair: (a - 1, b - 1),
            },
            _ => return Err(Error::Parse(format!("malformed variable entry {}", v.id))),
        };
        variables.push(kind);
    }
    let mut linear = BTreeMap::new();
    for (k, &c) in &doc.linear {
        linear.insert(parse_id(k, n)?, c);
    }
    let mut quadratic = BTreeMap::new();
    for (k, &c) in &doc.quadratic {
        let (a, b) = k
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("invalid quadratic key {k:?}")))?;
        quadratic.insert((parse_id(a, n)?, parse_id(b, n)?), c);
    }
    let substitutions = doc
        .penalties
        .substitutions
        .iter()
        .map(|s| {
            Ok(Substitution {
                aux: parse_id(&s.aux.to_string(), n)?,
                weight: s.weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = QuboModel {
        variables,
        linear,
        quadratic,
        offset: doc.offset,
        penalties: Penalties {
            substitutions,
            cardinality: doc.penalties.cardinality,
        },
    };
    model
        .validate()
        .map_err(|e| Error::Parse(format!("invalid model: {e}")))?;
    Ok(model)
}

pub fn import_qubo(path: &Path) -> Result<QuboModel> {
    parse_qubo_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratize::{build_qubo, QuboOptions};

    const TOY_A_CSV: &str = "2,0.1,1\n0.1,2,0.1\n1,0.1,2";

    #[test]
    fn csv_toy_model() {
        let cov = parse_covariance_csv(TOY_A_CSV).unwrap();
        assert_eq!(
            cov.rows(),
            vec![
                vec![2.0, 0.1, 1.0],
                vec![0.1, 2.0, 0.1],
                vec![1.0, 0.1, 2.0]
            ]
        );
    }

    #[test]
    fn csv_ragged_rows() {
        assert!(matches!(
            parse_covariance_csv("2,0.1\n0.1"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_covariance_csv("2,0.1,1\n0.1,2,0.1"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_covariance_csv("2,x\n0,2"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn json_dimension_mismatch() {
        let ok = parse_covariance_json(r#"{"n": 2, "sigma": [[2, 0.5], [0.5, 2]]}"#).unwrap();
        assert_eq!(ok.n(), 2);
        assert!(matches!(
            parse_covariance_json(r#"{"n": 3, "sigma": [[2, 0.5], [0.5, 2]]}"#),
            Err(Error::Parse(_))
        ));
        let back = parse_covariance_json(&covariance_to_json(&ok)).unwrap();
        assert_eq!(back, ok);
    }

    #[test]
    fn csv_validation_errors_propagate() {
        assert!(matches!(
            parse_covariance_csv("1,2\n2,1"),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn estimate_degenerate_and_short() {
        assert!(matches!(
            estimate_covariance(&[vec![0.0, 0.0], vec![2.0, 2.0]]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert_eq!(
            estimate_covariance(&[vec![1.0, 2.0]]).unwrap_err(),
            Error::InsufficientSamples(1)
        );
    }

    #[test]
    fn estimate_small_exact() {
        let cov = estimate_covariance(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        // means (0, 1); deviations (1,-1), (-1,-1), (0,2)
        assert!((cov.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((cov.get(1, 1) - 3.0).abs() < 1e-15);
        assert!(cov.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn samples_header_detection() {
        let rows = parse_samples_csv("a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let rows = parse_samples_csv("1,2\n3,4\n").unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn empty_model_export() {
        let text = qubo_to_json(&QuboModel::default());
        assert_eq!(
            text,
            "{\"linear\":{},\"num_variables\":0,\"offset\":0.0,\"penalties\":{\"cardinality\":null,\"substitutions\":[]},\"quadratic\":{},\"variables\":[]}\n"
        );
        assert_eq!(parse_qubo_json(&text).unwrap(), QuboModel::default());
    }

    #[test]
    fn toy_model_round_trip() {
        let cov = parse_covariance_csv(TOY_A_CSV).unwrap();
        let q = build_qubo(
            &cov,
            QuboOptions {
                select_k: Some(2),
                penalty_weight: None,
            },
        )
        .unwrap();
        let text = qubo_to_json(&q);
        let back = parse_qubo_json(&text).unwrap();
        assert_eq!(back, q);
        assert_eq!(qubo_to_json(&back), text);
    }

    #[test]
    fn auxiliary_registry_entry() {
        let q = QuboModel {
            variables: vec![
                VariableKind::Original { sensor: 0 },
                VariableKind::Original { sensor: 1 },
                VariableKind::Auxiliary { pair: (0, 1) },
            ],
            penalties: Penalties {
                substitutions: vec![Substitution {
                    aux: 2,
                    weight: 3.0,
                }],
                cardinality: None,
            },
            ..QuboModel::default()
        };
        let v: Value = serde_json::from_str(&qubo_to_json(&q)).unwrap();
        assert_eq!(
            v["variables"][2],
            json!({"id": 3, "kind": "auxiliary", "sensor": null, "pair": [1, 2]})
        );
        assert_eq!(
            v["penalties"]["substitutions"][0],
            json!({"aux": 3, "weight": 3.0})
        );
        assert_eq!(parse_qubo_json(&qubo_to_json(&q)).unwrap(), q);
    }

    #[test]
    fn rejects_malformed_qubo() {
        let bad = r#"{"num_variables":1,"variables":[],"linear":{},"quadratic":{},"offset":0.0,"penalties":{"substitutions":[],"cardinality":null}}"#;
        assert!(parse_qubo_json(bad).is_err());
        let bad = r#"{"num_variables":2,"variables":[{"id":1,"kind":"original","sensor":1,"pair":null},{"id":2,"kind":"original","sensor":2,"pair":null}],"linear":{},"quadratic":{"2,1":1.0},"offset":0.0,"penalties":{"substitutions":[],"cardinality":null}}"#;
        assert!(parse_qubo_json(bad).is_err());
    }
}
