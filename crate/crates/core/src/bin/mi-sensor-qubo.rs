use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mi_sensor_qubo::io::{
    covariance_to_json, estimate_covariance, import_qubo, load_covariance, load_samples,
    qubo_to_json, CovarianceFormat,
};
use mi_sensor_qubo::report::frontier_to_text;
use mi_sensor_qubo::{
    brute_force_optimum, build_qubo, expand_objective, mutual_information, report,
    sweep_cardinality, AnnealParams, CovarianceMatrix, Error, QuboOptions, SensorSelection,
    SolveResult, SolverChoice,
};

#[derive(Parser)]
#[command(
    name = "mi-sensor-qubo",
    version,
    about = "Mutual-information sensor placement via spin-polynomial/QUBO compilation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Method {
    Exhaustive,
    Anneal,
}

#[derive(Args)]
struct CovArgs {
    /// Covariance file (CSV grid or {"n", "sigma"} JSON)
    cov: PathBuf,
    /// Input format; guessed from the extension when omitted
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl CovArgs {
    fn load(&self) -> Result<CovarianceMatrix, Error> {
        let format = match self.format {
            Some(Format::Csv) => CovarianceFormat::Csv,
            Some(Format::Json) => CovarianceFormat::Json,
            None => CovarianceFormat::from_path(&self.cov),
        };
        load_covariance(&self.cov, format)
    }
}

#[derive(Args)]
struct ConstraintArgs {
    /// Require exactly K selected sensors
    #[arg(long = "select-k", value_name = "K")]
    select_k: Option<usize>,
    /// Cardinality penalty weight (default: twice the objective's coefficient mass)
    #[arg(long = "penalty-weight", value_name = "LAMBDA", requires = "select_k")]
    penalty_weight: Option<f64>,
}

impl ConstraintArgs {
    fn options(&self) -> QuboOptions {
        QuboOptions {
            select_k: self.select_k,
            penalty_weight: self.penalty_weight,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "exhaustive")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
}

impl SolverArgs {
    fn choice(&self) -> SolverChoice {
        match self.method {
            Method::Exhaustive => SolverChoice::Exhaustive,
            Method::Anneal => SolverChoice::Annealing {
                params: AnnealParams {
                    sweeps: self.sweeps,
                    restarts: self.restarts,
                    ..AnnealParams::default()
                },
                seed: self.seed,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a covariance matrix
    Validate(CovArgs),
    /// Estimate a covariance matrix from observations (CSV, optional header)
    Estimate {
        samples: PathBuf,
        /// Emit {"n", "sigma"} JSON instead of a CSV grid
        #[arg(long)]
        json: bool,
    },
    /// Print the expanded spin polynomial det(Σ_SS)·det(Σ_TT)
    Expand {
        #[command(flatten)]
        cov: CovArgs,
        #[arg(long)]
        json: bool,
    },
    /// Build the QUBO and write it as JSON
    Qubo {
        #[command(flatten)]
        cov: CovArgs,
        #[command(flatten)]
        constraint: ConstraintArgs,
        /// Output path (stdout when omitted)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build and solve the QUBO, then print a placement report
    Solve {
        #[command(flatten)]
        cov: CovArgs,
        #[command(flatten)]
        constraint: ConstraintArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        json: bool,
        /// Also write the raw solver result as JSON
        #[arg(long, value_name = "PATH")]
        save_result: Option<PathBuf>,
    },
    /// Mutual information of a subset, e.g. --subset 1,2
    Mi {
        #[command(flatten)]
        cov: CovArgs,
        /// Comma-separated 1-based sensor numbers (may be empty)
        #[arg(long, value_delimiter = ',', num_args = 0..=1)]
        subset: Vec<usize>,
    },
    /// Brute-force optimum over all subsets
    Oracle {
        #[command(flatten)]
        cov: CovArgs,
        #[arg(long = "select-k", value_name = "K")]
        select_k: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Best mutual information for every sensor count
    Sweep {
        #[command(flatten)]
        cov: CovArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        json: bool,
    },
    /// Render a saved solver result against its QUBO and covariance
    Report {
        #[command(flatten)]
        cov: CovArgs,
        #[arg(long)]
        qubo: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ProblemTooLarge { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Validate(args) => {
            let cov = args.load()?;
            println!(
                "ok: {n}x{n} covariance, det = {:.9e}",
                cov.determinant(),
                n = cov.n()
            );
        }
        Command::Estimate { samples, json } => {
            let cov = estimate_covariance(&load_samples(&samples)?)?;
            if json {
                println!("{}", covariance_to_json(&cov));
            } else {
                for row in cov.rows() {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    println!("{}", cells.join(","));
                }
            }
        }
        Command::Expand { cov, json } => {
            let poly = expand_objective(&cov.load()?)?;
            if json {
                let terms: Vec<_> = poly
                    .terms()
                    .iter()
                    .map(|(m, c)| {
                        let vars: Vec<usize> = m.indices().iter().map(|i| i + 1).collect();
                        json!({ "monomial": vars, "coefficient": c })
                    })
                    .collect();
                println!("{}", json!({ "n": poly.n(), "terms": terms }));
            } else {
                for (m, c) in poly.terms() {
                    println!("{:<16} {c:.17e}", m.to_string());
                }
            }
        }
        Command::Qubo {
            cov,
            constraint,
            output,
        } => {
            let q = build_qubo(&cov.load()?, constraint.options())?;
            write_output(output.as_deref(), &qubo_to_json(&q))?;
        }
        Command::Solve {
            cov,
            constraint,
            solver,
            json,
            save_result,
        } => {
            let cov = cov.load()?;
            let q = build_qubo(&cov, constraint.options())?;
            let result = solver.choice().solve(&q)?;
            if let Some(path) = save_result {
                let text =
                    serde_json::to_string_pretty(&result).map_err(|e| Error::Io(e.to_string()))?;
                fs::write(path, text + "\n")?;
            }
            let placement = report(&result, &cov, &q)?;
            print!(
                "{}",
                if json {
                    placement.to_json()
                } else {
                    placement.to_text()
                }
            );
        }
        Command::Mi { cov, subset } => {
            let cov = cov.load()?;
            let mut indices = Vec::with_capacity(subset.len());
            for s in subset {
                if s == 0 || s > cov.n() {
                    return Err(Error::IndexOutOfRange {
                        index: s,
                        n: cov.n(),
                    });
                }
                indices.push(s - 1);
            }
            let sel = SensorSelection::from_indices(cov.n(), &indices)?;
            println!(
                "{} MI = {:.9} nats",
                sel.partition_label(),
                mutual_information(&cov, &sel)
            );
        }
        Command::Oracle {
            cov,
            select_k,
            json,
        } => {
            let cov = cov.load()?;
            let opt = brute_force_optimum(&cov, select_k)?;
            if json {
                let rows: Vec<_> = opt
                    .maximizers
                    .iter()
                    .map(|s| {
                        let sel: Vec<usize> = s.selected().iter().map(|i| i + 1).collect();
                        json!({ "selected": sel, "mutual_information": mutual_information(&cov, s) })
                    })
                    .collect();
                println!("{}", json!({ "value": opt.value, "maximizers": rows }));
            } else {
                println!("max det(Σ_SS)·det(Σ_TT) = {:.9}", opt.value);
                for s in &opt.maximizers {
                    println!(
                        "{}  MI = {:.6}",
                        if select_k.is_some() {
                            s.to_string()
                        } else {
                            s.partition_label()
                        },
                        mutual_information(&cov, s)
                    );
                }
            }
        }
        Command::Sweep { cov, solver, json } => {
            let frontier = sweep_cardinality(&cov.load()?, solver.choice())?;
            if json {
                let rows: Vec<_> = frontier
                    .iter()
                    .map(|p| {
                        let sels: Vec<Vec<usize>> = p
                            .selections
                            .iter()
                            .map(|s| s.selected().iter().map(|i| i + 1).collect())
                            .collect();
                        json!({ "k": p.k, "mutual_information": p.mutual_information, "selections": sels })
                    })
                    .collect();
                println!("{}", serde_json::Value::Array(rows));
            } else {
                print!("{}", frontier_to_text(&frontier));
            }
        }
        Command::Report {
            cov,
            qubo,
            result,
            json,
        } => {
            let cov = cov.load()?;
            let q = import_qubo(&qubo)?;
            if q.num_original() != cov.n() {
                return Err(Error::DimensionMismatch {
                    expected: cov.n(),
                    found: q.num_original(),
                });
            }
            let result: SolveResult = serde_json::from_str(&fs::read_to_string(&result)?)
                .map_err(|e| Error::Parse(e.to_string()))?;
            if let Some(bad) = result
                .entries
                .iter()
                .find(|e| e.assignment.len() != q.num_variables())
            {
                return Err(Error::DimensionMismatch {
                    expected: q.num_variables(),
                    found: bad.assignment.len(),
                });
            }
            let placement = report(&result, &cov, &q)?;
            print!(
                "{}",
                if json {
                    placement.to_json()
                } else {
                    placement.to_text()
                }
            );
        }
    }
    Ok(())
}
