//! `polyvi`: solve and analyze polynomial variational inequalities from JSON
//! problem files.
//!
//! Exit codes: 0 on a definite result, 1 on input errors, 2 when the result
//! is inconclusive.

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use polyvi::analysis::{self, Conclusion, CopositivityBudget, CopositivityStatus, R0Status};
use polyvi::fixtures;
use polyvi::stability::{self, GenericityMode};
use polyvi::{PolyhedralSet, ProblemFile, SolveConfig, SolveStatus};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "polyvi", version, about = "Polynomial variational inequalities over polyhedra")]
struct Cli {
    /// Seed for every random choice; overrides `config.seed` of the problem file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for face and grid parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Verification tolerance; overrides `config.verify_tol`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solution set of VI(K, P + p).
    Solve {
        /// Problem file, or `-` for stdin.
        problem: String,
    },
    /// Is (K, P) an R0 pair?
    R0 { problem: String },
    /// Numerical copositivity of P on K.
    Copositive {
        problem: String,
        #[arg(long, default_value_t = 16)]
        starts: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
    },
    /// Certificate that the solution set is nonempty and bounded.
    Certify {
        problem: String,
        #[arg(long, default_value_t = 16)]
        starts: usize,
    },
    /// Solution map over a grid of perturbations p.
    Sweep {
        problem: String,
        /// Comma-separated values used on every axis, or one list per axis
        /// separated by `;`, e.g. `-1,0,1` or `-1,1;0,2`.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Log-log fit of the upper Hoelder exponent at an anchor p.
    Hoelder {
        problem: String,
        /// Anchor perturbation (default: `p` of the problem file).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchor: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        samples: usize,
    },
    /// Monte Carlo count of random maps with a generic property.
    Generic {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// `orthant`, `box`, or a JSON file with `{"C", "b", "E", "d"}`.
        #[arg(long = "K", default_value = "orthant")]
        k: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Mode::FiniteValued)]
        mode: Mode,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    FiniteValued,
    R0,
}

/// Every JSON output: the resolved run parameters and the result.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a SolveConfig,
    params: &'a serde_json::Value,
    result: T,
}

struct Run {
    command: &'static str,
    config: SolveConfig,
    params: serde_json::Value,
}

impl Run {
    fn new(command: &'static str, config: SolveConfig, params: serde_json::Value) -> Self {
        Self { command, config, params }
    }

    fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "params": self.params,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    fn json<T: Serialize>(&self, result: T) -> Result<String> {
        let env = Envelope {
            command: self.command,
            seed: self.config.seed,
            config_hash: self.hash(),
            config: &self.config,
            params: &self.params,
            result,
        };
        Ok(serde_json::to_string_pretty(&env)? + "\n")
    }
}

struct Output {
    text: String,
    inconclusive: bool,
}

fn read_problem(path: &str) -> Result<ProblemFile> {
    let text = if path == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        s
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {path}"))?
    };
    ProblemFile::from_json_str(&text).with_context(|| format!("parsing {path}"))
}

fn resolve(cli: &Cli, mut cfg: SolveConfig) -> Result<SolveConfig> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.verify_tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_grid(spec: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    let axes: Vec<Vec<f64>> = spec
        .split(';')
        .map(|axis| {
            axis.split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value {v:?}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    let axes = match axes.len() {
        1 => vec![axes[0].clone(); n],
        m if m == n => axes,
        m => bail!("grid has {m} axes, problem has dimension {n}"),
    };
    if axes.iter().any(|a| a.is_empty()) {
        bail!("empty grid axis");
    }
    // Cartesian product, first axis slowest.
    let mut grid = vec![Vec::with_capacity(n)];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut q = prefix.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(grid)
}

fn named_set(spec: &str, n: usize) -> Result<PolyhedralSet> {
    Ok(match spec {
        "orthant" => fixtures::nonnegative_orthant(n),
        "box" => fixtures::unit_box(n),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            PolyhedralSet::from_json_value(serde_json::from_str(&text)?, n)?
        }
    })
}

fn sweep_csv(run: &Run, res: &stability::SweepResult, n: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
    header.extend(
        ["cardinality", "nonisolated", "bounded", "status", "label", "max_norm", "error", "seed", "config_hash"]
            .map(String::from),
    );
    w.write_record(&header)?;
    let hash = run.hash();
    for c in &res.cells {
        let mut row: Vec<String> = c.p.iter().map(|v| v.to_string()).collect();
        let max_norm = c
            .points
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        row.push(c.cardinality.to_string());
        row.push(c.nonisolated.to_string());
        row.push(c.bounded.map(|b| b.to_string()).unwrap_or_default());
        row.push(c.status.map(status_label).unwrap_or_default().to_string());
        row.push(c.label.clone());
        row.push(max_norm.map(|v| v.to_string()).unwrap_or_default());
        row.push(c.error.clone().unwrap_or_default());
        row.push(res.seed.to_string());
        row.push(hash.clone());
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Complete => "complete",
        SolveStatus::Capped => "capped",
        SolveStatus::Inconclusive => "inconclusive",
    }
}

fn execute(cli: &Cli) -> Result<Output> {
    use serde_json::json;
    match &cli.command {
        Command::Solve { problem } => {
            let pf = read_problem(problem)?;
            let cfg = resolve(cli, pf.config.clone())?;
            let run = Run::new("solve", cfg, json!({ "problem": pf }));
            let sol = polyvi::solve(&pf.to_problem()?, &run.config)?;
            Ok(Output {
                inconclusive: sol.status == SolveStatus::Inconclusive,
                text: run.json(&sol)?,
            })
        }
        Command::R0 { problem } => {
            let pf = read_problem(problem)?;
            let cfg = resolve(cli, pf.config.clone())?;
            let run = Run::new("r0", cfg, json!({ "P": pf.map, "K": pf.k }));
            let v = analysis::is_r0_pair(&pf.k, &pf.map, &run.config)?;
            let result = json!({ "verdict": v.status.label(), "detail": v });
            Ok(Output {
                inconclusive: v.status == R0Status::Inconclusive,
                text: run.json(result)?,
            })
        }
        Command::Copositive { problem, starts, iters } => {
            let pf = read_problem(problem)?;
            let cfg = resolve(cli, pf.config.clone())?;
            let budget = CopositivityBudget {
                starts_per_face: *starts,
                iters: *iters,
                seed: cfg.seed,
            };
            let run = Run::new("copositive", cfg, json!({ "P": pf.map, "K": pf.k, "budget": budget }));
            let v = analysis::copositivity_check(&pf.map, &pf.k, &budget)?;
            let result = json!({ "verdict": v.status.label(), "detail": v });
            Ok(Output {
                inconclusive: v.status == CopositivityStatus::Inconclusive,
                text: run.json(result)?,
            })
        }
        Command::Certify { problem, starts } => {
            let pf = read_problem(problem)?;
            let cfg = resolve(cli, pf.config.clone())?;
            let budget = CopositivityBudget {
                starts_per_face: *starts,
                seed: cfg.seed,
                ..CopositivityBudget::default()
            };
            let run = Run::new("certify", cfg, json!({ "problem": pf, "budget": budget }));
            let cert = analysis::existence_certificate(&pf.to_problem()?, &run.config, &budget)?;
            let undecided = cert.conclusion == Conclusion::NoCertificate
                && (cert.p_in_int_sc_dual.is_none()
                    || cert.copositivity.status == CopositivityStatus::Inconclusive);
            Ok(Output {
                inconclusive: undecided,
                text: run.json(&cert)?,
            })
        }
        Command::Sweep { problem, grid, format } => {
            let pf = read_problem(problem)?;
            let cfg = resolve(cli, pf.config.clone())?;
            let points = parse_grid(grid, pf.map.n())?;
            let run = Run::new("sweep", cfg, json!({ "P": pf.map, "K": pf.k, "grid": points }));
            let res = stability::solution_map_sweep(&pf.k, &pf.map, &points, &run.config);
            let inconclusive = res
                .cells
                .iter()
                .any(|c| c.error.is_some() || c.status == Some(SolveStatus::Inconclusive));
            let text = match format {
                Format::Csv => sweep_csv(&run, &res, pf.map.n())?,
                Format::Json => run.json(&res)?,
            };
            Ok(Output { text, inconclusive })
        }
        Command::Hoelder { problem, anchor, radii, samples } => {
            let mut pf = read_problem(problem)?;
            if let Some(a) = anchor {
                pf.p = a.clone();
            }
            let cfg = resolve(cli, pf.config.clone())?;
            let run = Run::new(
                "hoelder",
                cfg,
                json!({ "problem": pf, "radii": radii, "samples_per_radius": samples }),
            );
            let fit = stability::hoelder_fit(&pf.to_problem()?, radii, *samples, &run.config)?;
            Ok(Output {
                inconclusive: fit.c.is_none() && fit.skipped_incomplete > 0,
                text: run.json(&fit)?,
            })
        }
        Command::Generic { n, d, k, trials, mode } => {
            let set = named_set(k, *n)?;
            let cfg = resolve(cli, SolveConfig::default())?;
            let run = Run::new(
                "generic",
                cfg,
                json!({ "n": n, "d": d, "K": set, "trials": trials, "mode": mode }),
            );
            let gm = match mode {
                Mode::FiniteValued => GenericityMode::FiniteValued,
                Mode::R0 => GenericityMode::R0,
            };
            let stats = stability::genericity_experiment(*n, *d, &set, *trials, run.config.seed, gm, &run.config)?;
            let inconclusive = stats.exceptional.iter().any(|t| t.outcome == "inconclusive");
            Ok(Output {
                inconclusive,
                text: run.json(&stats)?,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let out = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, &out.text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(out.text.as_bytes()).map_err(Into::into),
    };
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if out.inconclusive {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shared_and_per_axis() {
        let g = parse_grid("-1,1", 2).unwrap();
        assert_eq!(g, vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]);
        let g = parse_grid("0;2,3", 2).unwrap();
        assert_eq!(g, vec![vec![0.0, 2.0], vec![0.0, 3.0]]);
        assert!(parse_grid("1;2;3", 2).is_err());
        assert!(parse_grid("1,,2", 1).is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = Run::new("solve", SolveConfig::default(), serde_json::json!({}));
        let b = Run::new("solve", SolveConfig { seed: 1, ..SolveConfig::default() }, serde_json::json!({}));
        assert_eq!(a.hash(), Run::new("solve", SolveConfig::default(), serde_json::json!({})).hash());
        assert_ne!(a.hash(), b.hash());
    }
}
