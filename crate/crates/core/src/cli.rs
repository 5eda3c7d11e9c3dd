//! The `wickgraph` command line.
//!
//! Every subcommand prints one JSON document (or writes it to `--out`).
//! Exit status is 0 on success, 2 for invalid input and 3 when a cost guard
//! or budget stops the run.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{self, EvalOptions, SymbolicTerm, DEFAULT_TERM_BUDGET};
use crate::error::{Error, Result};
use crate::factor::{c_general, c_graph, double_factorial_odd};
use crate::graph::Multigraph;
use crate::kernel::{CovarianceKernel, KernelSpec};
use crate::mc::{self, McConfig};
use crate::oracle::pairing_total;
use crate::poly::Polynomial;
use crate::quad::{QuadratureRule, RuleKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "wickgraph", version, about = "Time-ordered Gaussian moment integrals via labeled multigraphs")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Polynomial as inline JSON: {"m":1,"terms":[{"alpha":[2],"q":1.0}]}.
    #[arg(long, global = true, conflicts_with = "poly_file")]
    pub poly: Option<String>,
    /// Polynomial JSON file.
    #[arg(long, global = true)]
    pub poly_file: Option<PathBuf>,
    /// Order n (truncation order N for `fk`).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Kernel preset: brownian_motion, brownian_bridge, product, constant,
    /// exponential[:scale].
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Tabulated kernel on a uniform grid (square CSV).
    #[arg(long, global = true, conflicts_with = "kernel")]
    pub grid_file: Option<PathBuf>,
    /// Quadrature points per axis.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Quadrature panels per axis (smooth kernels).
    #[arg(long, global = true)]
    pub panels: Option<usize>,
    /// gauss_legendre or trapezoid.
    #[arg(long, global = true)]
    pub quad_kind: Option<String>,
    /// Largest component dimension that will be integrated.
    #[arg(long, global = true)]
    pub dim_cap: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jitter: Option<f64>,
    #[arg(long, global = true, env = "WICKGRAPH_THREADS")]
    pub threads: Option<usize>,
    /// Cap on α-tuples and terms.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    /// Human-readable table instead of JSON on stdout.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate Iₙ by the graph expansion.
    Evaluate {
        /// Leave the per-term list out of the output.
        #[arg(long)]
        no_terms: bool,
    },
    /// Exact symbolic expansion; with a kernel also its value.
    Expand {
        /// Re-evaluate a saved expansion instead of expanding a polynomial.
        #[arg(long)]
        expansion: Option<PathBuf>,
    },
    /// Compare the engine against the brute-force pairing sum.
    Oracle,
    /// Monte Carlo estimate next to the engine value.
    Mc,
    /// List labeled multigraphs with the given degrees and their C(Γ).
    Graphs {
        vertices: usize,
        /// Comma-separated degrees, e.g. 2,2,2.
        degrees: String,
    },
    /// Symmetry factor of a multigraph, or C(M, A) when --a is given.
    Factor {
        /// Upper-triangular adjacency rows as JSON, e.g. [[0,1],[0,0]].
        #[arg(long)]
        matrix: String,
        /// n×l constraint matrix as JSON.
        #[arg(long)]
        a: Option<String>,
    },
    /// Partial sums of the formal series Σ (−1)ⁿ Iₙ up to order --n.
    Fk,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    poly: Option<Value>,
    poly_file: Option<PathBuf>,
    n: Option<usize>,
    kernel: Option<KernelField>,
    quadrature: Option<QuadratureRule>,
    samples: Option<u64>,
    seed: Option<u64>,
    jitter: Option<f64>,
    threads: Option<usize>,
    budget: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum KernelField {
    Name(String),
    Spec(KernelSpec),
}

/// Inputs after merging the config file with command-line flags.
#[derive(Debug)]
pub struct RunConfig {
    pub poly: Option<Polynomial>,
    pub n: Option<usize>,
    pub kernel: Option<CovarianceKernel>,
    pub rule: QuadratureRule,
    pub mc: McConfig,
    pub threads: Option<usize>,
    pub budget: u64,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let (file, base) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let cfg: FileConfig = serde_json::from_str(&text)?;
                (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };

        let poly = if let Some(inline) = &args.poly {
            Some(Polynomial::from_json_str(inline)?)
        } else if let Some(path) = &args.poly_file {
            Some(Polynomial::from_json_str(&std::fs::read_to_string(path)?)?)
        } else if let Some(v) = file.poly {
            Some(Polynomial::from_json_value(v)?)
        } else if let Some(path) = &file.poly_file {
            Some(Polynomial::from_json_str(&std::fs::read_to_string(base.join(path))?)?)
        } else {
            None
        };

        let kernel = if let Some(name) = &args.kernel {
            Some(CovarianceKernel::preset(name)?)
        } else if let Some(path) = &args.grid_file {
            Some(KernelSpec::GridFile { grid_file: path.to_string_lossy().into_owned() }.build()?)
        } else {
            match file.kernel {
                Some(KernelField::Name(name)) => Some(CovarianceKernel::preset(&name)?),
                Some(KernelField::Spec(KernelSpec::GridFile { grid_file })) => Some(
                    KernelSpec::GridFile { grid_file: base.join(grid_file).to_string_lossy().into_owned() }.build()?,
                ),
                Some(KernelField::Spec(spec)) => Some(spec.build()?),
                None => None,
            }
        };

        let mut rule = file.quadrature.unwrap_or_default();
        if let Some(order) = args.order {
            rule.order = order;
        }
        if let Some(panels) = args.panels {
            rule.panels = panels;
        }
        if let Some(cap) = args.dim_cap {
            rule.dim_cap = cap;
        }
        if let Some(kind) = &args.quad_kind {
            rule.kind = match kind.as_str() {
                "gauss_legendre" => RuleKind::GaussLegendre,
                "trapezoid" => RuleKind::Trapezoid,
                other => return Err(Error::InvalidRule(format!("unknown rule kind '{other}'"))),
            };
        }
        rule.validate()?;

        let defaults = McConfig::default();
        let mc = McConfig {
            samples: args.samples.or(file.samples).unwrap_or(defaults.samples),
            seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
            jitter: args.jitter.or(file.jitter).unwrap_or(defaults.jitter),
        };
        let threads = args.threads.or(file.threads);
        if threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be positive".into()));
        }
        Ok(RunConfig {
            poly,
            n: args.n.or(file.n),
            kernel,
            rule,
            mc,
            threads,
            budget: args.budget.or(file.budget).unwrap_or(DEFAULT_TERM_BUDGET),
        })
    }

    fn poly(&self) -> Result<&Polynomial> {
        self.poly
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("a polynomial is required (--poly, --poly-file or config)".into()))
    }

    fn n(&self) -> Result<usize> {
        self.n.ok_or_else(|| Error::InvalidArgument("an order is required (--n or config)".into()))
    }

    fn kernel(&self) -> Result<&CovarianceKernel> {
        self.kernel
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("a kernel is required (--kernel, --grid-file or config)".into()))
    }

    fn options(&self, keep_terms: bool) -> EvalOptions {
        EvalOptions { budget: self.budget, keep_terms }
    }
}

fn parse_degrees(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad degree '{p}'"))))
        .collect()
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<u32>>> {
    Ok(serde_json::from_str(s)?)
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<Value> {
    match command {
        Command::Evaluate { no_terms } => {
            let res = engine::evaluate(cfg.poly()?, cfg.n()?, cfg.kernel()?, &cfg.rule, &cfg.options(!no_terms))?;
            Ok(res.to_json())
        }
        Command::Expand { expansion: Some(path) } => {
            let saved: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            let terms = saved["terms"]
                .as_array()
                .ok_or_else(|| Error::InvalidArgument("expansion file has no terms array".into()))?
                .iter()
                .map(SymbolicTerm::from_json)
                .collect::<Result<Vec<_>>>()?;
            let total = engine::evaluate_expansion(&terms, cfg.kernel()?, &cfg.rule)?;
            Ok(json!({ "n": saved["n"], "total": total, "terms": saved["terms"] }))
        }
        Command::Expand { expansion: None } => {
            let n = cfg.n()?;
            let terms = engine::expand_symbolic(cfg.poly()?, n, &cfg.options(false))?;
            let mut out = json!({
                "n": n,
                "terms": terms.iter().map(SymbolicTerm::to_json).collect::<Vec<_>>(),
            });
            if let Some(kernel) = &cfg.kernel {
                out["total"] = json!(engine::evaluate_expansion(&terms, kernel, &cfg.rule)?);
            }
            Ok(out)
        }
        Command::Oracle => {
            let (q, n, k) = (cfg.poly()?, cfg.n()?, cfg.kernel()?);
            let res = engine::evaluate(q, n, k, &cfg.rule, &cfg.options(false))?;
            let oracle = pairing_total(q, n, k, &cfg.rule)?;
            Ok(json!({
                "n": n,
                "engine": res.total,
                "oracle": oracle,
                "abs_diff": (res.total - oracle).abs(),
                "quadrature_envelope": res.diagnostics.envelope,
            }))
        }
        Command::Mc => {
            let (q, n, k) = (cfg.poly()?, cfg.n()?, cfg.kernel()?);
            let res = engine::evaluate(q, n, k, &cfg.rule, &cfg.options(false))?;
            let est = mc::estimate(q, n, k, &cfg.mc)?;
            let mut out = res.to_json();
            let deviation = if est.stderr > 0.0 { (est.mean - res.total) / est.stderr } else { 0.0 };
            out["mc"] = json!({
                "mean": est.mean,
                "stderr": est.stderr,
                "samples": est.samples,
                "seed": cfg.mc.seed,
                "deviation_in_stderr": deviation,
            });
            Ok(out)
        }
        Command::Graphs { vertices, degrees } => {
            let degrees = parse_degrees(degrees)?;
            let graphs = Multigraph::enumerate(*vertices, &degrees)?;
            let total: u32 = degrees.iter().sum();
            let pairings = if total.is_multiple_of(2) { double_factorial_odd(total / 2) } else { 0u32.into() };
            Ok(json!({
                "n": vertices,
                "degrees": degrees,
                "count": graphs.len(),
                "total_pairings": pairings.to_string(),
                "graphs": graphs.iter().map(|g| json!({
                    "edges": g.edge_list(),
                    "upper": g.upper_rows(),
                    "c": c_graph(g).to_string(),
                })).collect::<Vec<_>>(),
            }))
        }
        Command::Factor { matrix, a: None } => {
            let g = Multigraph::from_upper(&parse_matrix(matrix)?)?;
            Ok(json!({ "kind": "graph", "edges": g.edge_list(), "c": c_graph(&g).to_string() }))
        }
        Command::Factor { matrix, a: Some(a) } => {
            let c = c_general(&parse_matrix(matrix)?, &parse_matrix(a)?)?;
            Ok(json!({ "kind": "general", "c": c.to_string() }))
        }
        Command::Fk => {
            let (q, n, k) = (cfg.poly()?, cfg.n()?, cfg.kernel()?);
            let rows = engine::fk_partial_sum(q, n, k, &cfg.rule, &cfg.options(false))?;
            Ok(json!({
                "note": "formal expansion, no convergence implied",
                "partial_sums": rows.iter().map(|r| json!({
                    "n": r.n, "term": r.term, "partial_sum": r.partial_sum,
                })).collect::<Vec<_>>(),
            }))
        }
    }
}

fn pretty(command: &Command, v: &Value) -> String {
    let mut s = String::new();
    match command {
        Command::Graphs { .. } => {
            let _ = writeln!(s, "{} graphs, {} pairings", v["count"], v["total_pairings"].as_str().unwrap_or("?"));
            for g in v["graphs"].as_array().into_iter().flatten() {
                let _ =
                    writeln!(s, "  C = {:>6}  {}", g["c"].as_str().unwrap_or("?"), g["edges"].as_str().unwrap_or(""));
            }
        }
        Command::Fk => {
            let _ = writeln!(s, "{:>3}  {:>22}  {:>22}", "n", "(-1)^n I_n", "S_n");
            for r in v["partial_sums"].as_array().into_iter().flatten() {
                let _ = writeln!(
                    s,
                    "{:>3}  {:>22.15e}  {:>22.15e}",
                    r["n"].as_u64().unwrap_or(0),
                    r["term"].as_f64().unwrap_or(f64::NAN),
                    r["partial_sum"].as_f64().unwrap_or(f64::NAN)
                );
            }
        }
        _ => {
            if let Some(terms) = v["terms"].as_array() {
                for t in terms {
                    let comps: Vec<String> = t["components"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .map(|c| {
                            let key = c["key"].as_str().unwrap_or("?");
                            match c["count"].as_u64() {
                                Some(1) => format!("({key})"),
                                count => format!("({key})^{}", count.unwrap_or(0)),
                            }
                        })
                        .collect();
                    let coeff = t.get("coeff_comb").or_else(|| t.get("weight")).and_then(Value::as_str).unwrap_or("?");
                    let _ = writeln!(s, "  {:>12}  {}", coeff, comps.join(" * "));
                }
            }
            if let Some(obj) = v.as_object() {
                for (key, val) in obj {
                    if key == "terms" {
                        continue;
                    }
                    let _ = writeln!(s, "{key}: {val}");
                }
            }
        }
    }
    s
}

fn error_json(e: &Error) -> String {
    let kind = if e.is_guard() { "guard" } else { "invalid" };
    json!({ "error": e.to_string(), "kind": kind }).to_string()
}

fn exit_code(e: &Error) -> i32 {
    if e.is_guard() {
        EXIT_GUARD
    } else {
        EXIT_INVALID
    }
}

fn run_parsed(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    let value = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| execute(&cli.command, &cfg))?,
        None => execute(&cli.command, &cfg)?,
    };
    if let Some(path) = &cli.common.out {
        std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
    }
    if cli.common.pretty {
        write!(out, "{}", pretty(&cli.command, &value))?;
    } else if cli.common.out.is_none() {
        writeln!(out, "{value}")?;
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first), writing results to `out`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let _ = writeln!(out, "{}", json!({ "error": first, "kind": "invalid" }));
            return EXIT_INVALID;
        }
    };
    match run_parsed(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(out, "{}", error_json(&e));
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with(std::env::args_os(), &mut lock)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run_with(std::iter::once("wickgraph").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    const X: &str = r#"{"m":1,"terms":[{"alpha":[1],"q":1.0}]}"#;

    #[test]
    fn evaluate_linear() {
        let (code, out) = call(&["evaluate", "--poly", X, "--n", "2", "--kernel", "product"]);
        assert_eq!(code, 0, "{out}");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["total"].as_f64().unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(v["terms"][0]["coeff_comb"], "1/2");
    }

    #[test]
    fn validation_errors_exit_two() {
        let (code, out) = call(&["evaluate", "--n", "2", "--kernel", "product"]);
        assert_eq!(code, EXIT_INVALID);
        assert_eq!(out.lines().count(), 1);
        assert!(serde_json::from_str::<Value>(&out).unwrap()["error"].is_string());
        let (code, _) = call(&["evaluate", "--poly", "{", "--n", "2", "--kernel", "product"]);
        assert_eq!(code, EXIT_INVALID);
        let (code, _) = call(&["evaluate", "--poly", X, "--n", "2", "--kernel", "nope"]);
        assert_eq!(code, EXIT_INVALID);
        let (code, out) = call(&["frobnicate"]);
        assert_eq!(code, EXIT_INVALID);
        assert_eq!(out.lines().count(), 1);
    }

    #[test]
    fn budget_exits_three() {
        let (code, out) = call(&["evaluate", "--poly", X, "--n", "4", "--kernel", "product", "--budget", "2"]);
        assert_eq!(code, EXIT_GUARD, "{out}");
        assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["kind"], "guard");
    }

    #[test]
    fn graph_listing() {
        let (code, out) = call(&["graphs", "3", "2,2,2"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["count"], 5);
        let mut cs: Vec<u32> =
            v["graphs"].as_array().unwrap().iter().map(|g| g["c"].as_str().unwrap().parse().unwrap()).collect();
        cs.sort();
        assert_eq!(cs, vec![1, 2, 2, 2, 8]);
        assert_eq!(v["total_pairings"], "15");
    }

    #[test]
    fn factor_modes() {
        let (_, out) = call(&["factor", "--matrix", "[[0,1,1],[0,0,1],[0,0,0]]"]);
        assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["c"], "8");
        let (_, out) = call(&["factor", "--matrix", "[[1]]"]);
        assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["c"], "1");
        let (code, out) = call(&["factor", "--matrix", "[[0,1],[0,0]]", "--a", "[[1],[1]]"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["c"], "1");
    }

    #[test]
    fn config_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            format!(r#"{{"poly": {X}, "n": 2, "kernel": "brownian_bridge", "quadrature": {{"order": 6}}}}"#),
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let (code, out) = call(&["evaluate", "--config", p]);
        assert_eq!(code, 0, "{out}");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["total"].as_f64().unwrap() - 1.0 / 24.0).abs() < 1e-12);
        let (_, out) = call(&["evaluate", "--config", p, "--kernel", "product"]);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["total"].as_f64().unwrap() - 0.125).abs() < 1e-12);

        std::fs::write(&path, r#"{"n": 2, "colour": "red"}"#).unwrap();
        assert_eq!(call(&["evaluate", "--config", p]).0, EXIT_INVALID);
    }

    #[test]
    fn fk_and_pretty() {
        let (code, out) = call(&["fk", "--poly", X, "--n", "2", "--kernel", "brownian_bridge"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        let s2 = v["partial_sums"][2]["partial_sum"].as_f64().unwrap();
        assert!((s2 - (1.0 + 1.0 / 24.0)).abs() < 1e-12);
        let (code, out) = call(&["graphs", "2", "2,2", "--pretty"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("2 graphs"));
    }
}
