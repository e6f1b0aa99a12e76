//! `cbs-forge`: command-line front end for the verification suites and search campaigns.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use cbs_forge_core::battery::{self, run_criterion, tol, Criterion, LawSelector, SuiteOptions, SuiteScale};
use cbs_forge_core::cbs::{phi_with_budget, CbsInput, DEFAULT_WORK_BUDGET};
use cbs_forge_core::hypermatrix::DimVector;
use cbs_forge_core::integral::{dual_path_check, Family, ParamBlock};
use cbs_forge_core::report::{InputDigest, RunReport, TrialRecord};
use cbs_forge_core::search::{
    is_proven_nonnegative, minimize_phi, DescentSettings, GradientMode, SearchConfig, CANDIDATE_THRESHOLD,
};
use serde_json::json;

const THREADS_ENV: &str = "CBS_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cbs-forge", version, about = "Numerical verification of the generalized CBS functional")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, serde::Serialize)]
struct Global {
    /// Master seed; every trial seed is derived from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ceiling on multiply-adds for a single functional evaluation.
    #[arg(long, global = true, default_value_t = DEFAULT_WORK_BUDGET)]
    budget: u128,
    /// Override the default tolerance of the selected check.
    #[arg(long, global = true, value_parser = parse_tol)]
    tol: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Lagrange identity: exact integer trials and complex three-way trials.
    VerifyLagrange {
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
    /// Invariance laws of the functional.
    VerifyInvariance {
        #[arg(value_enum)]
        law: Law,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Evaluate the functional on a JSON input file.
    EvalPhi {
        #[arg(long)]
        input: PathBuf,
    },
    /// Expectation of the critical operator against the functional.
    OracleCheck {
        /// Comma-separated shape; repeat for several shapes.
        #[arg(long, value_parser = parse_dims, default_values = ["2", "3", "2,2", "2,3", "3,3"])]
        dims: Vec<DimVector>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Closed-form Werner and isotropic witnesses over a `t` grid on `[-1, 1]`.
    WernerCheck {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        d: Vec<usize>,
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Minimize the functional by projected gradient descent.
    Search {
        #[arg(long, value_parser = parse_dims)]
        dims: DimVector,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, value_enum, default_value_t = Gradient::Fd)]
        gradient: Gradient,
        /// Directory for standalone candidate files; defaults to the report's directory.
        #[arg(long)]
        candidates_dir: Option<PathBuf>,
    },
    /// Integral analogues of the inequality.
    Integral {
        #[command(subcommand)]
        which: IntegralCommand,
    },
    /// The full acceptance battery.
    Suite {
        /// Reduced trial counts.
        #[arg(long)]
        quick: bool,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Debug, Subcommand, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum IntegralCommand {
    /// Power family closed form with a dual-path check when every parameter is at least 1.
    Power(ParamArgs),
    /// Gaussian family closed form with a dual-path check.
    Gauss(ParamArgs),
    /// Midpoint-rule refinement on the `ξ = 1`, `η = s` family.
    Quadrature {
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        points: Vec<usize>,
    },
}

#[derive(Debug, Args, serde::Serialize)]
struct ParamArgs {
    /// `a11,a12,a21,a22` where `a_ik` belongs to index `i` and pair `k`.
    #[arg(long, value_delimiter = ',', num_args = 1, required_unless_present = "params")]
    a: Vec<f64>,
    /// `b11,b12,b21,b22`.
    #[arg(long, value_delimiter = ',', num_args = 1, required_unless_present = "params")]
    b: Vec<f64>,
    /// JSON file `{"a": [[a11, a12], [a21, a22]], "b": [[...], [...]]}`.
    #[arg(long, conflicts_with_all = ["a", "b"])]
    params: Option<PathBuf>,
    /// Quadrature points for the dual-path check.
    #[arg(long, default_value_t = 1024)]
    points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum Law {
    Permute,
    UnitAxis,
    Unitary,
    Mixing,
    All,
}

impl From<Law> for LawSelector {
    fn from(l: Law) -> Self {
        match l {
            Law::Permute => LawSelector::Permute,
            Law::UnitAxis => LawSelector::UnitAxis,
            Law::Unitary => LawSelector::Unitary,
            Law::Mixing => LawSelector::Mixing,
            Law::All => LawSelector::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum Gradient {
    Fd,
    Analytic,
}

impl From<Gradient> for GradientMode {
    fn from(g: Gradient) -> Self {
        match g {
            Gradient::Fd => GradientMode::FiniteDifference,
            Gradient::Analytic => GradientMode::Analytic,
        }
    }
}

fn parse_dims(s: &str) -> Result<DimVector, String> {
    let dims = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad dimension {p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    DimVector::new(dims).map_err(|e| e.to_string())
}

fn parse_tol(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if t >= 0.0 && t.is_finite() => Ok(t),
        Ok(t) => Err(format!("tolerance must be finite and nonnegative, got {t}")),
        Err(e) => Err(e.to_string()),
    }
}

fn digest(path: &Path) -> anyhow::Result<(Vec<u8>, InputDigest)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, InputDigest { path: path.display().to_string(), sha256 }))
}

fn param_block(args: &ParamArgs, report: &mut RunReport) -> anyhow::Result<ParamBlock> {
    if let Some(path) = &args.params {
        let (bytes, d) = digest(path)?;
        report.inputs.push(d);
        let p: ParamBlock = serde_json::from_slice(&bytes).context("parsing parameter file")?;
        p.validate()?;
        return Ok(p);
    }
    let pair = |v: &[f64], name: &str| -> anyhow::Result<[[f64; 2]; 2]> {
        match v {
            [x11, x12, x21, x22] => Ok([[*x11, *x12], [*x21, *x22]]),
            _ => bail!("--{name} needs exactly four comma-separated values"),
        }
    };
    Ok(ParamBlock::new(pair(&args.a, "a")?, pair(&args.b, "b")?)?)
}

fn integral_family(family: Family, args: &ParamArgs, g: &Global, report: &mut RunReport) -> anyhow::Result<()> {
    let p = param_block(args, report)?;
    let value = family.closed_form(&p)?;
    let symmetric = family.closed_form(&p.relabeled())?.to_bits() == value.to_bits()
        && family.closed_form(&p.swapped())?.to_bits() == value.to_bits();
    let threshold = g.tol.unwrap_or(tol::CLOSED_FORM);
    report.extend([TrialRecord::asserted(
        "integral-closed-form",
        format!("{family:?}"),
        value >= -threshold && symmetric,
        json!({"params": p, "value": value, "symmetric": symmetric, "tolerance": threshold}),
    )?]);
    let smooth = match family {
        Family::Power => p.a.iter().chain(&p.b).flatten().all(|&v| v >= 1.0),
        Family::Gaussian => true,
    };
    if smooth {
        let c = dual_path_check(family, &p, args.points)?;
        report.extend([TrialRecord::asserted("integral-dual-path", format!("{family:?}"), c.pass, c)?]);
    }
    Ok(())
}

fn search(cmd: &Command, g: &Global, report: &mut RunReport) -> anyhow::Result<()> {
    let Command::Search { dims, n, restarts, iters, gradient, candidates_dir } = cmd else { unreachable!() };
    let config = SearchConfig {
        dims: dims.clone(),
        n: *n,
        budget: g.budget,
        descent: DescentSettings {
            restarts: *restarts,
            max_iters: *iters,
            seed: g.seed,
            gradient: (*gradient).into(),
            ..DescentSettings::default()
        },
    };
    let result = minimize_phi(&config)?;
    let proven = is_proven_nonnegative(dims, *n);
    let label = format!("dims {dims} n {n}");
    if result.best_value < CANDIDATE_THRESHOLD {
        let dir = candidates_dir
            .clone()
            .or_else(|| g.out.as_ref().and_then(|p| p.parent().map(Path::to_path_buf)))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!(
            "candidate-{}-n{}-seed{}.json",
            dims.dims().iter().map(usize::to_string).collect::<Vec<_>>().join("x"),
            n,
            g.seed
        ));
        fs::write(&path, serde_json::to_vec_pretty(&result.best_input)?)?;
        report.inputs.push(digest(&path)?.1);
    }
    let trial = if proven {
        let threshold = g.tol.unwrap_or(tol::PROVEN_REGION);
        TrialRecord::asserted("search", label, result.best_value >= -threshold, &result)?
    } else {
        let threshold = g.tol.unwrap_or(tol::CONJECTURE);
        TrialRecord::report_only("search", label, result.best_value >= -threshold, &result)?
    };
    report.extend([trial]);
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<RunReport> {
    let g = &cli.global;
    let command_name = serde_json::to_value(&cli.command)?
        .as_object()
        .and_then(|o| o.keys().next().cloned())
        .unwrap_or_else(|| "unknown".into());
    let config = json!({"global": g, "command": cli.command});
    let mut report = RunReport::new(command_name, config, vec![g.seed])?;
    let started = Instant::now();
    match &cli.command {
        Command::VerifyLagrange { trials } => {
            report.extend(battery::lagrange_exact_trials(g.seed, *trials)?);
            report.extend(battery::lagrange_complex_trials(g.seed, *trials, g.tol.unwrap_or(tol::LAGRANGE))?);
        }
        Command::VerifyInvariance { law, trials } => {
            report.extend(battery::invariance_trials((*law).into(), g.seed, *trials)?);
        }
        Command::EvalPhi { input } => {
            let (bytes, d) = digest(input)?;
            report.inputs.push(d);
            let parsed: CbsInput = serde_json::from_slice(&bytes).context("parsing CbsInput")?;
            let b = phi_with_budget(&parsed, g.budget)?;
            let threshold = g.tol.unwrap_or(tol::NONNEGATIVE);
            let label = format!("shape {} n {}", parsed.shape(), parsed.n());
            let pass = b.total >= -threshold * b.cancellation_mass.max(1.0);
            report.extend([TrialRecord::report_only("eval-phi", label, pass, &b)?]);
        }
        Command::OracleCheck { dims, trials } => {
            report.extend(battery::oracle_trials(g.seed, dims, *trials, g.tol.unwrap_or(tol::ORACLE))?);
        }
        Command::WernerCheck { d, points } => {
            report.extend(battery::witness_trials(d, *points, g.tol.unwrap_or(tol::WITNESS))?);
        }
        cmd @ Command::Search { .. } => search(cmd, g, &mut report)?,
        Command::Integral { which } => match which {
            IntegralCommand::Power(args) => integral_family(Family::Power, args, g, &mut report)?,
            IntegralCommand::Gauss(args) => integral_family(Family::Gaussian, args, g, &mut report)?,
            IntegralCommand::Quadrature { points } => report.extend(battery::quadrature_trials(points)?),
        },
        Command::Suite { quick, only } => {
            let opts = SuiteOptions {
                scale: if *quick { SuiteScale::Quick } else { SuiteScale::Full },
                budget: g.budget,
                ..SuiteOptions::new(g.seed)
            };
            let mut summaries = Vec::new();
            for c in Criterion::ALL.into_iter().filter(|c| only.is_empty() || only.contains(&c.number())) {
                let (summary, trials) = run_criterion(c, &opts)?;
                eprintln!(
                    "criterion {:>2} {}: {} ({:.2}s)",
                    summary.criterion,
                    summary.title,
                    if !summary.gating {
                        "REPORT"
                    } else if summary.pass {
                        "PASS"
                    } else {
                        "FAIL"
                    },
                    summary.wall_time_secs
                );
                report.extend(trials);
                if summary.gating && !summary.pass && summary.failures == 0 {
                    report.extend([TrialRecord::asserted(
                        "suite",
                        format!("criterion {} runtime", c.number()),
                        false,
                        &summary,
                    )?]);
                }
                summaries.push(summary);
            }
            report.config["criteria"] = serde_json::to_value(&summaries)?;
        }
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

fn emit(report: &RunReport, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit(&report, cli.global.out.as_deref()) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if report.pass {
        return ExitCode::SUCCESS;
    }
    for t in report.failures() {
        eprintln!("{}", serde_json::to_string(t).unwrap_or_else(|_| t.label.clone()));
    }
    ExitCode::from(1)
}
