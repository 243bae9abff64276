//! Command-line interface: solving instances, certification, axiom reports,
//! reference-experiment reproduction, and sensitivity sweeps.
//!
//! Exit codes are a stable contract: 0 success, 1 input error, 2
//! non-convergence, 3 certification failure, 4 reproduction mismatch.

use crate::axioms::axiom_report;
use crate::core::{Distribution, Instance, QExponent, Solution, SolverStatus};
use crate::experiments::{
    emit_report, experiment1_result, golden_checks, run_boundary_cases, run_sensitivity,
    sweep_p_hat, ReportData, ReportFormat, DEFAULT_SWEEP_GRID,
};
use crate::laplace::{laplace_smooth, Pseudocount};
use crate::solver::{certified, certify_solution, solve_qdro, SolverSettings};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_REPRO: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "qdro",
    version,
    about = "Distributionally robust probability smoothing over q-norm ambiguity sets"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Comma-separated empirical probabilities, e.g. 0.0,0.15,0.15,0.30,0.40
    #[arg(long, value_name = "P1,P2,...")]
    p_hat: Option<String>,

    /// Robustness radius (nonnegative; 0 selects the empirical passthrough)
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,

    /// Norm exponent: a decimal >= 1 or "inf"
    #[arg(long)]
    q: Option<String>,

    /// JSON file with {"p_hat": [...], "epsilon": ..., "q": ...};
    /// inline flags override individual fields
    #[arg(long, value_name = "FILE")]
    instance: Option<PathBuf>,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<Instance, String> {
        let from_file: Option<Instance> = match &self.instance {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                Some(serde_json::from_str(&text).map_err(|e| format!("bad instance file: {e}"))?)
            }
            None => None,
        };
        let p_hat = match (&self.p_hat, &from_file) {
            (Some(text), _) => parse_distribution(text)?,
            (None, Some(inst)) => inst.p_hat.clone(),
            (None, None) => return Err("missing --p-hat (or --instance FILE)".to_string()),
        };
        let epsilon = match (self.eps, &from_file) {
            (Some(e), _) => e,
            (None, Some(inst)) => inst.epsilon,
            (None, None) => return Err("missing --eps (or --instance FILE)".to_string()),
        };
        let q = match (&self.q, &from_file) {
            (Some(text), _) => text.parse::<QExponent>().map_err(|e| e.to_string())?,
            (None, Some(inst)) => inst.q,
            (None, None) => return Err("missing --q (or --instance FILE)".to_string()),
        };
        Instance::new(p_hat, epsilon, q).map_err(|e| e.to_string())
    }
}

fn parse_distribution(text: &str) -> Result<Distribution, String> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(|part| part.trim().parse::<f64>())
        .collect();
    let values = values.map_err(|e| format!("bad probability list: {e}"))?;
    Distribution::new(values).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Iteration budget for the solver
    #[arg(long)]
    max_iterations: Option<usize>,

    /// Seed for any randomized component
    #[arg(long)]
    seed: Option<u64>,

    /// Keep raw iterates instead of averaging equal-frequency categories
    #[arg(long)]
    no_symmetrize: bool,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        let mut settings = SolverSettings::default();
        if let Some(m) = self.max_iterations {
            settings.max_iterations = m.max(1);
        }
        if let Some(seed) = self.seed {
            settings.seed = seed;
        }
        settings.symmetrize = !self.no_symmetrize;
        settings
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Svg => ReportFormat::Svg,
        }
    }
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output directory for result files
    #[arg(long, env = "QDRO_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    /// Output formats (repeatable); defaults to all that apply
    #[arg(long = "format", value_enum)]
    formats: Vec<FormatArg>,
}

impl OutputArgs {
    fn formats(&self) -> Vec<ReportFormat> {
        if self.formats.is_empty() {
            vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg]
        } else {
            self.formats.iter().map(|&f| f.into()).collect()
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, String> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| format!("cannot create {}: {e}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        Ok(path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Qdro,
    Laplace,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance and write the certified solution JSON
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Additive (pseudocount) smoothing baseline
    Laplace {
        /// Comma-separated empirical probabilities
        #[arg(long, value_name = "P1,P2,...")]
        p_hat: String,
        /// Pseudocount added to every category
        #[arg(long, default_value_t = 1.0)]
        pseudocount: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve (or smooth) and run the axiom checks
    Axioms {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Which estimator to check
        #[arg(long, value_enum, default_value_t = Estimator::Qdro)]
        estimator: Estimator,
        /// Pseudocount for the additive baseline
        #[arg(long, default_value_t = 1.0)]
        pseudocount: f64,
    },
    /// Certify a solution file (or solve first) against the instance
    Certify {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Previously written solution JSON to certify
        #[arg(long, value_name = "FILE")]
        solution: Option<PathBuf>,
    },
    /// Reproduce the built-in reference experiments and verify them
    Repro {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sensitivity sweep over a grid of radii
    Sweep {
        /// Comma-separated empirical probabilities (defaults to the built-in
        /// four-category instance)
        #[arg(long, value_name = "P1,P2,...")]
        p_hat: Option<String>,
        /// Norm exponent: a decimal >= 1 or "inf"
        #[arg(long, default_value = "2")]
        q: String,
        /// Comma-separated ascending radii (defaults to 0.0,0.05,...,0.30)
        #[arg(long, value_name = "E1,E2,...")]
        eps_grid: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Parse the given arguments and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{err}");
                    EXIT_INPUT
                }
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_INPUT
        }
    }
}

fn execute(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Solve {
            instance,
            solver,
            output,
        } => cmd_solve(&instance, &solver, &output),
        Command::Laplace {
            p_hat,
            pseudocount,
            output,
        } => cmd_laplace(&p_hat, pseudocount, &output),
        Command::Axioms {
            instance,
            solver,
            output,
            estimator,
            pseudocount,
        } => cmd_axioms(&instance, &solver, &output, estimator, pseudocount),
        Command::Certify {
            instance,
            solver,
            output,
            solution,
        } => cmd_certify(&instance, &solver, &output, solution.as_deref()),
        Command::Repro { solver, output } => cmd_repro(&solver, &output),
        Command::Sweep {
            p_hat,
            q,
            eps_grid,
            solver,
            output,
        } => cmd_sweep(p_hat.as_deref(), &q, eps_grid.as_deref(), &solver, &output),
    }
}

fn status_exit_code(status: SolverStatus) -> i32 {
    match status {
        SolverStatus::Converged | SolverStatus::Degenerate => EXIT_OK,
        SolverStatus::MaxIterations => EXIT_UNCONVERGED,
    }
}

fn cmd_solve(
    instance: &InstanceArgs,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<i32, String> {
    let inst = instance.resolve()?;
    let settings = solver.settings();
    let solution = solve_qdro(&inst, &settings).map_err(|e| e.to_string())?;
    let status = solution.status;
    let record = certified(solution, &inst).map_err(|e| e.to_string())?;
    let path = output.write_json("solution.json", &record)?;
    println!(
        "status {}; objective {:.6}; wrote {}",
        record.solution.status,
        record.solution.objective,
        path.display()
    );
    Ok(status_exit_code(status))
}

#[derive(Serialize)]
struct LaplaceRecord {
    p_hat: Distribution,
    pseudocount: f64,
    smoothed: Distribution,
}

fn cmd_laplace(p_hat: &str, pseudocount: f64, output: &OutputArgs) -> Result<i32, String> {
    let p_hat = parse_distribution(p_hat)?;
    let c = Pseudocount::new(pseudocount).map_err(|e| e.to_string())?;
    let smoothed = laplace_smooth(&p_hat, c);
    let record = LaplaceRecord {
        p_hat,
        pseudocount,
        smoothed,
    };
    let path = output.write_json("laplace.json", &record)?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AxiomsRecord {
    estimator: String,
    p_hat: Distribution,
    x: Distribution,
    report: crate::axioms::AxiomReport,
}

fn cmd_axioms(
    instance: &InstanceArgs,
    solver: &SolverArgs,
    output: &OutputArgs,
    estimator: Estimator,
    pseudocount: f64,
) -> Result<i32, String> {
    let inst = instance.resolve()?;
    let settings = solver.settings();
    let (name, x, exit) = match estimator {
        Estimator::Qdro => {
            let solution = solve_qdro(&inst, &settings).map_err(|e| e.to_string())?;
            let exit = status_exit_code(solution.status);
            ("qdro".to_string(), solution.x, exit)
        }
        Estimator::Laplace => {
            let c = Pseudocount::new(pseudocount).map_err(|e| e.to_string())?;
            ("laplace".to_string(), laplace_smooth(&inst.p_hat, c), EXIT_OK)
        }
    };
    let report = axiom_report(&inst.p_hat, &x, settings.tolerances.axiom_tol);
    print!("{report}");
    let record = AxiomsRecord {
        estimator: name,
        p_hat: inst.p_hat.clone(),
        x,
        report,
    };
    let path = output.write_json("axioms.json", &record)?;
    println!("wrote {}", path.display());
    Ok(exit)
}

fn cmd_certify(
    instance: &InstanceArgs,
    solver: &SolverArgs,
    output: &OutputArgs,
    solution_path: Option<&std::path::Path>,
) -> Result<i32, String> {
    let inst = instance.resolve()?;
    let settings = solver.settings();
    let solution: Solution = match solution_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("bad solution file: {e}"))?
        }
        None => solve_qdro(&inst, &settings).map_err(|e| e.to_string())?,
    };
    match certify_solution(&solution, &inst, &settings.tolerances) {
        Ok(report) => {
            let path = output.write_json("certification.json", &report)?;
            println!(
                "certified: {}; duality gap {:.3e}; wrote {}",
                report.certified,
                report.duality_gap,
                path.display()
            );
            Ok(if report.certified {
                EXIT_OK
            } else {
                EXIT_CERTIFICATION
            })
        }
        Err(err) => {
            eprintln!("certification aborted: {err}");
            Ok(EXIT_CERTIFICATION)
        }
    }
}

fn cmd_repro(solver: &SolverArgs, output: &OutputArgs) -> Result<i32, String> {
    let settings = solver.settings();
    let formats = output.formats();
    let mut failures: Vec<String> = Vec::new();

    let exp1 = experiment1_result(&settings).map_err(|e| e.to_string())?;
    emit_report(
        &ReportData::Experiment1(exp1.clone()),
        &formats,
        &output.out_dir,
    )
    .map_err(|e| e.to_string())?;

    let sweep = match run_sensitivity(
        &sweep_p_hat(),
        QExponent::Finite(2.0),
        &DEFAULT_SWEEP_GRID,
        &settings,
    ) {
        Ok(sweep) => {
            emit_report(&ReportData::Sweep(sweep.clone()), &formats, &output.out_dir)
                .map_err(|e| e.to_string())?;
            Some(sweep)
        }
        Err(err) => {
            failures.push(format!("sweep: {err}"));
            None
        }
    };

    let boundary = match run_boundary_cases(&settings) {
        Ok(boundary) => {
            emit_report(
                &ReportData::Boundary(boundary.clone()),
                &formats,
                &output.out_dir,
            )
            .map_err(|e| e.to_string())?;
            Some(boundary)
        }
        Err(err) => {
            failures.push(format!("boundary: {err}"));
            None
        }
    };

    for check in golden_checks(&exp1, sweep.as_ref(), boundary.as_ref()) {
        println!(
            "repro check {:<36} {}  ({})",
            check.name,
            if check.pass { "pass" } else { "FAIL" },
            check.detail
        );
        if !check.pass {
            failures.push(format!("{}: {}", check.name, check.detail));
        }
    }

    if failures.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("reproduction mismatches:");
        for failure in &failures {
            eprintln!("  - {failure}");
        }
        Ok(EXIT_REPRO)
    }
}

fn cmd_sweep(
    p_hat: Option<&str>,
    q: &str,
    eps_grid: Option<&str>,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<i32, String> {
    let p_hat = match p_hat {
        Some(text) => parse_distribution(text)?,
        None => sweep_p_hat(),
    };
    let q: QExponent = q.parse().map_err(|e: crate::core::ExponentError| e.to_string())?;
    let grid: Vec<f64> = match eps_grid {
        Some(text) => {
            let parsed: Result<Vec<f64>, _> = text
                .split(',')
                .map(|part| part.trim().parse::<f64>())
                .collect();
            parsed.map_err(|e| format!("bad radius list: {e}"))?
        }
        None => DEFAULT_SWEEP_GRID.to_vec(),
    };
    let settings = solver.settings();
    match run_sensitivity(&p_hat, q, &grid, &settings) {
        Ok(sweep) => {
            let written = emit_report(
                &ReportData::Sweep(sweep),
                &output.formats(),
                &output.out_dir,
            )
            .map_err(|e| e.to_string())?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(EXIT_OK)
        }
        Err(crate::experiments::ExperimentError::Certification { epsilon, detail }) => {
            eprintln!("certification failed at epsilon {epsilon}: {detail}");
            Ok(EXIT_CERTIFICATION)
        }
        Err(err) => Err(err.to_string()),
    }
}
