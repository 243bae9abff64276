//! Built-in reference experiments, sensitivity sweeps, and deterministic
//! JSON/CSV/SVG artifact writers.

use crate::axioms::{axiom_report, check_order_preservation, AxiomReport, OrderCheck};
use crate::core::{floored_ln, Distribution, Instance, QExponent, Solution, Tolerances};
use crate::solver::{
    duality_gap, kkt_residuals, solve_qdro, SolverError, SolverSettings,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Default radius grid for the sensitivity sweep.
pub const DEFAULT_SWEEP_GRID: [f64; 7] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

const EXPERIMENT1_TARGET: [f64; 5] = [0.1342, 0.1792, 0.1792, 0.2332, 0.2742];
const BOUNDARY_LINF_TARGET: [f64; 4] = [0.20, 0.25, 0.25, 0.30];
const BOUNDARY_L1_TARGET: [f64; 4] = [0.11, 0.11, 0.39, 0.39];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("sweep grid must be nonnegative and ascending")]
    InvalidGrid,
    #[error("solution at epsilon = {epsilon} failed certification: {detail}")]
    Certification { epsilon: f64, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Five-category instance exercising a zero frequency, an exact tie, and
/// strictly ordered categories, with radius 0.2 under the 2-norm.
pub fn experiment1_instance() -> Instance {
    Instance::new(
        Distribution::new(vec![0.00, 0.15, 0.15, 0.30, 0.40]).unwrap(),
        0.2,
        QExponent::Finite(2.0),
    )
    .unwrap()
}

/// Four-category asymmetric instance used for the sensitivity sweep.
pub fn sweep_p_hat() -> Distribution {
    Distribution::new(vec![0.10, 0.20, 0.30, 0.40]).unwrap()
}

/// Boundary instance for q = 1.
pub fn boundary_l1_instance() -> Instance {
    Instance::new(
        Distribution::new(vec![0.00, 0.07, 0.465, 0.465]).unwrap(),
        0.3,
        QExponent::One,
    )
    .unwrap()
}

/// Boundary instance for q = inf.
pub fn boundary_linf_instance() -> Instance {
    Instance::new(
        Distribution::new(vec![0.0, 0.2, 0.3, 0.5]).unwrap(),
        0.2,
        QExponent::Infinity,
    )
    .unwrap()
}

#[derive(Clone, Debug, Serialize)]
pub struct Experiment1Result {
    pub instance: Instance,
    pub solution: Solution,
    pub axioms: AxiomReport,
    pub kkt_max_residual: f64,
    pub duality_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub p_hat: Distribution,
    pub q: QExponent,
    pub epsilon_grid: Vec<f64>,
    pub solutions: Vec<Solution>,
    pub distances_to_uniform: Vec<f64>,
    pub distances_to_empirical: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryCase {
    pub label: String,
    pub instance: Instance,
    pub solution: Solution,
    pub order: OrderCheck,
    /// `|-ln x_j - beta|` per category; sparsity of the regularizer shows up
    /// as exact zeros here.
    pub baseline_deviation: Vec<f64>,
    pub duality_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub l1: BoundaryCase,
    pub linf: BoundaryCase,
}

/// Solve the five-category reference instance and run the axiom suite.
pub fn run_experiment1(settings: &SolverSettings) -> Result<(Solution, AxiomReport), ExperimentError> {
    let result = experiment1_result(settings)?;
    Ok((result.solution, result.axioms))
}

/// Like [`run_experiment1`] but with the certificates attached.
pub fn experiment1_result(settings: &SolverSettings) -> Result<Experiment1Result, ExperimentError> {
    let instance = experiment1_instance();
    let solution = solve_qdro(&instance, settings)?;
    let axioms = axiom_report(
        &instance.p_hat,
        &solution.x,
        settings.tolerances.axiom_tol,
    );
    let kkt_max_residual = kkt_residuals(&solution, &instance)
        .map(|r| r.max_residual)
        .unwrap_or(f64::NAN);
    let gap = duality_gap(&solution, &instance)?;
    Ok(Experiment1Result {
        instance,
        solution,
        axioms,
        kkt_max_residual,
        duality_gap: gap,
    })
}

/// One certified solve per grid radius, with distances to the uniform and
/// empirical distributions.
pub fn run_sensitivity(
    p_hat: &Distribution,
    q: QExponent,
    eps_grid: &[f64],
    settings: &SolverSettings,
) -> Result<SweepResult, ExperimentError> {
    let ascending = eps_grid.windows(2).all(|w| w[0] <= w[1]);
    if !ascending || eps_grid.iter().any(|&e| e < 0.0 || !e.is_finite()) {
        return Err(ExperimentError::InvalidGrid);
    }
    let uniform = Distribution::uniform(p_hat.len());
    let mut solutions = Vec::with_capacity(eps_grid.len());
    let mut distances_to_uniform = Vec::with_capacity(eps_grid.len());
    let mut distances_to_empirical = Vec::with_capacity(eps_grid.len());
    for &epsilon in eps_grid {
        let instance = Instance::new(p_hat.clone(), epsilon, q)
            .expect("grid radii are validated above");
        let solution = solve_qdro(&instance, settings)?;
        certify_for_sweep(&solution, &instance, &settings.tolerances).map_err(|detail| {
            ExperimentError::Certification { epsilon, detail }
        })?;
        distances_to_uniform.push(solution.x.l2_distance(&uniform));
        distances_to_empirical.push(solution.x.l2_distance(p_hat));
        solutions.push(solution);
    }
    Ok(SweepResult {
        p_hat: p_hat.clone(),
        q,
        epsilon_grid: eps_grid.to_vec(),
        solutions,
        distances_to_uniform,
        distances_to_empirical,
    })
}

/// Every emitted solution must pass its own certificate: KKT residuals on
/// the smooth range, the duality gap elsewhere.
fn certify_for_sweep(
    solution: &Solution,
    instance: &Instance,
    tol: &Tolerances,
) -> Result<(), String> {
    let gap_tol = 100.0 * tol.cert_tol;
    if instance.q.is_smooth() && !solution.degenerate {
        match kkt_residuals(solution, instance) {
            Ok(report) if report.max_residual <= tol.cert_tol => return Ok(()),
            Ok(report) => {
                return Err(format!(
                    "KKT max residual {:.3e} above {:.1e}",
                    report.max_residual, tol.cert_tol
                ))
            }
            Err(err) => return Err(err.to_string()),
        }
    }
    match duality_gap(solution, instance) {
        Ok(gap) if gap.abs() <= gap_tol => Ok(()),
        Ok(gap) => Err(format!("duality gap {gap:.3e} above {gap_tol:.1e}")),
        Err(err) => Err(err.to_string()),
    }
}

/// Solve both boundary instances and report order outcomes plus the
/// baseline-deviation diagnostic.
pub fn run_boundary_cases(settings: &SolverSettings) -> Result<BoundaryReport, ExperimentError> {
    let build = |label: &str, instance: Instance| -> Result<BoundaryCase, ExperimentError> {
        let solution = solve_qdro(&instance, settings)?;
        let order = check_order_preservation(
            &instance.p_hat,
            &solution.x,
            settings.tolerances.axiom_tol,
        );
        let baseline_deviation = solution
            .x
            .iter()
            .map(|&xj| (-floored_ln(xj) - solution.beta).abs())
            .collect();
        let gap = duality_gap(&solution, &instance)?;
        Ok(BoundaryCase {
            label: label.to_string(),
            instance,
            solution,
            order,
            baseline_deviation,
            duality_gap: gap,
        })
    };
    Ok(BoundaryReport {
        l1: build("q1", boundary_l1_instance())?,
        linf: build("qinf", boundary_linf_instance())?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(format!("unknown format {other:?} (expected json, csv, or svg)")),
        }
    }
}

pub enum ReportData {
    Experiment1(Experiment1Result),
    Sweep(SweepResult),
    Boundary(BoundaryReport),
}

/// Write the selected formats into `dir` with fixed names and deterministic
/// contents; returns the written paths in a stable order.
pub fn emit_report(
    data: &ReportData,
    formats: &[ReportFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: String| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    match data {
        ReportData::Experiment1(result) => {
            if formats.contains(&ReportFormat::Json) {
                emit("experiment1.json", to_json(result))?;
            }
            if formats.contains(&ReportFormat::Csv) {
                emit("experiment1.csv", experiment1_csv(result))?;
            }
            if formats.contains(&ReportFormat::Svg) {
                emit("experiment1.svg", experiment1_svg(result))?;
            }
        }
        ReportData::Sweep(result) => {
            if formats.contains(&ReportFormat::Json) {
                emit("sweep.json", to_json(result))?;
            }
            if formats.contains(&ReportFormat::Csv) {
                emit("sweep.csv", sweep_csv(result))?;
            }
            if formats.contains(&ReportFormat::Svg) {
                emit("sweep.svg", sweep_svg(result))?;
            }
        }
        ReportData::Boundary(result) => {
            if formats.contains(&ReportFormat::Json) {
                emit("boundary.json", to_json(result))?;
            }
            if formats.contains(&ReportFormat::Csv) {
                emit("boundary.csv", boundary_csv(result))?;
            }
        }
    }
    Ok(written)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn experiment1_csv(result: &Experiment1Result) -> String {
    let mut out = String::from("category,empirical,smoothed\n");
    for j in 0..result.instance.p_hat.len() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6}",
            j + 1,
            result.instance.p_hat.get(j),
            result.solution.x.get(j)
        );
    }
    out
}

fn sweep_csv(result: &SweepResult) -> String {
    let n = result.p_hat.len();
    let mut out = String::from("epsilon");
    for j in 0..n {
        let _ = write!(out, ",x{}", j + 1);
    }
    out.push_str(",distance_to_uniform,distance_to_empirical\n");
    for (k, solution) in result.solutions.iter().enumerate() {
        let _ = write!(out, "{:.6}", result.epsilon_grid[k]);
        for j in 0..n {
            let _ = write!(out, ",{:.6}", solution.x.get(j));
        }
        let _ = writeln!(
            out,
            ",{:.6},{:.6}",
            result.distances_to_uniform[k], result.distances_to_empirical[k]
        );
    }
    out
}

fn boundary_csv(result: &BoundaryReport) -> String {
    let mut out = String::from("case,q,category,empirical,smoothed,baseline_deviation\n");
    for case in [&result.l1, &result.linf] {
        for j in 0..case.instance.p_hat.len() {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6e}",
                case.label,
                case.instance.q,
                j + 1,
                case.instance.p_hat.get(j),
                case.solution.x.get(j),
                case.baseline_deviation[j]
            );
        }
    }
    out
}

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn svg_header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n\
         <rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n"
    )
}

/// Grouped bar chart comparing the empirical distribution with the
/// estimator, one bar pair per category.
fn experiment1_svg(result: &Experiment1Result) -> String {
    let n = result.instance.p_hat.len();
    let plot_w = SVG_WIDTH - 2.0 * MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * MARGIN;
    let y_max = result
        .instance
        .p_hat
        .iter()
        .chain(result.solution.x.iter())
        .cloned()
        .fold(0.0, f64::max)
        * 1.15;
    let slot = plot_w / n as f64;
    let bar = slot * 0.35;
    let mut out = svg_header();
    let _ = writeln!(
        out,
        "<line x1=\"{m:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>",
        m = MARGIN,
        b = SVG_HEIGHT - MARGIN,
        r = SVG_WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        "<line x1=\"{m:.2}\" y1=\"{t:.2}\" x2=\"{m:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = SVG_HEIGHT - MARGIN
    );
    for j in 0..n {
        let x0 = MARGIN + j as f64 * slot + slot * 0.15;
        for (offset, value, color) in [
            (0.0, result.instance.p_hat.get(j), "#888888"),
            (bar, result.solution.x.get(j), "#1f6fb2"),
        ] {
            let h = value / y_max * plot_h;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{color}\"><title>{v:.6}</title></rect>",
                x = x0 + offset,
                y = SVG_HEIGHT - MARGIN - h,
                w = bar,
                h = h,
                v = value
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            j + 1,
            x = MARGIN + (j as f64 + 0.5) * slot,
            y = SVG_HEIGHT - MARGIN + 16.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x:.2}\" y=\"20\" font-size=\"13\" text-anchor=\"middle\">empirical (grey) vs smoothed (blue)</text>",
        x = SVG_WIDTH / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Per-category trajectories of the estimator over the radius grid.
fn sweep_svg(result: &SweepResult) -> String {
    let n = result.p_hat.len();
    let plot_w = SVG_WIDTH - 2.0 * MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * MARGIN;
    let mut out = svg_header();
    let _ = writeln!(
        out,
        "<line x1=\"{m:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>",
        m = MARGIN,
        b = SVG_HEIGHT - MARGIN,
        r = SVG_WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        "<line x1=\"{m:.2}\" y1=\"{t:.2}\" x2=\"{m:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = SVG_HEIGHT - MARGIN
    );
    if result.epsilon_grid.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let e_max = result.epsilon_grid.last().copied().unwrap_or(1.0).max(1e-9);
    let y_max = result
        .solutions
        .iter()
        .flat_map(|s| s.x.iter().cloned())
        .fold(0.0, f64::max)
        * 1.15;
    let colors = ["#1f6fb2", "#c23b22", "#2e8b57", "#8a2be2", "#b8860b", "#555555"];
    for j in 0..n {
        let mut points = String::new();
        for (k, solution) in result.solutions.iter().enumerate() {
            let px = MARGIN + result.epsilon_grid[k] / e_max * plot_w;
            let py = SVG_HEIGHT - MARGIN - solution.x.get(j) / y_max * plot_h;
            let _ = write!(points, "{px:.2},{py:.2} ");
            let _ = writeln!(
                out,
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"{}\"/>",
                colors[j % colors.len()]
            );
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            points.trim_end(),
            colors[j % colors.len()]
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x:.2}\" y=\"20\" font-size=\"13\" text-anchor=\"middle\">estimator components over the robustness radius</text>",
        x = SVG_WIDTH / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Outcome of one reference-value check.
#[derive(Clone, Debug, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> GoldenCheck {
    GoldenCheck {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn max_component_error(x: &Distribution, target: &[f64]) -> f64 {
    x.iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Compare the reproduction results against the frozen reference values.
pub fn golden_checks(
    exp1: &Experiment1Result,
    sweep: Option<&SweepResult>,
    boundary: Option<&BoundaryReport>,
) -> Vec<GoldenCheck> {
    use crate::core::SolverStatus;
    let mut checks = Vec::new();

    let converged = matches!(
        exp1.solution.status,
        SolverStatus::Converged | SolverStatus::Degenerate
    );
    checks.push(check(
        "experiment1.converged",
        converged && !exp1.solution.degenerate,
        format!("status {}", exp1.solution.status),
    ));
    let err = max_component_error(&exp1.solution.x, &EXPERIMENT1_TARGET);
    checks.push(check(
        "experiment1.components",
        err <= 1e-3,
        format!("max component error {err:.2e} (tolerance 1e-3)"),
    ));
    checks.push(check(
        "experiment1.axioms",
        exp1.axioms.positivity.pass
            && exp1.axioms.symmetry.pass
            && exp1.axioms.order_preservation.pass,
        format!(
            "positivity {}, symmetry {}, order {}",
            exp1.axioms.positivity.pass,
            exp1.axioms.symmetry.pass,
            exp1.axioms.order_preservation.pass
        ),
    ));
    checks.push(check(
        "experiment1.duality_gap",
        exp1.duality_gap.abs() <= 1e-4,
        format!("gap {:.2e} (tolerance 1e-4)", exp1.duality_gap),
    ));

    if let Some(sweep) = sweep {
        let passthrough = sweep
            .solutions
            .first()
            .map(|s| s.x == sweep.p_hat)
            .unwrap_or(false);
        checks.push(check(
            "sweep.zero_radius_passthrough",
            sweep.epsilon_grid.first() != Some(&0.0) || passthrough,
            "estimator at radius zero equals the empirical distribution".to_string(),
        ));
        let monotone = sweep
            .distances_to_uniform
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12);
        checks.push(check(
            "sweep.distance_monotone",
            monotone,
            format!("distances {:?}", sweep.distances_to_uniform),
        ));
        let near_uniform = sweep
            .solutions
            .last()
            .map(|s| {
                s.x.l2_distance(&Distribution::uniform(sweep.p_hat.len())) <= 1e-3
            })
            .unwrap_or(false);
        checks.push(check(
            "sweep.endpoint_uniform",
            near_uniform,
            "final radius drives the estimator to uniform".to_string(),
        ));
    }

    if let Some(boundary) = boundary {
        let err = max_component_error(&boundary.linf.solution.x, &BOUNDARY_LINF_TARGET);
        checks.push(check(
            "boundary.linf_components",
            err <= 1e-2,
            format!("max component error {err:.2e} (tolerance 1e-2)"),
        ));
        let tie = (boundary.linf.solution.x.get(1) - boundary.linf.solution.x.get(2)).abs();
        checks.push(check(
            "boundary.linf_exact_tie",
            tie <= 1e-6,
            format!("|x2 - x3| = {tie:.2e} (tolerance 1e-6)"),
        ));
        let tie_reported = boundary
            .linf
            .order
            .violations
            .iter()
            .any(|v| v.i == 1 && v.j == 2);
        checks.push(check(
            "boundary.linf_order_tie_reported",
            !boundary.linf.order.pass && tie_reported,
            "order check reports the tie between categories 2 and 3".to_string(),
        ));
        let sparse = boundary.linf.baseline_deviation[1] <= 1e-6
            && boundary.linf.baseline_deviation[2] <= 1e-6;
        checks.push(check(
            "boundary.linf_baseline_sparsity",
            sparse,
            format!(
                "baseline deviations {:.2e}, {:.2e}",
                boundary.linf.baseline_deviation[1], boundary.linf.baseline_deviation[2]
            ),
        ));
        let err = max_component_error(&boundary.l1.solution.x, &BOUNDARY_L1_TARGET);
        checks.push(check(
            "boundary.l1_components",
            err <= 1e-2,
            format!("max component error {err:.2e} (tolerance 1e-2)"),
        ));
        let statuses_ok = matches!(boundary.l1.solution.status, SolverStatus::Converged)
            && matches!(boundary.linf.solution.status, SolverStatus::Converged);
        checks.push(check(
            "boundary.converged",
            statuses_ok,
            format!(
                "q=1 {}, q=inf {}",
                boundary.l1.solution.status, boundary.linf.solution.status
            ),
        ));
    }

    checks
}
