//! Scenario-driven entry points behind the `asfes` binary.
//!
//! Exit codes: 0 success, 1 validation, 2 runtime divergence, 3 property failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DVector;
use thiserror::Error;

use crate::analysis::{
    average_equilibrium, delta_sweep, envelope, safety_report, spectral_report, AnalysisError,
    SafetyReport,
};
use crate::dynamics::{AlgorithmConfig, AverageState, FullState, Variant};
use crate::integrate::{
    cold_filter_state, simulate_average, simulate_full, simulate_reduced, warmup, IntegrateError,
    IntegrationSettings, Trajectory,
};
use crate::scenario::{Scenario, ScenarioError};
use crate::verify::{jacobian_errors, run_properties, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_PROPERTY: i32 = 3;

/// Softening values swept by `analyze`.
pub const DELTA_SWEEP: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const NB_CONDITION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
    #[error("property failed: {0}")]
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Scenario(_) => EXIT_VALIDATION,
            CliError::Integrate(e) => integrate_exit_code(e),
            CliError::Analysis(_) | CliError::Output { .. } => EXIT_RUNTIME,
            CliError::Property(_) => EXIT_PROPERTY,
        }
    }
}

fn integrate_exit_code(e: &IntegrateError) -> i32 {
    match e {
        IntegrateError::NonPositiveStep(_)
        | IntegrateError::EmptyTrajectory(_)
        | IntegrateError::ZeroStride
        | IntegrateError::StepTooCoarse { .. }
        | IntegrateError::NonPositiveTolerance(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// 17 significant digits, so parsing the text recovers the value exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_err(path, e))?;
    w.write_record(header).map_err(|e| output_err(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_value(*v)))
            .map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

/// Header and numeric rows of a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| output_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| output_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| output_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| output_err(path, e)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// Which model a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Full(Variant),
    Average,
    Reduced,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Full(v) => v.name(),
            RunKind::Average => "average",
            RunKind::Reduced => "reduced",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub kind: RunKind,
    pub c: f64,
    pub start_index: usize,
    pub theta0: DVector<f64>,
    pub file: String,
    pub t_end: f64,
    pub dt: f64,
    pub outcome: Result<RunOutcome, RunFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: SafetyReport,
    pub gamma_divergence: Option<f64>,
    pub final_theta: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub scenario: String,
    pub runs: Vec<RunRecord>,
}

impl SimulationSummary {
    /// Exit code of the first failed run, or success.
    pub fn exit_code(&self) -> i32 {
        self.runs
            .iter()
            .find_map(|r| r.outcome.as_ref().err().map(|f| f.exit_code))
            .unwrap_or(EXIT_OK)
    }

    pub fn find(&self, kind: RunKind, c: f64, start_index: usize) -> Option<&RunRecord> {
        self.runs
            .iter()
            .find(|r| r.kind == kind && r.c == c && r.start_index == start_index)
    }
}

struct Job {
    kind: RunKind,
    cfg: AlgorithmConfig,
    start_index: usize,
    theta0: DVector<f64>,
    settings: IntegrationSettings,
    file: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    /// Single-threaded; output bytes are identical to the parallel mode.
    Serial,
}

fn warmed_state(
    scenario: &Scenario,
    cfg: &AlgorithmConfig,
    theta0: &DVector<f64>,
    settings: &IntegrationSettings,
) -> Result<FullState, IntegrateError> {
    if scenario.warmup {
        let ws = IntegrationSettings {
            t_end: scenario.warmup_horizon,
            ..*settings
        };
        warmup(&scenario.plant, cfg, theta0, &ws, scenario.warmup_rel_tol)
    } else {
        Ok(cold_filter_state(&scenario.plant, cfg, theta0)?)
    }
}

fn envelope_of<S>(traj: &Trajectory<S>, c: f64) -> Vec<f64> {
    let h0 = traj.h_values[0];
    traj.times.iter().map(|&t| envelope(h0, c, t)).collect()
}

fn run_job(scenario: &Scenario, job: &Job) -> Result<RunOutcome, CliError> {
    let plant = &scenario.plant;
    let n = plant.dimension();
    let opt = plant.constrained_minimum();
    let c = job.cfg.c;
    let (header, rows, report, divergence, final_theta): (Vec<String>, Vec<Vec<f64>>, _, _, _) =
        match job.kind {
            RunKind::Full(v) => {
                let x0 = warmed_state(scenario, &job.cfg, &job.theta0, &job.settings)?;
                let traj = simulate_full(plant, &job.cfg, &x0, &job.settings)?;
                let newton = v == Variant::NewtonAsfes;
                let mut header = vec!["t".to_string()];
                header.extend(indexed("theta_hat", n));
                header.extend(indexed("g_j", n));
                header.push("eta_j".into());
                header.extend(indexed("g_h", n));
                header.extend(["eta_h".into(), "gamma".into()]);
                if newton {
                    header.push("newton_gamma".into());
                }
                header.extend(["j".into(), "h".into(), "envelope".into()]);
                let env = envelope_of(&traj, c);
                let rows = (0..traj.len())
                    .map(|i| {
                        let mut row = vec![traj.times[i]];
                        row.extend(traj.states[i].to_vector().iter());
                        row.extend([traj.j_values[i], traj.h_values[i], env[i]]);
                        row
                    })
                    .collect();
                let last = traj.last_state().expect("non-empty").theta_hat.clone();
                let rep = safety_report(&traj, c, &opt)?;
                (header, rows, rep, traj.gamma_divergence, last)
            }
            RunKind::Average => {
                let asfes = job.cfg.with_variant(Variant::Asfes).map_err(IntegrateError::from)?;
                let x0 = warmed_state(scenario, &asfes, &job.theta0, &job.settings)?;
                let xa0 = AverageState::from_full(&x0, plant.theta_star());
                let traj = simulate_average(plant, &asfes, &xa0, &job.settings)?;
                let mut header = vec!["t".to_string()];
                header.extend(indexed("theta", n));
                header.extend(indexed("g_j", n));
                header.push("eta_j".into());
                header.extend(indexed("g_h", n));
                header.extend(["eta_h", "gamma", "j", "h", "envelope"].map(String::from));
                let env = envelope_of(&traj, c);
                let rows = (0..traj.len())
                    .map(|i| {
                        let mut v = traj.states[i].to_vector();
                        for k in 0..n {
                            v[k] += plant.theta_star()[k];
                        }
                        let mut row = vec![traj.times[i]];
                        row.extend(v.iter());
                        row.extend([traj.j_values[i], traj.h_values[i], env[i]]);
                        row
                    })
                    .collect();
                let last = &traj.last_state().expect("non-empty").theta_tilde_a + plant.theta_star();
                let rep = safety_report(&traj, c, &opt)?;
                (header, rows, rep, traj.gamma_divergence, last)
            }
            RunKind::Reduced => {
                let tilde0 = &job.theta0 - plant.theta_star();
                let traj = simulate_reduced(plant, &job.cfg, &tilde0, &job.settings)?;
                let mut header = vec!["t".to_string()];
                header.extend(indexed("theta", n));
                header.extend(["j", "h", "envelope"].map(String::from));
                let env = envelope_of(&traj, c);
                let rows = (0..traj.len())
                    .map(|i| {
                        let mut row = vec![traj.times[i]];
                        row.extend((&traj.states[i] + plant.theta_star()).iter());
                        row.extend([traj.j_values[i], traj.h_values[i], env[i]]);
                        row
                    })
                    .collect();
                let last = traj.last_state().expect("non-empty") + plant.theta_star();
                let rep = safety_report(&traj, c, &opt)?;
                (header, rows, rep, None, last)
            }
        };
    write_csv(&job.file, &header, &rows)?;
    Ok(RunOutcome {
        report,
        gamma_divergence: divergence,
        final_theta,
    })
}

fn build_jobs(scenario: &Scenario, out_dir: &Path) -> Result<Vec<Job>, CliError> {
    let mut kinds: Vec<RunKind> = scenario.variants_to_run.iter().map(|&v| RunKind::Full(v)).collect();
    if scenario.include_average {
        kinds.push(RunKind::Average);
    }
    if scenario.include_reduced {
        kinds.push(RunKind::Reduced);
    }
    let mut jobs = Vec::new();
    for cfg in scenario.configs() {
        let settings = scenario.run_settings(&cfg);
        settings.validate_for(&cfg)?;
        for (si, theta0) in scenario.initial_thetas.iter().enumerate() {
            for &kind in &kinds {
                let cfg = match kind {
                    RunKind::Full(v) => cfg.with_variant(v).map_err(IntegrateError::from)?,
                    _ => cfg.clone(),
                };
                jobs.push(Job {
                    kind,
                    file: out_dir.join(format!("{}_c{}_start{}.csv", kind.name(), cfg.c, si)),
                    cfg,
                    start_index: si,
                    theta0: theta0.clone(),
                    settings,
                });
            }
        }
    }
    Ok(jobs)
}

fn run_jobs(scenario: &Scenario, jobs: &[Job], mode: Execution) -> Vec<Result<RunOutcome, CliError>> {
    match mode {
        Execution::Serial => jobs.iter().map(|j| run_job(scenario, j)).collect(),
        Execution::Parallel => {
            let workers = std::thread::available_parallelism()
                .map_or(1, |n| n.get())
                .min(jobs.len())
                .max(1);
            let next = AtomicUsize::new(0);
            let slots: Vec<Mutex<Option<Result<RunOutcome, CliError>>>> =
                jobs.iter().map(|_| Mutex::new(None)).collect();
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= jobs.len() {
                            break;
                        }
                        let r = run_job(scenario, &jobs[i]);
                        *slots[i].lock().expect("slot lock") = Some(r);
                    });
                }
            });
            slots
                .into_iter()
                .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
                .collect()
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), format_value)
}

fn fmt_vec(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

fn write_summary(scenario: &Scenario, summary: &SimulationSummary, out_dir: &Path) -> Result<(), CliError> {
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", scenario.name);
    let _ = writeln!(
        text,
        "warmup: {} (rel_tol {}, horizon {})",
        scenario.warmup, scenario.warmup_rel_tol, scenario.warmup_horizon
    );
    for r in &summary.runs {
        let _ = writeln!(
            text,
            "\n[{} c={} start={}] theta0=({}) t_end={} dt={} file={}",
            r.kind.name(),
            r.c,
            r.start_index,
            fmt_vec(&r.theta0),
            r.t_end,
            r.dt,
            r.file
        );
        match &r.outcome {
            Ok(o) => {
                let rep = &o.report;
                let _ = writeln!(text, "  worst_violation      {}", format_value(rep.worst_violation));
                let _ = writeln!(text, "  violation_time       {}", format_value(rep.violation_time));
                let _ = writeln!(text, "  final_h              {}", format_value(rep.final_h));
                let _ = writeln!(text, "  entered_safe_set_at  {}", fmt_opt(rep.entered_safe_set_at));
                let _ = writeln!(text, "  final_objective_gap  {}", format_value(rep.final_objective_gap));
                let _ = writeln!(text, "  final_theta          ({})", fmt_vec(&o.final_theta));
                if let Some(t) = o.gamma_divergence {
                    let _ = writeln!(text, "  riccati divergence at t = {}", format_value(t));
                }
            }
            Err(f) => {
                let _ = writeln!(text, "  FAILED: {}", f.message);
            }
        }
    }
    let path = out_dir.join("summary.txt");
    fs::write(&path, text).map_err(|e| output_err(&path, e))?;

    let header: Vec<String> = [
        "run",
        "c",
        "start",
        "status",
        "t_end",
        "dt",
        "worst_violation",
        "violation_time",
        "final_h",
        "entered_safe_set_at",
        "final_objective_gap",
        "gamma_divergence",
    ]
    .map(String::from)
    .to_vec();
    let path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| output_err(&path, e))?;
    w.write_record(&header).map_err(|e| output_err(&path, e))?;
    for r in &summary.runs {
        let mut rec = vec![
            r.kind.name().to_string(),
            format!("{}", r.c),
            r.start_index.to_string(),
        ];
        match &r.outcome {
            Ok(o) => {
                rec.push("ok".into());
                rec.push(format_value(r.t_end));
                rec.push(format_value(r.dt));
                rec.push(format_value(o.report.worst_violation));
                rec.push(format_value(o.report.violation_time));
                rec.push(format_value(o.report.final_h));
                rec.push(fmt_opt(o.report.entered_safe_set_at));
                rec.push(format_value(o.report.final_objective_gap));
                rec.push(fmt_opt(o.gamma_divergence));
            }
            Err(f) => {
                rec.push(format!("failed: {}", f.message));
                rec.push(format_value(r.t_end));
                rec.push(format_value(r.dt));
                rec.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        w.write_record(&rec).map_err(|e| output_err(&path, e))?;
    }
    w.flush().map_err(|e| output_err(&path, e))
}

/// Warms up and integrates every requested run, writing one CSV per run
/// plus `summary.txt` and `summary.csv`. Failed runs are recorded in the
/// summary; see [`SimulationSummary::exit_code`].
pub fn run_simulate(
    scenario: &Scenario,
    out_dir: &Path,
    mode: Execution,
) -> Result<SimulationSummary, CliError> {
    let jobs = build_jobs(scenario, out_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| output_err(out_dir, e))?;
    let results = run_jobs(scenario, &jobs, mode);
    let runs = jobs
        .iter()
        .zip(results)
        .map(|(job, res)| RunRecord {
            kind: job.kind,
            c: job.cfg.c,
            start_index: job.start_index,
            theta0: job.theta0.clone(),
            file: job
                .file
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            t_end: job.settings.steps() as f64 * job.settings.dt,
            dt: job.settings.dt,
            outcome: res.map_err(|e| RunFailure {
                message: e.to_string(),
                exit_code: e.exit_code(),
            }),
        })
        .collect();
    let summary = SimulationSummary {
        scenario: scenario.name.clone(),
        runs,
    };
    write_summary(scenario, &summary, out_dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSummary {
    pub scenario: String,
    /// `(c, spectral checks passed, max Jacobian FD gap)` per barrier rate.
    pub per_c: Vec<(f64, bool, f64)>,
    pub jacobian_tol: f64,
}

impl AnalysisSummary {
    pub fn passed(&self) -> bool {
        self.per_c
            .iter()
            .all(|&(_, spectral, gap)| spectral && gap <= self.jacobian_tol)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_PROPERTY
        }
    }
}

/// Writes `analysis.txt` and `analysis.csv` (columns `c,quantity,index,value`).
pub fn run_analyze(scenario: &Scenario, out_dir: &Path) -> Result<AnalysisSummary, CliError> {
    let plant = &scenario.plant;
    let n = plant.dimension();
    fs::create_dir_all(out_dir).map_err(|e| output_err(out_dir, e))?;
    let mut text = String::new();
    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut push = |c: f64, q: &str, i: usize, v: f64| {
        rows.push([format!("{c}"), q.to_string(), i.to_string(), format_value(v)]);
    };

    let opt = plant.constrained_minimum();
    let nb = plant
        .nb_eigenvector_condition(NB_CONDITION_TOL)
        .map_err(|e| CliError::Property(e.to_string()))?;
    let _ = writeln!(text, "scenario: {}", scenario.name);
    let _ = writeln!(text, "constrained minimizer: ({})", fmt_vec(&opt.theta_smin));
    let _ = writeln!(text, "constrained minimum:   {}", format_value(opt.j_s_star));
    let _ = writeln!(text, "barrier active:        {}", opt.active);
    let _ = writeln!(text, "h1 eigenvector of H:   {nb}");

    let mut per_c = Vec::new();
    for cfg in scenario.configs() {
        let c = cfg.c;
        for i in 0..n {
            push(c, "theta_smin", i + 1, opt.theta_smin[i]);
        }
        push(c, "j_s_star", 0, opt.j_s_star);
        push(c, "nb_condition", 0, if nb { 1.0 } else { 0.0 });

        let eq = average_equilibrium(plant, &cfg)?;
        let theta_eq = eq.theta(plant);
        let _ = writeln!(text, "\n== c = {c} ==");
        let _ = writeln!(text, "equilibrium theta_tilde: ({})", fmt_vec(&eq.theta_tilde_ae));
        let _ = writeln!(text, "equilibrium theta:       ({})", fmt_vec(&theta_eq));
        let _ = writeln!(text, "G_J:                     ({})", fmt_vec(&eq.g_j_ae));
        let _ = writeln!(text, "eta_J:                   {}", format_value(eq.eta_j_ae));
        let _ = writeln!(text, "G_h:                     ({})", fmt_vec(&eq.g_h_ae));
        let _ = writeln!(text, "eta_h:                   {}", format_value(eq.eta_h_ae));
        let _ = writeln!(text, "gamma:                   {}", format_value(eq.gamma_ae));
        let _ = writeln!(text, "d:                       {}", format_value(eq.d));
        for i in 0..n {
            push(c, "theta_tilde_eq", i + 1, eq.theta_tilde_ae[i]);
            push(c, "g_j_eq", i + 1, eq.g_j_ae[i]);
            push(c, "g_h_eq", i + 1, eq.g_h_ae[i]);
        }
        push(c, "eta_j_eq", 0, eq.eta_j_ae);
        push(c, "eta_h_eq", 0, eq.eta_h_ae);
        push(c, "gamma_eq", 0, eq.gamma_ae);
        push(c, "d", 0, eq.d);
        push(c, "c1", 0, eq.c1);

        let rep = spectral_report(plant, &cfg, &eq);
        let _ = writeln!(text, "alpha:                   {}", format_value(rep.alpha));
        let _ = writeln!(text, "hurwitz:                 {}", rep.hurwitz);
        let _ = writeln!(text, "-omega_f eigenvalue:     {}", rep.omega_f_eigen_found);
        let _ = writeln!(text, "sigma(Z) real positive:  {}", rep.z_real_positive);
        let _ = writeln!(text, "pairing complete:        {}", rep.pairing_complete);
        let _ = writeln!(
            text,
            "max pairing residual:    {}",
            format_value(rep.max_pairing_residual())
        );
        let _ = writeln!(text, "eigenvalues of J11:");
        for (i, l) in rep.j11_eigenvalues.iter().enumerate() {
            let _ = writeln!(text, "  {} {:+.16e}i", format_value(l.re), l.im);
            push(c, "j11_eig_re", i + 1, l.re);
            push(c, "j11_eig_im", i + 1, l.im);
        }
        let _ = writeln!(text, "eigenvalues of Z:");
        for (i, z) in rep.z_eigenvalues.iter().enumerate() {
            let _ = writeln!(text, "  {} {:+.16e}i", format_value(z.re), z.im);
            push(c, "z_eig_re", i + 1, z.re);
            push(c, "z_eig_im", i + 1, z.im);
        }
        let _ = writeln!(text, "eigenvalues of J_r:");
        for (i, l) in rep.reduced_eigenvalues.iter().enumerate() {
            let _ = writeln!(text, "  {} {:+.16e}i", format_value(l.re), l.im);
            push(c, "jr_eig_re", i + 1, l.re);
            push(c, "jr_eig_im", i + 1, l.im);
        }
        for (i, r) in rep.pairing_residuals.iter().enumerate() {
            push(c, "pairing_residual", i + 1, *r);
        }
        push(c, "hurwitz", 0, if rep.hurwitz { 1.0 } else { 0.0 });

        let (gap_j11, gap_jr) = jacobian_errors(plant, &cfg)?;
        let _ = writeln!(text, "J11 vs finite differences: {}", format_value(gap_j11));
        let _ = writeln!(text, "J_r vs finite differences: {}", format_value(gap_jr));
        push(c, "j11_fd_gap", 0, gap_j11);
        push(c, "jr_fd_gap", 0, gap_jr);

        let _ = writeln!(text, "delta sweep (delta, eta_h, J(theta_eq) - J_s*):");
        for (i, (d, e)) in delta_sweep(plant, &cfg, &DELTA_SWEEP)?.into_iter().enumerate() {
            let bias = plant
                .eval_objective(&e.theta(plant))
                .map_err(|e| CliError::Property(e.to_string()))?
                - opt.j_s_star;
            let _ = writeln!(text, "  {d:e} {} {}", format_value(e.eta_h_ae), format_value(bias));
            push(c, "delta_sweep_delta", i + 1, d);
            push(c, "delta_sweep_eta_h", i + 1, e.eta_h_ae);
            push(c, "delta_sweep_objective_bias", i + 1, bias);
        }
        per_c.push((c, rep.passed(), gap_j11.max(gap_jr)));
    }

    let path = out_dir.join("analysis.txt");
    fs::write(&path, text).map_err(|e| output_err(&path, e))?;
    let path = out_dir.join("analysis.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| output_err(&path, e))?;
    w.write_record(["c", "quantity", "index", "value"])
        .map_err(|e| output_err(&path, e))?;
    for r in &rows {
        w.write_record(r).map_err(|e| output_err(&path, e))?;
    }
    w.flush().map_err(|e| output_err(&path, e))?;
    Ok(AnalysisSummary {
        scenario: scenario.name.clone(),
        per_c,
        jacobian_tol: crate::verify::JACOBIAN_TOL,
    })
}

/// Runs the seeded property suites. `trials = 0` is a usage error.
pub fn run_verify(seed: u64, trials: usize) -> Result<VerifyReport, CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    Ok(run_properties(seed, trials))
}
