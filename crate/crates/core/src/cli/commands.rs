use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::config::{set_path, RunConfig, SCHEMA};
use super::io::{read_trajectory_csv, trajectory_csv, write_atomic};
use super::{CliError, CommonArgs, DecomposeArgs};
use crate::certificate::CertificateBundle;
use crate::mild::{decompose_solution, solve_with_bundle, with_required_horizon, DecompositionReport, Refusal, SolveReport, SolverConfig};
use crate::spectral::SpectralModel;

#[derive(Serialize)]
struct CheckFile<'a> {
    schema: &'a str,
    command: &'a str,
    seed: u64,
    model: &'a SpectralModel,
    bundle: &'a CertificateBundle,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    schema: &'a str,
    command: &'a str,
    seed: u64,
    model: &'a SpectralModel,
    solver: &'a SolverConfig,
    output_modes: usize,
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct DecomposeFile<'a> {
    schema: &'a str,
    command: &'a str,
    trajectory: String,
    reference: Option<String>,
    modes: usize,
    decomposition: &'a DecompositionReport,
}

#[derive(Serialize)]
struct SweepPoint {
    index: usize,
    directory: String,
    parameters: serde_json::Map<String, Value>,
    status: String,
    error: Option<String>,
}

fn read_value(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn load(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_value(read_value(&args.config)?)?;
    apply_overrides(&mut cfg, args)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, args: &CommonArgs) -> Result<(), CliError> {
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.modes {
        if m == 0 {
            return Err(CliError::Usage("--modes must be >= 1".into()));
        }
        cfg.output.modes = Some(m);
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn print_bundle(bundle: &CertificateBundle) {
    for c in &bundle.certificates {
        println!(
            "{:<12} {}  quantity {:.6e}  bound {:.6e}  margin {:.6e}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.quantity,
            c.bound,
            c.margin
        );
    }
}

fn report_failure(bundle: &CertificateBundle) {
    if let Some(bad) = bundle.first_failure() {
        eprintln!(
            "failing certificate {}: quantity {} > bound {}{}",
            bad.name,
            bad.quantity,
            bad.bound,
            bad.witness.as_ref().map(|w| format!(" ({w})")).unwrap_or_default()
        );
    }
}

fn write_check(out: &Path, cfg: &RunConfig, model: &SpectralModel, bundle: &CertificateBundle) -> Result<(), CliError> {
    let file = CheckFile { schema: SCHEMA, command: "check", seed: cfg.seed, model, bundle };
    write_json(&out.join("certificates.json"), &file)
}

pub fn check(args: &CommonArgs) -> Result<u8, CliError> {
    let cfg = load(args)?;
    let model = cfg.model()?;
    let (bundle, _) = cfg.certify(&model)?;
    write_check(&args.out, &cfg, &model, &bundle)?;
    print_bundle(&bundle);
    if bundle.passed {
        Ok(0)
    } else {
        report_failure(&bundle);
        Ok(1)
    }
}

/// Certifies and solves `cfg`, writing its files into `out`.
fn simulate_into(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let (bundle, problem) = cfg.certify(&model)?;
    write_check(out, cfg, &model, &bundle)?;
    let problem = match problem {
        Some(p) if bundle.passed => p,
        _ => {
            report_failure(&bundle);
            let name = bundle.first_failure().map(|c| c.name.clone()).unwrap_or_default();
            return Err(CliError::Refused(format!("certificate {name} failed")));
        }
    };
    let mut solver = cfg.solver_config();
    if cfg.solver.horizon.is_none() {
        solver = with_required_horizon(&problem, &solver)?;
        log::info!("horizon set to {}", solver.horizon);
    }
    let run = solve_with_bundle(&problem, &solver, bundle).map_err(|Refusal { error, bundle }| {
        report_failure(&bundle);
        CliError::from(error)
    })?;
    let modes = cfg.output.modes.unwrap_or(model.mode_count()).min(model.mode_count());
    let csv = trajectory_csv(&model, &run.trajectory, modes)?;
    let csv_path = out.join("trajectory.csv");
    write_atomic(&csv_path, &csv).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let file = ReportFile {
        schema: SCHEMA,
        command: "simulate",
        seed: cfg.seed,
        model: &model,
        solver: &solver,
        output_modes: modes,
        report: &run.report,
    };
    write_json(&out.join("report.json"), &file)?;
    println!(
        "converged in {} iterations, final residual {:.3e}, mild residual {:.3e}",
        run.report.iterations,
        run.report.residual_history.last().copied().unwrap_or(0.0),
        run.report.mild_residual
    );
    Ok(())
}

pub fn simulate(args: &CommonArgs) -> Result<u8, CliError> {
    let cfg = load(args)?;
    simulate_into(&cfg, &args.out)?;
    Ok(0)
}

fn read_csv(path: &Path) -> Result<crate::Trajectory, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(read_trajectory_csv(&text)?)
}

pub fn decompose(args: &DecomposeArgs) -> Result<u8, CliError> {
    let cfg = load(&args.common)?;
    let model = cfg.model()?;
    let traj = read_csv(&args.trajectory)?;
    let reference = args.reference.as_deref().map(read_csv).transpose()?;
    let slots = traj.states[0].len();
    let model = model.leading_slots(slots).map_err(|_| {
        CliError::Usage(format!("trajectory has {slots} slots, the model {}", model.mode_count()))
    })?;
    let report = decompose_solution(&model, &traj, reference.as_ref(), &cfg.decompose_options())?;
    let file = DecomposeFile {
        schema: SCHEMA,
        command: "decompose",
        trajectory: args.trajectory.display().to_string(),
        reference: args.reference.as_ref().map(|p| p.display().to_string()),
        modes: slots,
        decomposition: &report,
    };
    write_json(&args.common.out.join("decomposition.json"), &file)?;
    for (r, m) in report.r_values.iter().zip(&report.residual_means) {
        println!("r = {r:e}: ergodic mean {m:.6e}");
    }
    println!("verdict: {}", serde_json::to_value(report.verdict).unwrap().as_str().unwrap_or(""));
    Ok(0)
}

pub fn sweep(args: &CommonArgs) -> Result<u8, CliError> {
    let base = read_value(&args.config)?;
    let cfg = RunConfig::from_value(base.clone())?;
    if cfg.sweep.is_empty() {
        return Err(CliError::Usage("config has no sweep section".into()));
    }
    let axes: Vec<(&String, &Vec<Value>)> = cfg.sweep.iter().collect();
    if let Some((k, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(CliError::Usage(format!("sweep axis {k:?} has no values")));
    }
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut points = Vec::with_capacity(total);
    let mut refused = false;
    for index in 0..total {
        let mut value = base.clone();
        value.as_object_mut().unwrap().remove("sweep");
        let mut params = serde_json::Map::new();
        let mut rest = index;
        for (key, values) in axes.iter().rev() {
            let v = values[rest % values.len()].clone();
            rest /= values.len();
            set_path(&mut value, key, v.clone())?;
            params.insert((*key).clone(), v);
        }
        let dir: PathBuf = args.out.join(format!("point_{index:03}"));
        let outcome = RunConfig::from_value(value).and_then(|mut c| {
            apply_overrides(&mut c, args)?;
            simulate_into(&c, &dir)
        });
        let (status, error) = match outcome {
            Ok(()) => ("solved".to_string(), None),
            Err(e @ CliError::Io(_)) => return Err(e),
            Err(e) => {
                refused = true;
                ("refused".to_string(), Some(e.to_string()))
            }
        };
        println!("point {index:03}: {status}");
        points.push(SweepPoint { index, directory: format!("point_{index:03}"), parameters: params, status, error });
    }
    write_json(&args.out.join("sweep.json"), &serde_json::json!({ "schema": SCHEMA, "command": "sweep", "points": points }))?;
    Ok(if refused { 1 } else { 0 })
}
