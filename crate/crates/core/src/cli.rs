//! Command implementations behind the `cluster-tomo` binary.
//!
//! Exit codes: 0 success, 1 invalid input or unreadable/unwritable file,
//! 2 fit did not converge (the report is still written), 3 numerical failure.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::cluster::{self, LeMode};
use crate::error::{deserialize_named, parse_json, Error, Result};
use crate::estimate::{self, FitConfig};
use crate::pauli::{self, BlochVector, PauliIndex};
use crate::process::{self, NoiseChannel, ProcessTensor};
use crate::simdata::{self, NoiseSpec};

/// Tolerance on the smallest Choi eigenvalue for the CP verdict.
pub const CP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    /// Human-readable summary for standard error.
    pub summary: String,
    /// Machine-readable output for standard out, if any.
    pub stdout: Option<String>,
}

impl CommandOutcome {
    fn ok(summary: String, stdout: Option<String>) -> Self {
        CommandOutcome {
            exit_code: 0,
            summary,
            stdout,
        }
    }

    fn failed(err: &Error) -> Self {
        let exit_code = match err {
            Error::Numerical(_) => 3,
            _ => 1,
        };
        CommandOutcome {
            exit_code,
            summary: format!("error: {err}"),
            stdout: None,
        }
    }
}

fn run(f: impl FnOnce() -> Result<CommandOutcome>) -> CommandOutcome {
    f().unwrap_or_else(|e| CommandOutcome::failed(&e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

/// Reads a process tensor file, or the `tensor` member of a fit report.
pub fn load_process(path: &Path) -> Result<ProcessTensor> {
    let text = read(path)?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let tensor = match value.get("tensor") {
        Some(inner) if value.get("phi").is_none() => inner.clone(),
        _ => value,
    };
    let t: ProcessTensor = deserialize_named(tensor)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    t.validate()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    Ok(t)
}

pub fn parse_basis(text: &str) -> Result<PauliIndex> {
    match text.to_ascii_lowercase().as_str() {
        "x" => Ok(PauliIndex::X),
        "y" => Ok(PauliIndex::Y),
        "z" => Ok(PauliIndex::Z),
        _ => Err(Error::invalid(format!("basis must be x, y or z, got {text:?}"))),
    }
}

fn spectrum_line(t: &ProcessTensor) -> String {
    let ev = process::tensor_to_choi(t).eigenvalues();
    let shown: Vec<String> = ev.iter().map(|v| format!("{v:.3e}")).collect();
    format!("Choi spectrum [{}]", shown.join(", "))
}

pub fn cmd_ideal(out: &Path, noise: &[NoiseChannel]) -> CommandOutcome {
    run(|| {
        let mut t = process::ideal_process();
        for channel in noise {
            t = process::compose_noise(&t, *channel)?;
        }
        write(out, &t.to_json()?)?;
        Ok(CommandOutcome::ok(
            format!(
                "wrote {} (TP residual {:.1e}); {}",
                out.display(),
                t.tp_residual(),
                spectrum_line(&t)
            ),
            None,
        ))
    })
}

pub fn cmd_simulate(process_path: &Path, noise: &NoiseSpec, out: &Path) -> CommandOutcome {
    run(|| {
        let t = load_process(process_path)?;
        let data = simdata::simulate_dataset(&t, noise)?;
        write(out, &estimate::dataset_to_json(&data)?)?;
        Ok(CommandOutcome::ok(
            format!(
                "wrote {} records to {} (seed {})",
                data.len(),
                out.display(),
                noise.seed
            ),
            None,
        ))
    })
}

pub fn cmd_fit(data_path: &Path, config_path: Option<&Path>, out: &Path) -> CommandOutcome {
    run(|| {
        let data = estimate::dataset_from_json(&read(data_path)?)
            .map_err(|e| Error::invalid(format!("{}: {e}", data_path.display())))?;
        let config: FitConfig = match config_path {
            Some(p) => parse_json(&read(p)?)
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?,
            None => FitConfig::default(),
        };
        let report = estimate::fit_process(&data, &config)?;
        write(out, &report.to_json()?)?;
        let summary = format!(
            "wrote {}: F = {:.6}, {} iterations, converged = {}, min Choi eigenvalue {:.2e}",
            out.display(),
            report.final_objective,
            report.iterations_used,
            report.converged,
            report.choi_spectrum[0]
        );
        Ok(CommandOutcome {
            exit_code: if report.converged { 0 } else { 2 },
            summary,
            stdout: None,
        })
    })
}

#[derive(Serialize)]
struct Analysis {
    choi_eigenvalues: Vec<f64>,
    min_eigenvalue: f64,
    tp_residual: f64,
    is_cp: bool,
    reference: String,
    fidelity: f64,
}

/// `reference` is `ideal` or a path to another process file.
pub fn cmd_analyze(process_path: &Path, reference: &str) -> CommandOutcome {
    run(|| {
        let t = load_process(process_path)?;
        let r = if reference == "ideal" {
            process::ideal_process()
        } else {
            load_process(Path::new(reference))?
        };
        let diag = process::cp_diagnostics(&process::tensor_to_choi(&t), CP_TOL);
        let analysis = Analysis {
            min_eigenvalue: diag.min_eigenvalue,
            choi_eigenvalues: diag.eigenvalues,
            tp_residual: diag.tp_residual,
            is_cp: diag.is_cp,
            reference: reference.to_string(),
            fidelity: process::process_fidelity(&t, &r),
        };
        let summary = format!(
            "fidelity to {reference}: {:.6}; CP: {} (min eigenvalue {:.2e})",
            analysis.fidelity, analysis.is_cp, analysis.min_eigenvalue
        );
        Ok(CommandOutcome::ok(
            summary,
            Some(serde_json::to_string_pretty(&analysis)?),
        ))
    })
}

#[derive(Clone, Debug)]
pub struct LeArgs {
    pub init: String,
    pub d_max: usize,
    pub basis: PauliIndex,
    pub mode: LeMode,
    pub m: usize,
}

impl Default for LeArgs {
    fn default() -> Self {
        LeArgs {
            init: "-X".into(),
            d_max: 6,
            basis: PauliIndex::X,
            mode: LeMode::Averaged,
            m: 1,
        }
    }
}

pub fn cmd_le(process_path: &Path, args: &LeArgs, out: &Path) -> CommandOutcome {
    run(|| {
        let t = load_process(process_path)?;
        let rho0 = pauli::bloch_state(&BlochVector::from_label(&args.init)?)?;
        let points = cluster::le_curve(&t, &rho0, args.m, args.d_max, args.basis, args.mode)?;
        write(out, &cluster::le_curve_csv(&points))?;
        let (fit, note) = match cluster::fit_le_decay(&points) {
            Ok(f) => {
                let note = format!(
                    "N_nn = {:.4}, zeta_LE = {}, R^2 = {:.6}",
                    f.n_nn,
                    if f.zeta_le.is_infinite() { "inf".to_string() } else { format!("{:.4}", f.zeta_le) },
                    f.r_squared
                );
                (Some(f), note)
            }
            Err(e @ (Error::NoSignal(_) | Error::InvalidInput(_))) => (None, format!("no decay fit: {e}")),
            Err(e) => return Err(e),
        };
        let json = serde_json::json!({ "fit": fit });
        Ok(CommandOutcome::ok(
            format!("wrote {} LE points to {}; {note}", points.len(), out.display()),
            Some(serde_json::to_string_pretty(&json)?),
        ))
    })
}
