use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat8;
use crate::pauli::BlochVector;
use crate::process::{self, ChoiMatrix, ProcessTensor};

use super::inversion;
use super::objective::{Design, InitialStates};
use super::record::MeasurementRecord;
use super::twisted;

/// Nudge sizes tried per iteration, each a factor `epsilon_shrink` smaller.
const NUDGE_TRIES: usize = 3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    #[default]
    LinearInversionProjected,
    Ideal,
    Given(ProcessTensor),
}

/// Settings for [`fit_process`]. Every field has a default, so a config file
/// only needs the fields it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Converged once `ΔF ≤ tolerance · max(F, objective_floor)` for
    /// `stall_iterations` consecutive steps.
    pub tolerance: f64,
    /// Objective values below this count as an exact fit.
    pub objective_floor: f64,
    pub stall_iterations: usize,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    pub epsilon_initial: f64,
    /// Applied to ε when no nudged step is accepted; also the ratio between
    /// successive nudge sizes tried within one iteration.
    pub epsilon_shrink: f64,
    /// Applied to ε when the nudged step is accepted at full size.
    pub epsilon_grow: f64,
    /// Twisted steps between closed-form updates of the initializations.
    pub s_prime_interval: usize,
    /// Fraction of the positivity limit the step length may reach.
    pub q_fraction: f64,
    pub line_search_tolerance: f64,
    /// Add a Polak–Ribière multiple of the previous direction to the
    /// twisted direction. `false` gives plain twisted steps.
    pub conjugate: bool,
    /// Recorded in the report. The fit itself draws no random numbers.
    pub seed: u64,
    pub init_strategy: InitStrategy,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 100_000,
            tolerance: 1e-10,
            objective_floor: 1e-6,
            stall_iterations: 10,
            epsilon_min: 1e-10,
            epsilon_max: 1e-4,
            epsilon_initial: 1e-6,
            epsilon_shrink: 0.5,
            epsilon_grow: 2.0,
            s_prime_interval: 5,
            q_fraction: 0.99,
            line_search_tolerance: 1e-10,
            conjugate: true,
            seed: 0,
            init_strategy: InitStrategy::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("fit config: {msg}")));
        if self.max_iterations == 0 || self.stall_iterations == 0 || self.s_prime_interval == 0 {
            return bad("iteration counts must be positive");
        }
        if !(self.tolerance >= 0.0) || !(self.objective_floor > 0.0) {
            return bad("tolerance must be non-negative and objective_floor positive");
        }
        if !(0.0 < self.epsilon_min
            && self.epsilon_min <= self.epsilon_initial
            && self.epsilon_initial <= self.epsilon_max
            && self.epsilon_max < 1.0)
        {
            return bad("need 0 < epsilon_min <= epsilon_initial <= epsilon_max < 1");
        }
        if !(0.0 < self.epsilon_shrink && self.epsilon_shrink < 1.0 && self.epsilon_grow > 1.0) {
            return bad("need 0 < epsilon_shrink < 1 < epsilon_grow");
        }
        if !(0.0 < self.q_fraction && self.q_fraction < 1.0) {
            return bad("q_fraction must lie in (0, 1)");
        }
        if !(self.line_search_tolerance > 0.0) {
            return bad("line_search_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tensor: ProcessTensor,
    pub s_prime: InitialStates,
    pub objective_trace: Vec<(usize, f64)>,
    pub final_objective: f64,
    pub choi_spectrum: Vec<f64>,
    pub tp_residual: f64,
    pub converged: bool,
    pub iterations_used: usize,
    /// Worst relative violation of the multiplier condition over all steps.
    pub max_multiplier_residual: f64,
    pub seed: u64,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn rank(rows: &[[f64; 4]]) -> usize {
    numeric_rank(DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]))
}

fn numeric_rank(m: DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&v| v > 1e-8 * top).count()
}

pub(crate) fn check_identifiable(design: &Design) -> Result<()> {
    let inits: Vec<[f64; 4]> = design.nominal.iter().map(|s| s.0).collect();
    let r = rank(&inits);
    if r < 4 {
        return Err(Error::Identifiability(format!(
            "initializations span only {r} of 4 Pauli directions"
        )));
    }
    let projections: Vec<[f64; 4]> = design.rows.iter().map(|row| row.p).collect();
    let r = rank(&projections);
    if r < 4 {
        return Err(Error::Identifiability(format!(
            "photon projections span only {r} of 4 Pauli directions"
        )));
    }
    let pairs = DMatrix::from_fn(design.rows.len(), 16, |i, j| {
        let row = &design.rows[i];
        design.nominal[row.init].0[j / 4] * row.p[j % 4]
    });
    let r = numeric_rank(pairs);
    if r < 16 {
        return Err(Error::Identifiability(format!(
            "(initialization, projection) pairs span only {r} of 16 directions"
        )));
    }
    Ok(())
}

fn initial_choi(data: &[MeasurementRecord], strategy: &InitStrategy) -> Result<Mat8> {
    let choi = match strategy {
        InitStrategy::LinearInversionProjected => {
            inversion::project_to_physical(&inversion::linear_inversion(data)?)?
        }
        InitStrategy::Ideal => process::tensor_to_choi(&process::ideal_process()),
        InitStrategy::Given(t) => {
            t.validate()?;
            inversion::project_to_physical(t)?
        }
    };
    Ok(*choi.matrix())
}

/// Constrained maximum-likelihood fit of the process tensor, alternating
/// twisted gradient steps on the Choi matrix with closed-form updates of
/// the initializations.
///
/// Each iteration takes a plain step from `A` and tries steps from the nudged
/// point `(1 − ε) A + ε I/2`. The nudged step wins if it keeps at least half
/// of the plain step's decrease. The objective never increases.
pub fn fit_process(data: &[MeasurementRecord], config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let design = Design::new(data)?;
    check_identifiable(&design)?;

    let mut eps = config.epsilon_initial;
    let mut a = twisted::nudge(&initial_choi(data, &config.init_strategy)?, eps);
    let mut s: Vec<BlochVector> = design.nominal.clone();
    let mut f = design.objective(&process::flat_from_choi(&a), &s);
    if !f.is_finite() {
        return Err(Error::Numerical("initial objective is not finite".into()));
    }

    let mut trace = Vec::new();
    let mut quiet = 0;
    let mut converged = false;
    let mut max_residual: f64 = 0.0;
    let mut iterations = 0;
    let mut momentum = None;

    for it in 1..=config.max_iterations {
        iterations = it;
        let prev = if config.conjugate { momentum.as_ref() } else { None };
        let (plain, plain_momentum) = twisted::step(&design, &a, &s, config, prev)?;
        max_residual = max_residual.max(plain.multiplier_residual);
        let (mut next, mut f_next, mut carried) = if plain.objective <= f {
            (*plain.choi.matrix(), plain.objective, plain_momentum)
        } else {
            (a, f, None)
        };

        // a step from the nudged point is preferred while it keeps at least
        // half of the plain step's decrease
        let budget = f - 0.5 * (f - f_next);
        let mut try_eps = eps;
        let mut nudged = false;
        for attempt in 0..NUDGE_TRIES {
            if try_eps < config.epsilon_min {
                break;
            }
            let (step, m) = twisted::step(&design, &twisted::nudge(&a, try_eps), &s, config, prev)?;
            max_residual = max_residual.max(step.multiplier_residual);
            if step.objective <= budget {
                next = *step.choi.matrix();
                f_next = step.objective;
                carried = m;
                nudged = true;
                eps = if attempt == 0 { eps * config.epsilon_grow } else { try_eps };
                break;
            }
            try_eps *= config.epsilon_shrink;
        }
        if !nudged {
            eps *= config.epsilon_shrink;
        }
        momentum = carried;

        if it % config.s_prime_interval == 0 {
            let phi = process::flat_from_choi(&next);
            match design.best_initializations(&phi) {
                Ok(s_new) => {
                    let f_s = design.objective(&phi, &s_new);
                    if f_s <= f_next {
                        s = s_new;
                        f_next = f_s;
                        momentum = None;
                    }
                }
                Err(e) => log::warn!("initialization update skipped: {e}"),
            }
        }

        let decrease = f - f_next;
        a = next;
        trace.push((it, f_next));
        let relative = decrease / f.max(config.objective_floor);
        f = f_next;

        eps = eps.clamp(config.epsilon_min, config.epsilon_max);

        if relative <= config.tolerance {
            quiet += 1;
            if quiet >= config.stall_iterations {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if !converged {
        log::warn!("fit did not converge in {} iterations", config.max_iterations);
    }

    let choi = ChoiMatrix::new(twisted::tp_correct(&a))?;
    let tensor = process::choi_to_tensor(&choi)?;
    let final_objective = design.objective(&tensor.flat(), &s);
    Ok(FitReport {
        tp_residual: tensor.tp_residual(),
        choi_spectrum: choi.eigenvalues().to_vec(),
        tensor,
        s_prime: design.unalign(&s),
        objective_trace: trace,
        final_objective,
        converged,
        iterations_used: iterations,
        max_multiplier_residual: max_residual,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{compose_noise, ideal_process, process_fidelity, NoiseChannel};
    use crate::simdata::{simulate_dataset, NoiseSpec};

    #[test]
    fn noiseless_ideal_fit_matches_inversion() {
        let t = ideal_process();
        let data = simulate_dataset(&t, &NoiseSpec::noiseless()).unwrap();
        let report = fit_process(&data, &FitConfig::default()).unwrap();
        let lin = inversion::linear_inversion(&data).unwrap();
        eprintln!(
            "iters {} converged {} F {:e} diff {:e} fid {}",
            report.iterations_used,
            report.converged,
            report.final_objective,
            report.tensor.max_abs_diff(&lin),
            process_fidelity(&report.tensor, &t)
        );
        assert!(report.tensor.max_abs_diff(&lin) < 1e-6);
        assert!(process_fidelity(&report.tensor, &t) >= 1.0 - 1e-8);
    }

    #[test]
    fn noisy_fit_is_monotone_and_physical() {
        let truth = compose_noise(&ideal_process(), NoiseChannel::Depolarize(0.1)).unwrap();
        let data = simulate_dataset(&truth, &NoiseSpec { seed: 4, ..NoiseSpec::default() }).unwrap();
        let report = fit_process(&data, &FitConfig::default()).unwrap();
        eprintln!(
            "iters {} converged {} F {} fid {} min eig {:e}",
            report.iterations_used,
            report.converged,
            report.final_objective,
            process_fidelity(&report.tensor, &truth),
            report.choi_spectrum[0]
        );
        assert!(report.objective_trace.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(report.choi_spectrum[0] >= -1e-9);
        assert!(report.tp_residual < 1e-9);
    }
}
