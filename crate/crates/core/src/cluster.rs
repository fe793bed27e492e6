//! Entanglement analysis of the photon string grown by repeating a process.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, c, C64, I, ZERO};
use crate::pauli::{self, DensityMatrix, PauliIndex};
use crate::process::{self, ProcessTensor};

/// Longest spin+N photon string the streaming LE computation accepts.
pub const MAX_LE_STRING: usize = 12;
/// Largest distance accepted by [`le_curve`].
pub const MAX_LE_CURVE_DISTANCE: usize = 8;
const POSITIVE_FLOOR: f64 = 1e-12;

pub fn negativity(rho: &DensityMatrix, partition: &[usize]) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "negativity needs a normalized state, trace is {tr}"
        )));
    }
    let pt = pauli::partial_transpose(rho, partition)?;
    Ok(linalg::eigenvalues(&pt)
        .into_iter()
        .filter(|&l| l < 0.0)
        .fold(0.0, |acc, l| acc - l))
}

/// `⟨ψ|ρ|ψ⟩` for a target vector, normalized before use.
pub fn state_fidelity(rho: &DensityMatrix, target: &[C64]) -> Result<f64> {
    if target.len() != rho.dim() {
        return Err(Error::invalid(format!(
            "target has dimension {}, state has {}",
            target.len(),
            rho.dim()
        )));
    }
    let norm: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    if norm <= 0.0 {
        return Err(Error::invalid("target vector is zero"));
    }
    let psi = nalgebra::DVector::from_column_slice(target);
    let val = (psi.adjoint() * rho.matrix() * &psi)[(0, 0)].re / norm;
    Ok(val)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeMode {
    /// Probability-weighted mean over every projection outcome.
    #[default]
    Averaged,
    /// Only the branch where every projected qubit gave `+`.
    FixedOutcome,
}

impl fmt::Display for LeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LeMode::Averaged => "averaged",
            LeMode::FixedOutcome => "fixed-outcome",
        })
    }
}

impl FromStr for LeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "averaged" => Ok(LeMode::Averaged),
            "fixed-outcome" | "fixed" => Ok(LeMode::FixedOutcome),
            _ => Err(Error::invalid(format!("unknown LE mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LePoint {
    pub d: usize,
    pub negativity: f64,
    pub branch_count: usize,
    pub mode: LeMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
}

/// One projection branch of an LE computation.
#[derive(Clone, Debug)]
pub struct LeBranch {
    /// Outcome signs in projection order (photons by emission, spin last).
    pub outcomes: Vec<bool>,
    pub probability: f64,
    pub negativity: f64,
}

fn basis_vector(axis: PauliIndex, positive: bool) -> Result<[C64; 2]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if positive { 1.0 } else { -1.0 };
    Ok(match axis {
        PauliIndex::X => [c(h), c(sign * h)],
        PauliIndex::Y => [c(h), I * (sign * h)],
        PauliIndex::Z if positive => [c(1.0), ZERO],
        PauliIndex::Z => [ZERO, c(1.0)],
        PauliIndex::O => return Err(Error::invalid("projection basis must be X, Y or Z")),
    })
}

/// `⟨π|_last ρ |π⟩_last`: projects the last qubit and removes it.
fn project_last(m: &DMatrix<C64>, pi: &[C64; 2]) -> DMatrix<C64> {
    let half = m.nrows() / 2;
    DMatrix::from_fn(half, half, |x, y| {
        let mut acc = ZERO;
        for f in 0..2 {
            for g in 0..2 {
                acc += pi[f].conj() * m[(2 * x + f, 2 * y + g)] * pi[g];
            }
        }
        acc
    })
}

/// `⟨π|_0 ρ |π⟩_0`: projects the first qubit and removes it.
fn project_first(m: &DMatrix<C64>, pi: &[C64; 2]) -> DMatrix<C64> {
    let half = m.nrows() / 2;
    DMatrix::from_fn(half, half, |x, y| {
        let mut acc = ZERO;
        for a in 0..2 {
            for b in 0..2 {
                acc += pi[a].conj() * m[(a * half + x, b * half + y)] * pi[b];
            }
        }
        acc
    })
}

fn check_le_args(m: usize, d: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid("LE distance must be at least 1"));
    }
    if m < 1 {
        return Err(Error::invalid("LE qubit index m counts photons from 1"));
    }
    if m + d > MAX_LE_STRING {
        return Err(Error::invalid(format!(
            "photon m + d = {} exceeds the string cap of {MAX_LE_STRING}",
            m + d
        )));
    }
    Ok(())
}

/// Enumerates projection branches for the pair of photons `(m, m + d)`.
///
/// The string is grown for `m + d` cycles from `rho0`. Every photon other
/// than `m` and `m + d` is projected onto `±basis` right after emission, and
/// the spin is projected at the end, so the live register never holds more
/// than spin + three photons. With `plus_only` only the all-`+` branch is
/// followed.
pub fn le_branches(
    t: &ProcessTensor,
    rho0: &DensityMatrix,
    m: usize,
    d: usize,
    basis: PauliIndex,
    plus_only: bool,
) -> Result<Vec<LeBranch>> {
    check_le_args(m, d)?;
    if rho0.n_qubits() != 1 {
        return Err(Error::invalid("initial state must be a one-qubit state"));
    }
    let projectors = [basis_vector(basis, true)?, basis_vector(basis, false)?];
    let blocks = process::transfer_blocks(t);
    let last = m + d;

    let mut out = Vec::new();
    // (unnormalized register, next photon to emit, outcomes so far)
    let mut stack = vec![(rho0.matrix().clone(), 1usize, Vec::new())];
    while let Some((state, photon, outcomes)) = stack.pop() {
        if photon > last {
            let signs: &[bool] = if plus_only { &[true] } else { &[true, false] };
            for &sign in signs.iter().rev() {
                let pair = project_first(&state, &projectors[usize::from(!sign)]);
                let prob = linalg::trace(&pair).re;
                let mut branch_outcomes = outcomes.clone();
                branch_outcomes.push(sign);
                let neg = if prob > 0.0 {
                    let rho = DensityMatrix::from_hermitian(pair.scale(1.0 / prob));
                    negativity(&rho, &[0])?
                } else {
                    0.0
                };
                out.push(LeBranch {
                    outcomes: branch_outcomes,
                    probability: prob,
                    negativity: neg,
                });
            }
            continue;
        }
        let grown = process::cycle_on_spin(&blocks, &state);
        if photon == m || photon == last {
            stack.push((grown, photon + 1, outcomes));
            continue;
        }
        let signs: &[bool] = if plus_only { &[true] } else { &[true, false] };
        // push `-` first so `+` branches are visited first
        for &sign in signs.iter().rev() {
            let projected = project_last(&grown, &projectors[usize::from(!sign)]);
            let mut next = outcomes.clone();
            next.push(sign);
            stack.push((projected, photon + 1, next));
        }
    }
    Ok(out)
}

/// Negativity between photons `m` and `m + d` after projecting the rest of
/// the string onto `±basis`.
pub fn localizable_entanglement(
    t: &ProcessTensor,
    rho0: &DensityMatrix,
    m: usize,
    d: usize,
    basis: PauliIndex,
    mode: LeMode,
) -> Result<LePoint> {
    let branches = le_branches(t, rho0, m, d, basis, mode == LeMode::FixedOutcome)?;
    let negativity = match mode {
        LeMode::Averaged => {
            let total: f64 = branches.iter().map(|b| b.probability).sum();
            if (total - 1.0).abs() > 1e-8 {
                log::warn!("LE branch probabilities sum to {total}");
            }
            branches
                .iter()
                .filter(|b| b.probability > 0.0)
                .fold(0.0, |acc, b| acc + b.probability * b.negativity)
        }
        LeMode::FixedOutcome => branches[0].negativity,
    };
    Ok(LePoint {
        d,
        negativity,
        branch_count: branches.len(),
        mode,
        uncertainty: None,
    })
}

/// LE points for `d = 1..=d_max` measured from photon `m`.
pub fn le_curve(
    t: &ProcessTensor,
    rho0: &DensityMatrix,
    m: usize,
    d_max: usize,
    basis: PauliIndex,
    mode: LeMode,
) -> Result<Vec<LePoint>> {
    if !(1..=MAX_LE_CURVE_DISTANCE).contains(&d_max) {
        return Err(Error::invalid(format!(
            "d_max = {d_max} must lie in 1..={MAX_LE_CURVE_DISTANCE}"
        )));
    }
    (1..=d_max)
        .map(|d| localizable_entanglement(t, rho0, m, d, basis, mode))
        .collect()
}

fn serialize_length<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn deserialize_length<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Length {
        Number(f64),
        Text(String),
    }
    match Length::deserialize(d)? {
        Length::Number(v) => Ok(v),
        Length::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Length::Text(t) => Err(serde::de::Error::custom(format!("bad decay length {t:?}"))),
    }
}

/// Fit of `N(d) = N_nn exp(−(d−1)/ζ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeDecayFit {
    pub n_nn: f64,
    #[serde(serialize_with = "serialize_length", deserialize_with = "deserialize_length")]
    pub zeta_le: f64,
    pub r_squared: f64,
    pub points_used: Vec<LePoint>,
}

/// Weighted least squares of `ln N` against `d − 1` over the positive points.
/// A non-negative slope reports an infinite decay length.
pub fn fit_le_decay(points: &[LePoint]) -> Result<LeDecayFit> {
    let used: Vec<LePoint> = points
        .iter()
        .filter(|p| p.negativity > POSITIVE_FLOOR)
        .cloned()
        .collect();
    if used.is_empty() {
        return Err(Error::NoSignal("every LE point is zero".into()));
    }
    if used.len() < 2 {
        return Err(Error::invalid("decay fit needs at least two positive points"));
    }
    let weighted = used.iter().all(|p| p.uncertainty.is_some_and(|u| u > 0.0));
    let rows: Vec<(f64, f64, f64)> = used
        .iter()
        .map(|p| {
            let w = if weighted {
                let rel = p.uncertainty.unwrap() / p.negativity;
                1.0 / (rel * rel)
            } else {
                1.0
            };
            ((p.d as f64) - 1.0, p.negativity.ln(), w)
        })
        .collect();
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let mx = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let my = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - mx).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - mx) * (r.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("decay fit needs at least two distinct distances"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = rows.iter().map(|r| r.2 * (r.1 - my).powi(2)).sum();
    let ss_res: f64 = rows
        .iter()
        .map(|r| r.2 * (r.1 - intercept - slope * r.0).powi(2))
        .sum();
    // Rounding-level spread in ln N counts as a flat, perfectly fitted curve.
    let r_squared = if ss_tot <= 1e-20 * sw {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    let zeta_le = if slope < -1e-12 {
        -1.0 / slope
    } else {
        f64::INFINITY
    };
    Ok(LeDecayFit {
        n_nn: intercept.exp(),
        zeta_le,
        r_squared,
        points_used: used,
    })
}

/// Fraction of trials in which Gaussian noise of width `noise_sigma` on each
/// eigenvalue of the ideal (rank-1) Choi matrix produces a negative eigenvalue.
pub fn cp_violation_probability(noise_sigma: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(noise_sigma > 0.0) || !noise_sigma.is_finite() {
        return Err(Error::invalid(format!(
            "noise sigma must be positive, got {noise_sigma}"
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let spectrum = process::tensor_to_choi(&process::ideal_process()).eigenvalues();
    let noise = Normal::new(0.0, noise_sigma).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..trials {
        let mut negative = false;
        for &ev in &spectrum {
            // draw every sample so the stream does not depend on outcomes
            if ev + noise.sample(&mut rng) < 0.0 {
                negative = true;
            }
        }
        violations += usize::from(negative);
    }
    Ok(violations as f64 / trials as f64)
}

pub fn le_curve_csv(points: &[LePoint]) -> String {
    let mut out = String::from("d,negativity,branch_count,mode\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.d, p.negativity, p.branch_count, p.mode));
    }
    out
}

pub fn parse_le_csv(text: &str) -> Result<Vec<LePoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("d,negativity,branch_count,mode") => {}
        other => return Err(Error::invalid(format!("unexpected LE CSV header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::invalid(format!("bad LE CSV row {line:?}")));
            }
            let bad = |what: &str| Error::invalid(format!("bad {what} in LE CSV row {line:?}"));
            Ok(LePoint {
                d: fields[0].parse().map_err(|_| bad("d"))?,
                negativity: fields[1].parse().map_err(|_| bad("negativity"))?,
                branch_count: fields[2].parse().map_err(|_| bad("branch_count"))?,
                mode: fields[3].parse()?,
                uncertainty: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::BlochVector;
    use crate::process::{compose_noise, ideal_process, NoiseChannel};

    fn bell() -> DensityMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::pure(&[c(h), ZERO, ZERO, c(h)]).unwrap()
    }

    fn werner(p: f64) -> DensityMatrix {
        DensityMatrix::new(
            bell().matrix().scale(p) + DensityMatrix::maximally_mixed(2).matrix().scale(1.0 - p),
        )
        .unwrap()
    }

    fn minus_x() -> DensityMatrix {
        pauli::bloch_state(&BlochVector::new(-1.0, 0.0, 0.0)).unwrap()
    }

    fn point(d: usize, n: f64) -> LePoint {
        LePoint {
            d,
            negativity: n,
            branch_count: 1,
            mode: LeMode::Averaged,
            uncertainty: None,
        }
    }

    #[test]
    fn negativity_of_bell_and_products() {
        assert!((negativity(&bell(), &[0]).unwrap() - 0.5).abs() < 1e-12);
        let a = pauli::bloch_state(&BlochVector::new(0.3, 0.2, 0.1)).unwrap();
        let b = pauli::bloch_state(&BlochVector::new(0.0, -0.7, 0.7)).unwrap();
        assert!(negativity(&a.kron(&b), &[0]).unwrap().abs() < 1e-12);
        // classically correlated mixture ½|00⟩⟨00| + ½|11⟩⟨11|
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = c(0.5);
        m[(3, 3)] = c(0.5);
        assert!(negativity(&DensityMatrix::new(m).unwrap(), &[1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn werner_negativity_matches_closed_form() {
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            let expect = ((3.0 * p - 1.0) / 4.0).max(0.0);
            assert!((negativity(&werner(p), &[0]).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn negativity_rejects_unnormalized() {
        let rho = bell().scaled(2.0);
        assert!(matches!(negativity(&rho, &[0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn state_fidelity_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let target = [c(h), ZERO, ZERO, c(h)];
        assert!((state_fidelity(&bell(), &target).unwrap() - 1.0).abs() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((state_fidelity(&mixed, &target).unwrap() - 0.25).abs() < 1e-14);
        assert!(state_fidelity(&mixed, &[c(1.0), ZERO]).is_err());
    }

    #[test]
    fn ideal_le_is_half_in_both_modes() {
        let t = ideal_process();
        for d in 1..=6 {
            let avg = localizable_entanglement(&t, &minus_x(), 1, d, PauliIndex::X, LeMode::Averaged)
                .unwrap();
            let fixed =
                localizable_entanglement(&t, &minus_x(), 1, d, PauliIndex::X, LeMode::FixedOutcome)
                    .unwrap();
            assert!((avg.negativity - 0.5).abs() < 1e-10, "d={d}: {}", avg.negativity);
            assert!((avg.negativity - fixed.negativity).abs() < 1e-10);
            assert_eq!(avg.branch_count, 1 << d);
            assert_eq!(fixed.branch_count, 1);
        }
    }

    #[test]
    fn branch_probabilities_sum_to_one() {
        let t = compose_noise(&ideal_process(), NoiseChannel::Depolarize(0.1)).unwrap();
        for (m, d) in [(1, 1), (2, 3), (3, 5)] {
            let branches = le_branches(&t, &minus_x(), m, d, PauliIndex::X, false).unwrap();
            let total: f64 = branches.iter().map(|b| b.probability).sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert_eq!(branches.len(), 1 << (m + d - 1));
        }
    }

    #[test]
    fn depolarizing_process_has_no_le() {
        let t = ProcessTensor::fully_depolarizing();
        for d in 1..=4 {
            let p = localizable_entanglement(&t, &minus_x(), 1, d, PauliIndex::X, LeMode::Averaged)
                .unwrap();
            assert!(p.negativity.abs() < 1e-12);
        }
    }

    #[test]
    fn depolarized_le_decreases() {
        let t = compose_noise(&ideal_process(), NoiseChannel::Depolarize(0.1)).unwrap();
        let curve = le_curve(&t, &minus_x(), 1, 6, PauliIndex::X, LeMode::Averaged).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].negativity < w[0].negativity);
        }
    }

    #[test]
    fn le_argument_errors() {
        let t = ideal_process();
        assert!(localizable_entanglement(&t, &minus_x(), 1, 0, PauliIndex::X, LeMode::Averaged).is_err());
        assert!(localizable_entanglement(&t, &minus_x(), 6, 7, PauliIndex::X, LeMode::Averaged).is_err());
        assert!(localizable_entanglement(&t, &minus_x(), 1, 1, PauliIndex::O, LeMode::Averaged).is_err());
        assert!(le_curve(&t, &minus_x(), 1, 9, PauliIndex::X, LeMode::Averaged).is_err());
    }

    #[test]
    fn curve_with_single_distance() {
        let t = compose_noise(&ideal_process(), NoiseChannel::Depolarize(0.05)).unwrap();
        let curve = le_curve(&t, &minus_x(), 1, 1, PauliIndex::X, LeMode::Averaged).unwrap();
        let nn = localizable_entanglement(&t, &minus_x(), 1, 1, PauliIndex::X, LeMode::Averaged)
            .unwrap();
        assert_eq!(curve, vec![nn]);
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let pts: Vec<LePoint> = (1..=6)
            .map(|d| point(d, 0.27 * (-((d - 1) as f64) / 2.0).exp()))
            .collect();
        let fit = fit_le_decay(&pts).unwrap();
        assert!((fit.n_nn - 0.27).abs() / 0.27 < 1e-9);
        assert!((fit.zeta_le - 2.0).abs() / 2.0 < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_constant_is_infinite() {
        let pts: Vec<LePoint> = (1..=5).map(|d| point(d, 0.5)).collect();
        let fit = fit_le_decay(&pts).unwrap();
        assert!(fit.zeta_le.is_infinite());
        assert!((fit.n_nn - 0.5).abs() < 1e-12);
        let json = serde_json::to_string(&fit).unwrap();
        assert!(json.contains("\"zeta_le\":\"inf\""));
        let back: LeDecayFit = serde_json::from_str(&json).unwrap();
        assert!(back.zeta_le.is_infinite());
    }

    #[test]
    fn fit_two_points() {
        let fit = fit_le_decay(&[point(1, 0.4), point(2, 0.2)]).unwrap();
        assert!((fit.zeta_le - 1.0 / std::f64::consts::LN_2).abs() < 1e-12);
        assert!((fit.n_nn - 0.4).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_le_decay(&[point(1, 0.0), point(2, 0.0)]),
            Err(Error::NoSignal(_))
        ));
        assert!(fit_le_decay(&[point(1, 0.3), point(2, 0.0)]).is_err());
    }

    #[test]
    fn fit_uses_uncertainty_weights() {
        // an outlier with a huge error bar barely moves the fit
        let mut pts: Vec<LePoint> = (1..=5)
            .map(|d| LePoint {
                uncertainty: Some(1e-3),
                ..point(d, 0.4 * (-((d - 1) as f64)).exp())
            })
            .collect();
        pts[4].negativity *= 3.0;
        pts[4].uncertainty = Some(1e3);
        let fit = fit_le_decay(&pts).unwrap();
        assert!((fit.zeta_le - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cp_violation_is_reproducible() {
        let a = cp_violation_probability(1e-3, 1, 7).unwrap();
        let b = cp_violation_probability(1e-3, 1, 7).unwrap();
        assert_eq!(a, b);
        assert!(a == 0.0 || a == 1.0);
        assert!(cp_violation_probability(0.0, 10, 1).is_err());
        assert!(cp_violation_probability(-1.0, 10, 1).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let t = compose_noise(&ideal_process(), NoiseChannel::Depolarize(0.1)).unwrap();
        let curve = le_curve(&t, &minus_x(), 1, 4, PauliIndex::X, LeMode::Averaged).unwrap();
        let text = le_curve_csv(&curve);
        assert!(text.starts_with("d,negativity,branch_count,mode\n"));
        assert_eq!(parse_le_csv(&text).unwrap(), curve);
    }
}
