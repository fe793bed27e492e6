//! The weighted least-squares objective with nuisance initializations.
//!
//! ```text
//! F(φ, s′) = Σ_{records, ν} [Σ φ^μ_{νλ} s′_μ p_λ − R S_ν]² / Δ²_{psν}
//!          + Σ_{inits} Σ_i ((s′_i − s_i) / Δs_i)²
//! ```
//!
//! with `S_O = 1`, so the `ν = O` term is the rate equation.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::Mat8;
use crate::pauli::BlochVector;
use crate::process::{self, ChoiMatrix, ProcessTensor};

use super::record::MeasurementRecord;

/// Fitted initialization four-vectors keyed by `init_label`.
pub type InitialStates = BTreeMap<String, BlochVector>;

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub init: usize,
    pub p: [f64; 4],
    pub target: [f64; 4],
    pub weight: [f64; 4],
}

/// Dataset preprocessed into weights and initialization slots.
#[derive(Clone, Debug)]
pub(crate) struct Design {
    pub labels: Vec<String>,
    pub nominal: Vec<BlochVector>,
    pub prior_weight: Vec<[f64; 3]>,
    pub rows: Vec<Row>,
}

impl Design {
    pub fn new(data: &[MeasurementRecord]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let mut slots: BTreeMap<&str, (BlochVector, [f64; 3])> = BTreeMap::new();
        for r in data {
            r.validate()?;
            match slots.get(r.init_label.as_str()) {
                None => {
                    slots.insert(&r.init_label, (r.s, r.ds));
                }
                Some((s, ds)) if *s == r.s && *ds == r.ds => {}
                Some(_) => {
                    return Err(Error::invalid(format!(
                        "records labelled {:?} disagree on s or ds",
                        r.init_label
                    )))
                }
            }
        }
        let labels: Vec<String> = slots.keys().map(|k| k.to_string()).collect();
        let nominal = slots.values().map(|v| v.0).collect();
        let prior_weight = slots
            .values()
            .map(|(_, ds)| [1.0 / (ds[0] * ds[0]), 1.0 / (ds[1] * ds[1]), 1.0 / (ds[2] * ds[2])])
            .collect();
        let rows = data
            .iter()
            .map(|r| {
                let init = labels.iter().position(|l| *l == r.init_label).unwrap();
                let d = r.deltas();
                Row {
                    init,
                    p: r.p.0,
                    target: r.targets(),
                    weight: [
                        1.0 / (d[0] * d[0]),
                        1.0 / (d[1] * d[1]),
                        1.0 / (d[2] * d[2]),
                        1.0 / (d[3] * d[3]),
                    ],
                }
            })
            .collect();
        Ok(Design {
            labels,
            nominal,
            prior_weight,
            rows,
        })
    }

    /// Orders `s_prime` by label; every label must be present.
    pub fn align(&self, s_prime: &InitialStates) -> Result<Vec<BlochVector>> {
        self.labels
            .iter()
            .map(|l| {
                s_prime
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("no initialization given for label {l:?}")))
            })
            .collect()
    }

    pub fn unalign(&self, s: &[BlochVector]) -> InitialStates {
        self.labels.iter().cloned().zip(s.iter().copied()).collect()
    }

    pub fn nominal_states(&self) -> InitialStates {
        self.unalign(&self.nominal)
    }

    /// Model values `Σ φ^μ_{νλ} s_μ p_λ` for one row.
    #[inline]
    pub fn model(phi: &[f64; 64], s: &[f64; 4], p: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for mu in 0..4 {
            if s[mu] == 0.0 {
                continue;
            }
            for (nu, dst) in out.iter_mut().enumerate() {
                let base = 16 * mu + 4 * nu;
                let inner = phi[base] * p[0]
                    + phi[base + 1] * p[1]
                    + phi[base + 2] * p[2]
                    + phi[base + 3] * p[3];
                *dst += s[mu] * inner;
            }
        }
        out
    }

    pub fn data_term(&self, phi: &[f64; 64], s: &[BlochVector]) -> f64 {
        self.rows
            .iter()
            .map(|row| {
                let m = Self::model(phi, &s[row.init].0, &row.p);
                (0..4)
                    .map(|nu| row.weight[nu] * (m[nu] - row.target[nu]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn prior_term(&self, s: &[BlochVector]) -> f64 {
        s.iter()
            .zip(&self.nominal)
            .zip(&self.prior_weight)
            .map(|((sp, sn), w)| {
                (0..3)
                    .map(|i| w[i] * (sp.0[i + 1] - sn.0[i + 1]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn objective(&self, phi: &[f64; 64], s: &[BlochVector]) -> f64 {
        self.data_term(phi, s) + self.prior_term(s)
    }

    /// `∂F/∂φ_α` in the flat `16μ + 4ν + λ` layout.
    pub fn tensor_gradient(&self, phi: &[f64; 64], s: &[BlochVector]) -> [f64; 64] {
        let mut g = [0.0; 64];
        for row in &self.rows {
            let sv = &s[row.init].0;
            let m = Self::model(phi, sv, &row.p);
            for nu in 0..4 {
                let coef = 2.0 * row.weight[nu] * (m[nu] - row.target[nu]);
                if coef == 0.0 {
                    continue;
                }
                for mu in 0..4 {
                    let cm = coef * sv[mu];
                    let base = 16 * mu + 4 * nu;
                    for lambda in 0..4 {
                        g[base + lambda] += cm * row.p[lambda];
                    }
                }
            }
        }
        g
    }

    /// Closed-form minimizer of `F` over the spatial parts of `s′`.
    pub fn best_initializations(&self, phi: &[f64; 64]) -> Result<Vec<BlochVector>> {
        let mut out = Vec::with_capacity(self.labels.len());
        for (slot, (sn, pw)) in self.nominal.iter().zip(&self.prior_weight).enumerate() {
            let mut normal = Matrix3::<f64>::from_diagonal(&Vector3::new(pw[0], pw[1], pw[2]));
            let mut rhs = Vector3::new(pw[0] * sn.0[1], pw[1] * sn.0[2], pw[2] * sn.0[3]);
            for row in self.rows.iter().filter(|r| r.init == slot) {
                // residual_ν = a_ν0 + Σ_i a_νi x_i − target_ν
                for nu in 0..4 {
                    let mut a = [0.0; 4];
                    for (mu, dst) in a.iter_mut().enumerate() {
                        let base = 16 * mu + 4 * nu;
                        *dst = (0..4).map(|l| phi[base + l] * row.p[l]).sum();
                    }
                    let w = row.weight[nu];
                    let b = row.target[nu] - a[0];
                    for i in 0..3 {
                        rhs[i] += w * a[i + 1] * b;
                        for j in 0..3 {
                            normal[(i, j)] += w * a[i + 1] * a[j + 1];
                        }
                    }
                }
            }
            let chol = normal.cholesky().ok_or_else(|| {
                Error::Numerical(format!(
                    "initialization normal matrix for {:?} is not positive definite",
                    self.labels[slot]
                ))
            })?;
            let x = chol.solve(&rhs);
            out.push(BlochVector([1.0, x[0], x[1], x[2]]));
        }
        Ok(out)
    }
}

pub fn objective(
    t: &ProcessTensor,
    s_prime: &InitialStates,
    data: &[MeasurementRecord],
) -> Result<f64> {
    let design = Design::new(data)?;
    let s = design.align(s_prime)?;
    Ok(design.objective(&t.flat(), &s))
}

/// Per-initialization minimizer of the objective for a fixed tensor.
pub fn update_s_prime(t: &ProcessTensor, data: &[MeasurementRecord]) -> Result<InitialStates> {
    let design = Design::new(data)?;
    let s = design.best_initializations(&t.flat())?;
    Ok(design.unalign(&s))
}

/// Initializations stored in the records themselves.
pub fn nominal_initializations(data: &[MeasurementRecord]) -> Result<InitialStates> {
    Ok(Design::new(data)?.nominal_states())
}

/// Frobenius gradient `G` of the objective as a function of the Choi matrix:
/// `dF[H] = Tr(G H)` for Hermitian `H`. Equivalently `Σ Ξ̂_α ∂F/∂a_α` over
/// the unit-normalized Pauli basis `Ξ̂_α = Ξ_α/√8`.
pub fn euclidean_gradient(
    a: &ChoiMatrix,
    s_prime: &InitialStates,
    data: &[MeasurementRecord],
) -> Result<Mat8> {
    let design = Design::new(data)?;
    let s = design.align(s_prime)?;
    Ok(choi_gradient(&design, a.matrix(), &s))
}

pub(crate) fn choi_gradient(design: &Design, a: &Mat8, s: &[BlochVector]) -> Mat8 {
    let phi = process::flat_from_choi(a);
    let g = design.tensor_gradient(&phi, s);
    process::choi_from_flat(&g).scale(1.0 / 8.0)
}
