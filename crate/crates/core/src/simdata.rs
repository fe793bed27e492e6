//! Synthetic tomography datasets.
//!
//! Each of the six initializations is combined with each of the six photon
//! projections, giving 36 records and 144 scalar equations. Noise is additive
//! Gaussian on `R` and on each component of `S`.
//!
//! The `delta_*` fields are the standard deviations of the residuals
//! `R` and `R·S_i` under that noise, floored at `1e-3`:
//! `Δ_O = σ_R`, `Δ_i = sqrt((σ_R S_i)² + (R σ_S)²)` with the measured values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::MeasurementRecord;
use crate::pauli::{BlochVector, PauliIndex};
use crate::process::{self, ProcessTensor};

const DELTA_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate_sigma: f64,
    pub spin_sigma: f64,
    pub init_polarization: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            rate_sigma: 0.02,
            spin_sigma: 0.02,
            init_polarization: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            rate_sigma: 0.0,
            spin_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rate_sigma", self.rate_sigma), ("spin_sigma", self.spin_sigma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.init_polarization) {
            return Err(Error::invalid(format!(
                "init_polarization must lie in [0, 1], got {}",
                self.init_polarization
            )));
        }
        Ok(())
    }
}

/// `+X, −X, +Y, −Y, +Z, −Z` with their labels.
pub fn standard_six() -> Vec<(String, BlochVector)> {
    let mut out = Vec::with_capacity(6);
    for axis in [PauliIndex::X, PauliIndex::Y, PauliIndex::Z] {
        for positive in [true, false] {
            let sign = if positive { '+' } else { '-' };
            out.push((format!("{sign}{axis}"), BlochVector::axis(axis, positive)));
        }
    }
    out
}

pub fn simulate_dataset(truth: &ProcessTensor, noise: &NoiseSpec) -> Result<Vec<MeasurementRecord>> {
    noise.validate()?;
    truth.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let six = standard_six();
    let mut records = Vec::with_capacity(36);
    for (label, nominal) in &six {
        let s = nominal.scaled_spatial(noise.init_polarization);
        for (_, p) in &six {
            let v = process::measurement_products(truth, &s, p);
            let rate_true = v[0].max(0.0);
            let spin_true = if rate_true > 1e-12 {
                [v[1] / rate_true, v[2] / rate_true, v[3] / rate_true]
            } else {
                [0.0; 3]
            };

            let rate = (rate_true + noise.rate_sigma * normal.sample(&mut rng)).max(0.0);
            let mut spin = spin_true;
            for c in spin.iter_mut() {
                *c += noise.spin_sigma * normal.sample(&mut rng);
            }
            let len = spin.iter().map(|c| c * c).sum::<f64>().sqrt();
            if len > 1.0 {
                for c in spin.iter_mut() {
                    *c /= len;
                }
            }

            let delta_spin = spin.map(|si| {
                let d = ((noise.rate_sigma * si).powi(2) + (rate * noise.spin_sigma).powi(2)).sqrt();
                d.max(DELTA_FLOOR)
            });
            records.push(MeasurementRecord {
                init_label: label.clone(),
                s,
                ds: [noise.spin_sigma.max(DELTA_FLOOR); 3],
                p: *p,
                rate,
                delta_rate: noise.rate_sigma.max(DELTA_FLOOR),
                final_spin: spin,
                delta_spin,
            });
        }
    }
    Ok(records)
}

/// Degree of circular polarization `(P₊ − P₋)/(P₊ + P₋)`.
pub fn dcp(p_plus: f64, p_minus: f64) -> Result<f64> {
    if !(p_plus >= 0.0 && p_minus >= 0.0) {
        return Err(Error::invalid("intensities must be non-negative"));
    }
    let total = p_plus + p_minus;
    if total <= 0.0 {
        return Err(Error::invalid("both intensities are zero; the ratio is undefined"));
    }
    Ok((p_plus - p_minus) / total)
}
