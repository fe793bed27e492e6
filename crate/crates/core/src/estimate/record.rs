use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::BlochVector;

/// One (initialization, photon projection) configuration.
///
/// `delta_rate` and `delta_spin` are the uncertainties `Δ_{psν}` of the four
/// residuals `R` and `R·S_i` that enter the likelihood, not the raw
/// uncertainties of `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub init_label: String,
    pub s: BlochVector,
    pub ds: [f64; 3],
    pub p: BlochVector,
    pub rate: f64,
    pub delta_rate: f64,
    pub final_spin: [f64; 3],
    pub delta_spin: [f64; 3],
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::invalid(format!("record {:?}: {msg}", self.init_label));
        if self.s.0[0] != 1.0 {
            return Err(ctx(format!("s[0] = {}, expected 1", self.s.0[0])));
        }
        if self.p.0[0] != 1.0 {
            return Err(ctx(format!("p[0] = {}, expected 1", self.p.0[0])));
        }
        let finite = self.s.0.iter().chain(&self.p.0).chain(&self.final_spin).all(|v| v.is_finite())
            && self.rate.is_finite();
        if !finite {
            return Err(ctx("non-finite entry".into()));
        }
        if self.rate < 0.0 {
            return Err(ctx(format!("rate {} is negative", self.rate)));
        }
        for (name, v) in [("ds", &self.ds[..]), ("delta_spin", &self.delta_spin[..])] {
            if v.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                return Err(ctx(format!("{name} entries must be positive")));
            }
        }
        if !(self.delta_rate > 0.0) || !self.delta_rate.is_finite() {
            return Err(ctx("delta_rate must be positive".into()));
        }
        let len = self.final_spin.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 1.1 {
            return Err(ctx(format!("final_spin length {len} exceeds 1.1")));
        }
        Ok(())
    }

    /// Measured `(R, R S_x, R S_y, R S_z)`.
    pub fn targets(&self) -> [f64; 4] {
        [
            self.rate,
            self.rate * self.final_spin[0],
            self.rate * self.final_spin[1],
            self.rate * self.final_spin[2],
        ]
    }

    pub fn deltas(&self) -> [f64; 4] {
        [
            self.delta_rate,
            self.delta_spin[0],
            self.delta_spin[1],
            self.delta_spin[2],
        ]
    }
}

pub fn dataset_to_json(data: &[MeasurementRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(data)?)
}

pub fn dataset_from_json(text: &str) -> Result<Vec<MeasurementRecord>> {
    let data: Vec<MeasurementRecord> = crate::error::parse_json(text)?;
    for r in &data {
        r.validate()?;
    }
    Ok(data)
}
