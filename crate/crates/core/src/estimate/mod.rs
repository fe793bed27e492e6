//! Maximum-likelihood estimation of the process tensor from spin and photon
//! measurements.

mod fit;
mod inversion;
mod objective;
mod record;
mod twisted;

pub use fit::{fit_process, FitConfig, FitReport, InitStrategy};
pub use inversion::{linear_inversion, project_to_physical};
pub use objective::{
    euclidean_gradient, nominal_initializations, objective, update_s_prime, InitialStates,
};
pub use record::{dataset_from_json, dataset_to_json, MeasurementRecord};
pub use twisted::{epsilon_nudge, lagrange_multipliers, twisted_step, TwistedStep};
