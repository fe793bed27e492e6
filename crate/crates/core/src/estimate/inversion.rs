//! Unconstrained linear inversion, used to start the constrained fit.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{self, c, Mat8, C64};
use crate::process::{self, ChoiMatrix, ProcessTensor};

use super::record::MeasurementRecord;

/// Weighted least squares for `φ`, one output component `ν` at a time, with
/// the nominal initializations. `φ^μ_{OO}` is fixed to its trace-preserving
/// value. The result is generally not completely positive.
pub fn linear_inversion(data: &[MeasurementRecord]) -> Result<ProcessTensor> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    for r in data {
        r.validate()?;
    }
    let mut phi = [0.0; 64];
    phi[0] = 0.5;
    for nu in 0..4 {
        let unknowns: Vec<(usize, usize)> = (0..4)
            .flat_map(|mu| (0..4).map(move |l| (mu, l)))
            .filter(|&(_, l)| nu != 0 || l != 0)
            .collect();
        let design = DMatrix::from_fn(data.len(), unknowns.len(), |i, j| {
            let (mu, l) = unknowns[j];
            data[i].s.0[mu] * data[i].p.0[l] / data[i].deltas()[nu]
        });
        let rhs = DVector::from_fn(data.len(), |i, _| {
            let r = &data[i];
            let known = if nu == 0 { 0.5 * r.s.0[0] * r.p.0[0] } else { 0.0 };
            (r.targets()[nu] - known) / r.deltas()[nu]
        });
        let svd = design.svd(true, true);
        let top = svd.singular_values.max();
        let bottom = svd.singular_values.min();
        if data.len() < unknowns.len() || !(bottom > 1e-10 * top) {
            return Err(Error::invalid(format!(
                "linear inversion is rank deficient for output component {nu} \
                 ({} rows, {} unknowns)",
                data.len(),
                unknowns.len()
            )));
        }
        let x = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
        for (j, &(mu, l)) in unknowns.iter().enumerate() {
            phi[16 * mu + 4 * nu + l] = x[j];
        }
    }
    Ok(ProcessTensor::from_flat(&phi))
}

/// Nearest-ish CP and TP Choi matrix: negative eigenvalues are clipped, then a
/// congruence `(Y ⊗ I) C (Y ⊗ I)` restores `Tr_23 C = 2 I`.
pub fn project_to_physical(t: &ProcessTensor) -> Result<ChoiMatrix> {
    let choi = process::tensor_to_choi(t);
    let eig = SymmetricEigen::new(linalg::hermitize8(choi.matrix()));
    let v = eig.eigenvectors;
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("Choi matrix has no positive part".into()));
    }
    let mut m = Mat8::from_fn(|i, j| v[(i, j)] * clipped[j]) * v.adjoint();
    // keep the input marginal invertible
    m += Mat8::identity().scale(1e-12 * total);

    let mut marginal = Matrix2::<C64>::zeros();
    for a in 0..2 {
        for b in 0..2 {
            marginal[(a, b)] = (0..4).map(|k| m[(4 * a + k, 4 * b + k)]).sum();
        }
    }
    let me = SymmetricEigen::new((marginal + marginal.adjoint()).scale(0.5));
    let w = me.eigenvectors;
    let inv_root = Matrix2::from_fn(|i, j| w[(i, j)] * c((2.0 / me.eigenvalues[j]).sqrt()));
    let y = inv_root * w.adjoint();
    let lift = Mat8::from_fn(|i, j| if i % 4 == j % 4 { y[(i / 4, j / 4)] } else { c(0.0) });
    let projected = super::twisted::tp_correct(&(lift * m * lift.adjoint()));
    ChoiMatrix::new(projected)
}
