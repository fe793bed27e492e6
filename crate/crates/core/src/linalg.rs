//! Small Hermitian-matrix helpers shared by the process and estimation code.

use nalgebra::{Complex, DMatrix, SMatrix, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type Mat8 = SMatrix<C64, 8, 8>;

pub const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const ONE: C64 = Complex { re: 1.0, im: 0.0 };
pub const I: C64 = Complex { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Largest entry of `m - m^†` relative to `max(1, max |m_ij|)`.
pub fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

pub fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermitize8(m: &Mat8) -> Mat8 {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn eigenvalues8(m: &Mat8) -> [f64; 8] {
    let eig = SymmetricEigen::new(hermitize8(m));
    let mut ev = [0.0; 8];
    for (dst, src) in ev.iter_mut().zip(eig.eigenvalues.iter()) {
        *dst = *src;
    }
    ev.sort_by(f64::total_cmp);
    ev
}

/// Principal square root of a Hermitian PSD matrix. Negative eigenvalues are
/// clipped to zero before the root is taken.
pub fn sqrt_psd(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(hermitize(m));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
    // eigenvalues at rounding level would otherwise turn into 1e-8 roots
    let floor = 1e-14 * top;
    let roots = eig
        .eigenvalues
        .map(|l| c(if l > floor { l.sqrt() } else { 0.0 }));
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * roots[j]);
    hermitize(&(scaled * v.adjoint()))
}

/// Eigen-decomposition of an 8×8 Hermitian matrix returning `(values, vectors)`
/// with values clipped from below at zero, plus the square root built from them.
pub struct PsdFactor {
    pub eigenvalues: [f64; 8],
    pub eigenvectors: Mat8,
    pub sqrt: Mat8,
}

pub fn psd_factor8(m: &Mat8) -> PsdFactor {
    let eig = SymmetricEigen::new(hermitize8(m));
    let mut eigenvalues = [0.0; 8];
    for (dst, src) in eigenvalues.iter_mut().zip(eig.eigenvalues.iter()) {
        *dst = *src;
    }
    let v = eig.eigenvectors;
    let scaled = Mat8::from_fn(|i, j| v[(i, j)] * eigenvalues[j].max(0.0).sqrt());
    let sqrt = hermitize8(&(scaled * v.adjoint()));
    PsdFactor {
        eigenvalues,
        eigenvectors: v,
        sqrt,
    }
}

pub fn to_dynamic(m: &Mat8) -> DMatrix<C64> {
    DMatrix::from_fn(8, 8, |i, j| m[(i, j)])
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().iter().sum()
}

/// Uhlmann–Jozsa fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2` of two PSD matrices
/// of unit trace, evaluated as the squared trace norm of `sqrt(a) sqrt(b)`.
/// Negative eigenvalues are clipped.
pub fn uhlmann_fidelity(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let product = sqrt_psd(a) * sqrt_psd(b);
    let trace_norm: f64 = product.singular_values().iter().sum();
    (trace_norm * trace_norm).clamp(0.0, 1.0)
}
