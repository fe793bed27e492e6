//! Pauli-basis linear algebra on qubit registers.
//!
//! Qubit 0 is the most significant tensor factor, so a basis index
//! `(i_0, …, i_{n-1})` maps to the flat coefficient position
//! `Σ i_k 4^{n-1-k}` and the computational state `|b_0 … b_{n-1}⟩` to row
//! `Σ b_k 2^{n-1-k}`.
//!
//! # Normalization
//!
//! A one-qubit state is written `ρ = Σ r_μ σ_μ` with `r_O = 1/2`. Bloch
//! four-vectors carry a unit zeroth component, `s = 2r`, so
//! `ρ = ½(σ_O + s_x σ_X + s_y σ_Y + s_z σ_Z)`. This is the only place the
//! factor of two between the two conventions is fixed; every other module
//! goes through [`bloch_state`] or [`BlochVector::from_state`].
//!
//! Photon polarizations use H, D, R ↔ +X, +Y, +Z; ±Z are right/left circular.

use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, I, ONE, ZERO};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliIndex {
    O,
    X,
    Y,
    Z,
}

impl PauliIndex {
    pub const ALL: [PauliIndex; 4] = [PauliIndex::O, PauliIndex::X, PauliIndex::Y, PauliIndex::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Entry of the Pauli matrix in row `row`; the column is `row ^ flips()`.
    fn row_phase(self, row: usize) -> C64 {
        match (self, row) {
            (PauliIndex::O, _) | (PauliIndex::X, _) => ONE,
            (PauliIndex::Y, 0) => -I,
            (PauliIndex::Y, _) => I,
            (PauliIndex::Z, 0) => ONE,
            (PauliIndex::Z, _) => -ONE,
        }
    }

    fn flips(self) -> bool {
        matches!(self, PauliIndex::X | PauliIndex::Y)
    }
}

impl fmt::Display for PauliIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PauliIndex::O => "O",
            PauliIndex::X => "X",
            PauliIndex::Y => "Y",
            PauliIndex::Z => "Z",
        };
        f.write_str(s)
    }
}

pub fn pauli_matrix(idx: PauliIndex) -> Matrix2<C64> {
    let mut m = Matrix2::zeros();
    for row in 0..2 {
        let col = if idx.flips() { row ^ 1 } else { row };
        m[(row, col)] = idx.row_phase(row);
    }
    m
}

/// A tensor product of Pauli matrices stored as one nonzero per row.
#[derive(Clone, Debug)]
pub(crate) struct PauliString {
    pub cols: Vec<usize>,
    pub phases: Vec<C64>,
}

impl PauliString {
    pub fn new(indices: &[PauliIndex]) -> Self {
        let n = indices.len();
        let dim = 1usize << n;
        let mut cols = Vec::with_capacity(dim);
        let mut phases = Vec::with_capacity(dim);
        for row in 0..dim {
            let mut col = row;
            let mut phase = ONE;
            for (k, idx) in indices.iter().enumerate() {
                let shift = n - 1 - k;
                let bit = (row >> shift) & 1;
                phase *= idx.row_phase(bit);
                if idx.flips() {
                    col ^= 1 << shift;
                }
            }
            cols.push(col);
            phases.push(phase);
        }
        PauliString { cols, phases }
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let dim = self.cols.len();
        let mut m = DMatrix::zeros(dim, dim);
        for (row, (&col, &ph)) in self.cols.iter().zip(&self.phases).enumerate() {
            m[(row, col)] = ph;
        }
        m
    }

    /// `Tr(m · P)`.
    pub fn trace_with(&self, m: &DMatrix<C64>) -> C64 {
        self.cols
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(row, (&col, &ph))| m[(col, row)] * ph)
            .sum()
    }
}

/// Decode a flat basis position into per-qubit Pauli indices.
pub fn basis_indices(alpha: usize, n: usize) -> Vec<PauliIndex> {
    (0..n)
        .map(|k| {
            let digit = (alpha >> (2 * (n - 1 - k))) & 3;
            PauliIndex::ALL[digit]
        })
        .collect()
}

/// A Pauli product `Ξ_α`; `Tr(Ξ_α Ξ_β) = 2ⁿ δ_αβ`.
#[derive(Clone, Debug)]
pub struct HermitianBasisElement {
    pub indices: Vec<PauliIndex>,
    pub matrix: DMatrix<C64>,
}

pub fn pauli_basis(n: usize) -> Vec<HermitianBasisElement> {
    (0..1usize << (2 * n))
        .map(|alpha| {
            let indices = basis_indices(alpha, n);
            let matrix = PauliString::new(&indices).to_matrix();
            HermitianBasisElement { indices, matrix }
        })
        .collect()
}

/// Hermitian operator on a register of qubits (not necessarily normalized).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    n_qubits: usize,
}

pub type MultiQubitState = DensityMatrix;

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let n_qubits = qubit_count(matrix.nrows())?;
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herr = linalg::hermiticity_error(&matrix);
        if herr > HERMITIAN_TOL {
            return Err(Error::invalid(format!("matrix is not Hermitian (error {herr:e})")));
        }
        Ok(DensityMatrix {
            matrix: linalg::hermitize(&matrix),
            n_qubits,
        })
    }

    /// Wraps a matrix already known to be Hermitian with a power-of-two size.
    pub(crate) fn from_hermitian(matrix: DMatrix<C64>) -> Self {
        let n_qubits = matrix.nrows().trailing_zeros() as usize;
        debug_assert_eq!(1usize << n_qubits, matrix.nrows());
        DensityMatrix {
            matrix: linalg::hermitize(&matrix),
            n_qubits,
        }
    }

    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self::from_hermitian(DMatrix::identity(dim, dim).scale(1.0 / dim as f64))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigenvalues(&self.matrix)
    }

    pub fn is_physical(&self) -> bool {
        (self.trace() - 1.0).abs() < 1e-9
            && self.eigenvalues().first().is_none_or(|&l| l >= -PSD_TOL)
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            matrix: self.matrix.kronecker(&other.matrix),
            n_qubits: self.n_qubits + other.n_qubits,
        }
    }

    pub fn scaled(&self, factor: f64) -> DensityMatrix {
        DensityMatrix {
            matrix: self.matrix.scale(factor),
            n_qubits: self.n_qubits,
        }
    }
}

fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::invalid(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Four-vector `(1, x, y, z)` describing a qubit state or a projection axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlochVector(pub [f64; 4]);

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector([1.0, x, y, z])
    }

    pub fn spatial(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn spatial_norm(&self) -> f64 {
        self.spatial().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled_spatial(&self, factor: f64) -> Self {
        BlochVector([self.0[0], self.0[1] * factor, self.0[2] * factor, self.0[3] * factor])
    }

    /// Unit pure-state vector along `+axis` or `-axis`.
    pub fn axis(axis: PauliIndex, positive: bool) -> Self {
        let sign = if positive { 1.0 } else { -1.0 };
        let mut v = [1.0, 0.0, 0.0, 0.0];
        if axis != PauliIndex::O {
            v[axis.index()] = sign;
        }
        BlochVector(v)
    }

    /// Parses labels such as `-X`, `+y`, `Z`.
    pub fn from_label(label: &str) -> Result<Self> {
        let trimmed = label.trim();
        let (positive, rest) = match trimmed.as_bytes().first() {
            Some(b'-') => (false, &trimmed[1..]),
            Some(b'+') => (true, &trimmed[1..]),
            _ => (true, trimmed),
        };
        let axis = match rest.to_ascii_uppercase().as_str() {
            "X" => PauliIndex::X,
            "Y" => PauliIndex::Y,
            "Z" => PauliIndex::Z,
            _ => return Err(Error::invalid(format!("unknown axis label {label:?}"))),
        };
        Ok(Self::axis(axis, positive))
    }

    /// Bloch vector of a normalized one-qubit state.
    pub fn from_state(rho: &DensityMatrix) -> Result<Self> {
        if rho.n_qubits() != 1 {
            return Err(Error::invalid("Bloch vector needs a one-qubit state"));
        }
        let r = expand(rho, 1)?;
        let norm = 2.0 * r[0];
        if norm.abs() < 1e-15 {
            return Err(Error::invalid("state has zero trace"));
        }
        Ok(BlochVector([1.0, 2.0 * r[1] / norm, 2.0 * r[2] / norm, 2.0 * r[3] / norm]))
    }
}

/// Pauli coefficients `r_α = Tr(ρ Ξ_α) / 2ⁿ`.
pub fn expand(rho: &DensityMatrix, n: usize) -> Result<Vec<f64>> {
    if rho.n_qubits() != n {
        return Err(Error::invalid(format!(
            "state has {} qubits, expected {n}",
            rho.n_qubits()
        )));
    }
    let norm = (1usize << n) as f64;
    Ok((0..1usize << (2 * n))
        .map(|alpha| {
            let ps = PauliString::new(&basis_indices(alpha, n));
            ps.trace_with(rho.matrix()).re / norm
        })
        .collect())
}

/// `Σ r_α Ξ_α`, the inverse of [`expand`].
pub fn reconstruct(coeffs: &[f64], n: usize) -> Result<DensityMatrix> {
    if coeffs.len() != 1usize << (2 * n) {
        return Err(Error::invalid(format!(
            "{} coefficients given, {n} qubits need {}",
            coeffs.len(),
            1usize << (2 * n)
        )));
    }
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for (alpha, &r) in coeffs.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let ps = PauliString::new(&basis_indices(alpha, n));
        for (row, (&col, &ph)) in ps.cols.iter().zip(&ps.phases).enumerate() {
            m[(row, col)] += ph * r;
        }
    }
    Ok(DensityMatrix::from_hermitian(m))
}

pub fn bloch_state(v: &BlochVector) -> Result<DensityMatrix> {
    if (v.0[0] - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "Bloch vector zeroth component is {}, expected 1",
            v.0[0]
        )));
    }
    let norm = v.spatial_norm();
    if norm > 1.0 + 1e-9 {
        return Err(Error::UnphysicalState(format!(
            "Bloch vector length {norm} exceeds 1"
        )));
    }
    Ok(bloch_operator(v))
}

/// `½ Σ v_μ σ_μ` without any physicality check.
pub(crate) fn bloch_operator(v: &BlochVector) -> DensityMatrix {
    let mut m = Matrix2::<C64>::zeros();
    for idx in PauliIndex::ALL {
        m += pauli_matrix(idx) * C64::new(0.5 * v.0[idx.index()], 0.0);
    }
    DensityMatrix::from_hermitian(DMatrix::from_fn(2, 2, |i, j| m[(i, j)]))
}

/// Traces out every qubit not listed in `keep`. The kept qubits stay in
/// ascending order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits();
    let keep = normalized_subset(keep, n)?;
    if keep.is_empty() {
        return Err(Error::invalid("partial trace must keep at least one qubit"));
    }
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let kd = 1usize << keep.len();
    let td = 1usize << traced.len();
    let compose = |kbits: usize, tbits: usize| -> usize {
        let mut idx = 0;
        for (pos, &q) in keep.iter().enumerate() {
            let bit = (kbits >> (keep.len() - 1 - pos)) & 1;
            idx |= bit << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let bit = (tbits >> (traced.len() - 1 - pos)) & 1;
            idx |= bit << (n - 1 - q);
        }
        idx
    };
    let m = rho.matrix();
    let mut out = DMatrix::<C64>::zeros(kd, kd);
    for i in 0..kd {
        for j in 0..kd {
            let mut acc = ZERO;
            for t in 0..td {
                acc += m[(compose(i, t), compose(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix::from_hermitian(out))
}

/// Transposes the listed qubits only. The result is Hermitian but need not be
/// positive.
pub fn partial_transpose(rho: &DensityMatrix, subsystem: &[usize]) -> Result<DMatrix<C64>> {
    let n = rho.n_qubits();
    if n < 2 {
        return Err(Error::invalid("partial transpose needs at least two qubits"));
    }
    let sub = normalized_subset(subsystem, n)?;
    if sub.is_empty() || sub.len() == n {
        return Err(Error::invalid(
            "partial transpose needs a proper, nonempty subsystem",
        ));
    }
    let mask: usize = sub.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    let m = rho.matrix();
    let dim = rho.dim();
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        // swap the bits of i and j that belong to the transposed subsystem
        let i2 = (i & !mask) | (j & mask);
        let j2 = (j & !mask) | (i & mask);
        m[(i2, j2)]
    }))
}

fn normalized_subset(qubits: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut v = qubits.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.len() != qubits.len() {
        return Err(Error::invalid("repeated qubit index"));
    }
    if let Some(&q) = v.iter().find(|&&q| q >= n) {
        return Err(Error::invalid(format!(
            "qubit index {q} out of range for {n} qubits"
        )));
    }
    Ok(v)
}
