//! One-qubit → two-qubit process maps.
//!
//! A process is stored as 64 real coefficients `φ^μ_{νλ}`:
//!
//! ```text
//! ρ = Σ r_μ σ_μ   ↦   Φ(ρ) = Σ r_μ φ^μ_{νλ} σ_ν ⊗ σ_λ
//! ```
//!
//! with `μ` the input spin index, `ν` the output spin and `λ` the emitted
//! photon. The Choi matrix is `C = Σ φ^μ_{νλ} conj(σ_μ) ⊗ σ_ν ⊗ σ_λ`, factor
//! order input ⊗ spin ⊗ photon, so a trace-preserving map has `Tr C = 4`.
//!
//! # Ideal cycle
//!
//! One cycle runs from one excitation pulse to the next: the emission acts as
//! the isometry `|↑⟩ → |↑⟩|+Z⟩`, `|↓⟩ → |↓⟩|−Z⟩`, after which the spin
//! precesses a quarter period about its ±X eigenaxis, `U = exp(iπ/4 σ_X)`.
//! Spin tomography reads the spin at the next pulse, after the precession.
//! With this order and sign the cycle maps an initial `−X` spin to the
//! correlations `[0,0,−1]` (one photon on +Y) and `[0,−1,0]` (two photons on
//! +Y).

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, Mat8, C64, ONE, ZERO};
use crate::pauli::{self, BlochVector, DensityMatrix, MultiQubitState, PauliIndex, PauliString};

pub const TP_TOL: f64 = 1e-9;
/// Largest number of cycles [`grow_state`] will expand densely.
pub const MAX_DENSE_CYCLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessTensor {
    pub phi: [[[f64; 4]; 4]; 4],
}

impl ProcessTensor {
    pub fn zeros() -> Self {
        ProcessTensor {
            phi: [[[0.0; 4]; 4]; 4],
        }
    }

    /// The map sending every input to `I/4`.
    pub fn fully_depolarizing() -> Self {
        let mut t = Self::zeros();
        t.phi[0][0][0] = 0.5;
        t
    }

    pub fn get(&self, mu: PauliIndex, nu: PauliIndex, lambda: PauliIndex) -> f64 {
        self.phi[mu.index()][nu.index()][lambda.index()]
    }

    pub fn flat(&self) -> [f64; 64] {
        let mut out = [0.0; 64];
        for (alpha, v) in out.iter_mut().enumerate() {
            *v = self.phi[alpha >> 4][(alpha >> 2) & 3][alpha & 3];
        }
        out
    }

    pub fn from_flat(values: &[f64; 64]) -> Self {
        let mut t = Self::zeros();
        for (alpha, &v) in values.iter().enumerate() {
            t.phi[alpha >> 4][(alpha >> 2) & 3][alpha & 3] = v;
        }
        t
    }

    /// `max_μ |φ^μ_{OO} − ½δ_{μO}|`.
    pub fn tp_residual(&self) -> f64 {
        (0..4)
            .map(|mu| {
                let target = if mu == 0 { 0.5 } else { 0.0 };
                (self.phi[mu][0][0] - target).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ProcessTensor) -> f64 {
        self.flat()
            .iter()
            .zip(other.flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Builds the tensor of `ρ ↦ Σ_k K_k ρ K_k^†` for 4×2 operators.
    pub fn from_kraus(kraus: &[DMatrix<C64>]) -> Result<Self> {
        for k in kraus {
            if k.shape() != (4, 2) {
                return Err(Error::invalid(format!(
                    "Kraus operator has shape {:?}, expected (4, 2)",
                    k.shape()
                )));
            }
        }
        let mut t = Self::zeros();
        for mu in PauliIndex::ALL {
            let s = pauli_dyn(mu);
            let out: DMatrix<C64> = kraus.iter().map(|k| k * &s * k.adjoint()).sum();
            for nu in PauliIndex::ALL {
                for lambda in PauliIndex::ALL {
                    let ps = PauliString::new(&[nu, lambda]);
                    t.phi[mu.index()][nu.index()][lambda.index()] = ps.trace_with(&out).re / 4.0;
                }
            }
        }
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a process file: every entry finite and the
    /// trace-preservation residual below [`TP_TOL`].
    pub fn from_json(text: &str) -> Result<Self> {
        let t: ProcessTensor = crate::error::parse_json(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (mu, block) in self.phi.iter().enumerate() {
            for (nu, row) in block.iter().enumerate() {
                for (lambda, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::invalid(format!("phi[{mu}][{nu}][{lambda}] is not finite")));
                    }
                }
            }
        }
        for mu in 0..4 {
            let target = if mu == 0 { 0.5 } else { 0.0 };
            let dev = (self.phi[mu][0][0] - target).abs();
            if dev > TP_TOL {
                return Err(Error::invalid(format!(
                    "phi[{mu}][0][0] = {} violates trace preservation (expected {target})",
                    self.phi[mu][0][0]
                )));
            }
        }
        Ok(())
    }
}

fn pauli_dyn(idx: PauliIndex) -> DMatrix<C64> {
    let m = pauli::pauli_matrix(idx);
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// The 64 Choi basis elements `conj(σ_μ) ⊗ σ_ν ⊗ σ_λ`, indexed `16μ + 4ν + λ`.
pub(crate) fn choi_basis() -> &'static [PauliString] {
    static BASIS: OnceLock<Vec<PauliString>> = OnceLock::new();
    BASIS.get_or_init(|| {
        (0..64)
            .map(|alpha| {
                let idx = pauli::basis_indices(alpha, 3);
                let mut ps = PauliString::new(&idx);
                if idx[0] == PauliIndex::Y {
                    for ph in ps.phases.iter_mut() {
                        *ph = -*ph;
                    }
                }
                ps
            })
            .collect()
    })
}

/// 8×8 Hermitian Choi matrix of a process tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChoiMatrix(pub(crate) Mat8);

impl ChoiMatrix {
    /// Accepts a matrix Hermitian to within `1e-12` (relative) and hermitizes it.
    pub fn new(m: Mat8) -> Result<Self> {
        let herr = linalg::hermiticity_error(&linalg::to_dynamic(&m));
        if herr > pauli::HERMITIAN_TOL {
            return Err(Error::invalid(format!(
                "Choi matrix is not Hermitian (error {herr:e})"
            )));
        }
        Ok(ChoiMatrix(linalg::hermitize8(&m)))
    }

    pub fn matrix(&self) -> &Mat8 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 8] {
        linalg::eigenvalues8(&self.0)
    }

    pub fn scaled_identity(scale: f64) -> Self {
        ChoiMatrix(Mat8::identity().scale(scale))
    }
}

pub fn tensor_to_choi(t: &ProcessTensor) -> ChoiMatrix {
    ChoiMatrix(choi_from_flat(&t.flat()))
}

pub(crate) fn choi_from_flat(phi: &[f64; 64]) -> Mat8 {
    let mut m = Mat8::zeros();
    for (ps, &v) in choi_basis().iter().zip(phi) {
        if v == 0.0 {
            continue;
        }
        for (row, (&col, &ph)) in ps.cols.iter().zip(&ps.phases).enumerate() {
            m[(row, col)] += ph * v;
        }
    }
    m
}

/// `φ_α = Re Tr(C Ξ_α) / 8` without a Hermiticity check.
pub(crate) fn flat_from_choi(m: &Mat8) -> [f64; 64] {
    let mut out = [0.0; 64];
    for (dst, ps) in out.iter_mut().zip(choi_basis()) {
        let mut acc = ZERO;
        for (row, (&col, &ph)) in ps.cols.iter().zip(&ps.phases).enumerate() {
            acc += m[(col, row)] * ph;
        }
        *dst = acc.re / 8.0;
    }
    out
}

pub fn choi_to_tensor(c: &ChoiMatrix) -> Result<ProcessTensor> {
    let checked = ChoiMatrix::new(c.0)?;
    Ok(ProcessTensor::from_flat(&flat_from_choi(&checked.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpDiagnostics {
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub is_cp: bool,
    pub tp_residual: f64,
}

pub fn cp_diagnostics(c: &ChoiMatrix, tol: f64) -> CpDiagnostics {
    let eigenvalues = c.eigenvalues().to_vec();
    let min_eigenvalue = eigenvalues[0];
    let t = ProcessTensor::from_flat(&flat_from_choi(&c.0));
    CpDiagnostics {
        is_cp: min_eigenvalue >= -tol,
        min_eigenvalue,
        eigenvalues,
        tp_residual: t.tp_residual(),
    }
}

/// `Σ_μ r_μ φ^μ_{νλ} σ_ν ⊗ σ_λ` for possibly complex input coefficients.
fn output_operator(t: &ProcessTensor, r: &[C64; 4]) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(4, 4);
    for nu in PauliIndex::ALL {
        for lambda in PauliIndex::ALL {
            let coeff: C64 = (0..4).map(|mu| r[mu] * t.phi[mu][nu.index()][lambda.index()]).sum();
            if coeff == ZERO {
                continue;
            }
            let ps = PauliString::new(&[nu, lambda]);
            for (row, (&col, &ph)) in ps.cols.iter().zip(&ps.phases).enumerate() {
                out[(row, col)] += ph * coeff;
            }
        }
    }
    out
}

/// Output state (spin ⊗ photon) for a one-qubit input.
pub fn apply(t: &ProcessTensor, rho_in: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_in.n_qubits() != 1 {
        return Err(Error::invalid("process input must be a one-qubit state"));
    }
    let tp = t.tp_residual();
    if tp > 1e-6 {
        log::warn!("applying a process with trace-preservation residual {tp:e}");
    }
    let r = pauli::expand(rho_in, 1)?;
    let rc = [c(r[0]), c(r[1]), c(r[2]), c(r[3])];
    Ok(DensityMatrix::from_hermitian(output_operator(t, &rc)))
}

/// `Σ_{μλ} φ^μ_{νλ} s_μ p_λ` for each `ν`, i.e. the model value of `R·S_ν`.
pub fn measurement_products(t: &ProcessTensor, s: &BlochVector, p: &BlochVector) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (nu, dst) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for mu in 0..4 {
            for lambda in 0..4 {
                acc += t.phi[mu][nu][lambda] * s.0[mu] * p.0[lambda];
            }
        }
        *dst = acc;
    }
    out
}

/// Photon rate `R` and conditional final spin `S` for initialization `s` and
/// photon projection `p`.
pub fn predict_record(
    t: &ProcessTensor,
    s: &BlochVector,
    p: &BlochVector,
) -> Result<(f64, BlochVector)> {
    if s.0[0] != 1.0 || p.0[0] != 1.0 {
        return Err(Error::invalid("Bloch four-vectors need zeroth component 1"));
    }
    let prod = measurement_products(t, s, p);
    let rate = prod[0];
    if rate <= 1e-12 {
        return Err(Error::DegenerateProjection { rate });
    }
    Ok((
        rate,
        BlochVector([1.0, prod[1] / rate, prod[2] / rate, prod[3] / rate]),
    ))
}

/// Kraus operator `(U ⊗ I)·V` of the ideal cycle; see the module docs.
pub fn ideal_cycle_operator() -> DMatrix<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // exp(iπ/4 σ_X) = (I + iσ_X)/√2
    let precession = Matrix2::new(c(h), C64::new(0.0, h), C64::new(0.0, h), c(h));
    let precession = DMatrix::from_fn(2, 2, |i, j| precession[(i, j)]);
    let mut emission = DMatrix::zeros(4, 2);
    emission[(0, 0)] = ONE;
    emission[(3, 1)] = ONE;
    precession.kronecker(&DMatrix::identity(2, 2)) * emission
}

pub fn ideal_process() -> ProcessTensor {
    let mut t = ProcessTensor::from_kraus(&[ideal_cycle_operator()]).expect("ideal operator is 4x2");
    // every coefficient is 0 or ±1/2; drop the 1/√2 rounding
    for v in t.phi.iter_mut().flatten().flatten() {
        *v = (*v * 4.0).round() / 4.0;
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseChannel {
    /// Depolarizes the spin with probability `p` before the cycle.
    Depolarize(f64),
    /// `ρ ↦ (1−p)ρ + p σ_a ρ σ_a` on the spin before the cycle.
    Dephase { p: f64, axis: PauliIndex },
    /// Replaces the spin+photon output by `I/4` with probability `p`.
    DepolarizeOutput(f64),
}

impl NoiseChannel {
    pub fn probability(&self) -> f64 {
        match *self {
            NoiseChannel::Depolarize(p)
            | NoiseChannel::Dephase { p, .. }
            | NoiseChannel::DepolarizeOutput(p) => p,
        }
    }
}

impl fmt::Display for NoiseChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseChannel::Depolarize(p) => write!(f, "depolarize:{p}"),
            NoiseChannel::Dephase { p, axis } => {
                write!(f, "dephase:{p}:{}", axis.to_string().to_lowercase())
            }
            NoiseChannel::DepolarizeOutput(p) => write!(f, "depolarize_output:{p}"),
        }
    }
}

impl FromStr for NoiseChannel {
    type Err = Error;

    /// `depolarize:P`, `dephase:P[:AXIS]` (default axis x), `depolarize_output:P`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let prob = |text: &str| -> Result<f64> {
            text.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad noise probability {text:?} in {s:?}")))
        };
        match parts.as_slice() {
            ["depolarize", p] => Ok(NoiseChannel::Depolarize(prob(p)?)),
            ["depolarize_output", p] => Ok(NoiseChannel::DepolarizeOutput(prob(p)?)),
            ["dephase", p] => Ok(NoiseChannel::Dephase {
                p: prob(p)?,
                axis: PauliIndex::X,
            }),
            ["dephase", p, axis] => {
                let axis = match axis.to_ascii_lowercase().as_str() {
                    "x" => PauliIndex::X,
                    "y" => PauliIndex::Y,
                    "z" => PauliIndex::Z,
                    _ => return Err(Error::invalid(format!("bad dephasing axis {axis:?}"))),
                };
                Ok(NoiseChannel::Dephase { p: prob(p)?, axis })
            }
            _ => Err(Error::invalid(format!("unrecognized noise channel {s:?}"))),
        }
    }
}

pub fn compose_noise(t: &ProcessTensor, channel: NoiseChannel) -> Result<ProcessTensor> {
    let p = channel.probability();
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "noise probability {p} outside [0, 1]"
        )));
    }
    let mut out = *t;
    match channel {
        NoiseChannel::Depolarize(p) => {
            for mu in 1..4 {
                scale_input(&mut out, mu, 1.0 - p);
            }
        }
        NoiseChannel::Dephase { p, axis } => {
            if axis == PauliIndex::O {
                return Err(Error::invalid("dephasing axis must be X, Y or Z"));
            }
            for mu in 1..4 {
                if mu != axis.index() {
                    scale_input(&mut out, mu, 1.0 - 2.0 * p);
                }
            }
        }
        NoiseChannel::DepolarizeOutput(p) => {
            for mu in 0..4 {
                for nu in 0..4 {
                    for lambda in 0..4 {
                        if nu == 0 && lambda == 0 {
                            continue;
                        }
                        out.phi[mu][nu][lambda] *= 1.0 - p;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn scale_input(t: &mut ProcessTensor, mu: usize, factor: f64) {
    for row in t.phi[mu].iter_mut() {
        for v in row.iter_mut() {
            *v *= factor;
        }
    }
}

/// Uhlmann–Jozsa fidelity of the trace-normalized Choi matrices.
pub fn process_fidelity(a: &ProcessTensor, b: &ProcessTensor) -> f64 {
    let ca = normalized_choi(a);
    let cb = normalized_choi(b);
    linalg::uhlmann_fidelity(&ca, &cb)
}

fn normalized_choi(t: &ProcessTensor) -> DMatrix<C64> {
    let ch = tensor_to_choi(t);
    let min = ch.eigenvalues()[0];
    if min < -1e-8 {
        log::warn!("Choi matrix has eigenvalue {min:e}; clipping to zero for fidelity");
    }
    let tr = ch.trace();
    linalg::to_dynamic(&ch.0).scale(1.0 / tr)
}

/// `Φ(|a⟩⟨b|)` for `a, b ∈ {0, 1}`, each as a 4×4 spin ⊗ photon matrix.
pub(crate) fn transfer_blocks(t: &ProcessTensor) -> [[DMatrix<C64>; 2]; 2] {
    let block = |a: usize, b: usize| {
        // |a⟩⟨b| = Σ r_μ σ_μ with r_μ = ⟨b|σ_μ|a⟩ / 2
        let mut r = [ZERO; 4];
        for mu in PauliIndex::ALL {
            r[mu.index()] = pauli::pauli_matrix(mu)[(b, a)] * 0.5;
        }
        output_operator(t, &r)
    };
    [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]]
}

/// Applies one cycle to qubit 0 of a register and appends the new photon as
/// the last qubit. Works on unnormalized operators.
pub(crate) fn cycle_on_spin(blocks: &[[DMatrix<C64>; 2]; 2], m: &DMatrix<C64>) -> DMatrix<C64> {
    let rest = m.nrows() / 2;
    let out_dim = 4 * rest;
    let mut out = DMatrix::<C64>::zeros(out_dim, out_dim);
    let idx = |s: usize, r: usize, f: usize| s * 2 * rest + 2 * r + f;
    for a in 0..2 {
        for b in 0..2 {
            let e = &blocks[a][b];
            for r in 0..rest {
                for r2 in 0..rest {
                    let v = m[(a * rest + r, b * rest + r2)];
                    if v == ZERO {
                        continue;
                    }
                    for s in 0..2 {
                        for f in 0..2 {
                            for s2 in 0..2 {
                                for f2 in 0..2 {
                                    let w = e[(2 * s + f, 2 * s2 + f2)];
                                    out[(idx(s, r, f), idx(s2, r2, f2))] += w * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// State of spin + `n` photons after `n` cycles from `rho0`. Qubit 0 is the
/// spin; photon `k` (emitted in cycle `k`) is qubit `k`.
pub fn grow_state(t: &ProcessTensor, rho0: &DensityMatrix, n: usize) -> Result<MultiQubitState> {
    if rho0.n_qubits() != 1 {
        return Err(Error::invalid("initial state must be a one-qubit state"));
    }
    if n > MAX_DENSE_CYCLES {
        return Err(Error::ResourceLimit(format!(
            "{n} cycles exceed the dense-state cap of {MAX_DENSE_CYCLES}"
        )));
    }
    let blocks = transfer_blocks(t);
    let mut m = rho0.matrix().clone();
    for _ in 0..n {
        m = cycle_on_spin(&blocks, &m);
    }
    Ok(DensityMatrix::from_hermitian(m))
}
