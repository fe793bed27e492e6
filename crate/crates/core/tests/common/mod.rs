#![allow(dead_code)]

use cluster_tomography::estimate::{project_to_physical, MeasurementRecord};
use cluster_tomography::linalg::{hermitize8, Mat8, C64};
use cluster_tomography::process::{
    choi_to_tensor, compose_noise, ideal_process, ChoiMatrix, NoiseChannel, ProcessTensor,
};
use cluster_tomography::simdata::{simulate_dataset, NoiseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng) -> Mat8 {
    Mat8::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng) -> Mat8 {
    hermitize8(&random_matrix(rng))
}

/// Full-rank PSD matrix with trace 4, not necessarily TP.
pub fn random_psd(rng: &mut ChaCha8Rng) -> Mat8 {
    let b = random_matrix(rng);
    let m = b * b.adjoint();
    let tr = m.trace().re;
    m.scale(4.0 / tr)
}

/// Random CPTP process tensor.
pub fn random_physical(rng: &mut ChaCha8Rng) -> ProcessTensor {
    let t = choi_to_tensor(&ChoiMatrix::new(random_psd(rng)).unwrap()).unwrap();
    choi_to_tensor(&project_to_physical(&t).unwrap()).unwrap()
}

pub fn depolarized_ideal(p: f64) -> ProcessTensor {
    compose_noise(&ideal_process(), NoiseChannel::Depolarize(p)).unwrap()
}

pub fn noisy_dataset(truth: &ProcessTensor, seed: u64) -> Vec<MeasurementRecord> {
    simulate_dataset(
        truth,
        &NoiseSpec {
            seed,
            ..NoiseSpec::default()
        },
    )
    .unwrap()
}

pub fn noiseless_dataset(truth: &ProcessTensor) -> Vec<MeasurementRecord> {
    simulate_dataset(truth, &NoiseSpec::noiseless()).unwrap()
}

pub fn max_abs(m: &Mat8) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn re_trace(a: &Mat8, b: &Mat8) -> f64 {
    (a * b).trace().re
}

/// `conj(σ_μ) ⊗ I ⊗ I` built from a tensor with a single unit entry.
pub fn spin_block(mu: usize) -> Mat8 {
    let mut phi = [0.0; 64];
    phi[16 * mu] = 1.0;
    *cluster_tomography::process::tensor_to_choi(&ProcessTensor::from_flat(&phi)).matrix()
}

/// `Tr_23` of an 8×8 matrix as four complex entries `(00, 01, 10, 11)`.
pub fn input_marginal(m: &Mat8) -> [C64; 4] {
    let mut out = [C64::new(0.0, 0.0); 4];
    for a in 0..2 {
        for b in 0..2 {
            out[2 * a + b] = (0..4).map(|k| m[(4 * a + k, 4 * b + k)]).sum();
        }
    }
    out
}

pub fn sqrt_psd(m: &Mat8) -> Mat8 {
    let eig = nalgebra::SymmetricEigen::new(hermitize8(m));
    let v = eig.eigenvectors;
    let scaled = Mat8::from_fn(|i, j| v[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt());
    scaled * v.adjoint()
}
