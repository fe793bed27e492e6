//! One step of the twisted gradient descent on the Choi matrix.
//!
//! With `A` the current Choi matrix and `G` the Frobenius gradient, the step
//! is `A ↦ A − q √A G_c √A` where `G_c = G + Σ_μ λ_μ K_μ` and
//! `K_μ = conj(σ_μ) ⊗ I ⊗ I`. The multipliers make `Tr_23(√A G_c √A) = 0`, so
//! the partial trace over the outputs, and with it trace preservation, is
//! untouched. Positivity holds for `q < 1/λ_max(G_c)` on the support of `A`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat8, PsdFactor};
use crate::pauli::BlochVector;
use crate::process::{self, ChoiMatrix};

use super::fit::FitConfig;
use super::objective::{self, Design, InitialStates};
use super::record::MeasurementRecord;

/// Relative eigenvalue level below which a direction counts as outside the
/// support of `A`.
const SUPPORT_FLOOR: f64 = 1e-14;
const GOLDEN_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 60;

/// Outcome of a single twisted step.
#[derive(Clone, Debug)]
pub struct TwistedStep {
    pub choi: ChoiMatrix,
    pub q: f64,
    pub objective: f64,
    /// No descent direction was found; `choi` is the input.
    pub stationary: bool,
    pub multipliers: [f64; 4],
    pub multiplier_residual: f64,
}

/// `K_μ = conj(σ_μ) ⊗ I ⊗ I`.
pub(crate) fn spin_blocks() -> &'static [Mat8; 4] {
    static BLOCKS: OnceLock<[Mat8; 4]> = OnceLock::new();
    BLOCKS.get_or_init(|| {
        std::array::from_fn(|mu| {
            let mut e = [0.0; 64];
            e[16 * mu] = 1.0;
            process::choi_from_flat(&e)
        })
    })
}

fn re_trace_product(a: &Mat8, b: &Mat8) -> f64 {
    let mut acc = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Multipliers `λ` for the gradient `g` at a Choi matrix with square root
/// `sqrt_a`, and the remaining violation of `Tr_23(√A G_c √A) = 0` relative to
/// `max(1, |uncorrected violation|)`.
pub(crate) fn multipliers_for(sqrt_a: &Mat8, g: &Mat8) -> ([f64; 4], f64) {
    let k = spin_blocks();
    let sandwiched: [Mat8; 4] = std::array::from_fn(|kappa| sqrt_a * k[kappa] * sqrt_a);
    let m = Matrix4::from_fn(|kappa, mu| re_trace_product(&k[mu], &sandwiched[kappa]));
    let b = Vector4::from_fn(|kappa, _| re_trace_product(g, &sandwiched[kappa]));

    let svd = m.svd(true, true);
    let top = svd.singular_values.max();
    let bottom = svd.singular_values.min();
    if !(bottom > 1e-12 * top) {
        log::warn!(
            "multiplier system is singular (singular values {:?}); using least squares",
            svd.singular_values.as_slice()
        );
    }
    let lambda = svd
        .solve(&(-b), 1e-12 * top.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| Vector4::zeros());
    let residual = (m * lambda + b).amax() / b.amax().max(1.0);
    ([lambda[0], lambda[1], lambda[2], lambda[3]], residual)
}

/// Lagrange multipliers keeping the twisted step trace preserving.
pub fn lagrange_multipliers(a: &ChoiMatrix, g: &Mat8) -> Result<[f64; 4]> {
    let fac = linalg::psd_factor8(a.matrix());
    Ok(multipliers_for(&fac.sqrt, g).0)
}

/// `(1 − ε) A + ε I/2`. Keeps the trace at 4 and the partial trace at `2 I`.
pub fn epsilon_nudge(a: &ChoiMatrix, epsilon: f64) -> ChoiMatrix {
    ChoiMatrix(nudge(a.matrix(), epsilon))
}

pub(crate) fn nudge(a: &Mat8, epsilon: f64) -> Mat8 {
    a.scale(1.0 - epsilon) + Mat8::identity().scale(0.5 * epsilon)
}

/// Restores `φ^μ_{OO} = δ_{μO}/2` exactly and hermitizes.
pub(crate) fn tp_correct(a: &Mat8) -> Mat8 {
    let mut out = linalg::hermitize8(a);
    for (mu, k) in spin_blocks().iter().enumerate() {
        let current = re_trace_product(&out, k) / 8.0;
        let target = if mu == 0 { 0.5 } else { 0.0 };
        out += k.scale(target - current);
    }
    out
}

/// Largest eigenvalue of `g` compressed to the support of `A`.
fn support_max_eigenvalue(fac: &PsdFactor, g: &Mat8) -> f64 {
    let top = fac.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l));
    let cols: Vec<usize> = (0..8)
        .filter(|&j| fac.eigenvalues[j] > SUPPORT_FLOOR * top)
        .collect();
    if cols.is_empty() {
        return 0.0;
    }
    let v = DMatrix::from_fn(8, cols.len(), |i, j| fac.eigenvectors[(i, cols[j])]);
    let compressed = v.adjoint() * linalg::to_dynamic(g) * &v;
    SymmetricEigen::new(linalg::hermitize(&compressed))
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |m, &l| m.max(l))
}

/// Largest eigenvalue of `A^{-1/2} D A^{-1/2}`, or `None` when `A` is not of
/// full rank.
fn whitened_max_eigenvalue(fac: &PsdFactor, d: &Mat8) -> Option<f64> {
    let top = fac.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l));
    if fac.eigenvalues.iter().any(|&l| !(l > SUPPORT_FLOOR * top)) {
        return None;
    }
    let w = Mat8::from_fn(|i, j| fac.eigenvectors[(i, j)] / fac.eigenvalues[j].sqrt());
    let m = linalg::hermitize8(&(w.adjoint() * d * w));
    Some(linalg::eigenvalues8(&m)[7])
}

/// Search direction carried between iterations of the conjugate variant.
#[derive(Clone, Debug)]
pub(crate) struct Momentum {
    direction: Mat8,
    gradient: Mat8,
    preconditioned: Mat8,
}

/// Public entry point; see the module docs.
pub fn twisted_step(
    a: &ChoiMatrix,
    data: &[MeasurementRecord],
    s_prime: &InitialStates,
    config: &FitConfig,
) -> Result<TwistedStep> {
    let design = Design::new(data)?;
    let s = design.align(s_prime)?;
    Ok(step(&design, a.matrix(), &s, config, None)?.0)
}

/// `(slope, curvature)` of `F(A − qD) = F(A) − q·slope + q²·curvature`.
fn ray_coefficients(design: &Design, phi_a: &[f64; 64], d: &Mat8, s: &[BlochVector]) -> (f64, f64) {
    let phi_d = process::flat_from_choi(d);
    let mut slope = 0.0;
    let mut curvature = 0.0;
    for row in &design.rows {
        let sv = &s[row.init].0;
        let m0 = Design::model(phi_a, sv, &row.p);
        let md = Design::model(&phi_d, sv, &row.p);
        for nu in 0..4 {
            slope += 2.0 * row.weight[nu] * (m0[nu] - row.target[nu]) * md[nu];
            curvature += row.weight[nu] * md[nu] * md[nu];
        }
    }
    (slope, curvature)
}

/// One step along the twisted direction, or, when `prev` is given, along
/// `√A G_c √A + β D_prev` with a Polak–Ribière `β`. The returned momentum is
/// `None` whenever the next step should restart from the plain direction.
pub(crate) fn step(
    design: &Design,
    a: &Mat8,
    s: &[BlochVector],
    config: &FitConfig,
    prev: Option<&Momentum>,
) -> Result<(TwistedStep, Option<Momentum>)> {
    let phi_a = process::flat_from_choi(a);
    let f0 = design.objective(&phi_a, s);
    if !f0.is_finite() {
        return Err(Error::Numerical("objective is not finite".into()));
    }
    let fac = linalg::psd_factor8(a);
    let g = objective::choi_gradient(design, a, s);
    let (multipliers, multiplier_residual) = multipliers_for(&fac.sqrt, &g);
    let mut gc = g;
    for (k, l) in spin_blocks().iter().zip(multipliers) {
        gc += k.scale(l);
    }
    let z = linalg::hermitize8(&(fac.sqrt * gc * fac.sqrt));

    let unchanged = TwistedStep {
        choi: ChoiMatrix(*a),
        q: 0.0,
        objective: f0,
        stationary: true,
        multipliers,
        multiplier_residual,
    };

    let (mut d, mut slope, mut curvature) = {
        let (sl, cu) = ray_coefficients(design, &phi_a, &z, s);
        (z, sl, cu)
    };
    let mut q_cap = None;
    if let Some(m) = prev {
        let denom = re_trace_product(&m.gradient, &m.preconditioned);
        let beta = (re_trace_product(&gc, &(z - m.preconditioned)) / denom).max(0.0);
        if beta > 0.0 && beta.is_finite() {
            let dm = z + m.direction.scale(beta);
            let (sl, cu) = ray_coefficients(design, &phi_a, &dm, s);
            if let (true, Some(lmax)) = (sl > 0.0, whitened_max_eigenvalue(&fac, &dm)) {
                d = dm;
                slope = sl;
                curvature = cu;
                q_cap = Some(if lmax > 0.0 { config.q_fraction / lmax } else { f64::INFINITY });
            }
        }
    }
    if !(slope > 0.0) || !slope.is_finite() {
        return Ok((unchanged, None));
    }
    let q_cap = q_cap.unwrap_or_else(|| {
        let lmax = support_max_eigenvalue(&fac, &gc);
        if lmax > 0.0 {
            config.q_fraction / lmax
        } else {
            f64::INFINITY
        }
    });
    let q_star = if curvature > 0.0 {
        slope / (2.0 * curvature)
    } else {
        f64::INFINITY
    };
    let q = q_star.min(q_cap);
    if !q.is_finite() || q <= 0.0 {
        return Ok((unchanged, None));
    }
    let truncated = q_cap < q_star;

    let eval = |q: f64| {
        let next = tp_correct(&(a - d.scale(q)));
        let f = design.objective(&process::flat_from_choi(&next), s);
        (next, f)
    };

    let (mut next, mut f) = eval(q);
    let mut q_used = q;
    if !(f <= f0) {
        // rounding pushed the exact minimizer uphill; search numerically
        let (qg, (ng, fg)) = golden_section(&eval, q, config.line_search_tolerance);
        if fg <= f0 {
            next = ng;
            f = fg;
            q_used = qg;
        } else {
            let mut qh = q;
            let mut found = false;
            for _ in 0..MAX_HALVINGS {
                qh *= 0.5;
                let (nh, fh) = eval(qh);
                if fh <= f0 {
                    next = nh;
                    f = fh;
                    q_used = qh;
                    found = true;
                    break;
                }
            }
            if !found {
                return Ok((unchanged, None));
            }
        }
    }

    let momentum = (!truncated && q_used == q).then_some(Momentum {
        direction: d,
        gradient: gc,
        preconditioned: z,
    });
    Ok((
        TwistedStep {
            choi: ChoiMatrix(next),
            q: q_used,
            objective: f,
            stationary: false,
            multipliers,
            multiplier_residual,
        },
        momentum,
    ))
}

fn golden_section<F>(eval: &F, hi: f64, tol: f64) -> (f64, (Mat8, f64))
where
    F: Fn(f64) -> (Mat8, f64),
{
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut up) = (0.0, hi);
    let mut x1 = up - inv_phi * (up - lo);
    let mut x2 = lo + inv_phi * (up - lo);
    let mut f1 = eval(x1).1;
    let mut f2 = eval(x2).1;
    for _ in 0..GOLDEN_ITERATIONS {
        if (up - lo) <= tol * hi {
            break;
        }
        if f1 <= f2 {
            up = x2;
            x2 = x1;
            f2 = f1;
            x1 = up - inv_phi * (up - lo);
            f1 = eval(x1).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (up - lo);
            f2 = eval(x2).1;
        }
    }
    let q = if f1 <= f2 { x1 } else { x2 };
    (q, eval(q))
}
