//! Numeric extraction of the first remainder field `X_{P_{1,h}}`.
//!
//! The mismatch `D(ε) = Φ^ε_{P₀,h}(u) - Ψʰ_ε(u)` vanishes to second order
//! in ε; its ε²-coefficient, with flipped sign, is the Hamiltonian field of
//! `P_{1,h}`. The coefficient is recovered by a degree-4 least-squares fit
//! in ε over the geometric stencil `{ε₀/2^s}`, and the fit residual doubles
//! as a consistency check on the stencil placement.

use crate::error::CoreError;
use crate::lattice::{FieldState, Lattice, ModelParams};
use crate::state::{LatticeState, PairState};
use crate::stepper::{psi_fixed_point, rk8_fixed};

const STENCIL: usize = 6;
const FIT_DEGREE: usize = 4;
const FIT_TOL: f64 = 0.02;
const EPS_BASE: f64 = 0.03;

/// Diagnostics of one extraction fit.
#[derive(Debug, Clone, Copy)]
pub struct RemainderReport {
    /// Largest stencil value actually used.
    pub eps0: f64,
    /// Max-norm fit residual relative to the largest data point.
    pub residual: f64,
    /// Relative size of the fitted ε⁰ coefficient (vanishes analytically).
    pub c0_rel: f64,
    /// Relative size of the fitted ε¹ coefficient (vanishes analytically).
    pub c1_rel: f64,
}

fn half_norm(lat: &Lattice, v: &[num_complex::Complex64]) -> f64 {
    crate::lattice::norm_dx(lat, &FieldState::new(v.to_vec()))
}

/// Fit weights `(VᵀV)⁻¹Vᵀ` for the degree-4 model on `x_s = 2^{-s}`.
fn fit_weights() -> nalgebra::DMatrix<f64> {
    let v = nalgebra::DMatrix::<f64>::from_fn(STENCIL, FIT_DEGREE + 1, |s, j| {
        (2.0_f64.powi(-(s as i32))).powi(j as i32)
    });
    let vt = v.transpose();
    let gram = &vt * &v;
    gram.try_inverse().expect("fit Vandermonde is invertible") * vt
}

pub(crate) fn extract_remainder_pair(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    z: &PairState,
) -> Result<(PairState, RemainderReport), CoreError> {
    if params.lambda == 0 {
        return Ok((
            z.zeros_like(),
            RemainderReport {
                eps0: 0.0,
                residual: 0.0,
                c0_rel: 0.0,
                c1_rel: 0.0,
            },
        ));
    }
    let amplitude = half_norm(lat, &z.a).max(half_norm(lat, &z.b));
    if amplitude < 1e-150 {
        return Ok((
            z.zeros_like(),
            RemainderReport {
                eps0: 0.0,
                residual: 0.0,
                c0_rel: 0.0,
                c1_rel: 0.0,
            },
        ));
    }
    let mut eps0 = (EPS_BASE * amplitude.powi(-2 * params.r as i32)).clamp(1e-6, 0.05);
    let fp_tol = 1e-13 * amplitude.max(1.0);

    let mut last_err = None;
    for _ in 0..6 {
        match extract_at(lat, params, h, z, eps0, fp_tol) {
            Ok(out) => return Ok(out),
            Err(e @ CoreError::NoConvergence { .. }) => {
                last_err = Some(e);
                eps0 *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn extract_at(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    z: &PairState,
    eps0: f64,
    fp_tol: f64,
) -> Result<(PairState, RemainderReport), CoreError> {
    // Nonlinear factor at each stencil point, warm-started upward in ε.
    let mut psi = vec![z.zeros_like(); STENCIL];
    let mut warm: Option<PairState> = None;
    for s in (0..STENCIL).rev() {
        let eps = eps0 * 2.0_f64.powi(-(s as i32));
        let (v, _) = psi_fixed_point(lat, params, h, eps, z, fp_tol, 300, false, warm.as_ref())?;
        warm = Some(v.clone());
        psi[s] = v;
    }

    // Flow of the P₀ field through the same dyadic points, one pass.
    let field = |w: &PairState| super::p0_pair_eval(lat, params, h, w);
    let amp = half_norm(lat, &z.a).max(half_norm(lat, &z.b));
    let lip = (2 * params.r + 1) as f64 * (1.5 * amp).powi(2 * params.r as i32);
    let mut flow = vec![z.zeros_like(); STENCIL];
    let mut cur = z.clone();
    let mut reached = 0.0;
    for s in (0..STENCIL).rev() {
        let target = eps0 * 2.0_f64.powi(-(s as i32));
        let len = target - reached;
        let n_seg = ((len * lip / 0.04).ceil() as usize).clamp(2, 64);
        cur = rk8_fixed(&field, &cur, len, n_seg)?;
        reached = target;
        flow[s] = cur.clone();
    }

    let diff: Vec<PairState> = (0..STENCIL).map(|s| flow[s].sub(&psi[s])).collect();
    let max_d = diff
        .iter()
        .map(|d| d.err_norm(lat))
        .fold(0.0_f64, f64::max);
    if max_d == 0.0 {
        return Ok((
            z.zeros_like(),
            RemainderReport {
                eps0,
                residual: 0.0,
                c0_rel: 0.0,
                c1_rel: 0.0,
            },
        ));
    }

    let w = fit_weights();
    let mut coeffs: Vec<PairState> = Vec::with_capacity(FIT_DEGREE + 1);
    for j in 0..=FIT_DEGREE {
        let mut acc = z.zeros_like();
        for (s, d) in diff.iter().enumerate() {
            acc = acc.add_scaled(w[(j, s)], d);
        }
        coeffs.push(acc);
    }

    let mut residual: f64 = 0.0;
    for (s, d) in diff.iter().enumerate() {
        let x = 2.0_f64.powi(-(s as i32));
        let mut model = z.zeros_like();
        let mut xj = 1.0;
        for c in &coeffs {
            model = model.add_scaled(xj, c);
            xj *= x;
        }
        residual = residual.max(model.sub(d).err_norm(lat));
    }
    let residual = residual / max_d;
    if residual > FIT_TOL {
        return Err(CoreError::IllConditionedFit {
            residual,
            tolerance: FIT_TOL,
        });
    }

    let report = RemainderReport {
        eps0,
        residual,
        c0_rel: coeffs[0].err_norm(lat) / max_d,
        c1_rel: coeffs[1].err_norm(lat) / max_d,
    };
    Ok((coeffs[2].scale(-1.0 / (eps0 * eps0)), report))
}
