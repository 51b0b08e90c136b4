//! Contour evaluation of Bernoulli ad-series along a linear generator.
//!
//! For a linear field `L = U·diag(g)·U` the iterated brackets of any
//! polynomial field `Y` have the pullback representation
//! `ad_L^k(Y)(u) = dᵏ/dtᵏ|₀ e^{-tL}·Y(e^{tL}u)`, and the map
//! `t ↦ e^{-tL}·Y(e^{tL}u)` is entire once states are bi-complexified.
//! Taylor coefficients are therefore recovered to near machine precision
//! by sampling on a circle `|t| = ρ` and discretizing the Cauchy integral,
//! which prices the whole series `Σ_k (B_k/k!)·ad_L^k(Y)(u)` at a fixed
//! number of evaluations of `Y` instead of nested differentiation.

use super::bernoulli::bernoulli_f64;
use crate::error::CoreError;

/// Series weights `(-1)^k·B_k`, i.e. the `x/(1-e^{-x})` convention with
/// `B₁ = +1/2`. The flow-composition inversion carries plain Bernoulli
/// numbers when written with matrix commutators `[Z, ·]`; the vector-field
/// bracket `[X, Y] = DY·X - DX·Y` is its opposite on linear fields, which
/// flips the odd-order weight. Pinned by the matrix-logarithm oracle test.
fn ad_weight(k: usize) -> f64 {
    if k == 1 {
        0.5
    } else {
        bernoulli_f64(k)
    }
}
use crate::lattice::Lattice;
use crate::state::{LatticeState, ModeDiag, PairState};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Truncation and sampling controls for the series engine.
#[derive(Debug, Clone, Copy)]
pub struct SeriesParams {
    /// Relative truncation tolerance on term norms.
    pub tol: f64,
    /// Hard cap on the series order.
    pub k_max: usize,
    /// Contour sample count.
    pub samples: usize,
    /// Contour radius in the pullback time parameter.
    pub radius: f64,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams {
            tol: 1e-12,
            k_max: 24,
            samples: 32,
            radius: 1.0,
        }
    }
}

/// `exp(t·diag(g))` together with its analytic conjugate partner
/// `exp(t·diag(conj g))`.
fn exp_diag(gen: &[C64], t: C64) -> ModeDiag {
    ModeDiag {
        fwd: gen.iter().map(|g| (t * g).exp()).collect(),
        partner: gen.iter().map(|g| (t * g.conj()).exp()).collect(),
    }
}

fn contour_points(params: &SeriesParams) -> Vec<C64> {
    let m = params.samples;
    (0..m)
        .map(|j| {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            params.radius * C64::new(phi.cos(), phi.sin())
        })
        .collect()
}

/// Raw complex-weighted accumulation used by the Cauchy sums; the weight is
/// plain linear algebra on a holomorphic map, so both halves get the same
/// factor.
fn add_weighted(acc: &mut PairState, w: C64, s: &PairState) {
    for (x, y) in acc.a.iter_mut().zip(&s.a) {
        *x += w * y;
    }
    for (x, y) in acc.b.iter_mut().zip(&s.b) {
        *x += w * y;
    }
}

/// Taylor coefficients `c_0..c_kmax` of a holomorphic map from equispaced
/// samples on the circle `|t| = ρ`.
fn contour_coefficients(
    samples: &[PairState],
    params: &SeriesParams,
    k_max: usize,
) -> Vec<PairState> {
    let m = samples.len();
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut acc = samples[0].zeros_like();
        for (j, s) in samples.iter().enumerate() {
            let phi = -2.0 * std::f64::consts::PI * (j * k % m) as f64 / m as f64;
            let w = C64::new(phi.cos(), phi.sin()) / (m as f64 * params.radius.powi(k as i32));
            add_weighted(&mut acc, w, s);
        }
        out.push(acc);
    }
    out
}

/// Accumulator for Bernoulli-weighted series with noise-floor-aware
/// termination.
///
/// High-order Cauchy coefficients of a noisily evaluated map get amplified
/// by the factorially growing Bernoulli numbers, so a convergent series can
/// show spurious late-term growth. The accumulator therefore tracks the
/// smallest term: if growth sets in after the series already converged well
/// past that floor, the sum is truncated at the minimum; growth without
/// prior convergence is genuine divergence.
struct SeriesAccumulator {
    tol: f64,
    sum: PairState,
    best_sum: PairState,
    min_norm: f64,
    prev_norm: Option<f64>,
    streak: usize,
}

/// Terms that converged at least this far below the partial sum before
/// rising again are treated as a noise floor, not divergence.
const NOISE_ACCEPT: f64 = 1e-4;

enum SeriesStep {
    Continue,
    Done(PairState),
}

impl SeriesAccumulator {
    fn new(zero: PairState, tol: f64) -> Self {
        SeriesAccumulator {
            tol,
            best_sum: zero.clone(),
            sum: zero,
            min_norm: f64::INFINITY,
            prev_norm: None,
            streak: 0,
        }
    }

    fn push(
        &mut self,
        lat: &Lattice,
        k: usize,
        term: &PairState,
    ) -> Result<SeriesStep, CoreError> {
        let tn = term.err_norm(lat);
        self.sum = self.sum.add_scaled(1.0, term);
        let sn = self.sum.err_norm(lat).max(f64::MIN_POSITIVE);
        if tn < self.min_norm {
            self.min_norm = tn;
            self.best_sum = self.sum.clone();
        }
        if k >= 2 && tn <= self.tol * sn {
            return Ok(SeriesStep::Done(self.sum.clone()));
        }
        if let Some(p) = self.prev_norm {
            if tn > p && tn > self.tol * sn {
                self.streak += 1;
                if self.streak >= 3 {
                    if self.min_norm <= NOISE_ACCEPT * sn {
                        return Ok(SeriesStep::Done(self.best_sum.clone()));
                    }
                    return Err(CoreError::NonDecayingSeries { k, ratio: tn / p });
                }
            } else {
                self.streak = 0;
            }
        }
        self.prev_norm = Some(tn);
        Ok(SeriesStep::Continue)
    }

    fn finish(self) -> PairState {
        self.sum
    }
}

/// `Σ_k B_k·c_k` with relative-tolerance truncation and divergence
/// detection over consecutive nonzero Bernoulli terms.
fn bernoulli_sum(
    lat: &Lattice,
    coeffs: &[PairState],
    params: &SeriesParams,
) -> Result<PairState, CoreError> {
    let mut acc = SeriesAccumulator::new(coeffs[0].zeros_like(), params.tol);
    for (k, c) in coeffs.iter().enumerate() {
        let b = ad_weight(k);
        if b == 0.0 {
            continue;
        }
        match acc.push(lat, k, &c.scale(b))? {
            SeriesStep::Done(sum) => return Ok(sum),
            SeriesStep::Continue => {}
        }
    }
    Ok(acc.finish())
}

type PairMap<'a> = dyn Fn(&PairState) -> Result<PairState, CoreError> + Sync + 'a;
type PairJvp<'a> = dyn Fn(&PairState, &PairState) -> Result<PairState, CoreError> + Sync + 'a;

fn pullback_samples(
    lat: &Lattice,
    gen: &[C64],
    map: &PairMap,
    z: &PairState,
    params: &SeriesParams,
) -> Result<Vec<PairState>, CoreError> {
    contour_points(params)
        .into_par_iter()
        .map(|t| {
            let fwd = exp_diag(gen, t);
            let back = exp_diag(gen, -t);
            let inner = map(&z.apply_mode_diag(lat, &fwd))?;
            Ok(inner.apply_mode_diag(lat, &back))
        })
        .collect()
}

/// `Σ_k (B_k/k!)·ad_L^k(Y)(z)` for a linear generator `L` and a field `Y`
/// given by its pair evaluation.
pub(crate) fn ad_series_eval(
    lat: &Lattice,
    gen: &[C64],
    y_eval: &PairMap,
    z: &PairState,
    params: &SeriesParams,
) -> Result<PairState, CoreError> {
    let samples = pullback_samples(lat, gen, y_eval, z, params)?;
    let coeffs = contour_coefficients(&samples, params, params.k_max);
    bernoulli_sum(lat, &coeffs, params)
}

/// Directional derivative of [`ad_series_eval`] in `w`, using an exact
/// Jacobian-vector product of `Y`.
pub(crate) fn ad_series_jvp(
    lat: &Lattice,
    gen: &[C64],
    y_jvp: &PairJvp,
    z: &PairState,
    w: &PairState,
    params: &SeriesParams,
) -> Result<PairState, CoreError> {
    let samples: Result<Vec<PairState>, CoreError> = contour_points(params)
        .into_par_iter()
        .map(|t| {
            let fwd = exp_diag(gen, t);
            let back = exp_diag(gen, -t);
            let inner = y_jvp(
                &z.apply_mode_diag(lat, &fwd),
                &w.apply_mode_diag(lat, &fwd),
            )?;
            Ok(inner.apply_mode_diag(lat, &back))
        })
        .collect();
    let coeffs = contour_coefficients(&samples?, params, params.k_max);
    bernoulli_sum(lat, &coeffs, params)
}

/// Second-order composite
/// `Σ_{p,q} (B_{p+q+1}·p!/(p+q+1)!)·ad_L^p([M, ad_L^q(Y)])(u) / 2`,
/// the recursion term built from one `M`-bracket inside the Bernoulli
/// chain. `M` is itself given as an ad-series of `Y` along `L`.
pub(crate) fn bracket_chain_eval(
    lat: &Lattice,
    gen: &[C64],
    y_eval: &PairMap,
    y_jvp: &PairJvp,
    u: &PairState,
    params: &SeriesParams,
) -> Result<PairState, CoreError> {
    let half = params.k_max / 2;
    let (p_max, q_max) = (half, half);
    let outer = contour_points(params);

    // For each outer sample t: V_q(z_t) = [M, W_q](z_t) for all q at once.
    let v_samples: Result<Vec<Vec<PairState>>, CoreError> = outer
        .par_iter()
        .map(|&t| {
            let fwd = exp_diag(gen, t);
            let z = u.apply_mode_diag(lat, &fwd);
            let m_val = ad_series_eval(lat, gen, y_eval, &z, params)?;

            // Inner contour in σ shared by W_q and jvp_{W_q}(·, M(z)).
            let w_samples = contour_points(params)
                .iter()
                .map(|&s| {
                    let sf = exp_diag(gen, s);
                    let sb = exp_diag(gen, -s);
                    let val = y_eval(&z.apply_mode_diag(lat, &sf))?;
                    Ok(val.apply_mode_diag(lat, &sb))
                })
                .collect::<Result<Vec<_>, CoreError>>()?;
            let jw_samples = contour_points(params)
                .iter()
                .map(|&s| {
                    let sf = exp_diag(gen, s);
                    let sb = exp_diag(gen, -s);
                    let val = y_jvp(
                        &z.apply_mode_diag(lat, &sf),
                        &m_val.apply_mode_diag(lat, &sf),
                    )?;
                    Ok(val.apply_mode_diag(lat, &sb))
                })
                .collect::<Result<Vec<_>, CoreError>>()?;
            let d_coeffs = contour_coefficients(&w_samples, params, q_max);
            let jw_coeffs = contour_coefficients(&jw_samples, params, q_max);

            let mut v_q = Vec::with_capacity(q_max + 1);
            let mut factorial = 1.0;
            for q in 0..=q_max {
                if q > 0 {
                    factorial *= q as f64;
                }
                let w_q = d_coeffs[q].scale(factorial);
                let jvp_w = jw_coeffs[q].scale(factorial);
                let jvp_m = ad_series_jvp(lat, gen, y_jvp, &z, &w_q, params)?;
                v_q.push(jvp_w.sub(&jvp_m));
            }
            Ok(v_q)
        })
        .collect();
    let v_samples = v_samples?;

    // Outer Cauchy pass per q, then the weighted double sum by shells
    // k = p+q+1 so the truncation logic can act on shell norms.
    let mut coeffs_pq: Vec<Vec<PairState>> = Vec::with_capacity(q_max + 1);
    for q in 0..=q_max {
        let samples_q: Vec<PairState> = v_samples.iter().map(|v| v[q].clone()).collect();
        coeffs_pq.push(contour_coefficients(&samples_q, params, p_max));
    }

    let mut acc = SeriesAccumulator::new(u.zeros_like(), params.tol);
    for k in 1..=params.k_max.min(p_max + q_max + 1) {
        if ad_weight(k) == 0.0 {
            continue;
        }
        let mut shell = u.zeros_like();
        for p in 0..k {
            let q = k - 1 - p;
            if p > p_max || q > q_max {
                continue;
            }
            // weight(k)·p!/k!
            let mut w = ad_weight(k);
            for i in (p + 1)..=k {
                w /= i as f64;
            }
            shell = shell.add_scaled(0.5 * w, &coeffs_pq[q][p]);
        }
        match acc.push(lat, k, &shell)? {
            SeriesStep::Done(sum) => return Ok(sum),
            SeriesStep::Continue => {}
        }
    }
    Ok(acc.finish())
}
