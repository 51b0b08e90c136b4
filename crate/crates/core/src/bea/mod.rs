//! Vector-field algebra and the modified-energy machinery.
//!
//! Fields are evaluable maps on lattice states with optional exact
//! Jacobian-vector products, bi-complexified (pair) evaluation for contour
//! work, and, for linear fields, a mode-space generator. On top of these
//! the module builds the conserved-to-high-order modified energies
//! `H_h^{(N)} = A₀ + Z_{1,0} + h·(Z_{2,0} + Z_{1,1}) + …` of the midpoint
//! rule, with the `Z` terms produced by a Bernoulli ad-series recursion
//! along the linear generator and the first remainder Hamiltonian
//! extracted numerically from the flow mismatch.

pub mod bernoulli;
mod pullback;
mod remainder;

pub use bernoulli::bernoulli;
pub use pullback::SeriesParams;
pub use remainder::RemainderReport;

use crate::error::CoreError;
use crate::lattice::{FieldState, Lattice, ModelParams, ResolventSign};
use crate::state::{LatticeState, ModeDiag, PairState};
use num_complex::Complex64 as C64;
use std::sync::Arc;

type EvalFn = dyn Fn(&FieldState) -> Result<FieldState, CoreError> + Send + Sync;
type JvpFn = dyn Fn(&FieldState, &FieldState) -> Result<FieldState, CoreError> + Send + Sync;
type PairEvalFn = dyn Fn(&PairState) -> Result<PairState, CoreError> + Send + Sync;
type PairJvpFn = dyn Fn(&PairState, &PairState) -> Result<PairState, CoreError> + Send + Sync;

/// An evaluable vector field with optional derivative and lift structure.
#[derive(Clone)]
pub struct FieldOperator {
    lat: Lattice,
    degree: Option<u32>,
    eval: Arc<EvalFn>,
    jvp: Option<Arc<JvpFn>>,
    pair_eval: Option<Arc<PairEvalFn>>,
    pair_jvp: Option<Arc<PairJvpFn>>,
    /// Mode-space diagonal `g` of a linear field `u ↦ U·diag(g)·U·u`.
    generator: Option<Arc<Vec<C64>>>,
}

impl FieldOperator {
    /// Field from plain closures; `jvp = None` falls back to central finite
    /// differences in the real representation.
    pub fn from_closures(
        lat: &Lattice,
        degree: Option<u32>,
        eval: Arc<EvalFn>,
        jvp: Option<Arc<JvpFn>>,
    ) -> Self {
        FieldOperator {
            lat: lat.clone(),
            degree,
            eval,
            jvp,
            pair_eval: None,
            pair_jvp: None,
            generator: None,
        }
    }

    /// Linear field `u ↦ M·u` from a dense complex matrix (row-major);
    /// exact derivative and pair lift. Intended for small oracle problems.
    pub fn linear_dense(lat: &Lattice, rows: Vec<Vec<C64>>) -> Self {
        let n = rows.len();
        let apply = move |m: &[Vec<C64>], v: &[C64], conj: bool| -> Vec<C64> {
            (0..n)
                .map(|i| {
                    m[i].iter()
                        .zip(v)
                        .map(|(c, x)| if conj { c.conj() * x } else { c * x })
                        .sum()
                })
                .collect()
        };
        let rows = Arc::new(rows);
        let r1 = rows.clone();
        let eval =
            Arc::new(move |u: &FieldState| Ok(FieldState::new(apply(&r1, &u.values, false))));
        let r2 = rows.clone();
        let jvp: Arc<JvpFn> = Arc::new(move |_: &FieldState, d: &FieldState| {
            Ok(FieldState::new(apply(&r2, &d.values, false)))
        });
        let r3 = rows.clone();
        let pair_eval: Arc<PairEvalFn> = Arc::new(move |z: &PairState| {
            Ok(PairState {
                a: apply(&r3, &z.a, false),
                b: apply(&r3, &z.b, true),
            })
        });
        let r4 = rows.clone();
        let pair_jvp: Arc<PairJvpFn> = Arc::new(move |_: &PairState, d: &PairState| {
            Ok(PairState {
                a: apply(&r4, &d.a, false),
                b: apply(&r4, &d.b, true),
            })
        });
        FieldOperator {
            lat: lat.clone(),
            degree: Some(1),
            eval,
            jvp: Some(jvp),
            pair_eval: Some(pair_eval),
            pair_jvp: Some(pair_jvp),
            generator: None,
        }
    }

    /// Linear field `u ↦ U·diag(g)·U·u`; evaluation, derivative and pair
    /// lift are all exact.
    pub fn linear_mode_diag(lat: &Lattice, gen: Vec<C64>) -> Self {
        let gen = Arc::new(gen);
        let diag = ModeDiag::conjugate_pair(gen.as_ref().clone());
        let l1 = lat.clone();
        let d1 = diag.clone();
        let eval = Arc::new(move |u: &FieldState| Ok(LatticeState::apply_mode_diag(u, &l1, &d1)));
        let l2 = lat.clone();
        let d2 = diag.clone();
        let jvp: Arc<JvpFn> = Arc::new(move |_: &FieldState, d: &FieldState| {
            Ok(LatticeState::apply_mode_diag(d, &l2, &d2))
        });
        let l3 = lat.clone();
        let d3 = diag.clone();
        let pair_eval: Arc<PairEvalFn> =
            Arc::new(move |z: &PairState| Ok(z.apply_mode_diag(&l3, &d3)));
        let l4 = lat.clone();
        let pair_jvp: Arc<PairJvpFn> =
            Arc::new(move |_: &PairState, d: &PairState| Ok(d.apply_mode_diag(&l4, &diag)));
        FieldOperator {
            lat: lat.clone(),
            degree: Some(1),
            eval,
            jvp: Some(jvp),
            pair_eval: Some(pair_eval),
            pair_jvp: Some(pair_jvp),
            generator: Some(gen),
        }
    }

    pub fn degree(&self) -> Option<u32> {
        self.degree
    }

    pub fn eval(&self, u: &FieldState) -> Result<FieldState, CoreError> {
        (self.eval)(u)
    }

    /// Directional derivative at `u` in direction `dir`: exact when the
    /// field carries one, otherwise central finite differences with step
    /// `1e-5·max(1, ‖u‖_δx)` in the real representation.
    pub fn jvp(&self, u: &FieldState, dir: &FieldState) -> Result<FieldState, CoreError> {
        if let Some(j) = &self.jvp {
            return j(u, dir);
        }
        let dn = crate::lattice::norm_dx(&self.lat, dir);
        if dn == 0.0 {
            return Ok(FieldState::zeros(u.len()));
        }
        let step = 1e-5 * crate::lattice::norm_dx(&self.lat, u).max(1.0) / dn;
        let plus = (self.eval)(&u.add_scaled(step, dir))?;
        let minus = (self.eval)(&u.add_scaled(-step, dir))?;
        Ok(plus.sub(&minus).scale(0.5 / step))
    }

    #[allow(dead_code)] // exercised by the series tests
    pub(crate) fn pair_eval(&self, z: &PairState) -> Result<PairState, CoreError> {
        match &self.pair_eval {
            Some(f) => f(z),
            None => Err(CoreError::InvalidParameter {
                name: "field".into(),
                reason: "pair evaluation is not available for this field".into(),
            }),
        }
    }

    pub(crate) fn has_pair_eval(&self) -> bool {
        self.pair_eval.is_some()
    }

    pub(crate) fn generator(&self) -> Option<&[C64]> {
        self.generator.as_deref().map(|v| v.as_slice())
    }
}

/// CFL data: truncation order, nonlinearity degree and the margin `ε̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflSpec {
    pub n_order: u32,
    pub r: u32,
    pub eps_tilde: f64,
}

impl CflSpec {
    pub fn new(n_order: u32, r: u32, eps_tilde: f64) -> Result<Self, CoreError> {
        if !(eps_tilde > 0.0 && eps_tilde < std::f64::consts::PI) {
            return Err(CoreError::InvalidParameter {
                name: "eps_tilde".into(),
                reason: "must lie in (0, π)".into(),
            });
        }
        if r < 1 {
            return Err(CoreError::InvalidParameter {
                name: "r".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(CflSpec {
            n_order,
            r,
            eps_tilde,
        })
    }
}

/// Largest admissible step `δx²·tan((π-ε̃)/(2(2r(N+1)+1)))`.
pub fn cfl_max_step(delta_x: f64, spec: &CflSpec) -> f64 {
    let d = 2 * spec.r * (spec.n_order + 1) + 1;
    delta_x * delta_x * ((std::f64::consts::PI - spec.eps_tilde) / (2.0 * d as f64)).tan()
}

/// Controls for the modified-energy pipeline.
#[derive(Debug, Clone, Copy)]
pub struct BeaConfig {
    pub series: SeriesParams,
    pub eps_tilde: f64,
}

impl Default for BeaConfig {
    fn default() -> Self {
        BeaConfig {
            series: SeriesParams::default(),
            eps_tilde: std::f64::consts::FRAC_PI_2,
        }
    }
}

fn a0_weights(lat: &Lattice, h: f64) -> Vec<f64> {
    lat.eigenvalues()
        .iter()
        .map(|&l| {
            if h == 0.0 {
                l
            } else {
                (2.0 / h) * (h * l / 2.0).atan()
            }
        })
        .collect()
}

/// `A₀(u) = δx·ūᵀ·(2/h)·arctan(hA/2)·u`, the quadratic part of the
/// modified energy.
pub fn a0_energy(lat: &Lattice, h: f64, u: &FieldState) -> f64 {
    let m = lat.to_modes(u);
    lat.delta_x()
        * m.values
            .iter()
            .zip(a0_weights(lat, h))
            .map(|(z, w)| w * z.norm_sqr())
            .sum::<f64>()
}

/// Linear field `u ↦ (2i/h)·arctan(hA/2)·u`; its time-`h` flow is `R(hA)`.
pub fn a0_field(lat: &Lattice, h: f64) -> FieldOperator {
    let gen = a0_weights(lat, h)
        .into_iter()
        .map(|w| C64::new(0.0, w))
        .collect();
    FieldOperator::linear_mode_diag(lat, gen)
}

/// Time-1 convention of the same generator, `u ↦ 2i·arctan(hA/2)·u`; this
/// is the linear field entering the ad-series recursion.
fn a0_field_time1(lat: &Lattice, h: f64) -> FieldOperator {
    let gen = lat
        .eigenvalues()
        .iter()
        .map(|&l| C64::new(0.0, 2.0 * (h * l / 2.0).atan()))
        .collect();
    FieldOperator::linear_mode_diag(lat, gen)
}

/// `P_{0,h}(u) = (λ/(r+1))·δx·Σ|w|^{2r+2}` with `w = (1-ihA/2)⁻¹u`.
pub fn p0_energy(lat: &Lattice, params: &ModelParams, h: f64, u: &FieldState) -> f64 {
    let w = crate::lattice::apply_cayley_resolvent(lat, h, ResolventSign::Minus, u);
    let p = params.r as i32 + 1;
    f64::from(params.lambda) / (params.r as f64 + 1.0)
        * lat.delta_x()
        * w.values.iter().map(|z| z.norm_sqr().powi(p)).sum::<f64>()
}

fn p0_pair_eval(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    z: &PairState,
) -> Result<PairState, CoreError> {
    let r = params.r as i32;
    let lam = f64::from(params.lambda);
    let minus = ModeDiag {
        fwd: lat.resolvent_diagonal(h, ResolventSign::Minus),
        partner: lat.resolvent_diagonal(h, ResolventSign::Plus),
    };
    let plus = ModeDiag {
        fwd: lat.resolvent_diagonal(h, ResolventSign::Plus),
        partner: lat.resolvent_diagonal(h, ResolventSign::Minus),
    };
    let w = z.apply_mode_diag(lat, &minus);
    let n = w.dim();
    let mut fa = Vec::with_capacity(n);
    let mut fb = Vec::with_capacity(n);
    for i in 0..n {
        let prod = (w.a[i] * w.b[i]).powi(r);
        fa.push(lam * prod * w.a[i]);
        fb.push(lam * prod * w.b[i]);
    }
    let f = PairState { a: fa, b: fb };
    Ok(f
        .apply_mode_diag(lat, &plus)
        .mul_split(C64::new(0.0, 1.0), C64::new(0.0, -1.0)))
}

fn p0_pair_jvp(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    z: &PairState,
    dir: &PairState,
) -> Result<PairState, CoreError> {
    let r = params.r as i32;
    let lam = f64::from(params.lambda);
    let minus = ModeDiag {
        fwd: lat.resolvent_diagonal(h, ResolventSign::Minus),
        partner: lat.resolvent_diagonal(h, ResolventSign::Plus),
    };
    let plus = ModeDiag {
        fwd: lat.resolvent_diagonal(h, ResolventSign::Plus),
        partner: lat.resolvent_diagonal(h, ResolventSign::Minus),
    };
    let w = z.apply_mode_diag(lat, &minus);
    let dw = dir.apply_mode_diag(lat, &minus);
    let n = w.dim();
    let rp1 = (r + 1) as f64;
    let rf = r as f64;
    let mut da = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    for i in 0..n {
        let (wa, wb) = (w.a[i], w.b[i]);
        let p_r = (wa * wb).powi(r);
        let p_rm1 = if r >= 1 { (wa * wb).powi(r - 1) } else { C64::new(1.0, 0.0) };
        // d(w_a^{r+1}·w_b^r) and its coefficient-conjugate partner.
        da.push(lam * (rp1 * p_r * dw.a[i] + rf * p_rm1 * wa * wa * dw.b[i]));
        db.push(lam * (rp1 * p_r * dw.b[i] + rf * p_rm1 * wb * wb * dw.a[i]));
    }
    let f = PairState { a: da, b: db };
    Ok(f
        .apply_mode_diag(lat, &plus)
        .mul_split(C64::new(0.0, 1.0), C64::new(0.0, -1.0)))
}

/// Hamiltonian field of `P_{0,h}`:
/// `X_{P₀}(u) = iλ·(1+ihA/2)⁻¹·(|w|^{2r}∘w)`, `w = (1-ihA/2)⁻¹u`, with an
/// exact Jacobian-vector product.
pub fn p0_field(lat: &Lattice, params: &ModelParams, h: f64) -> FieldOperator {
    let degree = 2 * params.r + 1;
    let l1 = lat.clone();
    let p1 = *params;
    let eval = Arc::new(move |u: &FieldState| {
        Ok(p0_pair_eval(&l1, &p1, h, &PairState::diagonal(u))?.a_part())
    });
    let l2 = lat.clone();
    let p2 = *params;
    let jvp: Arc<JvpFn> = Arc::new(move |u: &FieldState, d: &FieldState| {
        Ok(p0_pair_jvp(
            &l2,
            &p2,
            h,
            &PairState::diagonal(u),
            &PairState::diagonal(d),
        )?
        .a_part())
    });
    let l3 = lat.clone();
    let p3 = *params;
    let pair_eval: Arc<PairEvalFn> = Arc::new(move |z: &PairState| p0_pair_eval(&l3, &p3, h, z));
    let l4 = lat.clone();
    let p4 = *params;
    let pair_jvp: Arc<PairJvpFn> =
        Arc::new(move |z: &PairState, d: &PairState| p0_pair_jvp(&l4, &p4, h, z, d));
    FieldOperator {
        lat: lat.clone(),
        degree: Some(degree),
        eval,
        jvp: Some(jvp),
        pair_eval: Some(pair_eval),
        pair_jvp: Some(pair_jvp),
        generator: None,
    }
}

/// Conjugation by the propagator: `u ↦ R(hA)·X(R(hA)*·u)`, the field of
/// `P∘R(hA)*` when `X = X_P`.
pub fn conjugate_field(lat: &Lattice, h: f64, x: &FieldOperator) -> FieldOperator {
    let fwd = ModeDiag::conjugate_pair(lat.propagator_diagonal(h));
    let back = ModeDiag::conjugate_pair(lat.propagator_diagonal(-h));
    let inner = x.clone();
    let l1 = lat.clone();
    let (f1, b1) = (fwd.clone(), back.clone());
    let eval = Arc::new(move |u: &FieldState| {
        let v = inner.eval(&LatticeState::apply_mode_diag(u, &l1, &b1))?;
        Ok(LatticeState::apply_mode_diag(&v, &l1, &f1))
    });
    let inner2 = x.clone();
    let l2 = lat.clone();
    let (f2, b2) = (fwd.clone(), back.clone());
    let jvp: Arc<JvpFn> = Arc::new(move |u: &FieldState, d: &FieldState| {
        let v = inner2.jvp(
            &LatticeState::apply_mode_diag(u, &l2, &b2),
            &LatticeState::apply_mode_diag(d, &l2, &b2),
        )?;
        Ok(LatticeState::apply_mode_diag(&v, &l2, &f2))
    });
    let pair_eval: Option<Arc<PairEvalFn>> = x.pair_eval.clone().map(|pe| {
        let l3 = lat.clone();
        let (f3, b3) = (fwd.clone(), back.clone());
        Arc::new(move |z: &PairState| {
            let v = pe(&z.apply_mode_diag(&l3, &b3))?;
            Ok(v.apply_mode_diag(&l3, &f3))
        }) as Arc<PairEvalFn>
    });
    let pair_jvp: Option<Arc<PairJvpFn>> = x.pair_jvp.clone().map(|pj| {
        let l4 = lat.clone();
        let (f4, b4) = (fwd.clone(), back.clone());
        Arc::new(move |z: &PairState, d: &PairState| {
            let v = pj(&z.apply_mode_diag(&l4, &b4), &d.apply_mode_diag(&l4, &b4))?;
            Ok(v.apply_mode_diag(&l4, &f4))
        }) as Arc<PairJvpFn>
    });
    FieldOperator {
        lat: lat.clone(),
        degree: x.degree,
        eval,
        jvp: Some(jvp),
        pair_eval,
        pair_jvp,
        // Functions of A commute with the propagator, so a linear
        // mode-diagonal field is untouched by the conjugation.
        generator: x.generator.clone(),
    }
}

/// Commutator `[X,Y](u) = DY(u)·X(u) - DX(u)·Y(u)`; for linear fields
/// `X = Bu`, `Y = Cu` this is `(CB - BC)u`.
pub fn commutator(lat: &Lattice, x: &FieldOperator, y: &FieldOperator) -> FieldOperator {
    let degree = match (x.degree, y.degree) {
        (Some(a), Some(b)) => Some(a + b - 1),
        _ => None,
    };
    let (x1, y1) = (x.clone(), y.clone());
    let eval = Arc::new(move |u: &FieldState| {
        let xv = x1.eval(u)?;
        let yv = y1.eval(u)?;
        Ok(y1.jvp(u, &xv)?.sub(&x1.jvp(u, &yv)?))
    });
    let pair_eval: Option<Arc<PairEvalFn>> = match (
        x.pair_eval.clone(),
        x.pair_jvp.clone(),
        y.pair_eval.clone(),
        y.pair_jvp.clone(),
    ) {
        (Some(xe), Some(xj), Some(ye), Some(yj)) => Some(Arc::new(move |z: &PairState| {
            let xv = xe(z)?;
            let yv = ye(z)?;
            Ok(yj(z, &xv)?.sub(&xj(z, &yv)?))
        }) as Arc<PairEvalFn>),
        _ => None,
    };
    FieldOperator {
        lat: lat.clone(),
        degree,
        eval,
        jvp: None,
        pair_eval,
        pair_jvp: None,
        generator: None,
    }
}

/// Bernoulli ad-series `u ↦ Σ_k (B_k/k!)·ad_{Xz}^k(Y)(u)` along a linear
/// mode-diagonal generator `Xz`.
///
/// Truncates at the first term below `series.tol` relative to the partial
/// sum (or at `series.k_max`), and reports `NonDecayingSeries` when term
/// norms grow for three consecutive orders, which is the runtime signature
/// of a CFL violation.
pub fn ad_series(
    lat: &Lattice,
    xz: &FieldOperator,
    y: &FieldOperator,
    series: &SeriesParams,
) -> Result<FieldOperator, CoreError> {
    let gen = xz
        .generator()
        .ok_or_else(|| CoreError::InvalidParameter {
            name: "Xz".into(),
            reason: "ad_series needs a linear mode-diagonal generator".into(),
        })?
        .to_vec();
    if !y.has_pair_eval() {
        return Err(CoreError::InvalidParameter {
            name: "Y".into(),
            reason: "ad_series needs a field with pair evaluation".into(),
        });
    }
    let gen = Arc::new(gen);
    let y_pair = y.pair_eval.clone().unwrap();
    let sp = *series;

    let l1 = lat.clone();
    let (g1, yp1) = (gen.clone(), y_pair.clone());
    let eval = Arc::new(move |u: &FieldState| {
        let z = PairState::diagonal(u);
        let out = pullback::ad_series_eval(&l1, &g1, &|w| yp1(w), &z, &sp)?;
        Ok(out.a_part())
    });
    let l2 = lat.clone();
    let (g2, yp2) = (gen.clone(), y_pair.clone());
    let pair_eval: Arc<PairEvalFn> =
        Arc::new(move |z: &PairState| pullback::ad_series_eval(&l2, &g2, &|w| yp2(w), z, &sp));

    let mut jvp: Option<Arc<JvpFn>> = None;
    let mut pair_jvp: Option<Arc<PairJvpFn>> = None;
    if let Some(yj) = y.pair_jvp.clone() {
        let l3 = lat.clone();
        let g3 = gen.clone();
        let yj3 = yj.clone();
        jvp = Some(Arc::new(move |u: &FieldState, d: &FieldState| {
            let out = pullback::ad_series_jvp(
                &l3,
                &g3,
                &|z, w| yj3(z, w),
                &PairState::diagonal(u),
                &PairState::diagonal(d),
                &sp,
            )?;
            Ok(out.a_part())
        }));
        let l4 = lat.clone();
        let g4 = gen.clone();
        pair_jvp = Some(Arc::new(move |z: &PairState, d: &PairState| {
            pullback::ad_series_jvp(&l4, &g4, &|a, b| yj(a, b), z, d, &sp)
        }));
    }

    Ok(FieldOperator {
        lat: lat.clone(),
        degree: y.degree,
        eval,
        jvp,
        pair_eval: Some(pair_eval),
        pair_jvp,
        generator: None,
    })
}

/// The recursion fields `Z_{ℓ,j}`: `(0,0)` is the time-1 linear generator,
/// `(1,0)` the ad-series of the conjugated `P₀` field, `(1,1)` the
/// ad-series of the conjugated, numerically extracted `P₁` field.
pub fn z_field(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    ell: usize,
    j: usize,
    cfg: &BeaConfig,
) -> Result<FieldOperator, CoreError> {
    match (ell, j) {
        (0, 0) => Ok(a0_field_time1(lat, h)),
        (1, 0) => {
            let y = conjugate_field(lat, h, &p0_field(lat, params, h));
            ad_series(lat, &a0_field_time1(lat, h), &y, &cfg.series)
        }
        (1, 1) => {
            let y = conjugate_field(lat, h, &p1_field(lat, params, h));
            ad_series(lat, &a0_field_time1(lat, h), &y, &cfg.series)
        }
        _ => Err(CoreError::UnsupportedZIndex { ell, j }),
    }
}

/// `Z_{2,0}`, assembled from the recursion at `ℓ = 1` with one `Z_{1,0}`
/// bracket inside the Bernoulli chain; only `Z_{1,0}` and `A₀` enter.
pub(crate) fn z20_field(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    cfg: &BeaConfig,
) -> FieldOperator {
    let degree = 4 * params.r + 1;
    let gen: Arc<Vec<C64>> = Arc::new(
        lat.eigenvalues()
            .iter()
            .map(|&l| C64::new(0.0, 2.0 * (h * l / 2.0).atan()))
            .collect(),
    );
    let y = conjugate_field(lat, h, &p0_field(lat, params, h));
    let y_eval = y.pair_eval.clone().unwrap();
    let y_jvp = y.pair_jvp.clone().unwrap();
    let sp = cfg.series;

    let l1 = lat.clone();
    let (g1, ye1, yj1) = (gen.clone(), y_eval.clone(), y_jvp.clone());
    let eval = Arc::new(move |u: &FieldState| {
        let z = PairState::diagonal(u);
        let out =
            pullback::bracket_chain_eval(&l1, &g1, &|w| ye1(w), &|a, b| yj1(a, b), &z, &sp)?;
        Ok(out.a_part())
    });
    let l2 = lat.clone();
    let pair_eval: Arc<PairEvalFn> = Arc::new(move |z: &PairState| {
        pullback::bracket_chain_eval(&l2, &gen, &|w| y_eval(w), &|a, b| y_jvp(a, b), z, &sp)
    });
    FieldOperator {
        lat: lat.clone(),
        degree: Some(degree),
        eval,
        jvp: None,
        pair_eval: Some(pair_eval),
        pair_jvp: None,
        generator: None,
    }
}

/// Field of the numerically extracted remainder Hamiltonian `P_{1,h}`.
pub fn p1_field(lat: &Lattice, params: &ModelParams, h: f64) -> FieldOperator {
    let degree = 4 * params.r + 1;
    let l1 = lat.clone();
    let p1 = *params;
    let eval = Arc::new(move |u: &FieldState| {
        let (v, _) = remainder::extract_remainder_pair(&l1, &p1, h, &PairState::diagonal(u))?;
        Ok(v.a_part())
    });
    let l2 = lat.clone();
    let p2 = *params;
    let pair_eval: Arc<PairEvalFn> = Arc::new(move |z: &PairState| {
        Ok(remainder::extract_remainder_pair(&l2, &p2, h, z)?.0)
    });
    FieldOperator {
        lat: lat.clone(),
        degree: Some(degree),
        eval,
        jvp: None,
        pair_eval: Some(pair_eval),
        pair_jvp: None,
        generator: None,
    }
}

/// `X_{P_{1,h}}(u)`: the ε²-coefficient of the mismatch between the flow of
/// `P_{0,h}` and the nonlinear factor `Ψʰ_ε`, with sign flipped.
pub fn extract_remainder_field(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    u: &FieldState,
) -> Result<FieldState, CoreError> {
    extract_remainder_field_detailed(lat, params, h, u).map(|(v, _)| v)
}

/// Same as [`extract_remainder_field`] with the fit report attached.
pub fn extract_remainder_field_detailed(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    u: &FieldState,
) -> Result<(FieldState, RemainderReport), CoreError> {
    let (v, rep) = remainder::extract_remainder_pair(lat, params, h, &PairState::diagonal(u))?;
    Ok((v.a_part(), rep))
}

/// Hamiltonian of a homogeneous field of degree `d` with symmetric
/// `J`-Jacobian: `P(u) = 2δx·Im(ūᵀX(u))/(d+1)`.
///
/// Panics if the field carries no degree metadata (contract violation).
pub fn hamiltonian_from_field(
    lat: &Lattice,
    x: &FieldOperator,
    u: &FieldState,
) -> Result<f64, CoreError> {
    let d = x
        .degree()
        .expect("hamiltonian_from_field requires degree metadata");
    let xv = x.eval(u)?;
    let im: f64 = u
        .values
        .iter()
        .zip(&xv.values)
        .map(|(a, b)| (a.conj() * b).im)
        .sum();
    Ok(2.0 * lat.delta_x() * im / (d as f64 + 1.0))
}

fn cfl_guard(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    n_order: u32,
    cfg: &BeaConfig,
) -> Result<(), CoreError> {
    let spec = CflSpec::new(n_order, params.r, cfg.eps_tilde)?;
    let h_max = cfl_max_step(lat.delta_x(), &spec);
    if h > h_max {
        return Err(CoreError::CflViolation { h, h_max });
    }
    Ok(())
}

/// Modified energy `H_h^{(N)}(u)` for `N ∈ {0,1}`.
pub fn modified_energy(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    n_order: u32,
    u: &FieldState,
    cfg: &BeaConfig,
) -> Result<f64, CoreError> {
    if n_order > 1 {
        return Err(CoreError::InvalidParameter {
            name: "N".into(),
            reason: "modified energies are available for N in {0, 1}".into(),
        });
    }
    cfl_guard(lat, params, h, n_order, cfg)?;
    let z10 = z_field(lat, params, h, 1, 0, cfg)?;
    let mut e = a0_energy(lat, h, u) + hamiltonian_from_field(lat, &z10, u)?;
    if n_order == 1 {
        let z20 = z20_field(lat, params, h, cfg);
        let z11 = z_field(lat, params, h, 1, 1, cfg)?;
        e += h
            * (hamiltonian_from_field(lat, &z20, u)?
                + hamiltonian_from_field(lat, &z11, u)?);
    }
    Ok(e)
}

/// Hamiltonian field of `H_h^{(N)}`; its exact time-h flow tracks one
/// midpoint step to order `N+2`.
pub fn modified_field(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    n_order: u32,
    cfg: &BeaConfig,
) -> Result<FieldOperator, CoreError> {
    if n_order > 1 {
        return Err(CoreError::InvalidParameter {
            name: "N".into(),
            reason: "modified energies are available for N in {0, 1}".into(),
        });
    }
    cfl_guard(lat, params, h, n_order, cfg)?;
    let a0 = a0_field(lat, h);
    let z10 = z_field(lat, params, h, 1, 0, cfg)?;
    let higher = if n_order == 1 {
        Some((
            z20_field(lat, params, h, cfg),
            z_field(lat, params, h, 1, 1, cfg)?,
        ))
    } else {
        None
    };
    let eval = Arc::new(move |u: &FieldState| {
        let mut out = a0.eval(u)?.add_scaled(1.0, &z10.eval(u)?);
        if let Some((z20, z11)) = &higher {
            out = out
                .add_scaled(h, &z20.eval(u)?)
                .add_scaled(h, &z11.eval(u)?);
        }
        Ok(out)
    });
    Ok(FieldOperator::from_closures(lat, None, eval, None))
}

/// Full discrete NLSE right-hand side as a field, with exact derivative.
#[allow(clippy::needless_range_loop)]
pub fn nlse_field(lat: &Lattice, params: &ModelParams) -> FieldOperator {
    let l1 = lat.clone();
    let p1 = *params;
    let eval = Arc::new(move |u: &FieldState| Ok(crate::stepper::nlse_rhs(&l1, &p1, u)));
    let l2 = lat.clone();
    let p2 = *params;
    let jvp: Arc<JvpFn> = Arc::new(move |u: &FieldState, d: &FieldState| {
        let ad = crate::lattice::apply_laplacian(&l2, d);
        let r = p2.r as i32;
        let lam = f64::from(p2.lambda);
        let rp1 = (r + 1) as f64;
        let rf = r as f64;
        let df = FieldState::from_fn(u.len(), |i| {
            let z = u.values[i];
            let m = z.norm_sqr();
            let mrm1 = if r >= 1 { m.powi(r - 1) } else { 1.0 };
            lam * (rp1 * mrm1 * m * d.values[i] + rf * mrm1 * z * z * d.values[i].conj())
        });
        Ok(ad.add_scaled(1.0, &df).scale_complex(C64::new(0.0, 1.0)))
    });
    FieldOperator::from_closures(lat, None, eval, Some(jvp))
}
