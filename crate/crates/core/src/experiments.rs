//! Reproducible studies: drift tracking, defect-order estimation,
//! symplecticity probes, long-time stability runs and classical
//! convergence checks.

use crate::bea::{cfl_max_step, modified_energy, modified_field, BeaConfig, CflSpec};
use crate::error::CoreError;
use crate::lattice::{energy, mass, norm_dx, FieldState, Lattice, ModelParams};
use crate::stepper::{
    flow_to_tolerance, midpoint_step_warm, nlse_rhs, reference_flow, rk2_explicit_step,
    SolverParams,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Per-step record of the tracked quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub step: u64,
    pub time: f64,
    pub mass: f64,
    pub norm_dx: f64,
    pub energy_h: f64,
    /// One entry per recorded modified-energy order.
    pub energy_mod: Vec<f64>,
}

/// Outcome of a drift run.
#[derive(Debug, Clone)]
pub struct DriftStudy {
    /// Orders whose CFL condition held; these define the columns of
    /// `energy_mod` (orders violating the CFL are dropped, never NaN-filled).
    pub orders: Vec<u32>,
    pub reports: Vec<EnergyReport>,
}

/// Log-log slope fit with its data.
#[derive(Debug, Clone)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub h_values: Vec<f64>,
    pub defect_values: Vec<f64>,
}

/// Ordinary least squares slope of `(x, y)` pairs.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    fit_line(pts).0
}

fn fit_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

fn slope_estimate(hs: &[f64], defects: &[f64]) -> SlopeEstimate {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(defects)
        .map(|(h, d)| (h.log10(), d.log10()))
        .collect();
    let (slope, intercept, r_squared) = fit_line(&pts);
    SlopeEstimate {
        slope,
        intercept,
        r_squared,
        h_values: hs.to_vec(),
        defect_values: defects.to_vec(),
    }
}

/// Eigenvalues of the dense second-difference matrix from a general
/// symmetric eigensolver, ascending. The independent route against the
/// closed-form sine spectrum.
pub fn dense_spectrum(lat: &Lattice) -> Vec<f64> {
    let n = lat.dim();
    let s = 1.0 / (lat.delta_x() * lat.delta_x());
    let a = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * s
        } else if i.abs_diff(j) == 1 {
            -s
        } else {
            0.0
        }
    });
    let mut ev = nalgebra::SymmetricEigen::new(a)
        .eigenvalues
        .as_slice()
        .to_vec();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Initial-data families used across the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Discrete Gaussian bump `exp(-(ℓδx)²/σ²)` with `σ = Kδx/4`.
    Bump,
    /// Single sine eigenvector.
    Mode { index: usize },
    /// Seeded complex Gaussian noise.
    Noise { seed: u64 },
}

/// Builds a state of the requested family rescaled to `‖u‖_δx = scale`.
pub fn initial_state(lat: &Lattice, kind: InitKind, scale: f64) -> FieldState {
    let n = lat.dim();
    let k = lat.spec.k as isize;
    let raw = match kind {
        InitKind::Bump => {
            let sigma = (lat.spec.k as f64 * lat.delta_x() / 4.0).max(lat.delta_x());
            FieldState::from_fn(n, |i| {
                let x = (i as isize - k) as f64 * lat.delta_x();
                C64::new((-(x * x) / (sigma * sigma)).exp(), 0.0)
            })
        }
        InitKind::Mode { index } => {
            let j = index.clamp(1, n);
            let mut m = FieldState::zeros(n);
            m.values[j - 1] = C64::new(1.0, 0.0);
            lat.from_modes(&m)
        }
        InitKind::Noise { seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut gauss = || {
                let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            FieldState::from_fn(n, |_| C64::new(gauss(), gauss()))
        }
    };
    let nn = norm_dx(lat, &raw);
    raw.scale(scale / nn)
}

/// Steps to time `T` recording mass, discrete norm, energy and the
/// requested modified energies every `stride` steps.
///
/// Orders whose CFL bound fails for this `h` are dropped from the record.
/// A non-converging step aborts the study with the step index attached.
pub fn drift_study(
    lat: &Lattice,
    params: &ModelParams,
    solver: &SolverParams,
    u0: &FieldState,
    t_final: f64,
    orders: &[u32],
    stride: u64,
    cfg: &BeaConfig,
) -> Result<DriftStudy, CoreError> {
    let n_steps = (t_final / solver.h).round().max(1.0) as u64;
    let stride = stride.max(1);
    let kept: Vec<u32> = orders
        .iter()
        .copied()
        .filter(|&n| {
            let spec = CflSpec {
                n_order: n,
                r: params.r,
                eps_tilde: cfg.eps_tilde,
            };
            solver.h <= cfl_max_step(lat.delta_x(), &spec)
        })
        .collect();

    let record = |step: u64, u: &FieldState| -> Result<EnergyReport, CoreError> {
        let mut energy_mod = Vec::with_capacity(kept.len());
        for &n in &kept {
            energy_mod.push(modified_energy(lat, params, solver.h, n, u, cfg)?);
        }
        Ok(EnergyReport {
            step,
            time: step as f64 * solver.h,
            mass: mass(lat, u),
            norm_dx: norm_dx(lat, u),
            energy_h: energy(lat, params, u),
            energy_mod,
        })
    };

    let mut reports = vec![record(0, u0)?];
    let mut u = u0.clone();
    for step in 1..=n_steps {
        match midpoint_step_warm(lat, params, solver, &u, Some(&u)) {
            Ok((next, _)) => u = next,
            Err(e) => {
                return Err(CoreError::StudyFailure {
                    step,
                    source: Box::new(e),
                })
            }
        }
        if step % stride == 0 || step == n_steps {
            reports.push(record(step, &u)?);
        }
    }
    Ok(DriftStudy {
        orders: kept,
        reports,
    })
}

/// One-step defect of the midpoint rule against the exact flow of
/// `H_h^{(N)}` over a sweep of step sizes, with a log-log slope fit.
pub fn defect_order(
    lat: &Lattice,
    params: &ModelParams,
    u0: &FieldState,
    h_values: &[f64],
    n_order: u32,
    cfg: &BeaConfig,
) -> Result<SlopeEstimate, CoreError> {
    validate_sweep(h_values)?;
    let ref_tol = 1e-12;
    let defects: Vec<f64> = h_values
        .par_iter()
        .map(|&h| -> Result<f64, CoreError> {
            let solver = SolverParams::new(h)?.with_max_iters(400);
            let (u1, _) = crate::stepper::midpoint_step(lat, params, &solver, u0)?;
            let field = modified_field(lat, params, h, n_order, cfg)?;
            let flow = reference_flow(lat, &field, u0, h, ref_tol)?;
            Ok(norm_dx(lat, &u1.sub(&flow)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_defect = defects.iter().copied().fold(f64::INFINITY, f64::min);
    if min_defect < 100.0 * ref_tol {
        return Err(CoreError::FloorReached { min_defect });
    }
    Ok(slope_estimate(h_values, &defects))
}

/// Comparator: the same defect measured against the flow of the unmodified
/// energy; midpoint is a second-order method, so this slope sits near 3.
pub fn defect_order_unmodified(
    lat: &Lattice,
    params: &ModelParams,
    u0: &FieldState,
    h_values: &[f64],
) -> Result<SlopeEstimate, CoreError> {
    validate_sweep(h_values)?;
    let ref_tol = 1e-12;
    let field = crate::bea::nlse_field(lat, params);
    let defects: Vec<f64> = h_values
        .par_iter()
        .map(|&h| -> Result<f64, CoreError> {
            let solver = SolverParams::new(h)?.with_max_iters(400);
            let (u1, _) = crate::stepper::midpoint_step(lat, params, &solver, u0)?;
            let flow = reference_flow(lat, &field, u0, h, ref_tol)?;
            Ok(norm_dx(lat, &u1.sub(&flow)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(slope_estimate(h_values, &defects))
}

fn validate_sweep(h_values: &[f64]) -> Result<(), CoreError> {
    if h_values.len() < 4 {
        return Err(CoreError::InvalidParameter {
            name: "h_values".into(),
            reason: "need at least 4 step sizes".into(),
        });
    }
    let max = h_values.iter().copied().fold(f64::MIN, f64::max);
    let min = h_values.iter().copied().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min < 7.9 {
        return Err(CoreError::InvalidParameter {
            name: "h_values".into(),
            reason: "sweep must span at least a factor 8".into(),
        });
    }
    Ok(())
}

/// Which one-step map the symplecticity probe differentiates.
#[derive(Debug, Clone, Copy)]
pub enum ProbeMethod {
    Midpoint { fp_tol: f64 },
    Rk2,
}

/// Max-entry norm of `MᵀJM - J` for the real Jacobian `M` of one step,
/// built by central finite differences with step `fd_step`.
pub fn symplecticity_check(
    lat: &Lattice,
    params: &ModelParams,
    h: f64,
    u: &FieldState,
    fd_step: f64,
    method: ProbeMethod,
) -> Result<f64, CoreError> {
    let n = lat.dim();
    let dim = 2 * n;
    let step_map = |v: &FieldState| -> Result<FieldState, CoreError> {
        match method {
            ProbeMethod::Midpoint { fp_tol } => {
                let solver = SolverParams::new(h)?.with_fp_tol(fp_tol).with_max_iters(400);
                Ok(crate::stepper::midpoint_step(lat, params, &solver, v)?.0)
            }
            ProbeMethod::Rk2 => Ok(rk2_explicit_step(lat, params, h, v)),
        }
    };

    // Real chart x = (p, q) with u = (p + iq)/√2.
    let s2 = std::f64::consts::SQRT_2;
    let to_state = |x: &[f64]| {
        FieldState::from_fn(n, |i| C64::new(x[i] / s2, x[n + i] / s2))
    };
    let to_chart = |v: &FieldState| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for i in 0..n {
            x[i] = s2 * v.values[i].re;
            x[n + i] = s2 * v.values[i].im;
        }
        x
    };

    let x0 = to_chart(u);
    let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for j in 0..dim {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += fd_step;
        xm[j] -= fd_step;
        let fp = to_chart(&step_map(&to_state(&xp))?);
        let fm = to_chart(&step_map(&to_state(&xm))?);
        for i in 0..dim {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * fd_step);
        }
    }
    let mut jmat = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for i in 0..n {
        jmat[(i, n + i)] = 1.0;
        jmat[(n + i, i)] = -1.0;
    }
    let defect = m.transpose() * &jmat * &m - &jmat;
    Ok(defect.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// One row of a stability run.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRecord {
    pub step: u64,
    pub time: f64,
    pub norm_dx: f64,
    pub ratio: f64,
}

/// Verdict of a long-time stability run.
#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub pass: bool,
    pub max_ratio: f64,
    pub steps_run: u64,
    pub horizon_steps: u64,
    pub capped: bool,
    pub records: Vec<StabilityRecord>,
}

/// Runs the midpoint rule from `‖u⁰‖_δx = ε` until
/// `n·h = (h·ε^{2r(1-κ)})^{-N}` or the step cap, tracking
/// `‖uⁿ‖_δx / ε^{1-κ}`; PASS means the ratio never exceeded 1.
pub fn longtime_stability(
    lat: &Lattice,
    params: &ModelParams,
    solver: &SolverParams,
    shape: &FieldState,
    epsilon: f64,
    kappa: f64,
    n_order: u32,
    step_cap: u64,
    stride: u64,
) -> Result<StabilityResult, CoreError> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(CoreError::InvalidParameter {
            name: "kappa".into(),
            reason: "must lie in (0, 1/2)".into(),
        });
    }
    let shape_norm = norm_dx(lat, shape);
    let mut u = shape.scale(epsilon / shape_norm);
    let bound = epsilon.powf(1.0 - kappa);
    let horizon_time = (solver.h * epsilon.powf(2.0 * params.r as f64 * (1.0 - kappa)))
        .powi(-(n_order as i32));
    let horizon_steps = (horizon_time / solver.h).floor().max(1.0) as u64;
    let capped = horizon_steps > step_cap;
    let n_steps = horizon_steps.min(step_cap);
    let stride = stride.max(1);

    let mut records = Vec::new();
    let mut max_ratio = norm_dx(lat, &u) / bound;
    records.push(StabilityRecord {
        step: 0,
        time: 0.0,
        norm_dx: norm_dx(lat, &u),
        ratio: max_ratio,
    });
    let mut pass = max_ratio <= 1.0;
    let mut steps_run = 0;
    for step in 1..=n_steps {
        match midpoint_step_warm(lat, params, solver, &u, Some(&u)) {
            Ok((next, _)) => u = next,
            Err(e) => {
                return Err(CoreError::StudyFailure {
                    step,
                    source: Box::new(e),
                })
            }
        }
        steps_run = step;
        let nd = norm_dx(lat, &u);
        let ratio = nd / bound;
        max_ratio = max_ratio.max(ratio);
        if step % stride == 0 || step == n_steps || ratio > 1.0 {
            records.push(StabilityRecord {
                step,
                time: step as f64 * solver.h,
                norm_dx: nd,
                ratio,
            });
        }
        if ratio > 1.0 {
            pass = false;
            break;
        }
    }
    Ok(StabilityResult {
        pass,
        max_ratio,
        steps_run,
        horizon_steps,
        capped,
        records,
    })
}

/// Global-error slope of the midpoint rule at time `T` against a
/// high-accuracy reference trajectory of the full field.
pub fn convergence_order(
    lat: &Lattice,
    params: &ModelParams,
    u0: &FieldState,
    t_final: f64,
    h_values: &[f64],
    fp_tol: f64,
) -> Result<SlopeEstimate, CoreError> {
    validate_sweep(h_values)?;
    let ref_tol = 1e-12;
    let field = |v: &FieldState| Ok(nlse_rhs(lat, params, v));
    let reference = flow_to_tolerance(lat, &field, u0, t_final, ref_tol)?;
    let errors: Vec<f64> = h_values
        .par_iter()
        .map(|&h| -> Result<f64, CoreError> {
            let n = (t_final / h).round().max(1.0) as u64;
            let solver = SolverParams::new(t_final / n as f64)?
                .with_fp_tol(fp_tol)
                .with_max_iters(400);
            let mut u = u0.clone();
            for _ in 0..n {
                let (next, _) = midpoint_step_warm(lat, params, &solver, &u, Some(&u))?;
                u = next;
            }
            Ok(norm_dx(lat, &u.sub(&reference)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_err = errors.iter().copied().fold(f64::INFINITY, f64::min);
    if min_err < 100.0 * ref_tol {
        return Err(CoreError::FloorReached { min_defect: min_err });
    }
    Ok(slope_estimate(h_values, &errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bea::{cfl_max_step, CflSpec};
    use crate::lattice::GridSpec;

    fn setup(k: usize, dx: f64, lambda: i8, r: u32) -> (Lattice, ModelParams) {
        (
            Lattice::new(GridSpec::new(k, dx).unwrap()),
            ModelParams::new(lambda, r).unwrap(),
        )
    }

    #[test]
    fn slope_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (s, b, r2) = fit_line(&pts);
        assert!((s + 2.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_families() {
        let (lat, _) = setup(16, 0.25, 1, 1);
        for kind in [
            InitKind::Bump,
            InitKind::Mode { index: 9 },
            InitKind::Noise { seed: 3 },
        ] {
            let u = initial_state(&lat, kind, 0.7);
            assert!((norm_dx(&lat, &u) - 0.7).abs() < 1e-12);
        }
        // Seeded noise is reproducible.
        let a = initial_state(&lat, InitKind::Noise { seed: 11 }, 1.0);
        let b = initial_state(&lat, InitKind::Noise { seed: 11 }, 1.0);
        assert_eq!(a, b);
        let c = initial_state(&lat, InitKind::Noise { seed: 12 }, 1.0);
        assert!(crate::testutil::max_abs_diff(&a, &c) > 1e-3);
    }

    #[test]
    fn drift_linear_problem_is_exact() {
        let (lat, params) = setup(8, 0.5, 0, 1);
        let solver = SolverParams::new(0.02).unwrap();
        let u0 = initial_state(&lat, InitKind::Bump, 1.0);
        let study = drift_study(
            &lat,
            &params,
            &solver,
            &u0,
            200.0,
            &[0],
            100,
            &BeaConfig::default(),
        )
        .unwrap();
        assert_eq!(study.orders, vec![0]);
        let e0 = study.reports[0].energy_h;
        let m0 = study.reports[0].energy_mod[0];
        for r in &study.reports {
            assert!((r.energy_h - e0).abs() <= 1e-10 * e0.abs().max(1.0));
            assert!((r.energy_mod[0] - m0).abs() <= 1e-10 * m0.abs().max(1.0));
            assert!((r.time - r.step as f64 * solver.h).abs() < 1e-12 * r.time.max(1.0));
        }
    }

    #[test]
    fn drift_modified_energy_bounded() {
        // Modified-energy drift over the second half of the run stays
        // comparable to the first half: no secular growth.
        let (lat, params) = setup(12, 0.25, 1, 1);
        let solver = SolverParams::new(0.01).unwrap();
        let u0 = initial_state(&lat, InitKind::Bump, 0.5);
        let study = drift_study(
            &lat,
            &params,
            &solver,
            &u0,
            40.0,
            &[0],
            20,
            &BeaConfig::default(),
        )
        .unwrap();
        let m0 = study.reports[0].energy_mod[0];
        let n = study.reports.len();
        let drift_of = |slice: &[EnergyReport]| -> f64 {
            slice
                .iter()
                .map(|r| (r.energy_mod[0] - m0).abs())
                .fold(0.0, f64::max)
        };
        let first = drift_of(&study.reports[..n / 2]);
        let second = drift_of(&study.reports[n / 2..]);
        assert!(
            second <= 2.0 * first.max(1e-14),
            "secular drift: {first:.3e} then {second:.3e}"
        );
        // Mass stays put as well.
        let mass0 = study.reports[0].mass;
        for r in &study.reports {
            assert!((r.mass - mass0).abs() <= 1e-9);
        }
    }

    #[test]
    fn drift_drops_cfl_violating_orders() {
        let (lat, params) = setup(8, 0.25, 1, 1);
        let spec1 = CflSpec::new(1, 1, std::f64::consts::FRAC_PI_2).unwrap();
        let h1 = cfl_max_step(lat.delta_x(), &spec1);
        // Step between the N=1 and N=0 bounds: only order 0 survives.
        let solver = SolverParams::new(1.5 * h1).unwrap();
        let u0 = initial_state(&lat, InitKind::Bump, 0.4);
        let study = drift_study(
            &lat,
            &params,
            &solver,
            &u0,
            20.0 * solver.h,
            &[0, 1],
            5,
            &BeaConfig::default(),
        )
        .unwrap();
        assert_eq!(study.orders, vec![0]);
        assert!(study.reports.iter().all(|r| r.energy_mod.len() == 1));
    }

    #[test]
    fn study_failure_carries_step_index() {
        let (lat, params) = setup(6, 0.25, 1, 1);
        // Oversized state: the fixed point diverges on the first step.
        let u0 = initial_state(&lat, InitKind::Bump, 80.0);
        let solver = SolverParams::new(0.9).unwrap().with_max_iters(40);
        match drift_study(
            &lat,
            &params,
            &solver,
            &u0,
            10.0,
            &[],
            1,
            &BeaConfig::default(),
        ) {
            Err(CoreError::StudyFailure { step, source }) => {
                assert_eq!(step, 1);
                assert!(matches!(*source, CoreError::NoConvergence { .. }));
            }
            other => panic!("expected StudyFailure, got {other:?}"),
        }
    }

    #[test]
    fn sweep_validation() {
        let (lat, params) = setup(6, 0.5, 1, 1);
        let u0 = initial_state(&lat, InitKind::Bump, 1.0);
        let cfg = BeaConfig::default();
        assert!(matches!(
            defect_order(&lat, &params, &u0, &[0.02, 0.01, 0.005], 0, &cfg),
            Err(CoreError::InvalidParameter { .. })
        ));
        assert!(matches!(
            defect_order(&lat, &params, &u0, &[0.02, 0.015, 0.0125, 0.01], 0, &cfg),
            Err(CoreError::InvalidParameter { .. })
        ));
        // Tiny data sits at the rounding floor.
        let tiny = initial_state(&lat, InitKind::Bump, 1e-4);
        assert!(matches!(
            defect_order(&lat, &params, &tiny, &[0.02, 0.01, 0.005, 0.0025], 0, &cfg),
            Err(CoreError::FloorReached { .. })
        ));
    }

    #[test]
    fn unmodified_energy_comparator_is_third_order() {
        // Against the flow of the plain energy the one-step defect is the
        // classical local error of a second-order method.
        let (lat, params) = setup(8, 0.5, 1, 1);
        let u0 = initial_state(&lat, InitKind::Bump, 1.0);
        let hs = [0.02, 0.01, 0.005, 0.0025];
        let est = defect_order_unmodified(&lat, &params, &u0, &hs).unwrap();
        assert!(
            (2.6..=3.4).contains(&est.slope),
            "comparator slope {:.3}",
            est.slope
        );
    }

    #[test]
    fn symplecticity_midpoint_vs_rk2() {
        let (lat, params) = setup(4, 0.25, 1, 1);
        let u = initial_state(&lat, InitKind::Noise { seed: 5 }, 0.5);
        let h = 0.01;
        let fd = 1e-5;

        // λ = 0: exactly symplectic up to finite-difference noise.
        let (lat0, params0) = setup(4, 0.25, 0, 1);
        let dev0 = symplecticity_check(
            &lat0,
            &params0,
            h,
            &u,
            fd,
            ProbeMethod::Midpoint { fp_tol: 1e-13 },
        )
        .unwrap();
        assert!(dev0 <= 1e-9, "linear deviation {dev0:.3e}");

        let dev = symplecticity_check(
            &lat,
            &params,
            h,
            &u,
            fd,
            ProbeMethod::Midpoint { fp_tol: 1e-13 },
        )
        .unwrap();
        assert!(dev <= 1e-6, "midpoint deviation {dev:.3e}");

        let dev_rk2 = symplecticity_check(&lat, &params, h, &u, fd, ProbeMethod::Rk2).unwrap();
        assert!(dev_rk2 >= 1e-4, "rk2 deviation {dev_rk2:.3e}");
    }

    #[test]
    fn stability_linear_flow_passes() {
        let (lat, params) = setup(8, 0.25, 0, 1);
        let solver = SolverParams::new(0.01).unwrap();
        let shape = initial_state(&lat, InitKind::Bump, 1.0);
        let out = longtime_stability(&lat, &params, &solver, &shape, 0.05, 0.25, 0, 10_000, 50)
            .unwrap();
        assert!(out.pass);
        // Isometry: the norm never moves.
        for r in &out.records {
            assert!((r.norm_dx - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn stability_out_of_hypothesis_reports() {
        // Large data sits outside the smallness regime: the run completes
        // and reports a verdict without any expected outcome.
        let (lat, params) = setup(8, 0.25, -1, 1);
        let solver = SolverParams::new(0.005).unwrap();
        let shape = initial_state(&lat, InitKind::Bump, 1.0);
        let out = longtime_stability(&lat, &params, &solver, &shape, 0.5, 0.25, 1, 2_000, 100)
            .unwrap();
        assert!(out.steps_run > 0);
        assert!(out.max_ratio.is_finite());
    }

    #[test]
    fn stability_kappa_validated() {
        let (lat, params) = setup(4, 0.25, 1, 1);
        let solver = SolverParams::new(0.01).unwrap();
        let shape = initial_state(&lat, InitKind::Bump, 1.0);
        assert!(matches!(
            longtime_stability(&lat, &params, &solver, &shape, 0.1, 0.7, 0, 100, 10),
            Err(CoreError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn convergence_second_order() {
        let (lat, params) = setup(8, 0.5, 1, 1);
        let u0 = initial_state(&lat, InitKind::Bump, 0.5);
        let hs = [0.04, 0.02, 0.01, 0.005];
        let est = convergence_order(&lat, &params, &u0, 1.0, &hs, 1e-13).unwrap();
        assert!(
            (1.8..=2.2).contains(&est.slope),
            "global order {:.3}",
            est.slope
        );
        // Halving h cuts the error by about 4.
        let ratio = est.defect_values[1] / est.defect_values[2];
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio:.2}");

        // Linear problem: same order against the exact mode-space flow.
        let (lat0, params0) = setup(8, 0.5, 0, 1);
        let est0 = convergence_order(&lat0, &params0, &u0, 1.0, &hs, 1e-13).unwrap();
        assert!(
            (1.8..=2.2).contains(&est0.slope),
            "linear order {:.3}",
            est0.slope
        );
    }
}
