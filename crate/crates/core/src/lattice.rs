//! Lattice geometry for the Dirichlet finite-difference line.
//!
//! States live on the nodes `ℓ = -K..K` (dimension `2K+1`) with implicit
//! zero ghost values at `ℓ = ±(K+1)`. The second-difference matrix
//! `A = (1/δx²)·tridiag(-1, 2, -1)` is diagonalized by the orthonormal
//! type-I discrete sine transform, which gives exact spectral application
//! of the propagator `R(hA) = exp(2i·arctan(hA/2))` and of the Cayley
//! resolvents `(1 ± ihA/2)⁻¹`.

use num_complex::Complex64 as C64;

/// Lattice geometry: half-width `K` and mesh size `δx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub k: usize,
    pub delta_x: f64,
}

impl GridSpec {
    pub fn new(k: usize, delta_x: f64) -> Result<Self, crate::CoreError> {
        if k < 1 {
            return Err(crate::CoreError::InvalidParameter {
                name: "K".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(delta_x > 0.0) || !delta_x.is_finite() {
            return Err(crate::CoreError::InvalidParameter {
                name: "delta_x".into(),
                reason: "must be a positive finite real".into(),
            });
        }
        Ok(GridSpec { k, delta_x })
    }

    /// State dimension `2K+1`.
    pub fn dim(&self) -> usize {
        2 * self.k + 1
    }
}

/// Model parameters: nonlinearity degree `r` and sign `λ`.
///
/// `λ = 0` is admitted as a diagnostic extension that turns the equation
/// into the exactly solvable linear problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub lambda: i8,
    pub r: u32,
}

impl ModelParams {
    pub fn new(lambda: i8, r: u32) -> Result<Self, crate::CoreError> {
        if !matches!(lambda, -1 | 0 | 1) {
            return Err(crate::CoreError::InvalidParameter {
                name: "lambda".into(),
                reason: "must be -1, 0 or +1".into(),
            });
        }
        if r < 1 {
            return Err(crate::CoreError::InvalidParameter {
                name: "r".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(ModelParams { lambda, r })
    }
}

/// Complex amplitude vector indexed `ℓ = -K..K` (stored `0..2K`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub values: Vec<C64>,
}

impl FieldState {
    pub fn new(values: Vec<C64>) -> Self {
        FieldState { values }
    }

    pub fn zeros(dim: usize) -> Self {
        FieldState {
            values: vec![C64::new(0.0, 0.0); dim],
        }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> C64) -> Self {
        FieldState {
            values: (0..dim).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `self + s·other` with a real coefficient.
    pub fn add_scaled(&self, s: f64, other: &FieldState) -> FieldState {
        assert_eq!(self.len(), other.len(), "dimension mismatch");
        FieldState {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &FieldState) -> FieldState {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> FieldState {
        FieldState {
            values: self.values.iter().map(|z| s * z).collect(),
        }
    }

    pub fn scale_complex(&self, c: C64) -> FieldState {
        FieldState {
            values: self.values.iter().map(|z| c * z).collect(),
        }
    }

    pub fn conj(&self) -> FieldState {
        FieldState {
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Plain ℓ² norm (no δx weight); used for quick magnitude checks.
    pub fn l2(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Immutable lattice context: grid plus the precomputed sine spectrum.
///
/// Everything here is fixed after construction, so a `Lattice` can be
/// shared freely across threads.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub spec: GridSpec,
    /// Eigenvalues `λ_j = (2 - 2cos(jπ/(2K+2)))/δx²`, `j = 1..2K+1`, ascending.
    eigenvalues: Vec<f64>,
    /// Orthonormal DST-I matrix, row-major `n×n`. Symmetric and involutive.
    dst: Vec<f64>,
}

impl Lattice {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.dim();
        let np1 = (n + 1) as f64;
        let dx2 = spec.delta_x * spec.delta_x;
        let eigenvalues: Vec<f64> = (1..=n)
            .map(|j| (2.0 - 2.0 * (j as f64 * std::f64::consts::PI / np1).cos()) / dx2)
            .collect();
        let norm = (2.0 / np1).sqrt();
        let mut dst = vec![0.0; n * n];
        for j in 0..n {
            for m in 0..n {
                dst[j * n + m] =
                    norm * (((j + 1) * (m + 1)) as f64 * std::f64::consts::PI / np1).sin();
            }
        }
        Lattice {
            spec,
            eigenvalues,
            dst,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn delta_x(&self) -> f64 {
        self.spec.delta_x
    }

    /// Eigenvalues of `A` in the sine basis, ascending and strictly positive.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    fn dst_apply(&self, u: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(u.len(), n, "dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.dst[j * n..(j + 1) * n];
            let mut re = 0.0;
            let mut im = 0.0;
            for (w, z) in row.iter().zip(u) {
                re += w * z.re;
                im += w * z.im;
            }
            *o = C64::new(re, im);
        }
        out
    }

    /// Forward sine transform. The matrix is involutive, so this is its own
    /// inverse.
    pub fn to_modes(&self, u: &FieldState) -> FieldState {
        FieldState::new(self.dst_apply(&u.values))
    }

    pub fn from_modes(&self, m: &FieldState) -> FieldState {
        FieldState::new(self.dst_apply(&m.values))
    }

    /// Applies `U·diag(d)·U` to `u`.
    pub fn apply_mode_diagonal(&self, d: &[C64], u: &FieldState) -> FieldState {
        let mut m = self.dst_apply(&u.values);
        for (z, c) in m.iter_mut().zip(d) {
            *z *= c;
        }
        FieldState::new(self.dst_apply(&m))
    }

    /// Diagonal of the propagator `R(hA)`: phases `exp(2i·arctan(hλ_j/2))`.
    pub fn propagator_diagonal(&self, h: f64) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .map(|&l| (C64::new(0.0, 2.0 * (h * l / 2.0).atan())).exp())
            .collect()
    }

    /// Diagonal of the Cayley resolvent `(1 + sign·ihA/2)⁻¹`.
    pub fn resolvent_diagonal(&self, h: f64, sign: ResolventSign) -> Vec<C64> {
        let s = match sign {
            ResolventSign::Plus => 1.0,
            ResolventSign::Minus => -1.0,
        };
        self.eigenvalues
            .iter()
            .map(|&l| C64::new(1.0, s * h * l / 2.0).inv())
            .collect()
    }
}

/// Sign of the `ihA/2` term inside the Cayley resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventSign {
    Plus,
    Minus,
}

/// `A u` with `A = (1/δx²)·tridiag(-1, 2, -1)` and zero Dirichlet ghosts.
pub fn apply_laplacian(lat: &Lattice, u: &FieldState) -> FieldState {
    let n = lat.dim();
    assert_eq!(u.len(), n, "dimension mismatch");
    let inv = 1.0 / (lat.delta_x() * lat.delta_x());
    let v = &u.values;
    FieldState::from_fn(n, |i| {
        let left = if i > 0 { v[i - 1] } else { C64::new(0.0, 0.0) };
        let right = if i + 1 < n { v[i + 1] } else { C64::new(0.0, 0.0) };
        inv * (2.0 * v[i] - left - right)
    })
}

/// `R(hA)·u = exp(2i·arctan(hA/2))·u`, applied in the sine basis.
///
/// Negative `h` gives the adjoint `R(hA)* = R(-hA)`.
pub fn apply_propagator(lat: &Lattice, h: f64, u: &FieldState) -> FieldState {
    lat.apply_mode_diagonal(&lat.propagator_diagonal(h), u)
}

/// `(1 ± ihA/2)⁻¹·u` by mode-space division; nonexpansive in `‖·‖_δx`.
pub fn apply_cayley_resolvent(
    lat: &Lattice,
    h: f64,
    sign: ResolventSign,
    u: &FieldState,
) -> FieldState {
    lat.apply_mode_diagonal(&lat.resolvent_diagonal(h, sign), u)
}

/// Real scalar product `δx·Re[ūᵀ(I+A)v]`.
pub fn inner_dx(lat: &Lattice, u: &FieldState, v: &FieldState) -> f64 {
    assert_eq!(u.len(), v.len(), "dimension mismatch");
    let av = apply_laplacian(lat, v);
    let mut acc = 0.0;
    for i in 0..u.len() {
        let w = v.values[i] + av.values[i];
        acc += u.values[i].re * w.re + u.values[i].im * w.im;
    }
    lat.delta_x() * acc
}

/// Squared `‖u‖_δx²`, evaluated as a manifestly nonnegative sum of squares.
pub fn norm_dx_sq(lat: &Lattice, u: &FieldState) -> f64 {
    let n = lat.dim();
    assert_eq!(u.len(), n, "dimension mismatch");
    let dx = lat.delta_x();
    let mut mass = 0.0;
    let mut grad = 0.0;
    let mut prev = C64::new(0.0, 0.0);
    for &z in &u.values {
        mass += z.norm_sqr();
        grad += (z - prev).norm_sqr();
        prev = z;
    }
    grad += prev.norm_sqr(); // ghost at +(K+1)
    dx * mass + grad / dx
}

/// Discrete norm `‖u‖_δx = sqrt(δx·ūᵀ(I+A)u)`.
pub fn norm_dx(lat: &Lattice, u: &FieldState) -> f64 {
    norm_dx_sq(lat, u).sqrt()
}

/// Discrete mass `N(u) = δx·Σ|u_ℓ|²`, the exactly conserved quadratic invariant.
pub fn mass(lat: &Lattice, u: &FieldState) -> f64 {
    lat.delta_x() * u.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Discrete energy `H(u) = δx·ūᵀAu + (λ/(r+1))·δx·Σ|u_ℓ|^{2r+2}`.
pub fn energy(lat: &Lattice, params: &ModelParams, u: &FieldState) -> f64 {
    let n = lat.dim();
    assert_eq!(u.len(), n, "dimension mismatch");
    let dx = lat.delta_x();
    let mut grad = 0.0;
    let mut prev = C64::new(0.0, 0.0);
    for &z in &u.values {
        grad += (z - prev).norm_sqr();
        prev = z;
    }
    grad += prev.norm_sqr();
    let quadratic = grad / dx; // δx·ūᵀAu by summation by parts
    let p = params.r as i32 + 1;
    let nonlin: f64 = u.values.iter().map(|z| z.norm_sqr().powi(p)).sum();
    quadratic + f64::from(params.lambda) / (params.r as f64 + 1.0) * dx * nonlin
}

/// Pointwise nonlinearity `f(u)_ℓ = λ|u_ℓ|^{2r}·u_ℓ`.
pub fn nonlinearity(params: &ModelParams, u: &FieldState) -> FieldState {
    if params.lambda == 0 {
        return FieldState::zeros(u.len());
    }
    let lam = f64::from(params.lambda);
    let r = params.r as i32;
    FieldState {
        values: u
            .values
            .iter()
            .map(|z| lam * z.norm_sqr().powi(r) * z)
            .collect(),
    }
}

/// Piecewise-linear interpolant `(i_δx u)(x) = Σ_j u_j·s(x/δx - j)` with the
/// hat function `s`.
pub fn interpolate(lat: &Lattice, u: &FieldState, x: f64) -> C64 {
    let n = lat.dim();
    assert_eq!(u.len(), n, "dimension mismatch");
    let k = lat.spec.k as isize;
    let t = x / lat.delta_x();
    let mut acc = C64::new(0.0, 0.0);
    // Only the two hats straddling x contribute.
    let j0 = t.floor() as isize;
    for j in [j0, j0 + 1] {
        let w = 1.0 - (t - j as f64).abs();
        if w <= 0.0 {
            continue;
        }
        if (-k..=k).contains(&j) {
            acc += w * u.values[(j + k) as usize];
        }
    }
    acc
}
