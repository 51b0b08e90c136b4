//! State abstraction shared by the plain lattice state and its
//! bi-complexified pair extension.
//!
//! A `PairState` carries two independent vectors `(a, b)` that play the
//! roles of `u` and `ū` after analytic continuation: every map the solvers
//! apply is holomorphic in `(a, b)`, agrees with the plain computation on
//! the diagonal `b = conj(a)`, and stays meaningful off the diagonal. This
//! is what lets the series engine evaluate vector fields on complexified
//! contours without any non-holomorphic conjugation.

use crate::lattice::{FieldState, Lattice, ModelParams};
use num_complex::Complex64 as C64;

/// Mode-space diagonal operator together with its conjugate partner.
///
/// The partner is the analytic continuation of the entrywise conjugate;
/// for real contour parameters it coincides with `conj(fwd)`.
#[derive(Debug, Clone)]
pub struct ModeDiag {
    pub fwd: Vec<C64>,
    pub partner: Vec<C64>,
}

impl ModeDiag {
    pub fn conjugate_pair(fwd: Vec<C64>) -> Self {
        let partner = fwd.iter().map(|z| z.conj()).collect();
        ModeDiag { fwd, partner }
    }
}

/// Operations the generic fixed-point and flow algorithms need.
///
/// States can be held either in the physical or the sine-mode
/// representation; the representation is tracked by the caller.
pub trait LatticeState: Clone + Send + Sync {
    fn zeros_like(&self) -> Self;
    /// `self + s·other` with a real coefficient.
    fn add_scaled(&self, s: f64, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// Multiplication by a complex constant (conjugated on the partner half).
    fn mul_complex(&self, c: C64) -> Self;
    fn to_modes(&self, lat: &Lattice) -> Self;
    #[allow(clippy::wrong_self_convention)] // inverse transform, paired with to_modes
    fn from_modes(&self, lat: &Lattice) -> Self;
    /// Pointwise diagonal in the current representation.
    fn mul_diag(&self, d: &ModeDiag) -> Self;
    fn nonlinearity(&self, params: &ModelParams) -> Self;
    /// Magnitude norm used for convergence checks; coincides with `‖·‖_δx`
    /// on plain physical states.
    fn err_norm(&self, lat: &Lattice) -> f64;
    /// Same norm evaluated on a mode-representation state.
    fn err_norm_modes(&self, lat: &Lattice) -> f64;
    /// Real part of the plain ℓ² pairing; used by the Anderson mixing.
    fn dot_re(&self, other: &Self) -> f64;

    fn apply_mode_diag(&self, lat: &Lattice, d: &ModeDiag) -> Self {
        self.to_modes(lat).mul_diag(d).from_modes(lat)
    }
}

fn weighted_mode_norm_sq(lat: &Lattice, v: &[C64]) -> f64 {
    lat.delta_x()
        * v.iter()
            .zip(lat.eigenvalues())
            .map(|(z, &l)| (1.0 + l) * z.norm_sqr())
            .sum::<f64>()
}

impl LatticeState for FieldState {
    fn zeros_like(&self) -> Self {
        FieldState::zeros(self.len())
    }

    fn add_scaled(&self, s: f64, other: &Self) -> Self {
        FieldState::add_scaled(self, s, other)
    }

    fn scale(&self, s: f64) -> Self {
        FieldState::scale(self, s)
    }

    fn mul_complex(&self, c: C64) -> Self {
        self.scale_complex(c)
    }

    fn to_modes(&self, lat: &Lattice) -> Self {
        Lattice::to_modes(lat, self)
    }

    fn from_modes(&self, lat: &Lattice) -> Self {
        Lattice::from_modes(lat, self)
    }

    fn mul_diag(&self, d: &ModeDiag) -> Self {
        FieldState {
            values: self
                .values
                .iter()
                .zip(&d.fwd)
                .map(|(z, c)| z * c)
                .collect(),
        }
    }

    fn nonlinearity(&self, params: &ModelParams) -> Self {
        crate::lattice::nonlinearity(params, self)
    }

    fn err_norm(&self, lat: &Lattice) -> f64 {
        crate::lattice::norm_dx(lat, self)
    }

    fn err_norm_modes(&self, lat: &Lattice) -> f64 {
        weighted_mode_norm_sq(lat, &self.values).sqrt()
    }

    fn dot_re(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }
}

/// Bi-complexified state `(a, b)`; the diagonal embedding is `b = conj(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub a: Vec<C64>,
    pub b: Vec<C64>,
}

impl PairState {
    pub fn diagonal(u: &FieldState) -> Self {
        PairState {
            a: u.values.clone(),
            b: u.values.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// First component as a plain state (exact on the diagonal).
    pub fn a_part(&self) -> FieldState {
        FieldState::new(self.a.clone())
    }

    /// Conjugation lift: swap the two halves.
    pub fn swap(&self) -> Self {
        PairState {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    /// Elementwise product of two pair states.
    pub fn hadamard(&self, other: &Self) -> Self {
        PairState {
            a: self.a.iter().zip(&other.a).map(|(x, y)| x * y).collect(),
            b: self.b.iter().zip(&other.b).map(|(x, y)| x * y).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    /// Multiply the two halves by independent complex constants.
    pub fn mul_split(&self, ca: C64, cb: C64) -> Self {
        PairState {
            a: self.a.iter().map(|z| ca * z).collect(),
            b: self.b.iter().map(|z| cb * z).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .iter()
            .chain(&self.b)
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl LatticeState for PairState {
    fn zeros_like(&self) -> Self {
        PairState {
            a: vec![C64::new(0.0, 0.0); self.a.len()],
            b: vec![C64::new(0.0, 0.0); self.b.len()],
        }
    }

    fn add_scaled(&self, s: f64, other: &Self) -> Self {
        PairState {
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + s * y).collect(),
            b: self.b.iter().zip(&other.b).map(|(x, y)| x + s * y).collect(),
        }
    }

    fn scale(&self, s: f64) -> Self {
        PairState {
            a: self.a.iter().map(|z| s * z).collect(),
            b: self.b.iter().map(|z| s * z).collect(),
        }
    }

    fn mul_complex(&self, c: C64) -> Self {
        self.mul_split(c, c.conj())
    }

    fn to_modes(&self, lat: &Lattice) -> Self {
        PairState {
            a: lat.to_modes(&FieldState::new(self.a.clone())).values,
            b: lat.to_modes(&FieldState::new(self.b.clone())).values,
        }
    }

    fn from_modes(&self, lat: &Lattice) -> Self {
        self.to_modes(lat)
    }

    fn mul_diag(&self, d: &ModeDiag) -> Self {
        PairState {
            a: self.a.iter().zip(&d.fwd).map(|(z, c)| z * c).collect(),
            b: self.b.iter().zip(&d.partner).map(|(z, c)| z * c).collect(),
        }
    }

    fn nonlinearity(&self, params: &ModelParams) -> Self {
        let n = self.a.len();
        if params.lambda == 0 {
            return self.zeros_like();
        }
        let lam = f64::from(params.lambda);
        let r = params.r as i32;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let prod = self.a[i] * self.b[i];
            let pw = prod.powi(r);
            a.push(lam * pw * self.a[i]);
            b.push(lam * pw * self.b[i]);
        }
        PairState { a, b }
    }

    fn err_norm(&self, lat: &Lattice) -> f64 {
        let na = crate::lattice::norm_dx_sq(lat, &FieldState::new(self.a.clone()));
        let nb = crate::lattice::norm_dx_sq(lat, &FieldState::new(self.b.clone()));
        (na + nb).sqrt()
    }

    fn err_norm_modes(&self, lat: &Lattice) -> f64 {
        (weighted_mode_norm_sq(lat, &self.a) + weighted_mode_norm_sq(lat, &self.b)).sqrt()
    }

    fn dot_re(&self, other: &Self) -> f64 {
        let da: f64 = self.a.iter().zip(&other.a).map(|(x, y)| (x.conj() * y).re).sum();
        let db: f64 = self.b.iter().zip(&other.b).map(|(x, y)| (x.conj() * y).re).sum();
        da + db
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridSpec;
    use crate::testutil::{rand_state, Seeded};

    #[test]
    fn pair_agrees_with_plain_on_diagonal() {
        let lat = Lattice::new(GridSpec::new(4, 0.5).unwrap());
        let params = ModelParams::new(1, 2).unwrap();
        let mut rng = Seeded::new(42);
        let u = rand_state(lat.dim(), &mut rng);
        let p = PairState::diagonal(&u);

        let f_plain = crate::lattice::nonlinearity(&params, &u);
        let f_pair = p.nonlinearity(&params);
        assert!(crate::testutil::max_abs_diff(&f_plain, &f_pair.a_part()) < 1e-13);

        let d = ModeDiag::conjugate_pair(lat.propagator_diagonal(0.37));
        let plain = LatticeState::apply_mode_diag(&u, &lat, &d);
        let pair = p.apply_mode_diag(&lat, &d);
        assert!(crate::testutil::max_abs_diff(&plain, &pair.a_part()) < 1e-12);
        // Partner half stays the conjugate of the first half.
        let conj = FieldState::new(pair.b.clone());
        assert!(crate::testutil::max_abs_diff(&plain.conj(), &conj) < 1e-12);

        let c = C64::new(0.3, -1.1);
        let s_plain = u.scale_complex(c);
        let s_pair = p.mul_complex(c);
        assert!(crate::testutil::max_abs_diff(&s_plain, &s_pair.a_part()) < 1e-14);
    }

    #[test]
    fn mode_norm_agrees_with_physical_norm() {
        let lat = Lattice::new(GridSpec::new(9, 0.3).unwrap());
        let mut rng = Seeded::new(43);
        let u = rand_state(lat.dim(), &mut rng);
        let direct = crate::lattice::norm_dx(&lat, &u);
        let via_modes = LatticeState::to_modes(&u, &lat).err_norm_modes(&lat);
        assert!((direct - via_modes).abs() < 1e-12 * direct);
    }
}
