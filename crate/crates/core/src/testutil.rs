//! Small deterministic helpers shared by unit and integration tests.

use crate::lattice::FieldState;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Thin wrapper around a seeded ChaCha12 stream.
pub struct Seeded(ChaCha12Rng);

impl Seeded {
    pub fn new(seed: u64) -> Self {
        Seeded(ChaCha12Rng::seed_from_u64(seed))
    }

    pub fn f64(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn u64(&mut self) -> u64 {
        self.0.random::<u64>()
    }

    /// Standard normal via Box-Muller, for platform-pinned noise.
    pub fn normal(&mut self) -> f64 {
        let u1: f64 = self.0.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = self.0.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Random complex state with iid standard-normal components.
pub fn rand_state(dim: usize, rng: &mut Seeded) -> FieldState {
    FieldState::from_fn(dim, |_| C64::new(rng.normal(), rng.normal()))
}

/// Random state rescaled to `‖u‖_δx = target`.
pub fn rand_state_with_norm(
    lat: &crate::lattice::Lattice,
    target: f64,
    rng: &mut Seeded,
) -> FieldState {
    let u = rand_state(lat.dim(), rng);
    let n = crate::lattice::norm_dx(lat, &u);
    u.scale(target / n)
}

/// Largest pointwise distance between two states.
pub fn max_abs_diff(a: &FieldState, b: &FieldState) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
