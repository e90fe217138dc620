//! Reproducible field and state builders shared by the verification suites
//! and the tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{curl, deposit_point, gradient, interpolate_vector, Grid, ScalarField, VectorField};
use crate::helmholtz::solve_poisson;
use crate::phase_space::{FieldState, ParticleState};
use crate::vec3::{self, Vec3};

/// Smooth window equal to one at the origin and vanishing (with zero slope)
/// on the faces of the safe region, and beyond.
pub fn taper(grid: &Grid, x: Vec3) -> f64 {
    (0..3)
        .map(|a| {
            let (_, hi) = grid.safe_bounds(a);
            if hi <= 0.0 {
                return if x[a] == 0.0 { 1.0 } else { 0.0 };
            }
            let t = x[a] / hi;
            if t.abs() >= 1.0 {
                0.0
            } else {
                (1.0 - t * t).powi(2)
            }
        })
        .product()
}

/// Discrete curl of `taper * w`; divergence-free on the interior by
/// construction and zero on the outer layers.
pub fn windowed_curl(grid: &Grid, w: impl Fn(Vec3) -> Vec3) -> VectorField {
    let stream = VectorField::from_fn(*grid, |x| vec3::scale(w(x), taper(grid, x)));
    curl(&stream).expect("finite stream function")
}

/// A few random plane-wave modes times the taper.
pub fn random_smooth_vector(grid: &Grid, rng: &mut impl Rng) -> VectorField {
    let modes: Vec<(Vec3, f64, Vec3)> = (0..3)
        .map(|_| {
            let k = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            (k, phase, amp)
        })
        .collect();
    VectorField::from_fn(*grid, |x| {
        let w = taper(grid, x);
        modes.iter().fold(vec3::ZERO, |acc, (k, ph, amp)| {
            vec3::add(acc, vec3::scale(*amp, w * (vec3::dot(*k, x) + ph).sin()))
        })
    })
}

pub fn random_smooth_scalar(grid: &Grid, rng: &mut impl Rng) -> ScalarField {
    random_smooth_vector(grid, rng).component(0)
}

fn random_inner_point(grid: &Grid, rng: &mut impl Rng) -> Vec3 {
    let mut r = vec3::ZERO;
    for (a, ra) in r.iter_mut().enumerate() {
        let (_, hi) = grid.safe_bounds(a);
        if hi > 0.0 {
            *ra = rng.gen_range(-0.8 * hi..0.8 * hi);
        }
    }
    r
}

/// Generic random state: smooth windowed fields, a randomly placed particle
/// with unit mass, `pi_phi = 0`.
pub fn random_state(grid: &Grid, charge: f64, seed: u64) -> FieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_inner_point(grid, &mut rng);
    let momentum = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let particle = ParticleState { r, momentum, charge, mass: 1.0 };
    let mut s = FieldState::vacuum(*grid, particle);
    s.a = random_smooth_vector(grid, &mut rng);
    s.pi = random_smooth_vector(grid, &mut rng);
    s.phi = random_smooth_scalar(grid, &mut rng);
    s
}

/// State satisfying the Gauss law on the core: `div pi = -q delta_h(x - r)`.
///
/// `pi` is the gradient of the discrete Coulomb solution plus a random
/// divergence-free part; `phi` is the matching Coulomb potential, supported
/// on the core. The particle is kinetically at rest (`P = q A(r)`).
pub fn gauss_consistent_state(grid: &Grid, charge: f64, r: Vec3, seed: u64, tol: f64) -> Result<FieldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = deposit_point(grid, charge, r)?;
    let sol = solve_poisson(&rho.map(|v| -v), tol, 50_000)?;
    let mut s = FieldState::vacuum(*grid, ParticleState::at_rest(r, charge, 1.0));
    let modes: Vec<Vec3> = (0..3)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let solenoidal = windowed_curl(grid, |x| {
        [
            modes[0][0] * x[1] * x[2] + modes[0][1],
            modes[1][0] * x[0] + modes[1][1] * x[2] * x[2],
            modes[2][0] * x[0] * x[1] + modes[2][2],
        ]
    });
    s.pi = gradient(&sol.potential)?.add(&solenoidal);
    s.phi = sol.potential.map(|v| v / s.eps0);
    s.a = random_smooth_vector(grid, &mut rng);
    s.particle.momentum = vec3::scale(interpolate_vector(&s.a, r)?, charge);
    Ok(s)
}
