use emdirac::fixtures::{gauss_consistent_state, random_smooth_vector};
use emdirac::hamiltonians::transverse_momentum_witness;
use emdirac::lagrangian::{Lagrangian, MomentumMode, VelocityData};
use emdirac::potential::Potential;
use emdirac::report::segment_distance;
use emdirac::vec3;
use emdirac::{FieldState, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{oracle_gradient, oracle_line_density, Outcome, Verdict};

const NODES: usize = 64;

fn setup() -> Result<(FieldState, VelocityData, Lagrangian), Box<dyn std::error::Error>> {
    let g = Grid::cubic(9, 0.25)?;
    let s = gauss_consistent_state(&g, 1.0, [0.25, -0.125, 0.2], 11, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v = VelocityData { adot: random_smooth_vector(&g, &mut rng), rdot: [0.3, 0.1, -0.2] };
    Ok((s, v, Lagrangian::new(Potential::harmonic(1.0), NODES, 1e-5)))
}

pub fn identity() -> Outcome {
    let (s, v, lag) = setup()?;
    let g = *s.grid();
    let pi = lag.canonical_momentum(&s, &v, MomentumMode::IndependentVariables)?;
    let grad_phi = oracle_gradient(&s.phi);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for c in g.interior_cells() {
        // -eps0 E = eps0 (Adot + grad phi)
        let want = vec3::scale(vec3::add(v.adot.values()[c], grad_phi[c]), s.eps0);
        worst = worst.max(vec3::max_abs(vec3::sub(pi.values()[c], want)));
        scale = scale.max(vec3::max_abs(want));
    }
    let rel = worst / scale;
    Ok(Verdict::new(rel < 1e-6, format!("max relative error {rel:.2e} (< 1e-6)")))
}

pub fn difference() -> Outcome {
    let (s, v, lag) = setup()?;
    let g = *s.grid();
    let p = s.particle;
    let independent = lag.canonical_momentum(&s, &v, MomentumMode::IndependentVariables)?;
    let substituted = lag.canonical_momentum(&s, &v, MomentumMode::SubstitutedConstraints)?;
    let lambda = oracle_line_density(&g, p.r, NODES);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut outside = 0.0f64;
    let mut largest = 0.0f64;
    for c in 0..g.len() {
        let diff = vec3::sub(substituted.values()[c], independent.values()[c]);
        let want = vec3::scale(p.r, -p.charge * lambda[c]);
        worst = worst.max(vec3::max_abs(vec3::sub(diff, want)));
        scale = scale.max(vec3::max_abs(want));
        largest = largest.max(vec3::max_abs(diff));
        if segment_distance(g.position(c), p.r) > 2.0 * g.spacing() {
            outside = outside.max(vec3::max_abs(diff));
        }
    }
    let rel = worst / scale;
    // both momenta are central differences with step 1e-5, so cells off the
    // segment carry rounding of order eps / step
    let leak = outside / largest;
    Ok(Verdict::new(
        rel < 1e-6 && leak < 1e-8,
        format!("relative error {rel:.2e} (< 1e-6), largest value beyond 2h of the segment {leak:.1e} of peak (< 1e-8)"),
    ))
}

pub fn witness() -> Outcome {
    let g = Grid::cubic(9, 0.25)?;
    let s = gauss_consistent_state(&g, 1.0, [0.25, 0.25, 0.0], 5, 1e-12)?;
    let w = transverse_momentum_witness(&s, NODES, 1e-12)?;
    let pass = w.polarization_transverse > 0.0 && w.distance >= w.polarization_transverse - 1e-8;
    Ok(Verdict::new(
        pass,
        format!("|pi_t + D| = {:.6e}, |P_t| = {:.6e}", w.distance, w.polarization_transverse),
    ))
}
