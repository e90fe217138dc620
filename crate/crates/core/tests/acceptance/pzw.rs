use emdirac::fixtures::random_state;
use emdirac::hamiltonians::{a_square_check, kinetic_insert, polarization_field, pzw_cancellation_check};
use emdirac::phase_space::ParticleState;
use emdirac::vec3::{self, Vec3};
use emdirac::{Grid, VectorField};

use crate::{Outcome, Verdict};

pub fn cancellation() -> Outcome {
    let g = Grid::cubic(9, 0.25)?;
    let mut worst = 0.0f64;
    let mut reference_gap = 0.0f64;
    for seed in 0..20 {
        let mut s = random_state(&g, 1.0, 100 + seed);
        s.eps0 = 0.5 + 0.1 * seed as f64;
        let pol = polarization_field(&s.particle, &g, 64)?;
        let check = pzw_cancellation_check(&s, &pol);
        let electric: f64 = g
            .interior_cells()
            .map(|c| {
                let e = vec3::scale(s.pi.values()[c], -1.0 / s.eps0);
                0.5 * s.eps0 * vec3::dot(e, e)
            })
            .sum::<f64>()
            * g.cell_volume();
        worst = worst.max((check.assembled - electric).abs() / electric);
        reference_gap = reference_gap.max((check.reference - electric).abs() / electric);
    }
    Ok(Verdict::new(
        worst < 1e-12 && reference_gap < 1e-12,
        format!("max relative residual {worst:.1e} over 20 states (< 1e-12)"),
    ))
}

fn insert_error(b: &VectorField, r: Vec3, nodes: usize, exact: Vec3) -> emdirac::Result<f64> {
    Ok(vec3::max_abs(vec3::sub(kinetic_insert(b, r, nodes)?, exact)))
}

pub fn a_square() -> Outcome {
    let g = Grid::cubic(9, 0.25)?;
    let r = [0.3, -0.2, 0.25];
    let p = ParticleState::at_rest(r, 1.0, 1.0);

    // uniform field: the insert is r x B / 2 = -A(r) exactly
    let b0 = [0.3, -0.7, 1.1];
    let uniform = VectorField::from_fn(g, |_| b0);
    let identity = a_square_check(&p, &uniform, 64)?;
    let closed_form = insert_error(&uniform, r, 64, vec3::scale(vec3::cross(r, b0), 0.5))?;

    // divergence-free linear field B0 + B1 (c.x) with c perpendicular to B1:
    // the integral is B0/2 + B1 (c.r)/3, and the midpoint rule misses the
    // second part by a factor 1/(4 n^2)
    let b1 = [0.0, 0.0, 1.0];
    let c = [1.0, 0.5, 0.0];
    let linear = VectorField::from_fn(g, |x| vec3::add(b0, vec3::scale(b1, vec3::dot(c, x))));
    let exact = vec3::cross(r, vec3::add(vec3::scale(b0, 0.5), vec3::scale(b1, vec3::dot(c, r) / 3.0)));
    let errors: Vec<f64> =
        [4, 8, 16, 32].iter().map(|&n| insert_error(&linear, r, n, exact)).collect::<emdirac::Result<_>>()?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();

    let converges = ratios.iter().all(|q| (3.5..=4.5).contains(q));
    Ok(Verdict::new(
        identity < 1e-6 && closed_form < 1e-6 && converges,
        format!(
            "uniform B: |insert + A(r)| = {identity:.1e}, closed form {closed_form:.1e}; linear B error ratios per node doubling {}",
            ratios.iter().map(|q| format!("{q:.3}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}
