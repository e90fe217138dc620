//! Discretized Lagrangian of the charge plus field and the two ways of
//! deriving the momentum conjugate to `A`.
//!
//! Sign convention: `E = -dA/dt - grad phi`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    curl, deposit_point, divergence, gradient, interpolate_scalar, interpolate_vector, midpoint_nodes, ScalarField,
    VectorField,
};
use crate::phase_space::FieldState;
use crate::potential::Potential;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityData {
    pub adot: VectorField,
    pub rdot: Vec3,
}

impl VelocityData {
    pub fn at_rest(s: &FieldState) -> Self {
        Self { adot: VectorField::zeros(*s.grid()), rdot: vec3::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumMode {
    /// `A`, `dA/dt` and `phi` are varied independently.
    IndependentVariables,
    /// The scalar potential seen by the particle is the line integral of
    /// `E`, so it moves with `dA/dt`.
    SubstitutedConstraints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    pub potential: Potential,
    pub quadrature_nodes: usize,
    pub fd_step: f64,
}

/// `E = -dA/dt - grad phi`.
pub fn electric_field(s: &FieldState, v: &VelocityData) -> Result<VectorField> {
    Ok(v.adot.add(&gradient(&s.phi)?).scale(-1.0))
}

impl Lagrangian {
    pub fn new(potential: Potential, quadrature_nodes: usize, fd_step: f64) -> Self {
        Self { potential, quadrature_nodes, fd_step }
    }

    fn field_and_particle_terms(&self, s: &FieldState, v: &VelocityData, grad_phi: &VectorField) -> Result<f64> {
        if s.a.grid() != v.adot.grid() {
            return Err(Error::GridMismatch);
        }
        v.adot.check_finite("vector potential rate")?;
        let g = *s.grid();
        let p = &s.particle;
        let b = curl(&s.a)?;
        let mut field = 0.0;
        for c in g.interior_cells() {
            let e = vec3::add(v.adot.values()[c], grad_phi.values()[c]);
            let bc = b.values()[c];
            field += 0.5 * s.eps0 * vec3::dot(e, e) - 0.5 * vec3::dot(bc, bc) / s.mu0;
        }
        let kinetic = 0.5 * p.mass * vec3::dot(v.rdot, v.rdot);
        let coupling = p.charge * vec3::dot(v.rdot, interpolate_vector(&s.a, p.r)?);
        Ok(kinetic - self.potential.value(p.r)? + field * g.cell_volume() + coupling)
    }

    /// `L = m rdot^2/2 - V + h^3 sum_interior [eps0/2 (Adot + grad phi)^2
    /// - (curl A)^2 / 2 mu0] + q rdot.A(r) - q phi(r)`.
    pub fn evaluate(&self, s: &FieldState, v: &VelocityData) -> Result<f64> {
        let grad_phi = gradient(&s.phi)?;
        let base = self.field_and_particle_terms(s, v, &grad_phi)?;
        Ok(base - s.particle.charge * interpolate_scalar(&s.phi, s.particle.r)?)
    }

    /// Same Lagrangian with the particle's scalar potential replaced by the
    /// Poincare line integral `-r . int_0^1 E(u r) du` of the current field.
    pub fn evaluate_substituted(&self, s: &FieldState, v: &VelocityData) -> Result<f64> {
        let grad_phi = gradient(&s.phi)?;
        let base = self.field_and_particle_terms(s, v, &grad_phi)?;
        let r = s.particle.r;
        s.grid().check_safe(r)?;
        let mut avg = vec3::ZERO;
        for (u, du) in midpoint_nodes(self.quadrature_nodes) {
            let x = vec3::scale(r, u);
            let e = vec3::add(interpolate_vector(&v.adot, x)?, interpolate_vector(&grad_phi, x)?);
            avg = vec3::sub(avg, vec3::scale(e, du));
        }
        let phi_line = -vec3::dot(r, avg);
        Ok(base - s.particle.charge * phi_line)
    }

    /// Momentum density conjugate to `A`: central differences of the
    /// Lagrangian in each `Adot` cell value, divided by `h^3`.
    pub fn canonical_momentum(&self, s: &FieldState, v: &VelocityData, mode: MomentumMode) -> Result<VectorField> {
        let g = *s.grid();
        let eval = |vv: &VelocityData| match mode {
            MomentumMode::IndependentVariables => self.evaluate(s, vv),
            MomentumMode::SubstitutedConstraints => self.evaluate_substituted(s, vv),
        };
        let inv_vol = 1.0 / g.cell_volume();
        let values: Result<Vec<Vec3>> = (0..g.len())
            .into_par_iter()
            .map(|c| {
                let mut work = v.clone();
                let mut out = vec3::ZERO;
                for (comp, slot) in out.iter_mut().enumerate() {
                    let z = v.adot.values()[c][comp];
                    let step = self.fd_step * z.abs().max(1.0);
                    if z + step == z {
                        return Err(Error::StepUnderflow(c));
                    }
                    work.adot.values_mut()[c][comp] = z + step;
                    let up = eval(&work)?;
                    work.adot.values_mut()[c][comp] = z - step;
                    let down = eval(&work)?;
                    work.adot.values_mut()[c][comp] = z;
                    *slot = (up - down) / (2.0 * step) * inv_vol;
                    if !slot.is_finite() {
                        return Err(Error::NonFinite { what: "momentum", index: c });
                    }
                }
                Ok(out)
            })
            .collect();
        VectorField::from_values(g, values?)
    }
}

/// `-eps0 div(Adot + grad phi) - q delta_h(x - r)`.
pub fn gauss_residual(s: &FieldState, v: &VelocityData) -> Result<ScalarField> {
    let flux = divergence(&v.adot.add(&gradient(&s.phi)?))?;
    let rho = deposit_point(s.grid(), s.particle.charge, s.particle.r)?;
    Ok(flux.zip_map(&rho, |d, q| -s.eps0 * d - q))
}
