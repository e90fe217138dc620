//! Hamiltonians of the charge plus field: minimal coupling (with and without
//! the static field `psi`) and the multipolar PZW form, with closed-form
//! gradients for the integrator and the identities relating them.
//!
//! All field energies are interior sums times `h^3`. The electric field of a
//! state is `E = -pi / eps0`.

use serde::Serialize;

use crate::constraints::PsiField;
use crate::error::{Error, Result};
use crate::gauges::poincare_vector_potential;
use crate::grid::{
    curl, curl_adjoint, deposit_line, deposit_point, gradient, gradient_adjoint, interpolate_scalar,
    interpolate_scalar_gradient, interpolate_vector, interpolate_vector_jacobian, line_integral_vector, Grid,
    VectorField,
};
use crate::helmholtz::decompose;
use crate::lagrangian::{Lagrangian, VelocityData};
use crate::phase_space::{FieldState, Functional, ParticleState, PhaseGradient};
use crate::potential::Potential;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianKind {
    /// Minimal coupling with `pi . grad phi`, `q phi(r)` and the static field `psi`.
    MinimalCouplingPsi(PsiField),
    /// Kinetic, binding and free-field energy only.
    MinimalCouplingFinal,
    /// The final form shifted by the constant `-sum psi^2 / 2 eps0`.
    MinimalCouplingSimplified(PsiField),
    Pzw,
    /// Long-wavelength limit: point dipole at the origin, no magnetic insert.
    PzwDipole,
}

impl HamiltonianKind {
    pub fn name(&self) -> &'static str {
        match self {
            HamiltonianKind::MinimalCouplingPsi(_) => "minimal_coupling_psi",
            HamiltonianKind::MinimalCouplingFinal => "minimal_coupling_final",
            HamiltonianKind::MinimalCouplingSimplified(_) => "minimal_coupling_simplified",
            HamiltonianKind::Pzw => "pzw",
            HamiltonianKind::PzwDipole => "pzw_dipole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyTerm {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub terms: Vec<EnergyTerm>,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|t| t.value).sum()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }

    fn push(&mut self, name: &'static str, value: f64) {
        self.terms.push(EnergyTerm { name, value });
    }
}

/// `q r ∫_0^1 delta(x - u r) du` on the grid.
pub fn polarization_field(p: &ParticleState, grid: &Grid, nodes: usize) -> Result<VectorField> {
    let lambda = deposit_line(grid, 1.0, p.r, |_| 1.0, nodes)?;
    Ok(VectorField::from_scalar(&lambda, vec3::scale(p.r, p.charge)))
}

/// Point-dipole polarization `q r delta(x)` used by the dipole reduction.
pub fn dipole_polarization(p: &ParticleState, grid: &Grid) -> Result<VectorField> {
    let delta = deposit_point(grid, 1.0, vec3::ZERO)?;
    Ok(VectorField::from_scalar(&delta, vec3::scale(p.r, p.charge)))
}

/// `r × ∫_0^1 u B(u r) du`; times `q` this replaces `-q A(r)` in the PZW
/// kinetic term.
pub fn kinetic_insert(b: &VectorField, r: Vec3, nodes: usize) -> Result<Vec3> {
    Ok(vec3::cross(r, line_integral_vector(b, r, |u| u, nodes)?))
}

fn interior_sum(grid: &Grid, f: impl Fn(usize) -> f64) -> f64 {
    grid.interior_cells().map(f).sum::<f64>() * grid.cell_volume()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub kind: HamiltonianKind,
    pub potential: Potential,
    pub quadrature_nodes: usize,
    /// Relative step for the finite-difference particle force in the PZW forms.
    pub fd_step: f64,
}

impl Hamiltonian {
    pub fn new(kind: HamiltonianKind, potential: Potential, quadrature_nodes: usize, fd_step: f64) -> Self {
        Self { kind, potential, quadrature_nodes, fd_step }
    }

    fn check_psi(&self, s: &FieldState) -> Result<()> {
        match &self.kind {
            HamiltonianKind::MinimalCouplingPsi(p) | HamiltonianKind::MinimalCouplingSimplified(p) => {
                if p.psi.grid() != s.grid() {
                    return Err(Error::GridMismatch);
                }
                p.psi.check_finite("psi")
            }
            _ => Ok(()),
        }
    }

    fn polarization(&self, s: &FieldState, r: Vec3) -> Result<VectorField> {
        let p = ParticleState { r, ..s.particle };
        match self.kind {
            HamiltonianKind::PzwDipole => dipole_polarization(&p, s.grid()),
            _ => polarization_field(&p, s.grid(), self.quadrature_nodes),
        }
    }

    /// Field terms `D^2/2eps0 - D.P/eps0 + P^2/2eps0` with `D = -pi + P`.
    fn polarization_terms(&self, s: &FieldState, pol: &VectorField) -> (f64, f64, f64) {
        let g = *s.grid();
        let (mut dd, mut dp, mut pp) = (0.0, 0.0, 0.0);
        for c in g.interior_cells() {
            let p = pol.values()[c];
            let d = vec3::add(vec3::scale(s.pi.values()[c], -1.0), p);
            dd += vec3::dot(d, d);
            dp += vec3::dot(d, p);
            pp += vec3::dot(p, p);
        }
        let k = g.cell_volume() / s.eps0;
        (0.5 * dd * k, -dp * k, 0.5 * pp * k)
    }

    fn pzw_kinetic(&self, s: &FieldState, b: &VectorField, r: Vec3) -> Result<f64> {
        let p = &s.particle;
        let mech = match self.kind {
            HamiltonianKind::PzwDipole => p.momentum,
            _ => vec3::add(p.momentum, vec3::scale(kinetic_insert(b, r, self.quadrature_nodes)?, p.charge)),
        };
        Ok(vec3::dot(mech, mech) / (2.0 * p.mass))
    }

    /// Part of the PZW energy that depends on the particle position.
    fn pzw_position_energy(&self, s: &FieldState, b: &VectorField, r: Vec3) -> Result<f64> {
        let pol = self.polarization(s, r)?;
        let (dd, dp, pp) = self.polarization_terms(s, &pol);
        Ok(self.pzw_kinetic(s, b, r)? + dd + dp + pp)
    }

    pub fn breakdown(&self, s: &FieldState) -> Result<EnergyBreakdown> {
        self.check_psi(s)?;
        let g = *s.grid();
        let p = &s.particle;
        let b = curl(&s.a)?;
        let magnetic = interior_sum(&g, |c| vec3::dot(b.values()[c], b.values()[c])) / (2.0 * s.mu0);
        let mut out = EnergyBreakdown { terms: Vec::new() };
        let minimal_kinetic = || -> Result<f64> {
            let mech = vec3::sub(p.momentum, vec3::scale(interpolate_vector(&s.a, p.r)?, p.charge));
            Ok(vec3::dot(mech, mech) / (2.0 * p.mass))
        };
        let electric = || interior_sum(&g, |c| vec3::dot(s.pi.values()[c], s.pi.values()[c])) / (2.0 * s.eps0);
        match &self.kind {
            HamiltonianKind::MinimalCouplingPsi(psi) => {
                let grad_phi = gradient(&s.phi)?;
                let psi = &psi.psi;
                out.push("kinetic", minimal_kinetic()?);
                out.push("binding", self.potential.value(p.r)?);
                out.push("scalar_coupling", p.charge * interpolate_scalar(&s.phi, p.r)?);
                out.push(
                    "electric_psi",
                    interior_sum(&g, |c| {
                        let pi = s.pi.values()[c];
                        let d = vec3::sub(pi, psi.values()[c]);
                        2.0 * vec3::dot(pi, pi) - vec3::dot(d, d)
                    }) / (2.0 * s.eps0),
                );
                out.push("magnetic", magnetic);
                out.push("pi_grad_phi", -interior_sum(&g, |c| vec3::dot(s.pi.values()[c], grad_phi.values()[c])));
                out.push("pi_psi", -interior_sum(&g, |c| vec3::dot(s.pi.values()[c], psi.values()[c])) / s.eps0);
            }
            HamiltonianKind::MinimalCouplingFinal | HamiltonianKind::MinimalCouplingSimplified(_) => {
                out.push("kinetic", minimal_kinetic()?);
                out.push("binding", self.potential.value(p.r)?);
                out.push("electric", electric());
                out.push("magnetic", magnetic);
                if let HamiltonianKind::MinimalCouplingSimplified(psi) = &self.kind {
                    let psi = &psi.psi;
                    out.push(
                        "psi_reference",
                        -interior_sum(&g, |c| vec3::dot(psi.values()[c], psi.values()[c])) / (2.0 * s.eps0),
                    );
                }
            }
            HamiltonianKind::Pzw | HamiltonianKind::PzwDipole => {
                let pol = self.polarization(s, p.r)?;
                let (dd, dp, pp) = self.polarization_terms(s, &pol);
                out.push("kinetic", self.pzw_kinetic(s, &b, p.r)?);
                out.push("binding", self.potential.value(p.r)?);
                out.push("displacement", dd);
                out.push("polarization_cross", dp);
                out.push("polarization_self", pp);
                out.push("magnetic", magnetic);
            }
        }
        Ok(out)
    }

    pub fn energy(&self, s: &FieldState) -> Result<f64> {
        Ok(self.breakdown(s)?.total())
    }

    pub fn energy_gradient(&self, s: &FieldState) -> Result<PhaseGradient> {
        self.check_psi(s)?;
        let g = *s.grid();
        let l = s.layout();
        let h3 = g.cell_volume();
        let p = &s.particle;
        let mut out = PhaseGradient::zeros(l);
        let b = curl(&s.a)?;
        let mut d_a = curl_adjoint(&b).scale(h3 / s.mu0);
        let mut d_pi = VectorField::zeros(g);
        let mut d_phi = vec![0.0; g.len()];
        let mut d_r = self.potential.gradient(p.r)?;
        let d_p;

        match &self.kind {
            HamiltonianKind::MinimalCouplingPsi(_)
            | HamiltonianKind::MinimalCouplingFinal
            | HamiltonianKind::MinimalCouplingSimplified(_) => {
                let v = vec3::scale(vec3::sub(p.momentum, vec3::scale(interpolate_vector(&s.a, p.r)?, p.charge)), 1.0 / p.mass);
                d_p = v;
                for (c, w) in g.cic_stencil(p.r)? {
                    let e = &mut d_a.values_mut()[c];
                    *e = vec3::sub(*e, vec3::scale(v, p.charge * w));
                }
                let jac = interpolate_vector_jacobian(&s.a, p.r)?;
                for (j, dr) in d_r.iter_mut().enumerate() {
                    *dr -= p.charge * (0..3).map(|i| v[i] * jac[i][j]).sum::<f64>();
                }
                if let HamiltonianKind::MinimalCouplingPsi(psi) = &self.kind {
                    let grad_phi = gradient(&s.phi)?;
                    let psi = &psi.psi;
                    for c in g.interior_cells() {
                        let pi = s.pi.values()[c];
                        let ps = psi.values()[c];
                        let e = vec3::sub(vec3::sub(vec3::scale(pi, 2.0), vec3::sub(pi, ps)), ps);
                        d_pi.values_mut()[c] =
                            vec3::scale(vec3::sub(vec3::scale(e, 1.0 / s.eps0), grad_phi.values()[c]), h3);
                    }
                    let adj = gradient_adjoint(&s.pi);
                    for (c, d) in d_phi.iter_mut().enumerate() {
                        *d = -h3 * adj.values()[c];
                    }
                    for (c, w) in g.cic_stencil(p.r)? {
                        d_phi[c] += p.charge * w;
                    }
                    d_r = vec3::add(d_r, vec3::scale(interpolate_scalar_gradient(&s.phi, p.r)?, p.charge));
                } else {
                    for c in g.interior_cells() {
                        d_pi.values_mut()[c] = vec3::scale(s.pi.values()[c], h3 / s.eps0);
                    }
                }
            }
            HamiltonianKind::Pzw | HamiltonianKind::PzwDipole => {
                let pol = self.polarization(s, p.r)?;
                for c in g.interior_cells() {
                    let d = vec3::add(vec3::scale(s.pi.values()[c], -1.0), pol.values()[c]);
                    d_pi.values_mut()[c] = vec3::scale(vec3::sub(d, pol.values()[c]), -h3 / s.eps0);
                }
                if self.kind == HamiltonianKind::Pzw {
                    let ins = vec3::scale(kinetic_insert(&b, p.r, self.quadrature_nodes)?, p.charge);
                    let v = vec3::scale(vec3::add(p.momentum, ins), 1.0 / p.mass);
                    d_p = v;
                    let weights = deposit_line(&g, h3, p.r, |u| u, self.quadrature_nodes)?;
                    let dir = vec3::scale(vec3::cross(v, p.r), p.charge);
                    let w = VectorField::from_scalar(&weights, dir);
                    d_a = d_a.add(&curl_adjoint(&w));
                } else {
                    d_p = vec3::scale(p.momentum, 1.0 / p.mass);
                }
                for (a, dr) in d_r.iter_mut().enumerate() {
                    let step = self.fd_step * vec3::max_abs(p.r).max(1.0);
                    let mut hi = p.r;
                    let mut lo = p.r;
                    hi[a] += step;
                    lo[a] -= step;
                    let up = self.pzw_position_energy(s, &b, hi)?;
                    let down = self.pzw_position_energy(s, &b, lo)?;
                    *dr += (up - down) / (2.0 * step);
                }
            }
        }

        for a in 0..3 {
            out.values[l.r(a)] = d_r[a];
            out.values[l.momentum(a)] = d_p[a];
        }
        for c in 0..g.len() {
            for k in 0..3 {
                out.values[l.a(c, k)] = d_a.values()[c][k];
                out.values[l.pi(c, k)] = d_pi.values()[c][k];
            }
            out.values[l.phi(c)] = d_phi[c];
        }
        out.check_finite()?;
        Ok(out)
    }
}

impl Functional for Hamiltonian {
    fn value(&self, s: &FieldState) -> Result<f64> {
        self.energy(s)
    }

    fn analytic_gradient(&self, s: &FieldState) -> Option<Result<PhaseGradient>> {
        Some(self.energy_gradient(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cancellation {
    /// `sum [D^2/2eps0 - D.P/eps0 + P^2/2eps0] h^3`.
    pub assembled: f64,
    /// `sum eps0 E^2 / 2 h^3`.
    pub reference: f64,
    pub absolute: f64,
    pub relative: f64,
}

/// The PZW field terms collapse to the electric energy for any polarization.
pub fn pzw_cancellation_check(s: &FieldState, pol: &VectorField) -> Cancellation {
    let g = *s.grid();
    let mut assembled = 0.0;
    let mut reference = 0.0;
    for c in g.interior_cells() {
        let e = vec3::scale(s.pi.values()[c], -1.0 / s.eps0);
        let p = pol.values()[c];
        let d = vec3::add(vec3::scale(e, s.eps0), p);
        assembled += vec3::dot(d, d) / (2.0 * s.eps0) - vec3::dot(d, p) / s.eps0 + vec3::dot(p, p) / (2.0 * s.eps0);
        reference += 0.5 * s.eps0 * vec3::dot(e, e);
    }
    let h3 = g.cell_volume();
    let (assembled, reference) = (assembled * h3, reference * h3);
    let absolute = (assembled - reference).abs();
    let relative = if reference != 0.0 { absolute / reference.abs() } else { absolute };
    Cancellation { assembled, reference, absolute, relative }
}

/// Max component of `r × ∫u B(ur) du + A(r)` with `A` the Poincare potential of `B`.
pub fn a_square_check(p: &ParticleState, b: &VectorField, nodes: usize) -> Result<f64> {
    let insert = kinetic_insert(b, p.r, nodes)?;
    let a = interpolate_vector(&poincare_vector_potential(b, nodes)?, p.r)?;
    Ok(vec3::max_abs(vec3::add(insert, a)))
}

/// State whose momenta follow from the velocities: `pi = eps0 (Adot + grad phi)`
/// on the interior and `P = m rdot + q A(r)`.
pub fn matched_state(s: &FieldState, v: &VelocityData) -> Result<FieldState> {
    let mut out = s.clone();
    let g = *s.grid();
    let grad_phi = gradient(&s.phi)?;
    out.pi = v.adot.add(&grad_phi).scale(s.eps0).masked_interior();
    let a_r = interpolate_vector(&s.a, s.particle.r)?;
    out.particle.momentum = vec3::add(vec3::scale(v.rdot, s.particle.mass), vec3::scale(a_r, s.particle.charge));
    debug_assert_eq!(out.pi.grid(), &g);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreResidual {
    pub absolute: f64,
    pub relative: f64,
}

/// `|H + L - P.rdot - sum pi.Adot h^3|`.
pub fn legendre_check(h: &Hamiltonian, lag: &Lagrangian, s: &FieldState, v: &VelocityData) -> Result<LegendreResidual> {
    let g = *s.grid();
    let hv = h.energy(s)?;
    let lv = lag.evaluate(s, v)?;
    let prdot = vec3::dot(s.particle.momentum, v.rdot);
    let field = (0..g.len()).map(|c| vec3::dot(s.pi.values()[c], v.adot.values()[c])).sum::<f64>() * g.cell_volume();
    let absolute = (hv + lv - prdot - field).abs();
    let scale = hv.abs() + lv.abs() + prdot.abs() + field.abs();
    Ok(LegendreResidual { absolute, relative: if scale > 0.0 { absolute / scale } else { absolute } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumWitness {
    /// `||pi_t + D||` over the interior.
    pub distance: f64,
    /// `||P_t||` over the interior.
    pub polarization_transverse: f64,
}

/// Compare the transverse field momentum with `-D`, `D = eps0 E + P`.
pub fn transverse_momentum_witness(s: &FieldState, nodes: usize, tol: f64) -> Result<MomentumWitness> {
    let pol = polarization_field(&s.particle, s.grid(), nodes)?;
    let pi_t = decompose(&s.pi, tol)?.transverse;
    let p_t = decompose(&pol, tol)?.transverse;
    let d = s.pi.scale(-1.0).add(&pol);
    let gap = pi_t.add(&d);
    Ok(MomentumWitness {
        distance: gap.inner_interior(&gap).sqrt(),
        polarization_transverse: p_t.inner_interior(&p_t).sqrt(),
    })
}
