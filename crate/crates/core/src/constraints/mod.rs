//! Cell-indexed constraint families, the consistency chain that generates
//! secondary constraints, and (in submodules) the constraint matrix, Dirac
//! brackets and the admissibility test for the static radial field `psi`.
//!
//! The table constraints are, per cell `c` at position `x`:
//!
//! | id            | residual                       |
//! |---------------|--------------------------------|
//! | `PhiMomentum` | `pi_phi`                       |
//! | `Gauss`       | `-(q delta_h(x - r) + div pi)` |
//! | `RadialA`     | `x . A`                        |
//! | `RadialE`     | `x . (pi / eps0 - grad phi)`   |

mod matrix;
mod psi;

pub use matrix::{
    classify, constraint_matrix, dirac_bracket, write_matrix_dump, Classification, ConstraintClass, ConstraintMatrix,
    DiracBracket,
};
pub use psi::{harmonic_gradient, psi_admissible, radial_inverse_square, PsiField, PsiReport};

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{deposit_point, derivative_stencil, divergence, gradient, ScalarField};
use crate::phase_space::{bracket_sparse_dense, fd_jacobian, FieldState, Functional, PhaseLayout, SparseGradient};
use crate::vec3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    PhiMomentum,
    Gauss,
    RadialA,
    RadialE,
    /// Bracket of `parent` with the Hamiltonian, found at chain step `iteration`.
    Generated { parent: Box<ConstraintId>, iteration: usize },
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::PhiMomentum => f.write_str("phi_momentum"),
            ConstraintId::Gauss => f.write_str("gauss"),
            ConstraintId::RadialA => f.write_str("radial_a"),
            ConstraintId::RadialE => f.write_str("radial_e"),
            ConstraintId::Generated { parent, iteration } => write!(f, "d/dt[{parent}]@{iteration}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Primary,
    Secondary,
}

type Evaluator = Arc<dyn Fn(&FieldState) -> Result<ScalarField> + Send + Sync>;

/// One scalar constraint per grid cell.
#[derive(Clone)]
pub struct Constraint {
    pub id: ConstraintId,
    pub kind: ConstraintKind,
    generated: Option<Evaluator>,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint").field("id", &self.id).field("kind", &self.kind).finish()
    }
}

impl Constraint {
    pub fn phi_momentum() -> Self {
        Self { id: ConstraintId::PhiMomentum, kind: ConstraintKind::Primary, generated: None }
    }

    pub fn gauss() -> Self {
        Self { id: ConstraintId::Gauss, kind: ConstraintKind::Secondary, generated: None }
    }

    pub fn radial_a() -> Self {
        Self { id: ConstraintId::RadialA, kind: ConstraintKind::Secondary, generated: None }
    }

    pub fn radial_e() -> Self {
        Self { id: ConstraintId::RadialE, kind: ConstraintKind::Secondary, generated: None }
    }

    /// The four table families in order.
    pub fn table() -> Vec<Self> {
        vec![Self::phi_momentum(), Self::gauss(), Self::radial_a(), Self::radial_e()]
    }

    /// Time derivative `{chi(c), H}` of `parent` as a new family.
    pub fn generated(parent: &Constraint, hamiltonian: Arc<dyn Functional>, iteration: usize) -> Self {
        let p = parent.clone();
        let eval: Evaluator = Arc::new(move |s: &FieldState| {
            let gh = hamiltonian.gradient(s)?;
            gh.check_finite()?;
            let layout = s.layout();
            let rows = p.gradient_rows(s)?;
            let values = rows.iter().map(|row| bracket_sparse_dense(&layout, row, &gh.values)).collect();
            ScalarField::from_values(*s.grid(), values)
        });
        Self {
            id: ConstraintId::Generated { parent: Box::new(parent.id.clone()), iteration },
            kind: ConstraintKind::Secondary,
            generated: Some(eval),
        }
    }

    pub fn residual(&self, s: &FieldState) -> Result<ScalarField> {
        if let Some(eval) = &self.generated {
            return eval(s);
        }
        let g = *s.grid();
        match self.id {
            ConstraintId::PhiMomentum => Ok(s.pi_phi.clone()),
            ConstraintId::Gauss => {
                let rho = deposit_point(&g, s.particle.charge, s.particle.r)?;
                Ok(rho.zip_map(&divergence(&s.pi)?, |q, d| -(q + d)))
            }
            ConstraintId::RadialA => {
                let v = (0..g.len()).map(|c| vec3::dot(g.position(c), s.a.values()[c])).collect();
                ScalarField::from_values(g, v)
            }
            ConstraintId::RadialE => {
                let gp = gradient(&s.phi)?;
                let v = (0..g.len())
                    .map(|c| {
                        let e = vec3::sub(vec3::scale(s.pi.values()[c], 1.0 / s.eps0), gp.values()[c]);
                        vec3::dot(g.position(c), e)
                    })
                    .collect();
                ScalarField::from_values(g, v)
            }
            ConstraintId::Generated { .. } => unreachable!("generated constraints carry an evaluator"),
        }
    }

    /// Partial derivatives of each cell's constraint with respect to the
    /// phase-space coordinates. Generated families use central differences.
    pub fn gradient_rows(&self, s: &FieldState) -> Result<Vec<SparseGradient>> {
        if self.generated.is_some() {
            let rows = fd_jacobian(|st| Ok(self.residual(st)?.values().to_vec()), s, crate::phase_space::DEFAULT_FD_STEP)?;
            return Ok(rows
                .into_iter()
                .map(|row| row.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect())
                .collect());
        }
        let g = *s.grid();
        let l = s.layout();
        let n = g.len();
        let mut rows: Vec<SparseGradient> = vec![Vec::new(); n];
        match self.id {
            ConstraintId::PhiMomentum => {
                for (c, row) in rows.iter_mut().enumerate() {
                    row.push((l.pi_phi(c), 1.0));
                }
            }
            ConstraintId::Gauss => {
                let inv_vol = 1.0 / g.cell_volume();
                let q = s.particle.charge;
                for (cell, dw) in g.cic_stencil_gradient(s.particle.r)? {
                    for a in 0..3 {
                        if dw[a] != 0.0 && q != 0.0 {
                            rows[cell].push((l.r(a), -q * dw[a] * inv_vol));
                        }
                    }
                }
                for (c, row) in rows.iter_mut().enumerate() {
                    for a in 0..3 {
                        for (cell, w) in derivative_stencil(&g, c, a) {
                            if w != 0.0 {
                                row.push((l.pi(cell, a), -w));
                            }
                        }
                    }
                }
            }
            ConstraintId::RadialA => {
                for (c, row) in rows.iter_mut().enumerate() {
                    let x = g.position(c);
                    for a in 0..3 {
                        if x[a] != 0.0 {
                            row.push((l.a(c, a), x[a]));
                        }
                    }
                }
            }
            ConstraintId::RadialE => {
                for (c, row) in rows.iter_mut().enumerate() {
                    let x = g.position(c);
                    for a in 0..3 {
                        if x[a] != 0.0 {
                            row.push((l.pi(c, a), x[a] / s.eps0));
                            for (cell, w) in derivative_stencil(&g, c, a) {
                                if w != 0.0 {
                                    row.push((l.phi(cell), -x[a] * w));
                                }
                            }
                        }
                    }
                }
            }
            ConstraintId::Generated { .. } => unreachable!(),
        }
        Ok(rows.into_iter().map(merge_duplicates).collect())
    }
}

fn merge_duplicates(mut row: SparseGradient) -> SparseGradient {
    row.sort_by_key(|&(i, _)| i);
    let mut out: SparseGradient = Vec::with_capacity(row.len());
    for (i, v) in row {
        match out.last_mut() {
            Some((j, w)) if *j == i => *w += v,
            _ => out.push((i, v)),
        }
    }
    out
}

pub fn eval_constraint(c: &Constraint, s: &FieldState) -> Result<ScalarField> {
    c.residual(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOptions {
    /// Core max-norm above which a bracket residual counts as nonzero.
    pub tol: f64,
    /// Relative projection residual above which a new family counts as
    /// independent of the existing ones.
    pub independence_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { tol: 1e-8, independence_tol: 1e-8, max_iterations: 8, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ChainStep {
    pub iteration: usize,
    pub parent: ConstraintId,
    /// Core max-norm of the bracket residual.
    pub residual_norm: f64,
    /// Relative distance of a random combination of the new gradients from
    /// the span of the existing ones (`None` when not tested).
    pub independence: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub constraints: Vec<Constraint>,
    pub steps: Vec<ChainStep>,
}

impl ChainResult {
    pub fn secondaries(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(|c| matches!(c.id, ConstraintId::Generated { .. }))
    }
}

/// Dirac-Bergmann consistency loop: demand `{chi, H} = 0` for every new
/// family, appending nonzero and independent residuals as secondaries.
pub fn consistency_chain(
    primaries: Vec<Constraint>,
    hamiltonian: Arc<dyn Functional>,
    s: &FieldState,
    opts: ChainOptions,
) -> Result<ChainResult> {
    let layout = s.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut existing_rows: Vec<SparseGradient> = Vec::new();
    for c in &primaries {
        existing_rows.extend(c.gradient_rows(s)?);
    }
    let mut all = primaries;
    let mut frontier: Vec<usize> = (0..all.len()).collect();
    let mut steps = Vec::new();
    for iteration in 1..=opts.max_iterations {
        let mut fresh = Vec::new();
        for &f in &frontier {
            let candidate = Constraint::generated(&all[f], hamiltonian.clone(), iteration);
            let residual_norm = candidate.residual(s)?.max_abs_core();
            let mut step = ChainStep {
                iteration,
                parent: all[f].id.clone(),
                residual_norm,
                independence: None,
                accepted: false,
            };
            if residual_norm > opts.tol {
                let rows = core_rows(&candidate, s)?;
                let distance = independence(&layout, &existing_rows, &rows, &mut rng);
                step.independence = Some(distance);
                if distance > opts.independence_tol {
                    step.accepted = true;
                    existing_rows.extend(rows);
                    fresh.push(candidate);
                }
            }
            steps.push(step);
        }
        if fresh.is_empty() {
            return Ok(ChainResult { constraints: all, steps });
        }
        frontier = (all.len()..all.len() + fresh.len()).collect();
        all.extend(fresh);
    }
    let residuals = frontier
        .iter()
        .map(|&f| Constraint::generated(&all[f], hamiltonian.clone(), opts.max_iterations + 1).residual(s))
        .map(|r| r.map(|f| f.max_abs_core()))
        .collect::<Result<Vec<_>>>()?;
    Err(Error::ChainIterationCap { cap: opts.max_iterations, residuals })
}

/// Gradient rows restricted to core cells, where residuals are compared.
fn core_rows(c: &Constraint, s: &FieldState) -> Result<Vec<SparseGradient>> {
    let g = *s.grid();
    Ok(c.gradient_rows(s)?.into_iter().enumerate().filter(|(cell, _)| g.is_core(*cell)).map(|(_, r)| r).collect())
}

/// Relative residual of projecting random combinations of `new` onto the
/// row span of `existing` (largest of three draws).
fn independence(layout: &PhaseLayout, existing: &[SparseGradient], new: &[SparseGradient], rng: &mut ChaCha8Rng) -> f64 {
    let dim = layout.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let mut v = vec![0.0; dim];
        for row in new {
            let alpha: f64 = rng.gen_range(-1.0..1.0);
            for &(i, x) in row {
                v[i] += alpha * x;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let proj = project_onto_rows(existing, &v, dim);
        let res = v.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(res / norm);
    }
    worst
}

/// Least-squares projection of `v` onto the span of `rows` by conjugate
/// gradients on the normal equations `R R^T y = R v`.
fn project_onto_rows(rows: &[SparseGradient], v: &[f64], dim: usize) -> Vec<f64> {
    if rows.is_empty() {
        return vec![0.0; dim];
    }
    let apply_rt = |y: &[f64]| {
        let mut out = vec![0.0; dim];
        for (row, &yk) in rows.iter().zip(y) {
            for &(i, x) in row {
                out[i] += yk * x;
            }
        }
        out
    };
    let apply_r = |w: &[f64]| -> Vec<f64> { rows.iter().map(|row| row.iter().map(|&(i, x)| x * w[i]).sum()).collect() };
    let b = apply_r(v);
    let mut y = vec![0.0; rows.len()];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let stop = 1e-30 * b.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..(4 * rows.len()).max(50) {
        if rr <= stop {
            break;
        }
        let ap = apply_r(&apply_rt(&p));
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for k in 0..y.len() {
            y[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_next: f64 = r.iter().map(|x| x * x).sum();
        for k in 0..p.len() {
            p[k] = r[k] + rr_next / rr * p[k];
        }
        rr = rr_next;
    }
    apply_rt(&y)
}
