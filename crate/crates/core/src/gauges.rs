//! Gauge conditions and the Poincare-gauge line-integral constructions.
//!
//! Potentials are built only on safe-region cells (the core), where every
//! segment from the origin stays inside the grid; other cells are zero.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{divergence, line_integral_scalar, line_integral_vector, Grid, ScalarField, VectorField};
use crate::phase_space::FieldState;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GaugeKind {
    Coulomb,
    Poincare,
}

impl GaugeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GaugeKind::Coulomb => "coulomb",
            GaugeKind::Poincare => "poincare",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coulomb" => Some(GaugeKind::Coulomb),
            "poincare" => Some(GaugeKind::Poincare),
            _ => None,
        }
    }
}

fn per_core_cell<T: Send + Default + Copy>(grid: &Grid, f: impl Fn(Vec3) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..grid.len())
        .into_par_iter()
        .map(|c| if grid.is_core(c) { f(grid.position(c)) } else { Ok(T::default()) })
        .collect()
}

/// `A(x) = -x × ∫_0^1 u B(u x) du`.
pub fn poincare_vector_potential(b: &VectorField, nodes: usize) -> Result<VectorField> {
    b.check_finite("magnetic field")?;
    let g = *b.grid();
    let values = per_core_cell(&g, |x| {
        let avg = line_integral_vector(b, x, |u| u, nodes)?;
        Ok(vec3::scale(vec3::cross(x, avg), -1.0))
    })?;
    VectorField::from_values(g, values)
}

/// `phi(x) = -x · ∫_0^1 E(u x) du`.
pub fn poincare_scalar_potential(e: &VectorField, nodes: usize) -> Result<ScalarField> {
    e.check_finite("electric field")?;
    let g = *e.grid();
    let values = per_core_cell(&g, |x| Ok(-vec3::dot(x, line_integral_vector(e, x, |_| 1.0, nodes)?)))?;
    ScalarField::from_values(g, values)
}

/// `Lambda(x) = -∫_0^1 x · A_t(u x) du`; adding its gradient to a transverse
/// potential restores the Poincare condition.
pub fn gauge_generator(transverse: &VectorField, nodes: usize) -> Result<ScalarField> {
    transverse.check_finite("transverse potential")?;
    let g = *transverse.grid();
    let comps: Vec<ScalarField> = (0..3).map(|a| transverse.component(a)).collect();
    let values = per_core_cell(&g, |x| {
        let mut acc = 0.0;
        for (a, comp) in comps.iter().enumerate() {
            if x[a] != 0.0 {
                acc += x[a] * line_integral_scalar(comp, x, |_| 1.0, nodes)?;
            }
        }
        Ok(-acc)
    })?;
    ScalarField::from_values(g, values)
}

/// Max over the interior of `|x · A|` (Poincare) or `|div A|` (Coulomb).
pub fn gauge_residual(s: &FieldState, kind: GaugeKind) -> Result<f64> {
    let g = *s.a.grid();
    match kind {
        GaugeKind::Poincare => Ok(g
            .interior_cells()
            .map(|c| vec3::dot(g.position(c), s.a.values()[c]).abs())
            .fold(0.0, f64::max)),
        GaugeKind::Coulomb => Ok(divergence(&s.a)?.max_abs_interior()),
    }
}
