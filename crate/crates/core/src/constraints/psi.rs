use crate::error::Result;
use crate::gauges::GaugeKind;
use crate::grid::{curl, divergence, Grid, ScalarField, VectorField};
use crate::vec3;

/// Static field `psi`, optionally with the radial profile `f` it was built
/// from (`psi = f e_r`).
#[derive(Debug, Clone, PartialEq)]
pub struct PsiField {
    pub psi: VectorField,
    pub profile: Option<ScalarField>,
}

impl PsiField {
    pub fn zero(grid: Grid) -> Self {
        Self { psi: VectorField::zeros(grid), profile: None }
    }

    pub fn from_field(psi: VectorField) -> Self {
        Self { psi, profile: None }
    }

    /// `f(x) e_r`, zero at the origin cell.
    pub fn radial(profile: ScalarField) -> Self {
        let g = *profile.grid();
        let values = (0..g.len())
            .map(|c| {
                let x = g.position(c);
                let n = vec3::norm(x);
                if n == 0.0 {
                    vec3::ZERO
                } else {
                    vec3::scale(x, profile.values()[c] / n)
                }
            })
            .collect();
        let psi = VectorField::from_values(g, values).expect("same grid");
        Self { psi, profile: Some(profile) }
    }
}

/// `grad(b.x + a (x^2 - y^2) / 2)`: curl- and divergence-free, and exactly so
/// under central differences since the components are linear.
pub fn harmonic_gradient(grid: Grid, b: vec3::Vec3, a: f64) -> PsiField {
    PsiField::from_field(VectorField::from_fn(grid, |x| vec3::add(b, [a * x[0], -a * x[1], 0.0])))
}

/// `c / |x|^2 e_r` with the origin cell punctured (set to zero).
pub fn radial_inverse_square(grid: Grid, strength: f64) -> PsiField {
    let profile = ScalarField::from_fn(grid, |x| {
        let r2 = vec3::dot(x, x);
        if r2 == 0.0 {
            0.0
        } else {
            strength / r2
        }
    });
    PsiField::radial(profile)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiReport {
    /// Radial alignment (Poincare) or curl-free check (Coulomb).
    pub form_ok: bool,
    pub form_residual: f64,
    /// Max interior `|div psi|` outside the origin's neighbourhood.
    pub divergence_ok: bool,
    pub divergence_residual: f64,
    /// Finite everywhere and no point source at the origin.
    pub regular_ok: bool,
    /// Max `|div psi|` on the origin cell and its neighbours.
    pub origin_divergence: f64,
    /// `max |psi|`; thresholds are `tol * scale` (per `h` for derivatives).
    pub scale: f64,
}

impl PsiReport {
    pub fn admissible(&self) -> bool {
        self.form_ok && self.divergence_ok && self.regular_ok
    }
}

/// Conditions on the static field: radial (Poincare) or a gradient (Coulomb),
/// divergence-free, and regular at the origin.
pub fn psi_admissible(p: &PsiField, gauge: GaugeKind, tol: f64) -> Result<PsiReport> {
    let psi = &p.psi;
    let g = *psi.grid();
    let finite = psi.check_finite("psi").is_ok();
    if !finite {
        return Ok(PsiReport {
            form_ok: false,
            form_residual: f64::INFINITY,
            divergence_ok: false,
            divergence_residual: f64::INFINITY,
            regular_ok: false,
            origin_divergence: f64::INFINITY,
            scale: f64::INFINITY,
        });
    }
    let scale = psi.max_abs();
    let h = g.spacing();
    let form_residual = match gauge {
        GaugeKind::Poincare => (0..g.len())
            .filter_map(|c| {
                let x = g.position(c);
                let n = vec3::norm(x);
                (n > 0.0).then(|| vec3::max_abs(vec3::cross(psi.values()[c], vec3::scale(x, 1.0 / n))))
            })
            .fold(0.0, f64::max),
        GaugeKind::Coulomb => curl(psi)?.max_abs_interior(),
    };
    let form_bound = match gauge {
        GaugeKind::Poincare => tol * scale,
        GaugeKind::Coulomb => tol * scale / h,
    };
    let div = divergence(psi)?;
    // cells whose stencils reach the origin cell are judged by the
    // regularity check, the rest by the divergence check
    let near_origin = |c: usize| vec3::max_abs(g.position(c)) <= 1.5 * h;
    let divergence_residual =
        g.interior_cells().filter(|&c| !near_origin(c)).map(|c| div.values()[c].abs()).fold(0.0, f64::max);
    let origin_divergence = (0..g.len()).filter(|&c| near_origin(c)).map(|c| div.values()[c].abs()).fold(0.0, f64::max);
    let bound = tol * scale / h;
    Ok(PsiReport {
        form_ok: form_residual <= form_bound,
        form_residual,
        divergence_ok: divergence_residual <= bound,
        divergence_residual,
        regular_ok: origin_divergence <= bound,
        origin_divergence,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::deposit_line;

    #[test]
    fn harmonic_gradient_is_coulomb_admissible() {
        let g = Grid::cubic(9, 0.25).unwrap();
        let p = harmonic_gradient(g, [0.2, -0.1, 0.3], 0.7);
        assert!(psi_admissible(&p, GaugeKind::Coulomb, 1e-10).unwrap().admissible());
        assert!(!psi_admissible(&p, GaugeKind::Poincare, 1e-10).unwrap().admissible());
    }

    #[test]
    fn zero_is_admissible_in_both_gauges() {
        let g = Grid::cubic(9, 0.25).unwrap();
        for gauge in [GaugeKind::Poincare, GaugeKind::Coulomb] {
            assert!(psi_admissible(&PsiField::zero(g), gauge, 1e-10).unwrap().admissible());
        }
    }

    #[test]
    fn line_term_is_not_divergence_free() {
        let g = Grid::cubic(13, 0.25).unwrap();
        let h = g.spacing();
        let q = 1.0;
        let r = [4.0 * h, 0.0, 0.0];
        let lambda = deposit_line(&g, 1.0, r, |_| 1.0, 64).unwrap();
        let p = PsiField::from_field(VectorField::from_scalar(&lambda, vec3::scale(r, -q)));
        let rep = psi_admissible(&p, GaugeKind::Poincare, 1e-10).unwrap();
        assert!(!rep.divergence_ok);
        assert!(rep.divergence_residual > 0.1 * q / h.powi(3));
    }

    #[test]
    fn inverse_square_is_singular_at_origin() {
        let g = Grid::cubic(11, 0.2).unwrap();
        let p = radial_inverse_square(g, 0.3);
        let rep = psi_admissible(&p, GaugeKind::Poincare, 1e-10).unwrap();
        assert!(rep.form_ok);
        assert!(!rep.regular_ok);
        assert!(rep.origin_divergence > rep.divergence_residual);
    }
}
