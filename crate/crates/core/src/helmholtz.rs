//! Transverse/longitudinal split through a Dirichlet Poisson solve.
//!
//! The discrete Laplacian is the composition `divergence(gradient(.))` of the
//! grid operators, with unknowns on the core and zeros on the two outer
//! layers. On the core that composition is the symmetric 2h-stride
//! Laplacian, so conjugate gradients apply and the transverse remainder is
//! divergence-free on the core to solver tolerance.

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, Grid, ScalarField, VectorField};

pub const DEFAULT_POISSON_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_CG_ITERATIONS: usize = 20_000;

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub potential: ScalarField,
    pub iterations: usize,
    /// Max-norm of `div grad potential - rhs` over the core.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub transverse: VectorField,
    pub longitudinal: VectorField,
    /// `longitudinal = gradient(potential)`.
    pub potential: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

fn laplacian_core(x: &ScalarField) -> Result<ScalarField> {
    let mut out = divergence(&gradient(x)?)?;
    let g = *x.grid();
    for c in 0..g.len() {
        if !g.is_core(c) {
            out.values_mut()[c] = 0.0;
        }
    }
    Ok(out)
}

fn dot_core(g: &Grid, a: &ScalarField, b: &ScalarField) -> f64 {
    g.core_cells().map(|c| a.values()[c] * b.values()[c]).sum()
}

/// Solve `div grad u = rhs` on the core with `u = 0` outside it.
pub fn solve_poisson(rhs: &ScalarField, tol: f64, max_iterations: usize) -> Result<PoissonSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("solver tolerance must be positive, got {tol}")));
    }
    rhs.check_finite("poisson right-hand side")?;
    let g = *rhs.grid();
    // solve the SPD system (-L) u = -rhs
    let mut b = rhs.map(|v| -v);
    for c in 0..g.len() {
        if !g.is_core(c) {
            b.values_mut()[c] = 0.0;
        }
    }
    // Jacobi preconditioner: the diagonal of -L is 3 * 2 / (2h)^2
    let inv_diag = (2.0 * g.spacing()).powi(2) / 6.0;

    let mut u = ScalarField::zeros(g);
    let mut r = b.clone();
    let mut z = r.map(|v| v * inv_diag);
    let mut p = z.clone();
    let mut rz = dot_core(&g, &r, &z);
    let mut residual = r.max_abs_core();
    let mut iterations = 0;
    while residual >= tol {
        if iterations == max_iterations {
            return Err(Error::NoConvergence { iterations, residual });
        }
        let ap = laplacian_core(&p)?.map(|v| -v);
        let pap = dot_core(&g, &p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for c in g.core_cells() {
            u.values_mut()[c] += alpha * p.values()[c];
            r.values_mut()[c] -= alpha * ap.values()[c];
        }
        z = r.map(|v| v * inv_diag);
        let rz_next = dot_core(&g, &r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for c in g.core_cells() {
            p.values_mut()[c] = z.values()[c] + beta * p.values()[c];
        }
        iterations += 1;
        // recompute the true residual now and then to stop drift
        residual = if iterations % 50 == 0 {
            let true_r = laplacian_core(&u)?.zip_map(rhs, |a, b| a - b);
            true_r.max_abs_core()
        } else {
            r.max_abs_core()
        };
    }
    let residual = laplacian_core(&u)?.zip_map(rhs, |a, b| a - b).max_abs_core();
    Ok(PoissonSolution { potential: u, iterations, residual })
}

pub fn decompose(f: &VectorField, tol: f64) -> Result<Decomposition> {
    decompose_with(f, tol, DEFAULT_MAX_CG_ITERATIONS)
}

pub fn decompose_with(f: &VectorField, tol: f64, max_iterations: usize) -> Result<Decomposition> {
    f.check_finite("decomposition input")?;
    let sol = solve_poisson(&divergence(f)?, tol, max_iterations)?;
    let longitudinal = gradient(&sol.potential)?;
    let transverse = f.sub(&longitudinal);
    Ok(Decomposition {
        transverse,
        longitudinal,
        potential: sol.potential,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{taper, windowed_curl};
    use crate::grid::curl;

    fn grid() -> Grid {
        Grid::cubic(11, 0.2).unwrap()
    }

    #[test]
    fn pure_gradient_has_no_transverse_part() {
        let g = grid();
        let s = ScalarField::from_fn(g, |x| (x[0] - 0.5 * x[1] * x[2]) * taper(&g, x));
        // vanish on the two outer layers so the potential is exactly representable
        let mut s = s;
        for c in 0..g.len() {
            if !g.is_core(c) {
                s.values_mut()[c] = 0.0;
            }
        }
        let f = gradient(&s).unwrap();
        let tol = 1e-10;
        let d = decompose(&f, tol).unwrap();
        assert!(d.transverse.max_abs_core() < 10.0 * tol, "{}", d.transverse.max_abs_core());
    }

    #[test]
    fn rotation_has_no_longitudinal_part() {
        let g = grid();
        let f = windowed_curl(&g, |x| [0.0, 0.0, -(x[0] * x[0] + x[1] * x[1]) / 2.0]);
        let tol = 1e-10;
        let d = decompose(&f, tol).unwrap();
        assert!(d.longitudinal.max_abs_core() < 10.0 * tol);
    }

    #[test]
    fn projector_properties() {
        let g = grid();
        let f = VectorField::from_fn(g, |x| {
            let w = taper(&g, x);
            [w * (x[1] + x[0] * x[0]), w * (x[2] - x[0]), w * x[0] * x[1] * 3.0]
        });
        let tol = 1e-10;
        let d = decompose(&f, tol).unwrap();
        assert!(divergence(&d.transverse).unwrap().max_abs_core() < tol);
        assert!(curl(&d.longitudinal).unwrap().max_abs_interior() < 1e-9);
        let again = decompose(&d.transverse, tol).unwrap();
        assert!(again.transverse.sub(&d.transverse).max_abs() < 10.0 * tol);
        let ff = f.inner_interior(&f);
        assert!(d.transverse.inner_interior(&d.longitudinal).abs() < 10.0 * tol * ff);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = grid();
        let f = VectorField::from_fn(g, |x| [x[0] * x[1], 0.0, 0.0]);
        match decompose_with(&f, 1e-12, 1) {
            Err(Error::NoConvergence { iterations: 1, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
