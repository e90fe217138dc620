use std::sync::Arc;

use emdirac::constraints::{
    classify, consistency_chain, constraint_matrix, eval_constraint, psi_admissible, ChainOptions, Constraint,
    DiracBracket, PsiField,
};
use emdirac::dynamics::line_psi;
use emdirac::fixtures::{gauss_consistent_state, random_smooth_vector, random_state};
use emdirac::gauges::GaugeKind;
use emdirac::hamiltonians::{Hamiltonian, HamiltonianKind};
use emdirac::phase_space::{Functional, PhaseLayout, Polynomial};
use emdirac::potential::Potential;
use emdirac::report::random_polynomial;
use emdirac::{FieldState, Grid, VectorField};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{oracle_cic, oracle_divergence, oracle_line_density, Outcome, Verdict};

pub fn chain() -> Outcome {
    let g = Grid::cubic(9, 0.25)?;
    let mut s = gauss_consistent_state(&g, 1.0, [0.25, 0.0, -0.125], 3, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    s.pi = s.pi.add(&random_smooth_vector(&g, &mut rng));
    let h: Arc<dyn Functional> = Arc::new(Hamiltonian::new(
        HamiltonianKind::MinimalCouplingPsi(PsiField::zero(g)),
        Potential::harmonic(1.0),
        64,
        1e-5,
    ));
    let result = consistency_chain(vec![Constraint::phi_momentum()], h, &s, ChainOptions::default())?;
    let secondaries: Vec<_> = result.secondaries().collect();
    let gauss = eval_constraint(&Constraint::gauss(), &s)?;

    // chi2 = -(rho + div pi), rebuilt from the grid geometry
    let div = oracle_divergence(&s.pi);
    let mut rho = vec![0.0; g.len()];
    for (c, w) in oracle_cic(&g, s.particle.r) {
        rho[c] += s.particle.charge * w / g.cell_volume();
    }
    let oracle_gap = g.interior_cells().map(|c| (gauss.values()[c] + rho[c] + div[c]).abs()).fold(0.0, f64::max);

    let Some(sec) = secondaries.first() else {
        return Ok(Verdict::new(false, "no secondary constraint emitted"));
    };
    let gap = sec.residual(&s)?.zip_map(&gauss, |a, b| a - b).max_abs_core();
    let violation = gauss.max_abs_core();
    Ok(Verdict::new(
        secondaries.len() == 1 && gap < 1e-8 && oracle_gap < 1e-10 && violation > 1e-3,
        format!(
            "{} secondary, |secondary - Gauss| = {gap:.2e} (< 1e-8), Gauss residual itself {violation:.2e}, against hand-built residual {oracle_gap:.1e}",
            secondaries.len()
        ),
    ))
}

pub fn line_term() -> Outcome {
    let g = Grid::cubic(13, 0.25)?;
    let h = g.spacing();
    let q = 1.0;
    let r = [4.0 * h, 0.0, 0.0];
    let nodes = 64;
    let lambda = oracle_line_density(&g, r, nodes);
    let field = VectorField::from_values(g, lambda.iter().map(|l| [-q * r[0] * l, -q * r[1] * l, -q * r[2] * l]).collect())?;
    let div = oracle_divergence(&field);
    let worst = g.interior_cells().map(|c| div[c].abs()).fold(0.0, f64::max);
    let bound = 0.1 * q / (h * h * h);

    let line = psi_admissible(&line_psi(&g, q, r, nodes)?, GaugeKind::Poincare, 1e-10)?;
    let zero_p = psi_admissible(&PsiField::zero(g), GaugeKind::Poincare, 1e-10)?;
    let zero_c = psi_admissible(&PsiField::zero(g), GaugeKind::Coulomb, 1e-10)?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    Ok(Verdict::new(
        worst > bound && !line.admissible() && zero_p.admissible() && zero_c.admissible(),
        format!(
            "max |div| = {worst:.3} vs 0.1 q/h^3 = {bound:.3}; line term {}, zero field {} (Poincare) {} (Coulomb)",
            verdict(line.admissible()),
            verdict(zero_p.admissible()),
            verdict(zero_c.admissible())
        ),
    ))
}

/// `J v` where `J` is the weighted symplectic form, so `{a, b} = a . J b`.
fn symplectic(l: &PhaseLayout, v: &[f64]) -> Vec<f64> {
    let m = l.half();
    let mut out = vec![0.0; v.len()];
    for i in 0..m {
        let w = l.weight(i);
        out[i] = w * v[i + m];
        out[i + m] = -w * v[i];
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn polynomial_gradient(p: &Polynomial, s: &FieldState, dim: usize) -> Vec<f64> {
    let mut g = vec![0.0; dim];
    for &(i, a) in &p.linear {
        g[i] += a;
    }
    for &(i, j, b) in &p.quadratic {
        g[i] += b * s.coord(j);
        g[j] += b * s.coord(i);
    }
    g
}

/// Orthonormal basis of the column space by twice-iterated modified Gram-Schmidt.
fn range_basis(c: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let largest = (0..c.ncols()).map(|j| c.column(j).norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..c.ncols() {
        let mut v = c.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v.axpy(-p, q, 1.0);
            }
        }
        let n = v.norm();
        if n > rel_tol * largest {
            basis.push(v / n);
        }
    }
    DMatrix::from_columns(&basis)
}

pub fn dirac_oracle() -> Outcome {
    let g = Grid::cubic(5, 0.3)?;
    let s = random_state(&g, 1.0, 21);
    let l = s.layout();
    let dim = l.dim();
    let table = Constraint::table();
    let m = constraint_matrix(&table, &s)?;
    let n = m.len();
    let db = DiracBracket::new(&m, 1e-10)?;
    let cls = classify(&m, 1e-10)?;

    // constraint gradients, checked against central differences of the
    // residuals; the particle sits on the one safe cell of a 5^3 grid, so
    // only field coordinates are perturbed
    let rows: Vec<Vec<f64>> = m
        .rows
        .iter()
        .map(|r| {
            let mut d = vec![0.0; dim];
            for &(i, v) in r {
                d[i] += v;
            }
            d
        })
        .collect();
    let residuals = |s: &FieldState| -> emdirac::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for c in &table {
            out.extend_from_slice(eval_constraint(c, s)?.values());
        }
        Ok(out)
    };
    let mut work = s.clone();
    let mut fd_gap = 0.0f64;
    let mut row_scale = 0.0f64;
    let particle: Vec<usize> = (0..3).flat_map(|a| [l.r(a), l.momentum(a)]).collect();
    for i in (0..dim).filter(|i| !particle.contains(i)) {
        let z = s.coord(i);
        let step = 1e-6 * z.abs().max(1.0);
        *work.coord_mut(i) = z + step;
        let up = residuals(&work)?;
        *work.coord_mut(i) = z - step;
        let down = residuals(&work)?;
        *work.coord_mut(i) = z;
        for a in 0..n {
            let d = (up[a] - down[a]) / (2.0 * step);
            fd_gap = fd_gap.max((d - rows[a][i]).abs());
            row_scale = row_scale.max(d.abs());
        }
    }
    let fd_rel = fd_gap / row_scale;

    // dense C and its pseudo-inverse through the range basis
    let swapped: Vec<Vec<f64>> = rows.iter().map(|r| symplectic(&l, r)).collect();
    let c = DMatrix::from_fn(n, n, |a, b| dot(&rows[a], &swapped[b]));
    let c_gap = (&c - &m.entries).amax() / c.amax();
    let q = range_basis(&c, 1e-9);
    let reduced = q.transpose() * &c * &q;
    let lu = reduced.clone().lu();
    let inverse = lu.try_inverse().ok_or("reduced constraint matrix is singular")?;
    let pinv = &q * inverse * q.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut oracle_gap = 0.0f64;
    for _ in 0..100 {
        let f = random_polynomial(&mut rng, dim);
        let h = random_polynomial(&mut rng, dim);
        let gf = polynomial_gradient(&f, &s, dim);
        let gh = polynomial_gradient(&h, &s, dim);
        let jh = symplectic(&l, &gh);
        let jf = symplectic(&l, &gf);
        let pb = dot(&gf, &jh);
        let f_chi = DVector::from_iterator(n, rows.iter().map(|r| -dot(r, &jf)));
        let chi_h = DVector::from_iterator(n, rows.iter().map(|r| dot(r, &jh)));
        let correction = f_chi.dot(&(&pinv * chi_h));
        let want = pb - correction;
        let got = db.bracket(&f, &h, &s)?;
        let scale = 1.0f64.max(pb.abs()).max(correction.abs());
        oracle_gap = oracle_gap.max((got - want).abs() / scale);
    }

    let basis = &cls.second_class_basis;
    let combos: Vec<Vec<f64>> = (0..basis.ncols())
        .map(|k| {
            let mut v = vec![0.0; dim];
            for (a, row) in rows.iter().enumerate() {
                let w = basis[(a, k)];
                for (x, y) in v.iter_mut().zip(row) {
                    *x += w * y;
                }
            }
            v
        })
        .collect();
    let functionals: Vec<Vec<f64>> =
        (0..100).map(|_| polynomial_gradient(&random_polynomial(&mut rng, dim), &s, dim)).collect();
    let second_class = functionals
        .par_iter()
        .map(|gf| combos.iter().map(|chi| db.bracket_gradients(chi, gf).abs()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);

    Ok(Verdict::new(
        oracle_gap < 1e-12 && second_class < 1e-10 && fd_rel < 1e-6 && c_gap < 1e-12 && q.ncols() == db.rank(),
        format!(
            "oracle gap {oracle_gap:.1e} (< 1e-12), second-class brackets {second_class:.1e} (< 1e-10) over {} combinations, rank {} of {n} (oracle {}), row check {fd_rel:.1e}",
            combos.len(),
            db.rank(),
            q.ncols()
        ),
    ))
}
