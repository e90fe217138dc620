use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Constraint, ConstraintId};
use crate::error::{Error, Result};
use crate::phase_space::{bracket_dense, bracket_sparse_dense, FieldState, Functional, PhaseLayout, SparseGradient};

/// `C_ab = {chi_a, chi_b}` over all (family, cell) pairs, in family-major order.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    pub labels: Vec<(ConstraintId, usize)>,
    pub entries: DMatrix<f64>,
    /// Gradient rows of the constraints, in label order.
    pub rows: Vec<SparseGradient>,
    pub layout: PhaseLayout,
}

impl ConstraintMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn constraint_matrix(cs: &[Constraint], s: &FieldState) -> Result<ConstraintMatrix> {
    let layout = s.layout();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for c in cs {
        for (cell, row) in c.gradient_rows(s)?.into_iter().enumerate() {
            labels.push((c.id.clone(), cell));
            rows.push(row);
        }
    }
    let n = rows.len();
    // column b holds {chi_a, chi_b} for a < b
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|b| {
            let mut dense = vec![0.0; layout.dim()];
            for &(i, v) in &rows[b] {
                dense[i] += v;
            }
            (0..b).map(|a| bracket_sparse_dense(&layout, &rows[a], &dense)).collect()
        })
        .collect();
    let mut entries = DMatrix::zeros(n, n);
    for (b, col) in columns.iter().enumerate() {
        for (a, &v) in col.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "constraint matrix", index: a * n + b });
            }
            entries[(a, b)] = v;
            entries[(b, a)] = -v;
        }
    }
    Ok(ConstraintMatrix { labels, entries, rows, layout })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintClass {
    /// The unit vector lies in the null space: brackets with every constraint vanish.
    First,
    /// The unit vector is orthogonal to the null space.
    Second,
    /// Partly in both; only combinations are first- or second-class.
    Mixed,
}

impl ConstraintClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintClass::First => "first",
            ConstraintClass::Second => "second",
            ConstraintClass::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub classes: Vec<ConstraintClass>,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Absolute threshold: `rank_tol * largest singular value`.
    pub tol: f64,
    /// Orthonormal columns spanning the first-class combinations.
    pub null_basis: DMatrix<f64>,
    /// Orthonormal columns spanning the second-class combinations.
    pub second_class_basis: DMatrix<f64>,
    /// A singular value lies within a factor 10 of the threshold.
    pub ambiguous: bool,
}

impl Classification {
    pub fn count(&self, class: ConstraintClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

struct Decomposition {
    singular_values: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

// nalgebra's bidiagonal SVD stalls on the paired, exactly degenerate
// spectrum of an antisymmetric matrix, so the factorization goes through faer.
fn svd(m: &DMatrix<f64>) -> Result<Decomposition> {
    let a = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let d = a
        .svd()
        .map_err(|e| Error::PseudoInverse(format!("SVD of a {}x{} matrix failed: {e:?}", m.nrows(), m.ncols())))?;
    let copy = |f: faer::MatRef<'_, f64>| DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)]);
    let s = d.S().column_vector();
    Ok(Decomposition {
        singular_values: (0..s.nrows()).map(|i| s[i]).collect(),
        u: copy(d.U()),
        v: copy(d.V()),
    })
}

/// Split the constraint space into first- and second-class parts by a
/// rank-revealing SVD of `C`.
pub fn classify(m: &ConstraintMatrix, rank_tol: f64) -> Result<Classification> {
    let n = m.len();
    if n == 0 {
        return Ok(Classification {
            classes: Vec::new(),
            singular_values: Vec::new(),
            rank: 0,
            tol: 0.0,
            null_basis: DMatrix::zeros(0, 0),
            second_class_basis: DMatrix::zeros(0, 0),
            ambiguous: false,
        });
    }
    let d = svd(&m.entries)?;
    let sv = d.singular_values;
    let tol = rank_tol * sv[0];
    let rank = sv.iter().filter(|&&v| v > tol).count();
    let ambiguous = sv.iter().any(|&v| v > tol / 10.0 && v < tol * 10.0 && v > 0.0);
    let v = d.v;
    let second_class_basis = v.columns(0, rank).into_owned();
    let null_basis = v.columns(rank, n - rank).into_owned();
    let classes = (0..n)
        .map(|a| {
            let in_range = second_class_basis.row(a).norm();
            let in_null = null_basis.row(a).norm();
            if in_range < 1e-8 {
                ConstraintClass::First
            } else if in_null < 1e-8 {
                ConstraintClass::Second
            } else {
                ConstraintClass::Mixed
            }
        })
        .collect();
    Ok(Classification { classes, singular_values: sv, rank, tol, null_basis, second_class_basis, ambiguous })
}

/// `{F, G}_D = {F, G} - {F, chi_a} (C^+)_ab {chi_b, G}`, with `C^+` the
/// pseudo-inverse that inverts `C` on its second-class range.
#[derive(Debug, Clone)]
pub struct DiracBracket {
    layout: PhaseLayout,
    rows: Vec<SparseGradient>,
    pinv: DMatrix<f64>,
    rank: usize,
}

impl DiracBracket {
    pub fn new(m: &ConstraintMatrix, rank_tol: f64) -> Result<Self> {
        let n = m.len();
        if n == 0 {
            return Ok(Self { layout: m.layout, rows: Vec::new(), pinv: DMatrix::zeros(0, 0), rank: 0 });
        }
        let d = svd(&m.entries)?;
        let smax = d.singular_values[0];
        let eps = rank_tol * smax;
        let rank = d.singular_values.iter().filter(|&&v| v > eps).count();
        if !smax.is_finite() {
            return Err(Error::PseudoInverse(format!("largest singular value is {smax}")));
        }
        // C^+ = V_r S_r^-1 U_r^T
        let scaled = DMatrix::from_fn(n, rank, |i, k| d.v[(i, k)] / d.singular_values[k]);
        let pinv = scaled * d.u.columns(0, rank).transpose();
        Ok(Self { layout: m.layout, rows: m.rows.clone(), pinv, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Dirac bracket of two functionals given by their gradients.
    pub fn bracket_gradients(&self, gf: &[f64], gg: &[f64]) -> f64 {
        let pb = bracket_dense(&self.layout, gf, gg);
        if self.rows.is_empty() {
            return pb;
        }
        let f = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| -bracket_sparse_dense(&self.layout, r, gf)));
        let g = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| bracket_sparse_dense(&self.layout, r, gg)));
        pb - f.dot(&(&self.pinv * g))
    }

    pub fn bracket(&self, f: &dyn Functional, g: &dyn Functional, s: &FieldState) -> Result<f64> {
        let gf = f.gradient(s)?;
        gf.check_finite()?;
        let gg = g.gradient(s)?;
        gg.check_finite()?;
        Ok(self.bracket_gradients(&gf.values, &gg.values))
    }
}

pub fn dirac_bracket(
    f: &dyn Functional,
    g: &dyn Functional,
    m: &ConstraintMatrix,
    rank_tol: f64,
    s: &FieldState,
) -> Result<f64> {
    DiracBracket::new(m, rank_tol)?.bracket(f, g, s)
}

/// Text dump: a header with size, tolerance and rank, one `row col value`
/// line per nonzero entry, then `# class` lines.
pub fn write_matrix_dump(out: &mut impl Write, m: &ConstraintMatrix, cls: &Classification) -> std::io::Result<()> {
    let n = m.len();
    writeln!(out, "# constraint-matrix rows={n} cols={n} tol={:e} rank={}", cls.tol, cls.rank)?;
    for a in 0..n {
        for b in 0..n {
            let v = m.entries[(a, b)];
            if v != 0.0 {
                writeln!(out, "{a} {b} {v:e}")?;
            }
        }
    }
    for (a, ((id, cell), class)) in m.labels.iter().zip(&cls.classes).enumerate() {
        writeln!(out, "# class {a} {id} {cell} {}", class.as_str())?;
    }
    writeln!(out, "# null-dimension {} ambiguous-gap {}", n - cls.rank, cls.ambiguous)?;
    Ok(())
}
