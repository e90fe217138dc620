//! Canonical phase space of the particle plus per-cell field pairs, and the
//! Poisson bracket of functionals on it.
//!
//! Every state flattens into one coordinate vector. The first half holds the
//! configuration variables `(r, A, phi)`, the second half the conjugate
//! momenta `(P, pi, pi_phi)` in the same order, so coordinate `i` pairs with
//! `i + half`. Gradients store plain partial derivatives. Field pairs carry a
//! `1 / h^3` weight in the bracket, so `{A_i(c), pi_j(c')} = delta_ij
//! delta_cc' / h^3`, the discrete image of `delta(x - y)`.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::vec3::{self, Vec3};

/// Relative central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub r: Vec3,
    /// Canonical momentum conjugate to `r`.
    pub momentum: Vec3,
    pub charge: f64,
    pub mass: f64,
}

impl ParticleState {
    pub fn at_rest(r: Vec3, charge: f64, mass: f64) -> Self {
        Self { r, momentum: vec3::ZERO, charge, mass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub a: VectorField,
    pub pi: VectorField,
    pub phi: ScalarField,
    pub pi_phi: ScalarField,
    pub particle: ParticleState,
    pub eps0: f64,
    pub mu0: f64,
}

/// Index map of the flattened phase-space vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLayout {
    cells: usize,
    cell_volume: f64,
}

impl PhaseLayout {
    pub fn new(grid: &Grid) -> Self {
        Self { cells: grid.len(), cell_volume: grid.cell_volume() }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of configuration coordinates (equal to the number of momenta).
    pub fn half(&self) -> usize {
        3 + 4 * self.cells
    }

    pub fn dim(&self) -> usize {
        2 * self.half()
    }

    pub fn r(&self, axis: usize) -> usize {
        axis
    }

    pub fn a(&self, cell: usize, comp: usize) -> usize {
        3 + 3 * cell + comp
    }

    pub fn phi(&self, cell: usize) -> usize {
        3 + 3 * self.cells + cell
    }

    pub fn momentum(&self, axis: usize) -> usize {
        self.half() + axis
    }

    pub fn pi(&self, cell: usize, comp: usize) -> usize {
        self.half() + self.a(cell, comp)
    }

    pub fn pi_phi(&self, cell: usize) -> usize {
        self.half() + self.phi(cell)
    }

    /// Bracket weight of the canonical pair containing coordinate `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let q = if i >= self.half() { i - self.half() } else { i };
        if q < 3 {
            1.0
        } else {
            1.0 / self.cell_volume
        }
    }

    /// Apply the weighted symplectic matrix: `(J g)_q = w g_p`, `(J g)_p = -w g_q`.
    pub fn symplectic(&self, g: &[f64]) -> Vec<f64> {
        let m = self.half();
        let mut out = vec![0.0; 2 * m];
        for i in 0..m {
            let w = self.weight(i);
            out[i] = w * g[i + m];
            out[i + m] = -w * g[i];
        }
        out
    }
}

impl FieldState {
    pub fn vacuum(grid: Grid, particle: ParticleState) -> Self {
        Self {
            a: VectorField::zeros(grid),
            pi: VectorField::zeros(grid),
            phi: ScalarField::zeros(grid),
            pi_phi: ScalarField::zeros(grid),
            particle,
            eps0: 1.0,
            mu0: 1.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }

    pub fn layout(&self) -> PhaseLayout {
        PhaseLayout::new(self.grid())
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid();
        if self.pi.grid() != g || self.phi.grid() != g || self.pi_phi.grid() != g {
            return Err(Error::GridMismatch);
        }
        if !(self.eps0 > 0.0 && self.mu0 > 0.0) {
            return Err(Error::InvalidArgument("vacuum constants must be positive".into()));
        }
        if !(self.particle.mass > 0.0) {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {}", self.particle.mass)));
        }
        g.check_safe(self.particle.r)?;
        self.a.check_finite("A")?;
        self.pi.check_finite("pi")?;
        self.phi.check_finite("phi")?;
        self.pi_phi.check_finite("pi_phi")
    }

    pub fn coord(&self, i: usize) -> f64 {
        let n = self.grid().len();
        let m = 3 + 4 * n;
        let (q, p) = if i >= m { (i - m, true) } else { (i, false) };
        match (q, p) {
            (0..=2, false) => self.particle.r[q],
            (0..=2, true) => self.particle.momentum[q],
            _ if q < 3 + 3 * n => {
                let k = q - 3;
                if p {
                    self.pi.values()[k / 3][k % 3]
                } else {
                    self.a.values()[k / 3][k % 3]
                }
            }
            _ => {
                let c = q - 3 - 3 * n;
                if p {
                    self.pi_phi.values()[c]
                } else {
                    self.phi.values()[c]
                }
            }
        }
    }

    pub fn coord_mut(&mut self, i: usize) -> &mut f64 {
        let n = self.grid().len();
        let m = 3 + 4 * n;
        let (q, p) = if i >= m { (i - m, true) } else { (i, false) };
        if q < 3 {
            return if p { &mut self.particle.momentum[q] } else { &mut self.particle.r[q] };
        }
        if q < 3 + 3 * n {
            let k = q - 3;
            let field = if p { &mut self.pi } else { &mut self.a };
            return &mut field.values_mut()[k / 3][k % 3];
        }
        let c = q - 3 - 3 * n;
        if p {
            &mut self.pi_phi.values_mut()[c]
        } else {
            &mut self.phi.values_mut()[c]
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().dim());
        out.extend_from_slice(&self.particle.r);
        out.extend(self.a.values().iter().flatten());
        out.extend_from_slice(self.phi.values());
        out.extend_from_slice(&self.particle.momentum);
        out.extend(self.pi.values().iter().flatten());
        out.extend_from_slice(self.pi_phi.values());
        out
    }

    pub fn set_flat(&mut self, z: &[f64]) {
        for (i, &v) in z.iter().enumerate() {
            *self.coord_mut(i) = v;
        }
    }
}

/// Partial derivatives of a functional with respect to every phase-space
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGradient {
    pub layout: PhaseLayout,
    pub values: Vec<f64>,
}

impl PhaseGradient {
    pub fn zeros(layout: PhaseLayout) -> Self {
        Self { layout, values: vec![0.0; layout.dim()] }
    }

    pub fn dr(&self) -> Vec3 {
        [self.values[0], self.values[1], self.values[2]]
    }

    pub fn dmomentum(&self) -> Vec3 {
        let m = self.layout.half();
        [self.values[m], self.values[m + 1], self.values[m + 2]]
    }

    fn vector_density(&self, offset: usize, grid: &Grid) -> VectorField {
        let inv = 1.0 / grid.cell_volume();
        let v = (0..grid.len())
            .map(|c| {
                let i = offset + 3 * c;
                [self.values[i] * inv, self.values[i + 1] * inv, self.values[i + 2] * inv]
            })
            .collect();
        VectorField::from_values(*grid, v).expect("layout matches grid")
    }

    fn scalar_density(&self, offset: usize, grid: &Grid) -> ScalarField {
        let inv = 1.0 / grid.cell_volume();
        let v = (0..grid.len()).map(|c| self.values[offset + c] * inv).collect();
        ScalarField::from_values(*grid, v).expect("layout matches grid")
    }

    /// Functional derivative `dF/dA(x)` (partial divided by `h^3`).
    pub fn density_a(&self, grid: &Grid) -> VectorField {
        self.vector_density(3, grid)
    }

    pub fn density_pi(&self, grid: &Grid) -> VectorField {
        self.vector_density(self.layout.half() + 3, grid)
    }

    pub fn density_phi(&self, grid: &Grid) -> ScalarField {
        self.scalar_density(3 + 3 * grid.len(), grid)
    }

    pub fn density_pi_phi(&self, grid: &Grid) -> ScalarField {
        self.scalar_density(self.layout.half() + 3 + 3 * grid.len(), grid)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { what: "gradient", index }),
            None => Ok(()),
        }
    }
}

/// Sparse gradient: `(coordinate, partial derivative)` pairs.
pub type SparseGradient = Vec<(usize, f64)>;

pub fn bracket_dense(layout: &PhaseLayout, a: &[f64], b: &[f64]) -> f64 {
    let m = layout.half();
    (0..m).map(|i| layout.weight(i) * (a[i] * b[i + m] - a[i + m] * b[i])).sum()
}

pub fn bracket_sparse_dense(layout: &PhaseLayout, a: &[(usize, f64)], b: &[f64]) -> f64 {
    let m = layout.half();
    a.iter()
        .map(|&(i, v)| {
            if i < m {
                layout.weight(i) * v * b[i + m]
            } else {
                -layout.weight(i) * v * b[i - m]
            }
        })
        .sum()
}

pub fn bracket_sparse(layout: &PhaseLayout, a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let m = layout.half();
    let mut acc = 0.0;
    for &(i, u) in a {
        let partner = if i < m { i + m } else { i - m };
        let sign = if i < m { 1.0 } else { -1.0 };
        for &(j, v) in b {
            if j == partner {
                acc += sign * layout.weight(i) * u * v;
            }
        }
    }
    acc
}

pub trait Functional: Send + Sync {
    fn value(&self, s: &FieldState) -> Result<f64>;

    /// Closed-form gradient, when the functional has one.
    fn analytic_gradient(&self, _s: &FieldState) -> Option<Result<PhaseGradient>> {
        None
    }

    fn gradient(&self, s: &FieldState) -> Result<PhaseGradient> {
        match self.analytic_gradient(s) {
            Some(g) => g,
            None => functional_gradient(self, s, DEFAULT_FD_STEP),
        }
    }
}

/// Central finite-difference gradient with step `h_fd * max(|z_i|, 1)`.
pub fn functional_gradient<F: Functional + ?Sized>(f: &F, s: &FieldState, h_fd: f64) -> Result<PhaseGradient> {
    let layout = s.layout();
    let mut work = s.clone();
    let mut out = PhaseGradient::zeros(layout);
    for i in 0..layout.dim() {
        let z = s.coord(i);
        let step = h_fd * z.abs().max(1.0);
        if !(step > 0.0) || z + step == z {
            return Err(Error::StepUnderflow(i));
        }
        *work.coord_mut(i) = z + step;
        let up = f.value(&work)?;
        *work.coord_mut(i) = z - step;
        let down = f.value(&work)?;
        *work.coord_mut(i) = z;
        let d = (up - down) / (2.0 * step);
        if !d.is_finite() {
            return Err(Error::NonFinite { what: "functional evaluation", index: i });
        }
        out.values[i] = d;
    }
    Ok(out)
}

/// Column-wise central-difference Jacobian of a vector-valued map of the state.
/// Row `k` of the result is the gradient of output `k`.
pub fn fd_jacobian(
    map: impl Fn(&FieldState) -> Result<Vec<f64>>,
    s: &FieldState,
    h_fd: f64,
) -> Result<Vec<Vec<f64>>> {
    let layout = s.layout();
    let base = map(s)?;
    let mut rows = vec![vec![0.0; layout.dim()]; base.len()];
    let mut work = s.clone();
    for i in 0..layout.dim() {
        let z = s.coord(i);
        let step = h_fd * z.abs().max(1.0);
        if z + step == z {
            return Err(Error::StepUnderflow(i));
        }
        *work.coord_mut(i) = z + step;
        let up = map(&work)?;
        *work.coord_mut(i) = z - step;
        let down = map(&work)?;
        *work.coord_mut(i) = z;
        for (k, row) in rows.iter_mut().enumerate() {
            row[i] = (up[k] - down[k]) / (2.0 * step);
        }
    }
    Ok(rows)
}

pub fn poisson_bracket<F, G>(f: &F, g: &G, s: &FieldState) -> Result<f64>
where
    F: Functional + ?Sized,
    G: Functional + ?Sized,
{
    let gf = f.gradient(s)?;
    gf.check_finite()?;
    let gg = g.gradient(s)?;
    gg.check_finite()?;
    Ok(bracket_dense(&s.layout(), &gf.values, &gg.values))
}

/// The single phase-space coordinate `z_i`.
#[derive(Debug, Clone, Copy)]
pub struct Coordinate(pub usize);

impl Functional for Coordinate {
    fn value(&self, s: &FieldState) -> Result<f64> {
        Ok(s.coord(self.0))
    }

    fn analytic_gradient(&self, s: &FieldState) -> Option<Result<PhaseGradient>> {
        let mut g = PhaseGradient::zeros(s.layout());
        g.values[self.0] = 1.0;
        Some(Ok(g))
    }
}

/// `c + sum a_i z_i + sum b_ij z_i z_j` over a sparse set of coordinates.
#[derive(Debug, Clone, Default)]
pub struct Polynomial {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl Functional for Polynomial {
    fn value(&self, s: &FieldState) -> Result<f64> {
        let mut v = self.constant;
        for &(i, a) in &self.linear {
            v += a * s.coord(i);
        }
        for &(i, j, b) in &self.quadratic {
            v += b * s.coord(i) * s.coord(j);
        }
        Ok(v)
    }

    fn analytic_gradient(&self, s: &FieldState) -> Option<Result<PhaseGradient>> {
        let mut g = PhaseGradient::zeros(s.layout());
        for &(i, a) in &self.linear {
            g.values[i] += a;
        }
        for &(i, j, b) in &self.quadratic {
            g.values[i] += b * s.coord(j);
            g.values[j] += b * s.coord(i);
        }
        Some(Ok(g))
    }
}

/// Pointwise product of two functionals.
pub struct Product<'a>(pub &'a dyn Functional, pub &'a dyn Functional);

impl Functional for Product<'_> {
    fn value(&self, s: &FieldState) -> Result<f64> {
        Ok(self.0.value(s)? * self.1.value(s)?)
    }
}

/// Adapter turning a closure into a functional with finite-difference gradient.
pub struct FnFunctional<F>(pub F);

impl<F> Functional for FnFunctional<F>
where
    F: Fn(&FieldState) -> Result<f64> + Send + Sync,
{
    fn value(&self, s: &FieldState) -> Result<f64> {
        (self.0)(s)
    }
}
