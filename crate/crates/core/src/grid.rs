//! Origin-centered uniform grid, cell-centered fields, finite-difference
//! operators and the cloud-in-cell deposition/interpolation pair.
//!
//! Cells are indexed `(i, j, k)` with `k` fastest. The coordinate of cell
//! `i` along an axis with `n` cells is `(i - (n - 1) / 2) * h`, so the central
//! cell sits at the origin (dims must be odd).
//!
//! Three nested regions are used throughout the crate:
//!
//! * the boundary layer: cells on the outermost layer, where derivatives fall
//!   back to one-sided second-order stencils;
//! * the interior: cells at least one layer in, where every stencil is
//!   central. Field energies and Lagrangian densities are summed here;
//! * the core (also the *safe region*): cells at least two layers in.
//!   Particles, line-integral segments and all verification norms live here.

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Midpoint nodes used by line integrals when no explicit count is given.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: f64,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        for (axis, &n) in dims.iter().enumerate() {
            if n < 4 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {n} cells; the stencils need at least 4"
                )));
            }
            if n % 2 == 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has an even cell count {n}; the origin must be a cell center"
                )));
            }
        }
        Ok(Self { dims, spacing })
    }

    pub fn cubic(n: usize, spacing: f64) -> Result<Self> {
        Self::new([n; 3], spacing)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [self.dims[1] * self.dims[2], self.dims[2], 1]
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.dims[1] + ijk[1]) * self.dims[2] + ijk[2]
    }

    #[inline]
    pub fn ijk(&self, index: usize) -> [usize; 3] {
        let k = index % self.dims[2];
        let rest = index / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    /// Coordinate of the center of cell `index`.
    #[inline]
    pub fn position(&self, index: usize) -> Vec3 {
        let ijk = self.ijk(index);
        let mut x = [0.0; 3];
        for a in 0..3 {
            x[a] = (ijk[a] as f64 - ((self.dims[a] - 1) / 2) as f64) * self.spacing;
        }
        x
    }

    pub fn origin_index(&self) -> usize {
        self.index([(self.dims[0] - 1) / 2, (self.dims[1] - 1) / 2, (self.dims[2] - 1) / 2])
    }

    /// Distance (in cells) from the nearest boundary layer.
    #[inline]
    pub fn margin(&self, index: usize) -> usize {
        let ijk = self.ijk(index);
        (0..3)
            .map(|a| ijk[a].min(self.dims[a] - 1 - ijk[a]))
            .min()
            .unwrap_or(0)
    }

    #[inline]
    pub fn is_interior(&self, index: usize) -> bool {
        self.margin(index) >= 1
    }

    #[inline]
    pub fn is_core(&self, index: usize) -> bool {
        self.margin(index) >= 2
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&c| self.is_interior(c))
    }

    pub fn core_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&c| self.is_core(c))
    }

    /// Lower and upper coordinate of the safe region along `axis`.
    pub fn safe_bounds(&self, axis: usize) -> (f64, f64) {
        let half = ((self.dims[axis] - 1) / 2) as f64;
        let lo = (2.0 - half) * self.spacing;
        (lo, -lo)
    }

    pub fn in_safe_region(&self, x: Vec3) -> bool {
        let slack = 1e-12 * self.spacing;
        (0..3).all(|a| {
            let (lo, hi) = self.safe_bounds(a);
            x[a].is_finite() && x[a] >= lo - slack && x[a] <= hi + slack
        })
    }

    pub fn check_safe(&self, x: Vec3) -> Result<()> {
        if self.in_safe_region(x) {
            Ok(())
        } else {
            Err(Error::OutsideSafeRegion { pos: x })
        }
    }

    /// Trilinear (cloud-in-cell) weights of the 2x2x2 cells around `x`.
    pub fn cic_stencil(&self, x: Vec3) -> Result<[(usize, f64); 8]> {
        let (base, frac) = self.locate(x)?;
        let mut out = [(0usize, 0.0); 8];
        for (n, slot) in out.iter_mut().enumerate() {
            let o = [(n >> 2) & 1, (n >> 1) & 1, n & 1];
            let mut w = 1.0;
            let mut ijk = base;
            for a in 0..3 {
                w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
                ijk[a] += o[a];
            }
            *slot = (self.index(ijk), w);
        }
        Ok(out)
    }

    /// Spatial derivative of each trilinear weight with respect to `x`.
    pub fn cic_stencil_gradient(&self, x: Vec3) -> Result<[(usize, Vec3); 8]> {
        let (base, frac) = self.locate(x)?;
        let h = self.spacing;
        let mut out = [(0usize, vec3::ZERO); 8];
        for (n, slot) in out.iter_mut().enumerate() {
            let o = [(n >> 2) & 1, (n >> 1) & 1, n & 1];
            let f: Vec<f64> = (0..3)
                .map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] })
                .collect();
            let df: Vec<f64> = (0..3).map(|a| if o[a] == 1 { 1.0 / h } else { -1.0 / h }).collect();
            let mut ijk = base;
            for a in 0..3 {
                ijk[a] += o[a];
            }
            *slot = (
                self.index(ijk),
                [df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]],
            );
        }
        Ok(out)
    }

    fn locate(&self, x: Vec3) -> Result<([usize; 3], Vec3)> {
        self.check_safe(x)?;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let half = ((self.dims[a] - 1) / 2) as f64;
            let s = x[a] / self.spacing + half;
            let mut i = s.floor();
            // keep i + 1 on the grid when x sits exactly on the upper safe face
            if i as usize + 1 > self.dims[a] - 1 {
                i -= 1.0;
            }
            base[a] = i as usize;
            frac[a] = (s - i).clamp(0.0, 1.0);
        }
        Ok((base, frac))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<Vec3>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|c| f(grid.position(c))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, values }
    }

    /// Sum of `value * h^3` over every cell.
    pub fn volume_integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.grid.interior_cells().fold(0.0, |m, c| m.max(self.values[c].abs()))
    }

    /// Maximum magnitude over the core, the region every verification norm uses.
    pub fn max_abs_core(&self) -> f64 {
        self.grid.core_cells().fold(0.0, |m, c| m.max(self.values[c].abs()))
    }

    pub fn l2_core(&self) -> f64 {
        self.grid.core_cells().map(|c| self.values[c].powi(2)).sum::<f64>().sqrt()
    }
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![vec3::ZERO; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> Vec3) -> Self {
        let values = (0..grid.len()).map(|c| f(grid.position(c))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} vectors, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// `direction * density` cellwise.
    pub fn from_scalar(density: &ScalarField, direction: Vec3) -> Self {
        let values = density.values.iter().map(|&d| vec3::scale(direction, d)).collect();
        Self { grid: density.grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.values
    }

    pub fn component(&self, axis: usize) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|v| v[axis]).collect() }
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(Vec3, Vec3) -> Vec3) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, vec3::add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, vec3::sub)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| vec3::scale(v, s))
    }

    pub fn volume_integral(&self) -> Vec3 {
        let s = self.values.iter().fold(vec3::ZERO, |acc, &v| vec3::add(acc, v));
        vec3::scale(s, self.grid.cell_volume())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(vec3::max_abs(v)))
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.grid.interior_cells().fold(0.0, |m, c| m.max(vec3::max_abs(self.values[c])))
    }

    pub fn max_abs_core(&self) -> f64 {
        self.grid.core_cells().fold(0.0, |m, c| m.max(vec3::max_abs(self.values[c])))
    }

    pub fn l2_core(&self) -> f64 {
        self.grid.core_cells().map(|c| vec3::dot(self.values[c], self.values[c])).sum::<f64>().sqrt()
    }

    /// `sum_c a(c) . b(c) * h^3` over the interior.
    pub fn inner_interior(&self, other: &Self) -> f64 {
        self.grid
            .interior_cells()
            .map(|c| vec3::dot(self.values[c], other.values[c]))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Zero every cell outside the interior.
    pub fn masked_interior(&self) -> Self {
        let mut out = self.clone();
        for c in 0..self.grid.len() {
            if !self.grid.is_interior(c) {
                out.values[c] = vec3::ZERO;
            }
        }
        out
    }
}

/// Derivative of `f` along `axis` at cell `c`: central in the interior,
/// second-order one-sided on the boundary layer.
#[inline]
fn diff(grid: &Grid, f: &dyn Fn(usize) -> f64, c: usize, axis: usize) -> f64 {
    let n = grid.dims[axis];
    let s = grid.strides()[axis];
    let i = grid.ijk(c)[axis];
    let h2 = 2.0 * grid.spacing;
    if i == 0 {
        (-3.0 * f(c) + 4.0 * f(c + s) - f(c + 2 * s)) / h2
    } else if i == n - 1 {
        (3.0 * f(c) - 4.0 * f(c - s) + f(c - 2 * s)) / h2
    } else {
        (f(c + s) - f(c - s)) / h2
    }
}

/// Cells and coefficients of the derivative along `axis` at cell `c`, as
/// used by `divergence`, `gradient` and `curl`.
pub fn derivative_stencil(grid: &Grid, c: usize, axis: usize) -> [(usize, f64); 3] {
    let n = grid.dims[axis];
    let s = grid.strides()[axis];
    let i = grid.ijk(c)[axis];
    let inv = 1.0 / (2.0 * grid.spacing);
    if i == 0 {
        [(c, -3.0 * inv), (c + s, 4.0 * inv), (c + 2 * s, -inv)]
    } else if i == n - 1 {
        [(c, 3.0 * inv), (c - s, -4.0 * inv), (c - 2 * s, inv)]
    } else {
        [(c + s, inv), (c - s, -inv), (c, 0.0)]
    }
}

/// Central derivative with zero extension beyond the grid. This is minus the
/// adjoint of the central stencil and is used to scatter energy gradients.
#[inline]
fn diff_zero_extended(grid: &Grid, f: &dyn Fn(usize) -> f64, c: usize, axis: usize) -> f64 {
    let n = grid.dims[axis];
    let s = grid.strides()[axis];
    let i = grid.ijk(c)[axis];
    let up = if i + 1 < n { f(c + s) } else { 0.0 };
    let down = if i > 0 { f(c - s) } else { 0.0 };
    (up - down) / (2.0 * grid.spacing)
}

pub fn divergence(f: &VectorField) -> Result<ScalarField> {
    f.check_finite("divergence input")?;
    let g = f.grid;
    let v = &f.values;
    let values = (0..g.len())
        .map(|c| (0..3).map(|a| diff(&g, &|i| v[i][a], c, a)).sum())
        .collect();
    Ok(ScalarField { grid: g, values })
}

pub fn curl(f: &VectorField) -> Result<VectorField> {
    f.check_finite("curl input")?;
    Ok(curl_with(f, diff))
}

pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    f.check_finite("gradient input")?;
    let g = f.grid;
    let v = &f.values;
    let values = (0..g.len())
        .map(|c| [diff(&g, &|i| v[i], c, 0), diff(&g, &|i| v[i], c, 1), diff(&g, &|i| v[i], c, 2)])
        .collect();
    Ok(VectorField { grid: g, values })
}

fn curl_with(f: &VectorField, d: fn(&Grid, &dyn Fn(usize) -> f64, usize, usize) -> f64) -> VectorField {
    let g = f.grid;
    let v = &f.values;
    let values = (0..g.len())
        .map(|c| {
            let dd = |comp: usize, axis: usize| d(&g, &|i| v[i][comp], c, axis);
            [dd(2, 1) - dd(1, 2), dd(0, 2) - dd(2, 0), dd(1, 0) - dd(0, 1)]
        })
        .collect();
    VectorField { grid: g, values }
}

/// Gradient of `A -> sum_{interior} w . curl(A)` with respect to every `A` sample.
pub fn curl_adjoint(w: &VectorField) -> VectorField {
    curl_with(&w.masked_interior(), diff_zero_extended)
}

/// Gradient of `phi -> sum_{interior} w . grad(phi)` with respect to every `phi` sample.
pub fn gradient_adjoint(w: &VectorField) -> ScalarField {
    let m = w.masked_interior();
    let g = w.grid;
    let values = (0..g.len())
        .map(|c| -(0..3).map(|a| diff_zero_extended(&g, &|i| m.values[i][a], c, a)).sum::<f64>())
        .collect();
    ScalarField { grid: g, values }
}

/// Cloud-in-cell charge density of a point charge: `q * w_c(r) / h^3`.
pub fn deposit_point(grid: &Grid, q: f64, r: Vec3) -> Result<ScalarField> {
    let mut out = ScalarField::zeros(*grid);
    deposit_point_into(&mut out, q, r)?;
    Ok(out)
}

fn deposit_point_into(out: &mut ScalarField, q: f64, r: Vec3) -> Result<()> {
    let inv_vol = 1.0 / out.grid.cell_volume();
    for (c, w) in out.grid.cic_stencil(r)? {
        out.values[c] += q * w * inv_vol;
    }
    Ok(())
}

/// Midpoint abscissae `u_k = (k + 1/2) / n` with equal weights `1 / n`.
pub fn midpoint_nodes(nodes: usize) -> impl Iterator<Item = (f64, f64)> {
    let w = 1.0 / nodes as f64;
    (0..nodes).map(move |k| ((k as f64 + 0.5) * w, w))
}

fn check_nodes(nodes: usize) -> Result<()> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    Ok(())
}

/// Density of `q * integral_0^1 du weight(u) delta(x - u r)`.
pub fn deposit_line(
    grid: &Grid,
    q: f64,
    r: Vec3,
    weight: impl Fn(f64) -> f64,
    nodes: usize,
) -> Result<ScalarField> {
    check_nodes(nodes)?;
    // the safe region is a box around the origin, so both endpoints inside
    // means the whole segment is inside
    grid.check_safe(r)?;
    let mut out = ScalarField::zeros(*grid);
    for (u, du) in midpoint_nodes(nodes) {
        deposit_point_into(&mut out, q * weight(u) * du, vec3::scale(r, u))?;
    }
    Ok(out)
}

pub fn interpolate_scalar(f: &ScalarField, x: Vec3) -> Result<f64> {
    Ok(f.grid.cic_stencil(x)?.iter().map(|&(c, w)| w * f.values[c]).sum())
}

pub fn interpolate_vector(f: &VectorField, x: Vec3) -> Result<Vec3> {
    let mut out = vec3::ZERO;
    for (c, w) in f.grid.cic_stencil(x)? {
        out = vec3::add(out, vec3::scale(f.values[c], w));
    }
    Ok(out)
}

/// Jacobian `J[i][j] = d f_i / d x_j` of the trilinear interpolant at `x`.
pub fn interpolate_vector_jacobian(f: &VectorField, x: Vec3) -> Result<[Vec3; 3]> {
    let mut jac = [vec3::ZERO; 3];
    for (c, dw) in f.grid.cic_stencil_gradient(x)? {
        for (i, row) in jac.iter_mut().enumerate() {
            *row = vec3::add(*row, vec3::scale(dw, f.values[c][i]));
        }
    }
    Ok(jac)
}

pub fn interpolate_scalar_gradient(f: &ScalarField, x: Vec3) -> Result<Vec3> {
    let mut g = vec3::ZERO;
    for (c, dw) in f.grid.cic_stencil_gradient(x)? {
        g = vec3::add(g, vec3::scale(dw, f.values[c]));
    }
    Ok(g)
}

/// `integral_0^1 du weight(u) f(u r)` by the composite midpoint rule.
pub fn line_integral_scalar(
    f: &ScalarField,
    r: Vec3,
    weight: impl Fn(f64) -> f64,
    nodes: usize,
) -> Result<f64> {
    check_nodes(nodes)?;
    f.grid.check_safe(r)?;
    let mut acc = 0.0;
    for (u, du) in midpoint_nodes(nodes) {
        acc += interpolate_scalar(f, vec3::scale(r, u))? * weight(u) * du;
    }
    Ok(acc)
}

pub fn line_integral_vector(
    f: &VectorField,
    r: Vec3,
    weight: impl Fn(f64) -> f64,
    nodes: usize,
) -> Result<Vec3> {
    check_nodes(nodes)?;
    f.grid.check_safe(r)?;
    let mut acc = vec3::ZERO;
    for (u, du) in midpoint_nodes(nodes) {
        let v = interpolate_vector(f, vec3::scale(r, u))?;
        acc = vec3::add(acc, vec3::scale(v, weight(u) * du));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid9() -> Grid {
        Grid::cubic(9, 0.25).unwrap()
    }

    #[test]
    fn rejects_even_and_tiny_grids() {
        assert!(Grid::cubic(8, 0.25).is_err());
        assert!(Grid::cubic(3, 0.25).is_err());
        assert!(Grid::cubic(9, 0.0).is_err());
        assert!(Grid::cubic(9, -1.0).is_err());
    }

    #[test]
    fn origin_is_central_cell() {
        let g = grid9();
        assert_eq!(g.position(g.origin_index()), [0.0; 3]);
        assert_eq!(g.ijk(g.index([1, 2, 3])), [1, 2, 3]);
    }

    #[test]
    fn divergence_of_constant_is_zero() {
        let g = grid9();
        let f = VectorField::from_fn(g, |_| [1.0, 2.0, 3.0]);
        assert_eq!(divergence(&f).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn divergence_of_position_is_three() {
        let g = grid9();
        let d = divergence(&VectorField::from_fn(g, |x| x)).unwrap();
        for c in g.interior_cells() {
            assert!((d.values()[c] - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = grid9();
        let mut f = VectorField::zeros(g);
        f.values_mut()[17][1] = f64::NAN;
        assert!(matches!(divergence(&f), Err(Error::NonFinite { index: 17, .. })));
        assert!(curl(&f).is_err());
    }

    #[test]
    fn curl_of_symmetric_gauge_is_uniform() {
        let g = grid9();
        let b0 = 2.0;
        let a = VectorField::from_fn(g, |x| [-x[1] * b0 / 2.0, x[0] * b0 / 2.0, 0.0]);
        let b = curl(&a).unwrap();
        for c in g.interior_cells() {
            let v = b.values()[c];
            assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12 && (v[2] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let g = grid9();
        let f = ScalarField::from_fn(g, |x| vec3::dot(x, x));
        let c = curl(&gradient(&f).unwrap()).unwrap();
        assert!(c.max_abs_interior() < 1e-10);
    }

    #[test]
    fn gradient_of_linear_field() {
        let g = grid9();
        let f = ScalarField::from_fn(g, |x| 1.5 * x[0]);
        let gr = gradient(&f).unwrap();
        for c in 0..g.len() {
            assert!((gr.values()[c][0] - 1.5).abs() < 1e-13);
            assert!(gr.values()[c][1].abs() < 1e-13);
        }
        assert_eq!(gradient(&ScalarField::from_fn(g, |_| 4.0)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn deposit_kernel_collapse_and_symmetry() {
        let g = grid9();
        let h3 = g.cell_volume();
        let d = deposit_point(&g, 1.0, [0.25, 0.0, -0.25]).unwrap();
        let c = g.index([5, 4, 3]);
        assert!((d.values()[c] - 1.0 / h3).abs() < 1e-12);
        assert!((d.volume_integral() - 1.0).abs() < 1e-14);
        assert_eq!(d.values().iter().filter(|v| **v != 0.0).count(), 1);

        let corner = deposit_point(&g, 1.0, [0.125, 0.125, 0.125]).unwrap();
        let nonzero: Vec<f64> = corner.values().iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero.len(), 8);
        for v in nonzero {
            assert!((v - 1.0 / (8.0 * h3)).abs() < 1e-12);
        }
    }

    #[test]
    fn deposit_conserves_charge() {
        let g = grid9();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let d = deposit_point(&g, -2.0, r).unwrap();
            assert!((d.volume_integral() + 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn deposit_outside_safe_region_fails() {
        let g = grid9();
        assert!(matches!(deposit_point(&g, 1.0, [0.6, 0.0, 0.0]), Err(Error::OutsideSafeRegion { .. })));
        assert!(deposit_line(&g, 1.0, [0.0, 0.0, -0.75], |_| 1.0, 64).is_err());
        assert!(interpolate_scalar(&ScalarField::zeros(g), [0.0, 0.9, 0.0]).is_err());
    }

    #[test]
    fn line_deposit_moments() {
        let g = grid9();
        let r = [0.4, -0.2, 0.1];
        let unit = deposit_line(&g, 1.0, r, |_| 1.0, 64).unwrap();
        assert!((unit.volume_integral() - 1.0).abs() < 1e-10);
        let lin = deposit_line(&g, 1.0, r, |u| u, 64).unwrap();
        assert!((lin.volume_integral() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn line_deposit_support_hugs_segment() {
        let g = Grid::cubic(13, 0.25).unwrap();
        let h = g.spacing();
        let r = [4.0 * h, 0.0, 0.0];
        let d = deposit_line(&g, 1.0, r, |_| 1.0, 64).unwrap();
        for c in 0..g.len() {
            if d.values()[c] != 0.0 {
                let x = g.position(c);
                assert!(x[0] >= -h && x[0] <= 5.0 * h);
                assert!(x[1].abs() < h && x[2].abs() < h);
            }
        }
    }

    #[test]
    fn interpolation_partition_of_unity_and_nodes() {
        let g = grid9();
        let f = ScalarField::from_fn(g, |_| 2.5);
        assert!((interpolate_scalar(&f, [0.11, -0.37, 0.29]).unwrap() - 2.5).abs() < 1e-14);
        let lin = ScalarField::from_fn(g, |x| 3.0 * x[0] - x[2]);
        let c = g.index([3, 5, 6]);
        assert_eq!(interpolate_scalar(&lin, g.position(c)).unwrap(), lin.values()[c]);
    }

    #[test]
    fn stencil_reproduces_divergence() {
        let g = Grid::cubic(7, 0.3).unwrap();
        let f = VectorField::from_fn(g, |x| [x[0] * x[1], (x[2] * 2.0).sin(), x[0] * x[0] * x[2]]);
        let d = divergence(&f).unwrap();
        for c in 0..g.len() {
            let mut acc = 0.0;
            for a in 0..3 {
                for (cell, w) in derivative_stencil(&g, c, a) {
                    acc += w * f.values()[cell][a];
                }
            }
            assert!((acc - d.values()[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn deposit_interpolate_adjointness() {
        let g = grid9();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let vals = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = ScalarField::from_values(g, vals).unwrap();
            let x = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let d = deposit_point(&g, 1.0, x).unwrap();
            let lhs: f64 = d.values().iter().zip(f.values()).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume();
            assert!((lhs - interpolate_scalar(&f, x).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn line_integral_constant_and_linear() {
        let g = grid9();
        let c = ScalarField::from_fn(g, |_| 0.7);
        let v = line_integral_scalar(&c, [0.3, 0.2, -0.4], |_| 1.0, 64).unwrap();
        assert!((v - 0.7).abs() < 1e-14);

        // midpoint error for u^2 is 1 / (12 n^2); 4096 nodes puts it under 1e-8
        let x = ScalarField::from_fn(g, |x| x[0]);
        let r = 0.5;
        let v = line_integral_scalar(&x, [r, 0.0, 0.0], |u| u, 4096).unwrap();
        assert!((v - r / 3.0).abs() < 1e-8);
    }

    #[test]
    fn symmetric_gauge_from_line_integral() {
        let g = grid9();
        let b0 = 1.3;
        let b = VectorField::from_fn(g, |_| [0.0, 0.0, b0]);
        let r = [0.3, -0.45, 0.2];
        let a = vec3::scale(vec3::cross(r, line_integral_vector(&b, r, |u| u, 64).unwrap()), -1.0);
        let expected = [-b0 / 2.0 * r[1], b0 / 2.0 * r[0], 0.0];
        assert!(vec3::max_abs(vec3::sub(a, expected)) < 1e-6);
    }

    #[test]
    fn interpolation_gradient_matches_finite_difference() {
        let g = grid9();
        let f = ScalarField::from_fn(g, |x| (x[0] * 2.0).sin() + x[1] * x[2]);
        let x = [0.13, -0.21, 0.32];
        let grad = interpolate_scalar_gradient(&f, x).unwrap();
        let eps = 1e-6;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += eps;
            xm[a] -= eps;
            let fd = (interpolate_scalar(&f, xp).unwrap() - interpolate_scalar(&f, xm).unwrap()) / (2.0 * eps);
            assert!((fd - grad[a]).abs() < 1e-7);
        }
    }
}
