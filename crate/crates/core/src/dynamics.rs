//! Hamiltonian flow on the flattened phase space, plus the monitors built
//! on it: Gauss-law preservation, psi independence and gauge equivalence.
//!
//! The scalar pair `(phi, pi_phi)` is frozen: its velocities are zeroed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::constraints::{eval_constraint, Constraint, PsiField};
use crate::error::{Error, Result};
use crate::gauges::{gauge_residual, poincare_scalar_potential, poincare_vector_potential, GaugeKind};
use crate::grid::{curl, deposit_line, deposit_point, divergence, interpolate_vector, Grid, ScalarField, VectorField};
use crate::hamiltonians::{Hamiltonian, HamiltonianKind};
use crate::helmholtz::solve_poisson;
use crate::phase_space::{FieldState, PhaseLayout};
use crate::potential::Potential;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Leapfrog,
    Rk4,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Leapfrog => "leapfrog",
            Scheme::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "leapfrog" => Some(Scheme::Leapfrog),
            "rk4" => Some(Scheme::Rk4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
    /// Keep every n-th state; diagnostics are taken at the same steps.
    pub record_every: usize,
    /// Relative energy change that counts as blow-up.
    pub energy_bound: f64,
    /// Leapfrog sub-iterations stop once the update changes by less than this (relative).
    pub fixed_point_tol: f64,
    pub max_fixed_point: usize,
    /// Gauge whose residual is logged.
    pub gauge: GaugeKind,
}

impl FlowOptions {
    pub fn new(dt: f64, steps: usize, scheme: Scheme) -> Self {
        Self {
            dt,
            steps,
            scheme,
            record_every: 1,
            energy_bound: 1e-2,
            fixed_point_tol: 1e-15,
            max_fixed_point: 50,
            gauge: GaugeKind::Poincare,
        }
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }

    pub fn gauge(mut self, gauge: GaugeKind) -> Self {
        self.gauge = gauge;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub energy: f64,
    /// Max core `|chi_2|`.
    pub gauss_residual: f64,
    pub gauge_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<FieldState>,
    pub times: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    /// Set when the run was cut short.
    pub failure: Option<String>,
    /// Leapfrog steps whose sub-iteration hit the cap.
    pub unconverged_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FieldState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Max `|E(t) - E(0)| / |E(0)|` over the recorded steps.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.diagnostics[0].energy;
        let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
        self.diagnostics.iter().map(|d| (d.energy - e0).abs() / scale).fold(0.0, f64::max)
    }
}

fn diagnose(h: &Hamiltonian, s: &FieldState, gauge: GaugeKind) -> Result<Diagnostics> {
    Ok(Diagnostics {
        energy: h.energy(s)?,
        gauss_residual: eval_constraint(&Constraint::gauss(), s)?.max_abs_core(),
        gauge_residual: gauge_residual(s, gauge)?,
    })
}

struct Flow<'a> {
    h: &'a Hamiltonian,
    layout: PhaseLayout,
    scratch: FieldState,
    frozen: Vec<bool>,
}

impl<'a> Flow<'a> {
    fn new(h: &'a Hamiltonian, s0: &FieldState) -> Self {
        let layout = s0.layout();
        let mut frozen = vec![false; layout.dim()];
        for c in 0..layout.cells() {
            frozen[layout.phi(c)] = true;
            frozen[layout.pi_phi(c)] = true;
        }
        Self { h, layout, scratch: s0.clone(), frozen }
    }

    fn gradient(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        self.scratch.set_flat(z);
        let mut g = self.h.energy_gradient(&self.scratch)?.values;
        for (gi, &f) in g.iter_mut().zip(&self.frozen) {
            if f {
                *gi = 0.0;
            }
        }
        Ok(g)
    }

    fn velocity(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient(z)?;
        Ok(self.layout.symplectic(&g))
    }

    fn rk4(&mut self, z: &[f64], dt: f64) -> Result<Vec<f64>> {
        let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + s * y).collect() };
        let k1 = self.velocity(z)?;
        let k2 = self.velocity(&axpy(z, &k1, dt / 2.0))?;
        let k3 = self.velocity(&axpy(z, &k2, dt / 2.0))?;
        let k4 = self.velocity(&axpy(z, &k3, dt))?;
        Ok((0..z.len()).map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
    }

    /// Generalized Stormer-Verlet for a non-separable Hamiltonian; both
    /// implicit stages are solved by fixed-point iteration. Returns the new
    /// point and whether every sub-iteration converged.
    fn leapfrog(&mut self, z: &[f64], dt: f64, tol: f64, cap: usize) -> Result<(Vec<f64>, bool)> {
        let m = self.layout.half();
        let w: Vec<f64> = (0..m).map(|i| self.layout.weight(i)).collect();
        let scale = 1.0 + z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut converged = true;

        // p_half = p - dt/2 w dH/dq(q, p_half)
        let mut y = z.to_vec();
        for it in 0.. {
            let g = self.gradient(&y)?;
            let mut change = 0.0f64;
            for i in 0..m {
                let next = z[m + i] - 0.5 * dt * w[i] * g[i];
                change = change.max((next - y[m + i]).abs());
                y[m + i] = next;
            }
            if change <= tol * scale {
                break;
            }
            if it + 1 == cap {
                converged = false;
                break;
            }
        }

        // q_new = q + dt/2 w [dH/dp(q, p_half) + dH/dp(q_new, p_half)]
        let g_start = self.gradient(&y)?;
        let mut x = y.clone();
        for i in 0..m {
            x[i] = z[i] + dt * w[i] * g_start[m + i];
        }
        for it in 0.. {
            let g = self.gradient(&x)?;
            let mut change = 0.0f64;
            for i in 0..m {
                let next = z[i] + 0.5 * dt * w[i] * (g_start[m + i] + g[m + i]);
                change = change.max((next - x[i]).abs());
                x[i] = next;
            }
            if change <= tol * scale {
                break;
            }
            if it + 1 == cap {
                converged = false;
                break;
            }
        }

        // p_new = p_half - dt/2 w dH/dq(q_new, p_half)
        let g = self.gradient(&x)?;
        for i in 0..m {
            x[m + i] -= 0.5 * dt * w[i] * g[i];
        }
        Ok((x, converged))
    }
}

/// Evolve `s0` under `h`. A run whose relative energy change exceeds
/// `opts.energy_bound` stops early with `failure` set.
pub fn hamiltonian_flow(s0: &FieldState, h: &Hamiltonian, opts: &FlowOptions) -> Result<Trajectory> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {}", opts.dt)));
    }
    s0.validate()?;
    let mut flow = Flow::new(h, s0);
    let first = diagnose(h, s0, opts.gauge)?;
    let e0 = first.energy;
    let mut out = Trajectory {
        states: vec![s0.clone()],
        times: vec![0.0],
        diagnostics: vec![first],
        failure: None,
        unconverged_steps: 0,
    };
    let mut z = s0.to_flat();
    let mut state = s0.clone();
    for step in 1..=opts.steps {
        z = match opts.scheme {
            Scheme::Rk4 => flow.rk4(&z, opts.dt)?,
            Scheme::Leapfrog => {
                let (next, ok) = flow.leapfrog(&z, opts.dt, opts.fixed_point_tol, opts.max_fixed_point)?;
                if !ok {
                    out.unconverged_steps += 1;
                }
                next
            }
        };
        if step % opts.record_every != 0 && step != opts.steps {
            continue;
        }
        state.set_flat(&z);
        let d = match diagnose(h, &state, opts.gauge) {
            Ok(d) => d,
            Err(e) => {
                out.failure = Some(format!("step {step}: {e}"));
                break;
            }
        };
        let drift = (d.energy - e0).abs() / if e0 != 0.0 { e0.abs() } else { 1.0 };
        out.states.push(state.clone());
        out.times.push(step as f64 * opts.dt);
        out.diagnostics.push(d);
        if !(drift <= opts.energy_bound) {
            out.failure = Some(format!("step {step}: relative energy change {drift:e} exceeds {:e}", opts.energy_bound));
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintMonitor {
    pub initial: f64,
    pub max: f64,
    pub last: f64,
    /// `max - initial`.
    pub growth: f64,
    pub initial_violation: bool,
    pub pass: bool,
}

/// Gauss-law residual along a trajectory; passes when the initial data
/// satisfies it and the residual never grows by more than `tol`.
pub fn constraint_monitor(t: &Trajectory, tol: f64) -> ConstraintMonitor {
    let residuals: Vec<f64> = t.diagnostics.iter().map(|d| d.gauss_residual).collect();
    let initial = residuals[0];
    let max = residuals.iter().copied().fold(0.0, f64::max);
    let last = *residuals.last().expect("nonempty");
    let growth = max - initial;
    let initial_violation = !(initial <= tol);
    ConstraintMonitor { initial, max, last, growth, initial_violation, pass: !initial_violation && growth <= tol }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiComparison {
    /// Max coordinate difference between the two runs.
    pub max_deviation: f64,
    /// `-sum psi^2 / 2 eps0 h^3`.
    pub expected_shift: f64,
    /// Max over recorded steps of `|(E_shifted - E_final) - expected| / |expected|`.
    pub shift_error: f64,
}

/// Run the final Hamiltonian with and without the constant psi shift.
pub fn psi_trajectory_compare(
    s0: &FieldState,
    psi: &PsiField,
    potential: &Potential,
    nodes: usize,
    opts: &FlowOptions,
) -> Result<PsiComparison> {
    let plain = Hamiltonian::new(HamiltonianKind::MinimalCouplingFinal, potential.clone(), nodes, 1e-5);
    let shifted = Hamiltonian::new(HamiltonianKind::MinimalCouplingSimplified(psi.clone()), potential.clone(), nodes, 1e-5);
    let (a, b) = rayon::join(|| hamiltonian_flow(s0, &plain, opts), || hamiltonian_flow(s0, &shifted, opts));
    let (a, b) = (a?, b?);
    if let Some(f) = a.failure.as_ref().or(b.failure.as_ref()) {
        return Err(Error::InvalidArgument(format!("flow failed: {f}")));
    }
    let g = *s0.grid();
    let expected_shift = -g
        .interior_cells()
        .map(|c| vec3::dot(psi.psi.values()[c], psi.psi.values()[c]))
        .sum::<f64>()
        * g.cell_volume()
        / (2.0 * s0.eps0);
    let mut max_deviation = 0.0f64;
    let mut shift_error = 0.0f64;
    for ((sa, sb), (da, db)) in a.states.iter().zip(&b.states).zip(a.diagnostics.iter().zip(&b.diagnostics)) {
        let za = sa.to_flat();
        let zb = sb.to_flat();
        max_deviation = za.iter().zip(&zb).map(|(x, y)| (x - y).abs()).fold(max_deviation, f64::max);
        let diff = db.energy - da.energy;
        let err = (diff - expected_shift).abs();
        shift_error = shift_error.max(if expected_shift != 0.0 { err / expected_shift.abs() } else { err });
    }
    Ok(PsiComparison { max_deviation, expected_shift, shift_error })
}

/// Force on the particle that the psi form picks up when `psi` depends on
/// the particle position: central difference in `r` of the energy gap between
/// the psi form with `psi_at(r)` and with zero. A static `psi` gives zero,
/// since psi cancels from the field gradients.
pub fn psi_force(
    s: &FieldState,
    psi_at: impl Fn(Vec3) -> Result<PsiField>,
    potential: &Potential,
    nodes: usize,
    step: f64,
) -> Result<f64> {
    let without = Hamiltonian::new(
        HamiltonianKind::MinimalCouplingPsi(PsiField::zero(*s.grid())),
        potential.clone(),
        nodes,
        1e-5,
    );
    let gap = |r: Vec3| -> Result<f64> {
        let mut moved = s.clone();
        moved.particle.r = r;
        let with = Hamiltonian::new(HamiltonianKind::MinimalCouplingPsi(psi_at(r)?), potential.clone(), nodes, 1e-5);
        Ok(with.energy(&moved)? - without.energy(&moved)?)
    };
    let mut out = 0.0f64;
    for a in 0..3 {
        let mut hi = s.particle.r;
        let mut lo = s.particle.r;
        hi[a] += step;
        lo[a] -= step;
        out = out.max(((gap(hi)? - gap(lo)?) / (2.0 * step)).abs());
    }
    Ok(out)
}

/// The line term `-q r lambda(x)`, with `lambda` the unit line density from
/// the origin to `r`.
pub fn line_psi(grid: &Grid, charge: f64, r: Vec3, nodes: usize) -> Result<PsiField> {
    let lambda = deposit_line(grid, 1.0, r, |_| 1.0, nodes)?;
    Ok(PsiField::from_field(VectorField::from_scalar(&lambda, vec3::scale(r, -charge))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeComparison {
    /// Max `|E_C - E_P|` over the compared cells, relative to max `|E0|` there.
    pub electric: f64,
    /// Same for `B`.
    pub magnetic: f64,
    pub position: f64,
    pub gauss_residual: f64,
}

impl GaugeComparison {
    pub fn max(&self) -> f64 {
        self.electric.max(self.magnetic).max(self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeSetup {
    pub quadrature_nodes: usize,
    pub poisson_tol: f64,
    pub max_cg_iterations: usize,
    /// Relative Gauss-law residual above which the data are rejected.
    pub gauss_tol: f64,
    /// Compare only cells with `max |x_i| <= radius`; `None` uses every cell
    /// at least three layers in from the boundary.
    pub compare_radius: Option<f64>,
}

impl Default for GaugeSetup {
    fn default() -> Self {
        Self { quadrature_nodes: 64, poisson_tol: 1e-12, max_cg_iterations: 50_000, gauss_tol: 1e-6, compare_radius: None }
    }
}

// the Poincare potential lives on the core only, so its curl is
// unreliable on the outermost core layer
fn compared_cells(g: &Grid, radius: Option<f64>) -> Vec<usize> {
    (0..g.len())
        .filter(|&c| g.margin(c) >= 3 && radius.is_none_or(|r| vec3::max_abs(g.position(c)) <= r + 1e-9 * g.spacing()))
        .collect()
}

fn max_norm(cells: &[usize], f: &VectorField) -> f64 {
    cells.iter().map(|&c| vec3::max_abs(f.values()[c])).fold(0.0, f64::max)
}

fn relative(cells: &[usize], a: &VectorField, b: &VectorField, scale: f64) -> f64 {
    let d = max_norm(cells, &a.sub(b));
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// Coulomb-gauge potential of `b`: `curl u` with `div grad u = -b` per component.
pub fn coulomb_vector_potential(b: &VectorField, tol: f64, max_iterations: usize) -> Result<VectorField> {
    let g = *b.grid();
    let mut u = VectorField::zeros(g);
    for a in 0..3 {
        let sol = solve_poisson(&b.component(a).map(|v| -v), tol, max_iterations)?;
        for (c, v) in sol.potential.values().iter().enumerate() {
            u.values_mut()[c][a] = *v;
        }
    }
    curl(&u)
}

/// Build Coulomb- and Poincare-gauge states for the same `(E0, B0)`, evolve
/// both under the final minimal-coupling Hamiltonian and compare the
/// physical fields at the end. `base` supplies the particle, whose
/// `momentum` is read as the mechanical momentum `m rdot`, and the vacuum
/// constants.
pub fn gauge_equivalence_compare(
    base: &FieldState,
    e0: &VectorField,
    b0: &VectorField,
    potential: &Potential,
    setup: &GaugeSetup,
    opts: &FlowOptions,
) -> Result<GaugeComparison> {
    let g = *base.grid();
    if e0.grid() != &g || b0.grid() != &g {
        return Err(Error::GridMismatch);
    }
    let p = base.particle;
    let rho = deposit_point(&g, p.charge, p.r)?;
    let div_d = divergence(&e0.scale(base.eps0))?;
    let gauss = g.core_cells().map(|c| (div_d.values()[c] - rho.values()[c]).abs()).fold(0.0, f64::max);
    let gauss_scale = (base.eps0 * e0.max_abs_core() / g.spacing()).max(rho.max_abs_core()).max(f64::MIN_POSITIVE);
    if gauss > setup.gauss_tol * gauss_scale {
        return Err(Error::InconsistentInitialData(gauss));
    }

    let nodes = setup.quadrature_nodes;
    let coulomb_phi = solve_poisson(&rho.map(|v| -v / base.eps0), setup.poisson_tol, setup.max_cg_iterations)?;
    let coulomb = (
        coulomb_vector_potential(b0, setup.poisson_tol, setup.max_cg_iterations)?,
        coulomb_phi.potential,
    );
    let poincare = (poincare_vector_potential(b0, nodes)?, poincare_scalar_potential(e0, nodes)?);

    let build = |(a, phi): (VectorField, ScalarField)| -> Result<FieldState> {
        let mut s = base.clone();
        let a_r = interpolate_vector(&a, p.r)?;
        s.particle.momentum = vec3::add(p.momentum, vec3::scale(a_r, p.charge));
        s.a = a;
        s.phi = phi;
        s.pi = e0.scale(-base.eps0);
        s.pi_phi = ScalarField::zeros(g);
        Ok(s)
    };
    let sc = build(coulomb)?;
    let sp = build(poincare)?;
    let h = Hamiltonian::new(HamiltonianKind::MinimalCouplingFinal, potential.clone(), nodes, 1e-5);
    let opts_c = opts.gauge(GaugeKind::Coulomb).record_every(opts.steps.max(1));
    let opts_p = opts.gauge(GaugeKind::Poincare).record_every(opts.steps.max(1));
    let (tc, tp) = rayon::join(|| hamiltonian_flow(&sc, &h, &opts_c), || hamiltonian_flow(&sp, &h, &opts_p));
    let (tc, tp) = (tc?, tp?);
    if let Some(f) = tc.failure.as_ref().or(tp.failure.as_ref()) {
        return Err(Error::InvalidArgument(format!("flow failed: {f}")));
    }
    let (fc, fp) = (tc.last(), tp.last());
    let cells = compared_cells(&g, setup.compare_radius);
    let electric = relative(&cells, &fc.pi.scale(-1.0 / base.eps0), &fp.pi.scale(-1.0 / base.eps0), max_norm(&cells, e0));
    let magnetic = relative(&cells, &curl(&fc.a)?, &curl(&fp.a)?, max_norm(&cells, b0));
    let position = vec3::max_abs(vec3::sub(fc.particle.r, fp.particle.r));
    Ok(GaugeComparison { electric, magnetic, position, gauss_residual: gauss })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Column text: `time energy gauss_residual gauge_residual`, one row per
/// recorded step.
pub fn write_trajectory(t: &Trajectory, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = String::from("# time energy gauss_residual gauge_residual\n");
    if let Some(f) = &t.failure {
        body.push_str(&format!("# failure: {f}\n"));
    }
    for (time, d) in t.times.iter().zip(&t.diagnostics) {
        body.push_str(&format!("{time:.17e} {:.17e} {:.17e} {:.17e}\n", d.energy, d.gauss_residual, d.gauge_residual));
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Binary snapshot, little-endian: `u64` dims x3, `f64` spacing, `u64` field
/// count, then each field (`A`, `pi`, `phi`) component-major, one `f64` per cell.
pub fn write_fields(s: &FieldState, path: &Path) -> Result<()> {
    let g = *s.grid();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut bytes = Vec::with_capacity(40 + 7 * 8 * g.len());
    for d in g.dims() {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    bytes.extend_from_slice(&g.spacing().to_le_bytes());
    bytes.extend_from_slice(&3u64.to_le_bytes());
    for field in [&s.a, &s.pi] {
        for a in 0..3 {
            for v in field.values() {
                bytes.extend_from_slice(&v[a].to_le_bytes());
            }
        }
    }
    for v in s.phi.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
