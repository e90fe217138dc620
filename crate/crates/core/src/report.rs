//! Claim suites run against a model file, and their JSON/CSV reports.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::constraints::{
    classify, constraint_matrix, consistency_chain, eval_constraint, psi_admissible, harmonic_gradient,
    ChainOptions, Constraint, DiracBracket, PsiField,
};
use crate::dynamics::{constraint_monitor, hamiltonian_flow, line_psi, psi_trajectory_compare, FlowOptions};
use crate::error::{Error, Result};
use crate::fixtures::{random_smooth_vector, random_state};
use crate::grid::{deposit_line, deposit_point, divergence, gradient, interpolate_vector, Grid, VectorField};
use crate::hamiltonians::{
    a_square_check, polarization_field, pzw_cancellation_check, transverse_momentum_witness, Hamiltonian,
    HamiltonianKind,
};
use crate::helmholtz::solve_poisson;
use crate::lagrangian::{Lagrangian, MomentumMode, VelocityData};
use crate::model::{Bindings, FieldPreset, InitialFields, ModelConfig, Program};
use crate::phase_space::{FieldState, ParticleState, Polynomial};
use crate::potential::Potential;
use crate::vec3;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Momentum,
    Constraints,
    Pzw,
    Dynamics,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Suite::All),
            "momentum" => Some(Suite::Momentum),
            "constraints" => Some(Suite::Constraints),
            "pzw" => Some(Suite::Pzw),
            "dynamics" => Some(Suite::Dynamics),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Momentum => "momentum",
            Suite::Constraints => "constraints",
            Suite::Pzw => "pzw",
            Suite::Dynamics => "dynamics",
        }
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// One verified statement. `pass` holds exactly when `measured <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimResult {
    pub id: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub runtime_s: f64,
    pub provenance: String,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub claims: Vec<ClaimResult>,
}

impl Report {
    pub fn new(cfg: &ModelConfig, seed: u64, claims: Vec<ClaimResult>) -> Self {
        Self { version: REPORT_VERSION, config_digest: config_digest(cfg), seed, claims }
    }

    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }
}

/// SHA-256 of the canonical text form of the config.
pub fn config_digest(cfg: &ModelConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_text().as_bytes()))
}

pub fn potential_of(cfg: &ModelConfig) -> Potential {
    Potential::new(cfg.potential.clone(), cfg.numerics.fd_step)
}

/// Initial state described by the `[fields]` section. The particle momentum
/// from the file is the canonical momentum.
pub fn initial_state(cfg: &ModelConfig) -> Result<FieldState> {
    let g = cfg.build_grid()?;
    let p = &cfg.particle;
    let particle = ParticleState { r: p.position, momentum: p.momentum, charge: p.charge, mass: p.mass };
    let mut s = FieldState::vacuum(g, particle);
    s.eps0 = cfg.vacuum.eps0;
    s.mu0 = cfg.vacuum.mu0;
    let coulomb = |s: &mut FieldState| -> Result<()> {
        let rho = deposit_point(&g, p.charge, p.position)?;
        let sol = solve_poisson(&rho.map(|v| -v), cfg.numerics.poisson_tol, cfg.numerics.max_cg_iterations)?;
        s.pi = gradient(&sol.potential)?;
        s.phi = sol.potential.map(|v| v / cfg.vacuum.eps0);
        Ok(())
    };
    match &cfg.fields {
        InitialFields::Preset(FieldPreset::Vacuum) => {}
        InitialFields::Preset(FieldPreset::Coulomb) => coulomb(&mut s)?,
        InitialFields::Preset(FieldPreset::Random { seed }) => {
            coulomb(&mut s)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            // a curl adds no charge
            let solenoid = crate::grid::curl(&random_smooth_vector(&g, &mut rng))?;
            s.pi = s.pi.add(&solenoid);
            s.a = random_smooth_vector(&g, &mut rng);
        }
        InitialFields::Profiles { a, e } => {
            let progs: Vec<Program> = a.iter().chain(e.iter()).map(Program::compile).collect();
            let mut av = Vec::with_capacity(g.len());
            let mut pv = Vec::with_capacity(g.len());
            for c in 0..g.len() {
                let b = Bindings::at(g.position(c));
                let mut vals = [0.0; 6];
                for (v, prog) in vals.iter_mut().zip(&progs) {
                    *v = prog.eval(&b).map_err(crate::model::ModelError::from)?;
                }
                av.push([vals[0], vals[1], vals[2]]);
                pv.push(vec3::scale([vals[3], vals[4], vals[5]], -cfg.vacuum.eps0));
            }
            s.a = VectorField::from_values(g, av)?;
            s.pi = VectorField::from_values(g, pv)?;
        }
    }
    s.validate()?;
    Ok(s)
}

struct Measure {
    measured: f64,
    threshold: f64,
    diagnostic: Option<String>,
}

impl Measure {
    fn new(measured: f64, threshold: f64) -> Self {
        Self { measured, threshold, diagnostic: None }
    }

    fn note(mut self, d: impl Into<String>) -> Self {
        self.diagnostic = Some(d.into());
        self
    }
}

struct Ctx<'a> {
    cfg: &'a ModelConfig,
    state: FieldState,
    potential: Potential,
    seed: u64,
}

impl Ctx<'_> {
    fn grid(&self) -> Grid {
        *self.state.grid()
    }

    fn nodes(&self) -> usize {
        self.cfg.numerics.quadrature_nodes
    }

    fn hamiltonian(&self, kind: HamiltonianKind) -> Hamiltonian {
        Hamiltonian::new(kind, self.potential.clone(), self.nodes(), self.cfg.numerics.fd_step)
    }

    fn lagrangian(&self) -> Lagrangian {
        Lagrangian::new(self.potential.clone(), self.nodes(), self.cfg.numerics.fd_step)
    }

    /// Velocities matching the state: `Adot = pi/eps0 - grad phi` and
    /// `rdot = (P - q A(r)) / m`.
    fn velocities(&self) -> Result<VelocityData> {
        let s = &self.state;
        let adot = s.pi.scale(1.0 / s.eps0).sub(&gradient(&s.phi)?);
        let p = &s.particle;
        let mech = vec3::sub(p.momentum, vec3::scale(interpolate_vector(&s.a, p.r)?, p.charge));
        Ok(VelocityData { adot, rdot: vec3::scale(mech, 1.0 / p.mass) })
    }
}

type ClaimFn = fn(&Ctx) -> Result<Measure>;

const CLAIMS: &[(&str, Suite, &str, ClaimFn)] = &[
    ("momentum.independent_mode", Suite::Momentum, "lagrangian/canonical_momentum", momentum_independent),
    ("momentum.mode_difference", Suite::Momentum, "lagrangian/canonical_momentum", momentum_difference),
    ("momentum.difference_support", Suite::Momentum, "lagrangian/canonical_momentum", momentum_support),
    ("momentum.transverse_witness", Suite::Momentum, "hamiltonians/transverse_momentum_witness", transverse_witness),
    ("chain.secondary_count", Suite::Constraints, "constraints/consistency_chain", chain_count),
    ("chain.secondary_is_gauss", Suite::Constraints, "constraints/consistency_chain", chain_is_gauss),
    ("psi.divergence_free", Suite::Constraints, "constraints/psi_admissible", psi_zero_admissible),
    ("psi.line_term_excluded", Suite::Constraints, "constraints/psi_admissible", psi_line_excluded),
    ("dirac.second_class_vanish", Suite::Constraints, "constraints/dirac_bracket", dirac_second_class),
    ("pzw.cancellation", Suite::Pzw, "hamiltonians/pzw_cancellation_check", pzw_cancellation),
    ("pzw.a_square", Suite::Pzw, "hamiltonians/a_square_check", pzw_a_square),
    ("pzw.field_energy", Suite::Pzw, "hamiltonians/Hamiltonian", pzw_field_energy),
    ("dynamics.energy_drift", Suite::Dynamics, "dynamics/hamiltonian_flow", dynamics_drift),
    ("dynamics.gauss_growth", Suite::Dynamics, "dynamics/constraint_monitor", dynamics_gauss),
    ("dynamics.psi_independence", Suite::Dynamics, "dynamics/psi_trajectory_compare", dynamics_psi),
];

fn relative_to(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn momentum_independent(ctx: &Ctx) -> Result<Measure> {
    let s = &ctx.state;
    let v = ctx.velocities()?;
    let pi = ctx.lagrangian().canonical_momentum(s, &v, MomentumMode::IndependentVariables)?;
    let target = crate::lagrangian::electric_field(s, &v)?.scale(-s.eps0);
    let g = ctx.grid();
    let err = g.interior_cells().map(|c| vec3::max_abs(vec3::sub(pi.values()[c], target.values()[c]))).fold(0.0, f64::max);
    Ok(Measure::new(relative_to(err, target.max_abs_interior()), 1e-6))
}

fn momentum_modes(ctx: &Ctx) -> Result<(VectorField, VectorField)> {
    let s = &ctx.state;
    let v = ctx.velocities()?;
    let lag = ctx.lagrangian();
    let a = lag.canonical_momentum(s, &v, MomentumMode::IndependentVariables)?;
    let b = lag.canonical_momentum(s, &v, MomentumMode::SubstitutedConstraints)?;
    let lambda = deposit_line(&ctx.grid(), 1.0, s.particle.r, |_| 1.0, ctx.nodes())?;
    let expected = VectorField::from_scalar(&lambda, vec3::scale(s.particle.r, -s.particle.charge));
    Ok((b.sub(&a), expected))
}

fn momentum_difference(ctx: &Ctx) -> Result<Measure> {
    let (diff, expected) = momentum_modes(ctx)?;
    let err = diff.sub(&expected).max_abs();
    Ok(Measure::new(relative_to(err, expected.max_abs().max(1.0)), 1e-6))
}

fn momentum_support(ctx: &Ctx) -> Result<Measure> {
    let (diff, _) = momentum_modes(ctx)?;
    let g = ctx.grid();
    let r = ctx.state.particle.r;
    let h = g.spacing();
    let outside = (0..g.len())
        .filter(|&c| segment_distance(g.position(c), r) > 2.0 * h)
        .map(|c| vec3::max_abs(diff.values()[c]))
        .fold(0.0, f64::max);
    // rounding floor of two subtracted central differences is about eps / fd_step
    Ok(Measure::new(relative_to(outside, diff.max_abs()), 1e-8))
}

/// Distance from `x` to the segment from the origin to `r`.
pub fn segment_distance(x: vec3::Vec3, r: vec3::Vec3) -> f64 {
    let rr = vec3::dot(r, r);
    let u = if rr > 0.0 { (vec3::dot(x, r) / rr).clamp(0.0, 1.0) } else { 0.0 };
    vec3::norm(vec3::sub(x, vec3::scale(r, u)))
}

fn transverse_witness(ctx: &Ctx) -> Result<Measure> {
    let w = transverse_momentum_witness(&ctx.state, ctx.nodes(), ctx.cfg.numerics.poisson_tol)?;
    let m = Measure::new(w.polarization_transverse - w.distance, 1e-8);
    Ok(if w.polarization_transverse > 0.0 {
        m.note(format!("|P_t| = {:e}, |pi_t + D| = {:e}", w.polarization_transverse, w.distance))
    } else {
        m.note("polarization has no transverse part (q = 0 or r = 0)")
    })
}

/// State for the chain: Gauss law deliberately broken by a random
/// smooth perturbation of `pi`, particle kinetically at rest.
fn chain_state(ctx: &Ctx) -> Result<FieldState> {
    let mut s = ctx.state.clone();
    let g = ctx.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    s.pi = s.pi.add(&random_smooth_vector(&g, &mut rng));
    s.particle.momentum = vec3::scale(interpolate_vector(&s.a, s.particle.r)?, s.particle.charge);
    Ok(s)
}

fn run_chain(ctx: &Ctx) -> Result<(FieldState, crate::constraints::ChainResult)> {
    let s = chain_state(ctx)?;
    let h: Arc<dyn crate::phase_space::Functional> =
        Arc::new(ctx.hamiltonian(HamiltonianKind::MinimalCouplingPsi(PsiField::zero(ctx.grid()))));
    let opts = ChainOptions { seed: ctx.seed, ..ChainOptions::default() };
    let chain = consistency_chain(vec![Constraint::phi_momentum()], h, &s, opts)?;
    Ok((s, chain))
}

fn chain_count(ctx: &Ctx) -> Result<Measure> {
    let (_, chain) = run_chain(ctx)?;
    let n = chain.secondaries().count();
    Ok(Measure::new((n as f64 - 1.0).abs(), 0.0).note(format!("{n} secondary families")))
}

fn chain_is_gauss(ctx: &Ctx) -> Result<Measure> {
    let (s, chain) = run_chain(ctx)?;
    let Some(sec) = chain.secondaries().next() else {
        return Ok(Measure::new(f64::INFINITY, 1e-8).note("chain produced no secondary"));
    };
    let got = sec.residual(&s)?;
    let want = eval_constraint(&Constraint::gauss(), &s)?;
    let err = got.zip_map(&want, |a, b| a - b).max_abs_core();
    Ok(Measure::new(err, 1e-8))
}

fn psi_zero_admissible(ctx: &Ctx) -> Result<Measure> {
    let rep = psi_admissible(&PsiField::zero(ctx.grid()), ctx.cfg.gauge, 1e-10)?;
    let worst = rep.form_residual.max(rep.divergence_residual).max(rep.origin_divergence);
    Ok(Measure::new(worst, 1e-10))
}

/// Ratio `0.1 q / h^3` over the largest interior divergence of the line
/// term; at most 1 means the term is visibly not divergence-free.
fn psi_line_excluded(ctx: &Ctx) -> Result<Measure> {
    let g = ctx.grid();
    let p = &ctx.state.particle;
    if p.charge == 0.0 || vec3::max_abs(p.r) == 0.0 {
        return Ok(Measure::new(f64::INFINITY, 1.0).note("line term vanishes for q = 0 or r = 0"));
    }
    let psi = line_psi(&g, p.charge, p.r, ctx.nodes())?;
    let div = divergence(&psi.psi)?.max_abs_interior();
    let rep = psi_admissible(&psi, ctx.cfg.gauge, 1e-10)?;
    let m = Measure::new(0.1 * p.charge.abs() / g.cell_volume() / div, 1.0);
    Ok(m.note(format!("admissible = {}", rep.admissible())))
}

fn dirac_second_class(ctx: &Ctx) -> Result<Measure> {
    let g = Grid::cubic(5, ctx.cfg.grid.spacing)?;
    let mut s = random_state(&g, ctx.cfg.particle.charge, ctx.seed);
    s.eps0 = ctx.cfg.vacuum.eps0;
    s.mu0 = ctx.cfg.vacuum.mu0;
    let m = constraint_matrix(&Constraint::table(), &s)?;
    let cls = classify(&m, ctx.cfg.numerics.rank_tol)?;
    let db = DiracBracket::new(&m, ctx.cfg.numerics.rank_tol)?;
    let l = s.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = random_polynomial(&mut rng, l.dim());
        let gf = crate::phase_space::Functional::gradient(&f, &s)?;
        for k in 0..cls.second_class_basis.ncols() {
            let mut combo = vec![0.0; l.dim()];
            for (a, row) in m.rows.iter().enumerate() {
                let w = cls.second_class_basis[(a, k)];
                for &(i, v) in row {
                    combo[i] += w * v;
                }
            }
            worst = worst.max(db.bracket_gradients(&combo, &gf.values).abs());
        }
    }
    Ok(Measure::new(worst, 1e-10).note(format!("rank {} of {}", cls.rank, m.len())))
}

/// Random functional: linear plus quadratic terms on random coordinates.
pub fn random_polynomial(rng: &mut impl Rng, dim: usize) -> Polynomial {
    Polynomial {
        constant: rng.gen_range(-1.0..1.0),
        linear: (0..6).map(|_| (rng.gen_range(0..dim), rng.gen_range(-1.0..1.0))).collect(),
        quadratic: (0..4).map(|_| (rng.gen_range(0..dim), rng.gen_range(0..dim), rng.gen_range(-1.0..1.0))).collect(),
    }
}

fn pzw_cancellation(ctx: &Ctx) -> Result<Measure> {
    let g = ctx.grid();
    let mut worst = 0.0f64;
    for k in 0..20 {
        let mut s = random_state(&g, ctx.cfg.particle.charge, ctx.seed.wrapping_add(k));
        s.eps0 = ctx.cfg.vacuum.eps0;
        let pol = polarization_field(&s.particle, &g, ctx.nodes())?;
        worst = worst.max(pzw_cancellation_check(&s, &pol).relative);
    }
    Ok(Measure::new(worst, 1e-12))
}

fn pzw_a_square(ctx: &Ctx) -> Result<Measure> {
    let g = ctx.grid();
    let b = VectorField::from_fn(g, |_| [0.3, -0.7, 1.1]);
    Ok(Measure::new(a_square_check(&ctx.state.particle, &b, ctx.nodes())?, 1e-6))
}

fn pzw_field_energy(ctx: &Ctx) -> Result<Measure> {
    let s = &ctx.state;
    let pzw = ctx.hamiltonian(HamiltonianKind::Pzw).breakdown(s)?;
    let fin = ctx.hamiltonian(HamiltonianKind::MinimalCouplingFinal).breakdown(s)?;
    let field = ["displacement", "polarization_cross", "polarization_self"]
        .iter()
        .map(|k| pzw.get(k).unwrap_or(0.0))
        .sum::<f64>();
    let electric = fin.get("electric").unwrap_or(0.0);
    Ok(Measure::new(relative_to((field - electric).abs(), electric.abs()), 1e-10))
}

fn flow_opts(ctx: &Ctx) -> FlowOptions {
    let i = &ctx.cfg.integrator;
    FlowOptions::new(i.dt, i.steps, i.scheme).record_every((i.steps / 100).max(1)).gauge(ctx.cfg.gauge)
}

fn final_flow(ctx: &Ctx) -> Result<crate::dynamics::Trajectory> {
    let t = hamiltonian_flow(&ctx.state, &ctx.hamiltonian(HamiltonianKind::MinimalCouplingFinal), &flow_opts(ctx))?;
    match &t.failure {
        Some(f) => Err(Error::InvalidArgument(format!("flow failed: {f}"))),
        None => Ok(t),
    }
}

fn dynamics_drift(ctx: &Ctx) -> Result<Measure> {
    let t = final_flow(ctx)?;
    Ok(Measure::new(t.energy_drift(), 1e-6))
}

fn dynamics_gauss(ctx: &Ctx) -> Result<Measure> {
    let t = final_flow(ctx)?;
    let mon = constraint_monitor(&t, 1e-8);
    let m = Measure::new(mon.growth, 1e-8);
    Ok(if mon.initial_violation { m.note(format!("initial residual {:e}", mon.initial)) } else { m })
}

fn dynamics_psi(ctx: &Ctx) -> Result<Measure> {
    let psi = harmonic_gradient(ctx.grid(), [0.2, -0.1, 0.3], 0.7);
    let cmp = psi_trajectory_compare(&ctx.state, &psi, &ctx.potential, ctx.nodes(), &flow_opts(ctx))?;
    Ok(Measure::new(cmp.max_deviation.max(cmp.shift_error), 1e-12))
}

/// Run every claim of `suite`. Claims run in parallel and are returned
/// sorted by id; a failing computation becomes a failed claim. Runtimes are
/// recorded only when `timings` is set, so that reports stay byte-stable.
pub fn run_suite(cfg: &ModelConfig, suite: Suite, seed: u64, timings: bool) -> Result<Vec<ClaimResult>> {
    let ctx = Ctx { cfg, state: initial_state(cfg)?, potential: potential_of(cfg), seed };
    let mut out: Vec<ClaimResult> = CLAIMS
        .par_iter()
        .filter(|(_, s, _, _)| suite.includes(*s))
        .map(|&(id, _, provenance, f)| {
            let start = Instant::now();
            let m = f(&ctx);
            let runtime_s = if timings { start.elapsed().as_secs_f64() } else { 0.0 };
            let (measured, threshold, diagnostic) = match m {
                Ok(m) => (m.measured, m.threshold, m.diagnostic),
                Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
            };
            ClaimResult {
                id: id.to_string(),
                measured,
                threshold,
                pass: measured <= threshold,
                runtime_s,
                provenance: provenance.to_string(),
                diagnostic,
            }
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_json(r: &Report) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report is serializable");
    s.push('\n');
    s
}

/// Same columns as the JSON claims; the header line carries the report fields.
pub fn render_csv(r: &Report) -> String {
    let mut s = format!("# version={} config_digest={} seed={}\n", r.version, r.config_digest, r.seed);
    s.push_str("id,measured,threshold,pass,runtime_s,provenance,diagnostic\n");
    for c in &r.claims {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{},{:e},{},{}",
            csv_field(&c.id),
            c.measured,
            c.threshold,
            c.pass,
            c.runtime_s,
            csv_field(&c.provenance),
            csv_field(c.diagnostic.as_deref().unwrap_or(""))
        );
    }
    s
}

pub fn emit_report(r: &Report, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Json => render_json(r),
        Format::Csv => render_csv(r),
    };
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Claim ids in the order they are defined, with their suites.
pub fn claim_ids() -> impl Iterator<Item = (&'static str, Suite)> {
    CLAIMS.iter().map(|&(id, s, _, _)| (id, s))
}
