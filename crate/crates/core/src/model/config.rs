use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::expr::{parse_expr, Expr, ParseError, ParseErrorKind};
use super::ModelError;
use crate::dynamics::Scheme;
use crate::gauges::GaugeKind;
use crate::grid::{Grid, DEFAULT_QUADRATURE_NODES};
use crate::helmholtz::{DEFAULT_MAX_CG_ITERATIONS, DEFAULT_POISSON_TOL};
use crate::phase_space::DEFAULT_FD_STEP;
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSpec {
    pub charge: f64,
    pub mass: f64,
    pub position: Vec3,
    pub momentum: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub quadrature_nodes: usize,
    pub poisson_tol: f64,
    pub rank_tol: f64,
    pub fd_step: f64,
    pub max_cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vacuum {
    pub eps0: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldPreset {
    /// Zero fields; only consistent with the Gauss law when the charge is zero.
    Vacuum,
    /// Static Coulomb field of the particle, zero vector potential.
    Coulomb,
    /// Coulomb field plus random smooth transverse and vector-potential parts.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialFields {
    Preset(FieldPreset),
    /// Vector potential and electric field components as expressions.
    Profiles { a: [Expr; 3], e: [Expr; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub grid: GridSpec,
    pub particle: ParticleSpec,
    pub potential: Expr,
    pub gauge: GaugeKind,
    pub numerics: Numerics,
    pub integrator: IntegratorSpec,
    pub vacuum: Vacuum,
    pub fields: InitialFields,
}

impl ModelConfig {
    pub fn build_grid(&self) -> crate::Result<Grid> {
        Grid::new(self.grid.dims, self.grid.spacing)
    }

    /// Canonical text form; `parse_model` maps it back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let triple = |v: Vec3| format!("{:?}, {:?}, {:?}", v[0], v[1], v[2]);
        let d = self.grid.dims;
        let _ = writeln!(s, "[grid]\ndims = {}, {}, {}\nspacing = {:?}\n", d[0], d[1], d[2], self.grid.spacing);
        let p = &self.particle;
        let _ = writeln!(
            s,
            "[particle]\ncharge = {:?}\nmass = {:?}\nposition = {}\nmomentum = {}\n",
            p.charge,
            p.mass,
            triple(p.position),
            triple(p.momentum)
        );
        let _ = writeln!(s, "[potential]\nV = {}\n", self.potential);
        let _ = writeln!(s, "[gauge]\nkind = {}\n", self.gauge.as_str());
        let n = &self.numerics;
        let _ = writeln!(
            s,
            "[numerics]\nquadrature_nodes = {}\npoisson_tol = {:?}\nrank_tol = {:?}\nfd_step = {:?}\nmax_cg_iterations = {}\n",
            n.quadrature_nodes, n.poisson_tol, n.rank_tol, n.fd_step, n.max_cg_iterations
        );
        let i = &self.integrator;
        let _ = writeln!(s, "[integrator]\ndt = {:?}\nsteps = {}\nscheme = {}\n", i.dt, i.steps, i.scheme.as_str());
        let _ = writeln!(s, "[vacuum]\neps0 = {:?}\nmu0 = {:?}\n", self.vacuum.eps0, self.vacuum.mu0);
        s.push_str("[fields]\n");
        match &self.fields {
            InitialFields::Preset(FieldPreset::Vacuum) => s.push_str("preset = vacuum\n"),
            InitialFields::Preset(FieldPreset::Coulomb) => s.push_str("preset = coulomb\n"),
            InitialFields::Preset(FieldPreset::Random { seed }) => {
                let _ = writeln!(s, "preset = random\nseed = {seed}");
            }
            InitialFields::Profiles { a, e } => {
                for (name, ex) in ["a_x", "a_y", "a_z"].iter().zip(a) {
                    let _ = writeln!(s, "{name} = {ex}");
                }
                for (name, ex) in ["e_x", "e_y", "e_z"].iter().zip(e) {
                    let _ = writeln!(s, "{name} = {ex}");
                }
            }
        }
        s
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["dims", "spacing"]),
    ("particle", &["charge", "mass", "position", "momentum"]),
    ("potential", &["V"]),
    ("gauge", &["kind"]),
    ("numerics", &["quadrature_nodes", "poisson_tol", "rank_tol", "fd_step", "max_cg_iterations"]),
    ("integrator", &["dt", "steps", "scheme"]),
    ("vacuum", &["eps0", "mu0"]),
    ("fields", &["preset", "seed", "a_x", "a_y", "a_z", "e_x", "e_y", "e_z"]),
];

const REQUIRED: &[&str] = &["grid.dims", "grid.spacing", "particle.charge", "particle.mass", "potential.V"];

struct Entry {
    line: usize,
    /// 1-based character column where the value starts.
    column: usize,
    value: String,
}

fn expr_error(line: usize, column: usize, e: ParseError) -> ModelError {
    let column = column + e.column - 1;
    match e.kind {
        ParseErrorKind::Lexical(message) => ModelError::Lexical { line, column, message },
        ParseErrorKind::Syntax { expected, found } => ModelError::Syntax { line, column, expected, found },
        ParseErrorKind::UnknownIdentifier(name) => ModelError::UnknownIdentifier { line, column, name },
    }
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => parse_number(e),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ModelError> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<usize>().map_err(|_| ModelError::Invalid {
                line: e.line,
                message: format!("`{key}` expects a non-negative integer, got `{}`", e.value),
            }),
        }
    }

    fn triple(&self, key: &str) -> Result<Vec3, ModelError> {
        match self.get(key) {
            None => Ok([0.0; 3]),
            Some(e) => {
                let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(ModelError::Invalid {
                        line: e.line,
                        message: format!("`{key}` expects three comma-separated numbers"),
                    });
                }
                let mut out = [0.0; 3];
                for (o, p) in out.iter_mut().zip(parts) {
                    *o = parse_number(&Entry { line: e.line, column: e.column, value: p.to_string() })?;
                }
                Ok(out)
            }
        }
    }

    fn expr(&self, key: &str) -> Result<Option<Expr>, ModelError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => parse_expr(&e.value).map(Some).map_err(|err| expr_error(e.line, e.column, err)),
        }
    }
}

fn parse_number(e: &Entry) -> Result<f64, ModelError> {
    match e.value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(ModelError::Invalid { line: e.line, message: format!("value `{}` is not finite", e.value) }),
        Err(_) => Err(ModelError::Invalid { line: e.line, message: format!("expected a number, got `{}`", e.value) }),
    }
}

fn collect_entries(text: &str) -> Result<Entries, ModelError> {
    let mut map = BTreeMap::new();
    let mut section: Option<&str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ModelError::Invalid {
                line,
                message: "section header is missing `]`".into(),
            })?;
            let name = name.trim();
            match SECTIONS.iter().find(|(s, _)| *s == name) {
                Some((s, _)) => section = Some(s),
                None => return Err(ModelError::UnknownSection { line, name: name.to_string() }),
            }
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(ModelError::Invalid { line, message: "expected `key = value`".into() });
        };
        let Some(sec) = section else {
            return Err(ModelError::Invalid { line, message: "key outside of any section".into() });
        };
        let key = content[..eq].trim();
        let known = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !known.contains(&key) {
            return Err(ModelError::UnknownKey { line, section: sec.to_string(), key: key.to_string() });
        }
        let after = &content[eq + 1..];
        let lead = after.len() - after.trim_start().len();
        let column = content[..eq + 1 + lead].chars().count() + 1;
        let full = format!("{sec}.{key}");
        if map.contains_key(&full) {
            return Err(ModelError::Invalid { line, message: format!("duplicate key `{key}`") });
        }
        map.insert(full, Entry { line, column, value: after.trim().to_string() });
    }
    let missing: Vec<String> = REQUIRED.iter().filter(|k| !map.contains_key(**k)).map(|k| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingKeys(missing));
    }
    Ok(Entries(map))
}

fn parse_dims(e: &Entry) -> Result<[usize; 3], ModelError> {
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.parse::<usize>().ok()).collect();
    match parsed.as_deref() {
        Some([n]) => Ok([*n; 3]),
        Some([a, b, c]) => Ok([*a, *b, *c]),
        _ => Err(ModelError::Invalid {
            line: e.line,
            message: format!("`dims` expects one or three positive integers, got `{}`", e.value),
        }),
    }
}

fn positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Semantic(format!("{name} must be positive, got {v}")))
    }
}

pub fn parse_model(text: &str) -> Result<ModelConfig, ModelError> {
    let en = collect_entries(text)?;

    let dims = parse_dims(en.get("grid.dims").expect("required"))?;
    if let Some(&n) = dims.iter().find(|&&n| n < 5 || n % 2 == 0) {
        return Err(ModelError::Semantic(format!("grid dimensions must be odd and at least 5, got {n}")));
    }
    let grid = GridSpec { dims, spacing: en.number("grid.spacing", 0.0)? };
    positive("grid spacing", grid.spacing)?;

    let particle = ParticleSpec {
        charge: en.number("particle.charge", 0.0)?,
        mass: en.number("particle.mass", 0.0)?,
        position: en.triple("particle.position")?,
        momentum: en.triple("particle.momentum")?,
    };
    positive("particle mass", particle.mass)?;

    let potential = en.expr("potential.V")?.expect("required");

    let gauge = match en.get("gauge.kind") {
        None => GaugeKind::Poincare,
        Some(e) => GaugeKind::parse(&e.value).ok_or_else(|| ModelError::Invalid {
            line: e.line,
            message: format!("unknown gauge `{}` (expected poincare or coulomb)", e.value),
        })?,
    };

    let numerics = Numerics {
        quadrature_nodes: en.count("numerics.quadrature_nodes", DEFAULT_QUADRATURE_NODES)?,
        poisson_tol: en.number("numerics.poisson_tol", DEFAULT_POISSON_TOL)?,
        rank_tol: en.number("numerics.rank_tol", 1e-10)?,
        fd_step: en.number("numerics.fd_step", DEFAULT_FD_STEP)?,
        max_cg_iterations: en.count("numerics.max_cg_iterations", DEFAULT_MAX_CG_ITERATIONS)?,
    };
    if numerics.quadrature_nodes < 8 {
        return Err(ModelError::Semantic(format!(
            "quadrature node count must be at least 8, got {}",
            numerics.quadrature_nodes
        )));
    }
    positive("poisson tolerance", numerics.poisson_tol)?;
    positive("rank tolerance", numerics.rank_tol)?;
    positive("finite-difference step", numerics.fd_step)?;
    if numerics.max_cg_iterations == 0 {
        return Err(ModelError::Semantic("max_cg_iterations must be at least 1".into()));
    }

    let integrator = IntegratorSpec {
        dt: en.number("integrator.dt", 1e-3)?,
        steps: en.count("integrator.steps", 1000)?,
        scheme: match en.get("integrator.scheme") {
            None => Scheme::Leapfrog,
            Some(e) => Scheme::parse(&e.value).ok_or_else(|| ModelError::Invalid {
                line: e.line,
                message: format!("unknown scheme `{}` (expected leapfrog or rk4)", e.value),
            })?,
        },
    };
    positive("time step", integrator.dt)?;

    let vacuum = Vacuum { eps0: en.number("vacuum.eps0", 1.0)?, mu0: en.number("vacuum.mu0", 1.0)? };
    positive("eps0", vacuum.eps0)?;
    positive("mu0", vacuum.mu0)?;

    let fields = parse_fields(&en)?;

    let g = Grid::new(dims, grid.spacing).map_err(|e| ModelError::Semantic(e.to_string()))?;
    if !g.in_safe_region(particle.position) {
        return Err(ModelError::Semantic(format!(
            "particle position {:?} lies outside the safe region of the grid",
            particle.position
        )));
    }

    Ok(ModelConfig { grid, particle, potential, gauge, numerics, integrator, vacuum, fields })
}

fn parse_fields(en: &Entries) -> Result<InitialFields, ModelError> {
    let names = ["a_x", "a_y", "a_z", "e_x", "e_y", "e_z"];
    let any_profile = names.iter().any(|n| en.get(&format!("fields.{n}")).is_some());
    match en.get("fields.preset") {
        Some(e) if any_profile => Err(ModelError::Invalid {
            line: e.line,
            message: "a field preset cannot be combined with field profiles".into(),
        }),
        Some(e) => {
            let preset = match e.value.as_str() {
                "vacuum" => FieldPreset::Vacuum,
                "coulomb" => FieldPreset::Coulomb,
                "random" => FieldPreset::Random { seed: en.count("fields.seed", 0)? as u64 },
                other => {
                    return Err(ModelError::Invalid {
                        line: e.line,
                        message: format!("unknown field preset `{other}` (expected vacuum, coulomb or random)"),
                    })
                }
            };
            Ok(InitialFields::Preset(preset))
        }
        None if any_profile => {
            let mut exprs = Vec::with_capacity(6);
            for n in names {
                exprs.push(en.expr(&format!("fields.{n}"))?.unwrap_or(Expr::Num(0.0)));
            }
            let e = [exprs.pop().unwrap(), exprs.pop().unwrap(), exprs.pop().unwrap()];
            let a = [exprs.pop().unwrap(), exprs.pop().unwrap(), exprs.pop().unwrap()];
            let [ez, ey, ex] = e;
            let [az, ay, ax] = a;
            Ok(InitialFields::Profiles { a: [ax, ay, az], e: [ex, ey, ez] })
        }
        None => Ok(InitialFields::Preset(FieldPreset::Coulomb)),
    }
}
