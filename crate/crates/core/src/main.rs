use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emdirac::constraints::{classify, constraint_matrix, write_matrix_dump, Constraint, ConstraintClass};
use emdirac::dynamics::{constraint_monitor, hamiltonian_flow, write_fields, write_trajectory, FlowOptions};
use emdirac::hamiltonians::{Hamiltonian, HamiltonianKind};
use emdirac::model::{parse_model, ModelConfig};
use emdirac::report::{emit_report, initial_state, potential_of, run_suite, Format, Report, Suite};
use emdirac::{Error, Result};

#[derive(Parser)]
#[command(name = "emdirac", version, about = "Constrained Hamiltonian dynamics of a point charge and its field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a claim suite and write a report; exits nonzero if any claim fails.
    Verify {
        #[arg(long)]
        model: PathBuf,
        /// all, momentum, constraints, pzw or dynamics.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// json or csv.
        #[arg(long, default_value = "json")]
        format: String,
        /// Record wall-clock runtimes (reports are then no longer byte-stable).
        #[arg(long)]
        timings: bool,
    },
    /// Integrate the model and write PREFIX.traj.txt and PREFIX.fields.bin.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the constraint matrix of the model's initial state.
    Bracket {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dump: PathBuf,
    },
}

fn load(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(parse_model(&text)?)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn verify(model: &Path, suite: &str, report: &Path, seed: u64, format: &str, timings: bool) -> Result<bool> {
    let suite = Suite::parse(suite).ok_or_else(|| Error::InvalidArgument(format!("unknown suite `{suite}`")))?;
    let format = Format::parse(format).ok_or_else(|| Error::InvalidArgument(format!("unknown format `{format}`")))?;
    let cfg = load(model)?;
    let claims = run_suite(&cfg, suite, seed, timings)?;
    for c in &claims {
        println!("{} {} measured={:e} threshold={:e}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.measured, c.threshold);
    }
    let r = Report::new(&cfg, seed, claims);
    emit_report(&r, format, report)?;
    Ok(r.all_pass())
}

fn simulate(model: &Path, out: &Path) -> Result<bool> {
    let cfg = load(model)?;
    let s0 = initial_state(&cfg)?;
    let n = &cfg.numerics;
    let h = Hamiltonian::new(HamiltonianKind::MinimalCouplingFinal, potential_of(&cfg), n.quadrature_nodes, n.fd_step);
    let i = &cfg.integrator;
    let opts = FlowOptions::new(i.dt, i.steps, i.scheme).gauge(cfg.gauge);
    let t = hamiltonian_flow(&s0, &h, &opts)?;
    write_trajectory(&t, &with_suffix(out, ".traj.txt"))?;
    write_fields(t.last(), &with_suffix(out, ".fields.bin"))?;
    let mon = constraint_monitor(&t, n.poisson_tol.max(1e-8));
    println!(
        "steps={} energy_drift={:e} gauss_initial={:e} gauss_growth={:e}",
        t.times.len() - 1,
        t.energy_drift(),
        mon.initial,
        mon.growth
    );
    if let Some(f) = &t.failure {
        eprintln!("flow stopped early: {f}");
        return Ok(false);
    }
    Ok(true)
}

fn bracket(model: &Path, dump: &Path) -> Result<bool> {
    let cfg = load(model)?;
    let s = initial_state(&cfg)?;
    let m = constraint_matrix(&Constraint::table(), &s)?;
    let cls = classify(&m, cfg.numerics.rank_tol)?;
    let file = File::create(dump).map_err(|source| Error::Io { path: dump.to_path_buf(), source })?;
    write_matrix_dump(&mut BufWriter::new(file), &m, &cls).map_err(|source| Error::Io { path: dump.to_path_buf(), source })?;
    println!(
        "constraints={} rank={} first={} second={} mixed={} ambiguous={}",
        m.len(),
        cls.rank,
        cls.count(ConstraintClass::First),
        cls.count(ConstraintClass::Second),
        cls.count(ConstraintClass::Mixed),
        cls.ambiguous
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify { model, suite, report, seed, format, timings } => {
            verify(model, suite, report, *seed, format, *timings)
        }
        Command::Simulate { model, out } => simulate(model, out),
        Command::Bracket { model, dump } => bracket(model, dump),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
