//! `wgnls`: reproducible driver for the waveguide NLS laboratory.
//!
//! Every invocation writes into a fresh run directory (suffixing on
//! collision) containing the emitted CSV/binary outputs and a
//! `manifest.json` with the effective config, timestamps and SHA-256
//! digests of every emitted file.
//!
//! Exit codes: 0 success, 1 numerical failsafe, 2 invalid parameters,
//! 3 I/O error.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use waveguide_nls::scattering::ExperimentPlan;
use waveguide_nls::{Error, Result};

use config::{over, PlanOverrides};
use rundir::{create_run_dir, sha256_file, write_manifest, Emitter, RunManifest};

#[derive(Parser)]
#[command(name = "wgnls", version, about = "Waveguide NLS numerical laboratory")]
struct Cli {
    /// JSON config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Worker threads; results are independent of this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct PlanFlags {
    /// Strang splitting step.
    #[arg(long)]
    dt: Option<f64>,
    /// Nonlinear coupling in [0, 1].
    #[arg(long)]
    coupling: Option<f64>,
    /// Sobolev degree N of the comparison norm.
    #[arg(long)]
    norm_degree: Option<f64>,
    /// Matching time T0 (must lie on the dyadic ladder).
    #[arg(long)]
    t_match: Option<f64>,
    /// Reporting exponent delta in (0, 1/4).
    #[arg(long)]
    delta: Option<f64>,
}

impl PlanFlags {
    fn overrides(&self) -> PlanOverrides {
        PlanOverrides {
            dt: self.dt,
            coupling: self.coupling,
            norm_degree: self.norm_degree,
            t_match: self.t_match,
            delta: self.delta,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate the resonant set over a lattice ball.
    Enumerate {
        /// Torus dimension d.
        #[arg(long)]
        d: Option<usize>,
        /// Ball radius squared.
        #[arg(long = "P2")]
        p2: Option<i64>,
    },
    /// Small-divisor audit of one sampled potential.
    Audit {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "P2")]
        p2: Option<i64>,
        /// Envelope decay exponent m.
        #[arg(long)]
        m: Option<f64>,
        /// Envelope amplitude R.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Sampling cutoff A.
        #[arg(long)]
        cutoff: Option<i64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Weight exponent gamma (allow_hyphen_values so range errors
        /// surface as exit 2 rather than a parse failure).
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
    },
    /// Monte-Carlo genericity estimate over sampled potentials.
    Genericity {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "P2")]
        p2: Option<i64>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Integrate the resonant system on seeded random ball data.
    ResonantRun {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "P2")]
        p2: Option<i64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Integrate the limit system over a frequency grid.
    LimitRun {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "P2")]
        p2: Option<i64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tau_end: Option<f64>,
        #[arg(long)]
        dtau: Option<f64>,
    },
    /// Evolve the PDE with conservation and boundary diagnostics.
    NlsRun {
        /// Data amplitude epsilon.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        coupling: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Profile matching against the limit system (forward direction).
    Match {
        #[command(flatten)]
        plan: PlanFlags,
    },
    /// Modified wave operator from a band-limited seed (backward direction).
    WaveOp {
        #[command(flatten)]
        plan: PlanFlags,
    },
    /// Residual of the effective dynamics on a frozen profile.
    Residual {
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let code = dispatch(&cli);
    ExitCode::from(code)
}

fn dispatch(cli: &Cli) -> u8 {
    let config_path = cli.config.as_deref();
    match &cli.cmd {
        Cmd::Enumerate { d, p2 } => run(cli, "enumerate", || {
            let mut cfg: config::EnumerateConfig = config::load(config_path)?;
            over(&mut cfg.dim, *d);
            over(&mut cfg.radius_sq, *p2);
            Ok(cfg)
        }, commands::run_enumerate),
        Cmd::Audit { d, p2, m, amplitude, cutoff, seed, gamma } => run(cli, "audit", || {
            let mut cfg: config::AuditConfig = config::load(config_path)?;
            over(&mut cfg.dim, *d);
            over(&mut cfg.radius_sq, *p2);
            over(&mut cfg.m, *m);
            over(&mut cfg.amplitude, *amplitude);
            over(&mut cfg.cutoff, *cutoff);
            over(&mut cfg.seed, *seed);
            over(&mut cfg.gamma, *gamma);
            Ok(cfg)
        }, commands::run_audit),
        Cmd::Genericity { d, p2, n_samples, seed, gamma, threshold } => run(cli, "genericity", || {
            let mut cfg: config::GenericityConfig = config::load(config_path)?;
            over(&mut cfg.dim, *d);
            over(&mut cfg.radius_sq, *p2);
            over(&mut cfg.n_samples, *n_samples);
            over(&mut cfg.seed, *seed);
            over(&mut cfg.gamma, *gamma);
            over(&mut cfg.threshold, *threshold);
            Ok(cfg)
        }, commands::run_genericity),
        Cmd::ResonantRun { d, p2, seed, t_end, dt } => run(cli, "resonant-run", || {
            let mut cfg: config::ResonantRunConfig = config::load(config_path)?;
            over(&mut cfg.dim, *d);
            over(&mut cfg.radius_sq, *p2);
            over(&mut cfg.seed, *seed);
            over(&mut cfg.t_end, *t_end);
            over(&mut cfg.dt, *dt);
            Ok(cfg)
        }, commands::run_resonant),
        Cmd::LimitRun { d, p2, seed, tau_end, dtau } => run(cli, "limit-run", || {
            let mut cfg: config::LimitRunConfig = config::load(config_path)?;
            over(&mut cfg.dim, *d);
            over(&mut cfg.radius_sq, *p2);
            over(&mut cfg.seed, *seed);
            over(&mut cfg.tau_end, *tau_end);
            over(&mut cfg.dtau, *dtau);
            Ok(cfg)
        }, commands::run_limit),
        Cmd::NlsRun { eps, dt, coupling, t_end } => run(cli, "nls-run", || {
            let mut cfg: config::NlsRunConfig = config::load(config_path)?;
            over(&mut cfg.initial.eps, *eps);
            over(&mut cfg.dt, *dt);
            over(&mut cfg.coupling, *coupling);
            over(&mut cfg.t_end, *t_end);
            Ok(cfg)
        }, commands::run_nls),
        Cmd::Match { plan } => run(cli, "match", || {
            let mut cfg: ExperimentPlan = config::load_required(config_path)?;
            config::apply_plan_overrides(&mut cfg, &plan.overrides());
            Ok(cfg)
        }, commands::run_match),
        Cmd::WaveOp { plan } => run(cli, "wave-op", || {
            let mut cfg: ExperimentPlan = config::load_required(config_path)?;
            config::apply_plan_overrides(&mut cfg, &plan.overrides());
            Ok(cfg)
        }, commands::run_wave_op),
        Cmd::Residual { delta } => run(cli, "residual", || {
            let mut cfg: config::ResidualConfig = config::load(config_path)?;
            over(&mut cfg.delta, *delta);
            Ok(cfg)
        }, commands::run_residual),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalFailsafe(_) => 1,
        Error::Io(_) | Error::Json(_) | Error::CorruptCache(_) => 3,
        _ => 2,
    }
}

fn run<C, L, F>(cli: &Cli, name: &str, load: L, body: F) -> u8
where
    C: Serialize,
    L: FnOnce() -> Result<C>,
    F: FnOnce(&C, &mut Emitter) -> Result<()>,
{
    // Configuration problems fail fast, before any directory is created.
    let cfg = match load() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("wgnls {name}: {e}");
            return exit_code(&e);
        }
    };
    let config_echo = match serde_json::to_value(&cfg) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("wgnls {name}: {e}");
            return 3;
        }
    };
    let dir = match create_run_dir(&cli.out, name) {
        Ok(dir) => dir,
        Err(e) => {
            eprintln!("wgnls {name}: {e}");
            return 3;
        }
    };
    let mut inputs = Vec::new();
    if let Some(path) = cli.config.as_deref() {
        match sha256_file(path) {
            Ok(d) => inputs.push(d),
            Err(e) => {
                eprintln!("wgnls {name}: {e}");
                return 3;
            }
        }
    }

    let started = chrono::Utc::now().to_rfc3339();
    let mut emitter = Emitter::new(dir.clone());
    let result = body(&cfg, &mut emitter);
    let finished = chrono::Utc::now().to_rfc3339();

    let (status, code) = match &result {
        Ok(()) => ("ok".to_string(), 0u8),
        Err(e) => {
            // Partial outputs are removed; the manifest records the abort.
            emitter.remove_all();
            eprintln!("wgnls {name}: {e}");
            (e.to_string(), exit_code(e))
        }
    };

    let mut outputs = Vec::new();
    for path in emitter.files() {
        match sha256_file(path) {
            Ok(d) => outputs.push(d),
            Err(e) => {
                eprintln!("wgnls {name}: {e}");
                return 3;
            }
        }
    }
    let manifest = RunManifest {
        subcommand: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished,
        status,
        config: config_echo,
        inputs,
        outputs,
    };
    if let Err(e) = write_manifest(&dir, &manifest) {
        eprintln!("wgnls {name}: {e}");
        return 3;
    }
    if code == 0 {
        println!("{}", dir.display());
    }
    code
}
