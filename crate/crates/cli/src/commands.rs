//! Subcommand implementations: each consumes a validated config and writes
//! its outputs through an [`Emitter`].

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waveguide_nls::lattice::Potential;
use waveguide_nls::resonance::{Ball, QuadrupleIndex};
use waveguide_nls::resonant_flow::{
    integrate_limit_system, integrate_resonant, ConservedSet, IntegrationOptions, LatticeState,
    ProfileState,
};
use waveguide_nls::scattering::{
    build_wave_operator, match_profile, matching_seed, residual_study, ExperimentPlan, Lab,
    MatchRun,
};
use waveguide_nls::smalldiv::{audit, genericity_estimate};
use waveguide_nls::waveguide::{evolve, Discretization, EvolveOptions};
use waveguide_nls::Result;

use crate::config::{
    AuditConfig, EnumerateConfig, GenericityConfig, LimitRunConfig, NlsRunConfig,
    ResidualConfig, ResonantRunConfig,
};
use crate::rundir::{csv_record, fmt_f64, Emitter};

fn point_header(dim: usize) -> Vec<String> {
    ["p", "q", "r", "s"]
        .iter()
        .flat_map(|name| (1..=dim).map(move |axis| format!("{name}_{axis}")))
        .collect()
}

pub fn run_enumerate(cfg: &EnumerateConfig, em: &mut Emitter) -> Result<()> {
    let index = QuadrupleIndex::build(cfg.dim, cfg.radius_sq)?;

    let mut csv = csv_record(&point_header(cfg.dim));
    for quad in index.iter_points() {
        let fields: Vec<String> = quad
            .iter()
            .flat_map(|p| p.coords().iter().map(|c| c.to_string()))
            .collect();
        csv.push_str(&csv_record(&fields));
    }
    em.emit("gamma0.csv", csv.as_bytes())?;

    let summary = csv_record(&["ball_points".into(), "gamma0_quadruples".into()])
        + &csv_record(&[index.ball().len().to_string(), index.len().to_string()]);
    em.emit("summary.csv", summary.as_bytes())?;

    em.emit_with("gamma0.qidx", |path| index.write_cache_file(path))
}

pub fn run_audit(cfg: &AuditConfig, em: &mut Emitter) -> Result<()> {
    let potential = Potential::sample(cfg.dim, cfg.m, cfg.amplitude, cfg.cutoff, cfg.seed)?;
    let report = audit(&potential, cfg.radius_sq, cfg.gamma)?;

    let mut header = vec![
        "seed".into(),
        "radius_sq".into(),
        "gamma".into(),
        "scanned".into(),
        "min_weighted_divisor".into(),
    ];
    header.extend(point_header(cfg.dim).into_iter().map(|h| format!("witness_{h}")));
    let mut row = vec![
        cfg.seed.to_string(),
        cfg.radius_sq.to_string(),
        fmt_f64(cfg.gamma),
        report.scanned.to_string(),
        report.min_weighted_divisor.map(fmt_f64).unwrap_or_default(),
    ];
    match &report.worst_quadruple {
        Some(w) => row.extend(
            w.points()
                .iter()
                .flat_map(|p| p.coords().iter().map(|c| c.to_string()))
                .collect::<Vec<_>>(),
        ),
        None => row.extend(std::iter::repeat(String::new()).take(4 * cfg.dim)),
    }
    let csv = csv_record(&header) + &csv_record(&row);
    em.emit("report.csv", csv.as_bytes())?;

    let h = &report.histogram;
    let mut hist = csv_record(&[
        "bin".into(),
        "log10_lo".into(),
        "log10_hi".into(),
        "count".into(),
    ]);
    hist.push_str(&csv_record(&[
        "underflow".into(),
        String::new(),
        String::new(),
        h.underflow.to_string(),
    ]));
    for (i, count) in h.counts.iter().enumerate() {
        let lo = h.log10_min + i as f64 * h.bin_width;
        hist.push_str(&csv_record(&[
            i.to_string(),
            fmt_f64(lo),
            fmt_f64(lo + h.bin_width),
            count.to_string(),
        ]));
    }
    hist.push_str(&csv_record(&[
        "overflow".into(),
        String::new(),
        String::new(),
        h.overflow.to_string(),
    ]));
    em.emit("histogram.csv", hist.as_bytes())
}

pub fn run_genericity(cfg: &GenericityConfig, em: &mut Emitter) -> Result<()> {
    let estimate = genericity_estimate(
        cfg.dim,
        cfg.m,
        cfg.amplitude,
        cfg.cutoff,
        cfg.radius_sq,
        cfg.gamma,
        cfg.threshold,
        cfg.n_samples,
        cfg.seed,
    )?;

    let mut samples = csv_record(&[
        "sample".into(),
        "seed".into(),
        "min_weighted_divisor".into(),
    ]);
    for (i, (seed, min)) in estimate.samples.iter().enumerate() {
        samples.push_str(&csv_record(&[
            i.to_string(),
            seed.to_string(),
            min.map(fmt_f64).unwrap_or_default(),
        ]));
    }
    em.emit("samples.csv", samples.as_bytes())?;

    let summary = csv_record(&[
        "n_samples".into(),
        "passes".into(),
        "fraction".into(),
        "wilson_low".into(),
        "wilson_high".into(),
        "threshold".into(),
        "gamma".into(),
    ]) + &csv_record(&[
        estimate.n_samples.to_string(),
        estimate.passes.to_string(),
        fmt_f64(estimate.fraction),
        fmt_f64(estimate.wilson_low),
        fmt_f64(estimate.wilson_high),
        fmt_f64(estimate.threshold),
        fmt_f64(estimate.gamma),
    ]);
    em.emit("summary.csv", summary.as_bytes())
}

/// Random ball data with amplitudes damped by 1/(1+|p|^2).
fn random_state(ball: std::sync::Arc<Ball>, seed: u64, scale: f64) -> LatticeState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = ball
        .points()
        .iter()
        .map(|p| {
            let damp = scale / (1.0 + p.norm_sq() as f64);
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * damp
        })
        .collect();
    LatticeState::from_amplitudes(ball, amps).expect("amplitude count matches ball")
}

fn conserved_header(first: &ConservedSet, prefix: &str) -> Vec<String> {
    let mut header = vec![
        format!("{prefix}time"),
        "mass".into(),
        "energy".into(),
        "hamiltonian_re".into(),
        "hamiltonian_im".into(),
    ];
    header.extend(first.shell_masses.keys().map(|n| format!("shell_{n}")));
    header
}

fn conserved_row(time: f64, c: &ConservedSet, extra: &[String]) -> Vec<String> {
    let mut row = extra.to_vec();
    row.push(fmt_f64(time));
    row.push(fmt_f64(c.mass));
    row.push(fmt_f64(c.energy));
    row.push(fmt_f64(c.hamiltonian));
    row.push(fmt_f64(c.hamiltonian_imag));
    row.extend(c.shell_masses.values().map(|v| fmt_f64(*v)));
    row
}

pub fn run_resonant(cfg: &ResonantRunConfig, em: &mut Emitter) -> Result<()> {
    let index = QuadrupleIndex::build(cfg.dim, cfg.radius_sq)?;
    let state = random_state(index.ball().clone(), cfg.seed, cfg.scale);
    let options = IntegrationOptions {
        dt: cfg.dt,
        checkpoint_every: cfg.checkpoint_every,
        store_states: false,
    };
    let trajectory = integrate_resonant(&index, &state, cfg.t_end, &options)?;

    let mut csv = csv_record(&conserved_header(&trajectory.conserved[0], ""));
    for (t, c) in trajectory.times.iter().zip(&trajectory.conserved) {
        csv.push_str(&csv_record(&conserved_row(*t, c, &[])));
    }
    em.emit("conserved.csv", csv.as_bytes())
}

pub fn run_limit(cfg: &LimitRunConfig, em: &mut Emitter) -> Result<()> {
    let index = QuadrupleIndex::build(cfg.dim, cfg.radius_sq)?;
    let xi: Vec<f64> = if cfg.n_xi == 1 {
        vec![0.0]
    } else {
        (0..cfg.n_xi)
            .map(|i| -cfg.xi_max + 2.0 * cfg.xi_max * i as f64 / (cfg.n_xi - 1) as f64)
            .collect()
    };
    let slices = (0..cfg.n_xi)
        .map(|i| random_state(index.ball().clone(), cfg.seed.wrapping_add(i as u64), cfg.scale))
        .collect();
    let profile = ProfileState::new(xi, slices)?;
    let options = IntegrationOptions {
        dt: cfg.dtau,
        checkpoint_every: cfg.checkpoint_every,
        store_states: false,
    };
    let trajectory = integrate_limit_system(&index, &profile, cfg.tau_end, &options)?;

    let mut header = vec!["slice".into(), "xi".into()];
    header.extend(conserved_header(&trajectory.per_slice[0].conserved[0], "tau_"));
    let mut csv = csv_record(&header);
    for (i, slice) in trajectory.per_slice.iter().enumerate() {
        let extra = [i.to_string(), fmt_f64(trajectory.xi[i])];
        for (t, c) in slice.times.iter().zip(&slice.conserved) {
            csv.push_str(&csv_record(&conserved_row(*t, c, &extra)));
        }
    }
    em.emit("conserved.csv", csv.as_bytes())
}

pub fn run_nls(cfg: &NlsRunConfig, em: &mut Emitter) -> Result<()> {
    let disc = Discretization::new(cfg.dim_y, cfg.period, cfg.n_x, cfg.n_y)?;
    let potential = cfg.potential.build(cfg.dim_y)?;
    let u0 = cfg.initial.synthesize(&disc)?;
    let options = EvolveOptions {
        t_end: cfg.t_end,
        dt: cfg.dt,
        coupling: cfg.coupling,
        checkpoint_every: cfg.checkpoint_every,
        store_states: false,
    };
    let trajectory = evolve(&u0, &potential, &options)?;

    let mut csv = csv_record(&[
        "time".into(),
        "mass".into(),
        "energy".into(),
        "boundary_fraction".into(),
        "boundary_warning".into(),
    ]);
    for d in &trajectory.diagnostics {
        csv.push_str(&csv_record(&[
            fmt_f64(d.time),
            fmt_f64(d.mass),
            fmt_f64(d.energy),
            fmt_f64(d.boundary_fraction),
            (d.boundary_warning as u8).to_string(),
        ]));
    }
    em.emit("diagnostics.csv", csv.as_bytes())?;

    if cfg.save_field {
        em.emit_with("final_field.wgf", |path| {
            trajectory.final_field.write_snapshot_file(path)
        })?;
    }
    Ok(())
}

fn emit_match_run(run: &MatchRun, leak: f64, em: &mut Emitter) -> Result<()> {
    let mut csv = csv_record(&[
        "t".into(),
        "tau".into(),
        "diff_hn".into(),
        "trusted".into(),
    ]);
    for row in &run.rows {
        csv.push_str(&csv_record(&[
            fmt_f64(row.t),
            fmt_f64(row.tau),
            fmt_f64(row.diff_hn),
            (row.trusted as u8).to_string(),
        ]));
    }
    em.emit("ladder.csv", csv.as_bytes())?;

    let summary = csv_record(&["leak_fraction".into(), "truncated".into()])
        + &csv_record(&[fmt_f64(leak), (run.truncated as u8).to_string()]);
    em.emit("summary.csv", summary.as_bytes())
}

pub fn run_match(plan: &ExperimentPlan, em: &mut Emitter) -> Result<()> {
    let lab = Lab::new(plan.clone())?;
    let run = match_profile(&lab)?;
    let leak = run.leak_fraction;
    emit_match_run(&run, leak, em)
}

pub fn run_wave_op(plan: &ExperimentPlan, em: &mut Emitter) -> Result<()> {
    let lab = Lab::new(plan.clone())?;
    let (_, g0, leak) = matching_seed(&lab)?;
    let run = build_wave_operator(&lab, &g0)?;
    emit_match_run(&run, leak, em)
}

pub fn run_residual(cfg: &ResidualConfig, em: &mut Emitter) -> Result<()> {
    let disc = Discretization::new(cfg.dim_y, cfg.period, cfg.n_x, cfg.n_y)?;
    let potential = cfg.potential.build(cfg.dim_y)?;
    let profile = cfg.initial.synthesize(&disc)?;
    let index = QuadrupleIndex::build(cfg.dim_y, cfg.ball_radius_sq)?;
    let run = residual_study(&profile, &cfg.times, &potential, &index, cfg.delta)?;

    let mut csv = csv_record(&["t".into(), "residual".into(), "weighted".into()]);
    for row in &run.rows {
        csv.push_str(&csv_record(&[
            fmt_f64(row.t),
            fmt_f64(row.residual),
            fmt_f64(row.weighted),
        ]));
    }
    em.emit("residual.csv", csv.as_bytes())
}
