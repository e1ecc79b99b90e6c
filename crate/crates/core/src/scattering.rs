//! Orchestrated experiments confronting PDE trajectories with the
//! asymptotic predictions: dispersive decay of the sup-in-x Sobolev norm,
//! H^N constancy, matching of the pulled-back profile against the
//! resonant limit system in the slow time tau = pi ln t, and the
//! (pi/t)-effective-nonlinearity residual.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, Potential};
use crate::resonance::QuadrupleIndex;
use crate::resonant_flow::{
    integrate_limit_system, IntegrationOptions, LatticeState, ProfileState,
};
use crate::waveguide::{
    field_diagnostics, linear_flow, nonlinear_form, norm_hn, norm_linf_h1, norm_z, resonant_form,
    Discretization, Representation, Stepper, WaveDiagnostics, WaveField,
};

/// How the experiment potential is produced.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Sampled {
        m: f64,
        amplitude: f64,
        cutoff: i64,
        seed: u64,
    },
}

impl PotentialSpec {
    pub fn build(&self, dim: usize) -> Result<Potential> {
        match self {
            PotentialSpec::Zero => Potential::zero(dim),
            PotentialSpec::Sampled {
                m,
                amplitude,
                cutoff,
                seed,
            } => Potential::sample(dim, *m, *amplitude, *cutoff, *seed),
        }
    }
}

/// One torus mode of the initial profile with its complex amplitude.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct YModeAmp {
    pub mode: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// Named initial profile: eps * exp(-x^2 / (2 sigma^2)) * sum_i c_i e^{i p_i . y}.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub eps: f64,
    pub x_sigma: f64,
    pub modes: Vec<YModeAmp>,
}

impl InitialData {
    pub fn validate(&self, dim_y: usize) -> Result<()> {
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude eps = {} must be nonnegative",
                self.eps
            )));
        }
        if !(self.x_sigma.is_finite() && self.x_sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "x_sigma = {} must be positive",
                self.x_sigma
            )));
        }
        for m in &self.modes {
            if m.mode.len() != dim_y {
                return Err(Error::InvalidParameter(format!(
                    "y mode {:?} does not have dimension {dim_y}",
                    m.mode
                )));
            }
        }
        Ok(())
    }

    pub fn synthesize(&self, disc: &Arc<Discretization>) -> Result<WaveField> {
        self.validate(disc.dim_y())?;
        let n_yd = disc.n_y_total();
        let mut y_profile = vec![Complex64::ZERO; n_yd];
        for amp in &self.modes {
            let p = LatticePoint::new(&amp.mode)?;
            if disc.y_mode_index(&p).is_none() {
                return Err(Error::SupportOutsideBall(format!(
                    "y mode {p} is not representable on an N_y = {} grid",
                    disc.n_y()
                )));
            }
            let c = Complex64::new(amp.re, amp.im);
            for (m, v) in y_profile.iter_mut().enumerate() {
                let phase: f64 = (0..disc.dim_y())
                    .map(|axis| amp.mode[axis] as f64 * disc.y_coord(m, axis))
                    .sum();
                *v += c * Complex64::from_polar(1.0, phase);
            }
        }
        let mut field = WaveField::zero(disc.clone(), Representation::Physical);
        for j in 0..disc.n_x() {
            let x = disc.x_coord(j);
            let g = self.eps * (-x * x / (2.0 * self.x_sigma * self.x_sigma)).exp();
            for (m, v) in y_profile.iter().enumerate() {
                let i = field.idx(j, m);
                field.data_mut()[i] = g * v;
            }
        }
        Ok(field)
    }
}

fn default_dt() -> f64 {
    5e-3
}
fn default_coupling() -> f64 {
    1.0
}
fn default_norm_degree() -> f64 {
    8.0
}
fn default_delta() -> f64 {
    0.05
}
fn default_dtau() -> f64 {
    0.05
}
fn default_ball_leak_tol() -> f64 {
    1e-3
}

/// Full description of one experiment: grid, potential, data, stepping,
/// the dyadic checkpoint ladder and the matching parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub dim_y: usize,
    pub period: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub potential: PotentialSpec,
    pub initial: InitialData,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// First checkpoint; the ladder is t_k = t0 * 2^k.
    pub t0: f64,
    pub n_checkpoints: usize,
    /// Matching time T0 (must lie on the ladder).
    pub t_match: f64,
    #[serde(default = "default_norm_degree")]
    pub norm_degree: f64,
    /// Reporting exponent delta in (0, 1/4).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Resonance index cutoff P^2.
    pub ball_radius_sq: i64,
    /// Slow-time step of the limit-system integrator.
    #[serde(default = "default_dtau")]
    pub dtau: f64,
    /// Largest tolerated y-spectral mass fraction outside the index ball
    /// when seeding the matching profile.
    #[serde(default = "default_ball_leak_tol")]
    pub ball_leak_tol: f64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.initial.validate(self.dim_y)?;
        if !(self.t0 >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "t0 = {} must be at least 1",
                self.t0
            )));
        }
        if self.n_checkpoints == 0 {
            return Err(Error::InvalidParameter(
                "n_checkpoints must be positive".into(),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::InvalidParameter(format!(
                "coupling = {} must lie in [0, 1]",
                self.coupling
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::InvalidParameter(format!(
                "delta = {} must lie in (0, 1/4)",
                self.delta
            )));
        }
        if !(self.dtau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dtau = {} must be positive",
                self.dtau
            )));
        }
        if !(self.ball_leak_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ball_leak_tol = {} must be positive",
                self.ball_leak_tol
            )));
        }
        if self.match_index().is_none() {
            return Err(Error::InvalidParameter(format!(
                "t_match = {} is not on the checkpoint ladder",
                self.t_match
            )));
        }
        Ok(())
    }

    /// The dyadic ladder t_k = t0 * 2^k.
    pub fn checkpoints(&self) -> Vec<f64> {
        (0..self.n_checkpoints)
            .map(|k| self.t0 * (1u64 << k) as f64)
            .collect()
    }

    fn match_index(&self) -> Option<usize> {
        self.checkpoints()
            .iter()
            .position(|&t| (t - self.t_match).abs() <= 1e-9 * t)
    }
}

/// Experiment context: grid, potential and resonance index built from a plan.
pub struct Lab {
    plan: ExperimentPlan,
    disc: Arc<Discretization>,
    potential: Potential,
    index: QuadrupleIndex,
}

impl Lab {
    pub fn new(plan: ExperimentPlan) -> Result<Self> {
        plan.validate()?;
        let disc = Discretization::new(plan.dim_y, plan.period, plan.n_x, plan.n_y)?;
        let potential = plan.potential.build(plan.dim_y)?;
        let index = QuadrupleIndex::build(plan.dim_y, plan.ball_radius_sq)?;
        for p in index.ball().points() {
            if disc.y_mode_index(p).is_none() {
                return Err(Error::CutoffMismatch(format!(
                    "ball point {p} is not representable on an N_y = {} grid",
                    plan.n_y
                )));
            }
        }
        Ok(Self {
            plan,
            disc,
            potential,
            index,
        })
    }

    pub fn plan(&self) -> &ExperimentPlan {
        &self.plan
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn index(&self) -> &QuadrupleIndex {
        &self.index
    }

    pub fn initial_field(&self) -> Result<WaveField> {
        self.plan.initial.synthesize(&self.disc)
    }

    /// Advances the solution from `t_from` to `t_to`.  With the coupling
    /// off the flow is the exact diagonal propagator; otherwise Strang
    /// steps with the step snapped to divide the interval.
    fn advance(&self, u: &WaveField, t_from: f64, t_to: f64) -> Result<WaveField> {
        let span = t_to - t_from;
        if span == 0.0 {
            return Ok(u.clone());
        }
        if self.plan.coupling == 0.0 {
            return linear_flow(u, &self.potential, span);
        }
        let n = (span / self.plan.dt).round().max(1.0) as usize;
        let stepper = Stepper::new(&self.disc, &self.potential, span / n as f64, self.plan.coupling)?;
        let mut out = u.clone();
        stepper.steps(&mut out, n)?;
        Ok(out)
    }

    /// x-frequency indices sorted by the signed frequency value.
    fn xi_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.disc.n_x()).collect();
        order.sort_by(|&a, &b| self.disc.xi()[a].total_cmp(&self.disc.xi()[b]));
        order
    }

    /// Pulls the y-band-limited profile out of a Fourier-side field.
    /// Returns the profile (one lattice state per sorted x frequency) and
    /// the relative spectral mass outside the ball.
    pub fn profile_from_field(&self, f: &WaveField) -> Result<(ProfileState, f64)> {
        let ff = f.fourier_clone();
        let ball = self.index.ball();
        let n_yd = self.disc.n_y_total();
        let mode_map: Vec<usize> = ball
            .points()
            .iter()
            .map(|p| self.disc.y_mode_index(p).expect("checked in Lab::new"))
            .collect();
        let mut in_ball = vec![false; n_yd];
        for &m in &mode_map {
            in_ball[m] = true;
        }
        let mut total = 0.0;
        let mut outside = 0.0;
        for chunk in ff.data().chunks(n_yd) {
            for (m, v) in chunk.iter().enumerate() {
                let w = v.norm_sqr();
                total += w;
                if !in_ball[m] {
                    outside += w;
                }
            }
        }
        let leak = if total > 0.0 { outside / total } else { 0.0 };
        let order = self.xi_order();
        let xi: Vec<f64> = order.iter().map(|&j| self.disc.xi()[j]).collect();
        let slices = order
            .iter()
            .map(|&j| {
                let amps = mode_map
                    .iter()
                    .map(|&m| ff.data()[j * n_yd + m])
                    .collect();
                LatticeState::from_amplitudes(ball.clone(), amps)
            })
            .collect::<Result<_>>()?;
        Ok((ProfileState::new(xi, slices)?, leak))
    }

    /// Synthesizes a profile back into a Fourier-side field.
    pub fn field_from_profile(&self, profile: &ProfileState) -> Result<WaveField> {
        let order = self.xi_order();
        if profile.slices().len() != order.len() {
            return Err(Error::CutoffMismatch(format!(
                "profile has {} slices for an N_x = {} grid",
                profile.slices().len(),
                self.disc.n_x()
            )));
        }
        let ball = self.index.ball();
        let mode_map: Vec<usize> = ball
            .points()
            .iter()
            .map(|p| self.disc.y_mode_index(p).expect("checked in Lab::new"))
            .collect();
        let n_yd = self.disc.n_y_total();
        let mut field = WaveField::zero(self.disc.clone(), Representation::Fourier);
        for (slot, &j) in order.iter().enumerate() {
            let amps = profile.slices()[slot].amplitudes();
            for (b, &m) in mode_map.iter().enumerate() {
                field.data_mut()[j * n_yd + m] = amps[b];
            }
        }
        Ok(field)
    }

    fn limit_options(&self) -> IntegrationOptions {
        IntegrationOptions {
            dt: self.plan.dtau,
            checkpoint_every: usize::MAX,
            store_states: false,
        }
    }

    /// Advances the limit system by a slow-time span.
    pub fn advance_profile(&self, g: &ProfileState, dtau_span: f64) -> Result<ProfileState> {
        if dtau_span == 0.0 {
            return Ok(g.clone());
        }
        let traj = integrate_limit_system(&self.index, g, dtau_span, &self.limit_options())?;
        Ok(traj.final_state)
    }
}

/// Per-checkpoint values of a decay / constancy ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRow {
    pub t: f64,
    /// ||U(t)||_{L^inf_x H^1_y}.
    pub linf_h1: f64,
    /// ||U(t)||_{H^N}.
    pub hn: f64,
    pub diagnostics: WaveDiagnostics,
    /// Boundary guard held at this and all earlier checkpoints.
    pub trusted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRun {
    pub rows: Vec<LadderRow>,
    /// Set when the boundary guard tripped before the last checkpoint.
    pub truncated: bool,
}

impl LadderRun {
    /// Last trusted checkpoint time.
    pub fn t_trusted(&self) -> Option<f64> {
        self.rows.iter().filter(|r| r.trusted).map(|r| r.t).last()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRun {
    pub ladder: LadderRun,
    /// Log-log slope of the decay norm over the trusted window
    /// [t_trusted / 8, t_trusted].
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstancyRun {
    pub ladder: LadderRun,
    /// max/min - 1 of the H^N values over the second half of the trusted
    /// window.
    pub max_rel_deviation: Option<f64>,
}

fn record_ladder(lab: &Lab) -> Result<LadderRun> {
    let plan = lab.plan();
    let mut u = lab.initial_field()?.fourier_clone();
    let mut t_cur = 0.0;
    let mut rows = Vec::new();
    let mut trusted_so_far = true;
    for t in plan.checkpoints() {
        u = lab.advance(&u, t_cur, t)?;
        t_cur = t;
        let diagnostics = field_diagnostics(&u, lab.potential(), plan.coupling, t)?;
        trusted_so_far = trusted_so_far && !diagnostics.boundary_warning;
        rows.push(LadderRow {
            t,
            linf_h1: norm_linf_h1(&u),
            hn: norm_hn(&u, plan.norm_degree)?,
            diagnostics,
            trusted: trusted_so_far,
        });
    }
    let truncated = rows.iter().any(|r| !r.trusted);
    Ok(LadderRun { rows, truncated })
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, v)| *t > 0.0 && *v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Records the L^inf_x H^1_y decay ladder and fits its log-log slope over
/// the trusted window.
pub fn run_decay(lab: &Lab) -> Result<DecayRun> {
    let ladder = record_ladder(lab)?;
    let slope = ladder.t_trusted().and_then(|t_max| {
        let window: Vec<(f64, f64)> = ladder
            .rows
            .iter()
            .filter(|r| r.trusted && r.t >= t_max / 8.0)
            .map(|r| (r.t, r.linf_h1))
            .collect();
        loglog_slope(&window)
    });
    Ok(DecayRun { ladder, slope })
}

/// Records the H^N ladder and its relative deviation over the second half
/// of the trusted window.
pub fn run_norm_constancy(lab: &Lab) -> Result<ConstancyRun> {
    let ladder = record_ladder(lab)?;
    let max_rel_deviation = ladder.t_trusted().and_then(|t_max| {
        let window: Vec<f64> = ladder
            .rows
            .iter()
            .filter(|r| r.trusted && r.t >= t_max / 2.0)
            .map(|r| r.hn)
            .collect();
        if window.len() < 2 {
            return None;
        }
        let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = window.iter().cloned().fold(0.0f64, f64::max);
        (lo > 0.0).then(|| hi / lo - 1.0)
    });
    Ok(ConstancyRun {
        ladder,
        max_rel_deviation,
    })
}

/// Per-checkpoint profile comparison ||F(t_k) - G(pi ln t_k)||_{H^N}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchRow {
    pub t: f64,
    pub tau: f64,
    pub diff_hn: f64,
    pub trusted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchRun {
    pub rows: Vec<MatchRow>,
    /// Relative y-spectral mass outside the index ball in the matching seed.
    pub leak_fraction: f64,
    pub truncated: bool,
}

fn field_sub(a: &WaveField, b: &WaveField) -> Result<WaveField> {
    let af = a.fourier_clone();
    let bf = b.fourier_clone();
    af.check_same_disc(&bf)?;
    let data = af
        .data()
        .iter()
        .zip(bf.data())
        .map(|(x, y)| x - y)
        .collect();
    WaveField::from_samples(af.disc().clone(), data, Representation::Fourier)
}

fn compare_ladder(
    lab: &Lab,
    mut u: WaveField,
    mut g: ProfileState,
    leak_fraction: f64,
) -> Result<MatchRun> {
    let plan = lab.plan();
    let t_match = plan.t_match;
    let checkpoints: Vec<f64> = plan
        .checkpoints()
        .into_iter()
        .filter(|&t| t >= t_match * (1.0 - 1e-12))
        .collect();
    let mut rows = Vec::new();
    let mut t_cur = t_match;
    let mut trusted_so_far = true;
    for &t in &checkpoints {
        u = lab.advance(&u, t_cur, t)?;
        g = lab.advance_profile(&g, PI * (t / t_cur).ln())?;
        t_cur = t;
        let f = linear_flow(&u, lab.potential(), -t)?;
        let g_field = lab.field_from_profile(&g)?;
        let diff_hn = norm_hn(&field_sub(&f, &g_field)?, plan.norm_degree)?;
        let diagnostics = field_diagnostics(&u, lab.potential(), plan.coupling, t)?;
        trusted_so_far = trusted_so_far && !diagnostics.boundary_warning;
        rows.push(MatchRow {
            t,
            tau: PI * t.ln(),
            diff_hn,
            trusted: trusted_so_far,
        });
    }
    let truncated = rows.iter().any(|r| !r.trusted);
    Ok(MatchRun {
        rows,
        leak_fraction,
        truncated,
    })
}

/// Evolves the plan's data, seeds the limit system with the band-limited
/// profile at T0 and records the difference ladder on t >= T0.
pub fn match_profile(lab: &Lab) -> Result<MatchRun> {
    let (u, g0, leak) = matching_seed(lab)?;
    compare_ladder(lab, u, g0, leak)
}

/// Evolves the plan's data to T0 and band-limits the pulled-back profile,
/// producing the limit-system seed G0 together with the evolved field at T0
/// and the mass fraction discarded by the band limit.
pub fn matching_seed(lab: &Lab) -> Result<(WaveField, ProfileState, f64)> {
    let plan = lab.plan();
    let mut u = lab.initial_field()?.fourier_clone();
    u = lab.advance(&u, 0.0, plan.t_match)?;
    let f0 = linear_flow(&u, lab.potential(), -plan.t_match)?;
    let (g0, leak) = lab.profile_from_field(&f0)?;
    if leak > plan.ball_leak_tol {
        return Err(Error::SupportOutsideBall(format!(
            "matching seed carries mass fraction {leak:.3e} outside the P^2 = {} ball; \
             increase ball_radius_sq",
            plan.ball_radius_sq
        )));
    }
    Ok((u, g0, leak))
}

/// Starts from a limit-system datum: U(T0) = e^{i T0 D} Synth(G0), then
/// records the same difference ladder as [`match_profile`].
pub fn build_wave_operator(lab: &Lab, g0: &ProfileState) -> Result<MatchRun> {
    let u0 = lab.field_from_profile(g0)?;
    let u = linear_flow(&u0, lab.potential(), lab.plan().t_match)?;
    compare_ladder(lab, u, g0.clone(), 0.0)
}

/// Residual of the effective dynamics at one evaluation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    /// r(t) = t ||N^t[F] - (pi/t) R[F]||_Z.
    pub residual: f64,
    /// t^delta r(t) (bounded when the predicted t^{-delta} decay holds).
    pub weighted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRun {
    pub delta: f64,
    pub rows: Vec<ResidualRow>,
}

/// Compares the time-dependent trilinear form against its stationary-phase
/// limit on a frozen profile.
pub fn residual_study(
    f: &WaveField,
    times: &[f64],
    v: &Potential,
    index: &QuadrupleIndex,
    delta: f64,
) -> Result<ResidualRun> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must lie in (0, 1/4)"
        )));
    }
    if times.is_empty() || times[0] < 1.0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "times must be strictly increasing and >= 1".into(),
        ));
    }
    let r_field = resonant_form(f, f, f, index)?;
    let mut rows = Vec::new();
    for &t in times {
        let nt = nonlinear_form(f, f, f, v, t)?;
        let mut limit = r_field.clone();
        let scale = PI / t;
        limit.data_mut().iter_mut().for_each(|c| *c *= scale);
        let residual = t * norm_z(&field_sub(&nt, &limit)?);
        rows.push(ResidualRow {
            t,
            residual,
            weighted: t.powf(delta) * residual,
        });
    }
    Ok(ResidualRun { delta, rows })
}
