//! The resonant trilinear operator and conservative integration of the
//! limit system, with every first integral monitored along trajectories:
//! mass, energy, per-shell masses and the quartic Hamiltonian.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{resonant_unchecked, LatticePoint};
use crate::resonance::{Ball, QuadrupleIndex};

/// Relative mass drift beyond which the integrator aborts (step size too
/// large for the requested trajectory).
pub const MASS_FAILSAFE: f64 = 1e-3;

/// Complex amplitudes on a lattice ball.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    ball: Arc<Ball>,
    amps: Vec<Complex64>,
}

impl LatticeState {
    pub fn zero(ball: Arc<Ball>) -> Self {
        let n = ball.len();
        Self {
            ball,
            amps: vec![Complex64::ZERO; n],
        }
    }

    pub fn from_amplitudes(ball: Arc<Ball>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != ball.len() {
            return Err(Error::CutoffMismatch(format!(
                "{} amplitudes for a ball of {} points",
                amps.len(),
                ball.len()
            )));
        }
        Ok(Self { ball, amps })
    }

    pub fn ball(&self) -> &Arc<Ball> {
        &self.ball
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn get(&self, p: &LatticePoint) -> Option<Complex64> {
        self.ball.index_of(p).map(|i| self.amps[i as usize])
    }

    pub fn set(&mut self, p: &LatticePoint, value: Complex64) -> Result<()> {
        match self.ball.index_of(p) {
            Some(i) => {
                self.amps[i as usize] = value;
                Ok(())
            }
            None => Err(Error::SupportOutsideBall(format!(
                "{p} outside ball P^2 = {}",
                self.ball.radius_sq()
            ))),
        }
    }

    pub fn mass(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Discrete Sobolev norm squared sum (1 + |p|^2)^s |a_p|^2.
    pub fn hs_norm_sq(&self, s: f64) -> f64 {
        self.ball
            .points()
            .iter()
            .zip(&self.amps)
            .map(|(p, a)| (1.0 + p.norm_sq() as f64).powf(s) * a.norm_sqr())
            .sum()
    }

    pub fn conjugate(&self) -> Self {
        Self {
            ball: self.ball.clone(),
            amps: self.amps.iter().map(|a| a.conj()).collect(),
        }
    }

    fn check_compatible(&self, index: &QuadrupleIndex) -> Result<()> {
        if !Arc::ptr_eq(self.ball(), index.ball()) && *self.ball().as_ref() != **index.ball() {
            return Err(Error::CutoffMismatch(format!(
                "state ball (d={}, P^2={}) does not match index ball (d={}, P^2={})",
                self.ball.dim(),
                self.ball.radius_sq(),
                index.dim(),
                index.radius_sq()
            )));
        }
        Ok(())
    }
}

/// b_p = sum over the resonant fiber of a_q conj(a_r) a_s.
pub fn eval_r(index: &QuadrupleIndex, a: &LatticeState) -> Result<LatticeState> {
    eval_r3(index, a, a, a)
}

/// Trilinear resonant sum with three independent inputs:
/// b_p = sum F_q conj(G_r) H_s over the fiber of p.
pub fn eval_r3(
    index: &QuadrupleIndex,
    f: &LatticeState,
    g: &LatticeState,
    h: &LatticeState,
) -> Result<LatticeState> {
    f.check_compatible(index)?;
    g.check_compatible(index)?;
    h.check_compatible(index)?;
    let fa = f.amplitudes();
    let ga = g.amplitudes();
    let ha = h.amplitudes();
    // Each target sums its fiber sequentially; targets are independent, so
    // the result does not depend on the thread count.  Small balls are not
    // worth the parallel dispatch.
    let fiber_sum = |p: u32| {
        let mut acc = Complex64::ZERO;
        for &[q, r, s] in index.fiber(p) {
            acc += fa[q as usize] * ga[r as usize].conj() * ha[s as usize];
        }
        acc
    };
    let n = f.ball().len() as u32;
    let amps: Vec<Complex64> = if index.len() < 1 << 14 {
        (0..n).map(fiber_sum).collect()
    } else {
        (0..n).into_par_iter().map(fiber_sum).collect()
    };
    Ok(LatticeState {
        ball: f.ball().clone(),
        amps,
    })
}

/// Direct-filter oracle for [`eval_r`]: triple loop over the support with
/// the exact resonance test. Test use only.
pub fn eval_r_bruteforce(a: &LatticeState) -> LatticeState {
    let ball = a.ball();
    let support: Vec<u32> = (0..ball.len() as u32)
        .filter(|&i| a.amplitudes()[i as usize] != Complex64::ZERO)
        .collect();
    let mut out = LatticeState::zero(ball.clone());
    for &qi in &support {
        let q = ball.point(qi);
        for &ri in &support {
            let r = ball.point(ri);
            let qr = q.sub(&r);
            for &si in &support {
                let s = ball.point(si);
                let p = qr.add(&s);
                let Some(pi) = ball.index_of(&p) else { continue };
                if resonant_unchecked(&p, &q, &r, &s) {
                    out.amps[pi as usize] += a.amplitudes()[qi as usize]
                        * a.amplitudes()[ri as usize].conj()
                        * a.amplitudes()[si as usize];
                }
            }
        }
    }
    out
}

/// First integrals of the resonant flow at one instant.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConservedSet {
    pub mass: f64,
    pub energy: f64,
    /// Shell masses A_N^2 for every occupied shell {|p|^2 = N}.
    pub shell_masses: BTreeMap<i64, f64>,
    /// Real part of the quartic Hamiltonian sum over the resonant set.
    pub hamiltonian: f64,
    /// Imaginary residue of the Hamiltonian sum (round-off diagnostic).
    pub hamiltonian_imag: f64,
}

impl ConservedSet {
    /// Discrete h^s norm squared reconstructed from the shell masses.
    pub fn hs_norm_sq(&self, s: f64) -> f64 {
        self.shell_masses
            .iter()
            .map(|(&n, &m)| (1.0 + n as f64).powf(s) * m)
            .sum()
    }
}

pub fn conserved_set(index: &QuadrupleIndex, a: &LatticeState) -> Result<ConservedSet> {
    a.check_compatible(index)?;
    let mut mass = 0.0;
    let mut energy = 0.0;
    let mut shell_masses: BTreeMap<i64, f64> = BTreeMap::new();
    for (p, amp) in a.ball().points().iter().zip(a.amplitudes()) {
        let m = amp.norm_sqr();
        if m == 0.0 {
            continue;
        }
        mass += m;
        energy += p.norm_sq() as f64 * m;
        *shell_masses.entry(p.norm_sq()).or_insert(0.0) += m;
    }
    // H = sum_{Gamma_0} a_p conj(a_q) a_r conj(a_s) = sum_p a_p conj(b_p).
    let b = eval_r(index, a)?;
    let ham: Complex64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(ap, bp)| ap * bp.conj())
        .sum();
    Ok(ConservedSet {
        mass,
        energy,
        shell_masses,
        hamiltonian: ham.re,
        hamiltonian_imag: ham.im,
    })
}

/// One checkpointed trajectory of the resonant system.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub conserved: Vec<ConservedSet>,
    /// Checkpointed states (present when requested).
    pub states: Vec<LatticeState>,
    pub final_state: LatticeState,
}

/// Integration controls for [`integrate_resonant`].
#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    pub dt: f64,
    /// Record conserved quantities every this many steps (and at the end).
    pub checkpoint_every: usize,
    /// Keep checkpointed states in the trajectory.
    pub store_states: bool,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            checkpoint_every: 100,
            store_states: false,
        }
    }
}

/// Integrates i da/dt = R[a, a, a] with the classical explicit fourth-order
/// one-step method, recording the conserved set at every checkpoint.
///
/// Aborts with a failsafe error when the relative mass drift exceeds
/// [`MASS_FAILSAFE`] (the step size is too large for the data).
pub fn integrate_resonant(
    index: &QuadrupleIndex,
    initial: &LatticeState,
    t_end: f64,
    options: &IntegrationOptions,
) -> Result<Trajectory> {
    if !(options.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt = {} must be positive",
            options.dt
        )));
    }
    if t_end < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "t_end = {t_end} must be nonnegative"
        )));
    }
    initial.check_compatible(index)?;

    let n_steps = (t_end / options.dt).round() as usize;
    let dt = if n_steps > 0 { t_end / n_steps as f64 } else { options.dt };
    let mut state = initial.clone();
    let mass0 = state.mass();

    let mut times = vec![0.0];
    let mut conserved = vec![conserved_set(index, &state)?];
    let mut states = Vec::new();
    if options.store_states {
        states.push(state.clone());
    }

    // da/dt = -i R[a].
    let derivative = |s: &LatticeState| -> Result<LatticeState> {
        let mut b = eval_r(index, s)?;
        for v in b.amps.iter_mut() {
            *v *= -Complex64::I;
        }
        Ok(b)
    };

    for step in 1..=n_steps {
        let k1 = derivative(&state)?;
        let k2 = derivative(&axpy(&state, dt / 2.0, &k1))?;
        let k3 = derivative(&axpy(&state, dt / 2.0, &k2))?;
        let k4 = derivative(&axpy(&state, dt, &k3))?;
        for i in 0..state.amps.len() {
            state.amps[i] += (dt / 6.0)
                * (k1.amps[i] + 2.0 * k2.amps[i] + 2.0 * k3.amps[i] + k4.amps[i]);
        }

        let at_checkpoint = step % options.checkpoint_every == 0 || step == n_steps;
        if at_checkpoint {
            let t = step as f64 * dt;
            if mass0 > 0.0 {
                let drift = (state.mass() - mass0).abs() / mass0;
                if drift > MASS_FAILSAFE {
                    return Err(Error::NumericalFailsafe(format!(
                        "relative mass drift {drift:.3e} at t = {t} exceeds {MASS_FAILSAFE:.0e}; \
                         reduce the step size"
                    )));
                }
            }
            times.push(t);
            conserved.push(conserved_set(index, &state)?);
            if options.store_states {
                states.push(state.clone());
            }
        }
    }

    Ok(Trajectory {
        times,
        conserved,
        states,
        final_state: state,
    })
}

fn axpy(base: &LatticeState, factor: f64, delta: &LatticeState) -> LatticeState {
    let amps = base
        .amps
        .iter()
        .zip(&delta.amps)
        .map(|(b, d)| b + factor * d)
        .collect();
    LatticeState {
        ball: base.ball.clone(),
        amps,
    }
}

/// Amplitudes indexed by a parametric frequency grid: one lattice state per
/// grid point, all sharing a ball cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileState {
    xi: Vec<f64>,
    slices: Vec<LatticeState>,
}

impl ProfileState {
    pub fn new(xi: Vec<f64>, slices: Vec<LatticeState>) -> Result<Self> {
        if xi.len() != slices.len() {
            return Err(Error::InvalidParameter(format!(
                "{} grid points but {} slices",
                xi.len(),
                slices.len()
            )));
        }
        if xi.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        if let Some(first) = slices.first() {
            for s in &slices {
                if s.ball().radius_sq() != first.ball().radius_sq()
                    || s.ball().dim() != first.ball().dim()
                {
                    return Err(Error::CutoffMismatch(
                        "all slices must share one ball cutoff".into(),
                    ));
                }
            }
        }
        Ok(Self { xi, slices })
    }

    pub fn xi_grid(&self) -> &[f64] {
        &self.xi
    }

    pub fn slices(&self) -> &[LatticeState] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [LatticeState] {
        &mut self.slices
    }
}

/// Per-slice trajectory of the parametric limit system.
#[derive(Debug, Clone)]
pub struct ProfileTrajectory {
    pub xi: Vec<f64>,
    pub per_slice: Vec<Trajectory>,
    pub final_state: ProfileState,
}

/// Applies [`integrate_resonant`] independently on every frequency slice
/// (the parametric dependence of the limit system).
pub fn integrate_limit_system(
    index: &QuadrupleIndex,
    initial: &ProfileState,
    tau_end: f64,
    options: &IntegrationOptions,
) -> Result<ProfileTrajectory> {
    let per_slice: Vec<Trajectory> = initial
        .slices
        .par_iter()
        .map(|slice| integrate_resonant(index, slice, tau_end, options))
        .collect::<Result<_>>()?;
    let final_slices = per_slice.iter().map(|t| t.final_state.clone()).collect();
    let final_state = ProfileState::new(initial.xi.clone(), final_slices)?;
    Ok(ProfileTrajectory {
        xi: initial.xi.clone(),
        per_slice,
        final_state,
    })
}
