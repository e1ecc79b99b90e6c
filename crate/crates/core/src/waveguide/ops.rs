//! Flows and trilinear forms on wave fields: the exact linear propagator,
//! Strang-split stepping of the cubic equation with conservation
//! diagnostics, and the time-dependent / resonance-restricted trilinear
//! forms compared by the effective-dynamics experiments.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::Potential;
use crate::resonance::QuadrupleIndex;

use super::{Discretization, Representation, WaveField};

/// Boundary-mass fraction above which the periodization is no longer a
/// faithful stand-in for the real line.
pub const BOUNDARY_WARN_FRACTION: f64 = 0.01;

/// Relative out-of-ball spectral mass tolerated by [`resonant_form`]
/// (covers transform round-off on exactly band-limited data).
const BALL_LEAK_TOL: f64 = 1e-20;

fn check_potential(disc: &Discretization, v: &Potential) -> Result<()> {
    if v.dim() != disc.dim_y() {
        return Err(Error::CutoffMismatch(format!(
            "potential dimension {} does not match torus dimension {}",
            v.dim(),
            disc.dim_y()
        )));
    }
    if v.cutoff() > (disc.n_y() / 2) as i64 {
        return Err(Error::CutoffMismatch(format!(
            "potential cutoff {} exceeds N_y/2 = {}",
            v.cutoff(),
            disc.n_y() / 2
        )));
    }
    Ok(())
}

/// Eigenvalues lambda_p = -|p|^2 + v_p for every flat y index.
fn eigenvalue_table(disc: &Discretization, v: &Potential) -> Vec<f64> {
    disc.y_modes().iter().map(|p| v.eigenvalue(p)).collect()
}

/// exp(i t (-xi^2 + lambda_p)) for every grid mode.
fn phase_multiplier(disc: &Discretization, v: &Potential, t: f64) -> Result<Vec<Complex64>> {
    check_potential(disc, v)?;
    let lambda = eigenvalue_table(disc, v);
    let n_yd = disc.n_y_total();
    let mut mult = Vec::with_capacity(disc.len());
    for &xi in disc.xi() {
        for lam in &lambda {
            mult.push(Complex64::from_polar(1.0, t * (-xi * xi + lam)));
        }
        debug_assert_eq!(mult.len() % n_yd, 0);
    }
    Ok(mult)
}

fn apply_multiplier(u: &mut WaveField, mult: &[Complex64]) {
    u.to_fourier();
    u.data_mut()
        .iter_mut()
        .zip(mult)
        .for_each(|(v, m)| *v *= m);
}

/// Exact linear propagator e^{it D}, D = dxx + Delta_y + V*.
/// Output is in the Fourier representation.
pub fn linear_flow(u: &WaveField, v: &Potential, t: f64) -> Result<WaveField> {
    let mult = phase_multiplier(u.disc(), v, t)?;
    let mut out = u.fourier_clone();
    apply_multiplier(&mut out, &mult);
    Ok(out)
}

/// Strang stepper with precomputed half- and full-step linear multipliers.
pub struct Stepper {
    disc: Arc<Discretization>,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    dt: f64,
    coupling: f64,
}

impl Stepper {
    pub fn new(disc: &Arc<Discretization>, v: &Potential, dt: f64, coupling: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} must be finite and nonzero"
            )));
        }
        if !(0.0..=1.0).contains(&coupling) {
            return Err(Error::InvalidParameter(format!(
                "coupling = {coupling} must lie in [0, 1]"
            )));
        }
        Ok(Self {
            disc: disc.clone(),
            half: phase_multiplier(disc, v, dt / 2.0)?,
            full: phase_multiplier(disc, v, dt)?,
            dt,
            coupling,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    fn nonlinear_phase(&self, u: &mut WaveField) -> Result<()> {
        u.to_physical();
        let factor = self.coupling * self.dt;
        if factor != 0.0 {
            u.data_mut().iter_mut().for_each(|v| {
                *v *= Complex64::from_polar(1.0, -factor * v.norm_sqr());
            });
        }
        if !u.is_finite() {
            return Err(Error::NumericalFailsafe(
                "non-finite samples during a Strang step (blow-up guard)".into(),
            ));
        }
        Ok(())
    }

    /// One full Strang step: half linear, exact nonlinear phase, half
    /// linear.  Leaves the field in the Fourier representation.
    pub fn step(&self, u: &mut WaveField) -> Result<()> {
        self.check_field(u)?;
        apply_multiplier(u, &self.half);
        self.nonlinear_phase(u)?;
        apply_multiplier(u, &self.half);
        Ok(())
    }

    fn check_field(&self, u: &WaveField) -> Result<()> {
        if !Arc::ptr_eq(u.disc(), &self.disc) {
            return Err(Error::CutoffMismatch(
                "field does not share the stepper's discretization".into(),
            ));
        }
        Ok(())
    }

    /// `n` consecutive steps with the inner half-steps fused.
    pub fn steps(&self, u: &mut WaveField, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        self.check_field(u)?;
        apply_multiplier(u, &self.half);
        for i in 0..n {
            self.nonlinear_phase(u)?;
            if i + 1 < n {
                apply_multiplier(u, &self.full);
            }
        }
        apply_multiplier(u, &self.half);
        Ok(())
    }
}

/// One Strang step of the cubic equation (convenience wrapper).
pub fn step_strang(u: &WaveField, v: &Potential, dt: f64, coupling: f64) -> Result<WaveField> {
    let stepper = Stepper::new(u.disc(), v, dt, coupling)?;
    let mut out = u.clone();
    stepper.step(&mut out)?;
    Ok(out)
}

/// Checkpoint diagnostics along an evolution.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WaveDiagnostics {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    /// Mass fraction in the outer 10% of the x interval.
    pub boundary_fraction: f64,
    /// Set when the boundary fraction exceeds [`BOUNDARY_WARN_FRACTION`].
    pub boundary_warning: bool,
}

#[derive(Debug)]
pub struct WaveTrajectory {
    pub diagnostics: Vec<WaveDiagnostics>,
    /// Checkpointed fields in the Fourier representation (when requested).
    pub states: Vec<WaveField>,
    pub final_field: WaveField,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    pub coupling: f64,
    /// Diagnostics cadence in steps.
    pub checkpoint_every: usize,
    pub store_states: bool,
}

impl EvolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} must be nonnegative",
                self.t_end
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidParameter(
                "checkpoint_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Evolves the cubic equation by repeated Strang steps, recording mass,
/// energy and the boundary-mass fraction at every checkpoint.
pub fn evolve(u0: &WaveField, v: &Potential, options: &EvolveOptions) -> Result<WaveTrajectory> {
    options.validate()?;
    let stepper = Stepper::new(u0.disc(), v, options.dt, options.coupling)?;
    let disc = u0.disc().clone();
    let lambda = eigenvalue_table(&disc, v);
    let n_steps = (options.t_end / options.dt).round() as usize;
    let dt = if n_steps > 0 {
        options.t_end / n_steps as f64
    } else {
        options.dt
    };
    // Re-plan with the snapped step so checkpoints land on t_end exactly.
    let stepper = if dt != options.dt {
        Stepper::new(u0.disc(), v, dt, options.coupling)?
    } else {
        stepper
    };

    let mut u = u0.fourier_clone();
    if !u.is_finite() {
        return Err(Error::NumericalFailsafe("non-finite initial data".into()));
    }
    let mut diagnostics = vec![diagnose(&u, &lambda, options.coupling, 0.0)];
    let mut states = Vec::new();
    if options.store_states {
        states.push(u.clone());
    }

    let mut done = 0usize;
    while done < n_steps {
        let batch = options.checkpoint_every.min(n_steps - done);
        stepper.steps(&mut u, batch)?;
        done += batch;
        diagnostics.push(diagnose(&u, &lambda, options.coupling, done as f64 * dt));
        if options.store_states {
            states.push(u.fourier_clone());
        }
    }

    Ok(WaveTrajectory {
        diagnostics,
        states,
        final_field: u,
    })
}

/// Diagnostics of a standalone field: the same quantities `evolve` records
/// at its checkpoints.
pub fn field_diagnostics(
    u: &WaveField,
    v: &Potential,
    coupling: f64,
    time: f64,
) -> Result<WaveDiagnostics> {
    check_potential(u.disc(), v)?;
    let lambda = eigenvalue_table(u.disc(), v);
    Ok(diagnose(u, &lambda, coupling, time))
}

fn diagnose(u: &WaveField, lambda: &[f64], coupling: f64, time: f64) -> WaveDiagnostics {
    let disc = u.disc();
    let f = u.fourier_clone();
    let p = u.physical_clone();
    let n_yd = disc.n_y_total();

    let mut mass_f = 0.0;
    let mut quad = 0.0;
    for (j, chunk) in f.data().chunks(n_yd).enumerate() {
        let xi2 = disc.xi()[j] * disc.xi()[j];
        for (m, v) in chunk.iter().enumerate() {
            let w = v.norm_sqr();
            mass_f += w;
            quad += (xi2 - lambda[m]) * w;
        }
    }
    let cf = disc.fourier_mass_constant();
    let cp = disc.physical_mass_constant();
    let mass = cf * mass_f;

    // The Hamiltonian of the coupled equation: the quartic term carries
    // the coupling so E is a first integral for every coupling value.
    let quartic: f64 = p.data().iter().map(|v| v.norm_sqr().powi(2)).sum();
    let energy = cf * quad + 0.5 * coupling * cp * quartic;

    let half = disc.period() / 2.0;
    let mut total = 0.0;
    let mut outer = 0.0;
    for (j, chunk) in p.data().chunks(n_yd).enumerate() {
        let row: f64 = chunk.iter().map(|v| v.norm_sqr()).sum();
        total += row;
        if disc.x_coord(j).abs() >= 0.9 * half {
            outer += row;
        }
    }
    let boundary_fraction = if total > 0.0 { outer / total } else { 0.0 };

    WaveDiagnostics {
        time,
        mass,
        energy,
        boundary_fraction,
        boundary_warning: boundary_fraction > BOUNDARY_WARN_FRACTION,
    }
}

/// The time-dependent trilinear form
/// N^t[F,G,H] = e^{-itD}(e^{itD}F . conj(e^{itD}G) . e^{itD}H).
pub fn nonlinear_form(
    f: &WaveField,
    g: &WaveField,
    h: &WaveField,
    v: &Potential,
    t: f64,
) -> Result<WaveField> {
    f.check_same_disc(g)?;
    f.check_same_disc(h)?;
    let mut ff = linear_flow(f, v, t)?;
    let mut gf = linear_flow(g, v, t)?;
    let mut hf = linear_flow(h, v, t)?;
    ff.to_physical();
    gf.to_physical();
    hf.to_physical();
    let data = ff
        .data()
        .iter()
        .zip(gf.data())
        .zip(hf.data())
        .map(|((a, b), c)| a * b.conj() * c)
        .collect();
    let product = WaveField::from_samples(f.disc().clone(), data, Representation::Physical)?;
    linear_flow(&product, v, -t)
}

/// The resonance-restricted trilinear form: for every x frequency
/// independently, the Gamma_0 sum  sum F_q conj(G_r) H_s  into target p.
/// Inputs must be y-band-limited to the index ball.
pub fn resonant_form(
    f: &WaveField,
    g: &WaveField,
    h: &WaveField,
    index: &QuadrupleIndex,
) -> Result<WaveField> {
    f.check_same_disc(g)?;
    f.check_same_disc(h)?;
    let disc = f.disc().clone();
    let ball = index.ball();
    if index.dim() != disc.dim_y() {
        return Err(Error::CutoffMismatch(format!(
            "index dimension {} does not match torus dimension {}",
            index.dim(),
            disc.dim_y()
        )));
    }
    let mode_map: Vec<usize> = ball
        .points()
        .iter()
        .map(|p| {
            disc.y_mode_index(p).ok_or_else(|| {
                Error::CutoffMismatch(format!(
                    "ball point {p} is not representable on an N_y = {} grid",
                    disc.n_y()
                ))
            })
        })
        .collect::<Result<_>>()?;
    let in_ball: Vec<bool> = {
        let mut flags = vec![false; disc.n_y_total()];
        for &m in &mode_map {
            flags[m] = true;
        }
        flags
    };

    let ff = f.fourier_clone();
    let gf = g.fourier_clone();
    let hf = h.fourier_clone();
    let n_yd = disc.n_y_total();
    for field in [&ff, &gf, &hf] {
        let mut total = 0.0;
        let mut outside = 0.0;
        for chunk in field.data().chunks(n_yd) {
            for (m, v) in chunk.iter().enumerate() {
                let w = v.norm_sqr();
                total += w;
                if !in_ball[m] {
                    outside += w;
                }
            }
        }
        if total > 0.0 && outside > BALL_LEAK_TOL * total {
            return Err(Error::SupportOutsideBall(format!(
                "y-spectral mass fraction {:.3e} outside the P^2 = {} ball",
                outside / total,
                ball.radius_sq()
            )));
        }
    }

    let mut out = WaveField::zero(disc.clone(), Representation::Fourier);
    out.data_mut()
        .par_chunks_mut(n_yd)
        .enumerate()
        .for_each(|(j, out_slice)| {
            let fa = &ff.data()[j * n_yd..(j + 1) * n_yd];
            let ga = &gf.data()[j * n_yd..(j + 1) * n_yd];
            let ha = &hf.data()[j * n_yd..(j + 1) * n_yd];
            for (pi, &pm) in mode_map.iter().enumerate() {
                let mut acc = Complex64::ZERO;
                for &[q, r, s] in index.fiber(pi as u32) {
                    acc += fa[mode_map[q as usize]]
                        * ga[mode_map[r as usize]].conj()
                        * ha[mode_map[s as usize]];
                }
                out_slice[pm] = acc;
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_field;
    use super::*;
    use crate::lattice::LatticePoint;
    use crate::resonant_flow::{eval_r, LatticeState};
    use std::f64::consts::PI;

    fn pt(coords: &[i64]) -> LatticePoint {
        LatticePoint::new(coords).unwrap()
    }

    fn disc_1d() -> Arc<Discretization> {
        Discretization::new(1, 16.0 * PI, 64, 8).unwrap()
    }

    /// Smooth band-limited random field (decaying mode amplitudes).
    fn smooth_field(disc: &Arc<Discretization>, seed: u64, eps: f64) -> WaveField {
        let mut f = random_field(disc, seed).fourier_clone();
        let n_yd = disc.n_y_total();
        for (j, chunk) in f.data_mut().chunks_mut(n_yd).enumerate() {
            let xi = disc.xi()[j];
            for (m, v) in chunk.iter_mut().enumerate() {
                let p2 = disc.y_mode(m).norm_sq() as f64;
                *v *= eps * (-(xi * xi) - p2).exp();
            }
        }
        f
    }

    fn max_diff(a: &WaveField, b: &WaveField) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn linear_flow_identity_at_t_zero() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 3, 5).unwrap();
        let f = random_field(&disc, 1).fourier_clone();
        let g = linear_flow(&f, &v, 0.0).unwrap();
        assert!(max_diff(&f, &g) < 1e-15);
    }

    #[test]
    fn linear_flow_single_mode_phase() {
        let disc = disc_1d();
        let v = Potential::zero(1).unwrap();
        let mut f = WaveField::zero(disc.clone(), Representation::Fourier);
        let c = Complex64::new(1.0, -0.5);
        f.set_fourier_mode(5, &pt(&[2]), c).unwrap();
        let t = 0.7;
        let g = linear_flow(&f, &v, t).unwrap();
        let xi = disc.xi()[5];
        let expected = c * Complex64::from_polar(1.0, -t * (xi * xi + 4.0));
        let m = disc.y_mode_index(&pt(&[2])).unwrap();
        let got = g.data()[g.idx(5, m)];
        assert!((got - expected).norm() < 1e-14);
    }

    #[test]
    fn linear_flow_semigroup_and_unitarity() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.8, 3, 9).unwrap();
        let f = random_field(&disc, 2).fourier_clone();
        let a = linear_flow(&linear_flow(&f, &v, 0.3).unwrap(), &v, 1.1).unwrap();
        let b = linear_flow(&f, &v, 1.4).unwrap();
        assert!(max_diff(&a, &b) < 1e-12);
        let mass0 = f.mass();
        let mass1 = linear_flow(&f, &v, 17.3).unwrap().mass();
        assert!((mass0 - mass1).abs() / mass0 < 1e-12);
    }

    #[test]
    fn linear_flow_rejects_oversized_cutoff() {
        let disc = disc_1d(); // N_y = 8 allows cutoff <= 4
        let v = Potential::sample(1, 1.5, 0.5, 5, 5).unwrap();
        let f = random_field(&disc, 0);
        assert!(linear_flow(&f, &v, 1.0).is_err());
        let w = Potential::sample(2, 2.5, 0.5, 2, 5).unwrap();
        assert!(linear_flow(&f, &w, 1.0).is_err());
    }

    #[test]
    fn strang_collapses_to_linear_flow_without_coupling() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 3).unwrap();
        let f = random_field(&disc, 4);
        let a = step_strang(&f, &v, 0.05, 0.0).unwrap().fourier_clone();
        let b = linear_flow(&f, &v, 0.05).unwrap();
        assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn constant_data_rotates_exactly() {
        let disc = disc_1d();
        let v = Potential::zero(1).unwrap();
        let c = Complex64::new(0.4, 0.3);
        let data = vec![c; disc.len()];
        let u0 = WaveField::from_samples(disc.clone(), data, Representation::Physical).unwrap();
        let stepper = Stepper::new(&disc, &v, 0.01, 1.0).unwrap();
        let mut u = u0.clone();
        for _ in 0..100 {
            stepper.step(&mut u).unwrap();
        }
        u.to_physical();
        let expected = c * Complex64::from_polar(1.0, -c.norm_sqr() * 1.0);
        for s in u.data() {
            assert!((s - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn strang_adjoint_symmetry() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 8).unwrap();
        let f = smooth_field(&disc, 5, 0.5);
        let forward = step_strang(&f, &v, 0.05, 1.0).unwrap();
        let back = step_strang(&forward, &v, -0.05, 1.0).unwrap().fourier_clone();
        assert!(max_diff(&f, &back) < 1e-12);
    }

    #[test]
    fn strang_observed_order_is_two() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 8).unwrap();
        let u0 = smooth_field(&disc, 6, 1.0);
        let t_end = 0.5;
        let run = |dt: f64| {
            let options = EvolveOptions {
                t_end,
                dt,
                coupling: 1.0,
                checkpoint_every: usize::MAX,
                store_states: false,
            };
            evolve(&u0, &v, &options).unwrap().final_field.fourier_clone()
        };
        let reference = run(0.05 / 16.0);
        let err = |dt: f64| max_diff(&run(dt), &reference);
        let order = (err(0.05) / err(0.025)).log2();
        assert!(
            (1.8..=2.2).contains(&order),
            "observed order {order} outside [1.8, 2.2]"
        );
    }

    #[test]
    fn evolve_conserves_mass_and_energy_without_coupling() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 1).unwrap();
        let u0 = smooth_field(&disc, 7, 0.8);
        let options = EvolveOptions {
            t_end: 2.0,
            dt: 0.01,
            coupling: 0.0,
            checkpoint_every: 50,
            store_states: false,
        };
        let traj = evolve(&u0, &v, &options).unwrap();
        let first = &traj.diagnostics[0];
        for d in &traj.diagnostics[1..] {
            assert!((d.mass - first.mass).abs() / first.mass < 1e-12);
            assert!((d.energy - first.energy).abs() / first.energy.abs() < 1e-10);
        }
    }

    #[test]
    fn evolve_small_data_mass_drift() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 2).unwrap();
        let u0 = smooth_field(&disc, 8, 0.05);
        let options = EvolveOptions {
            t_end: 1.0,
            dt: 0.005,
            coupling: 1.0,
            checkpoint_every: 100,
            store_states: false,
        };
        let traj = evolve(&u0, &v, &options).unwrap();
        let first = &traj.diagnostics[0];
        for d in &traj.diagnostics[1..] {
            assert!((d.mass - first.mass).abs() / first.mass < 1e-10);
        }
    }

    #[test]
    fn evolve_zero_data_stays_zero() {
        let disc = disc_1d();
        let v = Potential::zero(1).unwrap();
        let u0 = WaveField::zero(disc, Representation::Physical);
        let options = EvolveOptions {
            t_end: 1.0,
            dt: 0.05,
            coupling: 1.0,
            checkpoint_every: 10,
            store_states: false,
        };
        let traj = evolve(&u0, &v, &options).unwrap();
        assert!(traj.diagnostics.iter().all(|d| d.mass == 0.0));
        assert_eq!(traj.final_field.physical_clone().mass(), 0.0);
    }

    #[test]
    fn energy_drift_scales_quadratically() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 8).unwrap();
        let u0 = smooth_field(&disc, 9, 0.6);
        let drift = |dt: f64| {
            let options = EvolveOptions {
                t_end: 1.0,
                dt,
                coupling: 1.0,
                checkpoint_every: 20,
                store_states: false,
            };
            let traj = evolve(&u0, &v, &options).unwrap();
            let e0 = traj.diagnostics[0].energy;
            traj.diagnostics
                .iter()
                .map(|d| (d.energy - e0).abs())
                .fold(0.0f64, f64::max)
                / e0.abs()
        };
        let ratio = drift(0.02) / drift(0.01);
        assert!(
            (3.0..=5.0).contains(&ratio),
            "energy drift ratio {ratio} not within 4 +- 1"
        );
    }

    #[test]
    fn nonlinear_form_at_t_zero_is_pointwise_product() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 6).unwrap();
        let f = smooth_field(&disc, 10, 1.0);
        let g = smooth_field(&disc, 11, 1.0);
        let h = smooth_field(&disc, 12, 1.0);
        let out = nonlinear_form(&f, &g, &h, &v, 0.0).unwrap().physical_clone();
        let (fp, gp, hp) = (f.physical_clone(), g.physical_clone(), h.physical_clone());
        for i in 0..disc.len() {
            let expected = fp.data()[i] * gp.data()[i].conj() * hp.data()[i];
            assert!((out.data()[i] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn nonlinear_form_gauge_phase() {
        let disc = disc_1d();
        let v = Potential::sample(1, 1.5, 0.5, 2, 6).unwrap();
        let f = smooth_field(&disc, 13, 1.0);
        let theta = Complex64::from_polar(1.0, 1.234);
        let mut rotated = f.clone();
        rotated.data_mut().iter_mut().for_each(|v| *v *= theta);
        let base = nonlinear_form(&f, &f, &f, &v, 0.8).unwrap();
        let rot = nonlinear_form(&rotated, &rotated, &rotated, &v, 0.8).unwrap();
        let mut scaled = base.clone();
        scaled.data_mut().iter_mut().for_each(|v| *v *= theta);
        assert!(max_diff(&scaled, &rot) < 1e-12);
    }

    #[test]
    fn nonlinear_form_zero_input() {
        let disc = disc_1d();
        let v = Potential::zero(1).unwrap();
        let z = WaveField::zero(disc, Representation::Fourier);
        let out = nonlinear_form(&z, &z, &z, &v, 3.0).unwrap();
        assert!(out.data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn resonant_form_matches_eval_r_slicewise() {
        let disc = Discretization::new(2, 10.0, 8, 8).unwrap();
        let index = QuadrupleIndex::build(2, 5).unwrap();
        let ball = index.ball().clone();
        // Ball-limited random Fourier data.
        let mut f = WaveField::zero(disc.clone(), Representation::Fourier);
        let mut rng_seed = 0u64;
        for j in 0..disc.n_x() {
            for p in ball.points() {
                rng_seed = rng_seed.wrapping_mul(6364136223846793005).wrapping_add(j as u64 + 1);
                let re = ((rng_seed >> 16) & 0xffff) as f64 / 65536.0 - 0.5;
                let im = ((rng_seed >> 32) & 0xffff) as f64 / 65536.0 - 0.5;
                f.set_fourier_mode(j, p, Complex64::new(re, im)).unwrap();
            }
        }
        let out = resonant_form(&f, &f, &f, &index).unwrap();
        for j in 0..disc.n_x() {
            let amps: Vec<Complex64> = ball
                .points()
                .iter()
                .map(|p| f.data()[f.idx(j, disc.y_mode_index(p).unwrap())])
                .collect();
            let state = LatticeState::from_amplitudes(ball.clone(), amps).unwrap();
            let expected = eval_r(&index, &state).unwrap();
            for (i, p) in ball.points().iter().enumerate() {
                let got = out.data()[out.idx(j, disc.y_mode_index(p).unwrap())];
                let scale = expected.amplitudes()[i].norm().max(1.0);
                assert!((got - expected.amplitudes()[i]).norm() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn resonant_form_rejects_leaking_support() {
        let disc = Discretization::new(1, 10.0, 8, 8).unwrap();
        let index = QuadrupleIndex::build(1, 1).unwrap();
        let mut f = WaveField::zero(disc.clone(), Representation::Fourier);
        f.set_fourier_mode(0, &pt(&[3]), Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            resonant_form(&f, &f, &f, &index),
            Err(Error::SupportOutsideBall(_))
        ));
    }

    #[test]
    fn resonant_form_zero_input() {
        let disc = Discretization::new(1, 10.0, 8, 8).unwrap();
        let index = QuadrupleIndex::build(1, 4).unwrap();
        let z = WaveField::zero(disc, Representation::Fourier);
        let out = resonant_form(&z, &z, &z, &index).unwrap();
        assert!(out.data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn resonant_form_d1_pairing_structure() {
        // In d = 1 the resonant sum at p collapses to the pairing formula
        // 2 a_p sum_r |a_r|^2 - a_p |a_p|^2.
        let disc = Discretization::new(1, 10.0, 8, 8).unwrap();
        let index = QuadrupleIndex::build(1, 4).unwrap();
        let ball = index.ball().clone();
        let mut f = WaveField::zero(disc.clone(), Representation::Fourier);
        let coeff = |i: usize| Complex64::new(0.1 + 0.2 * i as f64, -0.3 + 0.1 * i as f64);
        for (i, p) in ball.points().iter().enumerate() {
            f.set_fourier_mode(2, p, coeff(i)).unwrap();
        }
        let out = resonant_form(&f, &f, &f, &index).unwrap();
        let total: f64 = (0..ball.len()).map(|i| coeff(i).norm_sqr()).sum();
        for (i, p) in ball.points().iter().enumerate() {
            let c = coeff(i);
            let expected = 2.0 * c * total - c * c.norm_sqr();
            let got = out.data()[out.idx(2, disc.y_mode_index(p).unwrap())];
            assert!((got - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn blow_up_guard_trips_on_nonfinite() {
        let disc = disc_1d();
        let v = Potential::zero(1).unwrap();
        let mut u = random_field(&disc, 20);
        u.data_mut()[0] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(
            step_strang(&u, &v, 0.01, 1.0),
            Err(Error::NumericalFailsafe(_))
        ));
    }
}
