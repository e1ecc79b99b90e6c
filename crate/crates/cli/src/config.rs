//! Per-subcommand configuration: JSON file values overridden by flags.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use waveguide_nls::scattering::{ExperimentPlan, InitialData, PotentialSpec, YModeAmp};
use waveguide_nls::{Error, Result};

/// Reads a JSON config file when a path is given, otherwise the default.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::InvalidParameter(format!("config file {}: {e}", p.display()))
            })
        }
    }
}

/// Reads a JSON config file that has no default (the file is mandatory).
pub fn load_required<T: DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    let p = path.ok_or_else(|| {
        Error::InvalidParameter("this subcommand requires --config <plan.json>".into())
    })?;
    let text = fs::read_to_string(p)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("config file {}: {e}", p.display())))
}

/// Applies a flag override when the flag was given.
pub fn over<T: Copy>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnumerateConfig {
    pub dim: usize,
    pub radius_sq: i64,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        Self { dim: 2, radius_sq: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub dim: usize,
    /// Envelope decay exponent of the sampled potential.
    pub m: f64,
    /// Envelope amplitude; 0 gives the zero potential.
    pub amplitude: f64,
    /// Sampling cutoff A: coefficients vanish for |a|_inf > A.
    pub cutoff: i64,
    pub seed: u64,
    pub radius_sq: i64,
    pub gamma: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            m: 2.0,
            amplitude: 1.0,
            cutoff: 5,
            seed: 20240817,
            radius_sq: 10,
            gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenericityConfig {
    pub dim: usize,
    pub m: f64,
    pub amplitude: f64,
    pub cutoff: i64,
    pub radius_sq: i64,
    pub gamma: f64,
    /// Pass threshold on the minimum weighted divisor.
    pub threshold: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for GenericityConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            m: 2.0,
            amplitude: 1.0,
            cutoff: 5,
            radius_sq: 25,
            gamma: 2.0,
            threshold: 1e-6,
            n_samples: 100,
            seed: 20240817,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonantRunConfig {
    pub dim: usize,
    pub radius_sq: i64,
    /// Seed for the random initial amplitudes.
    pub seed: u64,
    /// Amplitude scale of the random data.
    pub scale: f64,
    pub t_end: f64,
    pub dt: f64,
    pub checkpoint_every: usize,
}

impl Default for ResonantRunConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            radius_sq: 5,
            seed: 1,
            scale: 0.5,
            t_end: 10.0,
            dt: 1e-3,
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitRunConfig {
    pub dim: usize,
    pub radius_sq: i64,
    /// Number of frequency slices.
    pub n_xi: usize,
    /// Slices are placed uniformly on [-xi_max, xi_max].
    pub xi_max: f64,
    pub seed: u64,
    pub scale: f64,
    pub tau_end: f64,
    pub dtau: f64,
    pub checkpoint_every: usize,
}

impl Default for LimitRunConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            radius_sq: 5,
            n_xi: 8,
            xi_max: 2.0,
            seed: 1,
            scale: 0.5,
            tau_end: 5.0,
            dtau: 1e-2,
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NlsRunConfig {
    pub dim_y: usize,
    pub period: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub potential: PotentialSpec,
    pub initial: InitialData,
    pub dt: f64,
    pub coupling: f64,
    pub t_end: f64,
    pub checkpoint_every: usize,
    /// Write the final field as a binary snapshot.
    pub save_field: bool,
}

impl Default for NlsRunConfig {
    fn default() -> Self {
        Self {
            dim_y: 1,
            period: 256.0 * PI,
            n_x: 4096,
            n_y: 32,
            potential: PotentialSpec::Zero,
            initial: default_initial(),
            dt: 5e-3,
            coupling: 1.0,
            t_end: 10.0,
            checkpoint_every: 200,
            save_field: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub dim_y: usize,
    pub period: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub potential: PotentialSpec,
    /// The frozen profile whose residual is evaluated.
    pub initial: InitialData,
    pub ball_radius_sq: i64,
    pub delta: f64,
    pub times: Vec<f64>,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            dim_y: 1,
            period: 256.0 * PI,
            n_x: 4096,
            n_y: 8,
            potential: PotentialSpec::Zero,
            initial: default_initial(),
            ball_radius_sq: 2,
            delta: 0.05,
            times: vec![16.0, 32.0, 64.0, 128.0],
        }
    }
}

fn default_initial() -> InitialData {
    InitialData {
        eps: 0.05,
        x_sigma: 2.0,
        modes: vec![YModeAmp {
            mode: vec![1],
            re: 1.0,
            im: 0.0,
        }],
    }
}

/// Flag overrides shared by the plan-driven subcommands (match, wave-op).
#[derive(Debug, Clone, Copy, Default)]
pub struct PlanOverrides {
    pub dt: Option<f64>,
    pub coupling: Option<f64>,
    pub norm_degree: Option<f64>,
    pub t_match: Option<f64>,
    pub delta: Option<f64>,
}

pub fn apply_plan_overrides(plan: &mut ExperimentPlan, o: &PlanOverrides) {
    over(&mut plan.dt, o.dt);
    over(&mut plan.coupling, o.coupling);
    over(&mut plan.norm_degree, o.norm_degree);
    over(&mut plan.t_match, o.t_match);
    over(&mut plan.delta, o.delta);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_load_without_file() {
        let cfg: EnumerateConfig = load(None).unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.radius_sq, 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"dim\": 1, \"bogus\": 3}}").unwrap();
        let err = load::<EnumerateConfig>(Some(f.path())).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn flag_overrides_file_value() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"radius_sq\": 10}}").unwrap();
        let mut cfg: EnumerateConfig = load(Some(f.path())).unwrap();
        over(&mut cfg.radius_sq, Some(20));
        assert_eq!(cfg.radius_sq, 20);
    }

    #[test]
    fn required_config_missing_is_invalid() {
        let err = load_required::<ExperimentPlan>(None).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}
