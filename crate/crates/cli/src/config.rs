//! Flat per-command run configurations. Defaults < JSON file < flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use salm_core::control::ControlConfig;
use salm_core::denoise::{DenoiseConfig, PenaltyConvention, SyntheticImage};

use crate::CliError;

pub fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlRunConfig {
    pub kappa: f64,
    pub rho0: f64,
    pub tau: f64,
    pub gamma: f64,
    pub mesh_m: usize,
    pub sigma: f64,
    pub eps: f64,
    pub max_outer_iterations: usize,
    pub seed: u64,
}

impl Default for ControlRunConfig {
    fn default() -> Self {
        let base = ControlConfig::default();
        Self {
            kappa: 0.5,
            rho0: base.alm.rho0,
            tau: base.alm.tau,
            gamma: base.alm.gamma,
            mesh_m: base.cells_per_side,
            sigma: base.sigma,
            eps: base.alm.eps_abs,
            max_outer_iterations: base.alm.max_outer_iterations,
            seed: 0,
        }
    }
}

impl ControlRunConfig {
    pub fn to_core(&self) -> ControlConfig {
        let mut cfg = ControlConfig {
            cells_per_side: self.mesh_m,
            sigma: self.sigma,
            ..ControlConfig::default()
        };
        cfg.alm.rho0 = self.rho0;
        cfg.alm.tau = self.tau;
        cfg.alm.gamma = self.gamma;
        cfg.alm.eps_abs = self.eps;
        cfg.alm.max_outer_iterations = self.max_outer_iterations;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseRunConfig {
    pub input: Option<PathBuf>,
    pub synthetic: Option<SyntheticImage>,
    /// Side length of synthetic images.
    pub n: usize,
    /// Expected count per pixel at full brightness.
    pub peak: f64,
    pub alpha: f64,
    pub qtilde: Option<f64>,
    pub r_shift: f64,
    pub sobolev_s: f64,
    pub nadam_iterations: usize,
    pub max_scale: usize,
    pub mc_samples: usize,
    pub penalty_convention: PenaltyConvention,
    pub max_outer_iterations: usize,
    pub seed: u64,
}

impl Default for DenoiseRunConfig {
    fn default() -> Self {
        let base = DenoiseConfig::default();
        Self {
            input: None,
            synthetic: None,
            n: 256,
            peak: 30.0,
            alpha: base.alpha,
            qtilde: base.q_tilde,
            r_shift: base.r_shift,
            sobolev_s: base.sobolev_s,
            nadam_iterations: base.nadam_iterations,
            max_scale: base.max_scale,
            mc_samples: base.mc_samples,
            penalty_convention: base.penalty_convention,
            max_outer_iterations: base.alm.max_outer_iterations,
            seed: 0,
        }
    }
}

impl DenoiseRunConfig {
    pub fn to_core(&self) -> DenoiseConfig {
        let mut cfg = DenoiseConfig {
            alpha: self.alpha,
            q_tilde: self.qtilde,
            r_shift: self.r_shift,
            sobolev_s: self.sobolev_s,
            nadam_iterations: self.nadam_iterations,
            max_scale: self.max_scale,
            mc_samples: self.mc_samples,
            penalty_convention: self.penalty_convention,
            seed: self.seed,
            ..DenoiseConfig::default()
        };
        cfg.alm.max_outer_iterations = self.max_outer_iterations;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantileRunConfig {
    pub n: usize,
    pub alpha: f64,
    pub samples: usize,
    pub max_scale: usize,
    pub penalty_convention: PenaltyConvention,
    pub seed: u64,
}

impl Default for QuantileRunConfig {
    fn default() -> Self {
        let base = DenoiseConfig::default();
        Self {
            n: 256,
            alpha: base.alpha,
            samples: base.mc_samples,
            max_scale: base.max_scale,
            penalty_convention: base.penalty_convention,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ControlRunConfig>(r#"{"kappa": 1, "kapa": 2}"#).is_err());
        assert!(serde_json::from_str::<DenoiseRunConfig>(r#"{"alpah": 0.2}"#).is_err());
        assert!(serde_json::from_str::<QuantileRunConfig>(r#"{"sample": 100}"#).is_err());
    }

    #[test]
    fn defaults_follow_the_experiments() {
        let c = ControlRunConfig::default();
        assert_eq!((c.rho0, c.tau, c.gamma, c.mesh_m, c.sigma), (1e-4, 0.1, 2.0, 32, 1e-2));
        let d = DenoiseRunConfig::default().to_core();
        assert_eq!((d.alm.rho0, d.alm.tau, d.alm.gamma, d.alm.eps_abs), (4.0, 0.9, 4.0, 1e-2));
        assert_eq!((d.alpha, d.sobolev_s, d.boundary_slope, d.nadam_iterations), (0.1, 0.01, -10.0, 300));
        let q = QuantileRunConfig::default();
        assert_eq!((q.n, q.alpha, q.samples), (256, 0.1, 1000));
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c: ControlRunConfig = serde_json::from_str(r#"{"kappa": 100}"#).unwrap();
        assert_eq!(c.kappa, 100.0);
        assert_eq!(c.mesh_m, 32);
    }
}
