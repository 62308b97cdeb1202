//! Run configuration: JSON file with strict validation and defaults that
//! mirror the standard study setup (dt 0.01, t_f 10, λ 1e-8, dephasing rate
//! 0.01, damping rates 0.04/0.004, couplings 1/0.5 with sector size 1,
//! adaptive threshold 1e-4 for trajectories and 1e-6 for vectorization,
//! 1000 trajectories).

use serde::{Deserialize, Serialize};
use std::path::Path;

use avqds::adaptive::{AdaptiveConfig, PoolKind};
use avqds::models::{
    make_amplitude_damping, make_dephasing, AnnealingModel, LindbladModel,
};
use avqds::solvers::{Integrator, SolverConfig};

use crate::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trajectory,
    Vectorized,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dephasing,
    AmplitudeDamping,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolChoice {
    P1,
    P2,
    P3,
}

impl From<PoolChoice> for PoolKind {
    fn from(p: PoolChoice) -> PoolKind {
        match p {
            PoolChoice::P1 => PoolKind::P1,
            PoolChoice::P2 => PoolKind::P2,
            PoolChoice::P3 => PoolKind::P3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveModeChoice {
    Unrestricted,
    Restricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSection {
    pub mode: AdaptiveModeChoice,
    /// Additive improvement threshold; `null` means the method default
    /// (1e-4 trajectory, 1e-6 vectorized).
    pub r: Option<f64>,
    /// Restricted-mode distance target above the lower bound.
    pub d_threshold: f64,
    pub max_ops_per_step: Option<usize>,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        AdaptiveSection {
            mode: AdaptiveModeChoice::Unrestricted,
            r: None,
            d_threshold: 0.0,
            max_ops_per_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorChoice {
    Euler,
    Heun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub model: ModelKind,
    pub n_spins: usize,
    pub gamma_dephasing: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub w1: f64,
    pub w2: f64,
    pub sector_size: usize,
    pub dt: f64,
    pub t_f: f64,
    pub pool: PoolChoice,
    pub adaptive: AdaptiveSection,
    pub lambda: f64,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub record_stride: usize,
    /// 0 disables state snapshots.
    pub snapshot_stride: usize,
    pub integrator: IntegratorChoice,
    /// Step for the exact reference integrator.
    pub oracle_dt: f64,
    /// Fault-injection hook: trajectory indices forced to fail (testing).
    pub inject_failures: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Trajectory,
            model: ModelKind::Dephasing,
            n_spins: 4,
            gamma_dephasing: 0.01,
            gamma_plus: 0.04,
            gamma_minus: 0.004,
            w1: 1.0,
            w2: 0.5,
            sector_size: 1,
            dt: 0.01,
            t_f: 10.0,
            pool: PoolChoice::P2,
            adaptive: AdaptiveSection::default(),
            lambda: 1e-8,
            n_trajectories: 1000,
            master_seed: 1,
            workers: 0,
            record_stride: 1,
            snapshot_stride: 0,
            integrator: IntegratorChoice::Euler,
            oracle_dt: 1e-3,
            inject_failures: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> AppResult<()> {
        let bad = |name: &str, v: f64| {
            Err(AppError::Validation(format!("invalid value for '{name}': {v}")))
        };
        if self.n_spins == 0 {
            return bad("n_spins", 0.0);
        }
        if self.sector_size == 0 {
            return bad("sector_size", 0.0);
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt", self.dt);
        }
        if self.t_f < 0.0 || !self.t_f.is_finite() {
            return bad("t_f", self.t_f);
        }
        if self.gamma_dephasing < 0.0 {
            return bad("gamma_dephasing", self.gamma_dephasing);
        }
        if self.gamma_plus < 0.0 {
            return bad("gamma_plus", self.gamma_plus);
        }
        if self.gamma_minus < 0.0 {
            return bad("gamma_minus", self.gamma_minus);
        }
        if self.lambda < 0.0 {
            return bad("lambda", self.lambda);
        }
        if let Some(r) = self.adaptive.r {
            if !(r > 0.0) {
                return bad("adaptive.r", r);
            }
        }
        if self.adaptive.d_threshold < 0.0 {
            return bad("adaptive.d_threshold", self.adaptive.d_threshold);
        }
        if self.record_stride == 0 {
            return bad("record_stride", 0.0);
        }
        if self.n_trajectories == 0 && self.method == Method::Trajectory {
            return bad("n_trajectories", 0.0);
        }
        if !(self.oracle_dt > 0.0) {
            return bad("oracle_dt", self.oracle_dt);
        }
        Ok(())
    }

    /// The method-dependent adaptive threshold default.
    pub fn resolved_r(&self) -> f64 {
        self.adaptive.r.unwrap_or(match self.method {
            Method::Vectorized => 1e-6,
            _ => 1e-4,
        })
    }

    pub fn annealing_model(&self) -> AppResult<AnnealingModel> {
        AnnealingModel::new(self.n_spins, self.sector_size, self.w1, self.w2, self.t_f)
            .map_err(|e| AppError::Validation(e.to_string()))
    }

    pub fn lindblad_model(&self) -> AppResult<LindbladModel> {
        let annealing = self.annealing_model()?;
        let model = match self.model {
            ModelKind::Closed => LindbladModel::closed(annealing),
            ModelKind::Dephasing => make_dephasing(&annealing, self.gamma_dephasing)
                .map_err(|e| AppError::Validation(e.to_string()))?,
            ModelKind::AmplitudeDamping => {
                make_amplitude_damping(&annealing, self.gamma_plus, self.gamma_minus)
                    .map_err(|e| AppError::Validation(e.to_string()))?
            }
        };
        Ok(model)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mode = match self.adaptive.mode {
            AdaptiveModeChoice::Unrestricted => {
                avqds::adaptive::AdaptiveMode::Unrestricted { r: self.resolved_r() }
            }
            AdaptiveModeChoice::Restricted => {
                avqds::adaptive::AdaptiveMode::Restricted { d_threshold: self.adaptive.d_threshold }
            }
        };
        SolverConfig {
            dt: self.dt,
            t_f: self.t_f,
            lambda: self.lambda,
            pool: self.pool.into(),
            adaptive: AdaptiveConfig {
                mode,
                max_ops_per_step: self.adaptive.max_ops_per_step.unwrap_or(usize::MAX),
            },
            record_stride: self.record_stride,
            snapshot_stride: self.snapshot_stride,
            integrator: match self.integrator {
                IntegratorChoice::Euler => Integrator::Euler,
                IntegratorChoice::Heun => Integrator::Heun,
            },
            record_mclachlan: false,
        }
    }
}

/// Parse and validate a JSON config file; `{}` yields the full defaults.
pub fn load_config(path: &Path) -> AppResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> AppResult<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| AppError::Validation(format!("config parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
