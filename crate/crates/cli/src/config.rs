//! Run configuration: a flat JSON document with per-flag overrides.

use serde::{Deserialize, Serialize};
use std::path::Path;

use liquid_s4::liquid::{default_window, LiquidMode, MAX_ORDER};
use liquid_s4::model::{Activation, LayerConfig, ModelConfig, Norm};
use liquid_s4::ssm::DT_MAX_DEFAULT;
use liquid_s4::task::{SyntheticTask, TaskKind};
use liquid_s4::train::TrainConfig;

use crate::CliError;

/// Unset counts fall back to per-command defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub state: Option<usize>,
    pub features: Option<usize>,
    pub length: Option<usize>,
    pub window: Option<usize>,
    pub order: usize,
    pub mode: LiquidMode,
    pub dt_min: Option<f64>,
    pub dt_max: f64,

    pub depth: usize,
    pub norm: Norm,
    pub prenorm: bool,
    pub residual: bool,
    pub activation: Activation,
    pub dropout: f64,
    pub task: TaskKind,
    pub classes: usize,
    pub noise: f64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,

    pub bench_lengths: Vec<usize>,
    pub bench_budget_ms: f64,
    pub bench_naive: bool,
    pub verify_dt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            state: None,
            features: None,
            length: None,
            window: None,
            order: 3,
            mode: LiquidMode::None,
            dt_min: None,
            dt_max: DT_MAX_DEFAULT,
            depth: 1,
            norm: Norm::None,
            prenorm: false,
            residual: true,
            activation: Activation::Gelu,
            dropout: 0.0,
            task: TaskKind::AdjacentProductSign,
            classes: 2,
            noise: 0.0,
            epochs: train.epochs,
            lr: train.lr,
            momentum: train.momentum,
            clip_norm: train.clip_norm,
            train_size: train.train_size,
            test_size: train.test_size,
            bench_lengths: vec![1024, 2048, 4096, 8192, 16384],
            bench_budget_ms: 150.0,
            bench_naive: true,
            verify_dt: 0.05,
        }
    }
}

/// Resolved sizes for one command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dims {
    pub state: usize,
    pub features: usize,
    pub length: usize,
    pub window: usize,
    pub dt_min: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fill unset sizes from `(state, features, length)` defaults and
    /// check ranges.
    pub fn dims(&self, defaults: (usize, usize, usize)) -> Result<Dims, CliError> {
        let state = self.state.unwrap_or(defaults.0);
        let features = self.features.unwrap_or(defaults.1);
        let length = self.length.unwrap_or(defaults.2);
        if state == 0 || features == 0 || length == 0 {
            return Err(CliError::Usage(
                "invalid dimension: state, features and length must be at least 1".into(),
            ));
        }
        let window = self.window.unwrap_or_else(|| default_window(length));
        if window == 0 {
            return Err(CliError::Usage("invalid dimension: window must be at least 1".into()));
        }
        let dt_min = self.dt_min.unwrap_or(1.0 / length as f64).min(self.dt_max);
        if !(dt_min > 0.0 && self.dt_max.is_finite()) {
            return Err(CliError::Usage(format!(
                "need 0 < dt_min <= dt_max, got [{dt_min}, {}]",
                self.dt_max
            )));
        }
        if self.mode != LiquidMode::None && !(2..=MAX_ORDER).contains(&self.order) {
            return Err(CliError::Usage(format!(
                "invalid liquid order {}: supported orders are 2..={MAX_ORDER}",
                self.order
            )));
        }
        Ok(Dims {
            state,
            features,
            length,
            window,
            dt_min,
        })
    }

    pub fn model_config(&self, dims: &Dims) -> ModelConfig {
        let layer = LayerConfig {
            features: dims.features,
            state_size: dims.state,
            mode: self.mode,
            max_order: self.order,
            window: dims.window,
            norm: self.norm,
            prenorm: self.prenorm,
            dropout: self.dropout,
            dt_min: dims.dt_min,
            dt_max: self.dt_max,
            activation: self.activation,
            residual: self.residual,
        };
        ModelConfig {
            input_features: 1,
            classes: match self.task {
                TaskKind::AdjacentProductSign => 2,
                TaskKind::ImpulseMemory => self.classes,
            },
            layers: vec![layer; self.depth.max(1)],
        }
    }

    pub fn task(&self, dims: &Dims) -> SyntheticTask {
        SyntheticTask {
            kind: self.task,
            length: dims.length,
            noise: self.noise,
            classes: self.classes,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            momentum: self.momentum,
            train_size: self.train_size,
            test_size: self.test_size,
            clip_norm: self.clip_norm,
            ..TrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_document() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "mode": "pb", "order": 2, "length": 32}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, LiquidMode::Pb);
        let dims = cfg.dims((4, 4, 1024)).unwrap();
        assert_eq!((dims.length, dims.window, dims.state), (32, 8, 4));
        assert!((dims.dt_min - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"mode": "xb"}"#).is_err());
        let cfg = RunConfig {
            mode: LiquidMode::Kb,
            order: 11,
            ..RunConfig::default()
        };
        assert!(cfg.dims((4, 1, 16)).is_err());
        let cfg = RunConfig {
            state: Some(0),
            ..RunConfig::default()
        };
        assert!(cfg.dims((4, 1, 16)).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
