//! A small stack of liquid-S4 layers with a flat parameter vector.
//!
//! Per layer and feature the learned quantities are the real output row `c`
//! (in the HiPPO basis), `log Δt` and a skip gain `D`. `Λ`, `P` and `B` stay
//! at their LegS values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::conv::{LiquidS4Kernels, SequenceBatch};
use crate::error::{Error, Result};
use crate::liquid::{LiquidMode, MAX_ORDER};
use crate::ssm::{init_dt_schedule, nplr_decompose, LegsDplr, DT_MAX_DEFAULT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Batch,
    Layer,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            // tanh approximation
            Self::Gelu => 0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044_715 * x * x * x)).tanh()),
            Self::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerConfig {
    pub features: usize,
    pub state_size: usize,
    pub mode: LiquidMode,
    pub max_order: usize,
    pub window: usize,
    pub norm: Norm,
    pub prenorm: bool,
    pub dropout: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub activation: Activation,
    pub residual: bool,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            features: 4,
            state_size: 4,
            mode: LiquidMode::None,
            max_order: 2,
            window: 8,
            norm: Norm::None,
            prenorm: false,
            dropout: 0.0,
            dt_min: 1.0 / 32.0,
            dt_max: DT_MAX_DEFAULT,
            activation: Activation::Gelu,
            residual: true,
        }
    }
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.state_size == 0 {
            return Err(Error::Config("features and state_size must be at least 1".into()));
        }
        if self.mode != LiquidMode::None && !(2..=MAX_ORDER).contains(&self.max_order) {
            return Err(Error::InvalidOrder { order: self.max_order });
        }
        if self.max_order > MAX_ORDER {
            return Err(Error::InvalidOrder { order: self.max_order });
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max && self.dt_max.is_finite()) {
            return Err(Error::InvalidRange(format!(
                "need 0 < dt_min <= dt_max, got [{}, {}]",
                self.dt_min, self.dt_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_features: usize,
    pub classes: usize,
    pub layers: Vec<LayerConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_features: 1,
            classes: 2,
            layers: vec![LayerConfig::default()],
        }
    }
}

impl ModelConfig {
    pub fn features(&self) -> usize {
        self.layers.first().map_or(0, |l| l.features)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if self.input_features == 0 || self.classes == 0 {
            return Err(Error::Config("input_features and classes must be at least 1".into()));
        }
        let h = self.features();
        for layer in &self.layers {
            layer.validate()?;
            if layer.features != h {
                return Err(Error::Config("all layers must share the feature count".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlots {
    /// `features × state_size`, row per feature.
    pub c: Range<usize>,
    pub log_dt: Range<usize>,
    pub skip: Range<usize>,
}

/// Where each parameter group lives inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    /// `features × input_features`.
    pub lift_w: Range<usize>,
    pub lift_b: Range<usize>,
    pub layers: Vec<LayerSlots>,
    /// `classes × features`.
    pub readout_w: Range<usize>,
    pub readout_b: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let r = next..next + n;
            next += n;
            r
        };
        let h = cfg.features();
        let lift_w = take(h * cfg.input_features);
        let lift_b = take(h);
        let layers = cfg
            .layers
            .iter()
            .map(|l| LayerSlots {
                c: take(h * l.state_size),
                log_dt: take(h),
                skip: take(h),
            })
            .collect();
        let readout_w = take(cfg.classes * h);
        let readout_b = take(cfg.classes);
        Self {
            lift_w,
            lift_b,
            layers,
            readout_w,
            readout_b,
            total: next,
        }
    }
}

/// Evaluation disables dropout; training draws a mask from the given seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Eval,
    Train { mask_seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ModelStack {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    bases: Vec<LegsDplr>,
}

impl ModelStack {
    /// Random initialisation: normal lift and output rows, log-uniform steps,
    /// zero biases and skips.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let h = config.features();
        for p in &mut params[layout.lift_w.clone()] {
            *p = rng.sample::<f64, _>(StandardNormal);
        }
        for (layer, slots) in config.layers.iter().zip(&layout.layers) {
            let scale = 1.0 / (layer.state_size as f64).sqrt();
            for p in &mut params[slots.c.clone()] {
                *p = scale * rng.sample::<f64, _>(StandardNormal);
            }
            let sched = init_dt_schedule(h, layer.dt_min, layer.dt_max, rng.random())?;
            for (p, dt) in params[slots.log_dt.clone()].iter_mut().zip(&sched.per_feature_dt) {
                *p = dt.ln();
            }
        }
        let scale = 1.0 / (h as f64).sqrt();
        for p in &mut params[layout.readout_w.clone()] {
            *p = scale * rng.sample::<f64, _>(StandardNormal);
        }
        let bases = config
            .layers
            .iter()
            .map(|l| nplr_decompose(l.state_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            layout,
            params,
            bases,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Logits `(batch, classes)` for the current parameters.
    pub fn forward(&self, batch: &SequenceBatch, phase: Phase) -> Result<Vec<Vec<f64>>> {
        self.forward_with(&self.params, batch, phase)
    }

    /// Same as [`ModelStack::forward`] with a substitute parameter vector.
    pub fn forward_with(&self, params: &[f64], batch: &SequenceBatch, phase: Phase) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        if params.len() != self.layout.total {
            return Err(Error::Config(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.layout.total
            )));
        }
        if batch.features != cfg.input_features {
            return Err(Error::Config(format!(
                "batch has {} features, model expects {}",
                batch.features, cfg.input_features
            )));
        }
        let (nb, l, h) = (batch.batch, batch.length, cfg.features());
        let lift_w = &params[self.layout.lift_w.clone()];
        let lift_b = &params[self.layout.lift_b.clone()];
        let mut x = SequenceBatch::zeros(nb, l, h);
        for b in 0..nb {
            for t in 0..l {
                for f in 0..h {
                    let mut v = lift_b[f];
                    for i in 0..cfg.input_features {
                        v += lift_w[f * cfg.input_features + i] * batch.get(b, t, i);
                    }
                    x.set(b, t, f, v);
                }
            }
        }

        for (idx, (layer, slots)) in cfg.layers.iter().zip(&self.layout.layers).enumerate() {
            let z = if layer.prenorm {
                normalize(&x, layer.norm)
            } else {
                x.clone()
            };
            let mut out = SequenceBatch::zeros(nb, l, h);
            for f in 0..h {
                let c = &params[slots.c.start + f * layer.state_size..][..layer.state_size];
                let dt = params[slots.log_dt.start + f].exp();
                let skip = params[slots.skip.start + f];
                let sys = self.bases[idx].with_output(c)?;
                let kernels = LiquidS4Kernels::build(&sys, dt, l, layer.mode, layer.max_order, layer.window)?;
                for b in 0..nb {
                    let u = z.channel(b, f);
                    let y = kernels.apply(&u)?;
                    for t in 0..l {
                        out.set(b, t, f, layer.activation.apply(y[t] + skip * u[t]));
                    }
                }
            }
            if let Phase::Train { mask_seed } = phase {
                if layer.dropout > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed ^ (idx as u64).wrapping_mul(0x9E37_79B9));
                    let keep = 1.0 - layer.dropout;
                    for v in &mut out.values {
                        *v = if rng.random::<f64>() < keep { *v / keep } else { 0.0 };
                    }
                }
            }
            if layer.residual {
                for (o, r) in out.values.iter_mut().zip(&x.values) {
                    *o += r;
                }
            }
            x = if layer.prenorm {
                out
            } else {
                normalize(&out, layer.norm)
            };
        }

        let w = &params[self.layout.readout_w.clone()];
        let bias = &params[self.layout.readout_b.clone()];
        let mut logits = Vec::with_capacity(nb);
        for b in 0..nb {
            let pooled: Vec<f64> = (0..h)
                .map(|f| (0..l).map(|t| x.get(b, t, f)).sum::<f64>() / l.max(1) as f64)
                .collect();
            logits.push(
                (0..cfg.classes)
                    .map(|k| bias[k] + (0..h).map(|f| w[k * h + f] * pooled[f]).sum::<f64>())
                    .collect(),
            );
        }
        Ok(logits)
    }
}

const NORM_EPS: f64 = 1e-5;

/// Layer norm across features per time step, or batch norm per feature over
/// batch and time. No learned affine.
fn normalize(x: &SequenceBatch, norm: Norm) -> SequenceBatch {
    let mut out = x.clone();
    let (nb, l, h) = (x.batch, x.length, x.features);
    match norm {
        Norm::None => {}
        Norm::Layer => {
            for b in 0..nb {
                for t in 0..l {
                    let row: Vec<f64> = (0..h).map(|f| x.get(b, t, f)).collect();
                    let mean = row.iter().sum::<f64>() / h as f64;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h as f64;
                    for (f, v) in row.iter().enumerate() {
                        out.set(b, t, f, (v - mean) / (var + NORM_EPS).sqrt());
                    }
                }
            }
        }
        Norm::Batch => {
            let count = (nb * l).max(1) as f64;
            for f in 0..h {
                let vals = || (0..nb).flat_map(move |b| (0..l).map(move |t| (b, t)));
                let mean = vals().map(|(b, t)| x.get(b, t, f)).sum::<f64>() / count;
                let var = vals().map(|(b, t)| (x.get(b, t, f) - mean).powi(2)).sum::<f64>() / count;
                for (b, t) in vals() {
                    out.set(b, t, f, (x.get(b, t, f) - mean) / (var + NORM_EPS).sqrt());
                }
            }
        }
    }
    out
}
