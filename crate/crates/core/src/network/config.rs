use serde::{Deserialize, Serialize};

use super::FEATURES_PER_POINT;
use crate::transport::{Marginals, SinkhornConfig, SinkhornMode};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Key-points in the source scan.
    pub n: usize,
    /// Key-points in the target scan.
    pub m: usize,
    /// Points per pillar.
    pub z: usize,
    /// Pillar radius (meters).
    pub d: f64,
    /// Descriptor width D'.
    pub feature_depth: usize,
    pub heads: usize,
    /// Attention layers; even layers attend within a scan, odd ones across.
    pub layers: usize,
    pub sinkhorn_iters: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n: 100,
            m: 100,
            z: 100,
            d: 0.5,
            feature_depth: 32,
            heads: 8,
            layers: 6,
            sinkhorn_iters: 100,
        }
    }
}

impl HyperParams {
    /// Flattened pillar width `z * 11`.
    pub fn input_depth(&self) -> usize {
        self.z * FEATURES_PER_POINT
    }

    pub fn head_depth(&self) -> usize {
        self.feature_depth / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.z == 0 {
            return Err(Error::Config("n, m and z must be positive".into()));
        }
        if !(self.d > 0.0) {
            return Err(Error::Config(format!("pillar radius must be positive, got {}", self.d)));
        }
        if self.heads == 0 || self.feature_depth == 0 || self.feature_depth % self.heads != 0 {
            return Err(Error::Config(format!(
                "feature depth {} must be a positive multiple of the head count {}",
                self.feature_depth, self.heads
            )));
        }
        if self.sinkhorn_iters == 0 {
            return Err(Error::Config("Sinkhorn needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionScale {
    /// Divide scores by sqrt(D').
    #[default]
    FeatureDepth,
    /// Divide scores by sqrt(D' / h).
    HeadDepth,
}

/// Architecture switches beyond the core hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub attention_scale: AttentionScale,
    /// Residual two-layer MLP after each attention update.
    pub feed_forward: bool,
    /// Hidden widths of the key-point position encoder; the output is D'.
    pub position_widths: Vec<usize>,
    pub sinkhorn_mode: SinkhornMode,
    pub marginals: Marginals,
    pub norm_momentum: f64,
    pub norm_eps: f64,
    pub dustbin_init: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            attention_scale: AttentionScale::FeatureDepth,
            feed_forward: false,
            position_widths: vec![32, 64, 128, 256],
            sinkhorn_mode: SinkhornMode::Alternating,
            marginals: Marginals::Uniform,
            norm_momentum: 0.9,
            norm_eps: 1e-5,
            dustbin_init: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hyper: HyperParams,
    pub options: ModelOptions,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.options.position_widths.contains(&0) {
            return Err(Error::Config("position encoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.options.norm_momentum) || !(self.options.norm_eps > 0.0) {
            return Err(Error::Config("norm momentum must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            iters: self.hyper.sinkhorn_iters,
            mode: self.options.sinkhorn_mode,
            marginals: self.options.marginals,
        }
    }

    pub fn attention_scale(&self) -> f64 {
        match self.options.attention_scale {
            AttentionScale::FeatureDepth => (self.hyper.feature_depth as f64).sqrt(),
            AttentionScale::HeadDepth => (self.hyper.head_depth() as f64).sqrt(),
        }
    }
}
