use pillarmatch_autodiff::{Graph, RunningStats, Scalar, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::transport::{Marginals, SinkhornMode};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LinearIx {
    pub weight: usize,
    pub bias: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct NormIx {
    pub gamma: usize,
    pub beta: usize,
    /// Index into the running-statistics buffers.
    pub stats: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerIx {
    pub query: usize,
    pub key: usize,
    pub value: usize,
    pub merge: usize,
    pub ffn: Option<(LinearIx, LinearIx)>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub pillar: LinearIx,
    pub pillar_norm: NormIx,
    pub position_hidden: Vec<(LinearIx, NormIx)>,
    pub position_out: LinearIx,
    pub layers: Vec<LayerIx>,
    pub projection: usize,
    pub dustbin: usize,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// Uniform in `+-gain * sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize, gain: f64 },
    Const(f64),
}

struct Spec {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
    norm_names: Vec<String>,
    norm_channels: Vec<usize>,
}

impl Spec {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn linear(&mut self, name: &str, input: usize, output: usize, bias: bool) -> LinearIx {
        let weight = self.add(
            format!("{name}.weight"),
            vec![output, input],
            Init::Xavier { fan_in: input, fan_out: output, gain: 1.0 },
        );
        let bias = bias.then(|| self.add(format!("{name}.bias"), vec![output], Init::Const(0.0)));
        LinearIx { weight, bias }
    }

    fn norm(&mut self, name: &str, channels: usize) -> NormIx {
        let gamma = self.add(format!("{name}.gamma"), vec![channels], Init::Const(1.0));
        let beta = self.add(format!("{name}.beta"), vec![channels], Init::Const(0.0));
        self.norm_names.push(name.to_string());
        self.norm_channels.push(channels);
        NormIx { gamma, beta, stats: self.norm_names.len() - 1 }
    }
}

fn build(config: &ModelConfig) -> (Layout, Spec) {
    let h = &config.hyper;
    let dp = h.feature_depth;
    let mut s = Spec {
        names: Vec::new(),
        shapes: Vec::new(),
        inits: Vec::new(),
        norm_names: Vec::new(),
        norm_channels: Vec::new(),
    };
    // Linear maps feeding batch normalization carry no bias; BN's shift covers it.
    let pillar = s.linear("pillar", h.input_depth(), dp, false);
    let pillar_norm = s.norm("pillar.norm", dp);
    let mut position_hidden = Vec::new();
    let mut width = 3;
    for (k, &w) in config.options.position_widths.iter().enumerate() {
        let lin = s.linear(&format!("position.{k}"), width, w, false);
        let norm = s.norm(&format!("position.{k}.norm"), w);
        position_hidden.push((lin, norm));
        width = w;
    }
    let position_out = s.linear("position.out", width, dp, true);
    let head_fans = Init::Xavier { fan_in: dp, fan_out: h.head_depth(), gain: 1.0 };
    let layers = (0..h.layers)
        .map(|l| {
            let mut proj = |what: &str, init| s.add(format!("attention.{l}.{what}"), vec![dp, dp], init);
            let query = proj("query", head_fans);
            let key = proj("key", head_fans);
            let value = proj("value", head_fans);
            // Residual branches start damped so the state norm does not grow with depth.
            let merge = proj("merge", Init::Xavier { fan_in: dp, fan_out: dp, gain: 1.0 / h.layers as f64 });
            let ffn = config.options.feed_forward.then(|| {
                (
                    s.linear(&format!("attention.{l}.ffn.0"), dp, 2 * dp, true),
                    s.linear(&format!("attention.{l}.ffn.1"), 2 * dp, dp, true),
                )
            });
            LayerIx { query, key, value, merge, ffn }
        })
        .collect();
    // Scores are unscaled dot products; a D'^(-1/4) gain on each side starts
    // them at the usual 1/sqrt(D') temperature.
    let projection_gain = (dp as f64).powf(-0.25);
    let projection = s.add(
        "projection".into(),
        vec![dp, dp],
        Init::Xavier { fan_in: dp, fan_out: dp, gain: projection_gain },
    );
    let dustbin = s.add("dustbin".into(), vec![1], Init::Const(config.options.dustbin_init));
    let layout = Layout {
        pillar,
        pillar_norm,
        position_hidden,
        position_out,
        layers,
        projection,
        dustbin,
    };
    (layout, s)
}

/// Every learnable tensor plus the batch-normalization running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T> {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    norm_names: Vec<String>,
    norms: Vec<RunningStats<T>>,
    pub(crate) layout: Layout,
}

impl<T: Scalar> ModelParameters<T> {
    /// Seeded Xavier-uniform weights, zero biases, unit scales.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, spec) = build(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = spec
            .shapes
            .iter()
            .zip(&spec.inits)
            .map(|(shape, init)| {
                let len: usize = shape.iter().product();
                let data = match *init {
                    Init::Const(c) => vec![T::from_f64(c); len],
                    Init::Xavier { fan_in, fan_out, gain } => {
                        let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..len).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect()
                    }
                };
                Tensor::new(shape.clone(), data).expect("shape matches data")
            })
            .collect();
        let momentum = T::from_f64(config.options.norm_momentum);
        Ok(ModelParameters {
            config: config.clone(),
            names: spec.names,
            tensors,
            norms: spec.norm_channels.iter().map(|&c| RunningStats::new(c, momentum)).collect(),
            norm_names: spec.norm_names,
            layout,
        })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_parts(config: &ModelConfig, tensors: Vec<(String, Tensor<T>)>, norms: Vec<(String, RunningStats<T>)>) -> Result<Self> {
        let mut model = Self::init(config, 0)?;
        if tensors.len() != model.tensors.len() || norms.len() != model.norms.len() {
            return Err(Error::Config(format!(
                "expected {} tensors and {} norm buffers, found {} and {}",
                model.tensors.len(),
                model.norms.len(),
                tensors.len(),
                norms.len()
            )));
        }
        for (k, (name, t)) in tensors.into_iter().enumerate() {
            if name != model.names[k] || t.shape() != model.tensors[k].shape() {
                return Err(Error::Config(format!(
                    "tensor {k}: expected {} {:?}, found {name} {:?}",
                    model.names[k],
                    model.tensors[k].shape(),
                    t.shape()
                )));
            }
            model.tensors[k] = t;
        }
        for (k, (name, s)) in norms.into_iter().enumerate() {
            if name != model.norm_names[k] || s.channels() != model.norms[k].channels() || s.var.len() != s.mean.len() {
                return Err(Error::Config(format!("norm buffer {k}: expected {}, found {name}", model.norm_names[k])));
            }
            model.norms[k] = s;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Changes how the assignment is normalized; no tensor depends on it.
    pub fn set_sinkhorn(&mut self, iters: usize, mode: SinkhornMode, marginals: Marginals) -> Result<()> {
        if iters == 0 {
            return Err(Error::Config("Sinkhorn needs at least one iteration".into()));
        }
        self.config.hyper.sinkhorn_iters = iters;
        self.config.options.sinkhorn_mode = mode;
        self.config.options.marginals = marginals;
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn norm_names(&self) -> &[String] {
        &self.norm_names
    }

    pub fn norm_stats(&self) -> &[RunningStats<T>] {
        &self.norms
    }

    pub fn norm_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.norms
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|k| &self.tensors[k])
    }

    /// Replaces a tensor by name; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let k = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no parameter named {name}")))?;
        if value.shape() != self.tensors[k].shape() {
            return Err(Error::Argument(format!(
                "{name}: shape {:?} does not match {:?}",
                value.shape(),
                self.tensors[k].shape()
            )));
        }
        self.tensors[k] = value;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        ModelParameters {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            norm_names: self.norm_names.clone(),
            norms: self.norms.iter().map(RunningStats::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Adds every tensor to `g` as a learnable leaf, in storage order.
    pub fn bind(&self, g: &mut Graph<T>) -> Result<Vec<Var>> {
        self.tensors
            .iter()
            .map(|t| g.param(t.clone()).map_err(Error::from))
            .collect()
    }
}
