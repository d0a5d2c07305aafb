use pillarmatch_autodiff::{BatchStats, Graph, NormMode, Scalar, Tensor, Var};

use super::params::{LinearIx, NormIx};
use super::ModelParameters;
use crate::transport::{augment_dustbin, score_matrix, sinkhorn_graph, AssignmentMatrix};
use crate::{Error, Result};

/// Network input for one scan pair: flattened pillar stacks and key-point positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInput<T> {
    /// `n x (z * 11)`.
    pub source_stacks: Tensor<T>,
    /// `n x 3`.
    pub source_positions: Tensor<T>,
    pub target_stacks: Tensor<T>,
    pub target_positions: Tensor<T>,
}

impl<T: Scalar> PairInput<T> {
    pub fn n(&self) -> usize {
        self.source_stacks.rows()
    }

    pub fn m(&self) -> usize {
        self.target_stacks.rows()
    }

    pub fn cast<U: Scalar>(&self) -> PairInput<U> {
        PairInput {
            source_stacks: self.source_stacks.cast(),
            source_positions: self.source_positions.cast(),
            target_stacks: self.target_stacks.cast(),
            target_positions: self.target_positions.cast(),
        }
    }

    /// The same pair with the target key-points reordered: new row `k` is old row `perm[k]`.
    pub fn permute_target(&self, perm: &[usize]) -> PairInput<T> {
        let pick = |t: &Tensor<T>| {
            let c = t.cols();
            let data = perm.iter().flat_map(|&k| t.row(k).to_vec()).collect();
            Tensor::matrix(perm.len(), c, data).expect("permuted shape")
        };
        PairInput {
            source_stacks: self.source_stacks.clone(),
            source_positions: self.source_positions.clone(),
            target_stacks: pick(&self.target_stacks),
            target_positions: pick(&self.target_positions),
        }
    }
}

/// Which statistics batch normalization uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormUsage {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored running statistics (inference).
    Running,
}

#[derive(Clone, Copy, Debug)]
pub struct PairOutput {
    pub descriptors_source: Var,
    pub descriptors_target: Var,
    /// Raw `n x m` scores.
    pub scores: Var,
    /// `(n+1) x (m+1)` log assignment after Sinkhorn.
    pub log_assignment: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub pairs: Vec<PairOutput>,
    /// Per normalization layer, the batch statistics (empty with [`NormUsage::Running`]).
    pub batch_stats: Vec<BatchStats<T>>,
}

struct Ctx<'a, T: Scalar> {
    model: &'a ModelParameters<T>,
    vars: &'a [Var],
    usage: NormUsage,
    stats: Vec<BatchStats<T>>,
}

impl<T: Scalar> Ctx<'_, T> {
    fn linear(&self, g: &mut Graph<T>, x: Var, ix: LinearIx) -> Result<Var> {
        Ok(g.linear(x, self.vars[ix.weight], ix.bias.map(|b| self.vars[b]))?)
    }

    fn norm_relu(&mut self, g: &mut Graph<T>, x: Var, ix: NormIx) -> Result<Var> {
        let eps = T::from_f64(self.model.config().options.norm_eps);
        let mode = match self.usage {
            NormUsage::Batch => NormMode::Train,
            NormUsage::Running => NormMode::Eval(&self.model.norm_stats()[ix.stats]),
        };
        let (y, stats) = g.batch_norm(x, self.vars[ix.gamma], self.vars[ix.beta], mode, eps)?;
        if let Some(s) = stats {
            self.stats.push(s);
        }
        Ok(g.relu(y)?)
    }
}

fn check_bound<T: Scalar>(model: &ModelParameters<T>, vars: &[Var]) -> Result<()> {
    if vars.len() != model.tensors().len() {
        return Err(Error::Argument(format!(
            "{} bound variables for {} parameters",
            vars.len(),
            model.tensors().len()
        )));
    }
    Ok(())
}

/// `ReLU(BN(W_f f + b))` on stacked pillar rows.
pub fn encode_pillars<T: Scalar>(
    g: &mut Graph<T>,
    model: &ModelParameters<T>,
    vars: &[Var],
    stacks: Var,
    usage: NormUsage,
) -> Result<(Var, Vec<BatchStats<T>>)> {
    check_bound(model, vars)?;
    let mut ctx = Ctx { model, vars, usage, stats: Vec::new() };
    let l = &model.layout;
    let x = ctx.linear(g, stacks, l.pillar)?;
    let y = ctx.norm_relu(g, x, l.pillar_norm)?;
    Ok((y, ctx.stats))
}

/// Position MLP: hidden `linear -> BN -> ReLU` blocks, then a plain linear output.
pub fn encode_positions<T: Scalar>(
    g: &mut Graph<T>,
    model: &ModelParameters<T>,
    vars: &[Var],
    positions: Var,
    usage: NormUsage,
) -> Result<(Var, Vec<BatchStats<T>>)> {
    check_bound(model, vars)?;
    let mut ctx = Ctx { model, vars, usage, stats: Vec::new() };
    let l = &model.layout;
    let mut x = positions;
    for &(lin, norm) in &l.position_hidden {
        let y = ctx.linear(g, x, lin)?;
        x = ctx.norm_relu(g, y, norm)?;
    }
    let out = ctx.linear(g, x, l.position_out)?;
    Ok((out, ctx.stats))
}

/// Layer-0 node states: descriptor plus positional embedding.
pub fn init_nodes<T: Scalar>(g: &mut Graph<T>, descriptors: Var, positions: Var) -> Result<Var> {
    Ok(g.add(descriptors, positions)?)
}

/// `softmax(q k^T / scale) v`, softmax over keys.
pub fn attention<T: Scalar>(g: &mut Graph<T>, q: Var, k: Var, v: Var, scale: f64) -> Result<Var> {
    let s = g.matmul_nt(q, k)?;
    let s = g.scale(s, T::from_f64(1.0 / scale))?;
    let a = g.softmax(s, 1)?;
    Ok(g.matmul(a, v)?)
}

/// Multi-head message from `sources` to `queries` using layer `l` weights.
fn message<T: Scalar>(g: &mut Graph<T>, model: &ModelParameters<T>, vars: &[Var], l: usize, queries: Var, sources: Var) -> Result<Var> {
    let ix = &model.layout.layers[l];
    let h = model.config().hyper.heads;
    let dh = model.config().hyper.head_depth();
    let scale = model.config().attention_scale();
    let q = g.linear(queries, vars[ix.query], None)?;
    let k = g.linear(sources, vars[ix.key], None)?;
    let v = g.linear(sources, vars[ix.value], None)?;
    let mut heads = Vec::with_capacity(h);
    for head in 0..h {
        let cols = head * dh..(head + 1) * dh;
        let qh = g.slice_cols(q, cols.clone())?;
        let kh = g.slice_cols(k, cols.clone())?;
        let vh = g.slice_cols(v, cols)?;
        heads.push(attention(g, qh, kh, vh, scale)?);
    }
    let cat = g.concat(&heads, 1)?;
    let dp = model.config().hyper.feature_depth;
    if g.value(cat).cols() != dp {
        return Err(Error::Argument(format!("heads concatenate to {} columns, expected {dp}", g.value(cat).cols())));
    }
    Ok(g.linear(cat, vars[ix.merge], None)?)
}

fn feed_forward<T: Scalar>(g: &mut Graph<T>, model: &ModelParameters<T>, vars: &[Var], l: usize, x: Var) -> Result<Var> {
    match model.layout.layers[l].ffn {
        None => Ok(x),
        Some((a, b)) => {
            let h = g.linear(x, vars[a.weight], a.bias.map(|k| vars[k]))?;
            let h = g.relu(h)?;
            let y = g.linear(h, vars[b.weight], b.bias.map(|k| vars[k]))?;
            Ok(g.add(x, y)?)
        }
    }
}

/// One residual attention layer over both graphs; self edges on even `l`,
/// cross edges on odd `l`.
pub fn gnn_layer<T: Scalar>(
    g: &mut Graph<T>,
    model: &ModelParameters<T>,
    vars: &[Var],
    l: usize,
    state_k: Var,
    state_l: Var,
) -> Result<(Var, Var)> {
    check_bound(model, vars)?;
    if l >= model.layout.layers.len() {
        return Err(Error::Argument(format!("layer {l} of {}", model.layout.layers.len())));
    }
    let (src_k, src_l) = if l % 2 == 0 { (state_k, state_l) } else { (state_l, state_k) };
    let mk = message(g, model, vars, l, state_k, src_k)?;
    let ml = message(g, model, vars, l, state_l, src_l)?;
    let nk = g.add(state_k, mk)?;
    let nl = g.add(state_l, ml)?;
    Ok((feed_forward(g, model, vars, l, nk)?, feed_forward(g, model, vars, l, nl)?))
}

/// Matching descriptors `W_m n`.
pub fn final_projection<T: Scalar>(g: &mut Graph<T>, model: &ModelParameters<T>, vars: &[Var], state: Var) -> Result<Var> {
    check_bound(model, vars)?;
    Ok(g.linear(state, vars[model.layout.projection], None)?)
}

fn check_input<T: Scalar>(model: &ModelParameters<T>, p: &PairInput<T>) -> Result<()> {
    let depth = model.config().hyper.input_depth();
    let ok = p.source_stacks.cols() == depth
        && p.target_stacks.cols() == depth
        && p.source_positions.cols() == 3
        && p.target_positions.cols() == 3
        && p.source_positions.rows() == p.n()
        && p.target_positions.rows() == p.m()
        && p.n() > 0
        && p.m() > 0;
    if !ok {
        return Err(Error::Config(format!(
            "pair input shapes {:?}/{:?}/{:?}/{:?} do not fit input depth {depth}",
            p.source_stacks.shape(),
            p.source_positions.shape(),
            p.target_stacks.shape(),
            p.target_positions.shape()
        )));
    }
    Ok(())
}

fn stack_rows<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let cols = parts[0].cols();
    let rows = parts.iter().map(|t| t.rows()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for t in parts {
        data.extend_from_slice(t.as_slice());
    }
    Tensor::matrix(rows, cols, data).expect("stacked shape")
}

impl<T: Scalar> ModelParameters<T> {
    /// Runs the whole pipeline on a batch of pairs. Batch normalization
    /// pools over every pillar of every pair in the batch.
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], inputs: &[&PairInput<T>], usage: NormUsage) -> Result<ForwardOutput<T>> {
        check_bound(self, vars)?;
        if inputs.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        for p in inputs {
            check_input(self, p)?;
        }
        let mut stacks = Vec::new();
        let mut positions = Vec::new();
        for p in inputs {
            stacks.extend([&p.source_stacks, &p.target_stacks]);
            positions.extend([&p.source_positions, &p.target_positions]);
        }
        let stacks = g.constant(stack_rows(&stacks))?;
        let positions = g.constant(stack_rows(&positions))?;
        let (f, mut batch_stats) = encode_pillars(g, self, vars, stacks, usage)?;
        let (p, pos_stats) = encode_positions(g, self, vars, positions, usage)?;
        batch_stats.extend(pos_stats);
        let nodes = init_nodes(g, f, p)?;

        let sinkhorn = self.config().sinkhorn();
        let mut pairs = Vec::with_capacity(inputs.len());
        let mut row = 0;
        for inp in inputs {
            let (n, m) = (inp.n(), inp.m());
            let mut nk = g.slice_rows(nodes, row..row + n)?;
            let mut nl = g.slice_rows(nodes, row + n..row + n + m)?;
            row += n + m;
            for l in 0..self.layout.layers.len() {
                (nk, nl) = gnn_layer(g, self, vars, l, nk, nl)?;
            }
            let dk = final_projection(g, self, vars, nk)?;
            let dl = final_projection(g, self, vars, nl)?;
            let scores = score_matrix(g, dk, dl)?;
            let aug = augment_dustbin(g, scores, vars[self.layout.dustbin])?;
            let log_assignment = sinkhorn_graph(g, aug, &sinkhorn)?;
            pairs.push(PairOutput {
                descriptors_source: dk,
                descriptors_target: dl,
                scores,
                log_assignment,
            });
        }
        Ok(ForwardOutput { pairs, batch_stats })
    }

    /// Folds batch statistics from a training forward pass into the running buffers.
    pub fn update_running_stats(&mut self, stats: &[BatchStats<T>]) -> Result<()> {
        if stats.len() != self.norm_stats().len() {
            return Err(Error::Argument(format!(
                "{} batch statistics for {} normalization layers",
                stats.len(),
                self.norm_stats().len()
            )));
        }
        for (r, s) in self.norm_stats_mut().iter_mut().zip(stats) {
            r.update(s);
        }
        Ok(())
    }

    /// Inference with running statistics.
    pub fn infer(&self, input: &PairInput<T>) -> Result<AssignmentMatrix<T>> {
        let mut g = Graph::new();
        let vars = self.bind_constants(&mut g)?;
        let out = self.forward(&mut g, &vars, &[input], NormUsage::Running)?;
        Ok(AssignmentMatrix {
            log_p: g.value(out.pairs[0].log_assignment).clone(),
            iterations: self.config().hyper.sinkhorn_iters,
        })
    }

    /// Adds every tensor as a constant leaf, for gradient-free evaluation.
    pub fn bind_constants(&self, g: &mut Graph<T>) -> Result<Vec<Var>> {
        self.tensors()
            .iter()
            .map(|t| g.constant(t.clone()).map_err(Error::from))
            .collect()
    }
}
