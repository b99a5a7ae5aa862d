//! Edge-GNN: a graph neural network over the bipartite BS-UE graph whose
//! node and edge representations are both updated, with beamformers read
//! off the final edge representations.
//!
//! One forward pass is
//!
//! 1. preprocessing: node-wise and edge-wise MLPs lift `P_m`, `sigma_k^2`
//!    and `h_{m,k}` to width `d`;
//! 2. `L` updating layers, each computing a BS update, a UE update and an
//!    edge update from the previous layer's state only;
//! 3. postprocessing: an edge-wise MLP maps every edge to `2N` reals
//!    (real parts, then imaginary parts) followed by power normalization.
//!
//! Every MLP is shared across all nodes (or edges) of its kind and every
//! aggregation is an elementwise max, so relabeling BSs and UEs relabels the
//! output in the same way. Batches of instances are run as one disjoint
//! union graph on a single tape.

mod params;
mod permutation;

use serde::{Deserialize, Serialize};

pub use params::{
    init_params, BoundLayer, BoundMlp, BoundParams, Dense, LayerParams, Mlp, ModelParams, MLPS_PER_LAYER,
};
pub use permutation::{PermutationPair, Permute};

use crate::error::{Error, Result};
use crate::numerics::{ComplexSplit, ComplexVar, Scalar, Tape, Tensor, Var};
use crate::objective::{apply_power_mode, power_mode_on_tape, BeamformerTensor, PowerMode};
use crate::scenario::ProblemInstance;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of updating layers `L`.
    pub layers: usize,
    /// Representation width `d` shared by BS, UE and edge representations.
    pub width: usize,
    /// Antennas per BS; fixes the edge input and output widths.
    pub antennas: usize,
    /// Linear layers per MLP.
    pub mlp_depth: usize,
    pub aggregator: Aggregator,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            width: 64,
            antennas: 2,
            mlp_depth: 3,
            aggregator: Aggregator::Max,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 || self.antennas == 0 || self.mlp_depth == 0 {
            return Err(Error::Argument(format!("invalid model config {self:?}")));
        }
        Ok(())
    }
}

/// BS-UE connectivity. `nbr_bs[m]` lists the UEs served by BS `m` and
/// `nbr_ue[k]` the BSs serving UE `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub m: usize,
    pub k: usize,
    pub nbr_bs: Vec<Vec<usize>>,
    pub nbr_ue: Vec<Vec<usize>>,
}

impl Topology {
    /// Every BS serves every UE.
    pub fn full(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            nbr_bs: vec![(0..k).collect(); m],
            nbr_ue: vec![(0..m).collect(); k],
        }
    }

    /// Builds a topology from the UE lists of every BS; the UE-side lists
    /// are derived, so the result is symmetric.
    pub fn from_bs_neighbors(k: usize, nbr_bs: Vec<Vec<usize>>) -> Result<Self> {
        let m = nbr_bs.len();
        let mut nbr_ue = vec![Vec::new(); k];
        for (bs, ues) in nbr_bs.iter().enumerate() {
            for &ue in ues {
                if ue >= k {
                    return Err(Error::Argument(format!("UE {ue} out of range for K={k}")));
                }
                if nbr_ue[ue].contains(&bs) {
                    return Err(Error::Argument(format!("duplicate link ({bs}, {ue})")));
                }
                nbr_ue[ue].push(bs);
            }
        }
        Ok(Self { m, k, nbr_bs, nbr_ue })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.m).all(|m| (0..self.k).all(|k| self.nbr_bs[m].contains(&k) == self.nbr_ue[k].contains(&m)))
    }

    pub fn connected(&self, m: usize, k: usize) -> bool {
        self.nbr_bs[m].contains(&k)
    }
}

/// Row layout of a (possibly batched) graph on the tape.
///
/// BS rows, UE rows and edge rows of every instance are concatenated in
/// batch order; edge `(m, k)` of an instance occupies row `m * K + k` of that
/// instance's block.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    pub num_bs: usize,
    pub num_ue: usize,
    pub num_edges: usize,
    /// Global BS row of each edge.
    pub edge_bs: Vec<usize>,
    /// Global UE row of each edge.
    pub edge_ue: Vec<usize>,
    /// For each BS: its edges to served UEs.
    pub bs_groups: Vec<Vec<usize>>,
    /// For each UE: its edges from serving BSs.
    pub ue_groups: Vec<Vec<usize>>,
    /// For each edge `(m, k)`: rows of the stacked `[BS-side; UE-side]`
    /// messages, i.e. edges `(m, k1)`, `k1 != k`, then `num_edges` + edges
    /// `(m1, k)`, `m1 != m`.
    pub edge_groups: Vec<Vec<usize>>,
    /// Edge row is a real link.
    pub edge_mask: Vec<bool>,
    pub blocks: Vec<GraphBlock>,
}

/// Offsets of one instance inside a [`GraphIndex`].
#[derive(Clone, Copy, Debug)]
pub struct GraphBlock {
    pub m: usize,
    pub k: usize,
    pub bs_offset: usize,
    pub ue_offset: usize,
    pub edge_offset: usize,
}

impl GraphIndex {
    pub fn new(topologies: &[&Topology]) -> Self {
        let mut idx = GraphIndex {
            num_bs: 0,
            num_ue: 0,
            num_edges: 0,
            edge_bs: Vec::new(),
            edge_ue: Vec::new(),
            bs_groups: Vec::new(),
            ue_groups: Vec::new(),
            edge_groups: Vec::new(),
            edge_mask: Vec::new(),
            blocks: Vec::new(),
        };
        let total_edges: usize = topologies.iter().map(|t| t.m * t.k).sum();
        for topo in topologies {
            let block = GraphBlock {
                m: topo.m,
                k: topo.k,
                bs_offset: idx.num_bs,
                ue_offset: idx.num_ue,
                edge_offset: idx.num_edges,
            };
            let edge = |m: usize, k: usize| block.edge_offset + m * topo.k + k;
            for m in 0..topo.m {
                for k in 0..topo.k {
                    idx.edge_bs.push(block.bs_offset + m);
                    idx.edge_ue.push(block.ue_offset + k);
                    idx.edge_mask.push(topo.connected(m, k));
                    let mut group: Vec<usize> = topo.nbr_bs[m]
                        .iter()
                        .filter(|&&k1| k1 != k)
                        .map(|&k1| edge(m, k1))
                        .collect();
                    group.extend(
                        topo.nbr_ue[k]
                            .iter()
                            .filter(|&&m1| m1 != m)
                            .map(|&m1| total_edges + edge(m1, k)),
                    );
                    idx.edge_groups.push(group);
                }
            }
            for m in 0..topo.m {
                idx.bs_groups.push(topo.nbr_bs[m].iter().map(|&k| edge(m, k)).collect());
            }
            for k in 0..topo.k {
                idx.ue_groups.push(topo.nbr_ue[k].iter().map(|&m| edge(m, k)).collect());
            }
            idx.num_bs += topo.m;
            idx.num_ue += topo.k;
            idx.num_edges += topo.m * topo.k;
            idx.blocks.push(block);
        }
        idx
    }

    pub fn fully_connected(&self) -> bool {
        self.edge_mask.iter().all(|&c| c)
    }
}

/// Layer-`l` representations: `f_bs` is `[M, d]`, `f_ue` is `[K, d]` and
/// `e_rep` is `[M*K, d]` with edge rows in `(m, k)` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphState {
    pub f_bs: Var,
    pub f_ue: Var,
    pub e_rep: Var,
}

/// Deliberate defects used to exercise the equivariance checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Swap which of MLP5/MLP6 handles the BS-side and UE-side neighbors.
    SwapEdgeBranches,
    /// Scale MLP1 outputs by a factor depending on the UE index, as if the
    /// weights were not shared across UEs.
    UeIndexedMlp1,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardOptions {
    pub power_mode: PowerMode,
    pub fault: Option<Fault>,
}

fn check_instance(inst: &ProblemInstance, topo: &Topology, cfg: &ModelConfig) -> Result<()> {
    if inst.n != cfg.antennas {
        return Err(Error::shape(
            "edge_gnn",
            format!("instance has N={} antennas, model expects {}", inst.n, cfg.antennas),
        ));
    }
    if (inst.m, inst.k) != (topo.m, topo.k) {
        return Err(Error::shape(
            "edge_gnn",
            format!("topology ({}, {}) vs instance ({}, {})", topo.m, topo.k, inst.m, inst.k),
        ));
    }
    Ok(())
}

/// Lifts raw features to width-`d` representations with shared node-wise and
/// edge-wise MLPs.
pub fn preprocess<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &[&ProblemInstance],
    params: &BoundParams,
) -> Result<GraphState> {
    let n = batch.first().map_or(0, |i| i.n);
    let mut bs_feat = Vec::new();
    let mut ue_feat = Vec::new();
    let mut edge_feat = Vec::new();
    for inst in batch {
        if inst.n != n {
            return Err(Error::shape("preprocess", "mixed antenna counts in one batch"));
        }
        bs_feat.extend(inst.bs_power.iter().map(|&p| T::from_f64_lossy(p)));
        ue_feat.extend(inst.noise.iter().map(|&s| T::from_f64_lossy(s)));
        for e in 0..inst.m * inst.k {
            edge_feat.extend(inst.channels.re.row(e).iter().map(|&x| T::from_f64_lossy(x)));
            edge_feat.extend(inst.channels.im.row(e).iter().map(|&x| T::from_f64_lossy(x)));
        }
    }
    let (nb, nu) = (bs_feat.len(), ue_feat.len());
    let ne = edge_feat.len() / (2 * n).max(1);
    let bs_in = tape.leaf(Tensor::new(vec![nb, 1], bs_feat)?);
    let ue_in = tape.leaf(Tensor::new(vec![nu, 1], ue_feat)?);
    let edge_in = tape.leaf(Tensor::new(vec![ne, 2 * n], edge_feat)?);
    Ok(GraphState {
        f_bs: params.pre_bs.apply(tape, bs_in)?,
        f_ue: params.pre_ue.apply(tape, ue_in)?,
        e_rep: params.pre_edge.apply(tape, edge_in)?,
    })
}

/// `f_bs,m <- MLP2(f_bs,m, max_k MLP1(f_ue,k, e_{m,k}))` over served UEs.
pub fn bs_update<T: Scalar>(
    tape: &mut Tape<T>,
    state: &GraphState,
    index: &GraphIndex,
    layer: &BoundLayer,
    fault: Option<Fault>,
) -> Result<Var> {
    let ue_per_edge = tape.gather_rows(state.f_ue, &index.edge_ue)?;
    let input = tape.concat(&[ue_per_edge, state.e_rep])?;
    let mut messages = layer.mlp(1).apply(tape, input)?;
    if fault == Some(Fault::UeIndexedMlp1) {
        let factors: Vec<T> = index
            .edge_ue
            .iter()
            .enumerate()
            .map(|(e, &ue)| {
                let local = ue
                    - index
                        .blocks
                        .iter()
                        .rev()
                        .find(|b| b.edge_offset <= e)
                        .map_or(0, |b| b.ue_offset);
                T::from_f64_lossy(1.0 + 0.5 * local as f64)
            })
            .collect();
        let rows = factors.len();
        let scale = tape.leaf(Tensor::new(vec![rows, 1], factors)?);
        messages = tape.mul_col(messages, scale)?;
    }
    let aggregated = tape.segment_max(messages, &index.bs_groups)?;
    let combined = tape.concat(&[state.f_bs, aggregated])?;
    layer.mlp(2).apply(tape, combined)
}

/// `f_ue,k <- MLP4(f_ue,k, max_m MLP3(f_bs,m, e_{m,k}))` over serving BSs.
pub fn ue_update<T: Scalar>(
    tape: &mut Tape<T>,
    state: &GraphState,
    index: &GraphIndex,
    layer: &BoundLayer,
) -> Result<Var> {
    let bs_per_edge = tape.gather_rows(state.f_bs, &index.edge_bs)?;
    let input = tape.concat(&[bs_per_edge, state.e_rep])?;
    let messages = layer.mlp(3).apply(tape, input)?;
    let aggregated = tape.segment_max(messages, &index.ue_groups)?;
    let combined = tape.concat(&[state.f_ue, aggregated])?;
    layer.mlp(4).apply(tape, combined)
}

/// `e_{m,k} <- MLP7(e_{m,k}, max{ MLP5(e_{m,k1}, f_bs,m) : k1 != k } U
/// { MLP6(e_{m1,k}, f_ue,k) : m1 != m })`.
///
/// MLP5 depends only on the neighbor edge and its BS, so it is evaluated
/// once per edge and shared by every edge aggregating it (likewise MLP6).
pub fn edge_update<T: Scalar>(
    tape: &mut Tape<T>,
    state: &GraphState,
    index: &GraphIndex,
    layer: &BoundLayer,
    fault: Option<Fault>,
) -> Result<Var> {
    let (bs_side, ue_side) = match fault {
        Some(Fault::SwapEdgeBranches) => (layer.mlp(6), layer.mlp(5)),
        _ => (layer.mlp(5), layer.mlp(6)),
    };
    let bs_per_edge = tape.gather_rows(state.f_bs, &index.edge_bs)?;
    let via_bs_in = tape.concat(&[state.e_rep, bs_per_edge])?;
    let via_bs = bs_side.apply(tape, via_bs_in)?;
    let ue_per_edge = tape.gather_rows(state.f_ue, &index.edge_ue)?;
    let via_ue_in = tape.concat(&[state.e_rep, ue_per_edge])?;
    let via_ue = ue_side.apply(tape, via_ue_in)?;
    let stacked = tape.concat_rows(&[via_bs, via_ue])?;
    let aggregated = tape.segment_max(stacked, &index.edge_groups)?;
    let combined = tape.concat(&[state.e_rep, aggregated])?;
    layer.mlp(7).apply(tape, combined)
}

/// One updating layer; all three updates read the previous state only.
pub fn update_layer<T: Scalar>(
    tape: &mut Tape<T>,
    state: &GraphState,
    index: &GraphIndex,
    layer: &BoundLayer,
    fault: Option<Fault>,
) -> Result<GraphState> {
    Ok(GraphState {
        f_bs: bs_update(tape, state, index, layer, fault)?,
        f_ue: ue_update(tape, state, index, layer)?,
        e_rep: edge_update(tape, state, index, layer, fault)?,
    })
}

/// Maps final edge representations to beamformers and enforces the power
/// budgets per instance. Returns `[num_edges, N]` real/imaginary rows.
pub fn postprocess<T: Scalar>(
    tape: &mut Tape<T>,
    state: &GraphState,
    batch: &[&ProblemInstance],
    index: &GraphIndex,
    params: &BoundParams,
    mode: PowerMode,
) -> Result<Vec<ComplexVar>> {
    let n = batch.first().map_or(0, |i| i.n);
    let raw = params.post_edge.apply(tape, state.e_rep)?;
    let mut re = tape.slice_cols(raw, 0, n)?;
    let mut im = tape.slice_cols(raw, n, 2 * n)?;
    if !index.fully_connected() {
        let mask: Vec<T> = index
            .edge_mask
            .iter()
            .map(|&c| if c { T::one() } else { T::zero() })
            .collect();
        let mask = tape.leaf(Tensor::new(vec![index.num_edges, 1], mask)?);
        re = tape.mul_col(re, mask)?;
        im = tape.mul_col(im, mask)?;
    }
    batch
        .iter()
        .zip(&index.blocks)
        .map(|(inst, block)| {
            let rows: Vec<usize> = (block.edge_offset..block.edge_offset + block.m * block.k).collect();
            let v = if batch.len() == 1 {
                ComplexVar { re, im }
            } else {
                ComplexVar {
                    re: tape.gather_rows(re, &rows)?,
                    im: tape.gather_rows(im, &rows)?,
                }
            };
            power_mode_on_tape(tape, v, &inst.bs_power, inst.k, mode)
        })
        .collect()
}

/// Full forward pass for a batch of instances sharing one set of parameters.
pub fn forward_batch<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &[&ProblemInstance],
    topologies: &[&Topology],
    params: &BoundParams,
    cfg: &ModelConfig,
    opts: &ForwardOptions,
) -> Result<Vec<ComplexVar>> {
    if batch.is_empty() || batch.len() != topologies.len() {
        return Err(Error::Argument(format!(
            "{} instances with {} topologies",
            batch.len(),
            topologies.len()
        )));
    }
    if params.layers.len() != cfg.layers {
        return Err(Error::shape(
            "forward",
            format!("{} bound layers for L={}", params.layers.len(), cfg.layers),
        ));
    }
    for (inst, topo) in batch.iter().zip(topologies) {
        check_instance(inst, topo, cfg)?;
    }
    let index = GraphIndex::new(topologies);
    let mut state = preprocess(tape, batch, params)?;
    for layer in &params.layers {
        state = update_layer(tape, &state, &index, layer, opts.fault)?;
    }
    postprocess(tape, &state, batch, &index, params, opts.power_mode)
}

pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    inst: &ProblemInstance,
    topo: &Topology,
    params: &BoundParams,
    cfg: &ModelConfig,
    opts: &ForwardOptions,
) -> Result<ComplexVar> {
    Ok(forward_batch(tape, &[inst], &[topo], params, cfg, opts)?.remove(0))
}

/// Evaluates the model on one instance over the full bipartite topology.
pub fn infer<T: Scalar>(
    params: &ModelParams<T>,
    inst: &ProblemInstance,
    opts: &ForwardOptions,
) -> Result<BeamformerTensor> {
    infer_with_topology(params, inst, &Topology::full(inst.m, inst.k), opts)
}

pub fn infer_with_topology<T: Scalar>(
    params: &ModelParams<T>,
    inst: &ProblemInstance,
    topo: &Topology,
    opts: &ForwardOptions,
) -> Result<BeamformerTensor> {
    InferenceSession::new(params).run_with_topology(inst, topo, opts)
}

/// Parameters bound to a tape once and reused across forward passes, which
/// avoids copying every weight per call.
pub struct InferenceSession<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    tape: Tape<T>,
    bound: BoundParams,
    base: usize,
}

impl<'a, T: Scalar> InferenceSession<'a, T> {
    pub fn new(params: &'a ModelParams<T>) -> Self {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let base = tape.len();
        Self {
            params,
            tape,
            bound,
            base,
        }
    }

    pub fn run(&mut self, inst: &ProblemInstance, opts: &ForwardOptions) -> Result<BeamformerTensor> {
        self.run_with_topology(inst, &Topology::full(inst.m, inst.k), opts)
    }

    pub fn run_with_topology(
        &mut self,
        inst: &ProblemInstance,
        topo: &Topology,
        opts: &ForwardOptions,
    ) -> Result<BeamformerTensor> {
        self.tape.truncate(self.base);
        let v = forward(&mut self.tape, inst, topo, &self.bound, &self.params.config, opts)?;
        let value = v.value(&self.tape);
        let shape = vec![inst.m, inst.k, inst.n];
        let v = BeamformerTensor::new(ComplexSplit::new(
            Tensor::from_f64(&shape, &value.re.to_f64_vec())?,
            Tensor::from_f64(&shape, &value.im.to_f64_vec())?,
        )?)?;
        // Removes the rounding excess of reduced-precision scaling.
        Ok(apply_power_mode(&v, &inst.bs_power, opts.power_mode))
    }
}
