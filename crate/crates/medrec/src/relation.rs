//! Relation embeddings: K-layer parent aggregation over the hierarchy tree,
//! pretrained with a negative-sampling objective so that a code's embedding
//! sits near its parent's and away from unrelated codes.
//!
//! Layer 0 is a per-node base table (the virtual root included). Layer k+1
//! of node v is `ReLU(W_{k+1} * concat(e_v^k, e_{p(v)}^k))`, where the
//! parent's layer-k value comes from the same recursion and the virtual root
//! keeps its base row at every layer. After pretraining the final-layer
//! embeddings are materialized into a [`RelationTable`] and the aggregation
//! weights are dropped; downstream training fine-tunes the table rows only.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::graph::{GraphError, NodeId, ParamId, ParamStore, Tape};
use crate::icd::{HierarchyTree, ROOT_ID};
use crate::optim::Adam;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("node id {0} is not a real node of the tree")]
    InvalidNode(usize),
    #[error("tree has {real} real nodes, at least {needed} required")]
    TreeTooSmall { real: usize, needed: usize },
    #[error(
        "verbatim objective undefined: log of non-positive dot {value} \
         for triple ({node}, {parent}, {negative})"
    )]
    VerbatimDomain {
        node: String,
        parent: String,
        negative: String,
        value: f64,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("relation table does not cover code {0}")]
    MissingCode(String),
}

/// One self-supervision sample: a node, its parent (possibly the virtual
/// root), and a random negative.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Triple {
    pub node: usize,
    pub parent: usize,
    pub negative: usize,
}

/// Which form of the self-supervised objective to use.
///
/// `Sigmoid` is `-(1/N) Σ [log σ(r_v·r_p) + log σ(-r_v·r_n)]`, the standard
/// negative-sampling loss and the default. `Verbatim` is
/// `-(1/N) Σ [log(r_v·r_p) + log(r_v·r_n)]`, which takes the log of a
/// possibly non-positive dot product and rewards similarity to the negative;
/// it is kept behind this flag for fidelity experiments and fails with a
/// domain error whenever a dot product is non-positive.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum SslMode {
    Sigmoid,
    Verbatim,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Negatives drawn per positive pair.
    pub negatives: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 50,
            batch: 256,
            lr: 1e-3,
            seed: 0,
            negatives: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Frozen r_v values for every real node, keyed by canonical code string.
#[derive(Clone, Debug)]
pub struct RelationTable {
    codes: Vec<String>,
    matrix: Tensor,
    index: HashMap<String, usize>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub dim: usize,
    pub layers: usize,
    pub seed: u64,
    pub epochs: usize,
}

impl RelationTable {
    fn new(codes: Vec<String>, matrix: Tensor, provenance: Provenance) -> Self {
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        RelationTable {
            codes,
            matrix,
            index,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dim(&self) -> usize {
        match self.matrix.shape() {
            Shape::Matrix(_, c) => c,
            _ => unreachable!(),
        }
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn get(&self, code: &str) -> Option<&[f64]> {
        self.index.get(code).map(|&i| self.matrix.row(i))
    }

    /// Stores the table into a checkpoint under `<prefix>relation`, with the
    /// code list and provenance in metadata.
    pub fn insert_into(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.insert(&format!("{prefix}relation"), &self.matrix);
        ckpt.meta.insert(
            format!("{prefix}codes"),
            serde_json::to_string(&self.codes).expect("strings serialize"),
        );
        ckpt.meta.insert(
            format!("{prefix}provenance"),
            serde_json::to_string(&self.provenance).expect("plain struct serializes"),
        );
    }

    pub fn extract_from(ckpt: &Checkpoint, prefix: &str) -> Result<Self, RelationError> {
        let matrix = ckpt.tensor(&format!("{prefix}relation"))?;
        let codes: Vec<String> = serde_json::from_str(ckpt.meta_value(&format!("{prefix}codes"))?)
            .map_err(CheckpointError::Json)?;
        let provenance: Provenance =
            serde_json::from_str(ckpt.meta_value(&format!("{prefix}provenance"))?)
                .map_err(CheckpointError::Json)?;
        Ok(RelationTable::new(codes, matrix, provenance))
    }

    pub fn save(&self, path: &Path) -> Result<(), RelationError> {
        let mut ckpt = Checkpoint::new();
        self.insert_into(&mut ckpt, "");
        ckpt.save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RelationError> {
        let ckpt = Checkpoint::load(path)?;
        RelationTable::extract_from(&ckpt, "")
    }
}

/// Writes a loss trace as CSV with an `epoch,mean_loss` header.
pub fn write_loss_trace(path: &Path, trace: &[EpochLoss]) -> std::io::Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for e in trace {
        let _ = writeln!(out, "{},{}", e.epoch, e.mean_loss);
    }
    std::fs::write(path, out)
}

/// Per-layer aggregation weights plus the base embedding table.
pub struct RelationEncoder {
    tree: Arc<HierarchyTree>,
    dim: usize,
    layers: usize,
    store: ParamStore,
    base: ParamId,
    weights: Vec<ParamId>,
}

type Memo = HashMap<(usize, usize), NodeId>;

impl RelationEncoder {
    /// Base rows start uniform in ±1/sqrt(dim); aggregation weights uniform
    /// in ±1/sqrt(2*dim). Each weight matrix maps a 2*dim concatenation to
    /// dim outputs.
    pub fn new(tree: Arc<HierarchyTree>, dim: usize, layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let base = store.register(
            "base",
            Tensor::uniform(
                Shape::Matrix(tree.len(), dim),
                1.0 / (dim as f64).sqrt(),
                &mut rng,
            ),
        );
        let weights = (1..=layers)
            .map(|k| {
                store.register(
                    &format!("w{k}"),
                    Tensor::uniform(
                        Shape::Matrix(dim, 2 * dim),
                        1.0 / (2.0 * dim as f64).sqrt(),
                        &mut rng,
                    ),
                )
            })
            .collect();
        RelationEncoder {
            tree,
            dim,
            layers,
            store,
            base,
            weights,
        }
    }

    pub fn tree(&self) -> &HierarchyTree {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn embed(&self, tape: &mut Tape, memo: &mut Memo, node: usize, layer: usize) -> NodeId {
        if let Some(&id) = memo.get(&(node, layer)) {
            return id;
        }
        let out = if layer == 0 || node == ROOT_ID {
            // The virtual root keeps its base row at every layer.
            tape.gather_row(&self.store, self.base, node)
                .expect("node ids validated against the tree")
        } else {
            let parent = self.tree.parent_of(node).expect("real nodes have parents");
            let own = self.embed(tape, memo, node, layer - 1);
            let up = self.embed(tape, memo, parent, layer - 1);
            let cat = tape.concat(own, up).expect("embeddings share dim");
            let w = tape.param(&self.store, self.weights[layer - 1]);
            let lin = tape.matvec(w, cat).expect("weight width is 2*dim");
            tape.relu(lin)
        };
        memo.insert((node, layer), out);
        out
    }

    /// Final-layer embedding of a real node (or the virtual root, which is
    /// its base row) as tape nodes.
    fn node_graph(
        &self,
        tape: &mut Tape,
        memo: &mut Memo,
        node: usize,
    ) -> Result<NodeId, RelationError> {
        if node >= self.tree.len() {
            return Err(RelationError::InvalidNode(node));
        }
        Ok(self.embed(tape, memo, node, self.layers))
    }

    /// Eager final-layer embedding of a real node.
    pub fn encode_node(&self, node: usize) -> Result<Tensor, RelationError> {
        if node == ROOT_ID || node >= self.tree.len() {
            return Err(RelationError::InvalidNode(node));
        }
        let mut tape = Tape::new();
        let mut memo = Memo::new();
        let id = self.node_graph(&mut tape, &mut memo, node)?;
        Ok(tape.value(id).clone())
    }

    /// Builds the loss over a batch of triples as tape nodes.
    pub fn ssl_loss_graph(
        &self,
        tape: &mut Tape,
        triples: &[Triple],
        mode: SslMode,
    ) -> Result<NodeId, RelationError> {
        assert!(!triples.is_empty(), "empty triple batch");
        let mut memo = Memo::new();
        let mut terms = Vec::with_capacity(triples.len());
        for t in triples {
            let zv = self.node_graph(tape, &mut memo, t.node)?;
            let zp = self.node_graph(tape, &mut memo, t.parent)?;
            let zn = self.node_graph(tape, &mut memo, t.negative)?;
            let dp = tape.dot(zv, zp).map_err(RelationError::from)?;
            let dn = tape.dot(zv, zn).map_err(RelationError::from)?;
            let term = match mode {
                SslMode::Sigmoid => {
                    let lp = tape.log_sigmoid(dp);
                    let neg_dn = tape.neg(dn);
                    let ln = tape.log_sigmoid(neg_dn);
                    tape.add(lp, ln).map_err(RelationError::from)?
                }
                SslMode::Verbatim => {
                    let lp = self.verbatim_log(tape, dp, t)?;
                    let ln = self.verbatim_log(tape, dn, t)?;
                    tape.add(lp, ln).map_err(RelationError::from)?
                }
            };
            terms.push(term);
        }
        let total = tape.sum_vectors(&terms).map_err(RelationError::from)?;
        Ok(tape.scale(total, -1.0 / triples.len() as f64))
    }

    fn verbatim_log(
        &self,
        tape: &mut Tape,
        dot: NodeId,
        triple: &Triple,
    ) -> Result<NodeId, RelationError> {
        tape.log(dot).map_err(|err| match err {
            GraphError::LogDomain { value, .. } => {
                let name = |id: usize| {
                    self.tree
                        .node(id)
                        .map(|c| c.canonical())
                        .unwrap_or_else(|_| format!("#{id}"))
                };
                RelationError::VerbatimDomain {
                    node: name(triple.node),
                    parent: name(triple.parent),
                    negative: name(triple.negative),
                    value,
                }
            }
            other => RelationError::Graph(other),
        })
    }

    /// Eager loss value for a batch of triples.
    pub fn ssl_loss(&self, triples: &[Triple], mode: SslMode) -> Result<f64, RelationError> {
        let mut tape = Tape::new();
        let loss = self.ssl_loss_graph(&mut tape, triples, mode)?;
        Ok(tape.value(loss).scalar_value())
    }

    /// Runs Adam over the base table and aggregation weights with the
    /// sigmoid-mode objective, then freezes the final-layer embeddings into
    /// a [`RelationTable`]. `epochs == 0` materializes the initialization.
    pub fn pretrain(
        &mut self,
        cfg: &PretrainConfig,
    ) -> Result<(RelationTable, Vec<EpochLoss>), RelationError> {
        let real: Vec<usize> = self.tree.real_ids().collect();
        if real.len() < 3 {
            return Err(RelationError::TreeTooSmall {
                real: real.len(),
                needed: 3,
            });
        }
        let params: Vec<ParamId> = self.store.ids().collect();
        let mut adam = Adam::new(cfg.lr, &self.store, params);
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut trace = Vec::with_capacity(cfg.epochs);

        for epoch in 1..=cfg.epochs {
            let mut order = real.clone();
            order.shuffle(&mut rng);
            let mut epoch_sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch.max(1)) {
                let mut triples = Vec::with_capacity(chunk.len() * cfg.negatives.max(1));
                for &node in chunk {
                    let parent = self.tree.parent_of(node).expect("real node");
                    for _ in 0..cfg.negatives.max(1) {
                        triples.push(Triple {
                            node,
                            parent,
                            negative: draw_negative(&mut rng, self.tree.len(), node, parent),
                        });
                    }
                }
                let mut tape = Tape::new();
                let loss = self.ssl_loss_graph(&mut tape, &triples, SslMode::Sigmoid)?;
                let value = tape.value(loss).scalar_value();
                if !value.is_finite() {
                    return Err(RelationError::NonFiniteLoss {
                        epoch,
                        batch: batches,
                    });
                }
                self.store.zero_grads();
                tape.backward(loss, &mut self.store)?;
                adam.step(&mut self.store);
                epoch_sum += value;
                batches += 1;
            }
            trace.push(EpochLoss {
                epoch,
                mean_loss: epoch_sum / batches as f64,
            });
        }

        let table = self.materialize(cfg.seed, cfg.epochs);
        Ok((table, trace))
    }

    /// Final-layer embeddings of every real node under the current weights.
    pub fn materialize(&self, seed: u64, epochs: usize) -> RelationTable {
        let mut tape = Tape::new();
        let mut memo = Memo::new();
        let n = self.tree.real_len();
        let mut data = Vec::with_capacity(n * self.dim);
        let mut codes = Vec::with_capacity(n);
        for node in self.tree.real_ids() {
            let id = self
                .node_graph(&mut tape, &mut memo, node)
                .expect("real ids are valid");
            data.extend_from_slice(tape.value(id).data());
            codes.push(self.tree.node(node).expect("real id").canonical());
        }
        RelationTable::new(
            codes,
            Tensor::matrix(n, self.dim, data),
            Provenance {
                dim: self.dim,
                layers: self.layers,
                seed,
                epochs,
            },
        )
    }
}

fn draw_negative<R: Rng>(rng: &mut R, tree_len: usize, node: usize, parent: usize) -> usize {
    loop {
        let candidate = rng.gen_range(1..tree_len);
        if candidate != node && candidate != parent {
            return candidate;
        }
    }
}

/// Uniformly samples `n` (node, parent, negative) triples: the node over all
/// real nodes, the negative over real nodes excluding the node and its
/// parent. Deterministic under `seed`.
pub fn sample_triples(
    tree: &HierarchyTree,
    n: usize,
    seed: u64,
) -> Result<Vec<Triple>, RelationError> {
    if tree.real_len() < 3 {
        return Err(RelationError::TreeTooSmall {
            real: tree.real_len(),
            needed: 3,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let node = rng.gen_range(1..tree.len());
        let parent = tree.parent_of(node).expect("real node");
        out.push(Triple {
            node,
            parent,
            negative: draw_negative(&mut rng, tree.len(), node, parent),
        });
    }
    Ok(out)
}
