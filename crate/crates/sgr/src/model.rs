//! The parse-graph inference engine.
//!
//! Pipeline: an attention link function scores every unordered node pair
//! and emits a symmetric adjacency matrix of interaction probabilities;
//! SageConv (optional) re-embeds node features with neighbourhood means;
//! hidden states are initialized by an affine projection and refined for a
//! fixed number of propagation steps, each step summarising neighbour
//! hidden states and edge features into per-node messages (softly weighted
//! by adjacency probability) that a GRU folds into the hidden state; a
//! readout head maps final hidden states to 12 independent interaction
//! probabilities per node.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SgrError};
use crate::graph::{FeatureRecord, ParseGraphState, NUM_INTERACTIONS};
use crate::tensor::{Tape, Tensor};

/// Architecture hyperparameters. The two toggles mirror the ablation rows:
/// attention gating inside the link function and SageConv embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GpnnConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub propagation_steps: usize,
    pub sage_depth: usize,
    pub adjacency_threshold: f64,
    pub use_attention: bool,
    pub use_sageconv: bool,
}

impl Default for GpnnConfig {
    fn default() -> Self {
        GpnnConfig {
            feature_dim: 200,
            hidden_dim: 128,
            propagation_steps: 3,
            sage_depth: 1,
            adjacency_threshold: 0.5,
            use_attention: true,
            use_sageconv: true,
        }
    }
}

impl GpnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(SgrError::Config("feature_dim and hidden_dim must be >= 1".into()));
        }
        if self.propagation_steps == 0 {
            return Err(SgrError::Config("propagation_steps must be >= 1".into()));
        }
        if self.sage_depth == 0 {
            return Err(SgrError::Config("sage_depth must be >= 1".into()));
        }
        if !(self.adjacency_threshold > 0.0 && self.adjacency_threshold < 1.0) {
            return Err(SgrError::Config(format!(
                "adjacency_threshold must lie in (0, 1), got {}",
                self.adjacency_threshold
            )));
        }
        Ok(())
    }

    /// Length of the concatenated pair feature fed to the link function.
    pub fn pair_dim(&self) -> usize {
        3 * self.feature_dim
    }
}

/// All learnable weights. Biases start at zero; weight matrices draw from
/// a normal with 1/sqrt(fan_in) scale.
#[derive(Debug, Clone)]
pub struct GpnnParams {
    pub conv_kernel: Tensor,
    pub conv_bias: Tensor,
    pub attn_weight: Tensor,
    pub attn_bias: Tensor,
    pub link_weight: Tensor,
    pub link_bias: Tensor,
    pub sage_self: Tensor,
    pub sage_neigh: Tensor,
    pub msg_weight: Tensor,
    pub msg_bias: Tensor,
    pub gru_wz: Tensor,
    pub gru_uz: Tensor,
    pub gru_bz: Tensor,
    pub gru_wr: Tensor,
    pub gru_ur: Tensor,
    pub gru_br: Tensor,
    pub gru_wh: Tensor,
    pub gru_uh: Tensor,
    pub gru_bh: Tensor,
    pub readout_w1: Tensor,
    pub readout_b1: Tensor,
    pub readout_w2: Tensor,
    pub readout_b2: Tensor,
    pub hidden_w: Tensor,
    pub hidden_b: Tensor,
}

impl GpnnParams {
    /// Seeded random initialization.
    pub fn init(cfg: &GpnnConfig, seed: u64) -> Result<GpnnParams> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, dh, pd) = (cfg.feature_dim, cfg.hidden_dim, cfg.pair_dim());
        fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Result<Tensor> {
            let dist = Normal::new(0.0, std).expect("valid normal");
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
            Tensor::param(shape, data)
        }
        fn mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Tensor> {
            normal(rng, &[rows, cols], 1.0 / (rows as f64).sqrt())
        }
        let zeros_vec = |len: usize| Tensor::param(&[len], vec![0.0; len]);
        let zero_scalar = || Tensor::param(&[], vec![0.0]);

        Ok(GpnnParams {
            conv_kernel: normal(&mut rng, &[3], 1.0 / 3f64.sqrt())?,
            conv_bias: zero_scalar()?,
            attn_weight: normal(&mut rng, &[pd], 0.1)?,
            attn_bias: zeros_vec(pd)?,
            link_weight: normal(&mut rng, &[pd], 1.0 / (pd as f64).sqrt())?,
            link_bias: zero_scalar()?,
            sage_self: mat(&mut rng, d, d)?,
            sage_neigh: mat(&mut rng, d, d)?,
            msg_weight: mat(&mut rng, dh + d, dh)?,
            msg_bias: zeros_vec(dh)?,
            gru_wz: mat(&mut rng, dh, dh)?,
            gru_uz: mat(&mut rng, dh, dh)?,
            gru_bz: zeros_vec(dh)?,
            gru_wr: mat(&mut rng, dh, dh)?,
            gru_ur: mat(&mut rng, dh, dh)?,
            gru_br: zeros_vec(dh)?,
            gru_wh: mat(&mut rng, dh, dh)?,
            gru_uh: mat(&mut rng, dh, dh)?,
            gru_bh: zeros_vec(dh)?,
            readout_w1: mat(&mut rng, dh, dh)?,
            readout_b1: zeros_vec(dh)?,
            readout_w2: mat(&mut rng, dh, NUM_INTERACTIONS)?,
            readout_b2: zeros_vec(NUM_INTERACTIONS)?,
            hidden_w: mat(&mut rng, d, dh)?,
            hidden_b: zeros_vec(dh)?,
        })
    }

    /// All-zero parameters (the untrained chance-level baseline).
    pub fn zeros(cfg: &GpnnConfig) -> Result<GpnnParams> {
        let p = GpnnParams::init(cfg, 0)?;
        for (_, t) in p.named() {
            t.update_data(|d| d.iter_mut().for_each(|v| *v = 0.0))?;
        }
        p.zero_grads();
        Ok(p)
    }

    /// Stable (name, tensor) listing used by the optimizer and checkpoints.
    pub fn named(&self) -> Vec<(&'static str, Tensor)> {
        vec![
            ("conv_kernel", self.conv_kernel.clone()),
            ("conv_bias", self.conv_bias.clone()),
            ("attn_weight", self.attn_weight.clone()),
            ("attn_bias", self.attn_bias.clone()),
            ("link_weight", self.link_weight.clone()),
            ("link_bias", self.link_bias.clone()),
            ("sage_self", self.sage_self.clone()),
            ("sage_neigh", self.sage_neigh.clone()),
            ("msg_weight", self.msg_weight.clone()),
            ("msg_bias", self.msg_bias.clone()),
            ("gru_wz", self.gru_wz.clone()),
            ("gru_uz", self.gru_uz.clone()),
            ("gru_bz", self.gru_bz.clone()),
            ("gru_wr", self.gru_wr.clone()),
            ("gru_ur", self.gru_ur.clone()),
            ("gru_br", self.gru_br.clone()),
            ("gru_wh", self.gru_wh.clone()),
            ("gru_uh", self.gru_uh.clone()),
            ("gru_bh", self.gru_bh.clone()),
            ("readout_w1", self.readout_w1.clone()),
            ("readout_b1", self.readout_b1.clone()),
            ("readout_w2", self.readout_w2.clone()),
            ("readout_b2", self.readout_b2.clone()),
            ("hidden_w", self.hidden_w.clone()),
            ("hidden_b", self.hidden_b.clone()),
        ]
    }

    pub fn all(&self) -> Vec<Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    /// Rebuild parameters from (name, shape, data) entries, e.g. a loaded
    /// checkpoint. Every expected name must appear exactly once.
    pub fn from_named(
        cfg: &GpnnConfig,
        entries: Vec<(String, Vec<usize>, Vec<f64>)>,
    ) -> Result<GpnnParams> {
        let mut map: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)> = entries
            .into_iter()
            .map(|(name, shape, data)| (name, (shape, data)))
            .collect();
        let mut take = |name: &str| -> Result<Tensor> {
            let (shape, data) = map
                .remove(name)
                .ok_or_else(|| SgrError::Parse(format!("checkpoint lacks parameter {name}")))?;
            Tensor::param(&shape, data)
        };
        let params = GpnnParams {
            conv_kernel: take("conv_kernel")?,
            conv_bias: take("conv_bias")?,
            attn_weight: take("attn_weight")?,
            attn_bias: take("attn_bias")?,
            link_weight: take("link_weight")?,
            link_bias: take("link_bias")?,
            sage_self: take("sage_self")?,
            sage_neigh: take("sage_neigh")?,
            msg_weight: take("msg_weight")?,
            msg_bias: take("msg_bias")?,
            gru_wz: take("gru_wz")?,
            gru_uz: take("gru_uz")?,
            gru_bz: take("gru_bz")?,
            gru_wr: take("gru_wr")?,
            gru_ur: take("gru_ur")?,
            gru_br: take("gru_br")?,
            gru_wh: take("gru_wh")?,
            gru_uh: take("gru_uh")?,
            gru_bh: take("gru_bh")?,
            readout_w1: take("readout_w1")?,
            readout_b1: take("readout_b1")?,
            readout_w2: take("readout_w2")?,
            readout_b2: take("readout_b2")?,
            hidden_w: take("hidden_w")?,
            hidden_b: take("hidden_b")?,
        };
        if let Some(extra) = map.keys().next() {
            return Err(SgrError::Parse(format!(
                "checkpoint carries unknown parameter {extra}"
            )));
        }
        params.check_shapes(cfg)?;
        Ok(params)
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.named() {
            t.zero_grad();
        }
    }

    /// Check tensor extents against a config.
    pub fn check_shapes(&self, cfg: &GpnnConfig) -> Result<()> {
        let (d, dh, pd) = (cfg.feature_dim, cfg.hidden_dim, cfg.pair_dim());
        let expect: Vec<(&str, Vec<usize>)> = vec![
            ("conv_kernel", vec![3]),
            ("conv_bias", vec![]),
            ("attn_weight", vec![pd]),
            ("attn_bias", vec![pd]),
            ("link_weight", vec![pd]),
            ("link_bias", vec![]),
            ("sage_self", vec![d, d]),
            ("sage_neigh", vec![d, d]),
            ("msg_weight", vec![dh + d, dh]),
            ("msg_bias", vec![dh]),
            ("gru_wz", vec![dh, dh]),
            ("gru_uz", vec![dh, dh]),
            ("gru_bz", vec![dh]),
            ("gru_wr", vec![dh, dh]),
            ("gru_ur", vec![dh, dh]),
            ("gru_br", vec![dh]),
            ("gru_wh", vec![dh, dh]),
            ("gru_uh", vec![dh, dh]),
            ("gru_bh", vec![dh]),
            ("readout_w1", vec![dh, dh]),
            ("readout_b1", vec![dh]),
            ("readout_w2", vec![dh, NUM_INTERACTIONS]),
            ("readout_b2", vec![NUM_INTERACTIONS]),
            ("hidden_w", vec![d, dh]),
            ("hidden_b", vec![dh]),
        ];
        for ((name, tensor), (ename, eshape)) in self.named().iter().zip(&expect) {
            debug_assert_eq!(name, ename);
            if tensor.shape() != eshape.as_slice() {
                return Err(SgrError::Dimension(format!(
                    "parameter {name} has shape {:?}, config implies {:?}",
                    tensor.shape(),
                    eshape
                )));
            }
        }
        Ok(())
    }
}

/// Per-scene features wrapped as constant tensors, built once and reused
/// across forward passes. Edge rows are shared between (a,b) and (b,a).
pub struct SceneInputs {
    pub num_nodes: usize,
    pub dim: usize,
    node_matrix: Tensor,
    node_rows: Vec<Tensor>,
    edge_rows: Vec<Tensor>,
}

impl SceneInputs {
    pub fn from_features(rec: &FeatureRecord) -> Result<SceneInputs> {
        rec.validate()?;
        let (n, d) = (rec.num_nodes, rec.dim);
        let node_matrix = Tensor::from_vec(&[n, d], rec.node_features.clone())?;
        let node_rows = (0..n)
            .map(|v| Tensor::from_vec(&[d], rec.node(v).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let mut edge_rows: Vec<Tensor> = Vec::with_capacity(n * n);
        let zero = Tensor::zeros(&[d]);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    edge_rows.push(zero.clone());
                } else if b < a {
                    edge_rows.push(edge_rows[b * n + a].clone());
                } else {
                    edge_rows.push(Tensor::from_vec(&[d], rec.edge(a, b).to_vec())?);
                }
            }
        }
        Ok(SceneInputs {
            num_nodes: n,
            dim: d,
            node_matrix,
            node_rows,
            edge_rows,
        })
    }

    pub fn node_matrix(&self) -> &Tensor {
        &self.node_matrix
    }

    pub fn node_row(&self, v: usize) -> &Tensor {
        &self.node_rows[v]
    }

    pub fn edge_row(&self, a: usize, b: usize) -> &Tensor {
        &self.edge_rows[a * self.num_nodes + b]
    }
}

/// Symmetric adjacency probabilities as scalar tensors, one per unordered
/// pair, plus helpers to materialize the dense matrix.
pub struct AdjacencyProbs {
    pub num_nodes: usize,
    upper: Vec<Tensor>,
}

impl AdjacencyProbs {
    /// Build from per-pair scalars ordered (0,1), (0,2), ..., (n-2,n-1).
    pub fn from_upper(num_nodes: usize, upper: Vec<Tensor>) -> Result<AdjacencyProbs> {
        if upper.len() != num_nodes * (num_nodes - 1) / 2 {
            return Err(SgrError::Dimension(format!(
                "expected {} pair probabilities for {num_nodes} nodes, got {}",
                num_nodes * (num_nodes - 1) / 2,
                upper.len()
            )));
        }
        Ok(AdjacencyProbs { num_nodes, upper })
    }

    fn upper_index(&self, a: usize, b: usize) -> usize {
        let (lo, hi) = (a.min(b), a.max(b));
        lo * self.num_nodes - lo * (lo + 1) / 2 + (hi - lo - 1)
    }

    /// Probability tensor for an unordered pair (a != b).
    pub fn at(&self, a: usize, b: usize) -> &Tensor {
        assert_ne!(a, b, "no self-pair probability");
        &self.upper[self.upper_index(a, b)]
    }

    pub fn pairs(&self) -> &[Tensor] {
        &self.upper
    }

    /// Dense symmetric matrix with zero diagonal.
    pub fn to_matrix(&self) -> Vec<f64> {
        let n = self.num_nodes;
        let mut m = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let p = self.upper[self.upper_index(a, b)].data()[0];
                m[a * n + b] = p;
                m[b * n + a] = p;
            }
        }
        m
    }
}

/// Everything the training loop needs from one forward pass.
pub struct ForwardTrace {
    pub adjacency: AdjacencyProbs,
    pub adjacency_matrix: Vec<f64>,
    pub hidden: Tensor,
    pub node_scores: Tensor,
    pub node_probs: Tensor,
}

fn ordered_score(
    tape: &Tape,
    first: &Tensor,
    second: &Tensor,
    edge: &Tensor,
    params: &GpnnParams,
    cfg: &GpnnConfig,
) -> Result<Tensor> {
    let x = tape.concat(&[first, second, edge])?;
    let conv = tape.conv1d_same3(&x, &params.conv_kernel, &params.conv_bias)?;
    let mut act = tape.relu(&conv)?;
    if cfg.use_attention {
        let gate =
            tape.sigmoid(&tape.add(&tape.mul(&params.attn_weight, &x)?, &params.attn_bias)?)?;
        act = tape.mul(&act, &gate)?;
    }
    tape.add(&tape.dot(&params.link_weight, &act)?, &params.link_bias)
}

/// Predict the adjacency matrix: every unordered pair is scored through a
/// width-3 convolution, relu, an optional sigmoid attention gate over the
/// concatenated pair feature, and an affine map to a scalar. Scores for
/// the two orderings of a pair are averaged before the sigmoid, so the
/// matrix is symmetric by construction.
pub fn link_function(
    tape: &Tape,
    inputs: &SceneInputs,
    params: &GpnnParams,
    cfg: &GpnnConfig,
) -> Result<AdjacencyProbs> {
    let n = inputs.num_nodes;
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            let edge = inputs.edge_row(a, b);
            let s_ab =
                ordered_score(tape, inputs.node_row(a), inputs.node_row(b), edge, params, cfg)?;
            let s_ba =
                ordered_score(tape, inputs.node_row(b), inputs.node_row(a), edge, params, cfg)?;
            let s = tape.scale(&tape.add(&s_ab, &s_ba)?, 0.5)?;
            upper.push(tape.sigmoid(&s)?);
        }
    }
    AdjacencyProbs::from_upper(n, upper)
}

/// Neighborhood embedding: each node's features are combined with the mean
/// of its neighbours' features (pairs at or above the adjacency threshold)
/// through two projections and a relu; nodes without neighbours aggregate
/// a zero vector. Applied `sage_depth` times.
pub fn sage_conv(
    tape: &Tape,
    node_matrix: &Tensor,
    adjacency_matrix: &[f64],
    params: &GpnnParams,
    cfg: &GpnnConfig,
) -> Result<Tensor> {
    let n = node_matrix.shape()[0];
    let d = node_matrix.shape()[1];
    if adjacency_matrix.len() != n * n {
        return Err(SgrError::Dimension(format!(
            "adjacency has {} entries for {n} nodes",
            adjacency_matrix.len()
        )));
    }
    let mut current = node_matrix.clone();
    for _ in 0..cfg.sage_depth {
        let rows: Vec<Tensor> = (0..n).map(|v| tape.row(&current, v)).collect::<Result<_>>()?;
        let mut agg_rows = Vec::with_capacity(n);
        for v in 0..n {
            let neighbors: Vec<Tensor> = (0..n)
                .filter(|&w| w != v && adjacency_matrix[v * n + w] >= cfg.adjacency_threshold)
                .map(|w| rows[w].clone())
                .collect();
            if neighbors.is_empty() {
                agg_rows.push(Tensor::zeros(&[d]));
            } else {
                let count = neighbors.len() as f64;
                agg_rows.push(tape.scale(&tape.sum_vecs(&neighbors)?, 1.0 / count)?);
            }
        }
        let agg = tape.stack_rows(&agg_rows)?;
        current = tape.relu(&tape.add(
            &tape.matmul(&current, &params.sage_self)?,
            &tape.matmul(&agg, &params.sage_neigh)?,
        )?)?;
    }
    Ok(current)
}

/// Summarise edge features and neighbour hidden states into one message
/// per node: m_v = sum over w != v of A[v][w] * affine(concat(h_w,
/// F_e[v][w])). The affine map runs batched over all ordered pairs; the
/// weighted sum is order-canonicalized so inference stays exactly
/// permutation-equivariant.
pub fn message_function(
    tape: &Tape,
    hidden: &Tensor,
    inputs: &SceneInputs,
    adjacency: &AdjacencyProbs,
    params: &GpnnParams,
) -> Result<Tensor> {
    let n = inputs.num_nodes;
    if hidden.rank() != 2 || hidden.shape()[0] != n {
        return Err(SgrError::Dimension(format!(
            "hidden shape {:?} does not give one row per node ({n})",
            hidden.shape()
        )));
    }
    let hidden_rows: Vec<Tensor> = (0..n).map(|w| tape.row(hidden, w)).collect::<Result<_>>()?;
    let mut pair_rows = Vec::with_capacity(n * (n - 1));
    for v in 0..n {
        for w in 0..n {
            if w == v {
                continue;
            }
            pair_rows.push(tape.concat(&[&hidden_rows[w], inputs.edge_row(v, w)])?);
        }
    }
    let stacked = tape.stack_rows(&pair_rows)?;
    let transformed =
        tape.add_bias(&tape.matmul(&stacked, &params.msg_weight)?, &params.msg_bias)?;

    let mut message_rows = Vec::with_capacity(n);
    let mut r = 0;
    for v in 0..n {
        let mut weighted = Vec::with_capacity(n - 1);
        for w in 0..n {
            if w == v {
                continue;
            }
            let row = tape.row(&transformed, r)?;
            weighted.push(tape.mul(adjacency.at(v, w), &row)?);
            r += 1;
        }
        message_rows.push(tape.sum_vecs(&weighted)?);
    }
    tape.stack_rows(&message_rows)
}

/// Gated recurrent update of the hidden state from the summarised message:
/// z = sigmoid(m Wz + h Uz + bz), r = sigmoid(m Wr + h Ur + br),
/// hc = tanh(m Wh + (r . h) Uh + bh), h' = (1 - z) . h + z . hc.
pub fn gru_update(
    tape: &Tape,
    hidden: &Tensor,
    messages: &Tensor,
    params: &GpnnParams,
) -> Result<Tensor> {
    if hidden.shape() != messages.shape() {
        return Err(SgrError::Dimension(format!(
            "hidden {:?} and messages {:?} disagree",
            hidden.shape(),
            messages.shape()
        )));
    }
    let gate = |w: &Tensor, u: &Tensor, b: &Tensor| -> Result<Tensor> {
        tape.add_bias(&tape.add(&tape.matmul(messages, w)?, &tape.matmul(hidden, u)?)?, b)
    };
    let z = tape.sigmoid(&gate(&params.gru_wz, &params.gru_uz, &params.gru_bz)?)?;
    let r = tape.sigmoid(&gate(&params.gru_wr, &params.gru_ur, &params.gru_br)?)?;
    let candidate = tape.tanh(&tape.add_bias(
        &tape.add(
            &tape.matmul(messages, &params.gru_wh)?,
            &tape.matmul(&tape.mul(&r, hidden)?, &params.gru_uh)?,
        )?,
        &params.gru_bh,
    )?)?;
    let ones = Tensor::full(hidden.shape(), 1.0)?;
    let keep = tape.mul(&tape.sub(&ones, &z)?, hidden)?;
    let update = tape.mul(&z, &candidate)?;
    tape.add(&keep, &update)
}

/// Per-node interaction head: sigmoid(affine2(relu(affine1(h)))), giving 12
/// independent probabilities. Returns (pre-sigmoid scores, probabilities).
pub fn readout(tape: &Tape, hidden: &Tensor, params: &GpnnParams) -> Result<(Tensor, Tensor)> {
    let h1 =
        tape.relu(&tape.add_bias(&tape.matmul(hidden, &params.readout_w1)?, &params.readout_b1)?)?;
    let scores = tape.add_bias(&tape.matmul(&h1, &params.readout_w2)?, &params.readout_b2)?;
    let probs = tape.sigmoid(&scores)?;
    Ok((scores, probs))
}

/// Full forward pass, leaving every intermediate on the tape for training.
pub fn forward(
    tape: &Tape,
    inputs: &SceneInputs,
    params: &GpnnParams,
    cfg: &GpnnConfig,
) -> Result<ForwardTrace> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    if inputs.num_nodes < 2 {
        return Err(SgrError::Data(
            "parse graph needs tissue and at least one instrument".into(),
        ));
    }
    if inputs.dim != cfg.feature_dim {
        return Err(SgrError::Dimension(format!(
            "feature dim {} does not match configured {}",
            inputs.dim, cfg.feature_dim
        )));
    }

    let adjacency = link_function(tape, inputs, params, cfg)?;
    let adjacency_matrix = adjacency.to_matrix();

    let embedded = if cfg.use_sageconv {
        sage_conv(tape, &inputs.node_matrix, &adjacency_matrix, params, cfg)?
    } else {
        inputs.node_matrix.clone()
    };

    let mut hidden = tape.add_bias(&tape.matmul(&embedded, &params.hidden_w)?, &params.hidden_b)?;
    for _ in 0..cfg.propagation_steps {
        let messages = message_function(tape, &hidden, inputs, &adjacency, params)?;
        hidden = gru_update(tape, &hidden, &messages, params)?;
    }
    let (node_scores, node_probs) = readout(tape, &hidden, params)?;

    Ok(ForwardTrace {
        adjacency,
        adjacency_matrix,
        hidden,
        node_scores,
        node_probs,
    })
}

/// Inference: a pure function of (params, features) returning the parse
/// graph state. Runs on an evaluation-only tape.
pub fn infer(
    features: &FeatureRecord,
    params: &GpnnParams,
    cfg: &GpnnConfig,
) -> Result<ParseGraphState> {
    Ok(infer_with_scores(features, params, cfg)?.0)
}

/// Inference that also returns the pre-sigmoid readout scores (n*12),
/// which the hinge metric needs.
pub fn infer_with_scores(
    features: &FeatureRecord,
    params: &GpnnParams,
    cfg: &GpnnConfig,
) -> Result<(ParseGraphState, Vec<f64>)> {
    let inputs = SceneInputs::from_features(features)?;
    let tape = Tape::no_grad();
    let trace = forward(&tape, &inputs, params, cfg)?;
    let state = ParseGraphState {
        num_nodes: inputs.num_nodes,
        hidden_dim: cfg.hidden_dim,
        adjacency: trace.adjacency_matrix.clone(),
        hidden: trace.hidden.to_vec(),
        node_probs: trace.node_probs.to_vec(),
    };
    Ok((state, trace.node_scores.to_vec()))
}
