//! From-scratch message-passing link predictor: mean-aggregating SAGE
//! layers, dot-product edge scoring, summed binary cross-entropy, exact
//! reverse-mode gradients, and an Adam optimizer. Everything is
//! deterministic given the seeds it is handed.

use crate::error::{Error, Result};
use crate::graph::MobilityGraph;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

pub type FeatureMatrix = Array2<f64>;

/// One aggregate-and-update layer: h' = relu(h W_self + m W_neigh + bias)
/// with m the mean over neighbor states.
#[derive(Debug, Clone, PartialEq)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub bias: Array1<f64>,
}

impl SageLayer {
    fn seeded(f_in: usize, f_out: usize, rng: &mut ChaCha8Rng) -> SageLayer {
        let scale = 1.0 / (f_in as f64).sqrt();
        let mut init = |shape: (usize, usize)| {
            Array2::from_shape_fn(shape, |_| rng.gen_range(-scale..scale))
        };
        let w_self = init((f_in, f_out));
        let w_neigh = init((f_in, f_out));
        let bias = Array1::from_shape_fn(f_out, |_| rng.gen_range(-scale..scale));
        SageLayer {
            w_self,
            w_neigh,
            bias,
        }
    }

    pub fn f_in(&self) -> usize {
        self.w_self.nrows()
    }

    pub fn f_out(&self) -> usize {
        self.w_self.ncols()
    }
}

/// Gradient (or moment) tensors mirroring one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrads {
    fn zeros_like(layer: &SageLayer) -> LayerGrads {
        LayerGrads {
            w_self: Array2::zeros(layer.w_self.dim()),
            w_neigh: Array2::zeros(layer.w_neigh.dim()),
            bias: Array1::zeros(layer.bias.dim()),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.w_self.mapv_inplace(|x| x * c);
        self.w_neigh.mapv_inplace(|x| x * c);
        self.bias.mapv_inplace(|x| x * c);
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    step: u64,
}

/// Layered message-passing model plus optimizer state.
#[derive(Debug, Clone)]
pub struct LinkPredictor {
    pub layers: Vec<SageLayer>,
    pub dropout_rate: f64,
    adam: AdamState,
    pub seed: u64,
}

/// Width/depth knobs; the depth schedule follows the node count unless
/// `depth` is forced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnnConfig {
    pub hidden_width: usize,
    pub output_width: usize,
    pub dropout_rate: f64,
    pub depth: Option<usize>,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            hidden_width: 16,
            output_width: 16,
            dropout_rate: 0.5,
            depth: None,
        }
    }
}

impl GnnConfig {
    /// Two layers up to 32 nodes, three beyond.
    pub fn depth_for(&self, n_nodes: usize) -> usize {
        self.depth.unwrap_or(if n_nodes <= 32 { 2 } else { 3 })
    }
}

impl LinkPredictor {
    pub fn new(n_nodes: usize, f_in: usize, cfg: &GnnConfig, seed: u64) -> LinkPredictor {
        let depth = cfg.depth_for(n_nodes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(depth);
        let mut prev = f_in;
        for l in 0..depth {
            let out = if l == depth - 1 {
                cfg.output_width
            } else {
                cfg.hidden_width
            };
            layers.push(SageLayer::seeded(prev, out, &mut rng));
            prev = out;
        }
        let adam = AdamState {
            m: layers.iter().map(LayerGrads::zeros_like).collect(),
            v: layers.iter().map(LayerGrads::zeros_like).collect(),
            step: 0,
        };
        LinkPredictor {
            layers,
            dropout_rate: cfg.dropout_rate,
            adam,
            seed,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// Checkpoint JSON: layer shapes with row-major weight arrays, dropout
    /// rate, and the optimizer step counter.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    f_in: l.f_in(),
                    f_out: l.f_out(),
                    w_self: l.w_self.iter().copied().collect(),
                    w_neigh: l.w_neigh.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            dropout_rate: self.dropout_rate,
            step: self.adam.step,
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<LinkPredictor> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        let mut layers = Vec::new();
        for l in &doc.layers {
            let expect = l.f_in * l.f_out;
            if l.w_self.len() != expect || l.w_neigh.len() != expect || l.bias.len() != l.f_out {
                return Err(Error::InvalidData(format!(
                    "layer shape {}x{} inconsistent with stored arrays",
                    l.f_in, l.f_out
                )));
            }
            layers.push(SageLayer {
                w_self: Array2::from_shape_vec((l.f_in, l.f_out), l.w_self.clone())
                    .map_err(|e| Error::InvalidData(e.to_string()))?,
                w_neigh: Array2::from_shape_vec((l.f_in, l.f_out), l.w_neigh.clone())
                    .map_err(|e| Error::InvalidData(e.to_string()))?,
                bias: Array1::from_vec(l.bias.clone()),
            });
        }
        let adam = AdamState {
            m: layers.iter().map(LayerGrads::zeros_like).collect(),
            v: layers.iter().map(LayerGrads::zeros_like).collect(),
            step: doc.step,
        };
        Ok(LinkPredictor {
            layers,
            dropout_rate: doc.dropout_rate,
            adam,
            seed: doc.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    f_in: usize,
    f_out: usize,
    w_self: Vec<f64>,
    w_neigh: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    layers: Vec<LayerDoc>,
    dropout_rate: f64,
    step: u64,
    seed: u64,
}

/// Input features: layout coordinates plus degree normalized by the
/// maximum degree; f = 3.
pub fn build_features(g: &MobilityGraph) -> FeatureMatrix {
    build_features_from_edges(&g.node_attrs, &g.edges(), g.n())
}

/// Same feature recipe with an explicit edge structure (used when test
/// edges are hidden from the model).
pub fn build_features_from_edges(
    node_attrs: &Array2<f64>,
    edges: &[(usize, usize)],
    n: usize,
) -> FeatureMatrix {
    let mut deg = vec![0.0f64; n];
    for &(u, v) in edges {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    let max_deg = deg.iter().cloned().fold(0.0f64, f64::max).max(1.0);
    let mut f = Array2::zeros((n, 3));
    for i in 0..n {
        f[[i, 0]] = node_attrs[[i, 0]];
        f[[i, 1]] = node_attrs[[i, 1]];
        f[[i, 2]] = deg[i] / max_deg;
    }
    f
}

fn neighbor_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for &(u, v) in edges {
        nbrs[u].push(v);
        nbrs[v].push(u);
    }
    nbrs
}

/// Mean over neighbor rows; isolated nodes aggregate to zero.
fn aggregate_mean(h: &Array2<f64>, nbrs: &[Vec<usize>]) -> Array2<f64> {
    let (n, f) = h.dim();
    let mut m = Array2::zeros((n, f));
    for (i, ns) in nbrs.iter().enumerate() {
        if ns.is_empty() {
            continue;
        }
        for &j in ns {
            let row = h.row(j).to_owned();
            let mut target = m.row_mut(i);
            target += &row;
        }
        let inv = 1.0 / ns.len() as f64;
        m.row_mut(i).mapv_inplace(|x| x * inv);
    }
    m
}

/// Transpose of the mean aggregation, for the backward pass.
fn aggregate_mean_transpose(y: &Array2<f64>, nbrs: &[Vec<usize>]) -> Array2<f64> {
    let (n, f) = y.dim();
    let mut out = Array2::zeros((n, f));
    for (i, ns) in nbrs.iter().enumerate() {
        if ns.is_empty() {
            continue;
        }
        let inv = 1.0 / ns.len() as f64;
        for &j in ns {
            let row = y.row(i).to_owned();
            let mut target = out.row_mut(j);
            target.scaled_add(inv, &row);
        }
    }
    out
}

/// Inverted-dropout keep/scale matrix, deterministic given the seed.
fn dropout_matrix(shape: (usize, usize), rate: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - rate;
    Array2::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

struct LayerCache {
    h_in: Array2<f64>,
    aggregated: Array2<f64>,
    pre_activation: Array2<f64>,
    /// None for the output layer (no relu, no dropout).
    drop_scale: Option<Array2<f64>>,
}

/// One layer forward. The output layer (`apply_activation = false`) skips
/// relu and dropout.
pub fn sage_forward(
    layer: &SageLayer,
    h: &FeatureMatrix,
    edges: &[(usize, usize)],
    training: bool,
    dropout_rate: f64,
    dropout_seed: u64,
    apply_activation: bool,
) -> Result<FeatureMatrix> {
    let (out, _) = sage_forward_cached(
        layer,
        h,
        &neighbor_lists(h.nrows(), edges),
        training,
        dropout_rate,
        dropout_seed,
        apply_activation,
    )?;
    Ok(out)
}

fn sage_forward_cached(
    layer: &SageLayer,
    h: &FeatureMatrix,
    nbrs: &[Vec<usize>],
    training: bool,
    dropout_rate: f64,
    dropout_seed: u64,
    apply_activation: bool,
) -> Result<(FeatureMatrix, LayerCache)> {
    if h.ncols() != layer.f_in() {
        return Err(Error::DimensionMismatch {
            context: "sage_forward",
            left: h.ncols(),
            right: layer.f_in(),
        });
    }
    let aggregated = aggregate_mean(h, nbrs);
    let mut z = h.dot(&layer.w_self) + aggregated.dot(&layer.w_neigh);
    z += &layer.bias;
    let (out, drop_scale) = if apply_activation {
        let activated = z.mapv(|x| x.max(0.0));
        if training && dropout_rate > 0.0 {
            let scale = dropout_matrix(activated.dim(), dropout_rate, dropout_seed);
            ((&activated * &scale), Some(scale))
        } else {
            (activated, Some(Array2::ones(z.dim())))
        }
    } else {
        (z.clone(), None)
    };
    Ok((
        out,
        LayerCache {
            h_in: h.clone(),
            aggregated,
            pre_activation: z,
            drop_scale,
        },
    ))
}

/// Full forward pass over all layers, returning per-layer caches.
fn forward_all(
    model: &LinkPredictor,
    features: &FeatureMatrix,
    nbrs: &[Vec<usize>],
    training: bool,
    dropout_seed: u64,
) -> Result<(FeatureMatrix, Vec<LayerCache>)> {
    let mut h = features.clone();
    let mut caches = Vec::with_capacity(model.layers.len());
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        let (out, cache) = sage_forward_cached(
            layer,
            &h,
            nbrs,
            training,
            model.dropout_rate,
            dropout_seed.wrapping_add(l as u64),
            l != last,
        )?;
        caches.push(cache);
        h = out;
    }
    Ok((h, caches))
}

/// Dot-product logit for one candidate pair.
pub fn edge_score(h: &FeatureMatrix, pair: (usize, usize)) -> Result<f64> {
    let n = h.nrows();
    if pair.0 >= n || pair.1 >= n {
        return Err(Error::InvalidData(format!(
            "edge index ({}, {}) out of range for {} nodes",
            pair.0, pair.1, n
        )));
    }
    Ok(h.row(pair.0).dot(&h.row(pair.1)))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Summed binary cross-entropy over all labeled pairs, probabilities
/// clamped away from 0 and 1.
pub fn bce_loss(logits: &[f64], labels: &[f64]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "bce_loss",
            left: logits.len(),
            right: labels.len(),
        });
    }
    const EPS: f64 = 1e-12;
    let mut loss = 0.0;
    for (&z, &y) in logits.iter().zip(labels) {
        let p = sigmoid(z).clamp(EPS, 1.0 - EPS);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(loss)
}

/// Loss and exact gradients of the summed BCE through edge scoring and all
/// layers. Dropout masks are fixed by `dropout_seed`.
pub fn gradients(
    model: &LinkPredictor,
    features: &FeatureMatrix,
    edges: &[(usize, usize)],
    batch: &[((usize, usize), f64)],
    training: bool,
    dropout_seed: u64,
) -> Result<(f64, Vec<LayerGrads>)> {
    let nbrs = neighbor_lists(features.nrows(), edges);
    let (h, caches) = forward_all(model, features, &nbrs, training, dropout_seed)?;

    let mut logits = Vec::with_capacity(batch.len());
    for &(pair, _) in batch {
        logits.push(edge_score(&h, pair)?);
    }
    let labels: Vec<f64> = batch.iter().map(|&(_, y)| y).collect();
    let loss = bce_loss(&logits, &labels)?;

    // d loss / d h from the scoring head
    let mut dh = Array2::<f64>::zeros(h.dim());
    for (&(pair, y), &z) in batch.iter().zip(&logits) {
        let dlogit = sigmoid(z) - y;
        let (u, v) = pair;
        let hv = h.row(v).to_owned();
        let hu = h.row(u).to_owned();
        dh.row_mut(u).scaled_add(dlogit, &hv);
        dh.row_mut(v).scaled_add(dlogit, &hu);
    }

    let mut grads: Vec<LayerGrads> = model.layers.iter().map(LayerGrads::zeros_like).collect();
    for (l, layer) in model.layers.iter().enumerate().rev() {
        let cache = &caches[l];
        let dz = match &cache.drop_scale {
            Some(scale) => {
                let mut d = &dh * scale;
                d.zip_mut_with(&cache.pre_activation, |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                d
            }
            None => dh.clone(),
        };
        grads[l].w_self = cache.h_in.t().dot(&dz);
        grads[l].w_neigh = cache.aggregated.t().dot(&dz);
        grads[l].bias = dz.sum_axis(Axis(0));
        let through_neigh = aggregate_mean_transpose(&dz.dot(&layer.w_neigh.t()), &nbrs);
        dh = dz.dot(&layer.w_self.t()) + through_neigh;
    }
    Ok((loss, grads))
}

/// Standard Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) with bias
/// correction.
pub fn adam_step(model: &mut LinkPredictor, grads: &[LayerGrads], lr: f64) -> Result<()> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    if grads.len() != model.layers.len() {
        return Err(Error::DimensionMismatch {
            context: "adam_step",
            left: grads.len(),
            right: model.layers.len(),
        });
    }
    model.adam.step += 1;
    let t = model.adam.step as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        let g = &grads[l];
        if g.w_self.dim() != layer.w_self.dim() || g.w_neigh.dim() != layer.w_neigh.dim() {
            return Err(Error::DimensionMismatch {
                context: "adam_step",
                left: g.w_self.nrows(),
                right: layer.w_self.nrows(),
            });
        }
        let m = &mut model.adam.m[l];
        let v = &mut model.adam.v[l];
        update_tensor2(&mut layer.w_self, &g.w_self, &mut m.w_self, &mut v.w_self, lr, bc1, bc2, EPS);
        update_tensor2(&mut layer.w_neigh, &g.w_neigh, &mut m.w_neigh, &mut v.w_neigh, lr, bc1, bc2, EPS);
        for i in 0..layer.bias.len() {
            let gi = g.bias[i];
            m.bias[i] = BETA1 * m.bias[i] + (1.0 - BETA1) * gi;
            v.bias[i] = BETA2 * v.bias[i] + (1.0 - BETA2) * gi * gi;
            layer.bias[i] -= lr * (m.bias[i] / bc1) / ((v.bias[i] / bc2).sqrt() + EPS);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_tensor2(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
    eps: f64,
) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    azip_update(param, grad, m, v, |p, g, m, v| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    });
}

fn azip_update<F: FnMut(&mut f64, f64, &mut f64, &mut f64)>(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    mut f: F,
) {
    for ((p, &g), (m, v)) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(m.iter_mut().zip(v.iter_mut()))
    {
        f(p, g, m, v);
    }
}

/// Verifies the analytic gradients against central finite differences
/// (step 1e-5) for every parameter tensor of a fresh 2-layer model on a
/// 4-node ring, once per seed, and returns the worst relative error seen.
/// Dropout is active with a fixed mask seed so the perturbed losses are
/// comparable.
pub fn finite_difference_worst_error(
    seeds: impl IntoIterator<Item = u64>,
) -> Result<f64> {
    use crate::graph::{graph_from_parts, Modality, Period};
    let n = 4;
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        let j = (i + 1) % n;
        adj[[i, j]] = 1.0;
        adj[[j, i]] = 1.0;
    }
    let attrs = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
    let g = graph_from_parts(
        (0..n as u32).collect(),
        attrs,
        adj,
        Modality::TripCount,
        Period::Unspecified,
    );
    let f = build_features(&g);
    let edges = g.edges();
    let batch: Vec<((usize, usize), f64)> =
        vec![((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 0.0), ((1, 3), 0.0)];
    let step = 1e-5;
    let dropout_seed = 77;
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let model = LinkPredictor::new(
            n,
            3,
            &GnnConfig {
                depth: Some(2),
                ..GnnConfig::default()
            },
            seed,
        );
        let (_, grads) = gradients(&model, &f, &edges, &batch, true, dropout_seed)?;
        let loss_at = |m: &LinkPredictor| -> Result<f64> {
            Ok(gradients(m, &f, &edges, &batch, true, dropout_seed)?.0)
        };
        for l in 0..model.layers.len() {
            for tensor in 0..3usize {
                let len = match tensor {
                    0 => model.layers[l].w_self.len(),
                    1 => model.layers[l].w_neigh.len(),
                    _ => model.layers[l].bias.len(),
                };
                for idx in 0..len {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    {
                        let (p, m) = (&mut plus.layers[l], &mut minus.layers[l]);
                        match tensor {
                            0 => {
                                p.w_self.as_slice_mut().unwrap()[idx] += step;
                                m.w_self.as_slice_mut().unwrap()[idx] -= step;
                            }
                            1 => {
                                p.w_neigh.as_slice_mut().unwrap()[idx] += step;
                                m.w_neigh.as_slice_mut().unwrap()[idx] -= step;
                            }
                            _ => {
                                p.bias[idx] += step;
                                m.bias[idx] -= step;
                            }
                        }
                    }
                    let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * step);
                    let analytic = match tensor {
                        0 => grads[l].w_self.as_slice().unwrap()[idx],
                        1 => grads[l].w_neigh.as_slice().unwrap()[idx],
                        _ => grads[l].bias[idx],
                    };
                    let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                    worst = worst.max((numeric - analytic).abs() / denom);
                }
            }
        }
    }
    Ok(worst)
}

/// Positive/negative train and test pairs for link prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    /// Epoch-0 negative sample; training resamples per epoch.
    pub train_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub seed: u64,
    pub n_nodes: usize,
}

/// Deterministically split the true edges and sample matching negatives.
/// Null nodes never appear in any pair; test negatives are sampled once and
/// kept out of the per-epoch training negatives.
pub fn split_edges(g: &MobilityGraph, test_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in [0, 1], got {test_fraction}"
        )));
    }
    let real_edges: Vec<(usize, usize)> = g
        .edges()
        .into_iter()
        .filter(|&(u, v)| !g.null_mask[u] && !g.null_mask[v])
        .collect();
    if real_edges.len() < 2 {
        return Err(Error::InvalidData(format!(
            "graph has {} real edges, need at least 2 to split",
            real_edges.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = real_edges.clone();
    use rand::seq::SliceRandom;
    shuffled.shuffle(&mut rng);
    let n_test = ((test_fraction * shuffled.len() as f64).round() as usize).min(shuffled.len());
    let test_pos = shuffled[..n_test].to_vec();
    let train_pos = shuffled[n_test..].to_vec();

    let edge_set: HashSet<(usize, usize)> = real_edges.iter().copied().collect();
    let test_neg = sample_negatives(g, &edge_set, &HashSet::new(), test_pos.len(), seed ^ TEST_NEG_SALT)?;
    let test_neg_set: HashSet<(usize, usize)> = test_neg.iter().copied().collect();
    let train_neg = sample_negatives(g, &edge_set, &test_neg_set, train_pos.len(), epoch_neg_seed(seed, 0))?;
    Ok(EdgeSplit {
        train_pos,
        test_pos,
        train_neg,
        test_neg,
        seed,
        n_nodes: g.n(),
    })
}

const TEST_NEG_SALT: u64 = 0x9e3779b97f4a7c15;

pub fn epoch_neg_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x100000001b3).wrapping_add(epoch as u64 + 1)
}

/// Uniform sample of `count` distinct non-edges between real nodes,
/// excluding anything in `avoid`.
pub fn sample_negatives(
    g: &MobilityGraph,
    edge_set: &HashSet<(usize, usize)>,
    avoid: &HashSet<(usize, usize)>,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let n = g.n();
    let mut pool = Vec::new();
    for u in 0..n {
        if g.null_mask[u] {
            continue;
        }
        for v in (u + 1)..n {
            if g.null_mask[v] || edge_set.contains(&(u, v)) || avoid.contains(&(u, v)) {
                continue;
            }
            pool.push((u, v));
        }
    }
    if pool.len() < count {
        return Err(Error::InvalidData(format!(
            "cannot sample {} negative edges: only {} non-edges available",
            count,
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, pool.len(), count);
    Ok(idx.iter().map(|i| pool[i]).collect())
}

/// Full-batch training. Each epoch resamples negatives, runs a forward pass
/// over the train-edge structure only, and takes one Adam step on the
/// summed BCE over positive and negative training pairs.
pub fn train_link_predictor(
    g: &MobilityGraph,
    split: &EdgeSplit,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(LinkPredictor, Vec<f64>)> {
    train_with_config(g, split, epochs, lr, seed, &GnnConfig::default())
}

pub fn train_with_config(
    g: &MobilityGraph,
    split: &EdgeSplit,
    epochs: usize,
    lr: f64,
    seed: u64,
    gnn_cfg: &GnnConfig,
) -> Result<(LinkPredictor, Vec<f64>)> {
    let n = g.n();
    let features = build_features_from_edges(&g.node_attrs, &split.train_pos, n);
    let mut model = LinkPredictor::new(g.real_node_count(), 3, gnn_cfg, seed);
    let edge_set: HashSet<(usize, usize)> = g
        .edges()
        .into_iter()
        .filter(|&(u, v)| !g.null_mask[u] && !g.null_mask[v])
        .collect();
    let test_neg_set: HashSet<(usize, usize)> = split.test_neg.iter().copied().collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let train_neg = sample_negatives(
            g,
            &edge_set,
            &test_neg_set,
            split.train_pos.len(),
            epoch_neg_seed(split.seed, epoch),
        )?;
        let mut batch: Vec<((usize, usize), f64)> =
            split.train_pos.iter().map(|&e| (e, 1.0)).collect();
        batch.extend(train_neg.iter().map(|&e| (e, 0.0)));
        let dropout_seed = seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(epoch as u64);
        let (loss, grads) = gradients(
            &model,
            &features,
            &split.train_pos,
            &batch,
            true,
            dropout_seed,
        )?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        adam_step(&mut model, &grads, lr)?;
        history.push(loss);
    }
    Ok((model, history))
}

/// Inference-mode likelihoods for candidate pairs, order-preserving.
pub fn predict_links(
    model: &LinkPredictor,
    features: &FeatureMatrix,
    structure_edges: &[(usize, usize)],
    candidates: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let nbrs = neighbor_lists(features.nrows(), structure_edges);
    let (h, _) = forward_all(model, features, &nbrs, false, 0)?;
    candidates
        .iter()
        .map(|&pair| edge_score(&h, pair).map(sigmoid))
        .collect()
}
