//! Structural causal model sampling: an MLP-shaped layered DAG with dropped
//! edges, random affine mechanisms, per-node noise and designated
//! feature/label nodes.

use super::hyper::{Activation, PriorHyperparameters};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Normal};

/// (layer, index-within-layer) address of a node.
pub type NodeAddr = (usize, usize);

/// Dense transition between adjacent layers with a retained-edge mask.
/// `weight[t * from + f]` is the edge layer[i][f] -> layer[i+1][t].
#[derive(Debug, Clone, PartialEq)]
pub struct ScmTransition {
    pub from: usize,
    pub to: usize,
    pub weight: Vec<f32>,
    pub present: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmInstance {
    /// Node counts per layer; edges only run from layer i to layer i+1.
    pub layer_sizes: Vec<usize>,
    pub transitions: Vec<ScmTransition>,
    /// Per-layer, per-node (mean, std) of the node's Gaussian noise.
    pub noise: Vec<Vec<(f32, f32)>>,
    pub activation: Activation,
    pub feature_nodes: Vec<NodeAddr>,
    pub label_node: NodeAddr,
}

impl ScmInstance {
    pub fn retained_edge_count(&self) -> usize {
        self.transitions
            .iter()
            .map(|t| t.present.iter().filter(|&&p| p).count())
            .sum()
    }

    /// A label node is degenerate when no retained path connects it to any
    /// layer-0 noise source.
    fn label_reaches_layer0(&self) -> bool {
        let (ll, li) = self.label_node;
        if ll == 0 {
            return true;
        }
        // walk ancestor sets backwards layer by layer
        let mut frontier = vec![false; self.layer_sizes[ll]];
        frontier[li] = true;
        for layer in (1..=ll).rev() {
            let tr = &self.transitions[layer - 1];
            let mut prev = vec![false; self.layer_sizes[layer - 1]];
            for t in 0..tr.to {
                if !frontier[t] {
                    continue;
                }
                for f in 0..tr.from {
                    if tr.present[t * tr.from + f] {
                        prev[f] = true;
                    }
                }
            }
            if prev.iter().all(|&p| !p) {
                return false;
            }
            frontier = prev;
        }
        true
    }
}

const GRAPH_RETRIES: usize = 16;
const ROW_RETRIES: usize = 16;

/// Sample an SCM instance for `k` features under ψ.
pub fn sample_scm<R: Rng>(psi: &PriorHyperparameters, k: usize, rng: &mut R) -> Result<ScmInstance> {
    if k < 1 {
        return Err(Error::Contract("sample_scm needs k >= 1".into()));
    }
    let mut last_err = String::new();
    for _ in 0..GRAPH_RETRIES {
        match sample_scm_once(psi, k, rng) {
            Ok(scm) if scm.label_reaches_layer0() => return Ok(scm),
            Ok(_) => last_err = "label node disconnected from all noise sources".to_string(),
            Err(Error::DegenerateGraph(msg)) => last_err = msg,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateGraph(format!(
        "{last_err} after {GRAPH_RETRIES} retries"
    )))
}

fn sample_scm_once<R: Rng>(psi: &PriorHyperparameters, k: usize, rng: &mut R) -> Result<ScmInstance> {
    let l = psi.num_layers();
    let h = psi.hidden_nodes();
    let mut layer_sizes = vec![h; l];
    layer_sizes[0] = psi.layer1_nodes();
    // ensure there is room for k features plus a label somewhere past layer 0
    let total: usize = layer_sizes.iter().sum();
    if total < k + 1 {
        let deficit = k + 1 - total;
        let last = layer_sizes.len() - 1;
        layer_sizes[last] += deficit;
    }

    let weight_std = psi.weight_std().max(1e-6) as f32;
    let dropout = sample_dropout_rate(psi, rng);
    let normal_w = Normal::new(0.0f32, weight_std).unwrap();

    let mut transitions = Vec::with_capacity(l - 1);
    for i in 0..l - 1 {
        let (from, to) = (layer_sizes[i], layer_sizes[i + 1]);
        let mut weight = vec![0.0f32; from * to];
        let mut present = vec![false; from * to];
        if psi.blockwise_dropout() {
            // drop whole fan-outs of source nodes
            let keep: Vec<bool> = (0..from).map(|_| rng.gen::<f64>() >= dropout).collect();
            for t in 0..to {
                for f in 0..from {
                    if keep[f] {
                        present[t * from + f] = true;
                        weight[t * from + f] = normal_w.sample(rng);
                    }
                }
            }
        } else {
            for e in 0..from * to {
                if rng.gen::<f64>() >= dropout {
                    present[e] = true;
                    weight[e] = normal_w.sample(rng);
                }
            }
        }
        transitions.push(ScmTransition { from, to, weight, present });
    }

    let noise = sample_noise(psi, &layer_sizes, rng);
    let activation = psi.activation();
    let (feature_nodes, label_node) = pick_feature_and_label_nodes(psi, &layer_sizes, k, rng)?;

    Ok(ScmInstance { layer_sizes, transitions, noise, activation, feature_nodes, label_node })
}

fn sample_dropout_rate<R: Rng>(psi: &PriorHyperparameters, rng: &mut R) -> f64 {
    let d = BetaDist::new(psi.dropout_alpha(), psi.dropout_beta()).expect("validated ψ");
    d.sample(rng) * psi.dropout_scale()
}

/// Per-node Gaussian noise with normally distributed mean and std; the mean is
/// shared across nodes when ψ's share-noise flag is set.
fn sample_noise<R: Rng>(
    psi: &PriorHyperparameters,
    layer_sizes: &[usize],
    rng: &mut R,
) -> Vec<Vec<(f32, f32)>> {
    let scale = psi.noise_std().max(1e-12);
    let normal = Normal::new(0.0f64, scale).unwrap();
    let shared_mean = normal.sample(rng) as f32;
    layer_sizes
        .iter()
        .map(|&sz| {
            (0..sz)
                .map(|_| {
                    let mean = if psi.share_noise_mean() { shared_mean } else { normal.sample(rng) as f32 };
                    let std = normal.sample(rng).abs() as f32;
                    (mean, std)
                })
                .collect()
        })
        .collect()
}

fn pick_feature_and_label_nodes<R: Rng>(
    psi: &PriorHyperparameters,
    layer_sizes: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<(Vec<NodeAddr>, NodeAddr)> {
    let all: Vec<NodeAddr> = layer_sizes
        .iter()
        .enumerate()
        .flat_map(|(li, &sz)| (0..sz).map(move |ni| (li, ni)))
        .collect();

    let mut features: Vec<NodeAddr>;
    if psi.sample_features_blockwise() {
        // adjacent run of k nodes in node order (spills across layer ends)
        let start = rng.gen_range(0..all.len().saturating_sub(k).max(1));
        features = all[start..(start + k).min(all.len())].to_vec();
        let mut ix = 0usize;
        while features.len() < k {
            // wrap around when the run hits the end
            features.push(all[ix]);
            ix += 1;
        }
    } else {
        let mut pool = all.clone();
        features = Vec::with_capacity(k);
        for _ in 0..k {
            if pool.is_empty() {
                return Err(Error::Contract(format!("graph too small for {k} features")));
            }
            let ix = rng.gen_range(0..pool.len());
            features.push(pool.swap_remove(ix));
        }
    }
    if !psi.keep_feature_order() {
        // Fisher-Yates on the chosen order
        for i in (1..features.len()).rev() {
            let j = rng.gen_range(0..=i);
            features.swap(i, j);
        }
    }

    // label drawn from layers >= 1, distinct from all features
    let candidates: Vec<NodeAddr> = all
        .iter()
        .copied()
        .filter(|a| a.0 >= 1 && !features.contains(a))
        .collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateGraph("no node left for the label".into()));
    }
    let label = candidates[rng.gen_range(0..candidates.len())];
    Ok((features, label))
}

/// Evaluate the SCM for `n` rows: fresh noise per node per row, layers in
/// topological order, returning feature values and the raw scalar label.
pub fn scm_forward<R: Rng>(
    scm: &ScmInstance,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f32>>, Vec<f32>)> {
    let k = scm.feature_nodes.len();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ok = false;
        for _ in 0..ROW_RETRIES {
            let values = forward_once(scm, rng);
            let x: Vec<f32> = scm.feature_nodes.iter().map(|&(l, i)| values[l][i]).collect();
            let y = values[scm.label_node.0][scm.label_node.1];
            if x.iter().all(|v| v.is_finite()) && y.is_finite() {
                xs.push(x);
                ys.push(y);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Numerical(format!(
                "non-finite SCM row after {ROW_RETRIES} retries"
            )));
        }
    }
    debug_assert_eq!(xs.len(), n);
    debug_assert!(xs.iter().all(|r| r.len() == k));
    Ok((xs, ys))
}

fn forward_once<R: Rng>(scm: &ScmInstance, rng: &mut R) -> Vec<Vec<f32>> {
    let a = scm.activation;
    let mut values: Vec<Vec<f32>> = Vec::with_capacity(scm.layer_sizes.len());
    for (li, &sz) in scm.layer_sizes.iter().enumerate() {
        let mut layer = vec![0.0f32; sz];
        for (ni, slot) in layer.iter_mut().enumerate() {
            let (mean, std) = scm.noise[li][ni];
            let eps = if std > 0.0 {
                Normal::new(mean, std).unwrap().sample(rng)
            } else {
                mean
            };
            let mut acc = eps as f64;
            if li > 0 {
                let tr = &scm.transitions[li - 1];
                let prev = &values[li - 1];
                for f in 0..tr.from {
                    let w = tr.weight[ni * tr.from + f];
                    if w != 0.0 {
                        acc += (w as f64) * (prev[f] as f64);
                    }
                }
            }
            *slot = a.apply(acc as f32);
        }
        values.push(layer);
    }
    values
}
