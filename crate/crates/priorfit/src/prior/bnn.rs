//! Bayesian-neural-network prior: sample one random MLP per dataset, feed
//! standard-normal inputs through it and use the output as the regression
//! target.

use super::hyper::{Activation, PriorHyperparameters};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

const ROW_RETRIES: usize = 16;

/// A sampled MLP: weights per transition (rows: to, cols: from), read-out node.
#[derive(Debug, Clone, PartialEq)]
pub struct BnnInstance {
    pub input_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f32>>,
    pub activation: Activation,
    pub noise_std: f32,
    /// Index of the node (in the final layer) whose value becomes y.
    pub readout: usize,
}

pub fn sample_bnn<R: Rng>(psi: &PriorHyperparameters, k: usize, rng: &mut R) -> Result<BnnInstance> {
    if k < 1 {
        return Err(Error::Contract("sample_bnn needs k >= 1".into()));
    }
    let h = psi.hidden_nodes();
    let depth = psi.num_layers().max(2) - 1; // hidden layers plus read-out layer
    let mut layer_sizes = vec![h; depth];
    if psi.sample_y_last_layer() {
        // dedicated scalar output layer
        layer_sizes.push(1);
    }
    let w_std = psi.weight_std().max(1e-6) as f32;
    let mut weights = Vec::new();
    let mut prev = k;
    for &sz in &layer_sizes {
        // fan-in scaling keeps deep samples from blowing up
        let std = w_std / (prev as f32).sqrt();
        let normal = Normal::new(0.0f32, std).unwrap();
        weights.push((0..sz * prev).map(|_| normal.sample(rng)).collect());
        prev = sz;
    }
    let last = *layer_sizes.last().unwrap();
    let readout = if psi.sample_y_last_layer() { 0 } else { rng.gen_range(0..last) };
    Ok(BnnInstance {
        input_dim: k,
        layer_sizes,
        weights,
        activation: psi.activation(),
        noise_std: psi.noise_std() as f32,
        readout,
    })
}

/// Draw `n` rows: x ~ N(0, I_k), y = network(x) plus output noise.
pub fn bnn_forward<R: Rng>(
    bnn: &BnnInstance,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f32>>, Vec<f32>)> {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ok = false;
        for _ in 0..ROW_RETRIES {
            let x: Vec<f32> = (0..bnn.input_dim).map(|_| StandardNormal.sample(rng)).collect();
            let y = eval(bnn, &x)
                + if bnn.noise_std > 0.0 {
                    Normal::new(0.0f32, bnn.noise_std).unwrap().sample(rng)
                } else {
                    0.0
                };
            if y.is_finite() {
                xs.push(x);
                ys.push(y);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Numerical(format!(
                "non-finite BNN row after {ROW_RETRIES} retries"
            )));
        }
    }
    Ok((xs, ys))
}

fn eval(bnn: &BnnInstance, x: &[f32]) -> f32 {
    let mut cur = x.to_vec();
    let n_layers = bnn.layer_sizes.len();
    for (li, (&sz, w)) in bnn.layer_sizes.iter().zip(bnn.weights.iter()).enumerate() {
        let from = cur.len();
        let mut next = vec![0.0f32; sz];
        for (t, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (f, &xv) in cur.iter().enumerate() {
                acc += (w[t * from + f] as f64) * (xv as f64);
            }
            // the read-out layer stays linear so y is not range-limited
            *slot = if li + 1 == n_layers { acc as f32 } else { bnn.activation.apply(acc as f32) };
        }
        cur = next;
    }
    cur[bnn.readout]
}
