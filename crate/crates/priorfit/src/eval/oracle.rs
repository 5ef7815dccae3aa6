//! Brute-force Bayes oracle over a finite hypothesis list.
//!
//! When the prior over datasets has only a handful of hypotheses, the exact
//! posterior predictive distribution is a short enumeration. A network
//! meta-trained on datasets sampled from the same prior should land close to
//! it, which is what the oracle-equivalence check measures.

use crate::error::{Error, Result};
use crate::prior::{GeneratorKind, SyntheticDataset};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Likelihood = Box<dyn Fn(&[f32], u16) -> f64 + Send + Sync>;
type InputSampler = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<f32> + Send + Sync>;

pub struct Hypothesis {
    pub name: String,
    /// p(y | x, h); must sum to 1 over y for every x.
    pub likelihood: Likelihood,
}

/// A finite mixture of labeled-data hypotheses with an input distribution.
pub struct DiscretePrior {
    pub hypotheses: Vec<Hypothesis>,
    pub weights: Vec<f64>,
    pub n_classes: usize,
    pub n_features: usize,
    pub sample_input: InputSampler,
}

impl DiscretePrior {
    pub fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() || self.hypotheses.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "{} hypotheses vs {} weights",
                self.hypotheses.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("negative prior weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior weights sum to {total}, not 1")));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("oracle needs at least 2 classes".into()));
        }
        Ok(())
    }

    /// p(h | D_train) by direct enumeration.
    pub fn posterior(&self, d_train: &[(Vec<f32>, u16)]) -> Result<Vec<f64>> {
        self.validate()?;
        let mut log_w: Vec<f64> = self.weights.iter().map(|&w| w.ln()).collect();
        for (x, y) in d_train {
            for (lw, h) in log_w.iter_mut().zip(self.hypotheses.iter()) {
                *lw += (h.likelihood)(x, *y).ln();
            }
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Contract(
                "training data has zero likelihood under every hypothesis".into(),
            ));
        }
        let mut post: Vec<f64> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
        let z: f64 = post.iter().sum();
        for p in &mut post {
            *p /= z;
        }
        Ok(post)
    }
}

/// Exact PPD: p(y | x, D_train) = Σ_h p(h | D_train) p(y | x, h).
pub fn exact_ppd(prior: &DiscretePrior, d_train: &[(Vec<f32>, u16)], x: &[f32]) -> Result<Vec<f64>> {
    let post = prior.posterior(d_train)?;
    let mut ppd = vec![0.0f64; prior.n_classes];
    for (p_h, h) in post.iter().zip(prior.hypotheses.iter()) {
        for (y, slot) in ppd.iter_mut().enumerate() {
            *slot += p_h * (h.likelihood)(x, y as u16);
        }
    }
    Ok(ppd)
}

/// Total variation distance between two distributions over the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Draw one dataset: h ~ prior, rows x ~ input sampler, y ~ p(y|x, h).
pub fn sample_oracle_dataset(
    prior: &DiscretePrior,
    n_rows: usize,
    n_train: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticDataset> {
    prior.validate()?;
    if n_rows < 2 || n_train == 0 || n_train >= n_rows {
        return Err(Error::Contract(format!("bad split {n_train}/{n_rows}")));
    }
    let mut u: f64 = rng.gen();
    let mut h_idx = prior.hypotheses.len() - 1;
    for (i, &w) in prior.weights.iter().enumerate() {
        if u < w {
            h_idx = i;
            break;
        }
        u -= w;
    }
    let h = &prior.hypotheses[h_idx];
    let mut x = Vec::with_capacity(n_rows);
    let mut y = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let row = (prior.sample_input)(rng);
        let mut u: f64 = rng.gen();
        let mut label = prior.n_classes as u16 - 1;
        for c in 0..prior.n_classes as u16 {
            let p = (h.likelihood)(&row, c);
            if u < p {
                label = c;
                break;
            }
            u -= p;
        }
        x.push(row);
        y.push(label);
    }
    let k = prior.n_features;
    Ok(SyntheticDataset {
        mask: vec![vec![0u8; k]; n_rows],
        x,
        y,
        n_classes: prior.n_classes,
        psi_vector: Vec::new(),
        split_point: n_train,
        generator: GeneratorKind::Oracle,
    })
}

/// Per-query predictive distribution of the model on an oracle dataset, raw
/// features (no preprocessing), temperature 1.
pub fn model_query_probabilities(
    ckpt: &crate::model::ModelCheckpoint,
    ds: &SyntheticDataset,
) -> Result<Vec<Vec<f64>>> {
    use crate::model::{apply_temperature, forward, mask_invalid_classes, tokenize};
    let batch = tokenize(ds, &ckpt.params.config)?;
    let mut tape = crate::numerics::Tape::new();
    let fp = forward(&mut tape, &ckpt.params, &batch, false, None)?;
    let masked = mask_invalid_classes(&mut tape, fp.logits, ds.n_classes);
    let probs = apply_temperature(tape.value(masked), 1.0)?;
    let m = ds.rows() - ds.split_point;
    Ok((0..m)
        .map(|i| (0..ds.n_classes).map(|c| probs.at(i, c) as f64).collect())
        .collect())
}

/// Mean and per-probe total-variation distance between the model's
/// predictive distribution and the exact PPD over seeded random
/// (D_train, x) probes.
pub fn oracle_probe_tvs(
    ckpt: &crate::model::ModelCheckpoint,
    prior: &DiscretePrior,
    n_train: usize,
    n_probes: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    use rand::SeedableRng;
    if n_probes == 0 {
        return Err(Error::Contract("need at least one probe".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tvs = Vec::with_capacity(n_probes);
    for _ in 0..n_probes {
        let ds = sample_oracle_dataset(prior, n_train + 1, n_train, &mut rng)?;
        let d_train: Vec<(Vec<f32>, u16)> = ds.x[..n_train]
            .iter()
            .cloned()
            .zip(ds.y[..n_train].iter().copied())
            .collect();
        let oracle = exact_ppd(prior, &d_train, &ds.x[n_train])?;
        let model = model_query_probabilities(ckpt, &ds)?;
        tvs.push(total_variation(&model[0], &oracle));
    }
    let mean = tvs.iter().sum::<f64>() / tvs.len() as f64;
    Ok((mean, tvs))
}

/// The 4-hypothesis binary prior used by the oracle-equivalence check:
/// threshold rules y = [x > t] and their negations at t ∈ {-1, 1}, each with
/// label-flip noise 0.1, over x ~ Uniform(-2, 2).
pub fn four_threshold_prior() -> DiscretePrior {
    let flip = 0.1f64;
    let rule = move |t: f32, positive_above: bool| -> Likelihood {
        Box::new(move |x: &[f32], y: u16| {
            let above = x[0] > t;
            let clean = if above == positive_above { 1u16 } else { 0 };
            if y == clean {
                1.0 - flip
            } else {
                flip
            }
        })
    };
    DiscretePrior {
        hypotheses: vec![
            Hypothesis { name: "above -1".into(), likelihood: rule(-1.0, true) },
            Hypothesis { name: "below -1".into(), likelihood: rule(-1.0, false) },
            Hypothesis { name: "above 1".into(), likelihood: rule(1.0, true) },
            Hypothesis { name: "below 1".into(), likelihood: rule(1.0, false) },
        ],
        weights: vec![0.25; 4],
        n_classes: 2,
        n_features: 1,
        sample_input: Box::new(|rng| vec![rng.gen_range(-2.0f32..2.0)]),
    }
}
