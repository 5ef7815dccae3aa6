//! The prior's hyperparameter vector ψ and the meta-distribution space it is
//! drawn from.
//!
//! ψ is stored as a flat `f64` vector with a fixed field order (see [`field`]);
//! typed accessors interpret the slots. `encode` min-max scales every slot to
//! [0, 1] against its space support so the style token sees comparable
//! magnitudes, and `decode` inverts that (snapping rounded/choice fields).

use super::meta::MetaDistribution;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fixed slot order of the ψ vector. New fields append; order is part of the
/// shard and checkpoint formats.
pub mod field {
    pub const GP_SAMPLING_WEIGHT: usize = 0;
    pub const DROPOUT_ALPHA: usize = 1;
    pub const DROPOUT_BETA: usize = 2;
    pub const DROPOUT_SCALE: usize = 3;
    pub const SAMPLE_SCM: usize = 4;
    pub const SHARE_NOISE_MEAN: usize = 5;
    pub const SAMPLE_Y_LAST_LAYER: usize = 6;
    pub const ACTIVATION: usize = 7;
    pub const BLOCKWISE_DROPOUT: usize = 8;
    pub const KEEP_FEATURE_ORDER: usize = 9;
    pub const SAMPLE_FEATURES_BLOCKWISE: usize = 10;
    pub const GP_NOISE: usize = 11;
    pub const NUM_LAYERS: usize = 12;
    pub const HIDDEN_NODES: usize = 13;
    pub const NOISE_STD: usize = 14;
    pub const WEIGHT_STD: usize = 15;
    pub const LAYER1_NODES: usize = 16;
    pub const GP_OUTPUTSCALE: usize = 17;
    pub const GP_LENGTHSCALE: usize = 18;
    pub const NUM_CLASSES: usize = 19;
    pub const SHUFFLE_PROB: usize = 20;
    pub const NAN_PROB: usize = 21;
    pub const NAN_FRACTION: usize = 22;
    pub const P_CAT: usize = 23;
    pub const P_SCAT: usize = 24;
    pub const COUNT: usize = 25;

    pub const NAMES: [&str; COUNT] = [
        "gp_sampling_weight",
        "dropout_alpha",
        "dropout_beta",
        "dropout_scale",
        "sample_scm",
        "share_noise_mean",
        "sample_y_last_layer",
        "activation",
        "blockwise_dropout",
        "keep_feature_order",
        "sample_features_blockwise",
        "gp_noise",
        "num_layers",
        "hidden_nodes",
        "noise_std",
        "weight_std",
        "layer1_nodes",
        "gp_outputscale",
        "gp_lengthscale",
        "num_classes",
        "shuffle_prob",
        "nan_prob",
        "nan_fraction",
        "p_cat",
        "p_scat",
    ];
}

/// Base mixture weight of the non-GP branch; the GP branch is chosen with
/// probability w / (w + GP_BASE_WEIGHT) where w is ψ's GP sampling weight.
pub const GP_BASE_WEIGHT: f64 = 10.0;

/// Per-dataset activation choice; slot values 0..4 in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
    Elu,
    Identity,
    Threshold,
}

impl Activation {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            2 => Activation::Elu,
            3 => Activation::Identity,
            4 => Activation::Threshold,
            _ => panic!("activation index {i} out of range"),
        }
    }

    pub fn apply(&self, x: f32) -> f32 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Identity => x,
            Activation::Threshold => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One meta-distribution per ψ slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpace {
    dists: Vec<MetaDistribution>,
}

impl PriorSpace {
    pub fn from_dists(dists: Vec<MetaDistribution>) -> Result<Self> {
        if dists.len() != field::COUNT {
            return Err(Error::Config(format!(
                "prior space needs {} distributions, got {}",
                field::COUNT,
                dists.len()
            )));
        }
        let space = PriorSpace { dists };
        space.validate()?;
        Ok(space)
    }

    /// The broad search space with activation weight on the main three choices.
    pub fn full() -> Self {
        use MetaDistribution as M;
        let dists = vec![
            M::Uniform { lo: 0.5, hi: 8.0, round: false },
            M::Uniform { lo: 0.1, hi: 5.0, round: false },
            M::Uniform { lo: 0.1, hi: 5.0, round: false },
            M::point(0.9),
            M::choice_bool(0.5),
            M::choice_bool(0.5),
            M::choice_bool(0.5),
            M::Choice {
                values: vec![0.0, 1.0, 2.0, 3.0, 4.0],
                weights: vec![1.0, 1.0, 0.0, 1.0, 0.0],
            },
            M::choice_bool(0.5),
            M::choice_bool(0.5),
            M::choice_bool(0.5),
            M::Choice { values: vec![1e-5, 1e-4, 0.01], weights: vec![1.0, 1.0, 1.0] },
            M::TruncatedNormal { min_mean: 1.0, max_mean: 6.0, round: true, lower_bound: 2.0, log_scaled: true },
            M::TruncatedNormal { min_mean: 5.0, max_mean: 130.0, round: true, lower_bound: 4.0, log_scaled: true },
            M::TruncatedNormal { min_mean: 0.0001, max_mean: 0.3, round: false, lower_bound: 0.0, log_scaled: false },
            M::TruncatedNormal { min_mean: 0.01, max_mean: 10.0, round: false, lower_bound: 0.0, log_scaled: true },
            M::TruncatedNormal { min_mean: 1.0, max_mean: 12.0, round: true, lower_bound: 1.0, log_scaled: true },
            M::TruncatedNormal { min_mean: 1e-5, max_mean: 10.0, round: false, lower_bound: 0.0, log_scaled: true },
            M::TruncatedNormal { min_mean: 1e-5, max_mean: 10.0, round: false, lower_bound: 0.0, log_scaled: true },
            M::Choice { values: (2..=10).map(|v| v as f64).collect(), weights: vec![1.0; 9] },
            M::point(0.5),
            M::Uniform { lo: 0.0, hi: 0.2, round: false },
            M::Uniform { lo: 0.0, hi: 0.3, round: false },
            M::Uniform { lo: 0.0, hi: 0.3, round: false },
            M::Uniform { lo: 0.0, hi: 0.5, round: false },
        ];
        PriorSpace { dists }
    }

    /// Desk-scale training space: gentler noise, small graphs, 2-3 classes,
    /// no missing values or categoricals. Used by the bundled demo model.
    pub fn desk() -> Self {
        use MetaDistribution as M;
        let mut s = Self::full();
        s.dists[field::GP_SAMPLING_WEIGHT] = M::Uniform { lo: 0.5, hi: 2.0, round: false };
        s.dists[field::DROPOUT_ALPHA] = M::Uniform { lo: 0.5, hi: 3.0, round: false };
        s.dists[field::DROPOUT_BETA] = M::Uniform { lo: 2.0, hi: 5.0, round: false };
        s.dists[field::DROPOUT_SCALE] = M::point(0.5);
        s.dists[field::NUM_LAYERS] =
            M::TruncatedNormal { min_mean: 1.0, max_mean: 3.0, round: true, lower_bound: 2.0, log_scaled: true };
        s.dists[field::HIDDEN_NODES] =
            M::TruncatedNormal { min_mean: 4.0, max_mean: 16.0, round: true, lower_bound: 4.0, log_scaled: true };
        s.dists[field::NOISE_STD] =
            M::TruncatedNormal { min_mean: 0.0001, max_mean: 0.1, round: false, lower_bound: 0.0, log_scaled: false };
        s.dists[field::WEIGHT_STD] =
            M::TruncatedNormal { min_mean: 0.5, max_mean: 3.0, round: false, lower_bound: 0.0, log_scaled: true };
        s.dists[field::LAYER1_NODES] =
            M::TruncatedNormal { min_mean: 2.0, max_mean: 8.0, round: true, lower_bound: 2.0, log_scaled: true };
        s.dists[field::NUM_CLASSES] =
            M::Choice { values: vec![2.0, 3.0], weights: vec![2.0, 1.0] };
        s.dists[field::SHUFFLE_PROB] = M::point(0.5);
        s.dists[field::NAN_PROB] = M::point(0.0);
        s.dists[field::P_CAT] = M::point(0.0);
        s.dists[field::P_SCAT] = M::point(0.0);
        s
    }

    /// GP-only binary space for the hyperparameter-recovery ablation:
    /// outputscale and lengthscale uniform on [0, 10], noise uniform on
    /// [0.01, 0.5], everything else pinned.
    pub fn gp_ablation() -> Self {
        use MetaDistribution as M;
        let mut s = Self::full();
        s.dists[field::GP_SAMPLING_WEIGHT] = M::point(1e9);
        s.dists[field::GP_OUTPUTSCALE] = M::Uniform { lo: 0.0, hi: 10.0, round: false };
        s.dists[field::GP_LENGTHSCALE] = M::Uniform { lo: 0.0, hi: 10.0, round: false };
        s.dists[field::GP_NOISE] = M::Uniform { lo: 0.01, hi: 0.5, round: false };
        s.dists[field::NUM_CLASSES] = M::point(2.0);
        s.dists[field::SHUFFLE_PROB] = M::point(0.0);
        s.dists[field::NAN_PROB] = M::point(0.0);
        s.dists[field::P_CAT] = M::point(0.0);
        s.dists[field::P_SCAT] = M::point(0.0);
        s
    }

    /// Smoke-test space: always a depth-1 identity BNN with zero noise, two
    /// balanced classes, no shuffling or missingness. Datasets are linearly
    /// separable, so even a small model should learn them quickly.
    pub fn toy_linear() -> Self {
        use MetaDistribution as M;
        let mut s = Self::desk();
        s.dists[field::GP_SAMPLING_WEIGHT] = M::point(0.0);
        s.dists[field::SAMPLE_SCM] = M::choice_bool(0.0);
        s.dists[field::SAMPLE_Y_LAST_LAYER] = M::choice_bool(1.0);
        s.dists[field::ACTIVATION] = M::Choice { values: vec![3.0], weights: vec![1.0] };
        s.dists[field::NUM_LAYERS] = M::point(2.0);
        s.dists[field::HIDDEN_NODES] = M::point(8.0);
        s.dists[field::NOISE_STD] = M::point(0.0);
        s.dists[field::WEIGHT_STD] = M::point(1.0);
        s.dists[field::NUM_CLASSES] = M::point(2.0);
        s.dists[field::SHUFFLE_PROB] = M::point(0.0);
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.dists.iter().enumerate() {
            d.validate(field::NAMES[i])?;
        }
        Ok(())
    }

    pub fn dist(&self, slot: usize) -> &MetaDistribution {
        &self.dists[slot]
    }

    pub fn set_dist(&mut self, slot: usize, d: MetaDistribution) {
        self.dists[slot] = d;
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }
}

/// One concrete draw of the prior's hyperparameters (per dataset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorHyperparameters {
    values: Vec<f64>,
}

impl PriorHyperparameters {
    /// Draw ψ from the space. Deterministic given the rng stream.
    pub fn sample<R: Rng>(space: &PriorSpace, rng: &mut R) -> Result<Self> {
        space.validate()?;
        let values = space.dists.iter().map(|d| d.sample(rng)).collect();
        let psi = PriorHyperparameters { values };
        psi.validate()?;
        Ok(psi)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != field::COUNT {
            return Err(Error::Config(format!(
                "ψ needs {} values, got {}",
                field::COUNT,
                values.len()
            )));
        }
        let psi = PriorHyperparameters { values };
        psi.validate()?;
        Ok(psi)
    }

    fn validate(&self) -> Result<()> {
        for (slot, label) in [
            (field::SHUFFLE_PROB, "shuffle_prob"),
            (field::NAN_PROB, "nan_prob"),
            (field::NAN_FRACTION, "nan_fraction"),
            (field::P_CAT, "p_cat"),
            (field::P_SCAT, "p_scat"),
        ] {
            let v = self.values[slot];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{label} = {v} outside [0, 1]")));
            }
        }
        for (slot, label, min) in [
            (field::NUM_LAYERS, "num_layers", 2.0),
            (field::HIDDEN_NODES, "hidden_nodes", 1.0),
            (field::LAYER1_NODES, "layer1_nodes", 1.0),
            (field::NUM_CLASSES, "num_classes", 2.0),
        ] {
            let v = self.values[slot];
            if v < min || v != v.round() {
                return Err(Error::Config(format!("{label} = {v} is not an integer >= {min}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    pub fn set(&mut self, slot: usize, v: f64) {
        self.values[slot] = v;
    }

    // typed accessors
    pub fn gp_sampling_weight(&self) -> f64 {
        self.values[field::GP_SAMPLING_WEIGHT]
    }
    /// Probability that a dataset is drawn from the GP branch of the mixture.
    pub fn gp_probability(&self) -> f64 {
        let w = self.gp_sampling_weight();
        w / (w + GP_BASE_WEIGHT)
    }
    pub fn dropout_alpha(&self) -> f64 {
        self.values[field::DROPOUT_ALPHA]
    }
    pub fn dropout_beta(&self) -> f64 {
        self.values[field::DROPOUT_BETA]
    }
    pub fn dropout_scale(&self) -> f64 {
        self.values[field::DROPOUT_SCALE]
    }
    pub fn sample_scm(&self) -> bool {
        self.values[field::SAMPLE_SCM] != 0.0
    }
    pub fn share_noise_mean(&self) -> bool {
        self.values[field::SHARE_NOISE_MEAN] != 0.0
    }
    pub fn sample_y_last_layer(&self) -> bool {
        self.values[field::SAMPLE_Y_LAST_LAYER] != 0.0
    }
    pub fn activation(&self) -> Activation {
        Activation::from_index(self.values[field::ACTIVATION] as usize)
    }
    pub fn blockwise_dropout(&self) -> bool {
        self.values[field::BLOCKWISE_DROPOUT] != 0.0
    }
    pub fn keep_feature_order(&self) -> bool {
        self.values[field::KEEP_FEATURE_ORDER] != 0.0
    }
    pub fn sample_features_blockwise(&self) -> bool {
        self.values[field::SAMPLE_FEATURES_BLOCKWISE] != 0.0
    }
    pub fn gp_noise(&self) -> f64 {
        self.values[field::GP_NOISE]
    }
    pub fn num_layers(&self) -> usize {
        self.values[field::NUM_LAYERS] as usize
    }
    pub fn hidden_nodes(&self) -> usize {
        self.values[field::HIDDEN_NODES] as usize
    }
    pub fn noise_std(&self) -> f64 {
        self.values[field::NOISE_STD]
    }
    pub fn weight_std(&self) -> f64 {
        self.values[field::WEIGHT_STD]
    }
    pub fn layer1_nodes(&self) -> usize {
        self.values[field::LAYER1_NODES] as usize
    }
    pub fn gp_outputscale(&self) -> f64 {
        self.values[field::GP_OUTPUTSCALE]
    }
    pub fn gp_lengthscale(&self) -> f64 {
        self.values[field::GP_LENGTHSCALE]
    }
    pub fn num_classes(&self) -> usize {
        self.values[field::NUM_CLASSES] as usize
    }
    pub fn shuffle_prob(&self) -> f64 {
        self.values[field::SHUFFLE_PROB]
    }
    pub fn nan_prob(&self) -> f64 {
        self.values[field::NAN_PROB]
    }
    pub fn nan_fraction(&self) -> f64 {
        self.values[field::NAN_FRACTION]
    }
    pub fn p_cat(&self) -> f64 {
        self.values[field::P_CAT]
    }
    pub fn p_scat(&self) -> f64 {
        self.values[field::P_SCAT]
    }

    /// Fixed-length [0, 1] vector in slot order; the style-token input.
    pub fn encode(&self, space: &PriorSpace) -> Vec<f32> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| space.dist(i).encode(v))
            .collect()
    }

    /// Inverse of [`encode`]; rounded and choice slots snap to valid values.
    pub fn decode(space: &PriorSpace, encoded: &[f32]) -> Result<Self> {
        if encoded.len() != field::COUNT {
            return Err(Error::Config(format!(
                "encoded ψ needs {} entries, got {}",
                field::COUNT,
                encoded.len()
            )));
        }
        let values = encoded
            .iter()
            .enumerate()
            .map(|(i, &e)| space.dist(i).decode(e))
            .collect();
        PriorHyperparameters::from_values(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_is_deterministic_given_seed() {
        let space = PriorSpace::full();
        let a = PriorHyperparameters::sample(&space, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = PriorHyperparameters::sample(&space, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let space = PriorSpace::full();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let psi = PriorHyperparameters::sample(&space, &mut rng).unwrap();
            let enc = psi.encode(&space);
            assert_eq!(enc.len(), field::COUNT);
            assert!(enc.iter().all(|&e| (0.0..=1.0).contains(&e)));
            let back = PriorHyperparameters::decode(&space, &enc).unwrap();
            for i in 0..field::COUNT {
                let (a, b) = (psi.get(i), back.get(i));
                let tol = 1e-5 * (1.0 + a.abs());
                assert!((a - b).abs() <= tol, "slot {i} ({}) {a} vs {b}", field::NAMES[i]);
            }
        }
    }

    #[test]
    fn count_fields_are_positive_integers() {
        let space = PriorSpace::full();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let psi = PriorHyperparameters::sample(&space, &mut rng).unwrap();
            assert!(psi.num_layers() >= 2);
            assert!(psi.hidden_nodes() >= 4);
            assert!(psi.layer1_nodes() >= 1);
            assert!((2..=10).contains(&psi.num_classes()));
        }
    }

    #[test]
    fn malformed_space_is_a_configuration_error() {
        let mut space = PriorSpace::full();
        space.set_dist(field::NAN_PROB, MetaDistribution::Uniform { lo: 1.0, hi: 0.0, round: false });
        let err = PriorHyperparameters::sample(&space, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(crate::error::Error::Config(_))));
    }
}
