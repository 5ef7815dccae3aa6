//! Column preprocessing for real tasks. All statistics come from the train
//! rows only; z-normalization is always the last step; masked cells end up as
//! exact zeros. Columns with no observed train value are dropped.

use super::PredictTask;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessVariant {
    /// Per-column (x - mean) / std.
    ZNorm,
    /// (x - median) / IQR, clipped to ±ROBUST_CLIP, then z-norm. Without the
    /// clip the final z-norm would make this variant equal to plain z-norm.
    Robust,
    /// Yeo-Johnson with λ grid-searched to minimize |skewness|, then z-norm.
    Power,
}

/// Bound on robust-scaled values, in IQR units from the median.
pub const ROBUST_CLIP: f64 = 10.0;

/// Median and IQR-based scale of a sample (scale falls back to 1 when the
/// quartiles coincide).
pub fn robust_scale(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile(&sorted, 0.5);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    (median, if iqr > 1e-12 { iqr } else { 1.0 })
}

fn observed<'a>(
    x: &'a [Vec<f32>],
    mask: &'a [Vec<u8>],
    col: usize,
) -> impl Iterator<Item = f64> + 'a {
    x.iter()
        .zip(mask.iter())
        .filter(move |(_, m)| m[col] == 0)
        .map(move |(r, _)| r[col] as f64)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 1e-24 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// The Yeo-Johnson transform, defined for all reals and all λ.
pub fn yeo_johnson(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        if lambda.abs() < 1e-9 {
            (x + 1.0).ln()
        } else {
            ((x + 1.0).powf(lambda) - 1.0) / lambda
        }
    } else if (lambda - 2.0).abs() < 1e-9 {
        -(-x + 1.0).ln()
    } else {
        -((-x + 1.0).powf(2.0 - lambda) - 1.0) / (2.0 - lambda)
    }
}

/// Pick λ from a fixed grid minimizing the transformed train skewness.
fn best_lambda(train: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, 1.0);
    let mut l = -2.0f64;
    while l <= 2.0 + 1e-9 {
        let transformed: Vec<f64> = train.iter().map(|&v| yeo_johnson(v, l)).collect();
        if transformed.iter().all(|v| v.is_finite()) {
            let s = skewness(&transformed).abs();
            if s < best.0 {
                best = (s, l);
            }
        }
        l += 0.25;
    }
    best.1
}

/// Apply the variant to a permuted task. Columns with zero observed train
/// cells are dropped and a warning recorded.
pub fn preprocess(
    task: &PredictTask,
    variant: PreprocessVariant,
    warnings: &mut Vec<String>,
) -> Result<PredictTask> {
    let k = task.features();
    let mut keep = Vec::with_capacity(k);
    for col in 0..k {
        if observed(&task.x_train, &task.mask_train, col).next().is_some() {
            keep.push(col);
        } else {
            warnings.push(format!("column {col} has no observed training value; dropped"));
        }
    }

    let mut x_train: Vec<Vec<f64>> = task
        .x_train
        .iter()
        .map(|r| keep.iter().map(|&c| r[c] as f64).collect())
        .collect();
    let mut x_test: Vec<Vec<f64>> = task
        .x_test
        .iter()
        .map(|r| keep.iter().map(|&c| r[c] as f64).collect())
        .collect();
    let mask_train: Vec<Vec<u8>> =
        task.mask_train.iter().map(|r| keep.iter().map(|&c| r[c]).collect()).collect();
    let mask_test: Vec<Vec<u8>> =
        task.mask_test.iter().map(|r| keep.iter().map(|&c| r[c]).collect()).collect();

    for (j, _) in keep.iter().enumerate() {
        let train_vals: Vec<f64> = x_train
            .iter()
            .zip(mask_train.iter())
            .filter(|(_, m)| m[j] == 0)
            .map(|(r, _)| r[j])
            .collect();

        // variant-specific pre-scaling on observed cells (train stats only)
        match variant {
            PreprocessVariant::ZNorm => {}
            PreprocessVariant::Robust => {
                let (median, scale) = robust_scale(&train_vals);
                for (r, m) in x_train.iter_mut().zip(mask_train.iter()) {
                    if m[j] == 0 {
                        r[j] = ((r[j] - median) / scale).clamp(-ROBUST_CLIP, ROBUST_CLIP);
                    }
                }
                for (r, m) in x_test.iter_mut().zip(mask_test.iter()) {
                    if m[j] == 0 {
                        r[j] = ((r[j] - median) / scale).clamp(-ROBUST_CLIP, ROBUST_CLIP);
                    }
                }
            }
            PreprocessVariant::Power => {
                let lambda = best_lambda(&train_vals);
                for (r, m) in x_train.iter_mut().zip(mask_train.iter()) {
                    if m[j] == 0 {
                        r[j] = yeo_johnson(r[j], lambda);
                    }
                }
                for (r, m) in x_test.iter_mut().zip(mask_test.iter()) {
                    if m[j] == 0 {
                        r[j] = yeo_johnson(r[j], lambda);
                    }
                }
            }
        }

        // z-normalization last, train statistics
        let vals: Vec<f64> = x_train
            .iter()
            .zip(mask_train.iter())
            .filter(|(_, m)| m[j] == 0)
            .map(|(r, _)| r[j])
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let std = var.sqrt();
        let apply = |r: &mut Vec<f64>, m: &Vec<u8>| {
            if m[j] == 0 {
                r[j] = if std > 1e-12 { (r[j] - mean) / std } else { 0.0 };
            } else {
                r[j] = 0.0;
            }
        };
        for (r, m) in x_train.iter_mut().zip(mask_train.iter()) {
            apply(r, m);
        }
        for (r, m) in x_test.iter_mut().zip(mask_test.iter()) {
            apply(r, m);
        }
    }

    let to_f32 = |rows: Vec<Vec<f64>>| -> Vec<Vec<f32>> {
        rows.into_iter().map(|r| r.into_iter().map(|v| v as f32).collect()).collect()
    };
    let old_to_new: Vec<Option<usize>> = {
        let mut map = vec![None; k];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        map
    };
    Ok(PredictTask {
        x_train: to_f32(x_train),
        mask_train,
        y_train: task.y_train.clone(),
        x_test: to_f32(x_test),
        mask_test,
        n_classes: task.n_classes,
        label_names: task.label_names.clone(),
        categorical: task.categorical.iter().filter_map(|&c| old_to_new[c]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task_from_column(train: Vec<f32>, test: Vec<f32>) -> PredictTask {
        let n = train.len();
        let m = test.len();
        PredictTask {
            x_train: train.into_iter().map(|v| vec![v]).collect(),
            mask_train: vec![vec![0]; n],
            y_train: (0..n).map(|i| (i % 2) as u16).collect(),
            x_test: test.into_iter().map(|v| vec![v]).collect(),
            mask_test: vec![vec![0]; m],
            n_classes: 2,
            label_names: vec!["a".into(), "b".into()],
            categorical: vec![],
        }
    }

    fn col(rows: &[Vec<f32>]) -> Vec<f64> {
        rows.iter().map(|r| r[0] as f64).collect()
    }

    #[test]
    fn standardized_column_is_unchanged_by_znorm() {
        let raw = vec![-1.3416408f32, -0.4472136, 0.4472136, 1.3416408]; // mean 0 std 1
        let task = task_from_column(raw.clone(), vec![0.5]);
        let mut w = Vec::new();
        let out = preprocess(&task, PreprocessVariant::ZNorm, &mut w).unwrap();
        for (a, b) in col(&out.x_train).iter().zip(raw.iter()) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
        assert!(w.is_empty());
    }

    #[test]
    fn robust_scale_is_insensitive_to_one_outlier() {
        let mut base: Vec<f64> = (0..40).map(|i| i as f64 / 10.0).collect();
        let (_, clean_scale) = robust_scale(&base);
        base[39] = 1e6;
        let (_, dirty_scale) = robust_scale(&base);
        // the IQR barely moves; the standard deviation explodes
        assert!(dirty_scale / clean_scale < 1.1, "{clean_scale} vs {dirty_scale}");
        let mean = base.iter().sum::<f64>() / 40.0;
        let std = (base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0).sqrt();
        assert!(std / clean_scale > 1e3);

        // end to end, the clipped robust variant keeps the bulk of the data
        // spread out where plain z-norm collapses it
        let raw: Vec<f32> = base.iter().map(|&v| v as f32).collect();
        let task = task_from_column(raw, vec![]);
        let mut w = Vec::new();
        let robust = preprocess(&task, PreprocessVariant::Robust, &mut w).unwrap();
        let znorm = preprocess(&task, PreprocessVariant::ZNorm, &mut w).unwrap();
        let spread = |rows: &[Vec<f32>]| {
            let v = &col(rows)[5..35];
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(spread(&robust.x_train) > 100.0 * spread(&znorm.x_train));
    }

    #[test]
    fn power_transform_reduces_exponential_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw: Vec<f32> = (0..300).map(|_| -rng.gen::<f32>().max(1e-6).ln()).collect();
        let before = skewness(&raw.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let task = task_from_column(raw, vec![]);
        let mut w = Vec::new();
        let out = preprocess(&task, PreprocessVariant::Power, &mut w).unwrap();
        let after = skewness(&col(&out.x_train));
        assert!(after.abs() < before.abs(), "skew {before} -> {after}");
    }

    #[test]
    fn all_missing_column_is_dropped_with_warning() {
        let mut task = task_from_column(vec![1.0, 2.0, 3.0], vec![4.0]);
        // add a second, fully masked column
        for r in task.x_train.iter_mut().chain(task.x_test.iter_mut()) {
            r.push(0.0);
        }
        for m in task.mask_train.iter_mut().chain(task.mask_test.iter_mut()) {
            m.push(1);
        }
        let mut w = Vec::new();
        let out = preprocess(&task, PreprocessVariant::ZNorm, &mut w).unwrap();
        assert_eq!(out.features(), 1);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("column 1"));
    }

    #[test]
    fn masked_cells_stay_zero_and_stats_are_train_only() {
        let mut task = task_from_column(vec![1.0, 2.0, 3.0, 0.0], vec![100.0]);
        task.mask_train[3][0] = 1;
        let mut w = Vec::new();
        let out = preprocess(&task, PreprocessVariant::ZNorm, &mut w).unwrap();
        assert_eq!(out.x_train[3][0], 0.0);
        // train mean 2, std sqrt(2/3) from {1,2,3}; the masked 0 is excluded
        let expect = (100.0 - 2.0) / (2.0f64 / 3.0).sqrt();
        assert!((out.x_test[0][0] as f64 - expect).abs() < 1e-3);
    }

    #[test]
    fn yeo_johnson_matches_known_identities() {
        // λ=1 is the identity
        assert!((yeo_johnson(3.5, 1.0) - 3.5).abs() < 1e-12);
        assert!((yeo_johnson(-2.0, 1.0) + 2.0).abs() < 1e-12);
        // λ=0, x≥0 is ln(x+1)
        assert!((yeo_johnson(1.0, 0.0) - 2.0f64.ln()).abs() < 1e-9);
        // λ=2, x<0 is -ln(-x+1)
        assert!((yeo_johnson(-1.0, 2.0) + 2.0f64.ln()).abs() < 1e-9);
        // continuity across x=0
        assert!(yeo_johnson(0.0, 0.7).abs() < 1e-12);
    }
}
