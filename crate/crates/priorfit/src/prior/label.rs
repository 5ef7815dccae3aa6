//! Quantile labeling: map scalar prior outputs to discrete classes via sampled
//! rank-quantile bounds, plus the categorical-feature transform built on it.

use super::hyper::PriorHyperparameters;
use crate::error::{Error, Result};
use rand::Rng;

const BOUND_RETRIES: usize = 64;

/// 1-based ascending ranks with ties broken by original index.
pub fn ranks(values: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0usize; values.len()];
    for (pos, &ix) in order.iter().enumerate() {
        out[ix] = pos + 1;
    }
    out
}

/// y_i = sum_j 1[B_j < rank_i / n] for sorted bounds B.
pub fn labels_from_bounds(ranks: &[usize], bounds: &[f64]) -> Vec<u16> {
    let n = ranks.len() as f64;
    ranks
        .iter()
        .map(|&r| bounds.iter().filter(|&&b| b < r as f64 / n).count() as u16)
        .collect()
}

fn class_sizes(labels: &[u16], n_classes: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; n_classes];
    for &l in labels {
        sizes[l as usize] += 1;
    }
    sizes
}

/// Draw sorted quantile bounds until every class is populated.
fn sample_bounds<R: Rng>(ranks: &[usize], n_classes: usize, rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..BOUND_RETRIES {
        let mut bounds: Vec<f64> = (0..n_classes - 1).map(|_| rng.gen::<f64>()).collect();
        bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let labels = labels_from_bounds(ranks, &bounds);
        if class_sizes(&labels, n_classes).iter().all(|&s| s > 0) {
            return Ok(bounds);
        }
    }
    Err(Error::Unlabelable(format!(
        "no bound draw produced {n_classes} non-empty classes in {BOUND_RETRIES} tries"
    )))
}

/// Map scalar targets to `n_classes` discrete labels; with probability `p_s`
/// the label alphabet is shuffled afterwards.
pub fn labelize<R: Rng>(
    y_raw: &[f32],
    n_classes: usize,
    rng: &mut R,
    p_s: f64,
) -> Result<Vec<u16>> {
    let n = y_raw.len();
    if n_classes < 2 || n < n_classes {
        return Err(Error::Contract(format!(
            "labelize needs n >= n_classes >= 2, got n={n}, n_classes={n_classes}"
        )));
    }
    if y_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("labelize needs finite targets".into()));
    }
    let mn = y_raw.iter().cloned().fold(f32::INFINITY, f32::min);
    let mx = y_raw.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if mn == mx {
        return Err(Error::Unlabelable(
            "all targets equal; deterministic tie-break cannot fill every class".into(),
        ));
    }
    let rk = ranks(y_raw);
    let bounds = sample_bounds(&rk, n_classes, rng)?;
    let mut labels = labels_from_bounds(&rk, &bounds);
    if rng.gen::<f64>() < p_s {
        let perm = random_permutation(n_classes, rng);
        for l in &mut labels {
            *l = perm[*l as usize];
        }
    }
    Ok(labels)
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<u16> {
    let mut p: Vec<u16> = (0..n as u16).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Quantile-bin a random fraction p_cat of columns into sampled category
/// counts; a fraction p_scat of those columns gets its category ids permuted.
/// Columns that cannot be binned (constant) are left numeric.
pub fn categorize_features<R: Rng>(
    x: &mut [Vec<f32>],
    psi: &PriorHyperparameters,
    rng: &mut R,
) {
    if x.is_empty() {
        return;
    }
    let n = x.len();
    let k = x[0].len();
    for col in 0..k {
        if rng.gen::<f64>() >= psi.p_cat() {
            continue;
        }
        let n_cats = rng.gen_range(2..=10usize).min(n);
        let values: Vec<f32> = x.iter().map(|row| row[col]).collect();
        let rk = ranks(&values);
        let Ok(bounds) = sample_bounds(&rk, n_cats, rng) else {
            continue;
        };
        let mut cats = labels_from_bounds(&rk, &bounds);
        if rng.gen::<f64>() < psi.p_scat() {
            let perm = random_permutation(n_cats, rng);
            for c in &mut cats {
                *c = perm[*c as usize];
            }
        }
        for (row, &c) in x.iter_mut().zip(cats.iter()) {
            row[col] = c as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::hyper::{field, PriorHyperparameters, PriorSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_balanced_binary_example() {
        // ranks [2,3,1,4], bound 0.5 -> labels [0,1,0,1]
        let rk = ranks(&[0.1, 0.9, -0.5, 2.0]);
        assert_eq!(rk, vec![2, 3, 1, 4]);
        assert_eq!(labels_from_bounds(&rk, &[0.5]), vec![0, 1, 0, 1]);
    }

    #[test]
    fn two_points_one_bound() {
        let rk = ranks(&[-1.0, 1.0]);
        assert_eq!(labels_from_bounds(&rk, &[0.5]), vec![0, 1]);
    }

    #[test]
    fn without_shuffle_labels_are_monotone_in_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f32> = (0..40).map(|_| rng.gen::<f32>() * 4.0 - 2.0).collect();
        let labels = labelize(&y, 4, &mut rng, 0.0).unwrap();
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap().then(a.cmp(&b)));
        let sorted: Vec<u16> = order.iter().map(|&i| labels[i]).collect();
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "{sorted:?}");
    }

    #[test]
    fn all_equal_targets_are_unlabelable() {
        let y = vec![1.0f32; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            labelize(&y, 2, &mut rng, 0.0),
            Err(crate::error::Error::Unlabelable(_))
        ));
    }

    #[test]
    fn class_sizes_match_quantile_range_widths() {
        // with fixed bounds the class sizes equal the rank counts per range
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100usize;
        let y: Vec<f32> = (0..n).map(|_| rng.gen::<f32>()).collect();
        let rk = ranks(&y);
        let bounds = vec![0.25, 0.65];
        let labels = labels_from_bounds(&rk, &bounds);
        let sizes = class_sizes(&labels, 3);
        // ranks r with r/n in (0, .25], (.25, .65], (.65, 1]; counts are exact
        // floor arithmetic on the rank grid, within 1 of width * n
        let widths = [0.25, 0.40, 0.35];
        for (c, (&s, w)) in sizes.iter().zip(widths.iter()).enumerate() {
            assert!(
                ((s as f64) - w * n as f64).abs() <= 1.0,
                "class {c}: size {s} vs width {w}"
            );
        }
    }

    #[test]
    fn shuffling_preserves_the_multiset_of_class_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y: Vec<f32> = (0..60).map(|_| rng.gen::<f32>()).collect();
        let rk = ranks(&y);
        let bounds = vec![0.3, 0.7];
        let plain = labels_from_bounds(&rk, &bounds);
        let perm = random_permutation(3, &mut rng);
        let shuffled: Vec<u16> = plain.iter().map(|&l| perm[l as usize]).collect();
        let mut a = class_sizes(&plain, 3);
        let mut b = class_sizes(&shuffled, 3);
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    fn psi_with_cat(p_cat: f64, p_scat: f64) -> PriorHyperparameters {
        let space = PriorSpace::full();
        let mut psi = PriorHyperparameters::sample(&space, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        psi.set(field::P_CAT, p_cat);
        psi.set(field::P_SCAT, p_scat);
        psi
    }

    #[test]
    fn p_cat_zero_leaves_features_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x: Vec<Vec<f32>> = (0..20).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let orig = x.clone();
        categorize_features(&mut x, &psi_with_cat(0.0, 0.0), &mut rng);
        assert_eq!(x, orig);
    }

    #[test]
    fn p_cat_one_bins_every_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x: Vec<Vec<f32>> = (0..60).map(|_| vec![rng.gen(), rng.gen()]).collect();
        categorize_features(&mut x, &psi_with_cat(1.0, 0.0), &mut rng);
        for col in 0..2 {
            let mut distinct: Vec<i64> = x.iter().map(|r| r[col] as i64).collect();
            distinct.sort_unstable();
            distinct.dedup();
            assert!(
                (2..=10).contains(&distinct.len()),
                "column {col} has {} categories",
                distinct.len()
            );
            assert!(x.iter().all(|r| r[col] == r[col].round()));
        }
    }

    #[test]
    fn shuffled_column_keeps_the_value_histogram() {
        // shuffling category ids only relabels; the multiset of counts is kept
        let seed_x = |rng: &mut ChaCha8Rng| -> Vec<Vec<f32>> {
            (0..80).map(|_| vec![rng.gen::<f32>()]).collect()
        };
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let mut x_plain = seed_x(&mut rng_a);
        categorize_features(&mut x_plain, &psi_with_cat(1.0, 0.0), &mut rng_a);

        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        let mut x_shuf = seed_x(&mut rng_b);
        categorize_features(&mut x_shuf, &psi_with_cat(1.0, 1.0), &mut rng_b);

        let hist = |x: &[Vec<f32>]| {
            let mut counts = std::collections::BTreeMap::new();
            for r in x {
                *counts.entry(r[0] as i64).or_insert(0usize) += 1;
            }
            let mut sizes: Vec<usize> = counts.values().cloned().collect();
            sizes.sort_unstable();
            sizes
        };
        assert_eq!(hist(&x_plain), hist(&x_shuf));
    }
}
