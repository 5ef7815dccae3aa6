//! Gaussian-process prior: joint draws from an RBF kernel over standard-normal
//! inputs, with Cholesky jitter escalation.

use super::hyper::PriorHyperparameters;
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dense-Cholesky ceiling; larger draws would need low-rank methods.
pub const MAX_GP_ROWS: usize = 2048;

/// RBF kernel matrix: K_ij = s * exp(-|x_i - x_j|^2 / (2 l^2)) + noise * 1[i=j].
pub fn rbf_kernel(x: &[Vec<f32>], outputscale: f64, lengthscale: f64, noise: f64) -> Vec<f64> {
    let n = x.len();
    let l2 = (lengthscale * lengthscale).max(1e-24);
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let d2: f64 = x[i]
                .iter()
                .zip(x[j].iter())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum();
            let v = outputscale * (-d2 / (2.0 * l2)).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += noise;
    }
    k
}

/// In-place lower Cholesky; returns false when the matrix is not PD.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Draw y ~ N(0, K) by Cholesky, escalating diagonal jitter 1e-8 -> 1e-4
/// multiplicatively before giving up.
pub fn sample_gp_targets<R: Rng>(
    x: &[Vec<f32>],
    outputscale: f64,
    lengthscale: f64,
    noise: f64,
    rng: &mut R,
) -> Result<Vec<f32>> {
    let n = x.len();
    if n > MAX_GP_ROWS {
        return Err(Error::Capacity(format!("GP draw of {n} rows exceeds {MAX_GP_ROWS}")));
    }
    let base = rbf_kernel(x, outputscale, lengthscale, noise);
    let z: Vec<f64> = (0..n)
        .map(|_| Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let mut jitter = 0.0f64;
    loop {
        let mut k = base.clone();
        if jitter > 0.0 {
            for i in 0..n {
                k[i * n + i] += jitter;
            }
        }
        if cholesky(&mut k, n) {
            let mut y = vec![0.0f32; n];
            for i in 0..n {
                let mut acc = 0.0f64;
                for j in 0..=i {
                    acc += k[i * n + j] * z[j];
                }
                y[i] = acc as f32;
            }
            return Ok(y);
        }
        jitter = if jitter == 0.0 { 1e-8 } else { jitter * 10.0 };
        if jitter > 1e-4 {
            return Err(Error::Numerical(
                "kernel not positive definite after jitter escalation to 1e-4".into(),
            ));
        }
    }
}

/// Full GP dataset draw under ψ: x ~ N(0, I_k), y jointly from the kernel.
pub fn sample_gp_dataset<R: Rng>(
    psi: &PriorHyperparameters,
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f32>>, Vec<f32>)> {
    let x: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..k).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let y = sample_gp_targets(&x, psi.gp_outputscale(), psi.gp_lengthscale(), psi.gp_noise(), rng)?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn infinite_lengthscale_limit_is_nearly_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f32>> = (0..64)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let s = 4.0;
        let y = sample_gp_targets(&x, s, 1e6, 0.0, &mut rng).unwrap();
        let mx = y.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mn = y.iter().cloned().fold(f32::INFINITY, f32::min);
        assert!((mx - mn) as f64 <= 1e-2 * s.sqrt(), "spread {}", mx - mn);
    }

    #[test]
    fn identical_inputs_differ_only_by_noise() {
        // var(y_1 - y_2) = 2 * noise for duplicated inputs (kernel algebra)
        let noise = 0.01f64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut diffs = Vec::new();
        for _ in 0..400 {
            let x = vec![vec![0.3f32, -0.2], vec![0.3, -0.2]];
            let y = sample_gp_targets(&x, 1.0, 1.0, noise, &mut rng).unwrap();
            diffs.push((y[0] - y[1]) as f64);
        }
        let mean: f64 = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var: f64 =
            diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
        let expect = 2.0 * noise;
        assert!(
            (var - expect).abs() < expect,
            "var {var} vs expected {expect}"
        );
        assert!(diffs.iter().all(|d| d.abs() < 1.0));
    }

    #[test]
    fn capacity_ceiling_is_enforced() {
        let x = vec![vec![0.0f32]; MAX_GP_ROWS + 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_gp_targets(&x, 1.0, 1.0, 0.1, &mut rng),
            Err(crate::error::Error::Capacity(_))
        ));
    }

    #[test]
    fn jitter_rescues_rank_deficient_kernels() {
        // duplicated inputs with zero noise are singular without jitter
        let x = vec![vec![1.0f32], vec![1.0], vec![2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = sample_gp_targets(&x, 1.0, 1.0, 0.0, &mut rng).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }
}
