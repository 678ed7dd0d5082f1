//! Stochastic sampling with gradient paths: Gaussian reparameterization
//! and straight-through Gumbel-Softmax component selection.

use super::tape::{NodeId, Tape};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `mu + sqrt(softplus(nu)) * noise`, elementwise over arrays, with the
/// gradient flowing to both `mu` and `nu`.
pub fn sample_gaussian_reparam(
    tape: &mut Tape,
    mu: NodeId,
    nu: NodeId,
    noise: Array2<f64>,
) -> NodeId {
    let var = tape.softplus(nu);
    let sigma = tape.sqrt(var);
    let scaled = tape.mul_const(sigma, noise);
    tape.add(mu, scaled)
}

/// Standard normal noise of a given shape.
pub fn standard_noise(rng: &mut impl Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| StandardNormal.sample(rng))
}

/// Gumbel(0, 1) noise of a given shape.
pub fn gumbel_noise(rng: &mut impl Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| {
        let u: f64 = rng.gen_range(1e-12..1.0);
        -(-u.ln()).ln()
    })
}

/// Per-row hard component selection with soft gradients: returns the
/// one-hot `(n, k)` selection node.
pub fn sample_gumbel_softmax_st(
    tape: &mut Tape,
    logits: NodeId,
    temp: f64,
    noise: Array2<f64>,
) -> NodeId {
    tape.st_gumbel(logits, noise, temp)
}

/// One draw from per-row mixtures: `sum_k onehot_k * (mean_k + sigma_k *
/// eps)`, with the component chosen by straight-through Gumbel-Softmax.
/// Returns an `(n, 1)` column of sampled values.
pub fn sample_mixture_st(
    tape: &mut Tape,
    means: NodeId,
    raw_vars: NodeId,
    mix_logits: NodeId,
    temp: f64,
    gumbel: Array2<f64>,
    gauss: Array2<f64>,
) -> NodeId {
    let onehot = tape.st_gumbel(mix_logits, gumbel, temp);
    let values = sample_gaussian_reparam(tape, means, raw_vars, gauss);
    let picked = tape.mul(onehot, values);
    // row-sum via matmul with a ones column
    let k = tape.value(picked).ncols();
    let ones = tape.leaf(Array2::from_elem((k, 1), 1.0));
    tape.matmul(picked, ones)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_returns_the_mean() {
        let mut tape = Tape::new();
        let mu = tape.leaf_scalar(1.25);
        let nu = tape.leaf_scalar(-2.0);
        let s = sample_gaussian_reparam(&mut tape, mu, nu, Array2::zeros((1, 1)));
        assert_eq!(tape.scalar_value(s), 1.25);
        let grads = tape.backward(s);
        assert_eq!(grads.get(mu).unwrap()[[0, 0]], 1.0);
    }

    #[test]
    fn empirical_mean_approaches_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mu = 0.7;
        let var = crate::codes::softplus(-1.0);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut tape = Tape::new();
            let m = tape.leaf_scalar(mu);
            let v = tape.leaf_scalar(-1.0);
            let s = sample_gaussian_reparam(&mut tape, m, v, standard_noise(&mut rng, (1, 1)));
            let x = tape.scalar_value(s);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - mu).abs() < 3.0 * sd,
            "mean {mean} vs {mu} (3 stderr {})",
            3.0 * sd
        );
        assert_relative_eq!(sumsq / n as f64 - mean * mean, var, max_relative = 0.05);
    }

    #[test]
    fn reparam_gradient_matches_finite_differences() {
        let noise = Array2::from_elem((1, 1), 0.83);
        let f = |mu: f64, nu: f64| -> f64 {
            let mut tape = Tape::new();
            let m = tape.leaf_scalar(mu);
            let v = tape.leaf_scalar(nu);
            let s = sample_gaussian_reparam(&mut tape, m, v, noise.clone());
            let sq = tape.mul(s, s);
            tape.scalar_value(sq)
        };
        let mut tape = Tape::new();
        let m = tape.leaf_scalar(0.4);
        let v = tape.leaf_scalar(-0.3);
        let s = sample_gaussian_reparam(&mut tape, m, v, noise.clone());
        let sq = tape.mul(s, s);
        let grads = tape.backward(sq);
        let eps = 1e-6;
        let fd_mu = (f(0.4 + eps, -0.3) - f(0.4 - eps, -0.3)) / (2.0 * eps);
        let fd_nu = (f(0.4, -0.3 + eps) - f(0.4, -0.3 - eps)) / (2.0 * eps);
        assert_relative_eq!(grads.get(m).unwrap()[[0, 0]], fd_mu, max_relative = 1e-6);
        assert_relative_eq!(grads.get(v).unwrap()[[0, 0]], fd_nu, max_relative = 1e-6);
    }

    #[test]
    fn dominated_logits_select_the_dominant_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut tape = Tape::new();
            let logits = tape.leaf(Array2::from_shape_vec((1, 2), vec![10.0, -10.0]).unwrap());
            let y = sample_gumbel_softmax_st(
                &mut tape,
                logits,
                0.1,
                gumbel_noise(&mut rng, (1, 2)),
            );
            assert_eq!(tape.value(y)[[0, 0]], 1.0);
        }
    }

    #[test]
    fn equal_logits_select_each_component_half_the_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut count = 0usize;
        for _ in 0..n {
            let mut tape = Tape::new();
            let logits = tape.leaf(Array2::zeros((1, 2)));
            let y = sample_gumbel_softmax_st(
                &mut tape,
                logits,
                0.1,
                gumbel_noise(&mut rng, (1, 2)),
            );
            if tape.value(y)[[0, 0]] == 1.0 {
                count += 1;
            }
        }
        let freq = count as f64 / n as f64;
        let stderr = (0.25f64 / n as f64).sqrt();
        assert!(
            (freq - 0.5).abs() < 3.0 * stderr,
            "frequency {freq} (3 stderr {})",
            3.0 * stderr
        );
    }

    #[test]
    fn mixture_sample_is_one_of_the_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let means = tape.leaf(Array2::from_shape_vec((1, 2), vec![-1.0, 1.0]).unwrap());
        let vars = tape.leaf(Array2::from_elem((1, 2), -20.0));
        let logits = tape.leaf(Array2::zeros((1, 2)));
        let s = sample_mixture_st(
            &mut tape,
            means,
            vars,
            logits,
            0.1,
            gumbel_noise(&mut rng, (1, 2)),
            standard_noise(&mut rng, (1, 2)),
        );
        let v = tape.scalar_value(s);
        assert!(
            (v - 1.0).abs() < 1e-3 || (v + 1.0).abs() < 1e-3,
            "sample {v}"
        );
    }
}
