//! Variational training of the identity-task MLP.

use super::adam::{AdamState, Schedule};
use super::sample::{sample_gaussian_reparam, standard_noise};
use super::tape::{NodeId, Tape};
use super::train::{StepRecord, TrainConfig, Trajectory};
use super::vparam::{chunk_kl_nats, PriorNodes, PriorParams};
use crate::codes::{mc_kl, CodelengthReport, DistributionBundle, GmmParams, LN_2};
use crate::tasks::{
    bce_nll_bits_from_logits, gen_identity, mlp_logits, mlp_manual_weights, MlpWeights,
    MLP_HIDDEN, MLP_IO,
};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian posteriors per MLP weight plus one shared adaptive GMM prior.
#[derive(Debug, Clone)]
pub struct VarMlp {
    /// `[w1 (16,4), b1 (1,16), w2 (4,16), b2 (1,4)]`
    pub mu: Vec<Array2<f64>>,
    pub nu: Vec<Array2<f64>>,
    pub prior: PriorParams,
}

fn shapes() -> [(usize, usize); 4] {
    [
        (MLP_HIDDEN, MLP_IO),
        (1, MLP_HIDDEN),
        (MLP_IO, MLP_HIDDEN),
        (1, MLP_IO),
    ]
}

impl VarMlp {
    /// He-style random means with zero biases, posterior raw variance
    /// `-10`, and a `prior_k`-component prior with raw variance 1 and
    /// equal mixing.
    pub fn random_init(prior_k: usize, seed: u64) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mu: Vec<Array2<f64>> = shapes().iter().map(|s| Array2::zeros(*s)).collect();
        for (i, m) in mu.iter_mut().enumerate() {
            if i % 2 == 0 {
                let fan_in = m.ncols() as f64;
                let std = (2.0 / fan_in).sqrt();
                for v in m.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = std * z;
                }
            }
        }
        let nu = shapes().iter().map(|s| Array2::from_elem(*s, -10.0)).collect();
        let prior_means: Vec<f64> = (0..prior_k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        VarMlp {
            mu,
            nu,
            prior: PriorParams::from_gmm(&GmmParams::new(
                prior_means,
                vec![1.0; prior_k],
                vec![0.0; prior_k],
            )),
        }
    }

    /// The hand-built identity solution with near-delta posteriors and a
    /// three-component prior at the manual weight values `{0, lambda,
    /// -lambda/2}` with equal mixing.
    pub fn manual_init(lambda: f64) -> Self {
        let w = mlp_manual_weights(lambda);
        let mu = vec![
            w.w1.clone(),
            w.b1.clone().insert_axis(Axis(0)),
            w.w2.clone(),
            w.b2.clone().insert_axis(Axis(0)),
        ];
        let nu = shapes().iter().map(|s| Array2::from_elem(*s, -10.0)).collect();
        VarMlp {
            mu,
            nu,
            prior: PriorParams::from_gmm(&GmmParams::new(
                vec![0.0, lambda, -lambda / 2.0],
                vec![-10.0; 3],
                vec![0.0; 3],
            )),
        }
    }

    pub fn param_arrays(&self) -> Vec<Array2<f64>> {
        let mut out = self.mu.clone();
        out.extend(self.nu.clone());
        out.push(self.prior.means.clone());
        out.push(self.prior.raw_vars.clone());
        out.push(self.prior.mix_logits.clone());
        out
    }

    pub fn set_param_arrays(&mut self, arrays: &[Array2<f64>]) {
        let mut it = arrays.iter().cloned();
        for m in self.mu.iter_mut() {
            *m = it.next().unwrap();
        }
        for n in self.nu.iter_mut() {
            *n = it.next().unwrap();
        }
        self.prior.means = it.next().unwrap();
        self.prior.raw_vars = it.next().unwrap();
        self.prior.mix_logits = it.next().unwrap();
        assert!(it.next().is_none());
    }

    pub fn mean_weights(&self) -> MlpWeights {
        let mut w = MlpWeights::zeros();
        w.w1.assign(&self.mu[0]);
        w.b1.assign(&self.mu[1].row(0));
        w.w2.assign(&self.mu[2]);
        w.b2.assign(&self.mu[3].row(0));
        w
    }

    pub fn to_bundle(&self) -> DistributionBundle {
        let mut posteriors = Vec::new();
        for (m, n) in self.mu.iter().zip(&self.nu) {
            for (mv, nv) in m.iter().zip(n.iter()) {
                posteriors.push(GmmParams::gaussian(*mv, *nv));
            }
        }
        let count = posteriors.len();
        DistributionBundle::new(
            posteriors,
            vec![self.prior.to_gmm()],
            vec![0; count],
            vec!["mlp".to_string()],
        )
    }
}

struct MlpNodes {
    mu: Vec<NodeId>,
    nu: Vec<NodeId>,
    prior: PriorNodes,
    order: Vec<NodeId>,
}

fn register(tape: &mut Tape, vm: &VarMlp) -> MlpNodes {
    let mu: Vec<NodeId> = vm.mu.iter().map(|a| tape.leaf(a.clone())).collect();
    let nu: Vec<NodeId> = vm.nu.iter().map(|a| tape.leaf(a.clone())).collect();
    let means = tape.leaf(vm.prior.means.clone());
    let raw_vars = tape.leaf(vm.prior.raw_vars.clone());
    let mix_logits = tape.leaf(vm.prior.mix_logits.clone());
    let mut order = Vec::new();
    order.extend(&mu);
    order.extend(&nu);
    order.extend([means, raw_vars, mix_logits]);
    MlpNodes {
        mu,
        nu,
        prior: PriorNodes {
            means,
            raw_vars,
            mix_logits,
        },
        order,
    }
}

/// Batched forward: `X (n,4) -> logits (n,4)` given sampled weight nodes
/// `[w1, b1, w2, b2]`.
fn batch_logits(tape: &mut Tape, w: &[NodeId; 4], x: NodeId) -> NodeId {
    let pre = tape.matmul_t(x, w[0]);
    let pre = tape.add_row_broadcast(pre, w[1]);
    let hidden = tape.relu(pre);
    let out = tape.matmul_t(hidden, w[2]);
    tape.add_row_broadcast(out, w[3])
}

/// BCE in nats summed over the batch, from logits and 0/1 targets.
fn batch_bce_nats(tape: &mut Tape, logits: NodeId, targets: &Array2<f64>) -> NodeId {
    let sp = tape.softplus(logits);
    let yl = tape.mul_const(logits, targets.clone());
    let diff = tape.sub(sp, yl);
    tape.sum_all(diff)
}

/// Full-dataset evaluation: MC KL over the bundle, and the expected NLL
/// and per-dimension accuracy under posterior weight samples (the
/// variational codelength's data term is an expectation over hypotheses).
pub fn eval_mlp(vm: &VarMlp, eval_mc_samples: usize, seed: u64) -> CodelengthReport {
    let bundle = vm.to_bundle();
    let est = mc_kl(&bundle, eval_mc_samples, seed);
    let data = gen_identity();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
    let weight_samples = eval_mc_samples.max(1);
    let mut nll_bits = 0.0;
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut w = MlpWeights::zeros();
    for _ in 0..weight_samples {
        w.assign_flat(&bundle.sample_weights(&mut rng));
        for x in &data.examples {
            let logits = mlp_logits(&w, x);
            nll_bits += bce_nll_bits_from_logits(&logits, x);
            for i in 0..MLP_IO {
                if (logits[i] >= 0.0) == (x[i] == 1) {
                    correct += 1;
                }
                total += 1;
            }
        }
    }
    nll_bits /= weight_samples as f64;
    let acc = correct as f64 / total as f64;
    CodelengthReport::new(bundle.prior_cost_bits, est.kl_bits, nll_bits, acc, None)
        .with_mc(est.stderr_bits, est.samples, seed)
}

/// Minimizes `kl_coefficient * KL_bits + mean minibatch NLL_bits` with
/// Adam, Monte-Carlo weight samples shared across the minibatch, and an
/// adaptive prior trained jointly. Returns the trained parameters, the
/// step trajectory, and a final full-dataset report.
pub fn train_variational_mlp(
    init: VarMlp,
    config: &TrainConfig,
) -> (VarMlp, Trajectory, CodelengthReport) {
    let mut vm = init;
    let data = gen_identity();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schedule = Schedule::new(config.lr, config.warmup_steps, config.total_steps);
    let mut params = vm.param_arrays();
    let shapes: Vec<(usize, usize)> = params.iter().map(|a| a.dim()).collect();
    let mut adam = AdamState::new(&shapes);
    let mut trajectory = Trajectory::default();

    for step in 1..=config.total_steps {
        // minibatch by oversampling the sixteen vectors
        let mut x = Array2::zeros((config.batch, MLP_IO));
        for i in 0..config.batch {
            let ex = data.examples[rng.gen_range(0..data.examples.len())];
            for (j, b) in ex.iter().enumerate() {
                x[[i, j]] = *b as f64;
            }
        }
        let targets = x.clone();

        let mut tape = Tape::new();
        let nodes = register(&mut tape, &vm);

        // KL with one fresh draw
        let mut kl_nats: Option<NodeId> = None;
        for a in 0..4 {
            let eps = standard_noise(&mut rng, shapes[a]);
            let h = sample_gaussian_reparam(&mut tape, nodes.mu[a], nodes.nu[a], eps);
            let term = chunk_kl_nats(&mut tape, h, nodes.mu[a], nodes.nu[a], &nodes.prior);
            kl_nats = Some(match kl_nats {
                Some(t) => tape.add(t, term),
                None => term,
            });
        }
        let kl_nats = kl_nats.unwrap();

        // expected NLL over MC weight samples shared across the batch
        let xn = tape.leaf(x);
        let mut nll_sum: Option<NodeId> = None;
        for _ in 0..config.mc_weight_samples {
            let mut w = Vec::with_capacity(4);
            for a in 0..4 {
                let eps = standard_noise(&mut rng, shapes[a]);
                w.push(sample_gaussian_reparam(
                    &mut tape, nodes.mu[a], nodes.nu[a], eps,
                ));
            }
            let w: [NodeId; 4] = [w[0], w[1], w[2], w[3]];
            let logits = batch_logits(&mut tape, &w, xn);
            let nll = batch_bce_nats(&mut tape, logits, &targets);
            nll_sum = Some(match nll_sum {
                Some(t) => tape.add(t, nll),
                None => nll,
            });
        }
        let denom = (config.mc_weight_samples * config.batch) as f64;
        let nll_mean_nats = tape.mul_scalar(nll_sum.unwrap(), 1.0 / denom);

        let kl_bits = tape.mul_scalar(kl_nats, 1.0 / LN_2);
        let nll_bits = tape.mul_scalar(nll_mean_nats, 1.0 / LN_2);
        let kl_scaled = tape.mul_scalar(kl_bits, config.kl_coefficient);
        let loss = tape.add(kl_scaled, nll_bits);

        let loss_value = tape.scalar_value(loss);
        if !loss_value.is_finite() {
            trajectory.diverged = true;
            break;
        }
        let grads = tape.backward(loss);
        let grad_arrays: Vec<Array2<f64>> = nodes
            .order
            .iter()
            .zip(&shapes)
            .map(|(id, s)| grads.get_or_zero(*id, *s))
            .collect();
        let lr = schedule.lr(step);
        adam.step(&mut params, &grad_arrays, lr);
        vm.set_param_arrays(&params);

        if step % 50 == 0 || step == config.total_steps {
            trajectory.steps.push(StepRecord {
                step,
                lr,
                kl_bits: tape.scalar_value(kl_bits),
                nll_bits: tape.scalar_value(nll_bits),
                acc: f64::NAN,
            });
        }
    }

    let report = eval_mlp(&vm, config.eval_mc_samples, config.seed);
    (vm, trajectory, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_init_evaluates_clean() {
        let vm = VarMlp::manual_init(20.0);
        let report = eval_mlp(&vm, 200, 1);
        assert_eq!(report.train_acc, 1.0);
        assert!(report.nll_bits / 16.0 < 0.01);
        // equal-mixing three-component prior: every weight costs about
        // log2(3) bits, 148 weights in total
        let per_weight = report.kl_bits / 148.0;
        assert!(
            (per_weight - 3f64.log2()).abs() < 0.05,
            "per-weight KL {per_weight}"
        );
    }

    #[test]
    fn short_training_from_manual_keeps_perfect_accuracy() {
        let config = TrainConfig {
            total_steps: 60,
            warmup_steps: 10,
            batch: 64,
            kl_coefficient: 1e-2,
            seed: 4,
            eval_mc_samples: 60,
            ..TrainConfig::default()
        };
        let (_, trajectory, report) = train_variational_mlp(VarMlp::manual_init(20.0), &config);
        assert!(!trajectory.diverged);
        assert_eq!(report.train_acc, 1.0);
    }

    #[test]
    fn random_init_training_reduces_nll() {
        let config = TrainConfig {
            total_steps: 1000,
            warmup_steps: 100,
            batch: 64,
            kl_coefficient: 1e-3,
            seed: 7,
            eval_mc_samples: 40,
            ..TrainConfig::default()
        };
        let before = eval_mlp(&VarMlp::random_init(3, 7), 40, 7);
        let (_, trajectory, after) = train_variational_mlp(VarMlp::random_init(3, 7), &config);
        assert!(!trajectory.diverged);
        assert!(
            after.nll_bits < before.nll_bits * 0.5,
            "before {} after {}",
            before.nll_bits,
            after.nll_bits
        );
    }
}
