//! Table reproduction and frontier curves.

use mdlxf_core::codes::{multimodal_frontier, unimodal_frontier, variational_codelength};
use mdlxf_core::compile::{Normalization, WeightDims};
use mdlxf_core::grad::{
    eval_mle_transformer, eval_variational_transformer, he_random_weights, train_mle_transformer,
    train_variational_mlp, train_variational_transformer, TrainConfig, Trajectory, VarMlp,
    VarTransformer,
};
use mdlxf_core::tasks::{
    gen_parity, manual_parity_bundle, paper_parity_target, ParityDataset, ParitySpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Desk,
}

/// One row in a results table; `None` cells are not applicable for the
/// objective (no KL for a maximum-likelihood baseline).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub init: String,
    pub objective: String,
    pub kl_coefficient: Option<f64>,
    pub kl_bits: Option<f64>,
    pub nll_bits: Option<f64>,
    pub codelength_bits: Option<f64>,
    pub train_acc: f64,
    pub ood_acc: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "init,objective,kl_coefficient,kl_bits,nll_bits,codelength_bits,train_acc,ood_acc,diverged\n",
        );
        let fmt = |v: &Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.init,
                r.objective,
                fmt(&r.kl_coefficient),
                fmt(&r.kl_bits),
                fmt(&r.nll_bits),
                fmt(&r.codelength_bits),
                r.train_acc,
                r.ood_acc.map(|x| format!("{x}")).unwrap_or_default(),
                r.diverged,
            ));
        }
        s
    }

    pub fn any_diverged(&self) -> bool {
        self.rows.iter().any(|r| r.diverged)
    }
}

/// Workstation-scale knobs for the parity experiment. The full paper
/// setting (42 layers, lengths to 40, 50k steps) is far beyond a small
/// CPU budget, so the desk preset shrinks every axis while keeping enough
/// layers to represent parity at every out-of-distribution length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeskPreset {
    pub train_min_len: usize,
    pub train_max_len: usize,
    pub train_total: usize,
    pub ood_min_len: usize,
    pub ood_max_len: usize,
    pub ood_per_length: usize,
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub num_prompt_rows: usize,
    pub num_layers: usize,
    pub mle_steps: usize,
    pub var_steps: usize,
    pub batch: usize,
    pub warmup_steps: usize,
    pub kl_coefficient: f64,
    pub lr: f64,
    /// Examples drawn for accuracy/NLL evaluation.
    pub eval_train_sample: usize,
    pub eval_ood_sample: usize,
    pub eval_mc_samples: usize,
}

pub fn desk_preset() -> DeskPreset {
    DeskPreset {
        train_min_len: 1,
        train_max_len: 8,
        train_total: 8_000,
        ood_min_len: 9,
        ood_max_len: 12,
        ood_per_length: 250,
        model_dim: 64,
        hidden_dim: 256,
        num_heads: 2,
        num_prompt_rows: 10,
        num_layers: 14,
        mle_steps: 1_500,
        var_steps: 2_500,
        batch: 64,
        warmup_steps: 200,
        kl_coefficient: 1e-3,
        lr: 1e-3,
        eval_train_sample: 1_000,
        eval_ood_sample: 1_000,
        eval_mc_samples: 100,
    }
}

fn examples_of(data: &[mdlxf_core::tasks::ParityExample]) -> Vec<(Vec<u8>, usize)> {
    data.iter().map(|e| (e.input.clone(), e.label)).collect()
}

fn subsample(
    data: &[(Vec<u8>, usize)],
    count: usize,
    rng: &mut impl rand::Rng,
) -> Vec<(Vec<u8>, usize)> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    idx.truncate(count.min(data.len()));
    idx.into_iter().map(|i| data[i].clone()).collect()
}

/// Evaluates the manually compiled parity bundle at the paper
/// architecture; identical at both scales because no training is involved.
pub fn manual_parity_row(
    dataset: &ParityDataset,
    eval_train: usize,
    eval_ood: usize,
    eval_mc_samples: usize,
    seed: u64,
) -> anyhow::Result<TableRow> {
    let mb = manual_parity_bundle(paper_parity_target(), 8)
        .map_err(|e| anyhow::anyhow!("manual bundle: {e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let train = subsample(&examples_of(&dataset.train), eval_train, &mut rng);
    let ood = subsample(&examples_of(&dataset.ood), eval_ood, &mut rng);
    let est = mdlxf_core::codes::mc_kl(&mb.bundle, eval_mc_samples, seed);
    let (nll_eval, train_acc) = eval_mle_transformer(&mb.weights, mb.num_layers, &train);
    let nll_full = nll_eval / train.len() as f64 * dataset.train.len() as f64;
    let (_, ood_acc) = eval_mle_transformer(&mb.weights, mb.num_layers, &ood);
    Ok(TableRow {
        init: "manual".into(),
        objective: "variational".into(),
        kl_coefficient: None,
        kl_bits: Some(est.kl_bits),
        nll_bits: Some(nll_full),
        codelength_bits: Some(variational_codelength(est.kl_bits, nll_full)),
        train_acc,
        ood_acc: Some(ood_acc),
        diverged: false,
    })
}

/// Dataset and evaluation subsamples for a preset.
fn preset_data(
    preset: &DeskPreset,
    seed: u64,
) -> (
    Vec<(Vec<u8>, usize)>,
    Vec<(Vec<u8>, usize)>,
    Vec<(Vec<u8>, usize)>,
) {
    let spec = ParitySpec {
        train_min_len: preset.train_min_len,
        train_max_len: preset.train_max_len,
        train_total: preset.train_total,
        ood_min_len: preset.ood_min_len,
        ood_max_len: preset.ood_max_len,
        ood_per_length: preset.ood_per_length,
    };
    let dataset = gen_parity(&spec, seed);
    let train = examples_of(&dataset.train);
    let ood = examples_of(&dataset.ood);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval_train = subsample(&train, preset.eval_train_sample, &mut rng);
    let eval_ood = subsample(&ood, preset.eval_ood_sample, &mut rng);
    (train, eval_train, eval_ood)
}

/// Runs the requested random-initialization rows of the parity table.
pub fn reproduce_table1_rows(
    preset: &DeskPreset,
    seed: u64,
    run_mle: bool,
    run_var: bool,
) -> anyhow::Result<(ResultsTable, Vec<Trajectory>)> {
    let (train, eval_train, eval_ood) = preset_data(preset, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1217);
    let mut table = ResultsTable::default();
    let mut trajectories = Vec::new();

    let mle_dims = WeightDims {
        model_dim: preset.model_dim,
        hidden_dim: preset.hidden_dim,
        num_heads: preset.num_heads,
        d_head: preset.model_dim / preset.num_heads,
        input_range: 2,
        num_prompt_rows: 0,
        num_outputs: 2,
    };

    if run_mle {
        let init = he_random_weights(mle_dims, Normalization::Tanh, &mut rng);
        let config = TrainConfig {
            lr: preset.lr,
            warmup_steps: preset.warmup_steps,
            total_steps: preset.mle_steps,
            batch: preset.batch,
            seed,
            ..TrainConfig::default()
        };
        let (weights, traj) = train_mle_transformer(init, preset.num_layers, &train, &config);
        let (nll_eval, train_acc) = eval_mle_transformer(&weights, preset.num_layers, &eval_train);
        let nll_full = nll_eval / eval_train.len() as f64 * train.len() as f64;
        let (_, ood_acc) = eval_mle_transformer(&weights, preset.num_layers, &eval_ood);
        table.rows.push(TableRow {
            init: "random".into(),
            objective: "mle".into(),
            kl_coefficient: None,
            kl_bits: None,
            nll_bits: Some(nll_full),
            codelength_bits: None,
            train_acc,
            ood_acc: Some(ood_acc),
            diverged: traj.diverged,
        });
        trajectories.push(traj);
    }

    if run_var {
        let var_dims = WeightDims {
            num_prompt_rows: preset.num_prompt_rows,
            ..mle_dims
        };
        let mut vrng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let vt = VarTransformer::random_init(var_dims, Normalization::Tanh, 8, -10.0, &mut vrng);
        let vconfig = TrainConfig {
            lr: preset.lr,
            warmup_steps: preset.warmup_steps,
            total_steps: preset.var_steps,
            batch: preset.batch,
            kl_coefficient: preset.kl_coefficient,
            seed: seed ^ 0x5eed,
            eval_mc_samples: preset.eval_mc_samples,
            ..TrainConfig::default()
        };
        let (vt, vtraj) = train_variational_transformer(vt, preset.num_layers, &train, &vconfig);
        let report = eval_variational_transformer(
            &vt,
            preset.num_layers,
            &eval_train,
            &eval_ood,
            train.len(),
            &vconfig,
        );
        table.rows.push(TableRow {
            init: "random".into(),
            objective: "variational".into(),
            kl_coefficient: Some(preset.kl_coefficient),
            kl_bits: Some(report.kl_bits),
            nll_bits: Some(report.nll_bits),
            codelength_bits: Some(variational_codelength(report.kl_bits, report.nll_bits)),
            train_acc: report.train_acc,
            ood_acc: report.ood_acc,
            diverged: vtraj.diverged,
        });
        trajectories.push(vtraj);
    }
    Ok((table, trajectories))
}

/// Reproduces the parity table: a random-initialization MLE baseline, a
/// random-initialization variational run, and the manual bundle.
pub fn reproduce_table1(
    scale: Scale,
    seed: u64,
    preset: &DeskPreset,
) -> anyhow::Result<(ResultsTable, Vec<Trajectory>)> {
    let preset = match scale {
        Scale::Desk => preset.clone(),
        Scale::Full => DeskPreset {
            train_min_len: 1,
            train_max_len: 20,
            train_total: 100_000,
            ood_min_len: 21,
            ood_max_len: 40,
            ood_per_length: 1_000,
            model_dim: 128,
            hidden_dim: 512,
            num_heads: 2,
            num_prompt_rows: 20,
            num_layers: 42,
            mle_steps: 50_000,
            var_steps: 50_000,
            batch: 128,
            warmup_steps: 1_000,
            kl_coefficient: 1e-3,
            lr: 1e-3,
            eval_train_sample: 2_000,
            eval_ood_sample: 2_000,
            eval_mc_samples: 100,
        },
    };
    let (mut table, mut trajectories) = reproduce_table1_rows(&preset, seed, true, true)?;

    // Manual bundle row, identical at every scale.
    let full_dataset = gen_parity(&ParitySpec::full(), seed);
    table.rows.push(manual_parity_row(
        &full_dataset,
        preset.eval_train_sample.min(600),
        preset.eval_ood_sample.min(600),
        preset.eval_mc_samples,
        seed,
    )?);
    trajectories.push(Trajectory::default());

    Ok((table, trajectories))
}

/// Reproduces the identity-task table: the KL-coefficient sweep from
/// random initialization plus the manual row, 1,000 steps each.
pub fn reproduce_table2(seed: u64) -> anyhow::Result<ResultsTable> {
    reproduce_table2_with(seed, 1e-2, 1_000)
}

/// Sweep with an explicit learning rate and step budget.
pub fn reproduce_table2_with(seed: u64, lr: f64, steps: usize) -> anyhow::Result<ResultsTable> {
    reproduce_table2_custom(seed, lr, steps / 10, steps)
}

/// Sweep with fully explicit optimizer settings.
pub fn reproduce_table2_custom(
    seed: u64,
    lr: f64,
    warmup: usize,
    steps: usize,
) -> anyhow::Result<ResultsTable> {
    let mut table = ResultsTable::default();
    let coefficients = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    for coefficient in coefficients {
        let config = TrainConfig {
            lr,
            total_steps: steps,
            warmup_steps: warmup,
            batch: 128,
            kl_coefficient: coefficient,
            seed,
            eval_mc_samples: 100,
            ..TrainConfig::default()
        };
        let (_, traj, report) = train_variational_mlp(VarMlp::random_init(3, seed), &config);
        table.rows.push(TableRow {
            init: "random".into(),
            objective: "variational".into(),
            kl_coefficient: Some(coefficient),
            kl_bits: Some(report.kl_bits),
            nll_bits: Some(report.nll_bits),
            codelength_bits: Some(variational_codelength(report.kl_bits, report.nll_bits)),
            train_acc: report.train_acc,
            ood_acc: None,
            diverged: traj.diverged,
        });
    }
    // Manual row: the hand-built solution's codelength, evaluated as-is.
    // Training it further only drifts the prior mixing weights toward the
    // empirical frequencies, trading the reported value away from the
    // equal-mixing cost the row represents.
    let report = mdlxf_core::grad::eval_mlp(&VarMlp::manual_init(20.0), 100, seed);
    table.rows.push(TableRow {
        init: "manual".into(),
        objective: "variational".into(),
        kl_coefficient: Some(1e-2),
        kl_bits: Some(report.kl_bits),
        nll_bits: Some(report.nll_bits),
        codelength_bits: Some(variational_codelength(report.kl_bits, report.nll_bits)),
        train_acc: report.train_acc,
        ood_acc: None,
        diverged: false,
    });
    Ok(table)
}

/// Frontier curve as CSV `(decode_probability, kl_bits)` rows.
pub fn frontier_csv(multimodal: bool, grid: usize) -> String {
    let points = if multimodal {
        multimodal_frontier(grid)
    } else {
        unimodal_frontier(grid)
    };
    let mut s = String::from("decode_probability,kl_bits\n");
    let mut sorted = points;
    sorted.sort_by(|a, b| a.decode_prob.partial_cmp(&b.decode_prob).unwrap());
    for p in sorted {
        s.push_str(&format!("{},{}\n", p.decode_prob, p.kl_bits));
    }
    s
}
