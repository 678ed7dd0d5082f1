//! `mdlxf`: compile symbolic programs to Transformer weights, emulate
//! prefix Turing machines, evaluate codelengths, and reproduce the parity
//! and identity-task experiments.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mdlxf_cli::{desk_preset, frontier_csv, reproduce_table1, reproduce_table2, RunDir, Scale};
use mdlxf_core::codes::{mc_kl, CodelengthReport, DistributionBundle};
use mdlxf_core::compile::{
    compile, pad, read_weights, write_weights, CompilerOptions, Normalization, TargetDims,
};
use mdlxf_core::grad::{train_variational_mlp, TrainConfig, VarMlp};
use mdlxf_core::ptm::{
    bounded_codelength_oracles, machine_from_json, run as run_tm, Dataset, PrefixTmSpec,
    ProgramBits, ResourceBound, RunOutcome,
};
use mdlxf_core::symprog::{
    build_copy_last_program, build_parity_program, interpret, standard_tokens, validate,
    SymbolicProgram,
};
use mdlxf_core::transformer::{argmax, forward, preprocess, softmax, ModelConfig};
use serde_json::json;
use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mdlxf", version, about)]
struct Cli {
    /// Random seed used by stochastic subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for experiment subcommands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat key=value config file overriding experiment settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads (also read from MDLXF_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinProgram {
    Parity,
    CopyLast,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Tanh,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Parity,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Mle,
    Variational,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Manual,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Unimodal,
    Multimodal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a symbolic program (from JSON or a builtin) to weights.
    Compile {
        #[arg(long, conflicts_with = "builtin")]
        program: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<BuiltinProgram>,
        #[arg(long, value_enum, default_value = "tanh")]
        backend: Backend,
        #[arg(long, default_value_t = 0)]
        prompt_rows: usize,
        /// Optional padding target `model,hidden,heads`.
        #[arg(long)]
        target: Option<String>,
        #[arg(long = "out-weights")]
        out_weights: PathBuf,
    },
    /// Run the reference interpreter on an input string.
    Interpret {
        #[arg(long, conflicts_with = "builtin")]
        program: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<BuiltinProgram>,
        #[arg(long)]
        input: String,
        #[arg(long)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        prompt_rows: usize,
    },
    /// Forward pass of stored weights on an input string.
    Forward {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        json: bool,
    },
    /// Compile a prefix Turing machine and program into emulating weights.
    Zmap {
        #[arg(long)]
        tm: PathBuf,
        #[arg(long)]
        rt: usize,
        #[arg(long)]
        rs: usize,
        #[arg(long)]
        z: String,
        #[arg(long = "out-weights")]
        out_weights: PathBuf,
    },
    /// Run the prefix Turing machine VM directly.
    EmulateTm {
        #[arg(long)]
        tm: PathBuf,
        #[arg(long)]
        z: String,
        #[arg(long, default_value = "")]
        input: String,
        #[arg(long)]
        rt: usize,
        #[arg(long)]
        rs: usize,
    },
    /// Enumerate halting programs and report bounded codelengths.
    EnumBounds {
        #[arg(long)]
        tm: PathBuf,
        #[arg(long)]
        rt: usize,
        #[arg(long)]
        rs: usize,
        #[arg(long)]
        max_len: usize,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a weights + bundle pair on a dataset.
    EvalCodelength {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 100)]
        mc_samples: usize,
        #[arg(long)]
        layers: usize,
    },
    /// Train a model; writes trajectory and report into --out.
    Train {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value = "random")]
        init: InitArg,
    },
    /// Reproduce the parity results table.
    ReproduceTable1 {
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
    },
    /// Reproduce the identity-task results table.
    ReproduceTable2,
    /// Emit a bit-transmission frontier curve as CSV.
    Frontier {
        #[arg(long, value_enum)]
        prior: PriorArg,
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
}

fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| {
            c.to_digit(10)
                .map(|d| d as u8)
                .ok_or_else(|| anyhow!("input must be digit tokens, got `{c}`"))
        })
        .collect()
}

fn load_program(
    program: &Option<PathBuf>,
    builtin: &Option<BuiltinProgram>,
) -> Result<SymbolicProgram> {
    match (program, builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let program: SymbolicProgram =
                serde_json::from_str(&text).context("parsing program JSON")?;
            let diags = validate(&program);
            if !diags.is_empty() {
                bail!("program failed validation: {}", diags[0]);
            }
            Ok(program)
        }
        (None, Some(BuiltinProgram::Parity)) => Ok(build_parity_program()),
        (None, Some(BuiltinProgram::CopyLast)) => Ok(build_copy_last_program()),
        _ => bail!("pass exactly one of --program or --builtin"),
    }
}

fn load_machine(path: &PathBuf) -> Result<PrefixTmSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    machine_from_json(&text).map_err(|e| anyhow!("machine file: {e}"))
}

/// Lines of `tokens<TAB>label`; labels may be `even`/`odd` or integers.
fn load_dataset(path: &PathBuf) -> Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (tokens, label) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("line {}: expected tokens<TAB>label", lineno + 1))?;
        inputs.push(parse_bits(tokens.trim())?);
        let label = match label.trim() {
            "even" => 0,
            "odd" => 1,
            other => other
                .parse::<usize>()
                .map_err(|_| anyhow!("line {}: bad label `{other}`", lineno + 1))?,
        };
        labels.push(label);
    }
    Ok(Dataset::new(inputs, labels))
}

fn parse_target(spec: &str) -> Result<TargetDims> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        bail!("--target expects `model,hidden,heads`");
    }
    Ok(TargetDims {
        model_dim: parts[0].trim().parse()?,
        hidden_dim: parts[1].trim().parse()?,
        num_heads: parts[2].trim().parse()?,
        d_head: None,
        num_prompt_rows: None,
    })
}

/// Flat `key=value` config lines; unknown keys are usage errors naming the
/// field.
fn load_config_overrides(path: &Option<PathBuf>) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    let Some(path) = path else { return Ok(map) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn apply_train_overrides(config: &mut TrainConfig, overrides: &HashMap<String, String>) -> Result<()> {
    for (key, value) in overrides {
        match key.as_str() {
            "train.lr" => config.lr = value.parse()?,
            "train.warmup_steps" => config.warmup_steps = value.parse()?,
            "train.total_steps" => config.total_steps = value.parse()?,
            "train.batch" => config.batch = value.parse()?,
            "train.mc_weight_samples" => config.mc_weight_samples = value.parse()?,
            "train.kl_coefficient" => config.kl_coefficient = value.parse()?,
            "train.gumbel_temperature" => config.gumbel_temperature = value.parse()?,
            "train.eval_mc_samples" => config.eval_mc_samples = value.parse()?,
            k if k.starts_with("desk.") => {}
            other => bail!("unknown config field `{other}` (expected train.* or desk.*)"),
        }
    }
    Ok(())
}

fn apply_desk_overrides(
    preset: &mut mdlxf_cli::DeskPreset,
    overrides: &HashMap<String, String>,
) -> Result<()> {
    for (key, value) in overrides {
        match key.as_str() {
            "desk.train_min_len" => preset.train_min_len = value.parse()?,
            "desk.train_max_len" => preset.train_max_len = value.parse()?,
            "desk.train_total" => preset.train_total = value.parse()?,
            "desk.ood_min_len" => preset.ood_min_len = value.parse()?,
            "desk.ood_max_len" => preset.ood_max_len = value.parse()?,
            "desk.ood_per_length" => preset.ood_per_length = value.parse()?,
            "desk.model_dim" => preset.model_dim = value.parse()?,
            "desk.hidden_dim" => preset.hidden_dim = value.parse()?,
            "desk.num_heads" => preset.num_heads = value.parse()?,
            "desk.num_prompt_rows" => preset.num_prompt_rows = value.parse()?,
            "desk.num_layers" => preset.num_layers = value.parse()?,
            "desk.mle_steps" => preset.mle_steps = value.parse()?,
            "desk.var_steps" => preset.var_steps = value.parse()?,
            "desk.batch" => preset.batch = value.parse()?,
            "desk.warmup_steps" => preset.warmup_steps = value.parse()?,
            "desk.kl_coefficient" => preset.kl_coefficient = value.parse()?,
            "desk.lr" => preset.lr = value.parse()?,
            "desk.eval_train_sample" => preset.eval_train_sample = value.parse()?,
            "desk.eval_ood_sample" => preset.eval_ood_sample = value.parse()?,
            "desk.eval_mc_samples" => preset.eval_mc_samples = value.parse()?,
            k if k.starts_with("train.") => {}
            other => bail!("unknown config field `{other}` (expected train.* or desk.*)"),
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("MDLXF_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let overrides = load_config_overrides(&cli.config)?;

    match cli.command {
        Command::Compile {
            program,
            builtin,
            backend,
            prompt_rows,
            target,
            out_weights,
        } => {
            let program = load_program(&program, &builtin)?;
            let opts = CompilerOptions {
                normalization: match backend {
                    Backend::Tanh => Normalization::Tanh,
                    Backend::None => Normalization::None,
                },
                num_prompt_rows: prompt_rows,
                target: target.as_deref().map(parse_target).transpose()?,
                ..CompilerOptions::default()
            };
            let weights = compile(&program, &opts).map_err(|e| anyhow!("compile: {e}"))?;
            fs::write(&out_weights, write_weights(&weights))?;
            println!(
                "compiled: model_dim={} hidden_dim={} heads={} weights={}",
                weights.dims.model_dim,
                weights.dims.hidden_dim,
                weights.dims.num_heads,
                weights.num_weights()
            );
            let _ = pad;
        }
        Command::Interpret {
            program,
            builtin,
            input,
            layers,
            prompt_rows,
        } => {
            let program = load_program(&program, &builtin)?;
            let tokens = standard_tokens(&parse_bits(&input)?, prompt_rows);
            let result = interpret(&program, &tokens, layers)
                .map_err(|e| anyhow!("interpret: {e}"))?;
            println!(
                "{}",
                json!({
                    "outputs": result.outputs,
                    "argmax": argmax(&result.outputs),
                })
            );
        }
        Command::Forward {
            weights,
            input,
            layers,
            json: as_json,
        } => {
            let weights = read_weights(&fs::read(&weights)?).map_err(|e| anyhow!("{e}"))?;
            let ids = preprocess(&parse_bits(&input)?, &weights.dims)
                .map_err(|e| anyhow!("{e}"))?;
            let result = forward(&weights, &ModelConfig::layers(layers), &ids)
                .map_err(|e| anyhow!("{e}"))?;
            if as_json {
                println!(
                    "{}",
                    json!({
                        "logits": result.logits,
                        "probabilities": softmax(&result.logits),
                        "argmax": argmax(&result.logits),
                    })
                );
            } else {
                println!("logits: {:?}", result.logits);
                println!("argmax: {}", argmax(&result.logits));
            }
        }
        Command::Zmap {
            tm,
            rt,
            rs,
            z,
            out_weights,
        } => {
            let machine = load_machine(&tm)?;
            let z = ProgramBits::parse(&z).ok_or_else(|| anyhow!("--z must be a bit string"))?;
            let bound = ResourceBound::new(rt, rs);
            let weights =
                mdlxf_core::compile::zmap(&machine, &bound, &z, &CompilerOptions::plain())
                    .map_err(|e| anyhow!("zmap: {e}"))?;
            fs::write(&out_weights, write_weights(&weights))?;
            println!(
                "zmap weights: model_dim={} prompt_rows={} run with layers >= steps+2",
                weights.dims.model_dim, weights.dims.num_prompt_rows
            );
        }
        Command::EmulateTm { tm, z, input, rt, rs } => {
            let machine = load_machine(&tm)?;
            let z = ProgramBits::parse(&z).ok_or_else(|| anyhow!("--z must be a bit string"))?;
            let input = parse_bits(&input)?;
            let outcome = run_tm(&machine, &z, &input, &ResourceBound::new(rt, rs));
            let report = match &outcome {
                RunOutcome::Halted(info) => {
                    let logits = mdlxf_core::ptm::decode_output_tapes(&info.output_tapes);
                    json!({
                        "outcome": "halted",
                        "steps": info.steps,
                        "max_registers": info.max_registers,
                        "program_bits_read": info.program_bits_read,
                        "output_tapes": info.output_tapes,
                        "logits": logits.map(|ls| ls.iter().map(|l| l.value()).collect::<Vec<_>>()).ok(),
                    })
                }
                RunOutcome::ResourceExceeded => json!({"outcome": "resource_exceeded"}),
                RunOutcome::ProgramExhausted => json!({"outcome": "program_exhausted"}),
            };
            println!("{report}");
        }
        Command::EnumBounds {
            tm,
            rt,
            rs,
            max_len,
            dataset,
        } => {
            let machine = load_machine(&tm)?;
            let dataset = load_dataset(&dataset)?;
            let report = bounded_codelength_oracles(
                &machine,
                &ResourceBound::new(rt, rs),
                max_len,
                &dataset,
            );
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::EvalCodelength {
            weights,
            bundle,
            dataset,
            mc_samples,
            layers,
        } => {
            let weights = read_weights(&fs::read(&weights)?).map_err(|e| anyhow!("{e}"))?;
            let bundle: DistributionBundle = serde_json::from_str(&fs::read_to_string(&bundle)?)
                .context("parsing bundle JSON")?;
            let dataset = load_dataset(&dataset)?;
            let est = mc_kl(&bundle, mc_samples, cli.seed);
            let examples: Vec<(Vec<u8>, usize)> = dataset
                .inputs
                .iter()
                .cloned()
                .zip(dataset.labels.iter().cloned())
                .collect();
            let (nll, acc) =
                mdlxf_core::grad::eval_mle_transformer(&weights, layers, &examples);
            let report = CodelengthReport::new(bundle.prior_cost_bits, est.kl_bits, nll, acc, None)
                .with_mc(est.stderr_bits, est.samples, cli.seed);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(out) = &cli.out {
                let dir = RunDir::acquire(out)?;
                dir.write_json("report.json", &report)?;
            }
        }
        Command::Train {
            task,
            objective,
            init,
        } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| anyhow!("train requires --out <dir>"))?;
            let dir = RunDir::acquire(&out)?;
            match (task, objective) {
                (TaskArg::Identity, ObjectiveArg::Variational) => {
                    let mut config = TrainConfig {
                        total_steps: 1000,
                        warmup_steps: 100,
                        seed: cli.seed,
                        ..TrainConfig::default()
                    };
                    apply_train_overrides(&mut config, &overrides)?;
                    let start = match init {
                        InitArg::Random => VarMlp::random_init(3, cli.seed),
                        InitArg::Manual => VarMlp::manual_init(20.0),
                    };
                    dir.write_json("config.json", &json!({
                        "task": "identity", "objective": "variational",
                        "seed": cli.seed,
                        "total_steps": config.total_steps,
                        "kl_coefficient": config.kl_coefficient,
                    }))?;
                    let (_, trajectory, report) = train_variational_mlp(start, &config);
                    dir.write("trajectory.csv", trajectory.to_csv())?;
                    dir.write_json("report.json", &report)?;
                    println!("{}", serde_json::to_string_pretty(&report)?);
                    if trajectory.diverged {
                        bail!("training diverged; trajectory written to {}", out.display());
                    }
                }
                (TaskArg::Identity, ObjectiveArg::Mle) => {
                    bail!("identity task supports only the variational objective")
                }
                (TaskArg::Parity, _) => {
                    let mut preset = desk_preset();
                    apply_desk_overrides(&mut preset, &overrides)?;
                    let mut config = TrainConfig {
                        lr: preset.lr,
                        warmup_steps: preset.warmup_steps,
                        batch: preset.batch,
                        kl_coefficient: preset.kl_coefficient,
                        seed: cli.seed,
                        eval_mc_samples: preset.eval_mc_samples,
                        ..TrainConfig::default()
                    };
                    apply_train_overrides(&mut config, &overrides)?;
                    dir.write_json("config.json", &json!({
                        "task": "parity",
                        "objective": match objective { ObjectiveArg::Mle => "mle", ObjectiveArg::Variational => "variational" },
                        "seed": cli.seed,
                        "preset": &preset,
                    }))?;
                    let row = run_parity_training(&preset, objective, init, cli.seed, &dir)?;
                    println!("{}", serde_json::to_string_pretty(&row)?);
                }
            }
        }
        Command::ReproduceTable1 { scale } => {
            let scale = match scale {
                ScaleArg::Full => Scale::Full,
                ScaleArg::Desk => Scale::Desk,
            };
            let mut preset = desk_preset();
            apply_desk_overrides(&mut preset, &overrides)?;
            let (table, trajectories) = reproduce_table1(scale, cli.seed, &preset)?;
            print!("{}", table.to_csv());
            if let Some(out) = &cli.out {
                let dir = RunDir::acquire(out)?;
                dir.write_json("config.json", &json!({"scale": scale, "seed": cli.seed, "preset": &preset}))?;
                dir.write("table1.csv", table.to_csv())?;
                dir.write_json("table1.json", &table)?;
                for (i, t) in trajectories.iter().enumerate() {
                    dir.write(&format!("trajectory_row{}.csv", i + 1), t.to_csv())?;
                }
            }
            if table.any_diverged() {
                bail!("at least one training run diverged");
            }
        }
        Command::ReproduceTable2 => {
            let table = reproduce_table2(cli.seed)?;
            print!("{}", table.to_csv());
            if let Some(out) = &cli.out {
                let dir = RunDir::acquire(out)?;
                dir.write_json("config.json", &json!({"seed": cli.seed}))?;
                dir.write("table2.csv", table.to_csv())?;
                dir.write_json("table2.json", &table)?;
            }
            if table.any_diverged() {
                bail!("at least one training run diverged");
            }
        }
        Command::Frontier { prior, grid } => {
            let csv = frontier_csv(matches!(prior, PriorArg::Multimodal), grid);
            print!("{csv}");
            if let Some(out) = &cli.out {
                let dir = RunDir::acquire(out)?;
                dir.write("frontier.csv", csv)?;
            }
        }
    }
    Ok(())
}

fn run_parity_training(
    preset: &mdlxf_cli::DeskPreset,
    objective: ObjectiveArg,
    init: InitArg,
    seed: u64,
    dir: &RunDir,
) -> Result<mdlxf_cli::TableRow> {
    use mdlxf_cli::experiments::*;
    if matches!(init, InitArg::Manual) {
        let spec = mdlxf_core::tasks::ParitySpec::full();
        let dataset = mdlxf_core::tasks::gen_parity(&spec, seed);
        let row = manual_parity_row(
            &dataset,
            preset.eval_train_sample.min(600),
            preset.eval_ood_sample.min(600),
            preset.eval_mc_samples,
            seed,
        )?;
        dir.write_json("report.json", &row)?;
        return Ok(row);
    }
    // single random-init row via the table machinery
    let (table, trajectories) = reproduce_table1_single(preset, objective, seed)?;
    dir.write("trajectory.csv", trajectories[0].to_csv())?;
    dir.write_json("report.json", &table.rows[0])?;
    if table.any_diverged() {
        bail!("training diverged");
    }
    Ok(table.rows[0].clone())
}

/// Runs just one row of the parity table (used by `train --task parity`).
fn reproduce_table1_single(
    preset: &mdlxf_cli::DeskPreset,
    objective: ObjectiveArg,
    seed: u64,
) -> Result<(mdlxf_cli::ResultsTable, Vec<mdlxf_core::grad::Trajectory>)> {
    mdlxf_cli::experiments::reproduce_table1_rows(
        preset,
        seed,
        matches!(objective, ObjectiveArg::Mle),
        matches!(objective, ObjectiveArg::Variational),
    )
}
