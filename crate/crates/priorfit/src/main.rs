//! Command-line interface: prior sampling, meta-training, tuning, prediction
//! and the evaluation experiments. Single-threaded and fully seeded, so every
//! path reproduces its output files for a fixed seed.

use clap::{Parser, Subcommand};
use priorfit::error::{Error, Result};
use priorfit::eval::{
    self, aggregate, load_prediction_pair, read_records, render_summary, run_benchmark,
    run_extrapolation, run_gp_recovery, write_curves_csv, write_summary_csv, write_summary_svg,
    BenchmarkConfig, RecoveryConfig,
};
use priorfit::infer::{predict, EnsembleConfig};
use priorfit::model::{ModelCheckpoint, ModelConfig, TunedSettings};
use priorfit::prior::dataset::z_normalize;
use priorfit::prior::{
    field, sample_dataset, shard, GeneratorKind, PriorHyperparameters, PriorSpace, SampleLimits,
    SyntheticDataset,
};
use priorfit::train::{meta_train, TrainConfig, TrainSinks};
use priorfit::tune::{batch_for_tuning, split_validation, tune, TuneConfig};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "priorfit", version, about = "Prior-fitted tabular classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic datasets from the prior into a binary shard.
    SamplePrior {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count: usize,
        /// Rows per dataset.
        #[arg(long)]
        n: usize,
        /// Features per dataset.
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "desk")]
        space: String,
    },
    /// Meta-train a model; architecture and schedule come from a key-value
    /// config file.
    MetaTrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Line-delimited training log (step, loss, lr, elapsed-ms).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Tune ψ and the temperature on validation CSVs through the frozen model.
    Tune {
        #[arg(long)]
        ckpt: PathBuf,
        /// Directory of <name>.csv / <name>.json validation datasets.
        #[arg(long)]
        val_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        draws: usize,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "desk")]
        space: String,
        /// Differently-seeded context/query splits drawn from each CSV.
        #[arg(long, default_value_t = 4)]
        splits_per_dataset: usize,
        #[arg(long)]
        out: PathBuf,
        /// Line-delimited tuning trajectory for plotting.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Predict test-row class probabilities with the permutation ensemble.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        members: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Benchmark a checkpoint over a dataset directory and aggregate.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated split seeds.
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 10)]
        members: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Zero the wall-time field so result files are byte-reproducible.
        #[arg(long, default_value_t = false)]
        no_timing: bool,
    },
    /// GP hyperparameter recovery: loss-curve sweeps plus gradient tuning
    /// against a known ψ̂.
    GpAblation {
        #[arg(long)]
        ckpt: PathBuf,
        /// Seed that draws the true ψ̂ from the GP space.
        #[arg(long, default_value_t = 0)]
        true_seed: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        datasets: usize,
        #[arg(long, default_value_t = 48)]
        rows: usize,
        #[arg(long, default_value_t = 11)]
        grid: usize,
        #[arg(long, default_value_t = 4)]
        draws: usize,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        /// Long-form loss-curve CSV.
        #[arg(long)]
        curves: PathBuf,
        /// Recovery report JSON.
        #[arg(long)]
        report: PathBuf,
    },
    /// Mean AUC on a separable family at growing train lengths.
    Extrapolate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Comma-separated train lengths.
        #[arg(long, default_value = "128,256,512")]
        lengths: String,
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Total-variation distance to the exact Bayes PPD on the bundled
    /// 4-hypothesis discrete prior.
    OracleCheck {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long, default_value_t = 30)]
        train_rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_space(name: &str) -> Result<PriorSpace> {
    match name {
        "full" => Ok(PriorSpace::full()),
        "desk" => Ok(PriorSpace::desk()),
        "gp-ablation" => Ok(PriorSpace::gp_ablation()),
        "toy-linear" => Ok(PriorSpace::toy_linear()),
        other => Err(Error::Config(format!(
            "unknown prior space {other:?}; expected full, desk, gp-ablation or toy-linear"
        ))),
    }
}

fn parse_u64_list(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad integer {s:?} in list")))
        })
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    parse_u64_list(text).map(|v| v.into_iter().map(|x| x as usize).collect())
}

/// Key-value config file: one `key value` or `key = value` pair per line,
/// `#` comments. Unknown keys are errors.
fn parse_kv_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, |c: char| c == '=' || c.is_whitespace());
        let key = parts.next().unwrap_or("").trim();
        let value = parts
            .next()
            .unwrap_or("")
            .trim_start_matches(|c: char| c == '=' || c.is_whitespace())
            .trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse(format!("config line {}: expected `key value`", i + 1)));
        }
        map.insert(key.to_owned(), value.to_owned());
    }
    Ok(map)
}

fn train_setup(path: &Path, seed: u64) -> Result<(ModelConfig, TrainConfig, PriorSpace)> {
    let kv = parse_kv_config(path)?;
    let mut model = ModelConfig::desk();
    let mut train = TrainConfig { seed, ..Default::default() };
    let mut space = PriorSpace::desk();
    for (key, value) in &kv {
        let bad = || Error::Parse(format!("config key {key}: bad value {value:?}"));
        let as_usize = || value.parse::<usize>().map_err(|_| bad());
        let as_f32 = || value.parse::<f32>().map_err(|_| bad());
        match key.as_str() {
            "layers" => model.layers = as_usize()?,
            "d_model" => model.d_model = as_usize()?,
            "d_ff" => model.d_ff = as_usize()?,
            "heads" => model.heads = as_usize()?,
            "max_features" => model.max_features = as_usize()?,
            "max_classes" => model.max_classes = as_usize()?,
            "max_train_len" => model.max_train_len = as_usize()?,
            "conditional" => {
                model.style_dim = match value.as_str() {
                    "true" => field::COUNT,
                    "false" => 0,
                    _ => return Err(bad()),
                }
            }
            "steps" => train.steps = as_usize()?,
            "datasets_per_step" => train.datasets_per_step = as_usize()?,
            "rows_per_dataset" => train.rows_per_dataset = as_usize()?,
            "features_min" => train.features_min = as_usize()?,
            "features_max" => train.features_max = as_usize()?,
            "lr" => train.lr = as_f32()?,
            "warmup_frac" => train.warmup_frac = as_f32()?,
            "patience" => train.patience = as_usize()?,
            "checkpoint_every" => train.checkpoint_every = as_usize()?,
            "space" => space = parse_space(value)?,
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
    }
    Ok((model, train, space))
}

/// Each validation CSV becomes one tuning dataset: z-normalized features and
/// a seeded 60/40 context/query row split.
fn validation_dataset(ds: &eval::LabeledDataset, seed: u64) -> SyntheticDataset {
    let mut idx: Vec<usize> = (0..ds.rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let split_point = ((ds.rows() * 3) / 5).clamp(1, ds.rows() - 1);
    let mut x: Vec<Vec<f32>> = idx.iter().map(|&i| ds.x[i].clone()).collect();
    let mask: Vec<Vec<u8>> = idx.iter().map(|&i| ds.mask[i].clone()).collect();
    let y: Vec<u16> = idx.iter().map(|&i| ds.y[i]).collect();
    z_normalize(&mut x, &mask);
    SyntheticDataset {
        x,
        y,
        mask,
        n_classes: ds.n_classes,
        psi_vector: Vec::new(),
        split_point,
        generator: GeneratorKind::Oracle,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SamplePrior { seed, count, n, k, out, space } => {
            let space = parse_space(&space)?;
            let limits = SampleLimits {
                max_rows: n.max(SampleLimits::default().max_rows),
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut datasets = Vec::with_capacity(count);
            for _ in 0..count {
                let psi = PriorHyperparameters::sample(&space, &mut rng)?;
                datasets.push(sample_dataset(&psi, &space, n, k, &limits, &mut rng)?);
            }
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            shard::write_shard(&mut w, &datasets)?;
            w.flush()?;
            println!("wrote {count} datasets to {}", out.display());
        }
        Command::MetaTrain { config, seed, out, log } => {
            let (model, train, space) = train_setup(&config, seed)?;
            let sinks = TrainSinks { checkpoint_path: Some(out.clone()), log_path: log };
            meta_train(model, &train, &space, &sinks)?;
            println!("trained {} steps, checkpoint at {}", train.steps, out.display());
        }
        Command::Tune {
            ckpt,
            val_dir,
            draws,
            steps,
            lr,
            seed,
            space,
            splits_per_dataset,
            out,
            trajectory,
        } => {
            let checkpoint = ModelCheckpoint::load(&ckpt)?;
            let space = parse_space(&space)?;
            let datasets = eval::results::discover_datasets(&val_dir)?;
            if splits_per_dataset == 0 {
                return Err(Error::Config("splits-per-dataset must be positive".into()));
            }
            let mut batches = Vec::new();
            for (i, (_, csv, schema)) in datasets.iter().enumerate() {
                let ds = eval::load_dataset(csv, schema)?;
                for s in 0..splits_per_dataset {
                    let syn = validation_dataset(&ds, seed ^ (i * 1031 + s) as u64);
                    batches.push(batch_for_tuning(&syn, &checkpoint.params.config)?);
                }
            }
            let (v1, v2) = split_validation(&batches, seed)?;
            let cfg = TuneConfig { num_draws: draws, num_steps: steps, lr, seed, patience: 10 };
            let run = tune(&checkpoint, &space, &v1, &v2, &cfg)?;
            if let Some(p) = trajectory {
                let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
                for point in &run.trajectory {
                    writeln!(w, "{}", serde_json::to_string(point)?)?;
                }
                w.flush()?;
            }
            let tuned = ModelCheckpoint {
                params: checkpoint.params,
                tuned: Some(TunedSettings {
                    psi: run.best_psi.clone(),
                    temperature: run.best_temperature,
                }),
            };
            tuned.save(&out)?;
            println!(
                "best V2 loss {:.4} at t*={:.3} ({} clamps); checkpoint at {}",
                run.best_v2_loss,
                run.best_temperature,
                run.clamp_count,
                out.display()
            );
        }
        Command::Predict { ckpt, train, test, schema, out, members, seed } => {
            let checkpoint = ModelCheckpoint::load(&ckpt)?;
            let task = load_prediction_pair(&train, &test, &schema)?;
            let ens = EnsembleConfig { members, base_seed: seed };
            let result = predict(&checkpoint, &task, &ens)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let mut writer = csv::Writer::from_path(&out)?;
            let mut header: Vec<String> =
                task.label_names.iter().map(|l| format!("p_{l}")).collect();
            header.push("argmax".into());
            writer.write_record(&header)?;
            for row in &result.probabilities {
                let mut best = 0usize;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                record.push(task.label_names[best].clone());
                writer.write_record(&record)?;
            }
            writer.flush()?;
            println!(
                "predicted {} rows in {} ms -> {}",
                result.probabilities.len(),
                result.elapsed_ms,
                out.display()
            );
        }
        Command::Eval { ckpt, data, seeds, fraction, members, out, summary, svg, no_timing } => {
            let checkpoint = ModelCheckpoint::load(&ckpt)?;
            let cfg = BenchmarkConfig {
                seeds: parse_u64_list(&seeds)?,
                test_fraction: fraction,
                ensemble: EnsembleConfig { members, base_seed: 0 },
                ..Default::default()
            };
            let mut outcome = run_benchmark(&checkpoint, &data, &cfg, &out)?;
            if no_timing {
                for r in &mut outcome.records {
                    r.wall_time_ms = 0;
                }
                eval::write_records(&outcome.records, &out)?;
            }
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            let rows = aggregate(&read_records(&out)?)?;
            print!("{}", render_summary(&rows));
            if let Some(p) = summary {
                write_summary_csv(&rows, &p)?;
            }
            if let Some(p) = svg {
                write_summary_svg(&rows, &p)?;
            }
        }
        Command::GpAblation {
            ckpt,
            true_seed,
            seed,
            datasets,
            rows,
            grid,
            draws,
            steps,
            curves,
            report,
        } => {
            let checkpoint = ModelCheckpoint::load(&ckpt)?;
            let space = PriorSpace::gp_ablation();
            let mut rng = ChaCha8Rng::seed_from_u64(true_seed);
            let truth = PriorHyperparameters::sample(&space, &mut rng)?;
            let cfg = RecoveryConfig {
                n_datasets: datasets,
                rows,
                grid_points: grid,
                seed,
                tune: TuneConfig { num_draws: draws, num_steps: steps, seed, ..Default::default() },
                ..Default::default()
            };
            let rec = run_gp_recovery(&checkpoint, &space, &truth, &cfg)?;
            write_curves_csv(&rec, &curves)?;
            std::fs::write(&report, serde_json::to_string_pretty(&rec)?)?;
            for (c, (ce, te)) in
                rec.curves.iter().zip(rec.curve_errors.iter().zip(rec.tuned_errors.iter()))
            {
                println!("{}: curve error {ce:.3}, tuned error {te:.3} (range widths)", c.name);
            }
        }
        Command::Extrapolate { ckpt, lengths, test, k, seeds, out } => {
            let checkpoint = ModelCheckpoint::load(&ckpt)?;
            let lengths = parse_usize_list(&lengths)?;
            let seeds = parse_u64_list(&seeds)?;
            let results = run_extrapolation(&checkpoint, &lengths, test, k, &seeds)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["train_length", "mean_auc"])?;
            for (n, auc) in &results {
                w.write_record([format!("{n}"), format!("{auc}")])?;
                println!("length {n}: mean AUC {auc:.4}");
            }
            w.flush()?;
        }
        Command::OracleCheck { ckpt, probes, train_rows, seed, out } => {
            let checkpoint = ModelCheckpoint::load(&ckpt)?;
            let prior = eval::four_threshold_prior();
            let (mean, tvs) = eval::oracle_probe_tvs(&checkpoint, &prior, train_rows, probes, seed)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            for (i, tv) in tvs.iter().enumerate() {
                writeln!(w, "{}", serde_json::json!({ "probe": i, "tv": tv }))?;
            }
            writeln!(w, "{}", serde_json::json!({ "mean_tv": mean, "probes": probes }))?;
            w.flush()?;
            println!("mean total-variation distance over {probes} probes: {mean:.4}");
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
