//! Result persistence (JSONL) and aggregation: means, average ranks, wins
//! and 95% confidence intervals across seed repetitions.

use crate::error::{Error, Result};
use crate::eval::io::{load_dataset, split};
use crate::eval::metrics::{accuracy, cross_entropy, roc_auc_ovo};
use crate::infer::{predict, EnsembleConfig};
use crate::model::ModelCheckpoint;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub const METRIC_NAMES: [&str; 3] = ["roc_auc_ovo", "cross_entropy", "accuracy"];

/// Lower cross-entropy is better; the other metrics are maximized.
pub fn lower_is_better(metric: &str) -> bool {
    metric == "cross_entropy"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_time_ms: u64,
    pub config_hash: String,
}

impl ResultRecord {
    fn key(&self) -> (String, String, u64, String) {
        (self.dataset.clone(), self.method.clone(), self.seed, self.metric.clone())
    }
}

fn check_unique(records: &[ResultRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.key()) {
            return Err(Error::Contract(format!(
                "duplicate record for ({}, {}, {}, {})",
                r.dataset, r.method, r.seed, r.metric
            )));
        }
    }
    Ok(())
}

/// One record per line; refuses duplicate (dataset, method, seed, metric).
pub fn write_records(records: &[ResultRecord], path: &Path) -> Result<()> {
    check_unique(records)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ResultRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("results line {}: {e}", i + 1)))?;
        records.push(r);
    }
    check_unique(&records)?;
    Ok(records)
}

/// FNV-1a over a printable description of the run configuration.
pub fn config_hash(ckpt: &ModelCheckpoint, ens: &EnsembleConfig) -> String {
    let desc = format!(
        "{:?}|members={}|base_seed={}|tuned={}",
        ckpt.params.config,
        ens.members,
        ens.base_seed,
        ckpt.tuned.is_some()
    );
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in desc.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub method: String,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub ensemble: EnsembleConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            method: "priorfit".into(),
            seeds: vec![0, 1, 2, 3, 4],
            test_fraction: 0.5,
            ensemble: EnsembleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkOutcome {
    pub records: Vec<ResultRecord>,
    /// Human-readable notes for dataset x seed cells that failed.
    pub failures: Vec<String>,
}

/// Every `<name>.csv` in `dir` with a sibling `<name>.json` schema is one
/// benchmark dataset.
pub fn discover_datasets(dir: &Path) -> Result<Vec<(String, std::path::PathBuf, std::path::PathBuf)>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let schema = path.with_extension("json");
        if !schema.exists() {
            continue;
        }
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_owned();
        found.push((name, path, schema));
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Contract(format!("no csv/json dataset pairs under {}", dir.display())));
    }
    Ok(found)
}

/// Per (dataset, seed): split, predict, score all three metrics with shared
/// wall time. Failed cells are noted and the run continues. Records are
/// persisted to `out_path` as JSONL.
pub fn run_benchmark(
    ckpt: &ModelCheckpoint,
    dataset_dir: &Path,
    cfg: &BenchmarkConfig,
    out_path: &Path,
) -> Result<BenchmarkOutcome> {
    let datasets = discover_datasets(dataset_dir)?;
    let hash = config_hash(ckpt, &cfg.ensemble);
    let mut outcome = BenchmarkOutcome::default();
    for (name, csv, schema) in &datasets {
        let ds = match load_dataset(csv, schema) {
            Ok(d) => d,
            Err(e) => {
                outcome.failures.push(format!("{name}: load failed: {e}"));
                continue;
            }
        };
        for &seed in &cfg.seeds {
            let cell = (|| -> Result<Vec<ResultRecord>> {
                let (task, held_out) = split(&ds, seed, cfg.test_fraction)?;
                let start = Instant::now();
                let pred = predict(ckpt, &task, &cfg.ensemble)?;
                let wall = start.elapsed().as_millis() as u64;
                let values = [
                    roc_auc_ovo(&held_out, &pred.probabilities)?,
                    cross_entropy(&held_out, &pred.probabilities)?,
                    accuracy(&held_out, &pred.probabilities)?,
                ];
                Ok(METRIC_NAMES
                    .iter()
                    .zip(values.iter())
                    .map(|(m, &v)| ResultRecord {
                        dataset: name.clone(),
                        method: cfg.method.clone(),
                        seed,
                        metric: (*m).to_owned(),
                        value: v,
                        wall_time_ms: wall,
                        config_hash: hash.clone(),
                    })
                    .collect())
            })();
            match cell {
                Ok(mut recs) => outcome.records.append(&mut recs),
                Err(e) => outcome.failures.push(format!("{name} seed {seed}: {e}")),
            }
        }
    }
    write_records(&outcome.records, out_path)?;
    Ok(outcome)
}

/// One aggregated line per (method, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval over cells.
    pub ci95: f64,
    pub mean_rank: f64,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub cells: usize,
}

/// Rank/win statistics use only (dataset, seed) cells where every method
/// reported the metric; ranks average over exact ties, and a cell whose best
/// value is shared counts as a tie for all sharers.
pub fn aggregate(records: &[ResultRecord]) -> Result<Vec<AggregateRow>> {
    check_unique(records)?;
    if records.is_empty() {
        return Err(Error::Contract("no records to aggregate".into()));
    }
    let methods: BTreeSet<&str> = records.iter().map(|r| r.method.as_str()).collect();
    let metrics: BTreeSet<&str> = records.iter().map(|r| r.metric.as_str()).collect();
    let mut rows = Vec::new();
    for metric in &metrics {
        // cell -> method -> value
        let mut cells: BTreeMap<(String, u64), BTreeMap<&str, f64>> = BTreeMap::new();
        for r in records.iter().filter(|r| r.metric == *metric) {
            cells
                .entry((r.dataset.clone(), r.seed))
                .or_default()
                .insert(r.method.as_str(), r.value);
        }
        let complete: Vec<&BTreeMap<&str, f64>> =
            cells.values().filter(|m| m.len() == methods.len()).collect();
        let lower = lower_is_better(metric);
        let mut rank_sum: BTreeMap<&str, f64> = BTreeMap::new();
        let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
        let mut ties: BTreeMap<&str, usize> = BTreeMap::new();
        for cell in &complete {
            let mut ordered: Vec<(&str, f64)> = cell.iter().map(|(&m, &v)| (m, v)).collect();
            ordered.sort_by(|a, b| if lower { a.1.total_cmp(&b.1) } else { b.1.total_cmp(&a.1) });
            // average-rank convention over runs of equal values
            let mut i = 0;
            while i < ordered.len() {
                let mut j = i;
                while j < ordered.len() && ordered[j].1 == ordered[i].1 {
                    j += 1;
                }
                let avg = ((i + 1)..=j).sum::<usize>() as f64 / (j - i) as f64;
                for entry in &ordered[i..j] {
                    *rank_sum.entry(entry.0).or_default() += avg;
                }
                i = j;
            }
            let best = ordered[0].1;
            let sharers: Vec<&str> =
                ordered.iter().filter(|(_, v)| *v == best).map(|(m, _)| *m).collect();
            if sharers.len() == 1 {
                *wins.entry(sharers[0]).or_default() += 1;
            } else {
                for m in sharers {
                    *ties.entry(m).or_default() += 1;
                }
            }
        }
        for method in &methods {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.metric == *metric && r.method == *method)
                .map(|r| r.value)
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let ci95 = if values.len() > 1 { 1.96 * (var / n).sqrt() } else { 0.0 };
            let w = wins.get(*method).copied().unwrap_or(0);
            let t = ties.get(*method).copied().unwrap_or(0);
            rows.push(AggregateRow {
                method: (*method).to_owned(),
                metric: (*metric).to_owned(),
                mean,
                ci95,
                mean_rank: if complete.is_empty() {
                    f64::NAN
                } else {
                    rank_sum.get(*method).copied().unwrap_or(0.0) / complete.len() as f64
                },
                wins: w,
                ties: t,
                losses: complete.len() - w - t,
                cells: values.len(),
            });
        }
    }
    Ok(rows)
}

/// Fixed-width text table of the aggregate rows.
pub fn render_summary(rows: &[AggregateRow]) -> String {
    let mut out = format!(
        "{:<12} {:<14} {:>9} {:>9} {:>9} {:>5} {:>5} {:>6}\n",
        "method", "metric", "mean", "ci95", "rank", "wins", "ties", "cells"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:<14} {:>9.4} {:>9.4} {:>9.2} {:>5} {:>5} {:>6}\n",
            r.method, r.metric, r.mean, r.ci95, r.mean_rank, r.wins, r.ties, r.cells
        ));
    }
    out
}

pub fn write_summary_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "metric", "mean", "ci95", "mean_rank", "wins", "ties", "losses", "cells"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.metric.clone(),
            format!("{}", r.mean),
            format!("{}", r.ci95),
            format!("{}", r.mean_rank),
            format!("{}", r.wins),
            format!("{}", r.ties),
            format!("{}", r.losses),
            format!("{}", r.cells),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Horizontal bar chart of per-method means, one band per metric.
pub fn write_summary_svg(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let bar_h = 18;
    let gap = 6;
    let label_w = 230;
    let plot_w = 420.0f64;
    let height = rows.len() * (bar_h + gap) + 30;
    let max = rows.iter().map(|r| r.mean.abs()).fold(1e-9, f64::max);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"12\">\n",
        label_w + plot_w as usize + 80
    );
    for (i, r) in rows.iter().enumerate() {
        let y = 15 + i * (bar_h + gap);
        let w = (r.mean.abs() / max * plot_w).max(1.0);
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{}\">{} / {}</text>\n",
            y + bar_h - 5,
            r.method,
            r.metric
        ));
        svg.push_str(&format!(
            "<rect x=\"{label_w}\" y=\"{y}\" width=\"{w:.1}\" height=\"{bar_h}\" fill=\"#4878a8\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\">{:.4}</text>\n",
            label_w as f64 + w + 6.0,
            y + bar_h - 5,
            r.mean
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(dataset: &str, method: &str, seed: u64, metric: &str, value: f64) -> ResultRecord {
        ResultRecord {
            dataset: dataset.into(),
            method: method.into(),
            seed,
            metric: metric.into(),
            value,
            wall_time_ms: 1,
            config_hash: "abc".into(),
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        let recs = vec![
            record("d", "m", 0, "accuracy", 0.5),
            record("d", "m", 0, "accuracy", 0.6),
        ];
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_records(&recs, &dir.path().join("r.jsonl")),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn jsonl_roundtrip_preserves_records() {
        let recs = vec![
            record("d1", "m", 0, "accuracy", 0.5),
            record("d1", "m", 1, "accuracy", 0.75),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_records(&recs, &p).unwrap();
        assert_eq!(read_records(&p).unwrap(), recs);
    }

    #[test]
    fn identical_methods_tie_on_rank_and_wins() {
        let mut recs = Vec::new();
        for seed in 0..3 {
            for method in ["a", "b"] {
                recs.push(record("d", method, seed, "accuracy", 0.7));
            }
        }
        let rows = aggregate(&recs).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.mean_rank, 1.5);
            assert_eq!(r.wins, 0);
            assert_eq!(r.ties, 3);
            assert_eq!(r.losses, 0);
        }
    }

    #[test]
    fn cross_entropy_ranks_lower_first() {
        let recs = vec![
            record("d", "good", 0, "cross_entropy", 0.2),
            record("d", "bad", 0, "cross_entropy", 0.9),
        ];
        let rows = aggregate(&recs).unwrap();
        let good = rows.iter().find(|r| r.method == "good").unwrap();
        let bad = rows.iter().find(|r| r.method == "bad").unwrap();
        assert_eq!(good.mean_rank, 1.0);
        assert_eq!(good.wins, 1);
        assert_eq!(bad.mean_rank, 2.0);
        assert_eq!(bad.losses, 1);
    }

    #[test]
    fn aggregation_is_reproducible_from_the_file_alone() {
        let recs = vec![
            record("d1", "a", 0, "accuracy", 0.8),
            record("d1", "b", 0, "accuracy", 0.6),
            record("d2", "a", 0, "accuracy", 0.4),
            record("d2", "b", 0, "accuracy", 0.9),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_records(&recs, &p).unwrap();
        let direct = aggregate(&recs).unwrap();
        let reloaded = aggregate(&read_records(&p).unwrap()).unwrap();
        assert_eq!(direct, reloaded);
    }

    #[test]
    fn benchmark_emits_three_metrics_per_cell_and_survives_bad_datasets() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("a,b,label\n");
        let mut rng_vals = 0.0f32;
        for i in 0..24 {
            rng_vals += 0.37;
            let cls = if i % 2 == 0 { "yes" } else { "no" };
            csv.push_str(&format!("{:.2},{:.2},{cls}\n", rng_vals % 3.0, (i as f32) * 0.1));
        }
        std::fs::write(dir.path().join("toy.csv"), &csv).unwrap();
        std::fs::write(
            dir.path().join("toy.json"),
            r#"{"target":"label","columns":{"a":"numeric","b":"numeric","label":"categorical"}}"#,
        )
        .unwrap();
        // a broken dataset: schema present, csv malformed
        std::fs::write(dir.path().join("bad.csv"), "a,label\nnotanumber,yes\n").unwrap();
        std::fs::write(
            dir.path().join("bad.json"),
            r#"{"target":"label","columns":{"a":"numeric","label":"categorical"}}"#,
        )
        .unwrap();

        let cfg = ModelConfig {
            layers: 1,
            d_model: 16,
            d_ff: 32,
            heads: 2,
            max_features: 4,
            max_classes: 3,
            max_train_len: 32,
            style_dim: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ckpt = ModelCheckpoint::new(ModelParams::init(cfg, &mut rng).unwrap());
        let bench = BenchmarkConfig {
            seeds: vec![7],
            ensemble: EnsembleConfig { members: 1, base_seed: 0 },
            ..Default::default()
        };
        let out = dir.path().join("results.jsonl");
        let outcome = run_benchmark(&ckpt, dir.path(), &bench, &out).unwrap();
        assert_eq!(outcome.records.len(), 3);
        assert_eq!(outcome.failures.len(), 1, "{:?}", outcome.failures);
        assert!(outcome.failures[0].starts_with("bad"));
        let names: BTreeSet<String> =
            outcome.records.iter().map(|r| r.metric.clone()).collect();
        assert_eq!(names.len(), 3);
        assert!(outcome.records.iter().all(|r| r.wall_time_ms == outcome.records[0].wall_time_ms));
        assert_eq!(read_records(&out).unwrap(), outcome.records);
    }

    #[test]
    fn artifacts_are_written() {
        let rows = aggregate(&[
            record("d", "a", 0, "accuracy", 0.8),
            record("d", "a", 1, "accuracy", 0.7),
        ])
        .unwrap();
        let table = render_summary(&rows);
        assert!(table.contains("accuracy"));
        let dir = tempfile::tempdir().unwrap();
        write_summary_csv(&rows, &dir.path().join("s.csv")).unwrap();
        write_summary_svg(&rows, &dir.path().join("s.svg")).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("s.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("rect"));
    }
}
