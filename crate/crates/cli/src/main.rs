use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use halp::bench::{measure_overhead, OverheadConfig};
use halp::hallucinate::FilterMode;
use halp::io::{self, RunConfigDocument};
use halp::kmeans::{self, KMeansConfig};
use halp::toy::{self, knn_eval_with};
use halp::{hallucinate_batch, Error, Execution, HallucinationConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_ALGORITHM: u8 = 3;

#[derive(Parser)]
#[command(name = "halp", version, about = "Hard positive generation on the unit hypersphere")]
struct Cli {
    /// Run batch loops sequentially instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spherical k-means over an embedding file.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Stop when inertia improves by less than this.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Karcher-mean step size.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Prototype embedding file.
        #[arg(long)]
        output: PathBuf,
        /// key=value fit statistics [default: <OUTPUT>.stats]
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Exit with status 3 if the iteration cap is reached.
        #[arg(long)]
        strict: bool,
    },
    /// Generate filtered positives for every anchor.
    Hallucinate {
        /// Anchor (key) embeddings.
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        protos: PathBuf,
        /// Query embeddings, one per anchor; needed by --filter variant1.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        num_positives: usize,
        #[arg(long, default_value_t = 0.8)]
        lambda: f64,
        /// rank, variant1, variant2 or none.
        #[arg(long, default_value = "rank")]
        filter: FilterMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Retained positives, concatenated in anchor order.
        #[arg(long)]
        output: PathBuf,
        /// `anchor offset count` per line [default: <OUTPUT>.index]
        #[arg(long)]
        index: Option<PathBuf>,
        /// key=value generation statistics [default: <OUTPUT>.report]
        #[arg(long)]
        report: Option<PathBuf>,
        /// Exit with status 3 if any anchor was skipped as degenerate.
        #[arg(long)]
        strict: bool,
    },
    /// Train the toy encoder and write per-step metrics.
    #[command(after_help = train_defaults())]
    TrainToy {
        /// JSON run document; omitted fields take the defaults below.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "metrics.csv")]
        metrics_out: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write train/test embeddings and labels of the trained query
        /// encoder into this directory.
        #[arg(long)]
        export_dir: Option<PathBuf>,
    },
    /// k-nearest-neighbor accuracy; prints the accuracy with 4 decimals.
    EvalKnn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        train_labels: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        test_labels: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Single-threaded timing of generation against a full training step.
    Bench {
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 100)]
        num_positives: usize,
        #[arg(long, default_value_t = 20)]
        prototypes: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// Queue capacity of the timed training step.
        #[arg(long, default_value_t = 4096)]
        queue: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn train_defaults() -> String {
    format!(
        "Config document defaults:\n{}",
        RunConfigDocument::default().to_json()
    )
}

fn sidecar(output: &Path, explicit: Option<PathBuf>, ext: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut name = output.as_os_str().to_owned();
        name.push(".");
        name.push(ext);
        PathBuf::from(name)
    })
}

fn run(cli: Cli) -> Result<u8, Error> {
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Cluster {
            input,
            k,
            tol,
            step,
            max_iters,
            seed,
            output,
            stats,
            strict,
        } => {
            let points = io::read_embeddings(&input)?;
            let cfg = KMeansConfig {
                k,
                tolerance: tol,
                step_size: step,
                max_iterations: max_iters,
                seed,
                execution,
                ..KMeansConfig::default()
            };
            let set = kmeans::fit(&points, &cfg)?;
            io::write_embeddings(&output, &set.prototypes)?;
            io::write_text(sidecar(&output, stats, "stats"), &io::cluster_stats_document(&set))?;
            println!(
                "k={} inertia={} iterations={} converged={}",
                set.len(),
                set.inertia,
                set.iterations_run,
                set.converged
            );
            if strict && !set.converged {
                eprintln!("error: k-means hit the iteration cap without converging");
                return Ok(EXIT_ALGORITHM);
            }
        }
        Command::Hallucinate {
            anchors,
            protos,
            queries,
            num_positives,
            lambda,
            filter,
            seed,
            output,
            index,
            report,
            strict,
        } => {
            let keys = io::read_embeddings(&anchors)?;
            let protos = io::read_embeddings(&protos)?;
            let queries = queries.map(io::read_embeddings).transpose()?;
            let cfg = HallucinationConfig {
                num_positives,
                lambda,
                filter,
                seed,
                execution,
                ..HallucinationConfig::default()
            };
            let batch = hallucinate_batch(&keys, queries.as_deref(), &protos, &cfg)?;
            let mut lines = String::new();
            let mut offset = 0;
            for (i, p) in batch.positives.iter().enumerate() {
                lines.push_str(&format!("{i} {offset} {}\n", p.len()));
                offset += p.len();
            }
            let flat: Vec<_> = batch.positives.into_iter().flatten().collect();
            if flat.is_empty() {
                // Keep the file's dim meaningful even with nothing retained.
                let rows: Vec<Vec<f32>> = Vec::new();
                io::write_embedding_rows(&output, protos[0].dim(), &rows)?;
            } else {
                io::write_embeddings(&output, &flat)?;
            }
            io::write_text(sidecar(&output, index, "index"), &lines)?;
            let doc = io::hallucination_report_document(&batch.report, keys.len());
            io::write_text(sidecar(&output, report, "report"), &doc)?;
            print!("{doc}");
            if strict && batch.report.skipped_degenerate > 0 {
                eprintln!(
                    "error: {} anchor/prototype pairs were degenerate",
                    batch.report.skipped_degenerate
                );
                return Ok(EXIT_ALGORITHM);
            }
        }
        Command::TrainToy {
            config,
            metrics_out,
            seed,
            export_dir,
        } => {
            let mut doc = match config {
                Some(path) => io::read_config(path)?,
                None => RunConfigDocument::default(),
            };
            if let Some(seed) = seed {
                doc.train.seed = seed;
            }
            doc.train.execution = execution;
            let run = toy::train(&doc.train, &doc.data)?;
            io::write_metrics_csv(&metrics_out, &run.metrics)?;
            let acc = toy::evaluate_knn(&run.query_encoder, &doc.data, 1, execution)?;
            println!("knn_accuracy={acc:.4}");
            if let Some(dir) = export_dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                for (name, split) in [
                    ("train", toy::train_split(&doc.data)?),
                    ("test", toy::test_split(&doc.data)?),
                ] {
                    let z = toy::embed(&run.query_encoder, &split.inputs)?;
                    io::write_embeddings(dir.join(format!("{name}.emb")), &z)?;
                    let labels: Vec<i64> = split.labels.iter().map(|&l| l as i64).collect();
                    io::write_labels(dir.join(format!("{name}.labels")), &labels)?;
                }
            }
        }
        Command::EvalKnn {
            train,
            train_labels,
            test,
            test_labels,
            k,
        } => {
            let train = io::read_embeddings(&train)?;
            let test = io::read_embeddings(&test)?;
            let train_labels = io::read_labels_for(&train_labels, train.len())?;
            let test_labels = io::read_labels_for(&test_labels, test.len())?;
            let acc = knn_eval_with(&train, &train_labels, &test, &test_labels, k, execution)?;
            println!("{acc:.4}");
        }
        Command::Bench {
            dim,
            batch,
            num_positives,
            prototypes,
            repeats,
            queue,
            seed,
        } => {
            let r = measure_overhead(&OverheadConfig {
                dim,
                batch,
                num_positives,
                prototypes,
                repeats,
                queue,
                seed,
            })?;
            println!(
                "hallucinate_batch median_ms={:.3} p95_ms={:.3}",
                r.hallucinate.median_ms, r.hallucinate.p95_ms
            );
            println!(
                "train_step median_ms={:.3} p95_ms={:.3}",
                r.train_step.median_ms, r.train_step.p95_ms
            );
            println!("ratio={:.4}", r.ratio);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
