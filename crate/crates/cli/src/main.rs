//! `kws` — command-line front end for the keyword-spotting pipeline:
//! synthetic data, splits, training, indexing, evaluation and phonetics.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kws_core::encoder::{load_checkpoint, save_checkpoint, EncoderConfig};
use kws_core::knn::{build_index, build_pq_index, load_index, save_index, IndexFile, IndexKind};
use kws_core::phonetics::{
    build_similarity_matrix, encode, load_overrides, DistanceWeights, PhoneticAlgorithm,
};
use kws_core::pipeline::{
    classify_wav, embed_entries, evaluate, generate_synthetic_dataset, load_manifest,
    save_manifest, split_8_1_1, train, train_crossentropy_baseline, EvalReport, Predictor,
    TrainConfig,
};
use kws_core::sampler::StrategyMix;
use kws_core::triplet::Margin;

#[derive(Parser)]
#[command(name = "kws", version, about = "Triplet-loss keyword spotting pipeline")]
struct Cli {
    /// Seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Key-value config file overriding training defaults (one `key = value`
    /// per line; see the README for the key list).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory of background-noise WAV clips used for augmentation.
    #[arg(long, global = true)]
    noise_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tone-signature dataset.
    Synth {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a manifest 8:1:1 per word into train/val/test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the metric embedder with online triplet mining.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Directory audio paths are relative to (default: manifest's dir).
        #[arg(long)]
        base_dir: Option<PathBuf>,
        /// uniform | proportional | phonetic | u+p | u+ph | p+ph | u+p+ph
        #[arg(long, default_value = "uniform")]
        sampling: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Also write the training log here (always echoed to stdout).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the crossentropy baseline (same encoder plus a softmax head).
    TrainBaseline {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        base_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Build a kNN index over a manifest with an existing checkpoint.
    Index {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        base_dir: Option<PathBuf>,
        /// Product-quantization segments; 0 keeps the index exact.
        #[arg(long, default_value_t = 0)]
        segments: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a test manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// kNN index; omit to use the checkpoint's classifier head.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Vocabulary file (one word per line), required for head evaluation.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        base_dir: Option<PathBuf>,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
    /// Classify a single WAV clip against an index.
    Classify {
        wav: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
    /// Phonetic-similarity utilities.
    Phonetics {
        #[command(subcommand)]
        command: PhoneticsCommand,
    },
    /// Rewrite labels for N-word tasks: words outside the keep list become
    /// "unknown", words in the silence list become "silence".
    Relabel {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',')]
        keep: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        silence: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PhoneticsCommand {
    /// Print (or write) the pairwise phonetic-distance matrix as CSV.
    Matrix {
        /// Vocabulary file, one word per line.
        vocab: PathBuf,
        /// Tab-separated override file: word_a, word_b, distance.
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the four phonetic codes of a word.
    Encode { word: String },
    /// Print the n phonetically closest vocabulary words.
    Nearest {
        word: String,
        vocab: PathBuf,
        #[arg(short, default_value_t = 3)]
        n: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Overlay `key = value` lines from a config file onto the defaults.
/// `#` starts a comment; unknown keys are rejected.
fn apply_config(cfg: &mut TrainConfig, path: &Path) -> Result<(), Box<dyn Error>> {
    let text = fs::read_to_string(path)?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let fail = |e: &dyn std::fmt::Display| format!("config line {}: {key}: {e}", i + 1);
        match key {
            "preset" => {
                cfg.encoder = match value {
                    "res15" => EncoderConfig::res15_like(),
                    "res8" => EncoderConfig::res8_like(),
                    "res-small" => EncoderConfig::res_small(),
                    other => return Err(format!("unknown preset {other:?}").into()),
                }
            }
            "margin" => cfg.margin = Margin(value.parse().map_err(|e| fail(&e))?),
            "sampling" => cfg.sampling = StrategyMix::parse(value).map_err(|e| fail(&e))?,
            "p" => cfg.batch.p = value.parse().map_err(|e| fail(&e))?,
            "k" => cfg.batch.k = value.parse().map_err(|e| fail(&e))?,
            "epochs" => cfg.epochs = value.parse().map_err(|e| fail(&e))?,
            "eval_every_batches" => {
                cfg.eval_every_batches = value.parse().map_err(|e| fail(&e))?
            }
            "patience" => cfg.patience = value.parse().map_err(|e| fail(&e))?,
            "improvement_threshold" => {
                cfg.improvement_threshold = value.parse().map_err(|e| fail(&e))?
            }
            "use_augmentation" => cfg.use_augmentation = value.parse().map_err(|e| fail(&e))?,
            "max_shift_ms" => cfg.augment.max_shift_ms = value.parse().map_err(|e| fail(&e))?,
            "noise_prob" => cfg.augment.noise_prob = value.parse().map_err(|e| fail(&e))?,
            "noise_scale_max" => {
                cfg.augment.noise_scale_max = value.parse().map_err(|e| fail(&e))?
            }
            "lr_initial" => cfg.lr_initial = value.parse().map_err(|e| fail(&e))?,
            "lr_final" => cfg.lr_final = value.parse().map_err(|e| fail(&e))?,
            "knn_k" => cfg.knn_k = value.parse().map_err(|e| fail(&e))?,
            "baseline_batch" => cfg.baseline_batch = value.parse().map_err(|e| fail(&e))?,
            other => return Err(format!("config line {}: unknown key {other:?}", i + 1).into()),
        }
    }
    Ok(())
}

fn base_or_parent(base_dir: &Option<PathBuf>, manifest: &Path) -> PathBuf {
    base_dir.clone().unwrap_or_else(|| {
        manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    })
}

fn train_config(cli: &Cli) -> Result<TrainConfig, Box<dyn Error>> {
    let mut cfg = TrainConfig {
        seed: cli.seed,
        ..TrainConfig::default()
    };
    if let Some(path) = &cli.config {
        apply_config(&mut cfg, path)?;
    }
    Ok(cfg)
}

fn write_log(log: &[kws_core::pipeline::LogRecord], path: &Option<PathBuf>) -> std::io::Result<()> {
    let mut text = String::new();
    for r in log {
        println!("{r}");
        text.push_str(&r.to_string());
        text.push('\n');
    }
    if let Some(path) = path {
        fs::write(path, text)?;
    }
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vec<String>, Box<dyn Error>> {
    let words: Vec<String> = fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if words.is_empty() {
        return Err(format!("empty vocabulary file {}", path.display()).into());
    }
    Ok(words)
}

fn print_report(report: &EvalReport) {
    println!("accuracy={:.4} macro_f1={:.4}", report.accuracy, report.macro_f1);
    println!("confusion (rows=actual, cols=predicted):");
    print!("{:>12}", "");
    for w in &report.vocab {
        print!(" {w:>10}");
    }
    println!();
    for (i, row) in report.confusion.iter().enumerate() {
        print!("{:>12}", report.vocab[i]);
        for &n in row {
            print!(" {n:>10}");
        }
        println!();
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match &cli.command {
        Command::Synth {
            classes,
            per_class,
            out,
        } => {
            let entries = generate_synthetic_dataset(*classes, *per_class, cli.seed, out)?;
            println!(
                "wrote {} clips over {classes} classes to {}",
                entries.len(),
                out.display()
            );
        }
        Command::Split { manifest, out_dir } => {
            let entries = load_manifest(manifest)?;
            let split = split_8_1_1(&entries, cli.seed);
            fs::create_dir_all(out_dir)?;
            for (name, part) in [
                ("train", &split.train),
                ("val", &split.val),
                ("test", &split.test),
            ] {
                save_manifest(&out_dir.join(format!("{name}.jsonl")), part)?;
                println!("{name}: {} entries", part.len());
            }
        }
        Command::Train {
            train: train_path,
            val,
            base_dir,
            sampling,
            checkpoint,
            index,
            log,
        } => {
            let mut cfg = train_config(&cli)?;
            cfg.sampling = StrategyMix::parse(sampling)?;
            let train_set = load_manifest(train_path)?;
            let val_set = load_manifest(val)?;
            let base = base_or_parent(base_dir, train_path);
            let outcome = train(&cfg, &train_set, &val_set, &base, cli.noise_dir.as_deref())?;
            write_log(&outcome.log, log)?;
            save_checkpoint(checkpoint, &outcome.checkpoint)?;
            save_index(index, &outcome.index)?;
            println!(
                "saved checkpoint to {} and index to {}",
                checkpoint.display(),
                index.display()
            );
        }
        Command::TrainBaseline {
            train: train_path,
            val,
            base_dir,
            checkpoint,
            log,
        } => {
            let cfg = train_config(&cli)?;
            let train_set = load_manifest(train_path)?;
            let val_set = load_manifest(val)?;
            let base = base_or_parent(base_dir, train_path);
            let outcome = train_crossentropy_baseline(
                &cfg,
                &train_set,
                &val_set,
                &base,
                cli.noise_dir.as_deref(),
            )?;
            write_log(&outcome.log, log)?;
            save_checkpoint(checkpoint, &outcome.checkpoint)?;
            println!("saved checkpoint to {}", checkpoint.display());
        }
        Command::Index {
            checkpoint,
            manifest,
            base_dir,
            segments,
            out,
        } => {
            let ckpt = load_checkpoint(checkpoint)?;
            let entries = load_manifest(manifest)?;
            let base = base_or_parent(base_dir, manifest);
            let (mut params, _) = ckpt.to_params()?;
            let vectors = embed_entries(&mut params, &ckpt.config, &entries, &base)?;
            let mut vocab: Vec<String> = entries.iter().map(|e| e.text.clone()).collect();
            vocab.sort();
            vocab.dedup();
            let labels = entries
                .iter()
                .map(|e| vocab.binary_search(&e.text).unwrap() as u32)
                .collect();
            let dim = ckpt.config.embedding_dim();
            let kind = if *segments == 0 {
                IndexKind::Exact(build_index(vectors, labels, dim)?)
            } else {
                IndexKind::Pq(build_pq_index(&vectors, labels, dim, *segments, 25, cli.seed)?)
            };
            save_index(out, &IndexFile { vocab, kind })?;
            println!("indexed {} entries to {}", entries.len(), out.display());
        }
        Command::Evaluate {
            checkpoint,
            index,
            vocab,
            manifest,
            base_dir,
            k,
        } => {
            let ckpt = load_checkpoint(checkpoint)?;
            let entries = load_manifest(manifest)?;
            let base = base_or_parent(base_dir, manifest);
            let report = match index {
                Some(path) => {
                    let file = load_index(path)?;
                    evaluate(&ckpt, &Predictor::Knn { index: &file, k: *k }, &entries, &base)?
                }
                None => {
                    let vocab_path = vocab
                        .as_ref()
                        .ok_or("head evaluation needs --vocab (no --index given)")?;
                    let words = load_vocab(vocab_path)?;
                    evaluate(&ckpt, &Predictor::Head { vocab: &words }, &entries, &base)?
                }
            };
            print_report(&report);
        }
        Command::Classify {
            wav,
            checkpoint,
            index,
            k,
        } => {
            let ckpt = load_checkpoint(checkpoint)?;
            let file = load_index(index)?;
            let (word, result) = classify_wav(&ckpt, &file, wav, *k)?;
            println!("{word}");
            for (id, d) in result.neighbor_ids.iter().zip(&result.distances) {
                println!("  neighbor {id}: distance {d:.6}");
            }
        }
        Command::Phonetics { command } => run_phonetics(command, cli.seed)?,
        Command::Relabel {
            manifest,
            keep,
            silence,
            out,
        } => {
            let mut entries = load_manifest(manifest)?;
            for e in &mut entries {
                if silence.contains(&e.text) {
                    e.text = "silence".into();
                } else if !keep.contains(&e.text) {
                    e.text = "unknown".into();
                }
            }
            save_manifest(out, &entries)?;
            println!("relabeled {} entries to {}", entries.len(), out.display());
        }
    }
    Ok(())
}

fn run_phonetics(command: &PhoneticsCommand, seed: u64) -> Result<(), Box<dyn Error>> {
    match command {
        PhoneticsCommand::Matrix {
            vocab,
            overrides,
            out,
        } => {
            let words = load_vocab(vocab)?;
            let pairs = match overrides {
                Some(path) => load_overrides(path)?,
                None => Vec::new(),
            };
            let matrix = build_similarity_matrix(&words, &DistanceWeights::default(), &pairs)?;
            let csv = matrix.to_csv();
            match out {
                Some(path) => fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        PhoneticsCommand::Encode { word } => {
            for algorithm in PhoneticAlgorithm::ALL {
                println!("{algorithm}: {}", encode(algorithm, word)?.code);
            }
        }
        PhoneticsCommand::Nearest { word, vocab, n } => {
            let words = load_vocab(vocab)?;
            let matrix = build_similarity_matrix(&words, &DistanceWeights::default(), &[])?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for neighbor in matrix.nearest_phonetic(word, *n, &mut rng)? {
                println!("{neighbor}");
            }
        }
    }
    Ok(())
}
