use canform_cli::checkpoint::{self, Checkpoint};
use canform_cli::clock::SystemClock;
use canform_cli::error::CliError;
use canform_cli::formats;
use canform_cli::report::{save_grid_csv, save_report, GridRow};
use canform_cli::runner::{
    self, base_tune, evaluate, fewshot_tune, run_suite, ModelBundle, PretrainSettings,
    SuiteSettings, TunedPrompt, TuneSettings,
};
use canform_cli::sgd::ingest_sgd;
use canform_core::data::{
    sample_few_shot, split, FewShotMode, FewShotSpec, SplitSpec,
};
use canform_core::embed::train_skipgram;
use canform_core::lm::{pretrain, LmConfig, PretrainParams};
use canform_core::resolver::{build_index, resolve};
use canform_core::rng::Rng;
use canform_core::schema::{lint_schema, LintConfig};
use canform_core::synth::{default_world, generate_pretrain_corpus, SchemaMode};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "canform",
    about = "Canonical-form intent classification via p-tuning a frozen toy language model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world: schema, dataset, pretraining corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// World spec JSON; the built-in six-domain world when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Schema phrasing mode: clean or ablation.
        #[arg(long, default_value = "clean")]
        mode: String,
    },
    /// Pretrain the language model and the static embedding table.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Base-stage p-tuning against a frozen pretrained checkpoint.
    Ptune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Few-shot second stage on k target-domain samples.
    Fewshot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Evaluate a tuned checkpoint on a dataset subset.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate against this LM checkpoint instead of the tuned one
        /// (digest lineage is enforced).
        #[arg(long)]
        lm_checkpoint: Option<PathBuf>,
    },
    /// Resolve a generated canonical form against a checkpoint's schema.
    Resolve {
        #[arg(long)]
        checkpoint: PathBuf,
        text: String,
    },
    /// Lint a schema file for phrasing pitfalls.
    LintSchema {
        #[arg(long)]
        config: PathBuf,
    },
    /// Gradient-check the composite p-tuning loss on a tiny config.
    GradCheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Ingest schema-guided-dialogue JSON files into the native formats.
    IngestSgd {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full experiment suite and write all reports.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::from)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PretrainConfig {
    corpus: PathBuf,
    #[serde(default = "default_pre_epochs")]
    epochs: usize,
    #[serde(default = "default_pre_batch")]
    batch_size: usize,
    #[serde(default = "default_pre_lr")]
    learning_rate: f64,
    #[serde(default = "default_holdout")]
    holdout_ratio: f64,
}

fn default_pre_epochs() -> usize {
    PretrainSettings::default().params.epochs
}
fn default_pre_batch() -> usize {
    PretrainSettings::default().params.batch_size
}
fn default_pre_lr() -> f64 {
    PretrainSettings::default().params.learning_rate
}
fn default_holdout() -> f64 {
    PretrainSettings::default().params.holdout_ratio
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PtuneConfig {
    dataset: PathBuf,
    schema: PathBuf,
    /// Hold these domains out of training entirely.
    #[serde(default)]
    held_out_domains: Vec<String>,
    /// Otherwise take the train side of a stratified in-domain split.
    #[serde(default)]
    train_ratio: Option<f64>,
    #[serde(default = "default_tune_epochs")]
    epochs: usize,
    #[serde(default = "default_tune_batch")]
    batch_size: usize,
    #[serde(default = "default_tune_lr")]
    learning_rate: f64,
    #[serde(default = "default_patience")]
    patience: Option<usize>,
    #[serde(default = "default_n_virtual")]
    n_virtual_tokens: usize,
}

fn default_tune_epochs() -> usize {
    TuneSettings::default().epochs
}
fn default_tune_batch() -> usize {
    TuneSettings::default().batch_size
}
fn default_tune_lr() -> f64 {
    TuneSettings::default().learning_rate
}
fn default_patience() -> Option<usize> {
    TuneSettings::default().patience
}
fn default_n_virtual() -> usize {
    TuneSettings::default().n_virtual
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FewshotConfig {
    dataset: PathBuf,
    /// Target domains the k samples come from.
    domains: Vec<String>,
    k: usize,
    #[serde(default = "default_fs_mode")]
    mode: String,
    #[serde(default = "default_adapt_ratio")]
    adapt_ratio: f64,
    #[serde(default = "default_fs_epochs")]
    epochs: usize,
    #[serde(default = "default_fs_batch")]
    batch_size: usize,
    #[serde(default = "default_fs_lr")]
    learning_rate: f64,
}

fn default_fs_mode() -> String {
    "total_stratified".to_string()
}
fn default_adapt_ratio() -> f64 {
    0.5
}
fn default_fs_epochs() -> usize {
    TuneSettings::default().fewshot_epochs
}
fn default_fs_batch() -> usize {
    TuneSettings::default().fewshot_batch
}
fn default_fs_lr() -> f64 {
    TuneSettings::default().fewshot_learning_rate
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfig {
    dataset: PathBuf,
    /// Evaluate only utterances from these domains; whole set if empty.
    #[serde(default)]
    domains: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    #[serde(default)]
    world: Option<PathBuf>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    fewshot_ks: Option<Vec<usize>>,
    #[serde(default)]
    sample_efficiency_ks: Option<Vec<usize>>,
    #[serde(default)]
    adjacent_holdout: Option<Vec<String>>,
    #[serde(default)]
    isolated_holdout: Option<Vec<String>>,
}

fn bundle_from_checkpoint(ckpt: &Checkpoint) -> Result<ModelBundle, CliError> {
    let embedding = ckpt.embedding.clone().ok_or_else(|| {
        CliError::validation("checkpoint has no embedding table; run pretrain first")
    })?;
    Ok(ModelBundle {
        lm: ckpt.lm.clone(),
        tokenizer: ckpt.tokenizer.clone(),
        lm_digest: ckpt.lm_digest,
        embedding,
    })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData {
            out,
            seed,
            config,
            mode,
        } => {
            ensure_dir(&out)?;
            let mut world = match config {
                Some(p) => formats::load_world(&p)?,
                None => default_world(),
            };
            world.mode = match mode.as_str() {
                "clean" => SchemaMode::Clean,
                "ablation" => SchemaMode::Ablation,
                other => {
                    return Err(CliError::validation(format!(
                        "mode must be clean or ablation, got {other:?}"
                    )))
                }
            };
            let (dataset, schema) = canform_core::synth::generate_synthetic(&world, seed)?;
            let pre = PretrainSettings::default();
            let corpus = generate_pretrain_corpus(
                &world,
                seed,
                pre.utterance_lines_per_intent,
                pre.echo_lines,
            )?;
            formats::save_world(&out.join("world.json"), &world)?;
            formats::save_schema(&out.join("schema.json"), &schema)?;
            formats::save_dataset(&out.join("dataset.jsonl"), &dataset)?;
            formats::save_corpus(&out.join("corpus.txt"), &corpus)?;
            let warnings = lint_schema(&schema, &LintConfig::default());
            println!(
                "wrote {} utterances, {} intents, {} corpus lines to {}",
                dataset.len(),
                schema.len(),
                corpus.len(),
                out.display()
            );
            for w in &warnings {
                println!("lint: {w}");
            }
            Ok(())
        }

        Command::Pretrain { config, out, seed } => {
            ensure_dir(&out)?;
            let cfg: PretrainConfig = read_json(&config)?;
            let corpus = formats::load_corpus(&cfg.corpus)?;
            let params = PretrainParams {
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                learning_rate: cfg.learning_rate,
                holdout_ratio: cfg.holdout_ratio,
            };
            let clock = SystemClock::new();
            let trained = pretrain::<f32>(&corpus, LmConfig::toy, params, seed, &clock)?;
            let mut lm = trained.model;
            let digest = lm.freeze();
            let embedding =
                train_skipgram(&corpus, PretrainSettings::default().skipgram, seed)?;
            let ckpt = Checkpoint {
                lm,
                tokenizer: trained.tokenizer,
                lm_digest: digest.0,
                encoder: None,
                virtual_tokens: None,
                embedding: Some(embedding),
                schema: None,
            };
            checkpoint::save(&out.join("lm.ckpt"), &ckpt)?;
            let mut csv = String::from("epoch,train_loss,holdout_loss,wall_ms\n");
            for (i, ((t, h), w)) in trained
                .log
                .train_loss
                .iter()
                .zip(&trained.log.holdout_loss)
                .zip(&trained.log.wall_ms)
                .enumerate()
            {
                csv.push_str(&format!("{i},{t:.6},{h:.6},{w}\n"));
            }
            fs::write(out.join("pretrain_log.csv"), csv)?;
            println!(
                "pretrained: vocab={} holdout_loss={:.3} digest={:016x} -> {}",
                ckpt.tokenizer.vocab_size(),
                trained.log.holdout_loss.last().unwrap_or(&f64::NAN),
                digest.0,
                out.join("lm.ckpt").display()
            );
            Ok(())
        }

        Command::Ptune {
            config,
            checkpoint: ckpt_path,
            out,
            seed,
        } => {
            ensure_dir(&out)?;
            let cfg: PtuneConfig = read_json(&config)?;
            let ckpt = checkpoint::load(&ckpt_path)?;
            let bundle = bundle_from_checkpoint(&ckpt)?;
            let dataset = formats::load_dataset(&cfg.dataset)?;
            let schema = formats::load_schema(&cfg.schema)?;
            let train = if !cfg.held_out_domains.is_empty() {
                let (train, _) = split(
                    &dataset,
                    &SplitSpec::HeldOutDomain {
                        held_out_domains: cfg.held_out_domains.clone(),
                    },
                )?;
                train
            } else if let Some(ratio) = cfg.train_ratio {
                let (train, _) = split(
                    &dataset,
                    &SplitSpec::InDomain {
                        train_ratio: ratio,
                        seed: Rng::new(seed).substream("in_domain/split").next_u64(),
                    },
                )?;
                train
            } else {
                dataset.clone()
            };
            let settings = TuneSettings {
                n_virtual: cfg.n_virtual_tokens,
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                learning_rate: cfg.learning_rate,
                patience: cfg.patience,
                ..TuneSettings::default()
            };
            let clock = SystemClock::new();
            let prompt = base_tune(&bundle, &schema, &train, seed, &settings, &clock)?;
            let tuned = Checkpoint {
                lm: bundle.lm,
                tokenizer: bundle.tokenizer,
                lm_digest: bundle.lm_digest,
                encoder: Some(prompt.encoder.clone()),
                virtual_tokens: Some(prompt.virtual_tokens.clone()),
                embedding: Some(bundle.embedding),
                schema: Some(schema),
            };
            checkpoint::save(&out.join("tuned.ckpt"), &tuned)?;
            formats::save_training_log_csv(&out.join("tune_log.csv"), &prompt.log)?;
            let best = prompt
                .log
                .epochs
                .iter()
                .filter_map(|e| e.val_loss)
                .fold(f64::INFINITY, f64::min);
            println!(
                "tuned on {} examples: best val loss {best:.3} (epoch {}) -> {}",
                train.len(),
                prompt.log.best_epoch,
                out.join("tuned.ckpt").display()
            );
            Ok(())
        }

        Command::Fewshot {
            config,
            checkpoint: ckpt_path,
            out,
            seed,
        } => {
            ensure_dir(&out)?;
            let cfg: FewshotConfig = read_json(&config)?;
            if cfg.k == 0 {
                return Err(CliError::validation("k must be at least 1"));
            }
            let ckpt = checkpoint::load(&ckpt_path)?;
            let bundle = bundle_from_checkpoint(&ckpt)?;
            let schema = ckpt.schema.clone().ok_or_else(|| {
                CliError::validation("checkpoint has no schema; run ptune first")
            })?;
            let base_encoder = ckpt.encoder.clone().ok_or_else(|| {
                CliError::validation("few-shot stage requires a base-stage checkpoint")
            })?;
            let base = TunedPrompt {
                virtual_tokens: base_encoder.export_virtual_tokens(),
                encoder: base_encoder,
                lm_digest: ckpt.lm_digest,
                log: Default::default(),
            };
            let dataset = formats::load_dataset(&cfg.dataset)?;
            let (_, target_pool) = split(
                &dataset,
                &SplitSpec::HeldOutDomain {
                    held_out_domains: cfg.domains.clone(),
                },
            )?;
            let (adapt, eval_set) = split(
                &target_pool,
                &SplitSpec::InDomain {
                    train_ratio: cfg.adapt_ratio,
                    seed: Rng::new(seed).substream("fewshot/adapt_split").next_u64(),
                },
            )?;
            let mode = match cfg.mode.as_str() {
                "total_stratified" => FewShotMode::TotalStratified,
                "total_uniform" => FewShotMode::TotalUniform,
                "per_intent" => FewShotMode::PerIntent,
                other => {
                    return Err(CliError::validation(format!(
                        "unknown few-shot mode {other:?}"
                    )))
                }
            };
            let sample = sample_few_shot(
                &adapt,
                &FewShotSpec {
                    k: cfg.k,
                    mode,
                    seed: Rng::new(seed).substream("fewshot/sample").next_u64(),
                },
            )?;
            if sample.clamped {
                eprintln!(
                    "warning: k={} exceeds the adaptation pool; clamped to {}",
                    cfg.k,
                    sample.subset.len()
                );
            }
            let settings = TuneSettings {
                fewshot_epochs: cfg.epochs,
                fewshot_batch: cfg.batch_size,
                fewshot_learning_rate: cfg.learning_rate,
                ..TuneSettings::default()
            };
            let clock = SystemClock::new();
            let adapted =
                fewshot_tune(&bundle, &schema, &base, &sample.subset, seed, &settings, &clock)?;
            let report = evaluate(
                &bundle,
                &schema,
                &adapted,
                &eval_set,
                &format!("few_shot[{}][k={}]", cfg.domains.join("+"), cfg.k),
                json!({ "domains": cfg.domains, "k": cfg.k, "sampled": sample.subset.len() }),
                seed,
                &clock,
            )?;
            let adapted_ckpt = Checkpoint {
                lm: bundle.lm,
                tokenizer: bundle.tokenizer,
                lm_digest: bundle.lm_digest,
                encoder: Some(adapted.encoder.clone()),
                virtual_tokens: Some(adapted.virtual_tokens.clone()),
                embedding: Some(bundle.embedding),
                schema: Some(schema),
            };
            checkpoint::save(&out.join("adapted.ckpt"), &adapted_ckpt)?;
            formats::save_training_log_csv(&out.join("fewshot_log.csv"), &adapted.log)?;
            save_report(&out.join("report.json"), &report)?;
            println!(
                "few-shot k={}: accuracy {:.3} on {} held-out eval examples",
                cfg.k, report.accuracy, report.n_total
            );
            Ok(())
        }

        Command::Eval {
            config,
            checkpoint: ckpt_path,
            out,
            lm_checkpoint,
        } => {
            ensure_dir(&out)?;
            let cfg: EvalConfig = read_json(&config)?;
            let ckpt = checkpoint::load(&ckpt_path)?;
            let bundle = match &lm_checkpoint {
                Some(p) => bundle_from_checkpoint(&checkpoint::load(p)?)?,
                None => bundle_from_checkpoint(&ckpt)?,
            };
            let schema = ckpt
                .schema
                .clone()
                .ok_or_else(|| CliError::validation("checkpoint has no schema"))?;
            let vt = ckpt.virtual_tokens.clone().ok_or_else(|| {
                CliError::validation("checkpoint has no virtual tokens; run ptune first")
            })?;
            let prompt = TunedPrompt {
                encoder: ckpt
                    .encoder
                    .clone()
                    .ok_or_else(|| CliError::validation("checkpoint has no encoder"))?,
                virtual_tokens: vt,
                lm_digest: ckpt.lm_digest,
                log: Default::default(),
            };
            let dataset = formats::load_dataset(&cfg.dataset)?;
            let test: Vec<_> = if cfg.domains.is_empty() {
                dataset
            } else {
                dataset
                    .into_iter()
                    .filter(|u| cfg.domains.iter().any(|d| d == &u.domain))
                    .collect()
            };
            let clock = SystemClock::new();
            let report = evaluate(
                &bundle,
                &schema,
                &prompt,
                &test,
                "eval",
                json!({ "domains": cfg.domains }),
                0,
                &clock,
            )?;
            save_report(&out.join("report.json"), &report)?;
            println!(
                "accuracy {:.3} ({} / {})",
                report.accuracy, report.n_correct, report.n_total
            );
            Ok(())
        }

        Command::Resolve {
            checkpoint: ckpt_path,
            text,
        } => {
            let ckpt = checkpoint::load(&ckpt_path)?;
            let schema = ckpt
                .schema
                .ok_or_else(|| CliError::validation("checkpoint has no schema"))?;
            let embedding = ckpt
                .embedding
                .ok_or_else(|| CliError::validation("checkpoint has no embedding table"))?;
            let index = build_index(&schema, &embedding)?;
            let r = resolve(&text, &schema, &index, &embedding)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "predicted_intent": r.predicted_intent,
                    "matched_canonical": r.matched_canonical,
                    "similarity": r.similarity,
                    "runner_up_similarity": r.runner_up_similarity,
                    "margin": r.margin,
                    "degenerate": r.degenerate,
                }))
                .expect("serializable")
            );
            Ok(())
        }

        Command::LintSchema { config } => {
            let schema = formats::load_schema(&config)?;
            let warnings = lint_schema(&schema, &LintConfig::default());
            if warnings.is_empty() {
                println!("schema is clean: no warnings");
            } else {
                for w in &warnings {
                    println!("warning: {w}");
                }
            }
            Ok(())
        }

        Command::GradCheck { seed } => {
            let err = canform_cli::checks::composite_grad_check(seed)?;
            println!("max relative error vs central differences: {err:.3e}");
            if err > 1e-4 {
                return Err(CliError::validation(format!(
                    "gradient check failed: {err:.3e} > 1e-4"
                )));
            }
            Ok(())
        }

        Command::IngestSgd { dir, out } => {
            ensure_dir(&out)?;
            let (dataset, skeleton) = ingest_sgd(&dir)?;
            formats::save_dataset(&out.join("dataset.jsonl"), &dataset)?;
            formats::save_schema_entries(&out.join("schema_skeleton.json"), &skeleton)?;
            println!(
                "ingested {} utterances across {} intents; canonical forms are blank in {}",
                dataset.len(),
                skeleton.len(),
                out.join("schema_skeleton.json").display()
            );
            Ok(())
        }

        Command::Sweep { config, out, seed } => {
            ensure_dir(&out)?;
            let cfg: SweepConfig = match config {
                Some(p) => read_json(&p)?,
                None => SweepConfig::default(),
            };
            let mut world = match &cfg.world {
                Some(p) => formats::load_world(p)?,
                None => default_world(),
            };
            world.mode = SchemaMode::Clean;
            let mut settings = SuiteSettings::default();
            if let Some(s) = cfg.seeds {
                if s.is_empty() {
                    return Err(CliError::validation("seeds must not be empty"));
                }
                settings.seeds = s;
            } else {
                settings.seeds = vec![seed, seed + 1, seed + 2];
            }
            if let Some(ks) = cfg.fewshot_ks {
                if ks.iter().any(|&k| k == 0) {
                    return Err(CliError::validation("few-shot grid must not contain k=0"));
                }
                settings.fewshot_ks = ks;
            }
            if let Some(ks) = cfg.sample_efficiency_ks {
                settings.sample_efficiency_ks = ks;
            }
            if let Some(h) = cfg.adjacent_holdout {
                settings.adjacent_holdout = h;
            }
            if let Some(h) = cfg.isolated_holdout {
                settings.isolated_holdout = h;
            }

            let clock = SystemClock::new();
            let seed0 = settings.seeds[0];
            eprintln!("building artifacts (corpus, pretrained LM, embeddings)...");
            let art = runner::build_artifacts(world, seed0, &settings.pretrain, &clock)?;
            let (_, ablation_schema) = runner::world_pair(&art.world, seed0)?;
            eprintln!(
                "pretrained LM: vocab={}, holdout loss {:.3}; running suite...",
                art.bundle.tokenizer.vocab_size(),
                art.pretrain_log.holdout_loss.last().unwrap_or(&f64::NAN)
            );
            let results = run_suite(&art, &ablation_schema, &settings)?;

            save_report(&out.join("in_domain.json"), &results.in_domain)?;
            let mut grid: Vec<GridRow> = Vec::new();
            grid.push(GridRow {
                condition: "in_domain".into(),
                k: 0,
                seed: seed0,
                train_size: 0,
                accuracy: results.in_domain.accuracy,
            });
            for (tag, outcomes) in [
                ("adjacent", &results.adjacent_fewshot),
                ("isolated", &results.isolated_fewshot),
            ] {
                for o in outcomes.iter() {
                    save_report(
                        &out.join(format!("zero_shot_{tag}_seed{}.json", o.seed)),
                        &o.zero_shot_full,
                    )?;
                    grid.push(GridRow {
                        condition: format!("zero_shot_{tag}"),
                        k: 0,
                        seed: o.seed,
                        train_size: 0,
                        accuracy: o.zero_shot_full.accuracy,
                    });
                    grid.push(GridRow {
                        condition: format!("zero_shot_eval_{tag}"),
                        k: 0,
                        seed: o.seed,
                        train_size: 0,
                        accuracy: o.zero_shot_on_eval.accuracy,
                    });
                    for (k, r) in &o.per_k {
                        save_report(
                            &out.join(format!("few_shot_{tag}_k{}_seed{}.json", k, o.seed)),
                            r,
                        )?;
                        grid.push(GridRow {
                            condition: format!("few_shot_{tag}"),
                            k: *k,
                            seed: o.seed,
                            train_size: *k,
                            accuracy: r.accuracy,
                        });
                    }
                }
            }
            for r in &results.ablation_zero_shot {
                save_report(&out.join(format!("ablation_zero_shot_seed{}.json", r.seed)), r)?;
                grid.push(GridRow {
                    condition: "ablation_zero_shot".into(),
                    k: 0,
                    seed: r.seed,
                    train_size: 0,
                    accuracy: r.accuracy,
                });
            }
            grid.extend(results.sample_efficiency.iter().cloned());
            save_grid_csv(&out.join("summary.csv"), &grid)?;

            println!("in-domain accuracy: {:.3}", results.in_domain.accuracy);
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            let zs_adj: Vec<f64> = results
                .adjacent_fewshot
                .iter()
                .map(|o| o.zero_shot_full.accuracy)
                .collect();
            let zs_iso: Vec<f64> = results
                .isolated_fewshot
                .iter()
                .map(|o| o.zero_shot_full.accuracy)
                .collect();
            let abl: Vec<f64> = results
                .ablation_zero_shot
                .iter()
                .map(|r| r.accuracy)
                .collect();
            println!("zero-shot adjacent (mean over seeds): {:.3}", mean(&zs_adj));
            println!("zero-shot isolated (mean over seeds): {:.3}", mean(&zs_iso));
            println!("zero-shot adjacent with ablation schema: {:.3}", mean(&abl));
            for k in &settings.fewshot_ks {
                let adj: Vec<f64> = results
                    .adjacent_fewshot
                    .iter()
                    .flat_map(|o| o.per_k.iter().filter(|(kk, _)| kk == k))
                    .map(|(_, r)| r.accuracy)
                    .collect();
                let iso: Vec<f64> = results
                    .isolated_fewshot
                    .iter()
                    .flat_map(|o| o.per_k.iter().filter(|(kk, _)| kk == k))
                    .map(|(_, r)| r.accuracy)
                    .collect();
                println!(
                    "few-shot k={k}: adjacent {:.3}, isolated {:.3}",
                    mean(&adj),
                    mean(&iso)
                );
            }
            println!("wrote reports and summary.csv to {}", out.display());
            Ok(())
        }
    }
}
