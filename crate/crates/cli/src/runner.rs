//! Experiment orchestration: artifact building (corpus, frozen LM, static
//! embeddings), base and few-shot tuning, evaluation with digest-lineage
//! and domain-leakage guards, and the experiment grids.
//!
//! Grid conditions are independent and run on a small thread pool; every
//! condition derives all randomness from its own (seed, name) substreams,
//! so parallel and sequential execution produce identical reports.

use crate::clock::SystemClock;
use crate::error::CliError;
use crate::report::{confusion_from_records, EvalRecord, ExperimentReport, GridRow};
use canform_core::clock::Clock;
use canform_core::data::{
    sample_few_shot, split, Dataset, FewShotMode, FewShotSpec, LabeledUtterance, SplitSpec,
};
use canform_core::embed::{train_skipgram, EmbeddingTable, SkipGramParams};
use canform_core::encoder::{EncoderConfig, SoftPromptState};
use canform_core::lm::{pretrain, LanguageModel, LmConfig, PretrainLog, PretrainParams};
use canform_core::resolver::{build_index, resolve};
use canform_core::rng::Rng;
use canform_core::schema::CanonicalSchema;
use canform_core::synth::{generate_pretrain_corpus, generate_synthetic, SchemaMode, SyntheticSpec};
use canform_core::tensor::Tensor;
use canform_core::tokenizer::Tokenizer;
use canform_core::tuner::{
    continue_ptune, predict_canonical, ptune, Stage, TrainingLog, TuneConfig,
    DEFAULT_MAX_NEW_TOKENS,
};
use serde_json::json;
use std::collections::VecDeque;
use std::sync::Mutex;

/// The frozen model stack an evaluation or tuning run needs: LM +
/// tokenizer + the digest the LM is pinned to + the embedding table.
/// Built either from pretraining or from a loaded checkpoint.
pub struct ModelBundle {
    pub lm: LanguageModel<f32>,
    pub tokenizer: Tokenizer,
    pub lm_digest: u64,
    pub embedding: EmbeddingTable,
}

/// Everything the experiments need that depends only on (world, seed):
/// the labeled dataset, the pretrained-and-frozen LM, and the static
/// embedding table trained on the same corpus.
pub struct Artifacts {
    pub world: SyntheticSpec,
    pub dataset: Dataset,
    pub schema: CanonicalSchema,
    pub corpus: Vec<String>,
    pub bundle: ModelBundle,
    pub pretrain_log: PretrainLog,
}

#[derive(Clone, Copy, Debug)]
pub struct PretrainSettings {
    pub utterance_lines_per_intent: usize,
    pub echo_lines: usize,
    pub params: PretrainParams,
    pub skipgram: SkipGramParams,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        PretrainSettings {
            utterance_lines_per_intent: 16,
            echo_lines: 1400,
            params: PretrainParams {
                epochs: 40,
                batch_size: 16,
                learning_rate: 3e-3,
                holdout_ratio: 0.08,
            },
            skipgram: SkipGramParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TuneSettings {
    pub n_virtual: usize,
    pub seed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub adam_beta2: f64,
    pub patience: Option<usize>,
    pub val_fraction: f64,
    pub fewshot_epochs: usize,
    pub fewshot_batch: usize,
    pub fewshot_learning_rate: f64,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings {
            n_virtual: 32,
            seed_dim: 32,
            hidden_dim: 64,
            epochs: 60,
            batch_size: 8,
            learning_rate: 8e-3,
            final_lr_fraction: 0.25,
            adam_beta2: 0.999,
            patience: Some(8),
            val_fraction: 0.1,
            fewshot_epochs: 20,
            fewshot_batch: 4,
            fewshot_learning_rate: 4e-3,
        }
    }
}

impl TuneSettings {
    pub fn encoder_config(&self, model_dim: usize) -> EncoderConfig {
        EncoderConfig {
            n_virtual_tokens: self.n_virtual,
            seed_dim: self.seed_dim,
            hidden_dim: self.hidden_dim,
            model_dim,
            lstm_layers: 2,
        }
    }
}

/// Builds corpus, pretrains and freezes the LM, trains the embedding
/// table. Deterministic per (world, seed).
pub fn build_artifacts(
    world: SyntheticSpec,
    seed: u64,
    settings: &PretrainSettings,
    clock: &dyn Clock,
) -> Result<Artifacts, CliError> {
    let corpus = generate_pretrain_corpus(
        &world,
        seed,
        settings.utterance_lines_per_intent,
        settings.echo_lines,
    )?;
    let (dataset, schema) = generate_synthetic(&world, seed)?;
    let trained = pretrain::<f32>(&corpus, LmConfig::toy, settings.params, seed, clock)?;
    let mut lm = trained.model;
    let digest = lm.freeze();
    let embedding = train_skipgram(&corpus, settings.skipgram, seed)?;
    Ok(Artifacts {
        world,
        dataset,
        schema,
        corpus,
        bundle: ModelBundle {
            lm,
            tokenizer: trained.tokenizer,
            lm_digest: digest.0,
            embedding,
        },
        pretrain_log: trained.log,
    })
}

/// A tuned prompt: exported virtual tokens plus the digest of the LM they
/// were tuned against (lineage guard for evaluation).
#[derive(Clone)]
pub struct TunedPrompt {
    pub encoder: SoftPromptState<f32>,
    pub virtual_tokens: Tensor<f32>,
    pub lm_digest: u64,
    pub log: TrainingLog,
}

/// Base-stage p-tuning with a stratified validation split carved from the
/// training set.
pub fn base_tune(
    bundle: &ModelBundle,
    schema: &CanonicalSchema,
    train_set: &[LabeledUtterance],
    seed: u64,
    settings: &TuneSettings,
    clock: &dyn Clock,
) -> Result<TunedPrompt, CliError> {
    let (train, val) = split(
        train_set,
        &SplitSpec::InDomain {
            train_ratio: 1.0 - settings.val_fraction,
            seed: Rng::new(seed).substream("val_split").next_u64(),
        },
    )?;
    let mut encoder = SoftPromptState::<f32>::init(
        settings.encoder_config(bundle.lm.config().model_dim),
        &mut Rng::new(seed),
    );
    let cfg = TuneConfig {
        stage: Stage::Base,
        epochs: settings.epochs,
        batch_size: settings.batch_size,
        learning_rate: settings.learning_rate,
        final_lr_fraction: settings.final_lr_fraction,
        adam_beta2: settings.adam_beta2,
        seed,
        patience: settings.patience,
    };
    let log = ptune(
        &bundle.lm,
        &mut encoder,
        &train,
        &val,
        schema,
        &bundle.tokenizer,
        &cfg,
        clock,
    )?;
    let virtual_tokens = encoder.export_virtual_tokens();
    Ok(TunedPrompt {
        encoder,
        virtual_tokens,
        lm_digest: bundle.lm_digest,
        log,
    })
}

/// Few-shot second stage on k target-domain samples, fresh optimizer.
pub fn fewshot_tune(
    bundle: &ModelBundle,
    schema: &CanonicalSchema,
    base: &TunedPrompt,
    samples: &[LabeledUtterance],
    seed: u64,
    settings: &TuneSettings,
    clock: &dyn Clock,
) -> Result<TunedPrompt, CliError> {
    let mut encoder = base.encoder.clone();
    let cfg = TuneConfig {
        stage: Stage::FewShot,
        epochs: settings.fewshot_epochs,
        batch_size: settings.fewshot_batch,
        learning_rate: settings.fewshot_learning_rate,
        final_lr_fraction: 1.0,
        adam_beta2: settings.adam_beta2,
        seed,
        patience: None,
    };
    let log = continue_ptune(
        &bundle.lm,
        &mut encoder,
        samples,
        schema,
        &bundle.tokenizer,
        &cfg,
        clock,
    )?;
    let virtual_tokens = encoder.export_virtual_tokens();
    Ok(TunedPrompt {
        encoder,
        virtual_tokens,
        lm_digest: bundle.lm_digest,
        log,
    })
}

/// Generates and resolves every test utterance. Fails on an empty test
/// set and on any digest-lineage mismatch.
pub fn evaluate(
    bundle: &ModelBundle,
    schema: &CanonicalSchema,
    prompt: &TunedPrompt,
    test: &[LabeledUtterance],
    name: &str,
    config_echo: serde_json::Value,
    seed: u64,
    clock: &dyn Clock,
) -> Result<ExperimentReport, CliError> {
    if test.is_empty() {
        return Err(CliError::validation(
            "evaluation on an empty test set is undefined",
        ));
    }
    if prompt.lm_digest != bundle.lm.weight_digest().0 {
        return Err(CliError::invariant(format!(
            "tuned prompt was trained against LM digest {:016x} but the supplied model digests to {:016x}",
            prompt.lm_digest,
            bundle.lm.weight_digest().0
        )));
    }
    let t0 = clock.now_ms();
    let index = build_index(schema, &bundle.embedding)?;
    let mut records = Vec::with_capacity(test.len());
    for ex in test {
        let generated = predict_canonical(
            &bundle.lm,
            &prompt.virtual_tokens,
            &ex.text,
            &bundle.tokenizer,
            DEFAULT_MAX_NEW_TOKENS,
        )?;
        // an empty generation has no embedding; score it as a miss
        let (resolved_intent, similarity, margin) = if generated.trim().is_empty() {
            (String::new(), 0.0, 0.0)
        } else {
            let r = resolve(&generated, schema, &index, &bundle.embedding)?;
            (r.predicted_intent, r.similarity, r.margin)
        };
        let correct = resolved_intent == ex.intent;
        records.push(EvalRecord {
            utterance: ex.text.clone(),
            gold_intent: ex.intent.clone(),
            generated,
            resolved_intent,
            similarity,
            margin,
            correct,
        });
    }
    let n_correct = records.iter().filter(|r| r.correct).count();
    let confusion = confusion_from_records(&records);
    Ok(ExperimentReport {
        name: name.to_string(),
        config: config_echo,
        seed,
        accuracy: n_correct as f64 / records.len() as f64,
        n_correct,
        n_total: records.len(),
        per_example: records,
        confusion,
        wall_ms: clock.now_ms() - t0,
    })
}

fn assert_no_leakage(
    train: &[LabeledUtterance],
    held_out: &[String],
) -> Result<(), CliError> {
    for u in train {
        if held_out.iter().any(|d| d == &u.domain) {
            return Err(CliError::invariant(format!(
                "held-out domain {:?} leaked into the training set",
                u.domain
            )));
        }
    }
    Ok(())
}

/// P-tune on every non-held-out domain, evaluate zero-shot on all
/// utterances of the held-out domains.
pub fn run_zero_shot(
    bundle: &ModelBundle,
    dataset: &[LabeledUtterance],
    schema: &CanonicalSchema,
    held_out: &[String],
    seed: u64,
    settings: &TuneSettings,
    clock: &dyn Clock,
) -> Result<(ExperimentReport, TunedPrompt), CliError> {
    let (train, test) = split(
        dataset,
        &SplitSpec::HeldOutDomain {
            held_out_domains: held_out.to_vec(),
        },
    )?;
    assert_no_leakage(&train, held_out)?;
    let prompt = base_tune(bundle, schema, &train, seed, settings, clock)?;
    let report = evaluate(
        bundle,
        schema,
        &prompt,
        &test,
        &format!("zero_shot[{}]", held_out.join("+")),
        json!({ "held_out": held_out, "train_size": train.len() }),
        seed,
        clock,
    )?;
    Ok((report, prompt))
}

/// One held-out few-shot condition set: a deterministic adapt/eval split
/// of the held-out data, the zero-shot baseline on that eval set, and one
/// adapted report per k.
pub struct FewShotSeedOutcome {
    pub seed: u64,
    pub zero_shot_on_eval: ExperimentReport,
    pub zero_shot_full: ExperimentReport,
    pub per_k: Vec<(usize, ExperimentReport)>,
    pub prompt: TunedPrompt,
}

#[allow(clippy::too_many_arguments)]
pub fn run_few_shot_for_seed(
    bundle: &ModelBundle,
    dataset: &[LabeledUtterance],
    schema: &CanonicalSchema,
    held_out: &[String],
    ks: &[usize],
    seed: u64,
    adapt_ratio: f64,
    settings: &TuneSettings,
    clock: &dyn Clock,
) -> Result<FewShotSeedOutcome, CliError> {
    if ks.iter().any(|&k| k == 0) {
        return Err(CliError::validation("few-shot grid must not contain k=0"));
    }
    let (zero_shot_full, base) =
        run_zero_shot(bundle, dataset, schema, held_out, seed, settings, clock)?;
    let (_, target_pool) = split(
        dataset,
        &SplitSpec::HeldOutDomain {
            held_out_domains: held_out.to_vec(),
        },
    )?;
    // adapt/eval partition of the target domain, stratified by intent
    let (adapt, eval_set) = split(
        &target_pool,
        &SplitSpec::InDomain {
            train_ratio: adapt_ratio,
            seed: Rng::new(seed).substream("fewshot/adapt_split").next_u64(),
        },
    )?;
    let zero_shot_on_eval = evaluate(
        bundle,
        schema,
        &base,
        &eval_set,
        &format!("zero_shot_eval[{}]", held_out.join("+")),
        json!({ "held_out": held_out, "eval_size": eval_set.len() }),
        seed,
        clock,
    )?;
    let mut per_k = Vec::new();
    for &k in ks {
        let sample = sample_few_shot(
            &adapt,
            &FewShotSpec {
                k,
                mode: FewShotMode::TotalStratified,
                seed: Rng::new(seed).substream("fewshot/sample").next_u64(),
            },
        )?;
        let adapted =
            fewshot_tune(bundle, schema, &base, &sample.subset, seed, settings, clock)?;
        let report = evaluate(
            bundle,
            schema,
            &adapted,
            &eval_set,
            &format!("few_shot[{}][k={k}]", held_out.join("+")),
            json!({
                "held_out": held_out,
                "k": k,
                "sampled": sample.subset.len(),
                "clamped": sample.clamped,
            }),
            seed,
            clock,
        )?;
        per_k.push((k, report));
    }
    Ok(FewShotSeedOutcome {
        seed,
        zero_shot_on_eval,
        zero_shot_full,
        per_k,
        prompt: base,
    })
}

/// Per-intent-k sample-efficiency sweep on the in-domain split.
pub fn run_sample_efficiency_cell(
    bundle: &ModelBundle,
    dataset: &[LabeledUtterance],
    schema: &CanonicalSchema,
    k_per_intent: usize,
    seed: u64,
    train_ratio: f64,
    settings: &TuneSettings,
    clock: &dyn Clock,
) -> Result<GridRow, CliError> {
    let (train, test) = split(
        dataset,
        &SplitSpec::InDomain {
            train_ratio,
            seed: Rng::new(seed).substream("sample_eff/split").next_u64(),
        },
    )?;
    let sample = sample_few_shot(
        &train,
        &FewShotSpec {
            k: k_per_intent,
            mode: FewShotMode::PerIntent,
            seed: Rng::new(seed).substream("sample_eff/sample").next_u64(),
        },
    )?;
    let prompt = base_tune(bundle, schema, &sample.subset, seed, settings, clock)?;
    let report = evaluate(
        bundle,
        schema,
        &prompt,
        &test,
        &format!("sample_efficiency[k={k_per_intent}]"),
        json!({ "k_per_intent": k_per_intent, "train_size": sample.subset.len() }),
        seed,
        clock,
    )?;
    Ok(GridRow {
        condition: "in_domain_sample_efficiency".to_string(),
        k: k_per_intent,
        seed,
        train_size: sample.subset.len(),
        accuracy: report.accuracy,
    })
}

/// Runs independent jobs on a bounded thread pool, preserving job order
/// in the results.
pub fn run_parallel<'a, T: Send>(
    jobs: Vec<Box<dyn FnOnce() -> Result<T, CliError> + Send + 'a>>,
) -> Result<Vec<T>, CliError> {
    let n = jobs.len();
    let threads = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(n.max(1));
    if threads <= 1 {
        let mut out = Vec::with_capacity(n);
        for job in jobs {
            out.push(job()?);
        }
        return Ok(out);
    }
    type JobBox<'b, T> = Box<dyn FnOnce() -> Result<T, CliError> + Send + 'b>;
    let queue: Mutex<VecDeque<(usize, JobBox<'a, T>)>> =
        Mutex::new(jobs.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<Result<T, CliError>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((i, job)) = job else { break };
                let r = job();
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("job completed"))
        .collect()
}

/// The full experiment suite at one world scale: in-domain, zero-shot and
/// few-shot on both holdouts, the phrasing ablation, and the
/// sample-efficiency sweep. This is what `canform sweep` runs and what
/// the acceptance criteria are asserted against.
pub struct SuiteSettings {
    pub seeds: Vec<u64>,
    pub fewshot_ks: Vec<usize>,
    pub sample_efficiency_ks: Vec<usize>,
    pub adjacent_holdout: Vec<String>,
    pub isolated_holdout: Vec<String>,
    pub in_domain_train_ratio: f64,
    pub adapt_ratio: f64,
    pub pretrain: PretrainSettings,
    pub tune: TuneSettings,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            seeds: vec![17, 18, 19],
            fewshot_ks: vec![10, 50],
            sample_efficiency_ks: vec![10, 20, 30],
            adjacent_holdout: vec!["bus".to_string()],
            isolated_holdout: vec!["iot".to_string()],
            in_domain_train_ratio: 0.8,
            adapt_ratio: 0.5,
            pretrain: PretrainSettings::default(),
            tune: TuneSettings::default(),
        }
    }
}

pub struct SuiteResults {
    pub in_domain: ExperimentReport,
    pub adjacent_fewshot: Vec<FewShotSeedOutcome>,
    pub isolated_fewshot: Vec<FewShotSeedOutcome>,
    pub ablation_zero_shot: Vec<ExperimentReport>,
    pub sample_efficiency: Vec<GridRow>,
    pub lint_clean_warnings: usize,
    pub ablation_spurious_flagged: bool,
}

pub fn run_suite(
    art: &Artifacts,
    ablation_schema: &CanonicalSchema,
    settings: &SuiteSettings,
) -> Result<SuiteResults, CliError> {
    use canform_core::schema::{lint_schema, LintConfig, LintWarning};

    let seed0 = *settings.seeds.first().expect("at least one seed");

    enum Job {
        InDomain(ExperimentReport),
        Adjacent(FewShotSeedOutcome),
        Isolated(FewShotSeedOutcome),
        Ablation(ExperimentReport),
        SampleEff(GridRow),
    }

    let mut jobs: Vec<Box<dyn FnOnce() -> Result<Job, CliError> + Send + '_>> = Vec::new();

    {
        let art = &*art;
        let settings_tune = settings.tune;
        let ratio = settings.in_domain_train_ratio;
        jobs.push(Box::new(move || {
            let clock = SystemClock::new();
            let (train, test) = split(
                &art.dataset,
                &SplitSpec::InDomain {
                    train_ratio: ratio,
                    seed: Rng::new(seed0).substream("in_domain/split").next_u64(),
                },
            )?;
            let prompt = base_tune(&art.bundle, &art.schema, &train, seed0, &settings_tune, &clock)?;
            let report = evaluate(
                &art.bundle,
                &art.schema,
                &prompt,
                &test,
                "in_domain",
                json!({ "train_ratio": ratio, "train_size": train.len() }),
                seed0,
                &clock,
            )?;
            Ok(Job::InDomain(report))
        }));
    }

    for &seed in &settings.seeds {
        let art = &*art;
        let tune = settings.tune;
        let ks = settings.fewshot_ks.clone();
        let holdout = settings.adjacent_holdout.clone();
        let adapt_ratio = settings.adapt_ratio;
        jobs.push(Box::new(move || {
            let clock = SystemClock::new();
            run_few_shot_for_seed(
                &art.bundle,
                &art.dataset,
                &art.schema,
                &holdout,
                &ks,
                seed,
                adapt_ratio,
                &tune,
                &clock,
            )
            .map(Job::Adjacent)
        }));
        let art2 = &*art;
        let tune2 = settings.tune;
        let ks2 = settings.fewshot_ks.clone();
        let holdout2 = settings.isolated_holdout.clone();
        jobs.push(Box::new(move || {
            let clock = SystemClock::new();
            run_few_shot_for_seed(
                &art2.bundle,
                &art2.dataset,
                &art2.schema,
                &holdout2,
                &ks2,
                seed,
                adapt_ratio,
                &tune2,
                &clock,
            )
            .map(Job::Isolated)
        }));
        let art3 = &*art;
        let tune3 = settings.tune;
        let holdout3 = settings.adjacent_holdout.clone();
        let abl = ablation_schema.clone();
        jobs.push(Box::new(move || {
            let clock = SystemClock::new();
            let (report, _) = run_zero_shot(
                &art3.bundle,
                &art3.dataset,
                &abl,
                &holdout3,
                seed,
                &tune3,
                &clock,
            )?;
            Ok(Job::Ablation(report))
        }));
        for &k in &settings.sample_efficiency_ks {
            let art4 = &*art;
            let tune4 = settings.tune;
            let ratio = settings.in_domain_train_ratio;
            jobs.push(Box::new(move || {
                let clock = SystemClock::new();
                run_sample_efficiency_cell(
                    &art4.bundle,
                    &art4.dataset,
                    &art4.schema,
                    k,
                    seed,
                    ratio,
                    &tune4,
                    &clock,
                )
                .map(Job::SampleEff)
            }));
        }
    }

    let outcomes = run_parallel(jobs)?;

    let mut in_domain = None;
    let mut adjacent = Vec::new();
    let mut isolated = Vec::new();
    let mut ablation = Vec::new();
    let mut sample_eff = Vec::new();
    for o in outcomes {
        match o {
            Job::InDomain(r) => in_domain = Some(r),
            Job::Adjacent(r) => adjacent.push(r),
            Job::Isolated(r) => isolated.push(r),
            Job::Ablation(r) => ablation.push(r),
            Job::SampleEff(r) => sample_eff.push(r),
        }
    }

    let clean_warnings = lint_schema(&art.schema, &LintConfig::default());
    let ablation_warnings = lint_schema(ablation_schema, &LintConfig::default());
    let flagged = ablation_warnings.iter().any(|w| {
        matches!(w, LintWarning::SpuriousToken { token, .. } if token == "tickets")
    });

    Ok(SuiteResults {
        in_domain: in_domain.expect("in-domain job ran"),
        adjacent_fewshot: adjacent,
        isolated_fewshot: isolated,
        ablation_zero_shot: ablation,
        sample_efficiency: sample_eff,
        lint_clean_warnings: clean_warnings.len(),
        ablation_spurious_flagged: flagged,
    })
}

/// Builds the paired clean/ablation schemas for the default world. The
/// dataset (utterance side) is identical in both modes.
pub fn world_pair(
    world: &SyntheticSpec,
    seed: u64,
) -> Result<(CanonicalSchema, CanonicalSchema), CliError> {
    let mut clean = world.clone();
    clean.mode = SchemaMode::Clean;
    let mut ablation = world.clone();
    ablation.mode = SchemaMode::Ablation;
    let (_, clean_schema) = generate_synthetic(&clean, seed)?;
    let (_, ablation_schema) = generate_synthetic(&ablation, seed)?;
    Ok((clean_schema, ablation_schema))
}
