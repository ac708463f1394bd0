// scratch diagnostics; removed before release
use canform_core::clock::NullClock;
use canform_core::data::{split, LabeledUtterance, SplitSpec};
use canform_core::embed::{train_skipgram, EmbeddingTable, SkipGramParams};
use canform_core::encoder::{EncoderConfig, SoftPromptState};
use canform_core::lm::{pretrain, LanguageModel, LmConfig, Pretrained, PretrainParams};
use canform_core::resolver::{build_index, resolve};
use canform_core::rng::Rng;
use canform_core::schema::CanonicalSchema;
use canform_core::synth::{
    default_world, generate_pretrain_corpus_styled, generate_synthetic, is_stopword, EchoStyle,
};
use canform_core::tokenizer::Tokenizer;
use canform_core::tuner::{answer_targets, assemble, predict_canonical, ptune, Stage, TuneConfig};

/// Resolver robustness on gold-derived queries: every content-word subset
/// of each canonical should resolve back to its own intent.
fn resolver_quality(schema: &CanonicalSchema, table: &EmbeddingTable) -> f64 {
    let index = build_index(schema, table).unwrap();
    let mut total = 0;
    let mut ok = 0;
    for e in schema.entries() {
        let content: Vec<&str> = e
            .canonical
            .split_whitespace()
            .filter(|w| !is_stopword(w))
            .collect();
        let mut queries: Vec<String> = vec![e.canonical.clone(), content.join(" ")];
        if content.len() >= 2 {
            for skip in 0..content.len() {
                let sub: Vec<&str> = content
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, w)| *w)
                    .collect();
                queries.push(sub.join(" "));
            }
        }
        for q in queries {
            if q.trim().is_empty() {
                continue;
            }
            total += 1;
            let r = resolve(&q, schema, &index, table).unwrap();
            if r.predicted_intent == e.intent {
                ok += 1;
            } else {
                println!("    miss: {:?} -> {} (gold {})", q, r.predicted_intent, e.intent);
            }
        }
    }
    ok as f64 / total as f64
}

fn accuracy(
    model: &LanguageModel<f32>,
    vt: &canform_core::tensor::Tensor<f32>,
    tok: &Tokenizer,
    schema: &CanonicalSchema,
    table: &EmbeddingTable,
    test: &[LabeledUtterance],
    dump: usize,
) -> f64 {
    let index = build_index(schema, table).unwrap();
    let mut correct = 0usize;
    for (i, ex) in test.iter().enumerate() {
        let gen = predict_canonical(model, vt, &ex.text, tok, 12).unwrap();
        let (ok, resolved) = if gen.trim().is_empty() {
            (false, String::from("-"))
        } else {
            let r = resolve(&gen, schema, &index, table).unwrap();
            (r.predicted_intent == ex.intent, r.predicted_intent)
        };
        if i < dump && !ok {
            println!("    [XX] {:?} -> {:?} => {} (gold {})", ex.text, gen, resolved, ex.intent);
        }
        if ok {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

fn main() {
    let t0 = std::time::Instant::now();
    let world = default_world();
    let style = match std::env::var("ECHO").as_deref() {
        Ok("subset") => EchoStyle::OrderedSubset,
        Ok("unordered") => EchoStyle::AnchoredUnordered,
        _ => EchoStyle::FullContent,
    };
    let echo_n: usize = std::env::var("ECHO_N").ok().and_then(|v| v.parse().ok()).unwrap_or(600);
    let drills: usize = std::env::var("DRILLS").ok().and_then(|v| v.parse().ok()).unwrap_or(700);
    let corpus = generate_pretrain_corpus_styled(&world, 17, 16, echo_n, drills, style).unwrap();
    // echo-only holdout CE to isolate copy quality is printed by pretrain's holdout when drills dominate
    println!("echo style {style:?} x{echo_n}");
    let (data, schema) = generate_synthetic(&world, 17).unwrap();

    // resolver quality scan over embedding hyperparameters
    for (label, p) in [
        ("default (sub=1e-3, ep=12)", SkipGramParams::default()),
        (
            "no-subsample",
            SkipGramParams {
                subsample: 0.0,
                ..SkipGramParams::default()
            },
        ),
        (
            "sub=3e-3, ep=20",
            SkipGramParams {
                subsample: 3e-3,
                epochs: 20,
                ..SkipGramParams::default()
            },
        ),
    ] {
        let table = train_skipgram(&corpus, p, 17).unwrap();
        let q = resolver_quality(&schema, &table);
        println!("embed {label}: gold-subset retrieval {q:.3} [{:.0?}]", t0.elapsed());
    }

    let table = train_skipgram(&corpus, SkipGramParams::default(), 17).unwrap();

    let pre_epochs: usize = std::env::var("PRE_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(24);
    let tune_lr: f64 = std::env::var("TUNE_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(5e-3);
    let tune_epochs: usize = std::env::var("TUNE_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(24);
    let n_virtual: usize = std::env::var("NVIRT").ok().and_then(|v| v.parse().ok()).unwrap_or(16);
    let params = PretrainParams {
        epochs: pre_epochs,
        batch_size: 16,
        learning_rate: 3e-3,
        holdout_ratio: 0.08,
    };
    let Pretrained {
        mut model,
        tokenizer,
        log,
    } = pretrain::<f32>(&corpus, LmConfig::toy, params, 17, &NullClock).unwrap();
    println!(
        "pretrain({pre_epochs}) holdout last: {:.2} [{:.0?}]",
        log.holdout_loss.last().unwrap(),
        t0.elapsed()
    );
    model.freeze();

    let (train_all, test) = split(
        &data,
        &SplitSpec::InDomain {
            train_ratio: 0.8,
            seed: 17,
        },
    )
    .unwrap();
    let (train, val) = split(
        &train_all,
        &SplitSpec::InDomain {
            train_ratio: 0.9,
            seed: 18,
        },
    )
    .unwrap();

    let _ = (tune_lr, n_virtual, tune_epochs);
    for (lr, beta2, epochs, batch) in [
        (8e-3f64, 0.999f64, 30usize, 8usize),
    ] {
        let mut enc_cfg = EncoderConfig::toy(model.config().model_dim);
        enc_cfg.n_virtual_tokens = 32;
        let mut encoder = SoftPromptState::<f32>::init(enc_cfg, &mut Rng::new(17));
        let cfg = TuneConfig {
            epochs,
            batch_size: batch,
            learning_rate: lr,
            final_lr_fraction: 1.0,
            adam_beta2: beta2,
            seed: 17,
            patience: None,
            stage: Stage::Base,
        };
        let log = ptune(
            &model, &mut encoder, &train, &val, &schema, &tokenizer, &cfg, &NullClock,
        )
        .unwrap();
        let best_val = log.epochs.iter().filter_map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        let vt = encoder.export_virtual_tokens();
        let index = build_index(&schema, &table).unwrap();
        use std::collections::BTreeMap;
        let mut per_intent: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut fails: BTreeMap<String, usize> = BTreeMap::new();
        for ex in &test {
            let gen = predict_canonical(&model, &vt, &ex.text, &tokenizer, 12).unwrap();
            let resolved = if gen.trim().is_empty() {
                String::from("-")
            } else {
                resolve(&gen, &schema, &index, &table).unwrap().predicted_intent
            };
            let e = per_intent.entry(ex.intent.clone()).or_insert((0, 0));
            e.1 += 1;
            if resolved == ex.intent {
                e.0 += 1;
            } else {
                *fails
                    .entry(format!("{} -> {:?} => {}", ex.intent, gen, resolved))
                    .or_insert(0) += 1;
            }
        }
        let total_ok: usize = per_intent.values().map(|v| v.0).sum();
        let total: usize = per_intent.values().map(|v| v.1).sum();

        // teacher-forced argmax diagnostics: how often is the gold token
        // top-1 at every answer position, and what would resolve if we
        // emitted per-position argmaxes under forced context?
        let mut forced_exact = 0usize;
        let mut forced_resolved_ok = 0usize;
        for ex in test.iter().step_by(2) {
            let a = assemble(&ex, &schema, &tokenizer, 32, 64).unwrap();
            let mut g = canform_core::graph::Graph::new();
            let wired = model.wire(&mut g, false);
            let pid = g.constant(vt.clone());
            let layout = model
                .batched_logits(&mut g, &wired, Some(pid), &[a.token_ids.clone()])
                .unwrap();
            let (targets, mask) = answer_targets(&layout, &[&a]);
            let logits = g.value(layout.logits);
            let mut all_ok = true;
            let mut forced_tokens: Vec<u32> = Vec::new();
            for (r, (&t, &m)) in targets.iter().zip(&mask).enumerate() {
                if !m {
                    continue;
                }
                let row = logits.row(r);
                let mut best = 0usize;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                if best as u32 != t {
                    all_ok = false;
                }
                forced_tokens.push(best as u32);
            }
            if all_ok {
                forced_exact += 1;
            }
            let forced_text = tokenizer.detokenize(&forced_tokens);
            if !forced_text.trim().is_empty() {
                let r = resolve(&forced_text, &schema, &index, &table).unwrap();
                if r.predicted_intent == ex.intent {
                    forced_resolved_ok += 1;
                }
            }
        }
        let nhalf = test.iter().step_by(2).count();
        println!(
            "lr={lr} beta2={beta2} ep={epochs} b={batch}: best_val={best_val:.3} acc={:.3} forced_exact={:.3} forced_resolve={:.3} [{:.0?}]",
            total_ok as f64 / total as f64,
            forced_exact as f64 / nhalf as f64,
            forced_resolved_ok as f64 / nhalf as f64,
            t0.elapsed()
        );
        let mut fv: Vec<(usize, String)> = fails.into_iter().map(|(k, v)| (v, k)).collect();
        fv.sort_by(|a, b| b.0.cmp(&a.0));
        for (count, pattern) in fv.iter().take(10) {
            println!("  x{count}  {pattern}");
        }
    }
}