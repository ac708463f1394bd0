//! Dataset model and the split/sampling protocols: held-out-domain
//! partitions, stratified in-domain splits, and few-shot sampling in
//! total-k (stratified or uniform) and per-intent modes.
//!
//! Everything here is a pure function of (dataset, spec, seed).

use crate::rng::Rng;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledUtterance {
    pub text: String,
    pub intent: String,
    pub domain: String,
}

pub type Dataset = Vec<LabeledUtterance>;

#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    InDomain { train_ratio: f64, seed: u64 },
    HeldOutDomain { held_out_domains: Vec<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FewShotMode {
    /// k total, round-robin across intents.
    TotalStratified,
    /// k total, uniform draw without replacement.
    TotalUniform,
    /// min(k, available) per intent.
    PerIntent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FewShotSpec {
    pub k: usize,
    pub mode: FewShotMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataError {
    EmptyDataset,
    BadRatio,
    ZeroK,
    HeldOutDomainAbsent(String),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::EmptyDataset => write!(f, "dataset is empty"),
            DataError::BadRatio => write!(f, "train_ratio must be in (0,1)"),
            DataError::ZeroK => write!(f, "k must be at least 1"),
            DataError::HeldOutDomainAbsent(d) => {
                write!(f, "held-out domain {d:?} not present in dataset")
            }
        }
    }
}

/// Intents in first-occurrence order, for deterministic stratification.
pub fn intents_in_order(dataset: &[LabeledUtterance]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for u in dataset {
        if !seen.iter().any(|s| s == &u.intent) {
            seen.push(u.intent.clone());
        }
    }
    seen
}

pub fn domains_in_order(dataset: &[LabeledUtterance]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for u in dataset {
        if !seen.iter().any(|s| s == &u.domain) {
            seen.push(u.domain.clone());
        }
    }
    seen
}

pub fn split(
    dataset: &[LabeledUtterance],
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset), DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    match spec {
        SplitSpec::HeldOutDomain { held_out_domains } => {
            for d in held_out_domains {
                if !dataset.iter().any(|u| &u.domain == d) {
                    return Err(DataError::HeldOutDomainAbsent(d.clone()));
                }
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for u in dataset {
                if held_out_domains.iter().any(|d| d == &u.domain) {
                    test.push(u.clone());
                } else {
                    train.push(u.clone());
                }
            }
            Ok((train, test))
        }
        SplitSpec::InDomain { train_ratio, seed } => {
            if !(*train_ratio > 0.0 && *train_ratio < 1.0) {
                return Err(DataError::BadRatio);
            }
            let root = Rng::new(*seed);
            let mut train = Vec::new();
            let mut test = Vec::new();
            for intent in intents_in_order(dataset) {
                let mut idx: Vec<usize> = dataset
                    .iter()
                    .enumerate()
                    .filter(|(_, u)| u.intent == intent)
                    .map(|(i, _)| i)
                    .collect();
                root.substream("split/in_domain")
                    .substream(&intent)
                    .shuffle(&mut idx);
                let n_train = libm::round(idx.len() as f64 * train_ratio) as usize;
                let n_train = n_train.clamp(1, idx.len().saturating_sub(1).max(1));
                for (j, &i) in idx.iter().enumerate() {
                    if j < n_train {
                        train.push(dataset[i].clone());
                    } else {
                        test.push(dataset[i].clone());
                    }
                }
            }
            Ok((train, test))
        }
    }
}

pub struct SampleOutcome {
    pub subset: Dataset,
    /// True when k exceeded the available pool and was clamped.
    pub clamped: bool,
}

pub fn sample_few_shot(
    dataset: &[LabeledUtterance],
    spec: &FewShotSpec,
) -> Result<SampleOutcome, DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if spec.k == 0 {
        return Err(DataError::ZeroK);
    }
    let root = Rng::new(spec.seed);
    match spec.mode {
        FewShotMode::TotalUniform => {
            let clamped = spec.k > dataset.len();
            let idx = root
                .substream("fewshot/uniform")
                .sample_indices(dataset.len(), spec.k);
            Ok(SampleOutcome {
                subset: idx.iter().map(|&i| dataset[i].clone()).collect(),
                clamped,
            })
        }
        FewShotMode::TotalStratified | FewShotMode::PerIntent => {
            let intents = intents_in_order(dataset);
            // per-intent pools, each shuffled by an intent-keyed substream
            let mut pools: Vec<Vec<usize>> = intents
                .iter()
                .map(|intent| {
                    let mut idx: Vec<usize> = dataset
                        .iter()
                        .enumerate()
                        .filter(|(_, u)| &u.intent == intent)
                        .map(|(i, _)| i)
                        .collect();
                    root.substream("fewshot/stratified")
                        .substream(intent)
                        .shuffle(&mut idx);
                    idx
                })
                .collect();
            let mut picked: Vec<usize> = Vec::new();
            let mut clamped = false;
            match spec.mode {
                FewShotMode::TotalStratified => {
                    let want = spec.k.min(dataset.len());
                    clamped = spec.k > dataset.len();
                    'outer: loop {
                        let mut any = false;
                        for pool in pools.iter_mut() {
                            if let Some(i) = pool.pop() {
                                picked.push(i);
                                any = true;
                                if picked.len() == want {
                                    break 'outer;
                                }
                            }
                        }
                        if !any {
                            break;
                        }
                    }
                }
                FewShotMode::PerIntent => {
                    for pool in pools.iter_mut() {
                        if pool.len() < spec.k {
                            clamped = true;
                        }
                        for _ in 0..spec.k.min(pool.len()) {
                            picked.push(pool.pop().expect("pool size checked"));
                        }
                    }
                }
                FewShotMode::TotalUniform => unreachable!(),
            }
            Ok(SampleOutcome {
                subset: picked.iter().map(|&i| dataset[i].clone()).collect(),
                clamped,
            })
        }
    }
}
