//! Irrelevance augmentation and ratio-controlled mixing.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FunctionSpec, Instance};
use crate::rng;

pub const DEFAULT_MIN_CANDIDATES: usize = 3;
pub const IRRELEVANCE_ID_SUFFIX: &str = "-irr";

/// Turns a relevant instance into an irrelevance one: every function the
/// gold calls name is dropped from the candidates and the label emptied.
/// Surviving candidates are kept; if fewer than `min_candidates` remain the
/// list is topped up with distractors drawn from `pool`.
pub fn make_irrelevant<R: Rng + ?Sized>(
    inst: &Instance,
    pool: &[FunctionSpec],
    rng: &mut R,
    min_candidates: usize,
) -> Result<Instance> {
    let removed: HashSet<&str> = inst.gold_calls.iter().map(|c| c.name.as_str()).collect();
    let mut candidates: Vec<FunctionSpec> = inst
        .candidates
        .iter()
        .filter(|f| !removed.contains(f.name.as_str()))
        .cloned()
        .collect();

    if candidates.len() < min_candidates {
        let needed = min_candidates - candidates.len();
        let mut taken: HashSet<String> = removed
            .iter()
            .map(|s| s.to_string())
            .chain(candidates.iter().map(|f| f.name.clone()))
            .collect();
        let drawn = draw_distractors(pool, &mut taken, needed, rng);
        if drawn.len() < needed {
            return Err(Error::InsufficientPool {
                id: inst.id.clone(),
                needed,
                available: drawn.len(),
            });
        }
        candidates.extend(drawn.into_iter().map(|i| pool[i].clone()));
    }

    Ok(Instance {
        id: inst.id.clone(),
        query: inst.query.clone(),
        candidates,
        gold_calls: Vec::new(),
    })
}

/// Picks up to `needed` pool indices whose names are not in `taken`.
/// Rejection sampling first, then an exhaustive scan so a small eligible
/// remainder is still found.
fn draw_distractors<R: Rng + ?Sized>(
    pool: &[FunctionSpec],
    taken: &mut HashSet<String>,
    needed: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut picked = Vec::with_capacity(needed);
    if pool.is_empty() {
        return picked;
    }
    let attempts = 16 * needed + 32;
    for _ in 0..attempts {
        if picked.len() == needed {
            return picked;
        }
        let i = rng.random_range(0..pool.len());
        if taken.insert(pool[i].name.clone()) {
            picked.push(i);
        }
    }
    let mut rest: Vec<usize> = (0..pool.len()).filter(|&i| !taken.contains(&pool[i].name)).collect();
    rest.shuffle(rng);
    for i in rest {
        if picked.len() == needed {
            break;
        }
        if taken.insert(pool[i].name.clone()) {
            picked.push(i);
        }
    }
    picked
}

/// Distinct candidate functions across a dataset, first occurrence wins.
pub fn candidate_pool(insts: &[Instance]) -> Vec<FunctionSpec> {
    let mut seen = HashSet::new();
    insts
        .iter()
        .flat_map(|i| i.candidates.iter())
        .filter(|f| seen.insert(f.name.as_str()))
        .cloned()
        .collect()
}

/// Samples `count` relevant instances without replacement and converts each
/// with [`make_irrelevant`], using the dataset-wide candidate pool. Output
/// keeps source order; ids gain the `-irr` suffix.
pub fn build_irrelevance_set(
    insts: &[Instance],
    count: usize,
    seed: u64,
    min_candidates: usize,
) -> Result<Vec<Instance>> {
    let eligible: Vec<usize> = (0..insts.len()).filter(|&i| !insts[i].gold_calls.is_empty()).collect();
    if count > eligible.len() {
        return Err(Error::CountTooLarge {
            requested: count,
            available: eligible.len(),
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let pool = candidate_pool(insts);
    let mut sel_rng = rng::salted_stream(seed, "irrelevance-selection");
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut sel_rng, eligible.len(), count)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    chosen.sort_unstable();

    chosen
        .into_iter()
        .map(|i| {
            let mut rng = rng::record_stream(seed, i);
            let mut out = make_irrelevant(&insts[i], &pool, &mut rng, min_candidates)?;
            out.id.push_str(IRRELEVANCE_ID_SUFFIX);
            Ok(out)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    pub irrelevance_ratio: f64,
    pub total: usize,
    pub seed: u64,
    pub distractor_pool_min: usize,
}

impl MixConfig {
    pub fn new(irrelevance_ratio: f64, total: usize, seed: u64) -> Self {
        MixConfig {
            irrelevance_ratio,
            total,
            seed,
            distractor_pool_min: DEFAULT_MIN_CANDIDATES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.irrelevance_ratio) {
            return Err(Error::InvalidConfig(format!(
                "irrelevance ratio {} outside [0, 1]",
                self.irrelevance_ratio
            )));
        }
        if self.total == 0 {
            return Err(Error::InvalidConfig("mixture total must be at least 1".into()));
        }
        if self.distractor_pool_min == 0 {
            return Err(Error::InvalidConfig("distractor_pool_min must be at least 1".into()));
        }
        Ok(())
    }

    /// `(irrelevance, base)` instance counts.
    pub fn split(&self) -> (usize, usize) {
        let irr = ((self.irrelevance_ratio * self.total as f64).round() as usize).min(self.total);
        (irr, self.total - irr)
    }
}

/// Draws `round(ratio * total)` instances from `irr` and the rest from
/// `base`, both without replacement, then shuffles the union.
pub fn mix_datasets(base: &[Instance], irr: &[Instance], cfg: &MixConfig) -> Result<Vec<Instance>> {
    cfg.validate()?;
    let (n_irr, n_base) = cfg.split();
    if n_irr > irr.len() {
        return Err(Error::InsufficientSource {
            source_name: "irrelevance",
            requested: n_irr,
            available: irr.len(),
        });
    }
    if n_base > base.len() {
        return Err(Error::InsufficientSource {
            source_name: "base",
            requested: n_base,
            available: base.len(),
        });
    }
    let mut base_rng = rng::salted_stream(cfg.seed, "mix-base");
    let mut irr_rng = rng::salted_stream(cfg.seed, "mix-irrelevance");
    let mut out: Vec<Instance> = rand::seq::index::sample(&mut base_rng, base.len(), n_base)
        .into_iter()
        .map(|i| base[i].clone())
        .chain(
            rand::seq::index::sample(&mut irr_rng, irr.len(), n_irr)
                .into_iter()
                .map(|i| irr[i].clone()),
        )
        .collect();

    let mut ids = HashSet::new();
    if let Some(dup) = out.iter().find(|i| !ids.insert(i.id.as_str())) {
        return Err(Error::DuplicateId(dup.id.clone()));
    }
    out.shuffle(&mut rng::salted_stream(cfg.seed, "mix-shuffle"));
    Ok(out)
}

/// Provenance written next to a mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixManifest {
    pub seed: u64,
    pub irrelevance_ratio: f64,
    pub total: usize,
    pub irrelevance_count: usize,
    pub base_count: usize,
    pub base_digest: String,
    pub irrelevance_digest: String,
    pub output_digest: String,
}
