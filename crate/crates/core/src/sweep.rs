//! Ablation sweeps: one dataset file per masking or irrelevance ratio, with
//! a manifest of content digests.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::{build_irrelevance_set, mix_datasets, MixConfig, DEFAULT_MIN_CANDIDATES};
use crate::dataset::{save_dataset, sha256_hex, to_jsonl, write_atomic, write_jsonl};
use crate::error::{Error, Result};
use crate::masking::{mask_dataset, MappingRecord, MaskConfig};
use crate::model::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    MaskRatio,
    IrrelevanceRatio,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::MaskRatio => "mask_ratio",
            SweepVariable::IrrelevanceRatio => "irrelevance_ratio",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Mixture size for irrelevance sweeps; defaults to the base size.
    pub total: Option<usize>,
    pub min_candidates: usize,
    /// Template for masking sweeps; its `ratio` and `seed` are overridden.
    pub mask: MaskConfig,
}

impl SweepConfig {
    pub fn new(variable: SweepVariable, values: Vec<f64>, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        SweepConfig {
            variable,
            values,
            seed,
            output_dir: output_dir.into(),
            total: None,
            min_candidates: DEFAULT_MIN_CANDIDATES,
            mask: MaskConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.values {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidConfig(format!("sweep value {v} outside [0, 1]")));
            }
            if !seen.insert(v.to_bits()) {
                return Err(Error::InvalidConfig(format!("sweep value {v} repeated")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub file: String,
    pub sha256: String,
    pub instances: usize,
    /// Masked instances, or irrelevance instances in the mixture.
    pub transformed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub variable: SweepVariable,
    pub seed: u64,
    pub base_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irrelevance_sha256: Option<String>,
    pub entries: Vec<SweepEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn file_stem(variable: SweepVariable, value: f64) -> String {
    format!("{}-{value}", variable.as_str())
}

/// Emits one dataset per sweep value into `cfg.output_dir` plus
/// `manifest.json`. For irrelevance sweeps without an `irr` source the
/// irrelevance pool is built from `base` with the sweep seed.
pub fn sweep_datasets(cfg: &SweepConfig, base: &[Instance], irr: Option<&[Instance]>) -> Result<SweepManifest> {
    cfg.validate()?;
    let mut manifest = SweepManifest {
        variable: cfg.variable,
        seed: cfg.seed,
        base_sha256: sha256_hex(to_jsonl(base).as_bytes()),
        irrelevance_sha256: irr.map(|i| sha256_hex(to_jsonl(i).as_bytes())),
        entries: Vec::new(),
    };

    let built_irr;
    let irr_source: &[Instance] = match (cfg.variable, irr) {
        (SweepVariable::IrrelevanceRatio, None) if !cfg.values.is_empty() => {
            let total = cfg.total.unwrap_or(base.len());
            let needed = cfg
                .values
                .iter()
                .map(|&r| MixConfig::new(r, total, cfg.seed).split().0)
                .max()
                .unwrap_or(0);
            built_irr = build_irrelevance_set(base, needed, cfg.seed, cfg.min_candidates)?;
            manifest.irrelevance_sha256 = Some(sha256_hex(to_jsonl(&built_irr).as_bytes()));
            &built_irr
        }
        (_, Some(i)) => i,
        _ => &[],
    };

    for &value in &cfg.values {
        let stem = file_stem(cfg.variable, value);
        let file = format!("{stem}.jsonl");
        let path = cfg.output_dir.join(&file);
        let (data, transformed) = match cfg.variable {
            SweepVariable::MaskRatio => {
                let mcfg = MaskConfig {
                    ratio: value,
                    seed: cfg.seed,
                    ..cfg.mask.clone()
                };
                let masked = mask_dataset(base, &mcfg)?;
                let mappings: Vec<MappingRecord> = masked
                    .iter()
                    .filter_map(|(inst, m)| {
                        m.clone().map(|mapping| MappingRecord {
                            id: inst.id.clone(),
                            mapping,
                        })
                    })
                    .collect();
                write_jsonl(&mappings, &sidecar_path(&path))?;
                let n = mappings.len();
                (masked.into_iter().map(|(i, _)| i).collect::<Vec<_>>(), n)
            }
            SweepVariable::IrrelevanceRatio => {
                let mix = MixConfig {
                    distractor_pool_min: cfg.min_candidates,
                    ..MixConfig::new(value, cfg.total.unwrap_or(base.len()), cfg.seed)
                };
                let n_irr = mix.split().0;
                (mix_datasets(base, irr_source, &mix)?, n_irr)
            }
        };
        let text = to_jsonl(&data);
        write_atomic(&path, text.as_bytes())?;
        manifest.entries.push(SweepEntry {
            value,
            file,
            sha256: sha256_hex(text.as_bytes()),
            instances: data.len(),
            transformed,
        });
    }
    let manifest_text = format!("{}\n", crate::prompting::to_pretty(&manifest));
    write_atomic(&cfg.output_dir.join(MANIFEST_FILE), manifest_text.as_bytes())?;
    Ok(manifest)
}

/// `data.jsonl` -> `data.mappings.jsonl`.
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    dataset.with_file_name(format!("{stem}.mappings.jsonl"))
}

/// Writes masked instances and their sidecar mapping file.
pub fn save_masked(masked: &[(Instance, Option<crate::masking::MaskMapping>)], path: &Path) -> Result<()> {
    let insts: Vec<Instance> = masked.iter().map(|(i, _)| i.clone()).collect();
    save_dataset(&insts, path)?;
    let mappings: Vec<MappingRecord> = masked
        .iter()
        .filter_map(|(i, m)| {
            m.clone().map(|mapping| MappingRecord {
                id: i.id.clone(),
                mapping,
            })
        })
        .collect();
    write_jsonl(&mappings, &sidecar_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn empty_values_give_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SweepConfig::new(SweepVariable::IrrelevanceRatio, vec![], 0, dir.path());
        let m = sweep_datasets(&cfg, &synth::dataset(10, 0), None).unwrap();
        assert!(m.entries.is_empty());
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        for values in [vec![1.2], vec![0.5, 0.5]] {
            let cfg = SweepConfig::new(SweepVariable::MaskRatio, values, 0, dir.path());
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("/a/b/m.jsonl")), Path::new("/a/b/m.mappings.jsonl"));
    }

    #[test]
    fn irrelevance_sweep_split() {
        let dir = tempfile::tempdir().unwrap();
        let base = synth::dataset(400, 2);
        let mut cfg = SweepConfig::new(SweepVariable::IrrelevanceRatio, vec![0.1, 0.3], 5, dir.path());
        cfg.total = Some(100);
        let m = sweep_datasets(&cfg, &base, None).unwrap();
        assert_eq!(m.entries[0].transformed, 10);
        assert_eq!(m.entries[1].transformed, 30);
        assert!(m.entries.iter().all(|e| e.instances == 100));
        assert!(m.irrelevance_sha256.is_some());
    }
}
