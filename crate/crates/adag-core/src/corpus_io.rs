//! Corpus directory persistence.
//!
//! A corpus directory holds `manifest.json` plus one pair of matrix files
//! per domain, `x_<idx>.mat` and `agt_<idx>.mat`. The manifest records the
//! generation parameters, the shared structure or ordering, and a 64-bit
//! FNV-1a checksum of every domain file, so loads detect missing, swapped or
//! corrupted files. Round-trips are lossless at full f64 precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    connectivity_matrix, Corpus, CorpusSetting, DomainDataset, NoiseKind, TopologicalOrder,
    WeightedAdjacency,
};
use crate::error::{Error, Result};
use crate::matfile::{fnv1a64, mat_bytes, parse_mat_bytes};
use crate::matrix::Matrix;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    setting: String,
    d: usize,
    n: usize,
    m: usize,
    degree: usize,
    noise_kind: String,
    master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    shared_structure: Option<Vec<Vec<u8>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shared_order: Option<Vec<usize>>,
    domains: Vec<DomainEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DomainEntry {
    x_file: String,
    x_checksum: u64,
    agt_file: String,
    agt_checksum: u64,
    seed: u64,
}

fn structure_rows(m: &Matrix) -> Vec<Vec<u8>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|&v| if v != 0.0 { 1 } else { 0 }).collect())
        .collect()
}

fn structure_from_rows(rows: &[Vec<u8>], d: usize, path: &str) -> Result<Matrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::format(path, "shared_structure shape mismatch"));
    }
    Ok(Matrix::from_fn(d, d, |i, j| rows[i][j] as f64))
}

/// Writes the corpus into `dir`, creating it if needed.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(corpus.m());
    for (idx, dom) in corpus.domains.iter().enumerate() {
        let x_file = format!("x_{idx}.mat");
        let agt_file = format!("agt_{idx}.mat");
        let x_bytes = mat_bytes(&dom.x);
        let agt_bytes = mat_bytes(dom.a_gt.weights());
        std::fs::write(dir.join(&x_file), &x_bytes)?;
        std::fs::write(dir.join(&agt_file), &agt_bytes)?;
        entries.push(DomainEntry {
            x_checksum: fnv1a64(&x_bytes),
            x_file,
            agt_checksum: fnv1a64(&agt_bytes),
            agt_file,
            seed: dom.seed,
        });
    }
    let manifest = Manifest {
        setting: corpus.setting.to_string(),
        d: corpus.d,
        n: corpus.n,
        m: corpus.m(),
        degree: corpus.degree,
        noise_kind: corpus.noise_kind.to_string(),
        master_seed: corpus.master_seed,
        shared_structure: corpus.shared_structure.as_ref().map(structure_rows),
        shared_order: corpus
            .shared_order
            .as_ref()
            .map(|o| o.positions().to_vec()),
        domains: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join(MANIFEST_NAME), json)?;
    Ok(())
}

/// Loads a corpus directory, verifying checksums, shapes and the setting
/// invariants.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join(MANIFEST_NAME);
    if !manifest_path.exists() {
        return Err(Error::format(
            dir.display().to_string(),
            "manifest not found",
        ));
    }
    let manifest_str = std::fs::read_to_string(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&manifest_str)
        .map_err(|e| Error::format(manifest_path.display().to_string(), e))?;

    let setting: CorpusSetting = manifest.setting.parse()?;
    let noise_kind: NoiseKind = manifest.noise_kind.parse()?;
    if manifest.domains.len() != manifest.m {
        return Err(Error::format(
            manifest_path.display().to_string(),
            format!(
                "manifest lists {} domains but declares M={}",
                manifest.domains.len(),
                manifest.m
            ),
        ));
    }

    let shared_structure = manifest
        .shared_structure
        .as_ref()
        .map(|rows| structure_from_rows(rows, manifest.d, MANIFEST_NAME))
        .transpose()?;
    let shared_order = manifest
        .shared_order
        .clone()
        .map(TopologicalOrder::new)
        .transpose()?;
    match setting {
        CorpusSetting::Heterogeneous if shared_structure.is_none() => {
            return Err(Error::format(MANIFEST_NAME, "missing shared_structure"));
        }
        CorpusSetting::OrderConsistent if shared_order.is_none() => {
            return Err(Error::format(MANIFEST_NAME, "missing shared_order"));
        }
        _ => {}
    }

    let mut domains = Vec::with_capacity(manifest.m);
    for (idx, entry) in manifest.domains.iter().enumerate() {
        let x = load_checked(dir, &entry.x_file, entry.x_checksum, idx)?;
        let agt = load_checked(dir, &entry.agt_file, entry.agt_checksum, idx)?;
        if x.shape() != (manifest.d, manifest.n) {
            return Err(Error::format(
                &entry.x_file,
                format!(
                    "domain {idx}: expected {}x{} observations, found {}x{}",
                    manifest.d,
                    manifest.n,
                    x.rows(),
                    x.cols()
                ),
            ));
        }
        if agt.shape() != (manifest.d, manifest.d) {
            return Err(Error::format(
                &entry.agt_file,
                format!("domain {idx}: ground truth is not {0}x{0}", manifest.d),
            ));
        }
        domains.push(DomainDataset {
            x,
            a_gt: WeightedAdjacency::new(agt)?,
            noise_kind,
            seed: entry.seed,
        });
    }

    let corpus = Corpus {
        setting,
        d: manifest.d,
        n: manifest.n,
        degree: manifest.degree,
        noise_kind,
        master_seed: manifest.master_seed,
        shared_structure,
        shared_order,
        domains,
    };
    corpus.validate()?;
    Ok(corpus)
}

fn load_checked(dir: &Path, file: &str, checksum: u64, idx: usize) -> Result<Matrix> {
    let path = dir.join(file);
    let bytes = std::fs::read(&path).map_err(|_| {
        Error::format(
            path.display().to_string(),
            format!("domain file missing for index {idx}"),
        )
    })?;
    let actual = fnv1a64(&bytes);
    if actual != checksum {
        return Err(Error::format(
            path.display().to_string(),
            format!("checksum failure for domain {idx}: manifest {checksum:#018x}, file {actual:#018x}"),
        ));
    }
    parse_mat_bytes(&bytes, &path.display().to_string())
}

/// The connectivity matrix of the corpus ordering, when there is one.
pub fn corpus_connectivity(corpus: &Corpus) -> Option<Matrix> {
    corpus.shared_order.as_ref().map(connectivity_matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_corpus, CorpusSpec};

    fn sample_corpus(setting: CorpusSetting) -> Corpus {
        make_corpus(&CorpusSpec {
            setting,
            d: 4,
            n: 6,
            m: 5,
            degree: 1,
            noise_kind: NoiseKind::Gumbel,
            master_seed: 99,
            fixed_order: None,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_compares_equal_field_by_field() {
        for setting in [CorpusSetting::Heterogeneous, CorpusSetting::OrderConsistent] {
            let corpus = sample_corpus(setting);
            let dir = tempfile::tempdir().unwrap();
            save_corpus(&corpus, dir.path()).unwrap();
            let loaded = load_corpus(dir.path()).unwrap();
            assert_eq!(loaded.setting, corpus.setting);
            assert_eq!(loaded.d, corpus.d);
            assert_eq!(loaded.n, corpus.n);
            assert_eq!(loaded.degree, corpus.degree);
            assert_eq!(loaded.noise_kind, corpus.noise_kind);
            assert_eq!(loaded.master_seed, corpus.master_seed);
            assert_eq!(loaded.shared_structure, corpus.shared_structure);
            assert_eq!(loaded.shared_order, corpus.shared_order);
            for (a, b) in loaded.domains.iter().zip(&corpus.domains) {
                assert_eq!(a.x.data(), b.x.data());
                assert_eq!(a.a_gt.weights().data(), b.a_gt.weights().data());
                assert_eq!(a.seed, b.seed);
            }
        }
    }

    #[test]
    fn missing_domain_file_names_the_index() {
        let corpus = sample_corpus(CorpusSetting::Heterogeneous);
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("x_3.mat")).unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("index 3"), "{err}");
    }

    #[test]
    fn empty_directory_reports_manifest_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("manifest not found"), "{err}");
    }

    #[test]
    fn corrupted_file_fails_checksum() {
        let corpus = sample_corpus(CorpusSetting::OrderConsistent);
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        let path = dir.path().join("agt_1.mat");
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("checksum failure for domain 1"), "{err}");
    }

    #[test]
    fn manifest_domain_count_mismatch_is_rejected() {
        let corpus = sample_corpus(CorpusSetting::Heterogeneous);
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).unwrap();
        let text = text.replace("\"m\": 5", "\"m\": 6");
        std::fs::write(&path, text).unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("declares M=6"), "{err}");
    }
}
