//! The clustered memory pool and per-cluster candidate lookup.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cluster::kmeans;
use crate::embedding::EmbeddingVector;
use crate::error::{CoreError, Result};
use crate::memory::MemoryEntry;
use crate::seed::rng_from_seed;

/// How a pool was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMeta {
    pub embedder_id: String,
    /// Entropy threshold applied before building; `None` when entropy
    /// filtering was not used (equivalent to an infinite threshold).
    pub tau: Option<f64>,
    /// Which filter produced the entries: entropy, max_p, gold or none.
    pub filter: String,
    pub seed: u64,
    pub created_at: String,
    pub dataset_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPool {
    pub entries: Vec<MemoryEntry>,
    pub centroids: Vec<EmbeddingVector>,
    pub l: usize,
    pub build_meta: BuildMeta,
}

/// Top-k entries of one cluster with their similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<'a> {
    pub cluster_id: usize,
    pub candidates: Vec<(&'a MemoryEntry, f64)>,
}

impl MemoryPool {
    /// Clusters `entries` by question embedding into `l` groups.
    ///
    /// Every entry must carry an embedding. The result has no empty cluster
    /// and is fully determined by the inputs and `seed`.
    pub fn build(mut entries: Vec<MemoryEntry>, l: usize, seed: u64, mut build_meta: BuildMeta) -> Result<Self> {
        build_meta.seed = seed;
        if l == 0 || entries.len() < l {
            return Err(CoreError::Configuration(format!(
                "pool of {} entries cannot be split into {l} clusters",
                entries.len()
            )));
        }
        let points = entries
            .iter()
            .map(|e| {
                e.embedding
                    .as_ref()
                    .ok_or_else(|| CoreError::Precondition(format!("entry {} has no embedding", e.question_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        for p in &points {
            p.check_unit()?;
        }
        let clustering = kmeans(&points, l, seed)?;
        for (entry, cluster) in entries.iter_mut().zip(&clustering.assignment) {
            entry.cluster_id = Some(*cluster);
        }
        Ok(Self {
            entries,
            centroids: clustering.centroids,
            l,
            build_meta,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cluster_members(&self, cluster_id: usize) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter().filter(move |e| e.cluster_id == Some(cluster_id))
    }

    /// For each cluster, the `k` entries most similar to `query`.
    ///
    /// Scores are cosine similarities; ties are ordered by `question_id`.
    /// Clusters with fewer than `k` members return all of them.
    pub fn candidates_for(&self, query: &EmbeddingVector, k: usize) -> Vec<CandidateSet<'_>> {
        let mut sets: Vec<CandidateSet<'_>> = (0..self.l)
            .map(|cluster_id| CandidateSet {
                cluster_id,
                candidates: Vec::new(),
            })
            .collect();
        for entry in &self.entries {
            let (Some(cluster), Some(embedding)) = (entry.cluster_id, entry.embedding.as_ref()) else {
                continue;
            };
            if let Some(set) = sets.get_mut(cluster) {
                set.candidates.push((entry, query.cosine(embedding)));
            }
        }
        for set in &mut sets {
            set.candidates
                .sort_by(|(ea, sa), (eb, sb)| sb.total_cmp(sa).then_with(|| ea.question_id.cmp(&eb.question_id)));
            set.candidates.truncate(k);
        }
        sets
    }

    /// Uniformly keeps `round(fraction * len)` entries under `seed`, then
    /// re-clusters with the same `l`.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<MemoryPool> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CoreError::Precondition(format!(
                "subsample fraction must be in (0, 1], got {fraction}"
            )));
        }
        let n = self.entries.len();
        let keep = libm::round(fraction * n as f64) as usize;
        if keep < self.l {
            return Err(CoreError::Configuration(format!(
                "subsample of {keep} entries is smaller than {} clusters",
                self.l
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, keep).into_vec();
        picked.sort_unstable();
        let entries = picked.into_iter().map(|i| self.entries[i].clone()).collect();
        MemoryPool::build(entries, self.l, self.build_meta.seed, self.build_meta.clone())
    }
}
