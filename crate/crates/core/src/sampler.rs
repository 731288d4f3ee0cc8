//! Balanced mini-batches for contrastive pretraining and k-shot support sets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_task::{premise_for_text, LabelSet, MetaExample, RawExample};

/// `L` labels × `M` instances per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub labels_per_batch: usize,
    pub instances_per_label: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            labels_per_batch: 8,
            instances_per_label: 4,
        }
    }
}

impl BatchSpec {
    pub fn new(labels_per_batch: usize, instances_per_label: usize) -> Result<Self> {
        let spec = Self {
            labels_per_batch,
            instances_per_label,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels_per_batch < 2 {
            return Err(Error::BatchSpec(format!(
                "labels_per_batch must be >= 2, got {}",
                self.labels_per_batch
            )));
        }
        if self.instances_per_label < 2 {
            return Err(Error::BatchSpec(format!(
                "instances_per_label must be >= 2, got {}",
                self.instances_per_label
            )));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.labels_per_batch * self.instances_per_label
    }
}

/// Indices into the sampler's pool, grouped label by label.
pub type Batch = Vec<usize>;

#[derive(Debug, Clone)]
struct Group {
    dataset: usize,
    members: Vec<usize>,
}

/// Draws epochs of balanced batches from a fixed pool.
///
/// Every batch holds exactly `L` distinct label keys with exactly `M`
/// examples each. Within an epoch no pool index repeats; the tail that
/// cannot fill a complete batch is dropped.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    spec: BatchSpec,
    groups: Vec<Group>,
    n_datasets: usize,
    same_dataset_only: bool,
}

impl BalancedSampler {
    pub fn new(pool: &[MetaExample], spec: BatchSpec, same_dataset_only: bool) -> Result<Self> {
        spec.validate()?;
        let mut datasets: BTreeMap<&str, usize> = BTreeMap::new();
        for ex in pool {
            let next = datasets.len();
            datasets.entry(&ex.dataset_id).or_insert(next);
        }
        // BTreeMap keeps group order independent of hash seeds.
        let mut by_key: BTreeMap<(usize, &str), Vec<usize>> = BTreeMap::new();
        for (i, ex) in pool.iter().enumerate() {
            let ds = if same_dataset_only { datasets[ex.dataset_id.as_str()] } else { 0 };
            by_key.entry((ds, &ex.label_key)).or_default().push(i);
        }
        let groups = by_key
            .into_iter()
            .map(|((dataset, _), members)| Group { dataset, members })
            .collect();
        let sampler = Self {
            spec,
            groups,
            n_datasets: if same_dataset_only { datasets.len() } else { 1 },
            same_dataset_only,
        };
        sampler.check_feasible()?;
        Ok(sampler)
    }

    pub fn spec(&self) -> BatchSpec {
        self.spec
    }

    fn check_feasible(&self) -> Result<()> {
        let m = self.spec.instances_per_label;
        let l = self.spec.labels_per_batch;
        let best = (0..self.n_datasets)
            .map(|d| {
                self.groups
                    .iter()
                    .filter(|g| g.dataset == d && g.members.len() >= m)
                    .count()
            })
            .max()
            .unwrap_or(0);
        if best < l {
            let scope = if self.same_dataset_only { " within one dataset" } else { "" };
            return Err(Error::InfeasibleBatch(format!(
                "need {l} label keys with at least {m} examples each{scope}, pool has {best} \
                 ({} label keys total)",
                self.groups.len()
            )));
        }
        Ok(())
    }

    /// One epoch of batches.
    pub fn epoch<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Batch> {
        let m = self.spec.instances_per_label;
        let l = self.spec.labels_per_batch;
        let mut remaining: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| {
                let mut members = g.members.clone();
                members.shuffle(rng);
                members
            })
            .collect();

        let mut batches = Vec::new();
        loop {
            let eligible_per_dataset: Vec<Vec<usize>> = (0..self.n_datasets)
                .map(|d| {
                    (0..self.groups.len())
                        .filter(|&g| self.groups[g].dataset == d && remaining[g].len() >= m)
                        .collect()
                })
                .collect();
            let open: Vec<&Vec<usize>> =
                eligible_per_dataset.iter().filter(|e| e.len() >= l).collect();
            let Some(eligible) = open.choose(rng) else {
                break;
            };
            let chosen: Vec<usize> = eligible.choose_multiple(rng, l).copied().collect();
            let mut batch = Vec::with_capacity(l * m);
            for g in chosen {
                let at = remaining[g].len() - m;
                batch.extend(remaining[g].drain(at..));
            }
            batches.push(batch);
        }
        batches
    }

    /// Endless stream of batches, re-shuffling at every epoch boundary.
    pub fn stream<R: Rng>(self, rng: R) -> BatchStream<R> {
        BatchStream {
            sampler: self,
            rng,
            pending: Vec::new().into_iter(),
        }
    }
}

pub struct BatchStream<R> {
    sampler: BalancedSampler,
    rng: R,
    pending: std::vec::IntoIter<Batch>,
}

impl<R: Rng> Iterator for BatchStream<R> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        loop {
            if let Some(b) = self.pending.next() {
                return Some(b);
            }
            let epoch = self.sampler.epoch(&mut self.rng);
            if epoch.is_empty() {
                return None;
            }
            self.pending = epoch.into_iter();
        }
    }
}

/// One epoch of balanced batches over `pool`.
pub fn sample_balanced_batches<R: Rng + ?Sized>(
    pool: &[MetaExample],
    spec: BatchSpec,
    rng: &mut R,
) -> Result<Vec<Batch>> {
    Ok(BalancedSampler::new(pool, spec, false)?.epoch(rng))
}

// ---------------------------------------------------------------------------
// Support sets

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub example: RawExample,
    pub premise: String,
    pub hypothesis: String,
}

/// The `k`-per-label annotated examples available for a target task.
/// `k = 0` is the zero-shot empty set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub shots: usize,
    pub labels: LabelSet,
    pub entries: Vec<SupportEntry>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl SupportSet {
    pub fn empty(labels: LabelSet) -> Self {
        Self {
            shots: 0,
            labels,
            entries: Vec::new(),
            seed: 0,
            warnings: Vec::new(),
        }
    }

    pub fn is_zero_shot(&self) -> bool {
        self.shots == 0
    }

    pub fn count_for(&self, label: &str) -> usize {
        self.entries.iter().filter(|e| e.hypothesis == label).count()
    }
}

/// Samples `k` examples per label without replacement from a training split.
/// Labels with fewer than `k` examples contribute everything they have and a
/// warning is recorded.
pub fn sample_support_set(
    train: &[RawExample],
    labels: &LabelSet,
    k: usize,
    seed: u64,
) -> Result<SupportSet> {
    if k == 0 {
        return Ok(SupportSet::empty(labels.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for label in labels.labels() {
        let pool: Vec<&RawExample> = train.iter().filter(|r| &r.label == label).collect();
        if pool.len() < k {
            let msg = format!(
                "{}: label `{label}` has {} examples, fewer than k={k}",
                labels.dataset_id,
                pool.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        for ex in pool.choose_multiple(&mut rng, k.min(pool.len())) {
            entries.push(SupportEntry {
                example: (*ex).clone(),
                premise: premise_for_text(&ex.text)?,
                hypothesis: label.clone(),
            });
        }
    }
    Ok(SupportSet {
        shots: k,
        labels: labels.clone(),
        entries,
        seed,
        warnings,
    })
}
