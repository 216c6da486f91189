//! Labeled samples, audited sample containers, and train/test splitting.

use rand::seq::SliceRandom;

use crate::audit::ReadCounters;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::window::PhaseWindow;

/// A phase window with its activity label (0 = walking, 1 = cycling).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub window: PhaseWindow,
    pub label: u8,
}

impl LabeledSample {
    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::invalid(format!("label {} not in {{0,1}}", self.label)));
        }
        Ok(())
    }
}

/// Sample container with per-phase read accounting (see [`crate::audit`]).
#[derive(Debug, Default)]
pub struct SampleSet {
    samples: Vec<LabeledSample>,
    counters: ReadCounters,
}

impl SampleSet {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        SampleSet {
            samples,
            counters: ReadCounters::new(),
        }
    }

    /// Access the samples, recording the read under the current audit phase.
    pub fn samples(&self) -> &[LabeledSample] {
        self.counters.record(self.samples.len() as u64);
        &self.samples
    }

    /// Length without touching the audit counters.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn counters(&self) -> &ReadCounters {
        &self.counters
    }

    /// Count per label without counting as a sample read.
    pub fn label_counts(&self) -> (usize, usize) {
        let ones = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - ones, ones)
    }
}

impl Clone for SampleSet {
    fn clone(&self) -> Self {
        SampleSet::new(self.samples.clone())
    }
}

impl From<Vec<LabeledSample>> for SampleSet {
    fn from(samples: Vec<LabeledSample>) -> Self {
        SampleSet::new(samples)
    }
}

/// A disjoint train/test partition of a source dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: SampleSet,
    pub test: SampleSet,
    /// Indices into the source list, per side; together a permutation.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub split_ratio: f64,
    pub split_seed: u64,
}

/// Largest-remainder allocation of `total_train` across class counts,
/// proportional to class size. Deterministic; ties break on lower class index.
fn allocate_per_class(class_sizes: &[usize], total_train: usize, ratio: f64) -> Vec<usize> {
    let mut take: Vec<usize> = class_sizes
        .iter()
        .map(|&n| (n as f64 * ratio).floor() as usize)
        .collect();
    // Clamp to class size, then distribute the remainder by fractional part.
    for (t, &n) in take.iter_mut().zip(class_sizes) {
        *t = (*t).min(n);
    }
    let mut assigned: usize = take.iter().sum();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = class_sizes[a] as f64 * ratio - (class_sizes[a] as f64 * ratio).floor();
        let fb = class_sizes[b] as f64 * ratio - (class_sizes[b] as f64 * ratio).floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut cursor = 0;
    while assigned < total_train {
        let c = order[cursor % order.len()];
        if take[c] < class_sizes[c] {
            take[c] += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    while assigned > total_train {
        let c = order[cursor % order.len()];
        if take[c] > 0 {
            take[c] -= 1;
            assigned -= 1;
        }
        cursor += 1;
    }
    take
}

/// Deterministic stratified split. The train side gets `round(n * ratio)`
/// samples (clamped so both sides are non-empty), allocated across labels by
/// largest remainder so class proportions carry over.
pub fn split(samples: Vec<LabeledSample>, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            have: samples.len(),
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("split ratio must be in (0, 1)"));
    }
    let n = samples.len();
    let total_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);

    // Indices per label, shuffled deterministically.
    let mut rng = stream(seed);
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let mut class_indices: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(Error::invalid(format!("label {l} not in {{0,1}}")));
        }
        class_indices[l as usize].push(i);
    }
    for idx in class_indices.iter_mut() {
        idx.shuffle(&mut rng);
    }

    let class_sizes: Vec<usize> = class_indices.iter().map(|v| v.len()).collect();
    let take = allocate_per_class(&class_sizes, total_train, ratio);

    let mut train_indices = Vec::with_capacity(total_train);
    let mut test_indices = Vec::with_capacity(n - total_train);
    for (c, idx) in class_indices.iter().enumerate() {
        train_indices.extend_from_slice(&idx[..take[c]]);
        test_indices.extend_from_slice(&idx[take[c]..]);
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();

    let mut train = Vec::with_capacity(train_indices.len());
    let mut test = Vec::with_capacity(test_indices.len());
    let mut side = vec![false; n]; // true = train
    for &i in &train_indices {
        side[i] = true;
    }
    for (i, s) in samples.into_iter().enumerate() {
        if side[i] {
            train.push(s);
        } else {
            test.push(s);
        }
    }

    Ok(DatasetSplit {
        train: SampleSet::new(train),
        test: SampleSet::new(test),
        train_indices,
        test_indices,
        split_ratio: ratio,
        split_seed: seed,
    })
}
