//! Receiver-side knowledge base: a flat, exact L2 index over labeled
//! embeddings.
//!
//! Squared distances are accumulated in `f64`, sequentially over the vector
//! index, in both the blocked search path and the brute-force oracle, so the
//! two agree bit for bit. Ties are broken by ascending image id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding_io::EmbeddingDataset;
use crate::error::{Error, Result};

/// Entries scored together by the blocked kernel.
const BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Match {
    pub image_id: u32,
    pub label: u32,
    /// True (square-rooted) L2 distance.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    dim: usize,
    /// Row-major `len × dim`.
    entries: Vec<f32>,
    labels: Vec<u32>,
    image_ids: Vec<u32>,
    class_names: Vec<String>,
}

impl KnowledgeBase {
    /// Builds a KB from every record of `dataset`, ordered by ascending
    /// image id.
    pub fn build(dataset: &EmbeddingDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidDataset(
                "cannot build a knowledge base from an empty dataset".into(),
            ));
        }
        dataset.validate()?;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.sort_by_key(|&i| dataset.records[i].image_id);
        let mut entries = Vec::with_capacity(dataset.len() * dataset.dim);
        let mut labels = Vec::with_capacity(dataset.len());
        let mut image_ids = Vec::with_capacity(dataset.len());
        for i in order {
            let r = &dataset.records[i];
            entries.extend_from_slice(&r.vector);
            labels.push(r.label);
            image_ids.push(r.image_id);
        }
        Ok(Self {
            dim: dataset.dim,
            entries,
            labels,
            image_ids,
            class_names: dataset.class_names.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn image_ids(&self) -> &[u32] {
        &self.image_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn entry(&self, index: usize) -> &[f32] {
        &self.entries[index * self.dim..(index + 1) * self.dim]
    }

    fn check_query(&self, query: &[f32], k: usize) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if k == 0 || k > self.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    fn to_match(&self, index: usize, squared: f64) -> Match {
        Match {
            image_id: self.image_ids[index],
            label: self.labels[index],
            distance: squared.sqrt(),
        }
    }

    /// The `k` nearest entries, ascending by distance then image id.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Match>> {
        self.check_query(query, k)?;
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut push = |index: usize, squared: f64| {
            let cand = Candidate { squared, index };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        };

        let n = self.len();
        let full_blocks = n / BLOCK;
        for b in 0..full_blocks {
            let base = b * BLOCK;
            let block = &self.entries[base * self.dim..(base + BLOCK) * self.dim];
            let sums = squared_l2_block(query, block, self.dim);
            for (j, s) in sums.into_iter().enumerate() {
                push(base + j, s);
            }
        }
        for index in full_blocks * BLOCK..n {
            push(index, squared_l2(query, self.entry(index)));
        }

        let mut found = heap.into_vec();
        found.sort();
        Ok(found
            .into_iter()
            .map(|c| self.to_match(c.index, c.squared))
            .collect())
    }

    /// Nearest entry (`search` with `k = 1`).
    pub fn retrieve(&self, query: &[f32]) -> Result<Match> {
        Ok(self.search(query, 1)?[0])
    }

    /// Independent queries answered in parallel on the current rayon pool.
    pub fn search_batch(&self, queries: &[Vec<f32>], k: usize) -> Result<Vec<Vec<Match>>> {
        queries.par_iter().map(|q| self.search(q, k)).collect()
    }

    /// Full scan with no blocking, heap or layout tricks. Test oracle for
    /// [`KnowledgeBase::search`].
    #[allow(clippy::needless_range_loop)]
    pub fn brute_force_search(&self, query: &[f32], k: usize) -> Result<Vec<Match>> {
        self.check_query(query, k)?;
        let mut all: Vec<Match> = (0..self.len())
            .map(|i| {
                let mut acc = 0.0f64;
                for d in 0..self.dim {
                    let diff = query[d] as f64 - self.entries[i * self.dim + d] as f64;
                    acc += diff * diff;
                }
                self.to_match(i, acc)
            })
            .collect();
        all.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.image_id.cmp(&b.image_id))
        });
        all.truncate(k);
        Ok(all)
    }

    /// Copies the KB back into dataset form (ascending image id).
    pub fn to_dataset(&self, template: &EmbeddingDataset) -> EmbeddingDataset {
        let records = (0..self.len())
            .map(|i| crate::embedding_io::EmbeddingRecord {
                image_id: self.image_ids[i],
                label: self.labels[i],
                vector: self.entry(i).to_vec(),
            })
            .collect();
        template.with_records(records)
    }
}

/// Squared L2 distance accumulated sequentially over the vector index.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let diff = *x as f64 - *y as f64;
        acc += diff * diff;
    }
    acc
}

/// Scores `BLOCK` consecutive rows at once. Each row keeps its own
/// accumulator, still summed in vector-index order.
#[inline]
fn squared_l2_block(query: &[f32], block: &[f32], dim: usize) -> [f64; BLOCK] {
    let mut acc = [0.0f64; BLOCK];
    let rows: [&[f32]; BLOCK] = std::array::from_fn(|j| &block[j * dim..(j + 1) * dim]);
    for d in 0..dim {
        let q = query[d] as f64;
        for j in 0..BLOCK {
            let diff = q - rows[j][d] as f64;
            acc[j] += diff * diff;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    squared: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// entries are stored by ascending image id, so index order is id order
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.squared
            .total_cmp(&other.squared)
            .then(self.index.cmp(&other.index))
    }
}
