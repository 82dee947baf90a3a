//! Embedding datasets: the `SEMB` binary format, class-stratified splits and
//! a synthetic clustered generator for tests that run without CLIP.
//!
//! File layout (little-endian throughout):
//!
//! ```text
//! magic "SEMB" | version u32 = 1
//! dim u32 | image_height u32 | image_width u32 | image_channels u32
//! class_count u32 | class_count × (name_len u16, UTF-8 bytes)
//! record_count u32 | record_count × (image_id u32, label u32, dim × f32)
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Purpose};

pub const DATASET_MAGIC: [u8; 4] = *b"SEMB";
pub const DATASET_VERSION: u32 = 1;

/// One embedded image: its identifier, class index and feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub image_id: u32,
    pub label: u32,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub dim: usize,
    pub image_height: u32,
    pub image_width: u32,
    pub image_channels: u32,
    pub class_names: Vec<String>,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingDataset {
    /// An empty dataset with CIFAR-style 32×32×3 source geometry.
    pub fn empty(dim: usize, class_names: Vec<String>) -> Self {
        Self {
            dim,
            image_height: 32,
            image_width: 32,
            image_channels: 3,
            class_names,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Same header, different records.
    pub fn with_records(&self, records: Vec<EmbeddingRecord>) -> Self {
        Self {
            dim: self.dim,
            image_height: self.image_height,
            image_width: self.image_width,
            image_channels: self.image_channels,
            class_names: self.class_names.clone(),
            records,
        }
    }

    /// Number of records per label, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for r in &self.records {
            if let Some(c) = counts.get_mut(r.label as usize) {
                *c += 1;
            }
        }
        counts
    }

    /// Checks every dataset and record invariant.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > u32::MAX as usize {
            return Err(Error::InvalidDataset(format!(
                "dim {} out of range",
                self.dim
            )));
        }
        if self.image_height == 0 || self.image_width == 0 || self.image_channels == 0 {
            return Err(Error::InvalidDataset(
                "image geometry must be positive".into(),
            ));
        }
        for name in &self.class_names {
            if name.len() > u16::MAX as usize {
                return Err(Error::InvalidDataset(format!(
                    "class name of {} bytes exceeds u16 length field",
                    name.len()
                )));
            }
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        for (index, r) in self.records.iter().enumerate() {
            if r.vector.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: r.vector.len(),
                });
            }
            if (r.label as usize) >= self.class_names.len() {
                return Err(Error::LabelOutOfRange {
                    index,
                    label: r.label,
                    class_count: self.class_names.len(),
                });
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "record {index} (image {}) has a non-finite component",
                    r.image_id
                )));
            }
            if !seen.insert(r.image_id) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate image_id {}",
                    r.image_id
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of [`split_train_val`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
}

impl SplitSpec {
    pub fn new(seed: u64, train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {train_fraction} must lie strictly between 0 and 1"
            )));
        }
        Ok(Self {
            seed,
            train_fraction,
        })
    }
}

/// Writes `dataset` in the `SEMB` format.
pub fn save_dataset<W: Write>(dataset: &EmbeddingDataset, mut sink: W) -> Result<()> {
    dataset.validate()?;
    let mut buf = Vec::with_capacity(
        32 + dataset.records.len() * (8 + 4 * dataset.dim)
            + dataset
                .class_names
                .iter()
                .map(|n| n.len() + 2)
                .sum::<usize>(),
    );
    buf.extend_from_slice(&DATASET_MAGIC);
    for v in [
        DATASET_VERSION,
        dataset.dim as u32,
        dataset.image_height,
        dataset.image_width,
        dataset.image_channels,
        dataset.class_names.len() as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for name in &dataset.class_names {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    buf.extend_from_slice(&(dataset.records.len() as u32).to_le_bytes());
    for r in &dataset.records {
        buf.extend_from_slice(&r.image_id.to_le_bytes());
        buf.extend_from_slice(&r.label.to_le_bytes());
        for v in &r.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

/// Little-endian cursor over an in-memory byte buffer.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(Error::Truncated { context })?;
        if end > self.bytes.len() {
            return Err(Error::Truncated { context });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn magic(&mut self) -> Result<[u8; 4]> {
        let b = self.take(4, "magic")?;
        Ok([b[0], b[1], b[2], b[3]])
    }

    pub(crate) fn u16(&mut self, context: &'static str) -> Result<u16> {
        let b = self.take(2, context)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, context: &'static str) -> Result<u32> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32_into(&mut self, out: &mut [f32], context: &'static str) -> Result<()> {
        let b = self.take(out.len() * 4, context)?;
        for (o, chunk) in out.iter_mut().zip(b.chunks_exact(4)) {
            *o = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        Ok(())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Reads a `SEMB` dataset and checks every invariant.
pub fn load_dataset<R: Read>(mut source: R) -> Result<EmbeddingDataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_dataset(&bytes)
}

pub fn parse_dataset(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let mut rd = ByteReader::new(bytes);
    let magic = rd.magic()?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = rd.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            expected: DATASET_VERSION,
            found: version,
        });
    }
    let dim = rd.u32("dim")? as usize;
    let image_height = rd.u32("image_height")?;
    let image_width = rd.u32("image_width")?;
    let image_channels = rd.u32("image_channels")?;
    let class_count = rd.u32("class_count")? as usize;
    let mut class_names = Vec::with_capacity(class_count.min(1 << 16));
    for _ in 0..class_count {
        let len = rd.u16("class name length")? as usize;
        let raw = rd.take(len, "class name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::InvalidDataset("class name is not valid UTF-8".into()))?;
        class_names.push(name.to_string());
    }
    let record_count = rd.u32("record_count")? as usize;
    if dim == 0 {
        return Err(Error::InvalidDataset("dim must be positive".into()));
    }
    let record_bytes = 8 + 4 * dim;
    if rd.remaining() < record_count.saturating_mul(record_bytes) {
        return Err(Error::Truncated { context: "records" });
    }
    let mut records = Vec::with_capacity(record_count);
    for index in 0..record_count {
        let image_id = rd.u32("image_id")?;
        let label = rd.u32("label")?;
        if label as usize >= class_count {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                class_count,
            });
        }
        let mut vector = vec![0f32; dim];
        rd.f32_into(&mut vector, "vector")?;
        records.push(EmbeddingRecord {
            image_id,
            label,
            vector,
        });
    }
    if rd.remaining() != 0 {
        return Err(Error::InvalidDataset(format!(
            "{} trailing bytes after last record",
            rd.remaining()
        )));
    }
    let ds = EmbeddingDataset {
        dim,
        image_height,
        image_width,
        image_channels,
        class_names,
        records,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset_file(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    save_dataset(dataset, std::io::BufWriter::new(file))
}

pub fn load_dataset_file(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let bytes = fs::read(path)?;
    parse_dataset(&bytes)
}

/// Record indices grouped by label, each group in ascending image_id order.
fn groups_by_label(dataset: &EmbeddingDataset) -> Result<BTreeMap<u32, Vec<usize>>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        groups.entry(r.label).or_default().push(i);
    }
    for (&label, idx) in groups.iter_mut() {
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                count: idx.len(),
            });
        }
        idx.sort_by_key(|&i| dataset.records[i].image_id);
    }
    Ok(groups)
}

/// Shuffles each class with its own seeded stream and hands the first
/// `first_count(n_c)` records of the class to the first output.
fn stratified_split(
    dataset: &EmbeddingDataset,
    seed: u64,
    tag: u64,
    first_count: impl Fn(usize) -> usize,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    dataset.validate()?;
    let groups = groups_by_label(dataset)?;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (label, mut idx) in groups {
        let mut rng = rng_for(seed, Purpose::Split, &[tag, label as u64]);
        idx.shuffle(&mut rng);
        let n_first = first_count(idx.len());
        first.extend(idx[..n_first].iter().map(|&i| dataset.records[i].clone()));
        second.extend(idx[n_first..].iter().map(|&i| dataset.records[i].clone()));
    }
    first.sort_by_key(|r| r.image_id);
    second.sort_by_key(|r| r.image_id);
    Ok((dataset.with_records(first), dataset.with_records(second)))
}

/// Class-stratified train/validation split: `floor(fraction · n_c)` records
/// of every class go to training, the rest to validation.
pub fn split_train_val(
    dataset: &EmbeddingDataset,
    spec: SplitSpec,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    let spec = SplitSpec::new(spec.seed, spec.train_fraction)?;
    stratified_split(dataset, spec.seed, 0, |n| {
        (spec.train_fraction * n as f64).floor() as usize
    })
}

/// Halves every class: `ceil(n_c/2)` records to the transmit set, the
/// remaining `floor(n_c/2)` to the knowledge-base set.
pub fn split_transmit_kb(
    dataset: &EmbeddingDataset,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    stratified_split(dataset, seed, 1, |n| n.div_ceil(2))
}

/// Unit-norm class centroids drawn uniformly on the sphere. Several sample
/// sets can be drawn around the same centroids, e.g. a training pool and a
/// disjoint test pool.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub dim: usize,
    pub centroids: Vec<Vec<f32>>,
}

impl SyntheticSource {
    pub fn new(num_classes: usize, dim: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 || dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "synthetic data needs num_classes >= 2 and dim >= 2 (got {num_classes}, {dim})"
            )));
        }
        let centroids = (0..num_classes)
            .map(|c| {
                let mut rng = rng_for(seed, Purpose::Centroid, &[c as u64]);
                let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                raw.iter().map(|v| (v / norm) as f32).collect()
            })
            .collect();
        Ok(Self { dim, centroids })
    }

    /// Draws `per_class` records per class as centroid plus isotropic
    /// Gaussian noise of standard deviation `intra_spread`. Image ids are
    /// assigned class-major starting at `first_id`.
    pub fn sample(
        &self,
        per_class: usize,
        intra_spread: f64,
        seed: u64,
        first_id: u32,
    ) -> Result<EmbeddingDataset> {
        if per_class < 2 {
            return Err(Error::InvalidArgument(format!(
                "per_class must be >= 2 (got {per_class})"
            )));
        }
        if !(intra_spread >= 0.0 && intra_spread.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "intra_spread must be a finite nonnegative number (got {intra_spread})"
            )));
        }
        let total = self.centroids.len() * per_class;
        if first_id as u64 + total as u64 > u32::MAX as u64 + 1 {
            return Err(Error::InvalidArgument("image ids overflow u32".into()));
        }
        let mut records = Vec::with_capacity(total);
        for (label, centroid) in self.centroids.iter().enumerate() {
            for j in 0..per_class {
                let image_id = first_id + (label * per_class + j) as u32;
                let mut rng = rng_for(seed, Purpose::Sample, &[image_id as u64]);
                let vector = centroid
                    .iter()
                    .map(|&c| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        (c as f64 + intra_spread * n) as f32
                    })
                    .collect();
                records.push(EmbeddingRecord {
                    image_id,
                    label: label as u32,
                    vector,
                });
            }
        }
        let class_names = (0..self.centroids.len())
            .map(|c| format!("class_{c:03}"))
            .collect();
        let mut ds = EmbeddingDataset::empty(self.dim, class_names);
        ds.records = records;
        Ok(ds)
    }
}

/// Clustered synthetic embeddings: one unit-norm centroid per class and
/// `per_class` Gaussian perturbations of it.
pub fn generate_synthetic(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    intra_spread: f64,
    seed: u64,
) -> Result<EmbeddingDataset> {
    SyntheticSource::new(num_classes, dim, seed)?.sample(per_class, intra_spread, seed, 0)
}
