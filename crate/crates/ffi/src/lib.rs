//! C ABI over the `semlink` library.
//!
//! Objects cross the boundary as opaque handles created by a `*_load` /
//! `*_new` call and released by the matching `*_free`. Every fallible call
//! returns a [`SemlinkStatus`]; on failure a message for the calling thread
//! is available from [`semlink_last_error`] until the next failing call on
//! that thread. Panics are caught and reported as
//! [`SemlinkStatus::Panic`].
//!
//! Handles are immutable after construction and may be shared between
//! threads for concurrent reads.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::slice;

use semlink::channel::{
    cbr, equalize, normalize_power, to_complex, to_real, transmit, ChannelConfig, ChannelKind,
};
use semlink::codec::{CodecParams, Matrix, Network, FEATURE_DIM};
use semlink::embedding_io::{load_dataset_file, EmbeddingDataset, EmbeddingRecord};
use semlink::experiment::{semantic_accuracy, EvalConfig, Scheme};
use semlink::knowledge_base::KnowledgeBase;
use semlink::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemlinkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed file or dataset (bad magic, version, truncation, labels).
    Format = 4,
    DimensionMismatch = 5,
    NonFinite = 6,
    Panic = 7,
}

/// Channel model selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemlinkChannel {
    Awgn = 0,
    Rayleigh = 1,
}

impl From<SemlinkChannel> for ChannelKind {
    fn from(c: SemlinkChannel) -> Self {
        match c {
            SemlinkChannel::Awgn => ChannelKind::Awgn,
            SemlinkChannel::Rayleigh => ChannelKind::Rayleigh,
        }
    }
}

/// One search hit.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemlinkMatch {
    pub image_id: u32,
    pub label: u32,
    /// Euclidean (L2) distance.
    pub distance: f64,
}

/// Opaque knowledge-base handle.
pub struct SemlinkKb {
    kb: KnowledgeBase,
}

/// Opaque codec handle.
pub struct SemlinkCodec {
    params: CodecParams,
    net: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(err: &Error) -> SemlinkStatus {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => SemlinkStatus::Io,
        Error::BadMagic { .. }
        | Error::VersionMismatch { .. }
        | Error::Truncated { .. }
        | Error::LabelOutOfRange { .. }
        | Error::InvalidDataset(_)
        | Error::ClassTooSmall { .. } => SemlinkStatus::Format,
        Error::DimensionMismatch { .. } => SemlinkStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::NotNormalized { .. } => SemlinkStatus::InvalidArgument,
        Error::NonFiniteLoss { .. } => SemlinkStatus::NonFinite,
    }
}

struct Failure(SemlinkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SemlinkStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SemlinkStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SemlinkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SemlinkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("panic: {msg}"));
            SemlinkStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn semlink_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failing call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn semlink_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Channel bandwidth ratio `(k/2) / (height·width·channels)` in lowest terms.
#[no_mangle]
pub unsafe extern "C" fn semlink_cbr(
    k: u64,
    height: u64,
    width: u64,
    channels: u64,
    numerator: *mut u64,
    denominator: *mut u64,
) -> SemlinkStatus {
    guard(|| {
        let r = cbr(k, height, width, channels)?;
        write_out(numerator, *r.numer(), "numerator")?;
        write_out(denominator, *r.denom(), "denominator")
    })
}

/// Loads a knowledge base from an embedding dataset file.
#[no_mangle]
pub unsafe extern "C" fn semlink_kb_load(
    path: *const c_char,
    out: *mut *mut SemlinkKb,
) -> SemlinkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kb = KnowledgeBase::build(&load_dataset_file(path_arg(path)?)?)?;
        out.write(Box::into_raw(Box::new(SemlinkKb { kb })));
        Ok(())
    })
}

/// Builds a knowledge base from `count` row-major vectors of length `dim`.
/// Labels must be below `class_count`; classes are named `class_000`, ...
#[no_mangle]
pub unsafe extern "C" fn semlink_kb_new(
    vectors: *const f32,
    labels: *const u32,
    image_ids: *const u32,
    count: usize,
    dim: usize,
    class_count: u32,
    out: *mut *mut SemlinkKb,
) -> SemlinkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| invalid("count * dim overflows"))?;
        let vectors = slice_arg(vectors, total, "vectors")?;
        let labels = slice_arg(labels, count, "labels")?;
        let ids = slice_arg(image_ids, count, "image_ids")?;
        let names = (0..class_count).map(|c| format!("class_{c:03}")).collect();
        let records = (0..count)
            .map(|i| EmbeddingRecord {
                image_id: ids[i],
                label: labels[i],
                vector: vectors[i * dim..(i + 1) * dim].to_vec(),
            })
            .collect();
        let ds = EmbeddingDataset::empty(dim, names).with_records(records);
        let kb = KnowledgeBase::build(&ds)?;
        out.write(Box::into_raw(Box::new(SemlinkKb { kb })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn semlink_kb_free(kb: *mut SemlinkKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Number of entries; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn semlink_kb_len(kb: *const SemlinkKb) -> usize {
    kb.as_ref().map_or(0, |k| k.kb.len())
}

/// Vector dimension; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn semlink_kb_dim(kb: *const SemlinkKb) -> usize {
    kb.as_ref().map_or(0, |k| k.kb.dim())
}

/// Exact `k` nearest entries of `query` (length `dim`), nearest first, ties
/// by ascending image id. Writes `min(k, len)` matches to `out` and their
/// number to `written`.
#[no_mangle]
pub unsafe extern "C" fn semlink_kb_search(
    kb: *const SemlinkKb,
    query: *const f32,
    dim: usize,
    k: usize,
    out: *mut SemlinkMatch,
    written: *mut usize,
) -> SemlinkStatus {
    guard(|| {
        let kb = &kb.as_ref().ok_or_else(|| null("kb"))?.kb;
        let query = slice_arg(query, dim, "query")?;
        let hits = kb.search(query, k)?;
        let dst = slice_out(out, hits.len(), "out")?;
        for (d, m) in dst.iter_mut().zip(&hits) {
            *d = SemlinkMatch {
                image_id: m.image_id,
                label: m.label,
                distance: m.distance,
            };
        }
        write_out(written, hits.len(), "written")
    })
}

fn codec_handle(params: CodecParams) -> *mut SemlinkCodec {
    let net = params.to_network();
    Box::into_raw(Box::new(SemlinkCodec { params, net }))
}

/// Loads trained codec parameters.
#[no_mangle]
pub unsafe extern "C" fn semlink_codec_load(
    path: *const c_char,
    out: *mut *mut SemlinkCodec,
) -> SemlinkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(codec_handle(CodecParams::load(path_arg(path)?)?));
        Ok(())
    })
}

/// Freshly initialized (untrained) codec with compressed dimension `k`.
#[no_mangle]
pub unsafe extern "C" fn semlink_codec_new(
    k: usize,
    seed: u64,
    out: *mut *mut SemlinkCodec,
) -> SemlinkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(codec_handle(CodecParams::init(k, seed)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn semlink_codec_save(
    codec: *const SemlinkCodec,
    path: *const c_char,
) -> SemlinkStatus {
    guard(|| {
        let codec = codec.as_ref().ok_or_else(|| null("codec"))?;
        codec.params.save(path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn semlink_codec_free(codec: *mut SemlinkCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Compressed dimension; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn semlink_codec_k(codec: *const SemlinkCodec) -> usize {
    codec.as_ref().map_or(0, |c| c.params.k)
}

unsafe fn run_layer(
    input: *const f32,
    rows: usize,
    in_dim: usize,
    out: *mut f32,
    out_dim: usize,
    f: impl FnOnce(&Matrix) -> semlink::Result<Matrix>,
) -> Result<(), Failure> {
    let total_in = rows
        .checked_mul(in_dim)
        .ok_or_else(|| invalid("size overflow"))?;
    let total_out = rows
        .checked_mul(out_dim)
        .ok_or_else(|| invalid("size overflow"))?;
    if rows == 0 {
        return Err(invalid("batch must hold at least one row"));
    }
    let x = slice_arg(input, total_in, "input")?;
    let dst = slice_out(out, total_out, "out")?;
    let m = Matrix::from_vec(rows, in_dim, x.iter().map(|&v| v as f64).collect());
    let y = f(&m)?;
    for (d, v) in dst.iter_mut().zip(&y.data) {
        *d = *v as f32;
    }
    Ok(())
}

/// Eval-mode encoder: `rows × 512` embeddings to `rows × k` codes (before
/// power normalization).
#[no_mangle]
pub unsafe extern "C" fn semlink_codec_encode(
    codec: *const SemlinkCodec,
    y: *const f32,
    rows: usize,
    z_out: *mut f32,
) -> SemlinkStatus {
    guard(|| {
        let c = codec.as_ref().ok_or_else(|| null("codec"))?;
        run_layer(y, rows, FEATURE_DIM, z_out, c.params.k, |m| {
            c.net.encode_eval(m)
        })
    })
}

/// Decoder: `rows × k` received codes to `rows × 512` embeddings.
#[no_mangle]
pub unsafe extern "C" fn semlink_codec_decode(
    codec: *const SemlinkCodec,
    z: *const f32,
    rows: usize,
    y_out: *mut f32,
) -> SemlinkStatus {
    guard(|| {
        let c = codec.as_ref().ok_or_else(|| null("codec"))?;
        run_layer(z, rows, c.params.k, y_out, FEATURE_DIM, |m| c.net.decode(m))
    })
}

/// Sends `len` reals (`len` even, paired into `len / 2` complex symbols)
/// through the channel: power normalization, fading and noise, zero-forcing
/// equalization. `out` receives the equalized reals in the normalized
/// scale and `scale` the normalization factor that was applied. The
/// realization is a function of `(seed, stream)` only.
#[no_mangle]
pub unsafe extern "C" fn semlink_channel_transmit(
    signal: *const f64,
    len: usize,
    channel: SemlinkChannel,
    snr_db: f64,
    seed: u64,
    stream: u64,
    out: *mut f64,
    scale: *mut f64,
) -> SemlinkStatus {
    guard(|| {
        let x = slice_arg(signal, len, "signal")?;
        let cfg = ChannelConfig::new(channel.into(), snr_db, seed)?;
        let (s, factor) = normalize_power(&to_complex(x)?)?;
        let (rx, realization) = transmit(&s, &cfg, stream)?;
        let (eq, _) = equalize(&rx, &realization)?;
        slice_out(out, len, "out")?.copy_from_slice(&to_real(&eq));
        if !scale.is_null() {
            scale.write(factor);
        }
        Ok(())
    })
}

/// Semantic accuracy of the dataset file at `transmit_path` against `kb`.
/// A null `codec` evaluates the uncompressed baseline.
#[no_mangle]
pub unsafe extern "C" fn semlink_semantic_accuracy(
    codec: *const SemlinkCodec,
    transmit_path: *const c_char,
    kb: *const SemlinkKb,
    channel: SemlinkChannel,
    snr_db: f64,
    trials_per_item: u32,
    seed: u64,
    accuracy: *mut f64,
) -> SemlinkStatus {
    guard(|| {
        let kb = &kb.as_ref().ok_or_else(|| null("kb"))?.kb;
        let transmit_set = load_dataset_file(path_arg(transmit_path)?)?;
        let cfg = EvalConfig::new(
            ChannelConfig::new(channel.into(), snr_db, seed)?,
            trials_per_item,
        )?;
        let scheme = match codec.as_ref() {
            Some(c) => Scheme::Codec(&c.params),
            None => Scheme::Baseline,
        };
        let report = semantic_accuracy(scheme, &transmit_set, kb, &cfg)?;
        write_out(accuracy, report.accuracy, "accuracy")
    })
}
