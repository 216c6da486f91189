//! On-disk formats: DASG datasets, model checkpoints, split manifests.
//!
//! All integers are little-endian. The DASG layout is:
//!
//! ```text
//! magic "DASG" | version u16 | H u16 | W u16 | sampling_rate u16
//! | node_id_len u16 | node_id bytes (UTF-8)
//! | sample_count u32
//! | per sample: label u8, then H*W f32 values, row-major
//! ```
//!
//! A checkpoint is a text preamble (`DASCKPT 1` line, then the architecture
//! descriptor line) followed by a u32 parameter count and that many f32s.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{DatasetSplit, LabeledSample};
use crate::error::{Error, Result};
use crate::window::PhaseWindow;

pub const DASG_MAGIC: &[u8; 4] = b"DASG";
pub const DASG_VERSION: u16 = 1;
pub const CHECKPOINT_TAG: &str = "DASCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Header fields of a DASG dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub version: u16,
    pub h: u16,
    pub w: u16,
    pub sampling_rate: u16,
    pub node_id: String,
    pub sample_count: u32,
}

fn write_u16(out: &mut impl Write, v: u16) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u32(out: &mut impl Write, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u16(input: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    input.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8(input: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    input.read_exact(&mut b)?;
    Ok(b[0])
}

fn fits_u16(value: usize, what: &str) -> Result<u16> {
    u16::try_from(value).map_err(|_| Error::format("dataset", format!("{what} {value} exceeds u16")))
}

/// Serialize a dataset. All windows must share one shape.
pub fn write_dataset(
    out: &mut impl Write,
    node_id: &str,
    sampling_rate: u32,
    samples: &[LabeledSample],
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let h = samples[0].window.h();
    let w = samples[0].window.w();
    for s in samples {
        s.validate()?;
        if s.window.h() != h || s.window.w() != w {
            return Err(Error::ShapeMismatch {
                want_h: h,
                want_w: w,
                got_h: s.window.h(),
                got_w: s.window.w(),
            });
        }
    }
    out.write_all(DASG_MAGIC)?;
    write_u16(out, DASG_VERSION)?;
    write_u16(out, fits_u16(h, "window height")?)?;
    write_u16(out, fits_u16(w, "window width")?)?;
    write_u16(out, fits_u16(sampling_rate as usize, "sampling rate")?)?;
    let id_bytes = node_id.as_bytes();
    write_u16(out, fits_u16(id_bytes.len(), "node id length")?)?;
    out.write_all(id_bytes)?;
    write_u32(
        out,
        u32::try_from(samples.len())
            .map_err(|_| Error::format("dataset", "sample count exceeds u32"))?,
    )?;
    for s in samples {
        out.write_all(&[s.label])?;
        for &v in s.window.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Deserialize a dataset written by [`write_dataset`].
pub fn read_dataset(input: &mut impl Read) -> Result<(DatasetMeta, Vec<LabeledSample>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DASG_MAGIC {
        return Err(Error::format("dataset", "bad magic"));
    }
    let version = read_u16(input)?;
    if version != DASG_VERSION {
        return Err(Error::format(
            "dataset",
            format!("unsupported version {version}"),
        ));
    }
    let h = read_u16(input)?;
    let w = read_u16(input)?;
    let sampling_rate = read_u16(input)?;
    if h == 0 || w == 0 {
        return Err(Error::format("dataset", "zero window dimension"));
    }
    let id_len = read_u16(input)? as usize;
    let mut id_bytes = vec![0u8; id_len];
    input.read_exact(&mut id_bytes)?;
    let node_id = String::from_utf8(id_bytes)
        .map_err(|_| Error::format("dataset", "node id is not UTF-8"))?;
    let sample_count = read_u32(input)?;

    let per_window = h as usize * w as usize;
    let mut samples = Vec::with_capacity(sample_count as usize);
    let mut raw = vec![0u8; per_window * 4];
    for _ in 0..sample_count {
        let label = read_u8(input)?;
        if label > 1 {
            return Err(Error::format("dataset", format!("label {label} not in {{0,1}}")));
        }
        input.read_exact(&mut raw)?;
        let mut values = Vec::with_capacity(per_window);
        for chunk in raw.chunks_exact(4) {
            values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        let window =
            PhaseWindow::from_data(h as usize, w as usize, values, 0, 0.0, node_id.clone())?;
        samples.push(LabeledSample { window, label });
    }
    let meta = DatasetMeta {
        version,
        h,
        w,
        sampling_rate,
        node_id,
        sample_count,
    };
    Ok((meta, samples))
}

pub fn write_dataset_file(
    path: &Path,
    node_id: &str,
    sampling_rate: u32,
    samples: &[LabeledSample],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset(&mut out, node_id, sampling_rate, samples)?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset_file(path: &Path) -> Result<(DatasetMeta, Vec<LabeledSample>)> {
    let mut input = BufReader::new(File::open(path)?);
    read_dataset(&mut input)
}

/// Write a checkpoint: descriptor line plus f32 parameter vector.
pub fn write_checkpoint(out: &mut impl Write, descriptor: &str, params: &[f32]) -> Result<()> {
    if descriptor.contains('\n') {
        return Err(Error::format("checkpoint", "descriptor must be one line"));
    }
    writeln!(out, "{CHECKPOINT_TAG} {CHECKPOINT_VERSION}")?;
    writeln!(out, "{descriptor}")?;
    write_u32(
        out,
        u32::try_from(params.len())
            .map_err(|_| Error::format("checkpoint", "parameter count exceeds u32"))?,
    )?;
    for &v in params {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint(input: &mut impl Read) -> Result<(String, Vec<f32>)> {
    fn read_line(input: &mut impl Read) -> Result<String> {
        let mut line = Vec::new();
        loop {
            let b = read_u8(input)?;
            if b == b'\n' {
                break;
            }
            line.push(b);
            if line.len() > 4096 {
                return Err(Error::format("checkpoint", "unterminated header line"));
            }
        }
        String::from_utf8(line).map_err(|_| Error::format("checkpoint", "header is not UTF-8"))
    }
    let tag_line = read_line(input)?;
    let mut parts = tag_line.split_whitespace();
    if parts.next() != Some(CHECKPOINT_TAG) {
        return Err(Error::format("checkpoint", "bad tag"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format("checkpoint", "missing version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let descriptor = read_line(input)?;
    let count = read_u32(input)? as usize;
    let mut raw = vec![0u8; count * 4];
    input.read_exact(&mut raw)?;
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((descriptor, params))
}

pub fn write_checkpoint_file(path: &Path, descriptor: &str, params: &[f32]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, descriptor, params)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint_file(path: &Path) -> Result<(String, Vec<f32>)> {
    let mut input = BufReader::new(File::open(path)?);
    read_checkpoint(&mut input)
}

/// Plain-text split manifest: one `train`/`test` line per sample index.
pub fn write_split_manifest(out: &mut impl Write, split: &DatasetSplit) -> Result<()> {
    writeln!(
        out,
        "# split ratio={} seed={} train={} test={}",
        split.split_ratio,
        split.split_seed,
        split.train_indices.len(),
        split.test_indices.len()
    )?;
    for &i in &split.train_indices {
        writeln!(out, "train\t{i}")?;
    }
    for &i in &split.test_indices {
        writeln!(out, "test\t{i}")?;
    }
    Ok(())
}

/// Parse a manifest back into (train, test) index lists.
pub fn read_split_manifest(input: &mut impl Read) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let side = parts.next().unwrap_or("");
        let idx: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("split manifest", format!("bad line '{line}'")))?;
        match side {
            "train" => train.push(idx),
            "test" => test.push(idx),
            other => {
                return Err(Error::format(
                    "split manifest",
                    format!("unknown side '{other}'"),
                ))
            }
        }
    }
    Ok((train, test))
}
