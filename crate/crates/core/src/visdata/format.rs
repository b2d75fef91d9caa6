//! `RVIS` little-endian layout.
//!
//! ```text
//! header (64 bytes)
//!   0  magic "RVIS"        4  version u32       8  n_records u64
//!  16  n_freq u32         20  n_corr u32       24  n_time_slices u32
//!  28  w_min_native f64   36  w_max_native f64 44  uv_extent_native f64
//!  52  prng_id u32        56  seed u64
//! record (28 + 12 * n_freq * n_corr bytes)
//!   u f64 | v f64 | w f64 | time_index u32
//!   (re f32, im f32) x n_ch | weight f32 x n_ch
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use num_complex::Complex32;

use super::{ChunkAxis, ChunkSpec, DatasetHeader, Result, VisError, VisRecord};

pub const MAGIC: [u8; 4] = *b"RVIS";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 64;

/// Bytes per record for a given channel count.
pub fn record_bytes(n_channels: usize) -> usize {
    28 + 12 * n_channels
}

fn encode_header(h: &DatasetHeader) -> [u8; HEADER_BYTES] {
    let mut b = [0u8; HEADER_BYTES];
    b[0..4].copy_from_slice(&MAGIC);
    b[4..8].copy_from_slice(&h.version.to_le_bytes());
    b[8..16].copy_from_slice(&h.n_records.to_le_bytes());
    b[16..20].copy_from_slice(&h.n_freq.to_le_bytes());
    b[20..24].copy_from_slice(&h.n_corr.to_le_bytes());
    b[24..28].copy_from_slice(&h.n_time_slices.to_le_bytes());
    b[28..36].copy_from_slice(&h.w_min_native.to_le_bytes());
    b[36..44].copy_from_slice(&h.w_max_native.to_le_bytes());
    b[44..52].copy_from_slice(&h.uv_extent_native.to_le_bytes());
    b[52..56].copy_from_slice(&h.prng_id.to_le_bytes());
    b[56..64].copy_from_slice(&h.seed.to_le_bytes());
    b
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}
fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}
fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}
fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn decode_header(b: &[u8; HEADER_BYTES]) -> Result<DatasetHeader> {
    let magic: [u8; 4] = b[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(VisError::BadMagic(magic));
    }
    let version = u32_at(b, 4);
    if version != VERSION {
        return Err(VisError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let header = DatasetHeader {
        version,
        n_records: u64_at(b, 8),
        n_freq: u32_at(b, 16),
        n_corr: u32_at(b, 20),
        n_time_slices: u32_at(b, 24),
        w_min_native: f64_at(b, 28),
        w_max_native: f64_at(b, 36),
        uv_extent_native: f64_at(b, 44),
        prng_id: u32_at(b, 52),
        seed: u64_at(b, 56),
    };
    header.validate()?;
    Ok(header)
}

fn check_records(records: &[VisRecord], header: &DatasetHeader) -> Result<()> {
    header.validate()?;
    if header.n_records != records.len() as u64 {
        return Err(VisError::CountMismatch(format!(
            "header says {} records, got {}",
            header.n_records,
            records.len()
        )));
    }
    let n_ch = header.n_channels();
    for (index, r) in records.iter().enumerate() {
        r.validate(n_ch)
            .map_err(|reason| VisError::InvalidRecord { index, reason })?;
        if r.time_index >= header.n_time_slices {
            return Err(VisError::InvalidRecord {
                index,
                reason: format!(
                    "time_index {} >= n_time_slices {}",
                    r.time_index, header.n_time_slices
                ),
            });
        }
    }
    Ok(())
}

/// Serializes a validated dataset into any writer.
pub fn write_dataset_to<W: Write>(
    records: &[VisRecord],
    header: &DatasetHeader,
    mut out: W,
) -> Result<()> {
    check_records(records, header)?;
    out.write_all(&encode_header(header))?;
    let mut buf = Vec::with_capacity(record_bytes(header.n_channels()));
    for r in records {
        buf.clear();
        buf.extend_from_slice(&r.u.to_le_bytes());
        buf.extend_from_slice(&r.v.to_le_bytes());
        buf.extend_from_slice(&r.w.to_le_bytes());
        buf.extend_from_slice(&r.time_index.to_le_bytes());
        for c in &r.vis {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        for w in &r.weight {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(records: &[VisRecord], header: &DatasetHeader, path: &Path) -> Result<()> {
    // validate before touching the filesystem
    check_records(records, header)?;
    let io = |source| VisError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_dataset_to(records, header, BufWriter::new(file)).map_err(|e| match e {
        VisError::Stream(source) => io(source),
        other => other,
    })
}

fn read_exact_or_truncated<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            VisError::Truncated(what.to_string())
        } else {
            VisError::Stream(e)
        }
    })
}

/// Reads the records belonging to `chunk` from a byte stream.
///
/// The returned header describes the chunk: `n_records` and `n_freq` are
/// those of the returned data, everything else is copied from the file.
pub fn read_dataset_from<R: Read>(
    mut input: R,
    chunk: ChunkSpec,
) -> Result<(DatasetHeader, Vec<VisRecord>)> {
    let mut hb = [0u8; HEADER_BYTES];
    read_exact_or_truncated(&mut input, &mut hb, "header")?;
    let header = decode_header(&hb)?;
    let range = chunk.check(&header)?;

    let n_corr = header.n_corr as usize;
    let n_ch = header.n_channels();
    let (ch_lo, ch_hi) = match chunk.axis {
        ChunkAxis::Frequency => (range.start * n_corr, range.end * n_corr),
        ChunkAxis::Time => (0, n_ch),
    };
    let mut buf = vec![0u8; record_bytes(n_ch)];
    let mut records = Vec::new();
    for i in 0..header.n_records {
        read_exact_or_truncated(&mut input, &mut buf, &format!("record {i}"))?;
        let time_index = u32_at(&buf, 24);
        if chunk.axis == ChunkAxis::Time && !range.contains(&(time_index as usize)) {
            continue;
        }
        let vis = (ch_lo..ch_hi)
            .map(|c| Complex32::new(f32_at(&buf, 28 + 8 * c), f32_at(&buf, 32 + 8 * c)))
            .collect();
        let weight = (ch_lo..ch_hi)
            .map(|c| f32_at(&buf, 28 + 8 * n_ch + 4 * c))
            .collect();
        records.push(VisRecord {
            u: f64_at(&buf, 0),
            v: f64_at(&buf, 8),
            w: f64_at(&buf, 16),
            time_index,
            vis,
            weight,
        });
    }
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(VisError::TrailingBytes);
    }

    let mut out_header = header;
    out_header.n_records = records.len() as u64;
    if chunk.axis == ChunkAxis::Frequency {
        out_header.n_freq = range.len() as u32;
    }
    Ok((out_header, records))
}

pub fn read_dataset(path: &Path, chunk: ChunkSpec) -> Result<(DatasetHeader, Vec<VisRecord>)> {
    let file = File::open(path).map_err(|source| VisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset_from(BufReader::new(file), chunk)
}

/// Header of a dataset file without reading its records.
pub fn read_header(path: &Path) -> Result<DatasetHeader> {
    let mut file = File::open(path).map_err(|source| VisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut hb = [0u8; HEADER_BYTES];
    read_exact_or_truncated(&mut file, &mut hb, "header")?;
    decode_header(&hb)
}
