//! Trace files.
//!
//! Binary `.nvtrace` layout, all integers little-endian:
//!
//! ```text
//! header: "NVT1" | version u8 | event count u64
//! record: length u16 | kind u8 | address u64 | timestamp u64 | payload [u8; 64] (inserts only)
//! ```
//!
//! `length` counts the bytes after the prefix (17 or 81). Kinds are
//! 0 insert, 1 read, 2 write_upgrade, 3 clean_evict_notify.
//!
//! The text form has one event per line, `#` starting a comment:
//!
//! ```text
//! insert 0x1f40 120 <128 hex digits>
//! read 0x1f40 131
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Access, TraceEvent};
use crate::codec::{Block, BLOCK_BYTES};
use crate::error::TraceError;

pub const TRACE_MAGIC: &[u8; 4] = b"NVT1";
pub const TRACE_VERSION: u8 = 1;

const HEADER_LEN: usize = 13;

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

pub fn write_trace(path: &Path, events: &[TraceEvent]) -> Result<(), TraceError> {
    let file = File::create(path).map_err(io_at(path))?;
    let mut w = BufWriter::new(file);
    write_trace_to(&mut w, events)?;
    w.flush().map_err(io_at(path))
}

pub fn write_trace_to<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<(), TraceError> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(TRACE_MAGIC);
    header[4] = TRACE_VERSION;
    header[5..].copy_from_slice(&(events.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut rec = Vec::with_capacity(2 + 17 + BLOCK_BYTES);
    for e in events {
        rec.clear();
        let body_len: u16 = if matches!(e.access, Access::Insert(_)) { 81 } else { 17 };
        rec.extend_from_slice(&body_len.to_le_bytes());
        rec.push(e.access.code());
        rec.extend_from_slice(&e.address.to_le_bytes());
        rec.extend_from_slice(&e.timestamp.to_le_bytes());
        if let Access::Insert(block) = &e.access {
            rec.extend_from_slice(block.as_bytes());
        }
        w.write_all(&rec)?;
    }
    Ok(())
}

/// Read a binary trace, or a text trace when the file does not start with
/// the binary magic.
pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let mut file = File::open(path).map_err(io_at(path))?;
    let mut head = [0u8; 4];
    let n = file.read(&mut head).map_err(io_at(path))?;
    drop(file);
    let file = File::open(path).map_err(io_at(path))?;
    if n == 4 && &head == TRACE_MAGIC {
        read_trace_from(BufReader::new(file))
    } else {
        read_text_trace(BufReader::new(file))
    }
}

pub fn read_trace_from<R: Read>(mut r: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let magic: [u8; 4] = header[..4].try_into().expect("four bytes");
    if &magic != TRACE_MAGIC {
        return Err(TraceError::BadMagic(magic));
    }
    if header[4] != TRACE_VERSION {
        return Err(TraceError::UnsupportedVersion(header[4]));
    }
    let expected = u64::from_le_bytes(header[5..].try_into().expect("eight bytes"));
    let mut events = Vec::with_capacity(expected.min(1 << 24) as usize);
    let mut body = [0u8; 81];
    let mut checker = Monotonic::default();
    for index in 0..expected {
        let mut len = [0u8; 2];
        if let Err(e) = r.read_exact(&mut len) {
            return Err(truncated_or(e, index, expected));
        }
        let len = u16::from_le_bytes(len) as usize;
        if len != 17 && len != 81 {
            return Err(TraceError::Malformed { index, reason: format!("record length {len}") });
        }
        if let Err(e) = r.read_exact(&mut body[..len]) {
            return Err(truncated_or(e, index, expected));
        }
        let address = u64::from_le_bytes(body[1..9].try_into().expect("eight bytes"));
        let timestamp = u64::from_le_bytes(body[9..17].try_into().expect("eight bytes"));
        let access = match (body[0], len) {
            (0, 81) => Access::Insert(Block::from_slice(&body[17..81]).expect("64 bytes")),
            (1, 17) => Access::Read,
            (2, 17) => Access::WriteUpgrade,
            (3, 17) => Access::CleanEvictNotify,
            (kind, len) => {
                return Err(TraceError::Malformed {
                    index,
                    reason: format!("kind {kind} with record length {len}"),
                })
            }
        };
        checker.check(index, timestamp)?;
        events.push(TraceEvent { timestamp, address, access });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(TraceError::Malformed { index: expected, reason: "data after last record".into() });
    }
    Ok(events)
}

fn truncated_or(e: std::io::Error, read: u64, expected: u64) -> TraceError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        TraceError::Truncated { read, expected }
    } else {
        TraceError::Stream(e)
    }
}

#[derive(Default)]
struct Monotonic(Option<u64>);

impl Monotonic {
    fn check(&mut self, index: u64, ts: u64) -> Result<(), TraceError> {
        if let Some(prev) = self.0 {
            if ts < prev {
                return Err(TraceError::NonMonotonic { index, previous: prev, current: ts });
            }
        }
        self.0 = Some(ts);
        Ok(())
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

pub fn read_text_trace<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    let mut checker = Monotonic::default();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let index = lineno as u64 + 1;
        let bad = |reason: String| TraceError::Malformed { index, reason };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(bad(format!("expected kind, address and timestamp in {content:?}")));
        }
        let address = parse_u64(fields[1]).ok_or_else(|| bad(format!("bad address {:?}", fields[1])))?;
        let timestamp = parse_u64(fields[2]).ok_or_else(|| bad(format!("bad timestamp {:?}", fields[2])))?;
        let access = match (fields[0], fields.len()) {
            ("insert", 4) => {
                let bytes = hex::decode(fields[3]).map_err(|e| bad(format!("bad payload: {e}")))?;
                let block = Block::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
                Access::Insert(block)
            }
            ("read", 3) => Access::Read,
            ("write_upgrade", 3) => Access::WriteUpgrade,
            ("clean_evict_notify", 3) => Access::CleanEvictNotify,
            (kind, n) => return Err(bad(format!("{kind} with {n} fields"))),
        };
        checker.check(index, timestamp)?;
        events.push(TraceEvent { timestamp, address, access });
    }
    Ok(events)
}

pub fn write_text_trace<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<(), TraceError> {
    for e in events {
        write!(w, "{} {:#x} {}", e.access.name(), e.address, e.timestamp)?;
        if let Access::Insert(block) = &e.access {
            write!(w, " {}", hex::encode(block.as_bytes()))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
