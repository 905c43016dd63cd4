//! Run-length scoreboard encoding.
//!
//! All integers are unsigned LEB128 and must be minimally encoded.
//!
//! ```text
//! board  := varint(entry_count) entry*
//! entry  := varint(auditee) varint(bit_len) [u8 first_bit varint(run_count) varint(run)*]
//! ```
//!
//! Entries are sorted by strictly increasing auditee id. The bracketed part
//! is present only when `bit_len > 0`; runs alternate starting from
//! `first_bit`, are each positive, and sum to `bit_len`.

use std::collections::BTreeMap;

use super::AuditError;
use crate::coordination::SpId;

pub type BoardEntries = BTreeMap<SpId, Vec<bool>>;

/// Longest bit vector a decoder will materialize for one entry.
pub const MAX_ENTRY_BITS: u64 = 1 << 24;

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn byte(&mut self) -> Result<u8, AuditError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or(AuditError::Format("truncated scoreboard"))?;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64, AuditError> {
        let mut value = 0u64;
        for i in 0..10 {
            let b = self.byte()?;
            let chunk = (b & 0x7f) as u64;
            if i == 9 && chunk > 1 {
                return Err(AuditError::Format("varint overflows 64 bits"));
            }
            value |= chunk << (7 * i);
            if b & 0x80 == 0 {
                if i > 0 && b == 0 {
                    return Err(AuditError::Format("non-minimal varint"));
                }
                return Ok(value);
            }
        }
        Err(AuditError::Format("varint too long"))
    }
}

pub fn compress_scoreboard(entries: &BoardEntries) -> Vec<u8> {
    let mut out = Vec::new();
    put_varint(&mut out, entries.len() as u64);
    for (auditee, bits) in entries {
        put_varint(&mut out, auditee.0 as u64);
        put_varint(&mut out, bits.len() as u64);
        let Some(&first) = bits.first() else { continue };
        let mut runs = Vec::new();
        let mut current = first;
        let mut len = 0u64;
        for &b in bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        out.push(first as u8);
        put_varint(&mut out, runs.len() as u64);
        for r in runs {
            put_varint(&mut out, r);
        }
    }
    out
}

pub fn decompress_scoreboard(bytes: &[u8]) -> Result<BoardEntries, AuditError> {
    let mut r = Reader { bytes, pos: 0 };
    let count = r.varint()?;
    let mut entries = BoardEntries::new();
    let mut prev: Option<u64> = None;
    for _ in 0..count {
        let auditee = r.varint()?;
        if auditee > u32::MAX as u64 {
            return Err(AuditError::Format("auditee id out of range"));
        }
        if prev.is_some_and(|p| p >= auditee) {
            return Err(AuditError::Format("entries not strictly sorted"));
        }
        prev = Some(auditee);
        let bit_len = r.varint()?;
        if bit_len > MAX_ENTRY_BITS {
            return Err(AuditError::Format("entry longer than the decoder limit"));
        }
        let mut bits = Vec::new();
        if bit_len > 0 {
            let mut current = match r.byte()? {
                0 => false,
                1 => true,
                _ => return Err(AuditError::Format("first bit must be 0 or 1")),
            };
            let run_count = r.varint()?;
            if run_count > bit_len {
                return Err(AuditError::Format("more runs than bits"));
            }
            let mut total = 0u64;
            for _ in 0..run_count {
                let run = r.varint()?;
                total = total
                    .checked_add(run)
                    .filter(|&t| t <= bit_len)
                    .ok_or(AuditError::Format("runs exceed entry length"))?;
                if run == 0 {
                    return Err(AuditError::Format("zero-length run"));
                }
                bits.extend(std::iter::repeat_n(current, run as usize));
                current = !current;
            }
            if total != bit_len {
                return Err(AuditError::Format("runs do not cover entry length"));
            }
        }
        entries.insert(SpId(auditee as u32), bits);
    }
    if r.pos != bytes.len() {
        return Err(AuditError::Format("trailing bytes"));
    }
    Ok(entries)
}
