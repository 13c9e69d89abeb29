//! Sequence files: binary `LSQ4` and one-sequence-per-line CSV.
//!
//! Binary layout, all little-endian: `"LSQ4"`, then u32 version, batch,
//! length, features, reserved, then `batch·length·features` f64 values in
//! `(batch, time, feature)` order.

use liquid_s4::conv::SequenceBatch;

pub const MAGIC: &[u8; 4] = b"LSQ4";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "parse error at byte {}: {}", self.offset, self.message)
    }
}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

/// Binary if the magic matches, CSV otherwise.
pub fn parse_sequences(bytes: &[u8]) -> Result<SequenceBatch, ParseError> {
    if bytes.is_empty() {
        return fail(0, "empty input");
    }
    if bytes.starts_with(MAGIC) {
        parse_binary(bytes)
    } else {
        parse_csv(bytes)
    }
}

pub fn parse_binary(bytes: &[u8]) -> Result<SequenceBatch, ParseError> {
    if bytes.len() < HEADER_LEN {
        return fail(bytes.len(), format!("header needs {HEADER_LEN} bytes"));
    }
    if &bytes[..4] != MAGIC {
        return fail(0, "missing LSQ4 magic");
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    if field(0) != VERSION {
        return fail(4, format!("unsupported version {}", field(0)));
    }
    let (batch, length, features) = (field(1) as usize, field(2) as usize, field(3) as usize);
    let count = batch
        .checked_mul(length)
        .and_then(|n| n.checked_mul(features))
        .filter(|&n| n > 0);
    let Some(count) = count else {
        return fail(8, "batch, length and features must be positive");
    };
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 8 {
        return fail(
            HEADER_LEN + body.len().min(count * 8),
            format!("expected {} data bytes, found {}", count * 8, body.len()),
        );
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return fail(HEADER_LEN + 8 * i, "non-finite value");
        }
        values.push(v);
    }
    Ok(SequenceBatch::new(batch, length, features, values).expect("shape checked above"))
}

/// One single-feature sequence per non-blank line.
pub fn parse_csv(bytes: &[u8]) -> Result<SequenceBatch, ParseError> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => return fail(e.valid_up_to(), "invalid UTF-8"),
    };
    let mut seqs: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            continue;
        }
        let mut seq = Vec::new();
        let mut pos = start;
        for field in body.split(',') {
            let lead = field.len() - field.trim_start().len();
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => seq.push(v),
                _ => return fail(pos + lead, format!("invalid number `{}`", field.trim())),
            }
            pos += field.len() + 1;
        }
        if let Some(first) = seqs.first() {
            if first.len() != seq.len() {
                return fail(
                    start,
                    format!("line has {} values, expected {}", seq.len(), first.len()),
                );
            }
        }
        seqs.push(seq);
    }
    if seqs.is_empty() {
        return fail(0, "no sequences");
    }
    Ok(SequenceBatch::from_sequences(&seqs).expect("lengths checked above"))
}

pub fn encode_binary(batch: &SequenceBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * batch.values.len());
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        batch.batch as u32,
        batch.length as u32,
        batch.features as u32,
        0,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &batch.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// CSV holds single-feature batches only.
pub fn encode_csv(batch: &SequenceBatch) -> Option<String> {
    if batch.features != 1 {
        return None;
    }
    let mut out = String::new();
    for b in 0..batch.batch {
        let line: Vec<String> = batch.channel(b, 0).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Some(out)
}
