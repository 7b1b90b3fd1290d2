//! Reference decoders for the synthetic protocols and the valid/invalid
//! verdict built on them.

use super::synthetic::{ProtocolKind, FIXED_MESSAGE_LEN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {position}: {reason}")]
pub struct DecodeError {
    pub position: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedMessage {
    pub op_type: String,
    pub fields: Vec<(String, String)>,
}

impl ParsedMessage {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid,
}

fn err(position: usize, reason: &'static str) -> DecodeError {
    DecodeError { position, reason }
}

pub fn decode(msg: &[u8], kind: ProtocolKind) -> Result<ParsedMessage, DecodeError> {
    match kind {
        ProtocolKind::DirectoryText => decode_directory(msg),
        ProtocolKind::FixedWidthBinary => decode_fixed(msg),
    }
}

// `{` key `:` value ( `,` key `:` value )* `}` and nothing after.
fn decode_directory(msg: &[u8]) -> Result<ParsedMessage, DecodeError> {
    if msg.first() != Some(&b'{') {
        return Err(err(0, "expected '{'"));
    }
    let mut fields = Vec::new();
    let mut pos = 1;
    loop {
        let key_start = pos;
        while pos < msg.len() && msg[pos].is_ascii_lowercase() {
            pos += 1;
        }
        if pos == key_start {
            return Err(err(pos, "expected field name"));
        }
        if msg.get(pos) != Some(&b':') {
            return Err(err(pos, "expected ':'"));
        }
        let key = &msg[key_start..pos];
        pos += 1;
        let value_start = pos;
        while pos < msg.len()
            && !matches!(msg[pos], b',' | b'}' | b'{' | b':')
            && msg[pos].is_ascii_graphic()
        {
            pos += 1;
        }
        if pos == value_start {
            return Err(err(pos, "expected field value"));
        }
        fields.push((
            String::from_utf8_lossy(key).into_owned(),
            String::from_utf8_lossy(&msg[value_start..pos]).into_owned(),
        ));
        match msg.get(pos) {
            Some(b',') => pos += 1,
            Some(b'}') => {
                pos += 1;
                break;
            }
            _ => return Err(err(pos, "expected ',' or '}'")),
        }
    }
    if pos != msg.len() {
        return Err(err(pos, "trailing bytes after '}'"));
    }
    let op_type = fields
        .iter()
        .find(|(k, _)| k == "op")
        .map(|(_, v)| v.clone())
        .ok_or(err(pos, "missing op field"))?;
    Ok(ParsedMessage { op_type, fields })
}

fn decode_fixed(msg: &[u8]) -> Result<ParsedMessage, DecodeError> {
    if msg.len() != FIXED_MESSAGE_LEN {
        return Err(err(
            msg.len().min(FIXED_MESSAGE_LEN),
            "wrong message length",
        ));
    }
    if msg[0] & 0x7f == 0 {
        return Err(err(0, "invalid op code"));
    }
    if let Some(bad) = msg[5..].iter().position(|b| !(0x20..0x7f).contains(b)) {
        return Err(err(5 + bad, "non-printable payload byte"));
    }
    let correlation = u32::from_be_bytes([msg[1], msg[2], msg[3], msg[4]]);
    Ok(ParsedMessage {
        op_type: format!("0x{:02x}", msg[0]),
        fields: vec![
            ("correlation".into(), correlation.to_string()),
            (
                "payload".into(),
                String::from_utf8_lossy(&msg[5..]).trim_end().to_string(),
            ),
        ],
    })
}

/// Valid when `emulated` parses and carries the same operation type as
/// `expected`. Payloads may differ. An empty response (no match, or a
/// recorded no-response) never parses.
pub fn classify_response(emulated: &[u8], expected: &[u8], kind: ProtocolKind) -> Verdict {
    match (decode(emulated, kind), decode(expected, kind)) {
        (Ok(got), Ok(want)) if got.op_type == want.op_type => Verdict::Valid,
        _ => Verdict::Invalid,
    }
}
