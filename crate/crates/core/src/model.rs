//! Messages, interactions and the interaction library, plus the
//! line-delimited JSON file format the library is persisted in.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}: {reason}")]
    Load { line: usize, reason: String },
    #[error("library must be non-empty")]
    EmptyLibrary,
    #[error("invalid interaction: {0}")]
    Validation(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A finite octet sequence exchanged on the wire.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Message(Vec<u8>);

impl Message {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl Deref for Message {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for Message {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for Message {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl From<&[u8]> for Message {
    fn from(v: &[u8]) -> Self {
        Self(v.to_vec())
    }
}

impl From<String> for Message {
    fn from(s: String) -> Self {
        Self(s.into_bytes())
    }
}

impl From<&str> for Message {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.0.escape_ascii())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.escape_ascii())
    }
}

/// A recorded request and the response it produced.
///
/// A request that produced no reply is stored with an empty response and
/// `no_response` set; otherwise the response is non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    request: Message,
    response: Message,
    no_response: bool,
}

impl Interaction {
    pub fn new(
        request: impl Into<Message>,
        response: impl Into<Message>,
    ) -> Result<Self, ModelError> {
        Self::from_parts(request.into(), response.into(), false)
    }

    pub fn without_response(request: impl Into<Message>) -> Result<Self, ModelError> {
        Self::from_parts(request.into(), Message::default(), true)
    }

    pub fn from_parts(
        request: Message,
        response: Message,
        no_response: bool,
    ) -> Result<Self, ModelError> {
        if request.is_empty() {
            return Err(ModelError::Validation("request must be non-empty"));
        }
        match (no_response, response.is_empty()) {
            (true, false) => Err(ModelError::Validation(
                "no-response record carries a payload",
            )),
            (false, true) => Err(ModelError::Validation(
                "response must be non-empty unless no_response is set",
            )),
            _ => Ok(Self {
                request,
                response,
                no_response,
            }),
        }
    }

    pub fn request(&self) -> &Message {
        &self.request
    }

    pub fn response(&self) -> &Message {
        &self.response
    }

    pub fn no_response(&self) -> bool {
        self.no_response
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    request: String,
    response: String,
    #[serde(default)]
    no_response: bool,
}

/// Appends one library record (a JSON object and a trailing 0x0A) to `sink`.
///
/// The whole line is handed to a single `write_all` call.
pub fn write_record<W: Write>(sink: &mut W, interaction: &Interaction) -> std::io::Result<()> {
    sink.write_all(&encode_record(interaction))
}

/// Encodes one library record, newline included.
pub fn encode_record(interaction: &Interaction) -> Vec<u8> {
    let record = Record {
        request: B64.encode(interaction.request.as_bytes()),
        response: B64.encode(interaction.response.as_bytes()),
        no_response: interaction.no_response,
    };
    let mut line = serde_json::to_vec(&record).expect("record serialization is infallible");
    line.push(b'\n');
    line
}

fn decode_record(line: &[u8], line_no: usize) -> Result<Interaction, ModelError> {
    let load_err = |reason: String| ModelError::Load {
        line: line_no,
        reason,
    };
    let record: Record = serde_json::from_slice(line).map_err(|e| load_err(e.to_string()))?;
    let request = B64
        .decode(record.request.as_bytes())
        .map_err(|e| load_err(format!("request: {e}")))?;
    let response = B64
        .decode(record.response.as_bytes())
        .map_err(|e| load_err(format!("response: {e}")))?;
    Interaction::from_parts(request.into(), response.into(), record.no_response).map_err(
        |e| match e {
            ModelError::Validation(msg) => load_err(msg.to_string()),
            other => other,
        },
    )
}

/// Ordered interactions, addressed by 1-based index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionLibrary {
    interactions: Vec<Interaction>,
}

impl InteractionLibrary {
    pub fn new(interactions: Vec<Interaction>) -> Result<Self, ModelError> {
        if interactions.is_empty() {
            return Err(ModelError::EmptyLibrary);
        }
        Ok(Self { interactions })
    }

    /// An empty library, only useful as the seed of a sequence of appends.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Interaction at 1-based `index`.
    pub fn get(&self, index: usize) -> Option<&Interaction> {
        index.checked_sub(1).and_then(|i| self.interactions.get(i))
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// `(index, interaction)` pairs with 1-based indices.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Interaction)> + '_ {
        self.interactions
            .iter()
            .enumerate()
            .map(|(i, x)| (i + 1, x))
    }

    pub fn requests(&self) -> impl Iterator<Item = &Message> + '_ {
        self.interactions.iter().map(Interaction::request)
    }

    pub fn ensure_non_empty(&self) -> Result<(), ModelError> {
        if self.is_empty() {
            Err(ModelError::EmptyLibrary)
        } else {
            Ok(())
        }
    }

    /// Returns a new library with `interaction` at index `len + 1`.
    pub fn append(&self, interaction: Interaction) -> Result<Self, ModelError> {
        let interaction = Interaction::from_parts(
            interaction.request,
            interaction.response,
            interaction.no_response,
        )?;
        let mut interactions = self.interactions.clone();
        interactions.push(interaction);
        Ok(Self { interactions })
    }

    pub fn push(&mut self, interaction: Interaction) {
        self.interactions.push(interaction);
    }

    /// Library made of the given 1-based indices, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, ModelError> {
        let interactions = indices
            .iter()
            .map(|&i| {
                self.get(i)
                    .cloned()
                    .ok_or(ModelError::Validation("subset index out of range"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(interactions)
    }

    pub fn load<R: BufRead>(mut source: R) -> Result<Self, ModelError> {
        let mut interactions = Vec::new();
        let mut line = Vec::new();
        let mut line_no = 0;
        loop {
            line.clear();
            if source.read_until(b'\n', &mut line)? == 0 {
                break;
            }
            line_no += 1;
            if line.last() == Some(&b'\n') {
                line.pop();
            }
            interactions.push(decode_record(&line, line_no)?);
        }
        Self::new(interactions)
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), ModelError> {
        self.ensure_non_empty()?;
        for interaction in &self.interactions {
            write_record(&mut sink, interaction)?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut out = Vec::new();
        self.save(&mut out)?;
        Ok(out)
    }

    /// Hex SHA-256 of the library's saved form.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for interaction in &self.interactions {
            hasher.update(encode_record(interaction));
        }
        hex::encode(hasher.finalize())
    }
}

impl<'a> IntoIterator for &'a InteractionLibrary {
    type Item = &'a Interaction;
    type IntoIter = std::slice::Iter<'a, Interaction>;

    fn into_iter(self) -> Self::IntoIter {
        self.interactions.iter()
    }
}
