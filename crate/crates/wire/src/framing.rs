//! Message boundary codecs.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use svemu::Message;
use tokio::io::{AsyncRead, AsyncReadExt};

const PREFIX_LEN: usize = 4;
const READ_CHUNK: usize = 8 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum FramingError {
    #[error("invalid framing configuration: {0}")]
    InvalidSpec(&'static str),
    #[error("message of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: u64, max: usize },
    #[error("stream ended mid-message ({buffered} bytes buffered)")]
    Truncated { buffered: usize },
    #[error("message contains the delimiter")]
    DelimiterInMessage,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "delimiter")]
pub enum FramingMode {
    /// The whole stream up to end-of-stream is one message.
    ConnectionPerMessage,
    /// 4-byte big-endian length, then the payload.
    LengthPrefixed,
    /// Payload terminated by the delimiter bytes.
    Delimited(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramingSpec {
    pub mode: FramingMode,
    pub max_message_bytes: usize,
    #[serde(with = "millis")]
    pub response_timeout: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

pub const DEFAULT_MAX_MESSAGE_BYTES: usize = 16 * 1024 * 1024;
pub const DEFAULT_RESPONSE_TIMEOUT: Duration = Duration::from_millis(1000);

impl FramingSpec {
    pub fn new(mode: FramingMode) -> Result<Self, FramingError> {
        let spec = Self {
            mode,
            max_message_bytes: DEFAULT_MAX_MESSAGE_BYTES,
            response_timeout: DEFAULT_RESPONSE_TIMEOUT,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_max_message_bytes(mut self, max: usize) -> Result<Self, FramingError> {
        self.max_message_bytes = max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_response_timeout(mut self, timeout: Duration) -> Result<Self, FramingError> {
        self.response_timeout = timeout;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), FramingError> {
        if self.max_message_bytes == 0 {
            return Err(FramingError::InvalidSpec("max_message_bytes must be > 0"));
        }
        if self.response_timeout.is_zero() {
            return Err(FramingError::InvalidSpec("response timeout must be > 0"));
        }
        if matches!(&self.mode, FramingMode::Delimited(d) if d.is_empty()) {
            return Err(FramingError::InvalidSpec("delimiter must be non-empty"));
        }
        Ok(())
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Tries to cut one message off the front of `buf`. Returns the message and
/// the number of bytes consumed, or `None` when more input is needed.
/// `eof` marks `buf` as the complete remainder of the stream.
fn decode_one(
    buf: &[u8],
    spec: &FramingSpec,
    eof: bool,
) -> Result<Option<(Vec<u8>, usize)>, FramingError> {
    let max = spec.max_message_bytes;
    match &spec.mode {
        FramingMode::ConnectionPerMessage => {
            if buf.len() > max {
                return Err(FramingError::Oversize {
                    len: buf.len() as u64,
                    max,
                });
            }
            Ok((eof && !buf.is_empty()).then(|| (buf.to_vec(), buf.len())))
        }
        FramingMode::LengthPrefixed => {
            if buf.len() < PREFIX_LEN {
                return if eof && !buf.is_empty() {
                    Err(FramingError::Truncated {
                        buffered: buf.len(),
                    })
                } else {
                    Ok(None)
                };
            }
            let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as u64;
            if len > max as u64 {
                return Err(FramingError::Oversize { len, max });
            }
            let end = PREFIX_LEN + len as usize;
            if buf.len() >= end {
                Ok(Some((buf[PREFIX_LEN..end].to_vec(), end)))
            } else if eof {
                Err(FramingError::Truncated {
                    buffered: buf.len(),
                })
            } else {
                Ok(None)
            }
        }
        FramingMode::Delimited(delim) => match find(buf, delim) {
            Some(at) if at > max => Err(FramingError::Oversize {
                len: at as u64,
                max,
            }),
            Some(at) => Ok(Some((buf[..at].to_vec(), at + delim.len()))),
            None if buf.len() >= max + delim.len() => Err(FramingError::Oversize {
                len: buf.len() as u64,
                max,
            }),
            None if eof && !buf.is_empty() => Err(FramingError::Truncated {
                buffered: buf.len(),
            }),
            None => Ok(None),
        },
    }
}

/// Splits a complete byte stream into messages.
pub fn frame_split(stream: &[u8], spec: &FramingSpec) -> Result<Vec<Message>, FramingError> {
    spec.validate()?;
    let mut out = Vec::new();
    let mut rest = stream;
    while let Some((msg, used)) = decode_one(rest, spec, true)? {
        out.push(Message::new(msg));
        rest = &rest[used..];
        if rest.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// Wire bytes for one message. Connection-per-message framing adds nothing;
/// the sender marks the end by closing its write side.
pub fn frame_encode(msg: &[u8], spec: &FramingSpec) -> Result<Vec<u8>, FramingError> {
    if msg.len() > spec.max_message_bytes {
        return Err(FramingError::Oversize {
            len: msg.len() as u64,
            max: spec.max_message_bytes,
        });
    }
    Ok(match &spec.mode {
        FramingMode::ConnectionPerMessage => msg.to_vec(),
        FramingMode::LengthPrefixed => {
            let len = u32::try_from(msg.len()).map_err(|_| FramingError::Oversize {
                len: msg.len() as u64,
                max: u32::MAX as usize,
            })?;
            let mut out = Vec::with_capacity(PREFIX_LEN + msg.len());
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(msg);
            out
        }
        FramingMode::Delimited(delim) => {
            if find(msg, delim).is_some() {
                return Err(FramingError::DelimiterInMessage);
            }
            let mut out = Vec::with_capacity(msg.len() + delim.len());
            out.extend_from_slice(msg);
            out.extend_from_slice(delim);
            out
        }
    })
}

/// Incremental decoder over an async byte source.
pub struct FrameReader<R> {
    inner: R,
    spec: FramingSpec,
    buf: Vec<u8>,
    eof: bool,
}

impl<R: AsyncRead + Unpin> FrameReader<R> {
    pub fn new(inner: R, spec: FramingSpec) -> Self {
        Self {
            inner,
            spec,
            buf: Vec::new(),
            eof: false,
        }
    }

    /// Next message, or `None` at a clean end of stream. Cancel safe: a
    /// dropped call loses no buffered bytes.
    pub async fn next_message(&mut self) -> Result<Option<Vec<u8>>, FramingError> {
        loop {
            if let Some((msg, used)) = decode_one(&self.buf, &self.spec, self.eof)? {
                self.buf.drain(..used);
                return Ok(Some(msg));
            }
            if self.eof {
                return Ok(None);
            }
            self.buf.reserve(READ_CHUNK);
            self.eof = self.inner.read_buf(&mut self.buf).await? == 0;
        }
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn len() -> FramingSpec {
        FramingSpec::new(FramingMode::LengthPrefixed).unwrap()
    }

    fn delim(d: &[u8]) -> FramingSpec {
        FramingSpec::new(FramingMode::Delimited(d.to_vec())).unwrap()
    }

    fn bytes(msgs: Vec<Message>) -> Vec<Vec<u8>> {
        msgs.into_iter().map(Message::into_bytes).collect()
    }

    #[test]
    fn length_prefixed_example() {
        assert_eq!(
            bytes(frame_split(&[0, 0, 0, 2, 0x61, 0x62], &len()).unwrap()),
            vec![b"ab".to_vec()]
        );
    }

    #[test]
    fn delimited_example() {
        assert_eq!(
            bytes(frame_split(b"a;b;", &delim(b";")).unwrap()),
            vec![b"a".to_vec(), b"b".to_vec()]
        );
    }

    #[test]
    fn truncated_length_prefixed_stream() {
        assert!(matches!(
            frame_split(&[0, 0, 0, 5, 0x61], &len()),
            Err(FramingError::Truncated { buffered: 5 })
        ));
        assert!(matches!(
            frame_split(&[0, 0], &len()),
            Err(FramingError::Truncated { .. })
        ));
    }

    #[test]
    fn declared_length_over_the_limit() {
        let spec = len().with_max_message_bytes(3).unwrap();
        assert!(matches!(
            frame_split(&[0, 0, 0, 4, 1, 2, 3, 4], &spec),
            Err(FramingError::Oversize { len: 4, max: 3 })
        ));
    }

    #[test]
    fn delimited_oversize_and_truncation() {
        let spec = delim(b"\r\n").with_max_message_bytes(4).unwrap();
        assert!(matches!(
            frame_split(b"abcdefgh\r\n", &spec),
            Err(FramingError::Oversize { .. })
        ));
        assert!(matches!(
            frame_split(b"ab\r\ncd", &spec),
            Err(FramingError::Truncated { buffered: 2 })
        ));
        assert_eq!(
            bytes(frame_split(b"abcd\r\n", &spec).unwrap()),
            vec![b"abcd".to_vec()]
        );
    }

    #[test]
    fn connection_per_message_takes_everything() {
        let spec = FramingSpec::new(FramingMode::ConnectionPerMessage).unwrap();
        assert_eq!(
            bytes(frame_split(b"a;b", &spec).unwrap()),
            vec![b"a;b".to_vec()]
        );
        assert!(frame_split(b"", &spec).unwrap().is_empty());
        assert_eq!(frame_encode(b"xy", &spec).unwrap(), b"xy");
    }

    #[test]
    fn encode_rejects_embedded_delimiter() {
        assert!(matches!(
            frame_encode(b"a;b", &delim(b";")),
            Err(FramingError::DelimiterInMessage)
        ));
        assert_eq!(frame_encode(b"ab", &delim(b";")).unwrap(), b"ab;");
        assert_eq!(
            frame_encode(b"ab", &len()).unwrap(),
            [0, 0, 0, 2, b'a', b'b']
        );
    }

    #[test]
    fn spec_validation() {
        assert!(FramingSpec::new(FramingMode::Delimited(Vec::new())).is_err());
        assert!(len().with_max_message_bytes(0).is_err());
        assert!(len().with_response_timeout(Duration::ZERO).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = delim(b"\n");
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["mode"]["mode"], "delimited");
        assert_eq!(json["response_timeout"], 1000);
        assert_eq!(serde_json::from_value::<FramingSpec>(json).unwrap(), spec);
    }

    #[tokio::test]
    async fn reader_handles_split_reads() {
        let (mut tx, rx) = tokio::io::duplex(3);
        let writer = tokio::spawn(async move {
            use tokio::io::AsyncWriteExt;
            tx.write_all(&[0, 0, 0, 3, b'a', b'b', b'c', 0, 0, 0, 1, b'z'])
                .await
                .unwrap();
        });
        let mut r = FrameReader::new(rx, len());
        assert_eq!(r.next_message().await.unwrap(), Some(b"abc".to_vec()));
        assert_eq!(r.next_message().await.unwrap(), Some(b"z".to_vec()));
        writer.await.unwrap();
        assert_eq!(r.next_message().await.unwrap(), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn length_prefixed_round_trip(msgs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 0..8)) {
            let spec = len();
            let stream: Vec<u8> = msgs.iter().flat_map(|m| frame_encode(m, &spec).unwrap()).collect();
            prop_assert_eq!(bytes(frame_split(&stream, &spec).unwrap()), msgs);
        }

        #[test]
        fn delimited_round_trip(msgs in proptest::collection::vec(proptest::collection::vec(0u8..=254, 0..64), 0..8)) {
            let spec = delim(&[0xff, 0xff]);
            let stream: Vec<u8> = msgs.iter().flat_map(|m| frame_encode(m, &spec).unwrap()).collect();
            prop_assert_eq!(bytes(frame_split(&stream, &spec).unwrap()), msgs);
        }
    }
}
