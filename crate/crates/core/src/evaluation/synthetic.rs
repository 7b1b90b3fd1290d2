//! Seeded generators for two small protocols: a brace-delimited text
//! directory service, and a fixed-width binary transaction protocol with the
//! operation code at byte 0.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{Interaction, InteractionLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    DirectoryText,
    FixedWidthBinary,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::DirectoryText => "directory",
            ProtocolKind::FixedWidthBinary => "fixed",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "directory" | "directory_text" => Ok(ProtocolKind::DirectoryText),
            "fixed" | "fixed_width_binary" => Ok(ProtocolKind::FixedWidthBinary),
            other => Err(EvalError::Config(format!(
                "unknown protocol kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticProtocolSpec {
    pub kind: ProtocolKind,
    pub n_interactions: usize,
    pub n_operation_types: usize,
    pub seed: u64,
}

/// One directory-service operation: the request opcode and the response
/// operation name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectoryOp {
    pub request: &'static str,
    pub response: &'static str,
}

pub const DIRECTORY_OPS: [DirectoryOp; 8] = [
    DirectoryOp {
        request: "S",
        response: "SearchRsp",
    },
    DirectoryOp {
        request: "A",
        response: "AddRsp",
    },
    DirectoryOp {
        request: "D",
        response: "DelRsp",
    },
    DirectoryOp {
        request: "M",
        response: "ModifyRsp",
    },
    DirectoryOp {
        request: "C",
        response: "CompareRsp",
    },
    DirectoryOp {
        request: "B",
        response: "BindRsp",
    },
    DirectoryOp {
        request: "R",
        response: "RenameRsp",
    },
    DirectoryOp {
        request: "U",
        response: "UnbindRsp",
    },
];

/// Highest operation count the fixed-width generator supports (op codes
/// `0x01..=0x7f`).
pub const MAX_FIXED_OPS: usize = 0x7f;

pub const FIXED_PAYLOAD_WIDTH: usize = 16;
pub const FIXED_MESSAGE_LEN: usize = 5 + FIXED_PAYLOAD_WIDTH;

pub(crate) const SURNAMES: [&str; 48] = [
    "Du",
    "Versteeg",
    "Schneider",
    "Han",
    "Grundy",
    "Hine",
    "Will",
    "Bird",
    "Hossain",
    "Nguyen",
    "Smith",
    "Garcia",
    "Muller",
    "Rossi",
    "Kowalski",
    "Tanaka",
    "Okafor",
    "Silva",
    "Ivanova",
    "Johansson",
    "Murphy",
    "Dubois",
    "Cohen",
    "Kim",
    "Patel",
    "Singh",
    "Novak",
    "Horvat",
    "Larsen",
    "Moreau",
    "Fischer",
    "Weber",
    "Costa",
    "Lopez",
    "Khan",
    "Ahmed",
    "Wang",
    "Li",
    "Zhang",
    "Chen",
    "Brown",
    "Wilson",
    "Taylor",
    "Martin",
    "Lee",
    "Walker",
    "Young",
    "King",
];

pub(crate) const GIVEN_NAMES: [&str; 24] = [
    "Miao", "Steve", "Jun", "John", "Jean", "Menka", "Ana", "Omar", "Ines", "Li", "Sam", "Eva",
    "Raj", "Yuki", "Lars", "Mia", "Ola", "Tom", "Zoe", "Ben", "Ivy", "Max", "Noa", "Kai",
];

impl SyntheticProtocolSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_interactions == 0 {
            return Err(EvalError::Config("n_interactions must be > 0".into()));
        }
        let max_ops = match self.kind {
            ProtocolKind::DirectoryText => DIRECTORY_OPS.len(),
            ProtocolKind::FixedWidthBinary => MAX_FIXED_OPS,
        };
        if self.n_operation_types == 0 || self.n_operation_types > max_ops {
            return Err(EvalError::Config(format!(
                "n_operation_types must lie in 1..={max_ops} for {}",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// Builds a library from `spec`; the same spec always yields the same bytes.
pub fn generate_synthetic(spec: &SyntheticProtocolSpec) -> Result<InteractionLibrary, EvalError> {
    spec.validate()?;
    match spec.kind {
        ProtocolKind::DirectoryText => generate_directory(
            spec.n_interactions,
            &DIRECTORY_OPS[..spec.n_operation_types],
            spec.seed,
        ),
        ProtocolKind::FixedWidthBinary => {
            generate_fixed(spec.n_interactions, spec.n_operation_types, spec.seed)
        }
    }
}

/// Directory-service traffic over an explicit opcode alphabet.
pub fn generate_directory(
    n: usize,
    ops: &[DirectoryOp],
    seed: u64,
) -> Result<InteractionLibrary, EvalError> {
    if ops.is_empty() {
        return Err(EvalError::Config(
            "opcode alphabet must be non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lib = InteractionLibrary::empty();
    for _ in 0..n {
        let op = ops[rng.random_range(0..ops.len())];
        let id = rng.random_range(0..1000u32);
        let sn = *SURNAMES.choose(&mut rng).expect("non-empty pool");
        let request = format!("{{id:{id:03},op:{},sn:{sn}}}", op.request);
        let response = match op.request {
            "S" => {
                let gn = GIVEN_NAMES.choose(&mut rng).expect("non-empty pool");
                let digits = rng.random_range(6..=8);
                let mobile: String = (0..digits)
                    .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
                    .collect();
                format!(
                    "{{id:{id:03},op:{},result:Ok,gn:{gn},sn:{sn},mobile:{mobile}}}",
                    op.response
                )
            }
            "M" | "R" => format!("{{id:{id:03},op:{},result:Ok,sn:{sn}}}", op.response),
            _ => format!("{{id:{id:03},op:{},result:Ok}}", op.response),
        };
        lib.push(Interaction::new(request, response).expect("generated messages are non-empty"));
    }
    Ok(lib)
}

fn pad_field(text: &str) -> [u8; FIXED_PAYLOAD_WIDTH] {
    let mut field = [b' '; FIXED_PAYLOAD_WIDTH];
    let bytes = text.as_bytes();
    let n = bytes.len().min(FIXED_PAYLOAD_WIDTH);
    field[..n].copy_from_slice(&bytes[..n]);
    field
}

fn fixed_message(op: u8, correlation: u32, payload: &str) -> Vec<u8> {
    let mut msg = Vec::with_capacity(FIXED_MESSAGE_LEN);
    msg.push(op);
    msg.extend_from_slice(&correlation.to_be_bytes());
    msg.extend_from_slice(&pad_field(payload));
    msg
}

/// Fixed-width binary traffic: byte 0 op code (`0x01..`), bytes 1-4 a
/// big-endian correlation id, bytes 5-20 a space-padded text field whose
/// layout depends on the op code. The response echoes the correlation id
/// under op code `request + 0x80`.
pub fn generate_fixed(n: usize, ops: usize, seed: u64) -> Result<InteractionLibrary, EvalError> {
    if ops == 0 || ops > MAX_FIXED_OPS {
        return Err(EvalError::Config(format!(
            "fixed-width op count must lie in 1..={MAX_FIXED_OPS}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correlation: u32 = rng.random();
    let mut lib = InteractionLibrary::empty();
    for _ in 0..n {
        let op = 1 + rng.random_range(0..ops) as u8;
        correlation = correlation.wrapping_add(rng.random_range(1..=16));
        let sn = *SURNAMES.choose(&mut rng).expect("non-empty pool");
        let gn = *GIVEN_NAMES.choose(&mut rng).expect("non-empty pool");
        // Each transaction type has its own record layout.
        let payload = match op % 4 {
            1 => format!("{sn} {gn}"),
            2 => format!(
                "{:08} {:05}",
                rng.random_range(0..100_000_000u32),
                rng.random_range(0..100_000u32)
            ),
            3 => format!("{sn}/{:06}", rng.random_range(0..1_000_000u32)),
            _ => format!("#{:04}-{gn}", rng.random_range(0..10_000u32)),
        };
        let request = fixed_message(op, correlation, &payload);
        let reply = match op % 3 {
            0 => format!("OK {}", rng.random_range(0..1_000_000u32)),
            1 => format!("{gn} {sn}"),
            _ => format!("ACK {:05}", rng.random_range(0..100_000u32)),
        };
        let response = fixed_message(op | 0x80, correlation, &reply);
        lib.push(Interaction::new(request, response).expect("generated messages are non-empty"));
    }
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::decode::decode;
    use std::collections::BTreeSet;

    #[test]
    fn directory_shape_matches_the_fixture_grammar() {
        let lib = generate_synthetic(&SyntheticProtocolSpec {
            kind: ProtocolKind::DirectoryText,
            n_interactions: 8,
            n_operation_types: 2,
            seed: 7,
        })
        .unwrap();
        assert_eq!(lib.len(), 8);
        for i in &lib {
            let req = decode(i.request(), ProtocolKind::DirectoryText).unwrap();
            let rsp = decode(i.response(), ProtocolKind::DirectoryText).unwrap();
            assert!(req.op_type == "S" || req.op_type == "A");
            assert_eq!(req.field("id").map(str::len), Some(3));
            let expected = if req.op_type == "S" {
                "SearchRsp"
            } else {
                "AddRsp"
            };
            assert_eq!(rsp.op_type, expected);
            assert_eq!(req.field("id"), rsp.field("id"));
        }
    }

    #[test]
    fn fixed_width_layout() {
        let lib = generate_synthetic(&SyntheticProtocolSpec {
            kind: ProtocolKind::FixedWidthBinary,
            n_interactions: 800,
            n_operation_types: 5,
            seed: 1,
        })
        .unwrap();
        assert_eq!(lib.len(), 800);
        let ops: BTreeSet<u8> = lib.requests().map(|r| r[0]).collect();
        assert_eq!(ops, (1..=5).collect());
        for i in &lib {
            let (q, r) = (i.request(), i.response());
            assert_eq!(q.len(), FIXED_MESSAGE_LEN);
            assert_eq!(r.len(), FIXED_MESSAGE_LEN);
            assert_eq!(r[0], q[0] + 0x80);
            assert_eq!(q[1..5], r[1..5]);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        for kind in [ProtocolKind::DirectoryText, ProtocolKind::FixedWidthBinary] {
            let spec = SyntheticProtocolSpec {
                kind,
                n_interactions: 200,
                n_operation_types: 4,
                seed: 99,
            };
            assert_eq!(
                generate_synthetic(&spec).unwrap().to_bytes().unwrap(),
                generate_synthetic(&spec).unwrap().to_bytes().unwrap()
            );
            let other = SyntheticProtocolSpec { seed: 100, ..spec };
            assert_ne!(
                generate_synthetic(&spec).unwrap(),
                generate_synthetic(&other).unwrap()
            );
        }
    }

    #[test]
    fn operation_types_are_spread() {
        let lib = generate_directory(1000, &DIRECTORY_OPS[..6], 3).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for q in lib.requests() {
            *counts
                .entry(decode(q, ProtocolKind::DirectoryText).unwrap().op_type)
                .or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        assert!(
            counts.values().all(|&c| (120..=220).contains(&c)),
            "{counts:?}"
        );
    }

    #[test]
    fn spec_validation() {
        let bad = SyntheticProtocolSpec {
            kind: ProtocolKind::DirectoryText,
            n_interactions: 10,
            n_operation_types: 9,
            seed: 0,
        };
        assert!(generate_synthetic(&bad).is_err());
        assert!(generate_synthetic(&SyntheticProtocolSpec {
            n_interactions: 0,
            n_operation_types: 2,
            ..bad
        })
        .is_err());
    }
}
