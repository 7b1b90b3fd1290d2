//! Opaque service emulation: record request/response pairs, then answer live
//! requests with the response whose recorded request aligns best, optionally
//! weighting byte positions by how stable they are across the recording.
//!
//! The numeric core is generic over the score type ([`Scalar`] for
//! alignment, [`Real`] for entropy). The aliases below fix it to `f64`,
//! which is what the emulator, CLI and evaluation harness use.

pub mod alignment;
pub mod entropy;
pub mod evaluation;
pub mod fixtures;
pub mod matcher;
pub mod model;
pub mod scalar;

pub use alignment::{
    align, align_weighted, alignment_score, distance, score_max, score_min, score_pair,
    AlignmentError, AlignmentResult, Provenance, ScoringParams, WeightsVector,
};
pub use entropy::{
    derive_weights, normalise, Cell, ColumnFrequencies, EntropyError, EntropyMethod, RequestMatrix,
    ScalerSpec, WeightsFile,
};
pub use matcher::{
    hash_lookup, select_response, translate, MatchError, MatchReport, Matcher, MatcherConfig,
    Selection, Strategy,
};
pub use model::{Interaction, InteractionLibrary, Message, ModelError};
pub use scalar::{Real, Scalar};

pub type Scoring = ScoringParams<f64>;
pub type Weights = WeightsVector<f64>;
pub type Alignment = AlignmentResult<f64>;
pub type Scaler = ScalerSpec<f64>;
pub type Config = MatcherConfig<f64>;
pub type Report = MatchReport<f64>;
pub type Choice = Selection<f64>;
pub type Emulation = Matcher<f64>;
