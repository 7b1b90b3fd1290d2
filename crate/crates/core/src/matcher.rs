//! Response selection: exact hash lookup, or nearest recorded request by
//! (optionally entropy-weighted) alignment distance.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{distance, AlignmentError, ScoringParams, WeightsVector};
use crate::model::{InteractionLibrary, Message, ModelError};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum MatchError {
    #[error("incoming request must be non-empty")]
    EmptyRequest,
    #[error("the nw-weighted strategy requires a weights vector")]
    MissingWeights,
    #[error(transparent)]
    Library(#[from] ModelError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    HashLookup,
    NwPlain,
    NwWeighted,
}

impl Strategy {
    /// Name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Strategy::HashLookup => "hash",
            Strategy::NwPlain => "nw",
            Strategy::NwWeighted => "nw-weighted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" | "hash_lookup" => Ok(Strategy::HashLookup),
            "nw" | "nw_plain" => Ok(Strategy::NwPlain),
            "nw-weighted" | "nw_weighted" => Ok(Strategy::NwWeighted),
            other => Err(MatchError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Strategy plus what it needs. A recorded request identical to the live
/// one always wins; otherwise distance ties go to the lowest library index.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig<T> {
    pub strategy: Strategy,
    pub scoring: ScoringParams<T>,
    pub weights: Option<WeightsVector<T>>,
}

impl<T: Scalar> MatcherConfig<T> {
    pub fn hash_lookup() -> Self {
        Self {
            strategy: Strategy::HashLookup,
            scoring: ScoringParams::default(),
            weights: None,
        }
    }

    pub fn plain(scoring: ScoringParams<T>) -> Self {
        Self {
            strategy: Strategy::NwPlain,
            scoring,
            weights: None,
        }
    }

    pub fn weighted(scoring: ScoringParams<T>, weights: WeightsVector<T>) -> Self {
        Self {
            strategy: Strategy::NwWeighted,
            scoring,
            weights: Some(weights),
        }
    }

    /// Checks the config against the library it will serve. A weights
    /// vector derived from a different library only logs a warning.
    pub fn check(&self, lib: &InteractionLibrary) -> Result<(), MatchError> {
        lib.ensure_non_empty()?;
        if self.strategy != Strategy::NwWeighted {
            return Ok(());
        }
        let weights = self.weights.as_ref().ok_or(MatchError::MissingWeights)?;
        if let Some(prov) = weights.provenance() {
            let fingerprint = lib.fingerprint();
            if prov.library_fingerprint != fingerprint {
                log::warn!(
                    "weights were derived from library {} but matching against {}",
                    prov.library_fingerprint,
                    fingerprint
                );
            }
        }
        Ok(())
    }

    fn active_weights(&self) -> Option<&WeightsVector<T>> {
        match self.strategy {
            Strategy::NwWeighted => self.weights.as_ref(),
            _ => None,
        }
    }
}

/// Evidence for a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport<T> {
    /// 1-based library index; `None` only for a hash miss.
    pub selected_index: Option<usize>,
    /// Distance to the selected request; zero for a hash hit.
    pub distance: Option<T>,
    /// `(index, distance)` for every candidate under the alignment
    /// strategies; empty for hash lookup.
    pub per_candidate: Vec<(usize, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub response: Message,
    pub no_response: bool,
    pub report: MatchReport<T>,
}

impl<T> Selection<T> {
    /// Whether any bytes should go back on the wire.
    pub fn has_payload(&self) -> bool {
        !self.no_response && !self.response.is_empty()
    }
}

/// Response synthesised for the live request: the recorded one, verbatim.
pub fn translate(_req_in: &[u8], _req_sim: &[u8], rsp_sim: &Message) -> Message {
    rsp_sim.clone()
}

fn selected<T>(
    lib: &InteractionLibrary,
    req_in: &[u8],
    index: usize,
    report: MatchReport<T>,
) -> Selection<T> {
    let chosen = lib
        .get(index)
        .expect("selected index is within the library");
    Selection {
        response: translate(req_in, chosen.request(), chosen.response()),
        no_response: chosen.no_response(),
        report,
    }
}

fn miss<T>() -> Selection<T> {
    Selection {
        response: Message::default(),
        no_response: false,
        report: MatchReport {
            selected_index: None,
            distance: None,
            per_candidate: Vec::new(),
        },
    }
}

/// First library interaction whose request equals `req_in` byte for byte.
/// `None` is a miss.
pub fn hash_lookup<T: Scalar>(lib: &InteractionLibrary, req_in: &[u8]) -> Option<Selection<T>> {
    let (index, _) = lib.iter().find(|(_, i)| i.request().as_bytes() == req_in)?;
    Some(hit(lib, req_in, index))
}

fn hit<T: Scalar>(lib: &InteractionLibrary, req_in: &[u8], index: usize) -> Selection<T> {
    selected(
        lib,
        req_in,
        index,
        MatchReport {
            selected_index: Some(index),
            distance: Some(T::zero()),
            per_candidate: Vec::new(),
        },
    )
}

fn nearest<T: Scalar>(
    lib: &InteractionLibrary,
    req_in: &[u8],
    cfg: &MatcherConfig<T>,
) -> Result<Selection<T>, MatchError> {
    let weights = cfg.active_weights();
    let per_candidate = lib
        .iter()
        .map(|(k, i)| Ok((k, distance(req_in, i.request(), &cfg.scoring, weights)?)))
        .collect::<Result<Vec<_>, AlignmentError>>()?;
    // A byte-identical recorded request always wins. Weighted scores can
    // exceed S_max when later positions weigh more than earlier ones, so
    // another candidate may otherwise undercut its zero distance.
    // Remaining ties go to the lowest index.
    let exact = lib
        .iter()
        .find(|(_, i)| i.request().as_bytes() == req_in)
        .map(|(k, _)| k);
    let (index, best) = match exact {
        Some(k) => Some(per_candidate[k - 1]),
        None => per_candidate
            .iter()
            .copied()
            .reduce(|acc, c| if c.1 < acc.1 { c } else { acc }),
    }
    .ok_or(ModelError::EmptyLibrary)?;
    Ok(selected(
        lib,
        req_in,
        index,
        MatchReport {
            selected_index: Some(index),
            distance: Some(best),
            per_candidate,
        },
    ))
}

/// Picks the response to play back for `req_in`.
///
/// A hash miss is returned as a selection with no index and an empty
/// response.
pub fn select_response<T: Scalar>(
    lib: &InteractionLibrary,
    req_in: &[u8],
    cfg: &MatcherConfig<T>,
) -> Result<Selection<T>, MatchError> {
    if req_in.is_empty() {
        return Err(MatchError::EmptyRequest);
    }
    lib.ensure_non_empty()?;
    match cfg.strategy {
        Strategy::HashLookup => Ok(hash_lookup(lib, req_in).unwrap_or_else(miss)),
        Strategy::NwPlain => nearest(lib, req_in, cfg),
        Strategy::NwWeighted => {
            if cfg.weights.is_none() {
                return Err(MatchError::MissingWeights);
            }
            nearest(lib, req_in, cfg)
        }
    }
}

/// A library and config bound together for repeated lookups, with a hash
/// index over the recorded requests.
#[derive(Debug, Clone)]
pub struct Matcher<T> {
    library: InteractionLibrary,
    config: MatcherConfig<T>,
    index: HashMap<Vec<u8>, usize>,
}

impl<T: Scalar> Matcher<T> {
    pub fn new(library: InteractionLibrary, config: MatcherConfig<T>) -> Result<Self, MatchError> {
        config.check(&library)?;
        let mut index = HashMap::new();
        for (k, i) in library.iter() {
            index.entry(i.request().as_bytes().to_vec()).or_insert(k);
        }
        Ok(Self {
            library,
            config,
            index,
        })
    }

    pub fn library(&self) -> &InteractionLibrary {
        &self.library
    }

    pub fn config(&self) -> &MatcherConfig<T> {
        &self.config
    }

    pub fn select(&self, req_in: &[u8]) -> Result<Selection<T>, MatchError> {
        if req_in.is_empty() {
            return Err(MatchError::EmptyRequest);
        }
        match self.config.strategy {
            Strategy::HashLookup => Ok(self
                .index
                .get(req_in)
                .map(|&k| hit(&self.library, req_in, k))
                .unwrap_or_else(miss)),
            _ => nearest(&self.library, req_in, &self.config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::entropy::{derive_weights, EntropyMethod, ScalerSpec};
    use crate::fixtures::{self, PROBE_HOSSAIN, PROBE_SCHNEIDER};
    use crate::model::Interaction;
    use proptest::prelude::*;
    use proptest::strategy::Strategy as _;

    fn plain() -> MatcherConfig<f64> {
        MatcherConfig::plain(ScoringParams::default())
    }

    #[test]
    fn plain_nearest_for_the_hossain_probe() {
        let lib = fixtures::directory_log();
        let s = select_response(&lib, PROBE_HOSSAIN.as_bytes(), &plain()).unwrap();
        assert_eq!(s.report.selected_index, Some(4));
        assert_eq!(
            s.response.as_bytes(),
            b"{id:275,op:SearchRsp,result:Ok,gn:Jun,sn:Han,mobile:33333333}"
        );
    }

    #[test]
    fn plain_picks_the_wrong_operation_for_the_schneider_probe() {
        let lib = fixtures::directory_log();
        let s = select_response(&lib, PROBE_SCHNEIDER.as_bytes(), &plain()).unwrap();
        assert_eq!(s.report.selected_index, Some(3));
        assert_eq!(s.response.as_bytes(), b"{id:024,op:AddRsp,result:Ok}");
    }

    #[test]
    fn weighted_ranks_request_4_ahead_of_request_3() {
        let lib = fixtures::directory_log();
        let w = derive_weights(
            &lib,
            EntropyMethod::Richness,
            ScalerSpec::Hyperbolic { a: 1.0, c: 10.0 },
        )
        .unwrap();
        let s = select_response(
            &lib,
            PROBE_SCHNEIDER.as_bytes(),
            &MatcherConfig::weighted(ScoringParams::default(), w),
        )
        .unwrap();
        let d = |k: usize| s.report.per_candidate[k - 1].1;
        assert!(d(4) < d(3));
        // the weighted selection is a search response either way
        assert!(
            s.response.as_bytes().starts_with(b"{id:013,op:SearchRsp")
                || s.report.selected_index == Some(4)
        );
    }

    #[test]
    fn hash_lookup_cases() {
        let lib = fixtures::directory_log();
        let hit = hash_lookup::<f64>(&lib, b"{id:001,op:S,sn:Du}").unwrap();
        assert_eq!(hit.report.selected_index, Some(1));
        assert_eq!(hit.response, *lib.get(1).unwrap().response());
        assert!(hash_lookup::<f64>(&lib, PROBE_HOSSAIN.as_bytes()).is_none());

        let dup = InteractionLibrary::new(vec![
            Interaction::new("q", "first").unwrap(),
            Interaction::new("q", "second").unwrap(),
        ])
        .unwrap();
        assert_eq!(
            hash_lookup::<f64>(&dup, b"q")
                .unwrap()
                .report
                .selected_index,
            Some(1)
        );
        let m = Matcher::new(dup, MatcherConfig::<f64>::hash_lookup()).unwrap();
        assert_eq!(m.select(b"q").unwrap().response.as_bytes(), b"first");
    }

    #[test]
    fn hash_miss_through_select_response() {
        let s = select_response(
            &fixtures::directory_log(),
            PROBE_HOSSAIN.as_bytes(),
            &MatcherConfig::<f64>::hash_lookup(),
        )
        .unwrap();
        assert_eq!(s.report.selected_index, None);
        assert!(!s.has_payload());
    }

    #[test]
    fn translate_is_identity() {
        let rsp = Message::from("{id:906,op:AddRsp,result:Ok}");
        assert_eq!(translate(b"x", b"y", &rsp), rsp);
        assert_eq!(translate(b"r", b"r", &rsp), rsp);
        assert!(translate(b"x", b"y", &Message::default()).is_empty());
    }

    #[test]
    fn no_response_flag_is_reported() {
        let lib =
            InteractionLibrary::new(vec![Interaction::without_response("ping").unwrap()]).unwrap();
        let s = select_response(&lib, b"ping", &plain()).unwrap();
        assert!(s.no_response);
        assert!(!s.has_payload());
    }

    #[test]
    fn errors() {
        let lib = fixtures::directory_log();
        assert!(matches!(
            select_response(&lib, b"", &plain()),
            Err(MatchError::EmptyRequest)
        ));
        let missing = MatcherConfig::<f64> {
            strategy: Strategy::NwWeighted,
            scoring: ScoringParams::default(),
            weights: None,
        };
        assert!(matches!(
            select_response(&lib, b"x", &missing),
            Err(MatchError::MissingWeights)
        ));
        assert!(Matcher::new(lib, missing).is_err());
        assert!(select_response(&InteractionLibrary::empty(), b"x", &plain()).is_err());
    }

    #[test]
    fn equal_distances_go_to_the_lowest_index() {
        let lib = InteractionLibrary::new(vec![
            Interaction::new("ax", "1").unwrap(),
            Interaction::new("ay", "2").unwrap(),
        ])
        .unwrap();
        let s = select_response(&lib, b"az", &plain()).unwrap();
        assert_eq!(s.report.per_candidate[0].1, s.report.per_candidate[1].1);
        assert_eq!(s.report.selected_index, Some(1));
    }

    #[test]
    fn identical_request_beats_an_earlier_supersequence() {
        // "ab" sits at distance 0 from both rows when gaps are free
        let lib = InteractionLibrary::new(vec![
            Interaction::new("abc", "1").unwrap(),
            Interaction::new("ab", "2").unwrap(),
        ])
        .unwrap();
        let s = select_response(&lib, b"ab", &plain()).unwrap();
        assert_eq!(s.report.per_candidate[0].1, 0.0);
        assert_eq!(s.report.selected_index, Some(2));
    }

    #[test]
    fn strategy_names() {
        for s in [
            Strategy::HashLookup,
            Strategy::NwPlain,
            Strategy::NwWeighted,
        ] {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
    }

    fn arb_lib() -> impl proptest::strategy::Strategy<Value = InteractionLibrary> {
        proptest::collection::vec(
            (
                proptest::collection::vec(0u8..5, 1..12),
                proptest::collection::vec(any::<u8>(), 1..6),
            ),
            1..10,
        )
        .prop_map(|rows| {
            InteractionLibrary::new(
                rows.into_iter()
                    .map(|(q, r)| Interaction::new(q, r).unwrap())
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn argmin_is_sound(lib in arb_lib(), req in proptest::collection::vec(0u8..5, 1..12)) {
            let s = select_response(&lib, &req, &plain()).unwrap();
            let best = s.report.distance.unwrap();
            let idx = s.report.selected_index.unwrap();
            let exact = lib.iter().find(|(_, i)| i.request().as_bytes() == req.as_slice()).map(|(k, _)| k);
            match exact {
                Some(k) => prop_assert_eq!(idx, k),
                None => {
                    for &(k, d) in &s.report.per_candidate {
                        prop_assert!(best <= d);
                        if d == best {
                            prop_assert!(idx <= k);
                        }
                    }
                }
            }
            prop_assert_eq!(s.report.per_candidate[idx - 1].1, best);
            prop_assert_eq!(select_response(&lib, &req, &plain()).unwrap(), s);
        }

        #[test]
        fn recorded_requests_are_recalled_exactly(lib in arb_lib(), pick in any::<prop::sample::Index>()) {
            let k = pick.index(lib.len()) + 1;
            let req = lib.get(k).unwrap().request().clone();
            let w = derive_weights(&lib, EntropyMethod::Shannon, ScalerSpec::Hyperbolic { a: 1.0, c: 10.0 }).unwrap();
            let hashed = select_response(&lib, &req, &MatcherConfig::<f64>::hash_lookup()).unwrap();
            let p = select_response(&lib, &req, &plain()).unwrap();
            let wt = select_response(&lib, &req, &MatcherConfig::weighted(ScoringParams::default(), w)).unwrap();
            let h = hashed.report.selected_index.unwrap();
            prop_assert_eq!(lib.get(h).unwrap().request(), &req);
            for s in [&p, &wt] {
                prop_assert!(s.report.distance.unwrap().abs() < 1e-12);
                prop_assert_eq!(s.report.selected_index, Some(h));
                prop_assert_eq!(&s.response, &hashed.response);
            }
        }
    }
}
