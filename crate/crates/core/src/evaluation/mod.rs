//! Repeated k-fold cross-validation of response selection strategies.
//!
//! For every repeat the library is shuffled into `k` folds. Each fold in
//! turn is the evaluation group and the rest form the training library:
//! weights are derived from the training library alone, every evaluation
//! request is matched against it, and the emulated response is classified
//! against the recorded one.

pub mod decode;
pub mod synthetic;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::ScoringParams;
use crate::entropy::{derive_weights, EntropyError, EntropyMethod, ScalerSpec};
use crate::matcher::{select_response, MatchError, MatcherConfig, Strategy};
use crate::model::{InteractionLibrary, ModelError};

pub use decode::{classify_response, decode, DecodeError, ParsedMessage, Verdict};
pub use synthetic::{generate_synthetic, ProtocolKind, SyntheticProtocolSpec};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: expected response of interaction {index} does not decode: {source}")]
    Dataset { index: usize, source: DecodeError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Shuffles `0..n` with `seed` and deals it into `k` folds whose sizes differ
/// by at most one. Returned indices are 1-based and ascending within a fold.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::Config(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    if n < k {
        return Err(EvalError::Config(format!(
            "cannot partition {n} interactions into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Partitions `lib` into `k` disjoint sub-libraries.
pub fn kfold_split(
    lib: &InteractionLibrary,
    k: usize,
    seed: u64,
) -> Result<Vec<InteractionLibrary>, EvalError> {
    kfold_indices(lib.len(), k, seed)?
        .iter()
        .map(|fold| Ok(lib.subset(fold)?))
        .collect()
}

/// Entropy method and scaler used to derive weights for a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weighting {
    pub method: EntropyMethod,
    pub scaler: ScalerSpec<f64>,
}

/// One strategy/parameter combination to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub strategy: Strategy,
    pub scoring: ScoringParams<f64>,
    pub weighting: Option<Weighting>,
}

impl EvalPoint {
    pub fn hash_lookup() -> Self {
        Self {
            strategy: Strategy::HashLookup,
            scoring: ScoringParams::default(),
            weighting: None,
        }
    }

    pub fn plain() -> Self {
        Self {
            strategy: Strategy::NwPlain,
            scoring: ScoringParams::default(),
            weighting: None,
        }
    }

    pub fn weighted(method: EntropyMethod, scaler: ScalerSpec<f64>) -> Self {
        Self {
            strategy: Strategy::NwWeighted,
            scoring: ScoringParams::default(),
            weighting: Some(Weighting { method, scaler }),
        }
    }

    pub fn label(&self) -> String {
        match &self.weighting {
            Some(w) => format!("{} {} {}", self.strategy, w.method, w.scaler),
            None => self.strategy.to_string(),
        }
    }

    fn scaler_params(&self) -> String {
        match self.weighting.map(|w| w.scaler) {
            Some(ScalerSpec::Hyperbolic { a, c }) => format!("a={a};c={c}"),
            Some(ScalerSpec::Exponential { k }) => format!("k={k}"),
            Some(ScalerSpec::Sigmoid { k, tau }) => format!("k={k};tau={tau}"),
            Some(ScalerSpec::Threshold { tau }) => format!("tau={tau}"),
            None => String::new(),
        }
    }
}

/// Hyperbolic scaler points sweeping the exponent `c`.
pub fn hyperbolic_c_sweep(method: EntropyMethod, a: f64, cs: &[f64]) -> Vec<EvalPoint> {
    cs.iter()
        .map(|&c| EvalPoint::weighted(method, ScalerSpec::Hyperbolic { a, c }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub k: usize,
    /// One cross-validation repeat per seed.
    pub seeds: Vec<u64>,
    pub points: Vec<EvalPoint>,
}

impl EvaluationConfig {
    /// Ten folds, ten repeats seeded 1..=10.
    pub fn new(points: Vec<EvalPoint>) -> Self {
        Self {
            k: 10,
            seeds: (1..=10).collect(),
            points,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), EvalError> {
        if self.seeds.is_empty() {
            return Err(EvalError::Config(
                "at least one repeat seed is required".into(),
            ));
        }
        if self.points.is_empty() {
            return Err(EvalError::Config("no strategies to evaluate".into()));
        }
        kfold_indices(n, self.k, 0)?;
        for p in &self.points {
            match (p.strategy, &p.weighting) {
                (Strategy::NwWeighted, None) => {
                    return Err(EvalError::Config(
                        "nw-weighted point without entropy method/scaler".into(),
                    ))
                }
                (_, Some(w)) => w.scaler.validate()?,
                _ => {}
            }
            if p.scoring.identical.partial_cmp(&p.scoring.differing)
                != Some(std::cmp::Ordering::Greater)
            {
                return Err(EvalError::Config(
                    "scoring requires d_identical > d_differing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Accuracy of one evaluation point across all repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub label: String,
    pub point: EvalPoint,
    pub valid: usize,
    pub invalid: usize,
    pub accuracy: f64,
    pub per_repeat: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub protocol: ProtocolKind,
    pub interactions: usize,
    pub points: Vec<PointReport>,
}

impl AccuracyReport {
    pub fn point(&self, p: &EvalPoint) -> Option<&PointReport> {
        self.points.iter().find(|r| &r.point == p)
    }

    /// One row per (point, repeat):
    /// `strategy, entropy_method, scaler, params, repeat, accuracy`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "strategy",
            "entropy_method",
            "scaler",
            "params",
            "repeat",
            "accuracy",
        ])?;
        for p in &self.points {
            let method = p.point.weighting.map(|w| w.method.name()).unwrap_or("");
            let scaler = p.point.weighting.map(|w| w.scaler.kind()).unwrap_or("");
            let params = p.point.scaler_params();
            for (r, acc) in p.per_repeat.iter().enumerate() {
                w.write_record([
                    p.point.strategy.name(),
                    method,
                    scaler,
                    &params,
                    &(r + 1).to_string(),
                    &acc.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    valid: usize,
    invalid: usize,
}

fn run_fold(
    lib: &InteractionLibrary,
    training: &[usize],
    evaluation: &[usize],
    points: &[EvalPoint],
    kind: ProtocolKind,
) -> Result<Vec<Tally>, EvalError> {
    let train = lib.subset(training)?;
    points
        .iter()
        .map(|p| {
            let cfg = match (p.strategy, p.weighting) {
                (Strategy::NwWeighted, Some(w)) => {
                    MatcherConfig::weighted(p.scoring, derive_weights(&train, w.method, w.scaler)?)
                }
                (Strategy::NwPlain, _) => MatcherConfig::plain(p.scoring),
                _ => MatcherConfig::hash_lookup(),
            };
            let mut tally = Tally::default();
            for &idx in evaluation {
                let probe = lib.get(idx).expect("fold index within library");
                let chosen = select_response(&train, probe.request(), &cfg)?;
                let emulated: &[u8] = if chosen.no_response {
                    &[]
                } else {
                    &chosen.response
                };
                match classify_response(emulated, probe.response(), kind) {
                    Verdict::Valid => tally.valid += 1,
                    Verdict::Invalid => tally.invalid += 1,
                }
            }
            Ok(tally)
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the cross-validation described in the module docs.
///
/// Folds run in parallel; the report depends only on `lib`, `cfg` and `kind`.
pub fn evaluate(
    lib: &InteractionLibrary,
    cfg: &EvaluationConfig,
    kind: ProtocolKind,
) -> Result<AccuracyReport, EvalError> {
    cfg.validate(lib.len())?;
    for (index, i) in lib.iter() {
        decode(i.response(), kind).map_err(|source| EvalError::Dataset { index, source })?;
    }

    let mut tasks = Vec::new();
    for (r, &seed) in cfg.seeds.iter().enumerate() {
        let folds = kfold_indices(lib.len(), cfg.k, seed)?;
        for f in 0..folds.len() {
            let training: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, fold)| fold.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            tasks.push((r, training, folds[f].clone()));
        }
    }

    let results: Vec<(usize, Vec<Tally>)> = tasks
        .par_iter()
        .map(|(r, training, evaluation)| {
            Ok((*r, run_fold(lib, training, evaluation, &cfg.points, kind)?))
        })
        .collect::<Result<_, EvalError>>()?;

    let repeats = cfg.seeds.len();
    let points = cfg
        .points
        .iter()
        .enumerate()
        .map(|(pi, point)| {
            let mut per_repeat = vec![Tally::default(); repeats];
            for (r, tallies) in &results {
                per_repeat[*r].valid += tallies[pi].valid;
                per_repeat[*r].invalid += tallies[pi].invalid;
            }
            let accuracies: Vec<f64> = per_repeat
                .iter()
                .map(|t| t.valid as f64 / (t.valid + t.invalid) as f64)
                .collect();
            let valid = per_repeat.iter().map(|t| t.valid).sum::<usize>();
            let invalid = per_repeat.iter().map(|t| t.invalid).sum::<usize>();
            let (mean, std_dev) = mean_std(&accuracies);
            PointReport {
                label: point.label(),
                point: point.clone(),
                valid,
                invalid,
                accuracy: valid as f64 / (valid + invalid) as f64,
                per_repeat: accuracies,
                mean,
                std_dev,
            }
        })
        .collect();

    Ok(AccuracyReport {
        k: cfg.k,
        seeds: cfg.seeds.clone(),
        protocol: kind,
        interactions: lib.len(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::synthetic::{generate_directory, DIRECTORY_OPS};
    use super::*;
    use crate::model::Interaction;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn balanced_folds() {
        let folds = kfold_indices(8, 4, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let singletons = kfold_indices(10, 10, 42).unwrap();
        assert!(singletons.iter().all(|f| f.len() == 1));
        assert_eq!(
            kfold_indices(50, 7, 9).unwrap(),
            kfold_indices(50, 7, 9).unwrap()
        );
        assert_ne!(
            kfold_indices(50, 7, 9).unwrap(),
            kfold_indices(50, 7, 10).unwrap()
        );
    }

    #[test]
    fn too_few_interactions_for_k() {
        assert!(matches!(kfold_indices(5, 10, 0), Err(EvalError::Config(_))));
        assert!(matches!(kfold_indices(5, 1, 0), Err(EvalError::Config(_))));
    }

    #[test]
    fn split_libraries_cover_the_input() {
        let lib = generate_directory(23, &DIRECTORY_OPS[..3], 5).unwrap();
        let parts = kfold_split(&lib, 4, 1).unwrap();
        assert_eq!(parts.iter().map(InteractionLibrary::len).sum::<usize>(), 23);
    }

    #[test]
    fn hash_lookup_scores_zero_on_unique_requests() {
        let lib = InteractionLibrary::new(
            (0..40)
                .map(|i| {
                    Interaction::new(
                        format!("{{id:{i:03},op:S,sn:X}}"),
                        "{id:1,op:SearchRsp,result:Ok}",
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let cfg = EvaluationConfig {
            k: 4,
            seeds: vec![1, 2],
            points: vec![EvalPoint::hash_lookup()],
        };
        let report = evaluate(&lib, &cfg, ProtocolKind::DirectoryText).unwrap();
        assert_eq!(report.points[0].valid, 0);
        assert_eq!(report.points[0].invalid, 80);
        assert_eq!(report.points[0].accuracy, 0.0);
    }

    #[test]
    fn single_operation_library_is_always_valid() {
        let lib = generate_directory(60, &DIRECTORY_OPS[..1], 11).unwrap();
        // every recorded response decodes as SearchRsp
        for i in &lib {
            assert_eq!(
                decode(i.response(), ProtocolKind::DirectoryText)
                    .unwrap()
                    .op_type,
                "SearchRsp"
            );
        }
        let cfg = EvaluationConfig {
            k: 5,
            seeds: vec![3],
            points: vec![EvalPoint::plain()],
        };
        let report = evaluate(&lib, &cfg, ProtocolKind::DirectoryText).unwrap();
        assert_eq!(report.points[0].accuracy, 1.0);
    }

    #[test]
    fn undecodable_expected_response_fails_before_evaluation() {
        let lib = InteractionLibrary::new(vec![
            Interaction::new("{id:1,op:S,sn:A}", "{id:1,op:SearchRsp}").unwrap(),
            Interaction::new("{id:2,op:S,sn:B}", "garbage").unwrap(),
        ])
        .unwrap();
        let cfg = EvaluationConfig {
            k: 2,
            seeds: vec![1],
            points: vec![EvalPoint::plain()],
        };
        assert!(matches!(
            evaluate(&lib, &cfg, ProtocolKind::DirectoryText),
            Err(EvalError::Dataset { index: 2, .. })
        ));
    }

    #[test]
    fn report_is_deterministic_and_consistent() {
        let lib = generate_directory(120, &DIRECTORY_OPS[..4], 2).unwrap();
        let cfg = EvaluationConfig {
            k: 5,
            seeds: vec![7, 8, 9],
            points: vec![
                EvalPoint::hash_lookup(),
                EvalPoint::plain(),
                EvalPoint::weighted(
                    EntropyMethod::Shannon,
                    ScalerSpec::Hyperbolic { a: 1.0, c: 10.0 },
                ),
            ],
        };
        let a = evaluate(&lib, &cfg, ProtocolKind::DirectoryText).unwrap();
        let b = evaluate(&lib, &cfg, ProtocolKind::DirectoryText).unwrap();
        assert_eq!(a, b);
        for p in &a.points {
            assert_eq!(p.valid + p.invalid, 120 * 3);
            assert!((0.0..=1.0).contains(&p.accuracy));
            assert_eq!(p.per_repeat.len(), 3);
        }
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 3);
        assert!(text.starts_with("strategy,entropy_method,scaler,params,repeat,accuracy\n"));
        assert!(text.contains("nw-weighted,shannon,hyperbolic,a=1;c=10,1,"));
    }

    #[test]
    fn config_validation() {
        let lib = generate_directory(30, &DIRECTORY_OPS[..2], 2).unwrap();
        let mut cfg = EvaluationConfig::new(vec![EvalPoint::plain()]);
        cfg.k = 40;
        assert!(matches!(
            evaluate(&lib, &cfg, ProtocolKind::DirectoryText),
            Err(EvalError::Config(_))
        ));
        let broken = EvalPoint {
            weighting: None,
            ..EvalPoint::weighted(EntropyMethod::Shannon, ScalerSpec::Exponential { k: 1.0 })
        };
        assert!(EvaluationConfig::new(vec![broken]).validate(30).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn partition_laws(n in 2usize..300, k in 2usize..20, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let folds = kfold_indices(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let all: BTreeSet<usize> = folds.iter().flatten().copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(all, (1..=n).collect::<BTreeSet<_>>());
        }
    }
}
