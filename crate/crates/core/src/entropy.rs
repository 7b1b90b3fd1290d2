//! Column entropy analysis of recorded requests and the weights derived
//! from it.
//!
//! Pipeline: pad requests into a matrix, take the symbol distribution of
//! each column, measure its diversity, range-normalise across columns, then
//! map through a decreasing scaler so stable columns weigh close to 1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentError, Provenance, WeightsVector};
use crate::model::InteractionLibrary;
use crate::scalar::{real, Real};

/// Weight substituted for the zero branch of the threshold scaler.
pub const THRESHOLD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EntropyError {
    #[error("library must be non-empty")]
    EmptyLibrary,
    #[error("column {column} out of range 1..={width}")]
    ColumnOutOfRange { column: usize, width: usize },
    #[error("invalid scaler parameters: {0}")]
    InvalidScaler(String),
    #[error("unknown {what} {value:?}")]
    Unknown { what: &'static str, value: String },
    #[error(transparent)]
    Weights(#[from] AlignmentError),
}

/// A request matrix cell: an octet, or padding past the end of the request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cell {
    Octet(u8),
    Lambda,
}

/// Requests padded with [`Cell::Lambda`] to the length of the longest one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestMatrix {
    rows: Vec<Vec<Cell>>,
    width: usize,
}

impl RequestMatrix {
    pub fn from_library(lib: &InteractionLibrary) -> Result<Self, EntropyError> {
        Self::from_requests(lib.requests().map(|m| m.as_bytes()))
    }

    pub fn from_requests<'a, I>(requests: I) -> Result<Self, EntropyError>
    where
        I: IntoIterator<Item = &'a [u8]>,
    {
        let requests: Vec<&[u8]> = requests.into_iter().collect();
        let width = requests
            .iter()
            .map(|r| r.len())
            .max()
            .ok_or(EntropyError::EmptyLibrary)?;
        if width == 0 {
            return Err(EntropyError::EmptyLibrary);
        }
        let rows = requests
            .iter()
            .map(|r| {
                (0..width)
                    .map(|j| r.get(j).map_or(Cell::Lambda, |&b| Cell::Octet(b)))
                    .collect()
            })
            .collect();
        Ok(Self { rows, width })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    /// Relative symbol frequencies of 1-based column `j`, padding included.
    pub fn column_frequencies<T: Real>(
        &self,
        j: usize,
    ) -> Result<ColumnFrequencies<T>, EntropyError> {
        if j == 0 || j > self.width {
            return Err(EntropyError::ColumnOutOfRange {
                column: j,
                width: self.width,
            });
        }
        let mut counts: BTreeMap<Cell, usize> = BTreeMap::new();
        for row in &self.rows {
            *counts.entry(row[j - 1]).or_default() += 1;
        }
        let n: T = real(self.rows.len() as f64);
        Ok(ColumnFrequencies {
            freq: counts
                .into_iter()
                .map(|(cell, c)| (cell, real::<T>(c as f64) / n))
                .collect(),
        })
    }
}

/// Distribution of symbols within one column. Every stored frequency is
/// positive and they sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnFrequencies<T> {
    freq: BTreeMap<Cell, T>,
}

impl<T: Real> ColumnFrequencies<T> {
    pub fn from_map(freq: BTreeMap<Cell, T>) -> Self {
        Self {
            freq: freq.into_iter().filter(|(_, q)| *q > T::zero()).collect(),
        }
    }

    pub fn get(&self, cell: Cell) -> Option<T> {
        self.freq.get(&cell).copied()
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, T)> + '_ {
        self.freq.iter().map(|(c, q)| (*c, *q))
    }
}

/// Column diversity measure.
///
/// `Simpson` is the Gini-Simpson form `1 - sum q^2` so that, like the other
/// two, it grows with diversity. `SimpsonConcentration` is the bare
/// `sum q^2`, which runs the opposite way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    Shannon,
    Richness,
    Simpson,
    SimpsonConcentration,
}

impl EntropyMethod {
    pub const ALL: [EntropyMethod; 4] = [
        EntropyMethod::Shannon,
        EntropyMethod::Richness,
        EntropyMethod::Simpson,
        EntropyMethod::SimpsonConcentration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntropyMethod::Shannon => "shannon",
            EntropyMethod::Richness => "richness",
            EntropyMethod::Simpson => "simpson",
            EntropyMethod::SimpsonConcentration => "simpson_concentration",
        }
    }

    pub fn entropy<T: Real>(self, q: &ColumnFrequencies<T>) -> T {
        match self {
            // natural log
            EntropyMethod::Shannon => q.iter().fold(T::zero(), |acc, (_, p)| acc - p * p.ln()),
            EntropyMethod::Richness => real(q.len() as f64),
            EntropyMethod::Simpson => T::one() - concentration(q),
            EntropyMethod::SimpsonConcentration => concentration(q),
        }
    }
}

fn concentration<T: Real>(q: &ColumnFrequencies<T>) -> T {
    q.iter().fold(T::zero(), |acc, (_, p)| acc + p * p)
}

impl fmt::Display for EntropyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntropyMethod {
    type Err = EntropyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EntropyError::Unknown {
                what: "entropy method",
                value: s.to_string(),
            })
    }
}

/// Range-normalises to [0, 1]. A flat input maps to all zeros.
pub fn normalise<T: Real>(values: &[T]) -> Vec<T> {
    let Some(&first) = values.first() else {
        return Vec::new();
    };
    let (lo, hi) = values
        .iter()
        .fold((first, first), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    if span <= T::zero() {
        return vec![T::zero(); values.len()];
    }
    values.iter().map(|&x| (x - lo) / span).collect()
}

/// Decreasing map from normalised entropy to weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalerSpec<T> {
    /// `1 / (1 + a x)^c`
    Hyperbolic { a: T, c: T },
    /// `e^(-k x)`
    Exponential { k: T },
    /// `1 / (1 + e^(k (x - tau)))`
    Sigmoid { k: T, tau: T },
    /// 1 up to `tau`, [`THRESHOLD_FLOOR`] above it.
    Threshold { tau: T },
}

impl<T: Real> ScalerSpec<T> {
    pub fn validate(&self) -> Result<(), EntropyError> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(EntropyError::InvalidScaler(format!("{name} must be > 0")))
            }
        };
        let unit = |v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(EntropyError::InvalidScaler("tau must lie in [0, 1]".into()))
            }
        };
        match *self {
            ScalerSpec::Hyperbolic { a, c } => positive("a", a).and(positive("c", c)),
            ScalerSpec::Exponential { k } => positive("k", k),
            ScalerSpec::Sigmoid { k, tau } => positive("k", k).and(unit(tau)),
            ScalerSpec::Threshold { tau } => unit(tau),
        }
    }

    pub fn apply(&self, x: T) -> T {
        match *self {
            ScalerSpec::Hyperbolic { a, c } => (T::one() + a * x).powf(c).recip(),
            ScalerSpec::Exponential { k } => (-k * x).exp(),
            ScalerSpec::Sigmoid { k, tau } => (T::one() + (k * (x - tau)).exp()).recip(),
            ScalerSpec::Threshold { tau } => {
                if x <= tau {
                    T::one()
                } else {
                    real(THRESHOLD_FLOOR)
                }
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScalerSpec::Hyperbolic { .. } => "hyperbolic",
            ScalerSpec::Exponential { .. } => "exponential",
            ScalerSpec::Sigmoid { .. } => "sigmoid",
            ScalerSpec::Threshold { .. } => "threshold",
        }
    }
}

impl<T: Real + fmt::Display> fmt::Display for ScalerSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalerSpec::Hyperbolic { a, c } => write!(f, "hyperbolic(a={a},c={c})"),
            ScalerSpec::Exponential { k } => write!(f, "exponential(k={k})"),
            ScalerSpec::Sigmoid { k, tau } => write!(f, "sigmoid(k={k},tau={tau})"),
            ScalerSpec::Threshold { tau } => write!(f, "threshold(tau={tau})"),
        }
    }
}

/// Raw entropy of every column, in column order.
pub fn column_entropies<T: Real>(matrix: &RequestMatrix, method: EntropyMethod) -> Vec<T> {
    (1..=matrix.width())
        .map(|j| {
            let q = matrix
                .column_frequencies::<T>(j)
                .expect("column index within matrix width");
            method.entropy(&q)
        })
        .collect()
}

/// Weights for every request position of `lib`.
///
/// Positions beyond the longest request get `scale(1)`, the weight of a
/// maximally diverse column.
pub fn derive_weights<T: Real>(
    lib: &InteractionLibrary,
    method: EntropyMethod,
    scaler: ScalerSpec<T>,
) -> Result<WeightsVector<T>, EntropyError> {
    scaler.validate()?;
    let matrix = RequestMatrix::from_library(lib)?;
    let weights = normalise(&column_entropies::<T>(&matrix, method))
        .into_iter()
        .map(|x| scaler.apply(x))
        .collect();
    Ok(
        WeightsVector::new(weights, scaler.apply(T::one()))?.with_provenance(Provenance {
            method,
            scaler,
            library_fingerprint: lib.fingerprint(),
        }),
    )
}

/// On-disk form of a derived weights vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub method: EntropyMethod,
    pub scaler: ScalerSpec<f64>,
    pub default_weight: f64,
    pub weights: Vec<f64>,
    pub library_fingerprint: String,
}

impl WeightsFile {
    pub fn from_weights(w: &WeightsVector<f64>) -> Option<Self> {
        let prov = w.provenance()?;
        Some(Self {
            method: prov.method,
            scaler: prov.scaler,
            default_weight: w.default_weight(),
            weights: w.weights().to_vec(),
            library_fingerprint: prov.library_fingerprint.clone(),
        })
    }

    pub fn into_weights(self) -> Result<WeightsVector<f64>, EntropyError> {
        self.scaler.validate()?;
        Ok(
            WeightsVector::new(self.weights, self.default_weight)?.with_provenance(Provenance {
                method: self.method,
                scaler: self.scaler,
                library_fingerprint: self.library_fingerprint,
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Interaction;
    use proptest::prelude::*;

    fn freqs(pairs: &[(Cell, f64)]) -> ColumnFrequencies<f64> {
        ColumnFrequencies::from_map(pairs.iter().copied().collect())
    }

    fn lib_of(requests: &[&[u8]]) -> InteractionLibrary {
        InteractionLibrary::new(
            requests
                .iter()
                .map(|r| Interaction::new(*r, "x").unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fixture_matrix_shape() {
        let m = RequestMatrix::from_library(&fixtures::directory_log()).unwrap();
        // longest request "{id:024,op:A,sn:Schneider}"
        assert_eq!((m.height(), m.width()), (8, 26));
    }

    #[test]
    fn padding() {
        let m = RequestMatrix::from_requests([&b"ab"[..]]).unwrap();
        assert_eq!(m.rows(), &[vec![Cell::Octet(b'a'), Cell::Octet(b'b')]]);
        let m = RequestMatrix::from_requests([&b"ab"[..], b"abcd"]).unwrap();
        assert_eq!(m.width(), 4);
        assert_eq!(
            m.rows()[0],
            vec![
                Cell::Octet(b'a'),
                Cell::Octet(b'b'),
                Cell::Lambda,
                Cell::Lambda
            ]
        );
        assert!(RequestMatrix::from_requests(std::iter::empty::<&[u8]>()).is_err());
    }

    #[test]
    fn fixture_column_frequencies() {
        let m = RequestMatrix::from_library(&fixtures::directory_log()).unwrap();
        let c1 = m.column_frequencies::<f64>(1).unwrap();
        assert_eq!(c1.len(), 1);
        assert_eq!(c1.get(Cell::Octet(b'{')), Some(1.0));

        // first id digits 0,0,0,2,4,7,8,9
        let c5 = m.column_frequencies::<f64>(5).unwrap();
        assert_eq!(c5.get(Cell::Octet(b'0')), Some(0.375));
        for d in *b"24789" {
            assert_eq!(c5.get(Cell::Octet(d)), Some(0.125));
        }
        assert_eq!(EntropyMethod::Richness.entropy(&c5), 6.0);

        assert!(matches!(
            m.column_frequencies::<f64>(0),
            Err(EntropyError::ColumnOutOfRange { .. })
        ));
        assert!(m.column_frequencies::<f64>(27).is_err());
    }

    #[test]
    fn lambda_counts_as_a_symbol() {
        let m = RequestMatrix::from_requests([&b"a"[..], b"ab"]).unwrap();
        let c2 = m.column_frequencies::<f64>(2).unwrap();
        assert_eq!(c2.get(Cell::Octet(b'b')), Some(0.5));
        assert_eq!(c2.get(Cell::Lambda), Some(0.5));
    }

    #[test]
    fn entropy_values() {
        let single = freqs(&[(Cell::Octet(b'x'), 1.0)]);
        assert_eq!(EntropyMethod::Shannon.entropy(&single), 0.0);
        assert_eq!(EntropyMethod::Richness.entropy(&single), 1.0);
        assert_eq!(EntropyMethod::Simpson.entropy(&single), 0.0);
        assert_eq!(EntropyMethod::SimpsonConcentration.entropy(&single), 1.0);

        let half = freqs(&[(Cell::Octet(b'x'), 0.5), (Cell::Octet(b'y'), 0.5)]);
        assert!((EntropyMethod::Shannon.entropy(&half) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((EntropyMethod::Simpson.entropy(&half) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalise_cases() {
        assert_eq!(normalise(&[1.0, 6.0, 1.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(normalise(&[3.0, 3.0, 3.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalise(&[0.0, 0.5, 1.0]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn scaler_points() {
        let hyper = ScalerSpec::Hyperbolic { a: 1.0, c: 10.0 };
        assert_eq!(hyper.apply(0.0), 1.0);
        assert!((hyper.apply(1.0) - 2f64.powi(-10)).abs() < 1e-12);
        let sig = ScalerSpec::<f64>::Sigmoid { k: 10.0, tau: 0.5 };
        assert!((sig.apply(0.5) - 0.5).abs() < 1e-12);
        assert_eq!(ScalerSpec::Exponential { k: 3.0 }.apply(0.0), 1.0);
        let th = ScalerSpec::Threshold { tau: 0.4 };
        assert_eq!(th.apply(0.4), 1.0);
        assert_eq!(th.apply(0.41), THRESHOLD_FLOOR);
    }

    #[test]
    fn scaler_validation() {
        assert!(ScalerSpec::Hyperbolic { a: 0.0, c: 1.0 }
            .validate()
            .is_err());
        assert!(ScalerSpec::Exponential { k: -1.0 }.validate().is_err());
        assert!(ScalerSpec::Sigmoid { k: 1.0, tau: 1.5 }.validate().is_err());
        assert!(ScalerSpec::Threshold { tau: 0.0 }.validate().is_ok());
    }

    #[test]
    fn fixture_richness_hyperbolic_weights() {
        let lib = fixtures::directory_log();
        let w = derive_weights(
            &lib,
            EntropyMethod::Richness,
            ScalerSpec::Hyperbolic { a: 1.0, c: 10.0 },
        )
        .unwrap();
        assert_eq!(w.len(), 26);
        assert_eq!(w.weight(1), 1.0);
        let floor = 2f64.powi(-10);
        let min = w.weights().iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - floor).abs() < 1e-15);
        // column 7 (last id digit) has the highest richness
        assert!((w.weight(7) - floor).abs() < 1e-15);
        assert!((w.default_weight() - floor).abs() < 1e-15);
        assert_eq!(
            w.provenance().unwrap().library_fingerprint,
            lib.fingerprint()
        );
    }

    #[test]
    fn identical_requests_give_unit_weights() {
        let lib = lib_of(&[b"same", b"same", b"same"]);
        for method in EntropyMethod::ALL {
            let w = derive_weights(&lib, method, ScalerSpec::Exponential { k: 4.0 }).unwrap();
            assert!(w.weights().iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn weights_file_round_trip() {
        let w = derive_weights(
            &fixtures::directory_log(),
            EntropyMethod::Shannon,
            ScalerSpec::Sigmoid { k: 10.0, tau: 0.5 },
        )
        .unwrap();
        let file = WeightsFile::from_weights(&w).unwrap();
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"kind\":\"sigmoid\""));
        assert!(json.contains("\"method\":\"shannon\""));
        let back: WeightsFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_weights().unwrap(), w);
    }

    #[test]
    fn method_names_parse() {
        for m in EntropyMethod::ALL {
            assert_eq!(m.name().parse::<EntropyMethod>().unwrap(), m);
        }
        assert!("gini".parse::<EntropyMethod>().is_err());
    }

    fn arb_column() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..6, 1..30)
    }

    fn arb_scaler() -> impl Strategy<Value = ScalerSpec<f64>> {
        prop_oneof![
            (0.1f64..50.0, 0.1f64..20.0).prop_map(|(a, c)| ScalerSpec::Hyperbolic { a, c }),
            (0.1f64..20.0).prop_map(|k| ScalerSpec::Exponential { k }),
            (0.1f64..20.0, 0.0f64..=1.0).prop_map(|(k, tau)| ScalerSpec::Sigmoid { k, tau }),
            (0.0f64..=1.0).prop_map(|tau| ScalerSpec::Threshold { tau }),
        ]
    }

    proptest! {
        #[test]
        fn shannon_and_simpson_bounds(col in arb_column()) {
            let m = RequestMatrix::from_requests(col.iter().map(std::slice::from_ref)).unwrap();
            let q = m.column_frequencies::<f64>(1).unwrap();
            let total: f64 = q.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let k = q.len() as f64;
            let h = EntropyMethod::Shannon.entropy(&q);
            prop_assert!(h >= -1e-12 && h <= k.ln() + 1e-12);
            let gs = EntropyMethod::Simpson.entropy(&q);
            prop_assert!((0.0..1.0).contains(&gs));
            prop_assert_eq!(gs == 0.0, q.len() == 1);
            prop_assert_eq!(EntropyMethod::Richness.entropy(&q), k);
        }

        #[test]
        fn uniform_columns_reach_ln_k(k in 1usize..8, reps in 1usize..5) {
            let col: Vec<u8> = (0..k as u8).flat_map(|s| std::iter::repeat_n(s, reps)).collect();
            let m = RequestMatrix::from_requests(col.iter().map(std::slice::from_ref)).unwrap();
            let q = m.column_frequencies::<f64>(1).unwrap();
            prop_assert!((EntropyMethod::Shannon.entropy(&q) - (k as f64).ln()).abs() < 1e-12);
        }

        #[test]
        fn scaler_ranges(s in arb_scaler(), x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let v = s.apply(x);
            prop_assert!(v > 0.0 && v <= 1.0);
            if let ScalerSpec::Threshold { .. } = s {
                prop_assert!(v == 1.0 || v == THRESHOLD_FLOOR);
            }
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(s.apply(lo) >= s.apply(hi));
        }

        #[test]
        fn constant_columns_weigh_most(
            reqs in proptest::collection::vec(proptest::collection::vec(0u8..4, 1..8), 2..12),
            s in arb_scaler(),
        ) {
            let lib = lib_of(&reqs.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let m = RequestMatrix::from_library(&lib).unwrap();
            for method in [EntropyMethod::Shannon, EntropyMethod::Richness, EntropyMethod::Simpson] {
                let w = derive_weights(&lib, method, s).unwrap();
                for j in 1..=m.width() {
                    if m.column_frequencies::<f64>(j).unwrap().len() == 1 {
                        prop_assert!(w.weights().iter().all(|&x| w.weight(j) >= x));
                    }
                }
            }
        }

        #[test]
        fn pipeline_composes(
            reqs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..10), 1..10),
            s in arb_scaler(),
        ) {
            let lib = lib_of(&reqs.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let m = RequestMatrix::from_library(&lib).unwrap();
            for method in EntropyMethod::ALL {
                let raw: Vec<f64> = (1..=m.width())
                    .map(|j| method.entropy(&m.column_frequencies::<f64>(j).unwrap()))
                    .collect();
                let manual: Vec<f64> = normalise(&raw).into_iter().map(|x| s.apply(x)).collect();
                let w = derive_weights(&lib, method, s).unwrap();
                prop_assert_eq!(w.weights(), &manual[..]);
            }
        }
    }
}
