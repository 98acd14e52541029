//! LIBSVM text datasets.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::InputFeatures;

/// One labelled row: the raw target, its dense class index and sparse features
/// keyed by 0-based column.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub target: f64,
    pub class: usize,
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    /// Number of feature columns (largest 1-based index in the file).
    pub dprime: usize,
    /// Number of classes, at least 2.
    pub classes: usize,
    /// Distinct raw labels in ascending order; position is the class index.
    pub label_map: Vec<f64>,
}

/// A labelled example ready for the learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub feat: InputFeatures,
    pub label: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a LIBSVM file: `label idx:val idx:val ...` per line, 1-based indices,
/// `#` starts a comment, duplicate indices keep the last value.
pub fn parse_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let ds = parse_libsvm_str(&text)?;
    if ds.rows.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    Ok(ds)
}

/// [`parse_libsvm`] over in-memory text. An input without rows yields an
/// empty-dataset error naming `<memory>`.
pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    let mut parsed: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut dprime = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let target: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid label `{label_tok}`")))?;
        if !target.is_finite() {
            return Err(parse_err(lineno, format!("non-finite label `{label_tok}`")));
        }
        let mut feats = BTreeMap::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid feature index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices start at 1"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("non-finite feature value in `{tok}`")));
            }
            dprime = dprime.max(idx);
            feats.insert(idx - 1, val);
        }
        parsed.push((target, feats.into_iter().collect()));
    }
    if parsed.is_empty() {
        return Err(Error::EmptyDataset("<memory>".into()));
    }
    let mut labels: Vec<f64> = parsed.iter().map(|(t, _)| *t).collect();
    labels.sort_by(|a, b| a.partial_cmp(b).expect("finite labels"));
    labels.dedup();
    let rows = parsed
        .into_iter()
        .map(|(target, features)| Row {
            target,
            class: labels
                .binary_search_by(|l| l.partial_cmp(&target).expect("finite labels"))
                .expect("label present"),
            features,
        })
        .collect();
    Ok(Dataset {
        rows,
        dprime: dprime.max(1),
        classes: labels.len().max(2),
        label_map: labels,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense class index of a raw label.
    pub fn class_of(&self, label: f64) -> Option<usize> {
        self.label_map.iter().position(|l| *l == label)
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dprime];
        for &(j, v) in &self.rows[i].features {
            x[j] = v;
        }
        x
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.rows[i].features.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Appends a constant column with the given value.
    pub fn with_bias(&self, value: f64) -> Self {
        let mut out = self.clone();
        let col = self.dprime;
        for row in &mut out.rows {
            row.features.push((col, value));
        }
        out.dprime += 1;
        out
    }

    /// Rows permuted by a seeded shuffle.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        out
    }

    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.rows.truncate(n);
        out
    }

    /// Classification examples with `‖x‖ ≤ radius` enforced.
    pub fn examples(&self, radius: f64) -> Result<Vec<Example>> {
        (0..self.len())
            .map(|i| {
                Ok(Example {
                    feat: InputFeatures::new(self.dense_row(i), self.classes, radius)?,
                    label: self.rows[i].class,
                })
            })
            .collect()
    }

    /// Regression pairs `(x, target)`.
    pub fn regression_pairs(&self) -> Vec<(DVector<f64>, f64)> {
        (0..self.len())
            .map(|i| (DVector::from_vec(self.dense_row(i)), self.rows[i].target))
            .collect()
    }
}

/// Scales every row by `R_target / max_row_norm`.
pub fn scale_features(ds: &Dataset, r_target: f64) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("<memory>".into()));
    }
    if !(r_target > 0.0) {
        return Err(Error::Config(format!("target radius must be positive, got {r_target}")));
    }
    let max = (0..ds.len()).map(|i| ds.row_norm(i)).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateData("every row is the zero vector".into()));
    }
    let s = r_target / max;
    let mut out = ds.clone();
    if s != 1.0 {
        for row in &mut out.rows {
            for (_, v) in &mut row.features {
                *v *= s;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let ds = parse_libsvm_str("1 1:0.5 3:-1.2").unwrap();
        assert_eq!(ds.rows[0].target, 1.0);
        assert_eq!(ds.rows[0].features, vec![(0, 0.5), (2, -1.2)]);
        assert_eq!(ds.dprime, 3);
    }

    #[test]
    fn two_lines_two_classes() {
        let ds = parse_libsvm_str("2 2:1\n1 1:1").unwrap();
        assert_eq!(ds.classes, 2);
        assert_eq!(ds.dprime, 2);
        assert_eq!(ds.rows[0].class, 1);
        assert_eq!(ds.rows[1].class, 0);
        assert_eq!(ds.class_of(2.0), Some(1));
    }

    #[test]
    fn malformed_token_names_line() {
        match parse_libsvm_str("abc:1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_libsvm_str("1 1:2\n2 x:1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_libsvm_str("1 0:1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm_str("1 3"), Err(Error::Parse { .. })));
    }

    #[test]
    fn comments_duplicates_and_unordered_indices() {
        let ds = parse_libsvm_str("# header\n3 4:1 2:5 4:-2 # trailing\n\n+1 1:1\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rows[0].features, vec![(1, 5.0), (3, -2.0)]);
        assert_eq!(ds.label_map, vec![1.0, 3.0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_libsvm_str(""), Err(Error::EmptyDataset(_))));
        assert!(matches!(parse_libsvm_str("# only a comment\n"), Err(Error::EmptyDataset(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.svm");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(parse_libsvm(&p), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn scaling() {
        let ds = parse_libsvm_str("1 1:0.6 2:0.8\n2 1:0.5").unwrap();
        assert_eq!(scale_features(&ds, 1.0).unwrap(), ds);
        let ds = parse_libsvm_str("1 1:2").unwrap();
        let s = scale_features(&ds, 1.0).unwrap();
        assert_eq!(s.rows[0].features, vec![(0, 1.0)]);
        let zero = parse_libsvm_str("1 1:0\n2").unwrap();
        assert!(matches!(scale_features(&zero, 1.0), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn bias_column() {
        let ds = parse_libsvm_str("1 1:0.5\n2 2:1").unwrap().with_bias(1.0);
        assert_eq!(ds.dprime, 3);
        assert_eq!(ds.dense_row(0), vec![0.5, 0.0, 1.0]);
    }
}
