//! LibSVM ingestion and the heterogeneity-inducing preprocessing pipeline:
//! sort samples by label, split contiguously across nodes, then standardize
//! each node's shard on its own statistics.
//!
//! Storage is dense. Each line of a LibSVM file is
//!
//! ```text
//! <label> <idx>:<val> <idx>:<val> ...
//! ```
//!
//! with 1-based, strictly ascending indices. Labels `+1`/`1` map to +1 and
//! `-1`/`0` map to -1.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::noise::NoiseStream;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::invalid(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix { rows: idx.len(), cols: self.cols, data }
    }
}

/// Labeled samples with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!("{} feature rows but {} labels", features.rows(), labels.len())));
        }
        if labels.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        if let Some(b) = labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return Err(Error::invalid(format!("label {b} is not in {{-1, +1}}")));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Per-feature standardization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

/// One node's partition of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeShard {
    pub node_id: usize,
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
    /// Present once `standard_scale` has been applied.
    pub scaler: Option<Vec<Scaler>>,
}

impl NodeShard {
    pub fn new(node_id: usize, features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "shard {node_id}: {} rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(NodeShard { node_id, features, labels, scaler: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    let err = || Error::Parse { line, msg: format!("invalid label '{tok}'") };
    let v: f64 = tok.parse().map_err(|_| err())?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(err())
    }
}

/// Reads a LibSVM text stream into a dense dataset. Blank lines and
/// `#` comments are skipped; CRLF line endings are accepted.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        labels.push(parse_label(label_tok, line_no)?);

        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("malformed token '{tok}' (expected idx:val)"),
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("invalid feature index in '{tok}'") })?;
            if idx == 0 {
                return Err(Error::Parse { line: line_no, msg: "feature indices are 1-based".into() });
            }
            if idx <= last {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("feature index {idx} is not ascending (previous {last})"),
                });
            }
            let val: f64 = val
                .parse()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("invalid feature value in '{tok}'") })?;
            if !val.is_finite() {
                return Err(Error::Parse { line: line_no, msg: format!("non-finite feature value in '{tok}'") });
            }
            last = idx;
            row.push((idx - 1, val));
        }
        d = d.max(last);
        sparse_rows.push(row);
    }

    if labels.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no samples in input".into() });
    }
    if d == 0 {
        return Err(Error::Parse { line: labels.len(), msg: "no features in input".into() });
    }

    let mut features = DenseMatrix::zeros(labels.len(), d);
    for (i, row) in sparse_rows.iter().enumerate() {
        let dst = features.row_mut(i);
        for &(j, v) in row {
            dst[j] = v;
        }
    }
    Dataset::new(features, labels)
}

/// Writes a dataset in LibSVM format. Zero entries are omitted except for the
/// last column, which is always written so the dimension survives a re-read.
pub fn serialize_libsvm(ds: &Dataset) -> String {
    let d = ds.dim();
    let mut out = String::new();
    for (row, &b) in ds.features.iter_rows().zip(&ds.labels) {
        out.push_str(if b > 0.0 { "+1" } else { "-1" });
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 || j + 1 == d {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

/// Sorts samples by label (stable, -1 block first) and cuts the result into
/// `n` contiguous shards. The first `m mod n` shards get one extra sample.
pub fn heterogeneous_split(ds: &Dataset, n: usize) -> Result<Vec<NodeShard>> {
    let m = ds.len();
    if n == 0 {
        return Err(Error::config("node count must be >= 1"));
    }
    if n > m {
        return Err(Error::config(format!("cannot split {m} samples across {n} nodes")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| ds.labels[a].total_cmp(&ds.labels[b]));

    let base = m / n;
    let extra = m % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for node in 0..n {
        let size = base + usize::from(node < extra);
        let idx = &order[start..start + size];
        let labels = idx.iter().map(|&i| ds.labels[i]).collect();
        shards.push(NodeShard::new(node, ds.features.select_rows(idx), labels)?);
        start += size;
    }
    Ok(shards)
}

/// Standardizes each column of the shard with its own mean and population
/// standard deviation. Columns whose spread is at rounding level are only
/// centered, which leaves them at exactly zero.
pub fn standard_scale(shard: &NodeShard) -> NodeShard {
    let m = shard.len();
    let d = shard.dim();
    let mut out = shard.clone();
    if m == 0 {
        out.scaler = Some(Vec::new());
        return out;
    }
    let mut scaler = Vec::with_capacity(d);
    for j in 0..d {
        let mean = (0..m).map(|i| shard.features.get(i, j)).sum::<f64>() / m as f64;
        let var = (0..m)
            .map(|i| {
                let c = shard.features.get(i, j) - mean;
                c * c
            })
            .sum::<f64>()
            / m as f64;
        let std = var.sqrt();
        let constant = std <= 1e-12 * mean.abs().max(1.0);
        for i in 0..m {
            let x = out.features.row_mut(i);
            x[j] = if constant { 0.0 } else { (shard.features.get(i, j) - mean) / std };
        }
        scaler.push(Scaler { mean, std: if constant { 0.0 } else { std } });
    }
    out.scaler = Some(scaler);
    out
}

/// Full preprocessing pipeline: label sort, split, per-shard scaling.
pub fn prepare_shards(ds: &Dataset, n: usize) -> Result<Vec<NodeShard>> {
    Ok(heterogeneous_split(ds, n)?.iter().map(standard_scale).collect())
}

/// Two-class synthetic dataset: Gaussian features whose mean is shifted along
/// a fixed random direction according to the label. The first
/// `round(positive_frac * m)` samples drawn get label +1, the rest -1, and the
/// rows are then interleaved so that sorting actually has work to do.
pub fn synthetic_classification(m: usize, d: usize, positive_frac: f64, separation: f64, seed: u64) -> Result<Dataset> {
    if m == 0 || d == 0 {
        return Err(Error::config("synthetic dataset needs m >= 1 and d >= 1"));
    }
    if !(0.0..=1.0).contains(&positive_frac) {
        return Err(Error::config("positive fraction must lie in [0, 1]"));
    }
    let noise = NoiseStream::new(seed);
    let dir = noise.gaussian(u64::MAX, 0, 1.0, d);
    let dn = dir.norm().max(f64::MIN_POSITIVE);
    let n_pos = (positive_frac * m as f64).round() as usize;

    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        // Bresenham-style spread: exactly n_pos positives, evenly interleaved
        let b = if (i + 1) * n_pos / m > i * n_pos / m { 1.0 } else { -1.0 };
        let z = noise.gaussian(i as u64, 1, 1.0, d);
        let row: Vec<f64> = z.iter().zip(dir.iter()).map(|(zj, uj)| zj + b * separation * uj / dn).collect();
        rows.push(row);
        labels.push(b);
    }
    Dataset::new(DenseMatrix::from_rows(&rows, d)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_pos(labels: &[f64]) -> usize {
        labels.iter().filter(|&&b| b > 0.0).count()
    }

    fn parse(s: &str) -> Result<Dataset> {
        parse_libsvm(s.as_bytes())
    }

    #[test]
    fn parses_single_line() {
        let ds = parse("+1 1:0.5 3:-2\n").unwrap();
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.features.row(0), &[0.5, 0.0, -2.0]);
        assert_eq!(ds.labels, vec![1.0]);
    }

    #[test]
    fn infers_dimension_from_max_index() {
        let ds = parse("-1 2:1\n+1 1:1\n").unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.features.row(0), &[0.0, 1.0]);
        assert_eq!(ds.features.row(1), &[1.0, 0.0]);
        assert_eq!(ds.labels, vec![-1.0, 1.0]);
    }

    #[test]
    fn label_zero_maps_to_minus_one_and_crlf_is_accepted() {
        let ds = parse("0 1:2\r\n1 1:3\r\n").unwrap();
        assert_eq!(ds.labels, vec![-1.0, 1.0]);
    }

    #[test]
    fn no_trailing_newline_is_fine() {
        let ds = parse("+1 1:1").unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn invalid_float_reports_line() {
        match parse("1 1:x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_ascending_index_is_rejected() {
        match parse("+1 1:1\n-1 3:1 2:1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("+1 2:1 2:1\n").is_err());
        assert!(parse("+1 0:1\n").is_err());
    }

    #[test]
    fn malformed_token_and_bad_label() {
        assert!(matches!(parse("+1 1=2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("+1 1:1\n3 1:1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
        assert!(matches!(parse("\n\n"), Err(Error::Parse { .. })));
    }

    fn labeled(labels: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64]).collect();
        Dataset::new(DenseMatrix::from_rows(&rows, 1).unwrap(), labels.to_vec()).unwrap()
    }

    #[test]
    fn split_sorts_then_partitions() {
        let ds = labeled(&[1.0, -1.0, 1.0, -1.0]);
        let shards = heterogeneous_split(&ds, 2).unwrap();
        assert_eq!(shards[0].labels, vec![-1.0, -1.0]);
        assert_eq!(shards[1].labels, vec![1.0, 1.0]);
        // stable: original order within a class
        assert_eq!(shards[0].features.row(0), &[1.0]);
        assert_eq!(shards[0].features.row(1), &[3.0]);
    }

    #[test]
    fn split_remainder_goes_to_first_shards() {
        let ds = labeled(&[1.0, -1.0, 1.0, -1.0, 1.0]);
        let sizes: Vec<usize> = heterogeneous_split(&ds, 2).unwrap().iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![3, 2]);
    }

    #[test]
    fn single_node_split_is_sorted_dataset() {
        let ds = labeled(&[1.0, -1.0, 1.0]);
        let shards = heterogeneous_split(&ds, 1).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].labels, vec![-1.0, 1.0, 1.0]);
        let firsts: Vec<f64> = shards[0].features.iter_rows().map(|r| r[0]).collect();
        assert_eq!(firsts, vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn too_many_nodes_is_config_error() {
        let ds = labeled(&[1.0, -1.0]);
        assert!(matches!(heterogeneous_split(&ds, 3), Err(Error::Config(_))));
        assert!(matches!(heterogeneous_split(&ds, 0), Err(Error::Config(_))));
    }

    fn column_shard(col: &[f64]) -> NodeShard {
        let rows: Vec<Vec<f64>> = col.iter().map(|&v| vec![v]).collect();
        NodeShard::new(0, DenseMatrix::from_rows(&rows, 1).unwrap(), vec![1.0; col.len()]).unwrap()
    }

    #[test]
    fn scaling_uses_population_std() {
        let s = standard_scale(&column_shard(&[1.0, 2.0, 3.0]));
        // mean 2, population std sqrt(2/3)
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        let got: Vec<f64> = s.features.iter_rows().map(|r| r[0]).collect();
        assert!((got[0] + expect).abs() < 1e-12);
        assert_eq!(got[1], 0.0);
        assert!((got[2] - expect).abs() < 1e-12);
        assert!((expect - 1.224744871391589).abs() < 1e-12);
        let sc = s.scaler.unwrap()[0];
        assert_eq!(sc.mean, 2.0);
        assert!((sc.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let s = standard_scale(&column_shard(&[5.0, 5.0]));
        assert_eq!(s.features.row(0), &[0.0]);
        assert_eq!(s.features.row(1), &[0.0]);
        let s = standard_scale(&column_shard(&[0.1, 0.1, 0.1]));
        assert!(s.features.iter_rows().all(|r| r[0] == 0.0));
    }

    #[test]
    fn scaling_is_idempotent_on_standardized_data() {
        let col = [-1.0, 1.0, -1.0, 1.0];
        let s = standard_scale(&column_shard(&col));
        for (r, c) in s.features.iter_rows().zip(col) {
            assert!((r[0] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_has_requested_balance() {
        let ds = synthetic_classification(500, 7, 0.45, 1.0, 11).unwrap();
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.dim(), 7);
        assert_eq!(count_pos(&ds.labels), 225);
        // both classes appear in the first half before sorting
        assert!(ds.labels[..250].iter().any(|&b| b > 0.0));
        assert!(ds.labels[..250].iter().any(|&b| b < 0.0));
    }
}
