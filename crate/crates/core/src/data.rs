//! Datasets, labels, targets, feature scaling and the deterministic dense
//! linear algebra shared by the solver and the learners.
//!
//! Every reduction over samples runs in a canonical row order (rows sorted by
//! content), so results do not depend on how the rows were ordered on input
//! and are bit-identical from run to run.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gram matrices larger than this many bytes are refused.
pub const DEFAULT_MAX_GRAM_BYTES: usize = 2 << 30;

const GRAM_BLOCK: usize = 32;

/// Dense `N × n` matrix, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite entry at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// True when every entry lies in `[0, 1]`.
    pub fn is_unit_interval(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::dim(format!("row index {i} out of range for {} rows", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&j) = idx.iter().find(|&&j| j >= self.cols) {
            return Err(Error::dim(format!(
                "column index {j} out of range for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for r in self.row_iter() {
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Self::new(self.rows, idx.len(), data)
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<Self> {
        if other.cols != self.cols {
            return Err(Error::dim(format!(
                "cannot stack {} columns onto {}",
                other.cols, self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Column-wise map; `f(j, value)`.
    pub(crate) fn map_entries(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let cols = self.cols;
        let data = self.data.iter().enumerate().map(|(p, &v)| f(p % cols, v)).collect();
        Self {
            rows: self.rows,
            cols,
            data,
        }
    }
}

/// Class identifier as it appears in the input data.
pub type ClassId = String;

/// One class label per sample, stored as indices into a sorted class set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    ids: Vec<usize>,
    classes: Vec<ClassId>,
}

impl LabelVector {
    /// Builds labels from raw identifiers. Classes are ordered numerically
    /// when every identifier parses as an integer, lexicographically otherwise.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::input("label vector is empty"));
        }
        let mut classes: Vec<ClassId> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        classes.sort_by(|a, b| class_order(a, b));
        classes.dedup();
        let lookup: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let ids = labels.iter().map(|s| lookup[s.as_ref()]).collect();
        Ok(Self { ids, classes })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn label(&self, i: usize) -> &str {
        &self.classes[self.ids[i]]
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Per-class sample counts, indexed like `classes()`.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes.len()];
        for &id in &self.ids {
            h[id] += 1;
        }
        h
    }

    /// Subset of samples; the class set is kept whole so class indices stay valid.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(idx.len());
        for &i in idx {
            ids.push(
                *self
                    .ids
                    .get(i)
                    .ok_or_else(|| Error::dim(format!("label index {i} out of range for {}", self.len())))?,
            );
        }
        Ok(Self {
            ids,
            classes: self.classes.clone(),
        })
    }

    /// Concatenation with labels that may use a different class set.
    pub fn concat(&self, other: &LabelVector) -> Result<Self> {
        let all: Vec<&str> = (0..self.len())
            .map(|i| self.label(i))
            .chain((0..other.len()).map(|i| other.label(i)))
            .collect();
        Self::from_labels(&all)
    }

    /// Sample indices grouped by class index.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes.len()];
        for (i, &id) in self.ids.iter().enumerate() {
            out[id].push(i);
        }
        out
    }
}

fn class_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Ensemble output targets for positive and negative samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub mu_p: f64,
    pub mu_n: f64,
}

impl Default for Targets {
    fn default() -> Self {
        Self { mu_p: 1.0, mu_n: 0.0 }
    }
}

impl Targets {
    pub fn new(mu_p: f64, mu_n: f64) -> Result<Self> {
        if !(0.0 <= mu_n && mu_n < mu_p && mu_p <= 1.0) {
            return Err(Error::input(format!(
                "targets must satisfy 0 <= mu_n < mu_p <= 1, got mu_p={mu_p}, mu_n={mu_n}"
            )));
        }
        Ok(Self { mu_p, mu_n })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mu_p + self.mu_n)
    }
}

/// Per-sample regression targets, each either `mu_p` or `mu_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    values: Vec<f64>,
    targets: Targets,
}

impl TargetVector {
    /// Targets for a one-vs-all split: `mu_p` on `positive`, `mu_n` elsewhere.
    pub fn one_vs_all(labels: &LabelVector, positive: usize, targets: Targets) -> Self {
        let values = labels
            .ids()
            .iter()
            .map(|&id| if id == positive { targets.mu_p } else { targets.mu_n })
            .collect();
        Self { values, targets }
    }

    pub fn from_flags(positive: &[bool], targets: Targets) -> Self {
        let values = positive
            .iter()
            .map(|&p| if p { targets.mu_p } else { targets.mu_n })
            .collect();
        Self { values, targets }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn targets(&self) -> Targets {
        self.targets
    }

    /// `tᵀt`, the constant dropped from the least-squares objective.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// How raw features are brought into the learner's value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Scaling {
    /// Features already lie in `[0, 1]` and are used as-is.
    UnitInterval,
    /// Per-feature z-scoring with statistics from the training data.
    Standardized { mean: Vec<f64>, std: Vec<f64> },
}

impl Scaling {
    pub fn kind(&self) -> ScalingKind {
        match self {
            Scaling::UnitInterval => ScalingKind::UnitInterval,
            Scaling::Standardized { .. } => ScalingKind::Standardized,
        }
    }

    pub fn apply(&self, f: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            Scaling::UnitInterval => Ok(f.clone()),
            Scaling::Standardized { mean, std } => {
                if mean.len() != f.cols() {
                    return Err(Error::dim(format!(
                        "scaling has {} features, matrix has {}",
                        mean.len(),
                        f.cols()
                    )));
                }
                Ok(f.map_entries(|j, v| (v - mean[j]) / std[j]))
            }
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        match self {
            Scaling::UnitInterval => Ok(row.to_vec()),
            Scaling::Standardized { mean, std } => {
                if mean.len() != row.len() {
                    return Err(Error::dim(format!(
                        "scaling has {} features, sample has {}",
                        mean.len(),
                        row.len()
                    )));
                }
                Ok(row
                    .iter()
                    .zip(mean.iter().zip(std))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect())
            }
        }
    }

    /// Fits the scaling of the requested kind on `f` and returns the scaled matrix.
    pub fn fit(kind: ScalingKind, f: &FeatureMatrix) -> Result<(FeatureMatrix, Scaling)> {
        match kind {
            ScalingKind::UnitInterval => {
                if !f.is_unit_interval() {
                    return Err(Error::ModeMismatch(
                        "unit-interval scaling requires every entry in [0, 1]".into(),
                    ));
                }
                Ok((f.clone(), Scaling::UnitInterval))
            }
            ScalingKind::Standardized => Ok(standardize(f)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    UnitInterval,
    Standardized,
}

/// Rows sorted by content (then by the optional per-row key). Reductions that
/// walk this order give the same bits for any permutation of the input rows.
pub fn canonical_row_order(f: &FeatureMatrix, key: Option<&[f64]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..f.rows()).collect();
    order.par_sort_by(|&a, &b| {
        let ra = f.row(a);
        let rb = f.row(b);
        ra.iter()
            .zip(rb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then_with(|| match key {
                Some(k) => k[a].total_cmp(&k[b]),
                None => Ordering::Equal,
            })
    });
    order
}

/// Column means and 1/N standard deviations; zero-variance columns map to
/// zeros with a recorded std of 1.
pub fn standardize(f: &FeatureMatrix) -> (FeatureMatrix, Scaling) {
    let n = f.cols();
    let order = canonical_row_order(f, None);
    let count = f.rows() as f64;
    let mut sum = vec![0.0; n];
    for &i in &order {
        for (s, v) in sum.iter_mut().zip(f.row(i)) {
            *s += v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let mut ss = vec![0.0; n];
    for &i in &order {
        for ((acc, v), m) in ss.iter_mut().zip(f.row(i)).zip(&mean) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let mut degenerate = vec![false; n];
    let std: Vec<f64> = ss
        .iter()
        .zip(&mean)
        .enumerate()
        .map(|(j, (acc, m))| {
            let s = (acc / count).sqrt();
            if s <= 1e-12 * m.abs().max(1.0) {
                degenerate[j] = true;
                1.0
            } else {
                s
            }
        })
        .collect();
    let scaled = f.map_entries(|j, v| if degenerate[j] { 0.0 } else { (v - mean[j]) / std[j] });
    (scaled, Scaling::Standardized { mean, std })
}

/// Dense symmetric `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from a full row-major buffer; symmetry is checked to `tol`.
    pub fn from_full(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::dim(format!(
                "expected {} entries for {n}x{n}, got {}",
                n * n,
                data.len()
            )));
        }
        let m = Self { n, data };
        if let Some((i, j)) = m.asymmetry(tol) {
            return Err(Error::input(format!(
                "matrix is not symmetric at ({i}, {j}): {} vs {}",
                m.get(i, j),
                m.get(j, i)
            )));
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_full(n, data, 1e-12)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// First `(i, j)` whose mirrored entries differ by more than `tol` relative to the largest entry.
    pub fn asymmetry(&self, tol: f64) -> Option<(usize, usize)> {
        let scale = self.max_abs().max(1.0);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (largest absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn neg(&self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    /// `S M S` for a diagonal ±1 matrix `S`; sign changes are exact.
    pub fn conjugate_by_signs(&self, signs: &[i8]) -> Self {
        let n = self.n;
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..n {
                if signs[i] != signs[j] {
                    data[i * n + j] = -data[i * n + j];
                }
            }
        }
        Self { n, data }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data.par_chunks_exact(self.n).map(|r| dot(r, x)).collect()
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }
}

/// Left-to-right dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `M = FᵀF` with the default memory cap.
pub fn gram(f: &FeatureMatrix) -> Result<SymMatrix> {
    gram_with_limit(f, DEFAULT_MAX_GRAM_BYTES)
}

/// `M = FᵀF`, refusing outputs larger than `max_bytes`.
///
/// Each entry is accumulated over samples in canonical row order. Blocks of
/// output rows run in parallel, but every entry has exactly one accumulator,
/// so the result is the same on any thread count.
pub fn gram_with_limit(f: &FeatureMatrix, max_bytes: usize) -> Result<SymMatrix> {
    let n = f.cols();
    let bytes = n.checked_mul(n).and_then(|v| v.checked_mul(std::mem::size_of::<f64>()));
    match bytes {
        Some(b) if b <= max_bytes => {}
        _ => {
            return Err(Error::Resource(format!(
                "gram matrix for {n} features exceeds the {max_bytes}-byte cap"
            )))
        }
    }
    let order = canonical_row_order(f, None);
    let starts: Vec<usize> = (0..n).step_by(GRAM_BLOCK).collect();
    let blocks: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&i0| {
            let i1 = (i0 + GRAM_BLOCK).min(n);
            // Row i of the block holds columns i..n, stored at offset (i - i0) * n.
            let mut acc = vec![0.0; (i1 - i0) * n];
            for &s in &order {
                let r = f.row(s);
                for i in i0..i1 {
                    let a = r[i];
                    let out = &mut acc[(i - i0) * n + i..(i - i0 + 1) * n];
                    for (o, &b) in out.iter_mut().zip(&r[i..]) {
                        *o += a * b;
                    }
                }
            }
            (i0, acc)
        })
        .collect();
    let mut data = vec![0.0; n * n];
    for (i0, acc) in blocks {
        let i1 = (i0 + GRAM_BLOCK).min(n);
        for i in i0..i1 {
            for j in i..n {
                let v = acc[(i - i0) * n + j];
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
    }
    Ok(SymMatrix { n, data })
}

/// `b = Fᵀt`, accumulated in canonical order of `(row, target)`.
pub fn linear_term(f: &FeatureMatrix, t: &TargetVector) -> Result<Vec<f64>> {
    if t.len() != f.rows() {
        return Err(Error::dim(format!("{} targets for {} samples", t.len(), f.rows())));
    }
    let order = canonical_row_order(f, Some(t.values()));
    let mut b = vec![0.0; f.cols()];
    for &i in &order {
        let ti = t.values()[i];
        for (acc, v) in b.iter_mut().zip(f.row(i)) {
            *acc += v * ti;
        }
    }
    Ok(b)
}
