//! Feature sign estimation, flipping, and sign transfer between classes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{canonical_row_order, ClassId, FeatureMatrix, LabelVector, ScalingKind, SymMatrix};
use crate::error::{Error, Result};

/// How a negatively signed feature is reoriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipRule {
    /// `f ← 1 − f`, for features in `[0, 1]`.
    OneMinus,
    /// `f ← −f`, for standardized features.
    Negate,
}

impl FlipRule {
    pub fn for_scaling(kind: ScalingKind) -> Self {
        match kind {
            ScalingKind::UnitInterval => FlipRule::OneMinus,
            ScalingKind::Standardized => FlipRule::Negate,
        }
    }

    pub fn check_scaling(self, kind: ScalingKind) -> Result<()> {
        if self == Self::for_scaling(kind) {
            Ok(())
        } else {
            Err(Error::ModeMismatch(format!(
                "flip rule {self:?} cannot be used with {kind:?} scaling"
            )))
        }
    }

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            FlipRule::OneMinus => 1.0 - v,
            FlipRule::Negate => -v,
        }
    }
}

/// Class-conditional feature means from the labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SignEstimate {
    pub e_pos: Vec<f64>,
    pub e_neg: Vec<f64>,
    /// `e_pos − e_neg`.
    pub raw_sign: Vec<f64>,
}

/// Per-feature orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignVector {
    n: usize,
    flip_rule: FlipRule,
    signs: Vec<i8>,
    /// Class the signs were estimated on.
    source_class: Option<ClassId>,
}

impl SignVector {
    pub fn new(signs: Vec<i8>, flip_rule: FlipRule, source_class: Option<ClassId>) -> Result<Self> {
        if let Some(s) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::input(format!("sign entries must be +1 or -1, got {s}")));
        }
        Ok(Self {
            n: signs.len(),
            flip_rule,
            signs,
            source_class,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn flip_rule(&self) -> FlipRule {
        self.flip_rule
    }

    pub fn source_class(&self) -> Option<&str> {
        self.source_class.as_deref()
    }

    pub fn all_positive(&self) -> bool {
        self.signs.iter().all(|&s| s == 1)
    }

    /// Reorients one sample.
    pub fn flip_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n {
            return Err(Error::dim(format!(
                "sample has {} features, signs have {}",
                row.len(),
                self.n
            )));
        }
        Ok(row
            .iter()
            .zip(&self.signs)
            .map(|(&v, &s)| if s < 0 { self.flip_rule.apply(v) } else { v })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sign vector serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SignVector = serde_json::from_str(s).map_err(|e| Error::input(format!("bad sign vector: {e}")))?;
        if raw.n != raw.signs.len() {
            return Err(Error::dim(format!(
                "sign vector declares n={} but lists {} signs",
                raw.n,
                raw.signs.len()
            )));
        }
        Self::new(raw.signs, raw.flip_rule, raw.source_class)
    }
}

/// Means over positives and negatives, and the resulting orientation.
///
/// Zero raw signs orient as +1.
pub fn estimate_signs(
    f: &FeatureMatrix,
    labels: &LabelVector,
    positive_class: &str,
    flip_rule: FlipRule,
) -> Result<(SignEstimate, SignVector)> {
    let pos = labels
        .class_index(positive_class)
        .ok_or_else(|| Error::InsufficientLabels(format!("class {positive_class:?} does not occur in the labels")))?;
    let order = canonical_row_order(f, None);
    signs_in_order(f, labels, pos, flip_rule, &order)
}

/// Own signs of every class, sharing one row ordering.
pub fn estimate_all_signs(f: &FeatureMatrix, labels: &LabelVector, flip_rule: FlipRule) -> Result<Vec<SignVector>> {
    if labels.len() != f.rows() {
        return Err(Error::dim(format!("{} labels for {} samples", labels.len(), f.rows())));
    }
    let order = canonical_row_order(f, None);
    (0..labels.classes().len())
        .into_par_iter()
        .map(|c| {
            signs_in_order(f, labels, c, flip_rule, &order)
                .map(|(_, s)| s)
                .map_err(|e| e.for_class(&labels.classes()[c]))
        })
        .collect()
}

fn signs_in_order(
    f: &FeatureMatrix,
    labels: &LabelVector,
    pos: usize,
    flip_rule: FlipRule,
    order: &[usize],
) -> Result<(SignEstimate, SignVector)> {
    let flags: Vec<bool> = labels.ids().iter().map(|&id| id == pos).collect();
    let est = means_in_order(f, &flags, order)?;
    let positive_class = &labels.classes()[pos];
    let signs = est.raw_sign.iter().map(|&r| if r >= 0.0 { 1 } else { -1 }).collect();
    let sv = SignVector::new(signs, flip_rule, Some(positive_class.to_string()))?;
    Ok((est, sv))
}

/// Class means for a boolean positive mask.
pub fn estimate_from_flags(f: &FeatureMatrix, positive: &[bool]) -> Result<SignEstimate> {
    if positive.len() != f.rows() {
        return Err(Error::dim(format!(
            "{} labels for {} samples",
            positive.len(),
            f.rows()
        )));
    }
    means_in_order(f, positive, &canonical_row_order(f, None))
}

/// Rows with equal content add the same bits to whichever sum they reach, so
/// one content ordering serves every mask.
fn means_in_order(f: &FeatureMatrix, positive: &[bool], order: &[usize]) -> Result<SignEstimate> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientLabels(format!(
            "need at least one positive and one negative sample, got {n_pos} and {n_neg}"
        )));
    }
    let n = f.cols();
    let mut sp = vec![0.0; n];
    let mut sn = vec![0.0; n];
    for &i in order {
        let acc = if positive[i] { &mut sp } else { &mut sn };
        for (a, v) in acc.iter_mut().zip(f.row(i)) {
            *a += v;
        }
    }
    let e_pos: Vec<f64> = sp.iter().map(|s| s / n_pos as f64).collect();
    let e_neg: Vec<f64> = sn.iter().map(|s| s / n_neg as f64).collect();
    let raw_sign = e_pos.iter().zip(&e_neg).map(|(p, q)| p - q).collect();
    Ok(SignEstimate { e_pos, e_neg, raw_sign })
}

/// Reorients every negatively signed column.
pub fn flip(f: &FeatureMatrix, s: &SignVector) -> Result<FeatureMatrix> {
    if s.len() != f.cols() {
        return Err(Error::dim(format!(
            "matrix has {} features, signs have {}",
            f.cols(),
            s.len()
        )));
    }
    if s.flip_rule == FlipRule::OneMinus {
        let bad = f
            .as_slice()
            .iter()
            .enumerate()
            .find(|(p, v)| s.signs[p % f.cols()] < 0 && !(0.0..=1.0).contains(*v));
        if let Some((p, v)) = bad {
            return Err(Error::ModeMismatch(format!(
                "one-minus flip needs values in [0, 1], found {v} at row {}, column {}",
                p / f.cols(),
                p % f.cols()
            )));
        }
    }
    let rule = s.flip_rule;
    Ok(f.map_entries(|j, v| if s.signs[j] < 0 { rule.apply(v) } else { v }))
}

/// Fraction of coordinates where the two sign vectors agree.
pub fn sign_accuracy(estimated: &SignVector, reference: &SignVector) -> Result<f64> {
    if estimated.len() != reference.len() {
        return Err(Error::dim(format!(
            "sign vectors have lengths {} and {}",
            estimated.len(),
            reference.len()
        )));
    }
    if estimated.is_empty() {
        return Err(Error::input("sign vectors are empty"));
    }
    let agree = estimated
        .signs
        .iter()
        .zip(&reference.signs)
        .filter(|(a, b)| a == b)
        .count();
    Ok(agree as f64 / estimated.len() as f64)
}

/// Pairwise sign agreement between classes.
pub fn class_similarity(signs_by_class: &[SignVector]) -> Result<SymMatrix> {
    let c = signs_by_class.len();
    if c < 2 {
        return Err(Error::input(format!("need at least two classes, got {c}")));
    }
    let mut data = vec![0.0; c * c];
    for a in 0..c {
        data[a * c + a] = 1.0;
        for b in (a + 1)..c {
            let s = sign_accuracy(&signs_by_class[a], &signs_by_class[b])?;
            data[a * c + b] = s;
            data[b * c + a] = s;
        }
    }
    SymMatrix::from_full(c, data, 0.0)
}

/// Where a model's signs came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum SignProvenance {
    Own,
    Borrowed(ClassId),
}

/// Reuses `source` as the orientation for another class. The copy keeps the
/// class it was estimated on, so a model built from it records the borrow.
pub fn transfer_signs(source: &SignVector) -> SignVector {
    source.clone()
}

impl SignProvenance {
    /// Provenance of `signs` when used for `target_class`.
    pub fn of(signs: &SignVector, target_class: &str) -> Self {
        match signs.source_class() {
            Some(src) if src != target_class => SignProvenance::Borrowed(src.to_string()),
            _ => SignProvenance::Own,
        }
    }
}
