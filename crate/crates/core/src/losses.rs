//! Forward and analytic-gradient evaluation of the training objectives:
//! InfoNCE, clinical supervised contrastive, weighted combinations,
//! cross-entropy, multi-label BCE, and distillation.
//!
//! All kernels are generic over the scalar type. Gradients are returned
//! with respect to the (unit-norm) embeddings or logits that the kernel
//! consumes; normalization is a separate differentiable op so the encoder
//! boundary stays explicit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::PairMask;
use crate::scalar::Scalar;
use crate::Real;

const NORM_EPSILON: f64 = 1e-12;

/// Default temperature used across all experiments.
pub const DEFAULT_TAU: Real = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Ordered list of (clinical key, weight) terms defining a combined
/// contrastive objective. The single term `self` selects augmentation-only
/// InfoNCE instead of a clinical loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub terms: Vec<(String, Real)>,
    #[serde(default = "default_tau")]
    pub temperature: Real,
    #[serde(default)]
    pub reduction: Reduction,
}

fn default_tau() -> Real {
    DEFAULT_TAU
}

impl LossSpec {
    pub fn new(terms: Vec<(String, Real)>) -> Result<Self> {
        let spec = LossSpec {
            terms,
            temperature: DEFAULT_TAU,
            reduction: Reduction::Mean,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn self_supervised() -> Self {
        LossSpec {
            terms: vec![("self".into(), 1.0)],
            temperature: DEFAULT_TAU,
            reduction: Reduction::Mean,
        }
    }

    pub fn is_self_supervised(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0 == "self"
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument("loss spec needs at least one term".into()));
        }
        for (key, w) in &self.terms {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "loss term `{key}` weight must be finite and positive, got {w}"
                )));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Parses the CLI grammar: lowercase keys joined by `+`, optional
    /// `:weight` suffix, e.g. `bcva:1+cst:1` or `self`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in text.split('+') {
            let part = part.trim();
            if part.is_empty() {
                return Err(Error::InvalidArgument(format!("empty loss term in `{text}`")));
            }
            let (key, weight) = match part.split_once(':') {
                Some((k, w)) => {
                    let w: Real = w.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad weight `{w}` in loss spec `{text}`"))
                    })?;
                    (k.to_string(), w)
                }
                None => (part.to_string(), 1.0),
            };
            terms.push((key, weight));
        }
        LossSpec::new(terms)
    }
}

impl std::fmt::Display for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, w)| if *w == 1.0 { k.clone() } else { format!("{k}:{w}") })
            .collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// Loss value, gradient with respect to the kernel's inputs, and the
/// number of anchors that contributed to the reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<F> {
    pub value: F,
    pub grad: Vec<Vec<F>>,
    pub contributing_anchors: usize,
}

/// Row-normalized embeddings together with the data needed to pull
/// gradients back through the normalization.
#[derive(Debug, Clone)]
pub struct NormalizedEmbeddings<F> {
    pub unit: Vec<Vec<F>>,
    norms: Vec<F>,
}

impl<F: Scalar> NormalizedEmbeddings<F> {
    /// Backward transform: for z = x/|x|, maps dL/dz to dL/dx via
    /// (g - (g . z) z) / |x|.
    pub fn backward(&self, grad_unit: &[Vec<F>]) -> Vec<Vec<F>> {
        grad_unit
            .iter()
            .zip(self.unit.iter())
            .zip(self.norms.iter())
            .map(|((g, z), &norm)| {
                let dot = dot(g, z);
                g.iter()
                    .zip(z.iter())
                    .map(|(&gi, &zi)| (gi - dot * zi) / norm)
                    .collect()
            })
            .collect()
    }
}

/// Normalizes each row to unit length. Errors on rows with norm below
/// 1e-12.
pub fn normalize<F: Scalar>(embeddings: &[Vec<F>]) -> Result<NormalizedEmbeddings<F>> {
    let eps = F::from_f64_lossy(NORM_EPSILON);
    let mut unit = Vec::with_capacity(embeddings.len());
    let mut norms = Vec::with_capacity(embeddings.len());
    for (i, row) in embeddings.iter().enumerate() {
        let norm = dot(row, row).sqrt();
        if norm <= eps {
            return Err(Error::Numeric(format!("embedding row {i} has norm <= {NORM_EPSILON}")));
        }
        unit.push(row.iter().map(|&v| v / norm).collect());
        norms.push(norm);
    }
    Ok(NormalizedEmbeddings { unit, norms })
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

fn check_tau<F: Scalar>(tau: F) -> Result<()> {
    if !(tau.is_finite() && tau > F::zero()) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

fn similarity_matrix<F: Scalar>(z: &[Vec<F>]) -> Vec<Vec<F>> {
    let n = z.len();
    let mut sims = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            sims[i][j] = dot(&z[i], &z[j]);
        }
    }
    sims
}

/// Max-subtracted softmax over A(i) = all j != i. Returns (probabilities,
/// shifted log-sum-exp, max logit).
fn softmax_over_others<F: Scalar>(logits: &[F], anchor: usize) -> (Vec<F>, F, F) {
    let n = logits.len();
    let mut max = F::neg_infinity();
    for (j, &l) in logits.iter().enumerate() {
        if j != anchor && l > max {
            max = l;
        }
    }
    let mut probs = vec![F::zero(); n];
    let mut sum = F::zero();
    for (j, &l) in logits.iter().enumerate() {
        if j != anchor {
            let e = (l - max).exp();
            probs[j] = e;
            sum = sum + e;
        }
    }
    for p in probs.iter_mut() {
        *p = *p / sum;
    }
    (probs, sum.ln(), max)
}

/// Self-supervised InfoNCE: per anchor i,
/// `-log( exp(z_i . z_twin / tau) / sum_{a != i} exp(z_i . z_a / tau) )`.
pub fn info_nce<F: Scalar>(
    z: &[Vec<F>],
    twin_index: &[usize],
    tau: F,
    reduction: Reduction,
) -> Result<LossResult<F>> {
    check_tau(tau)?;
    let n = z.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("info_nce needs 2N >= 4, got {n}")));
    }
    if twin_index.len() != n {
        return Err(Error::DimMismatch { expected: n, got: twin_index.len() });
    }
    let d = z[0].len();
    let sims = similarity_matrix(z);
    let scale = match reduction {
        Reduction::Mean => F::one() / F::from_usize_lossy(n),
        Reduction::Sum => F::one(),
    };

    let mut value = F::zero();
    let mut grad = vec![vec![F::zero(); d]; n];
    for i in 0..n {
        let twin = twin_index[i];
        let logits: Vec<F> = sims[i].iter().map(|&s| s / tau).collect();
        let (probs, lse_shifted, max) = softmax_over_others(&logits, i);
        value = value + scale * (lse_shifted - (logits[twin] - max));

        let coef = scale / tau;
        for a in 0..n {
            if a == i {
                continue;
            }
            let p = probs[a];
            for k in 0..d {
                grad[i][k] = grad[i][k] + coef * p * z[a][k];
                grad[a][k] = grad[a][k] + coef * p * z[i][k];
            }
        }
        for k in 0..d {
            grad[i][k] = grad[i][k] - coef * z[twin][k];
            grad[twin][k] = grad[twin][k] - coef * z[i][k];
        }
    }
    Ok(LossResult { value, grad, contributing_anchors: n })
}

/// Clinical supervised contrastive loss: per anchor i with |C(i)| > 0,
/// `(-1/|C(i)|) * sum_{c in C(i)} log( exp(z_i . z_c / tau) /
/// sum_{a in A(i)} exp(z_i . z_a / tau) )`.
/// Anchors without positives contribute 0 and are excluded from the mean.
pub fn clinical_supcon<F: Scalar>(
    z: &[Vec<F>],
    mask: &PairMask,
    tau: F,
    reduction: Reduction,
) -> Result<LossResult<F>> {
    check_tau(tau)?;
    let n = z.len();
    if mask.len() != n {
        return Err(Error::DimMismatch { expected: n, got: mask.len() });
    }
    let d = if n == 0 { 0 } else { z[0].len() };
    let sims = similarity_matrix(z);
    let contributing = (0..n).filter(|&i| mask.positive_count(i) > 0).count();
    let scale = match reduction {
        Reduction::Mean => {
            if contributing == 0 {
                F::zero()
            } else {
                F::one() / F::from_usize_lossy(contributing)
            }
        }
        Reduction::Sum => F::one(),
    };

    let mut value = F::zero();
    let mut grad = vec![vec![F::zero(); d]; n];
    for i in 0..n {
        let n_pos = mask.positive_count(i);
        if n_pos == 0 {
            continue;
        }
        let inv_pos = F::one() / F::from_usize_lossy(n_pos);
        let logits: Vec<F> = sims[i].iter().map(|&s| s / tau).collect();
        let (probs, lse_shifted, max) = softmax_over_others(&logits, i);

        let mut pos_logit_mean = F::zero();
        for (c, &l) in logits.iter().enumerate() {
            if mask.positive(i, c) {
                pos_logit_mean = pos_logit_mean + inv_pos * (l - max);
            }
        }
        value = value + scale * (lse_shifted - pos_logit_mean);

        let coef = scale / tau;
        for a in 0..n {
            if a == i {
                continue;
            }
            let p = probs[a];
            for k in 0..d {
                grad[i][k] = grad[i][k] + coef * p * z[a][k];
                grad[a][k] = grad[a][k] + coef * p * z[i][k];
            }
            if mask.positive(i, a) {
                for k in 0..d {
                    grad[i][k] = grad[i][k] - coef * inv_pos * z[a][k];
                    grad[a][k] = grad[a][k] - coef * inv_pos * z[i][k];
                }
            }
        }
    }
    Ok(LossResult { value, grad, contributing_anchors: contributing })
}

/// Weighted sum of clinical supervised contrastive losses over several
/// masks: `sum_k weight_k * L_clinical(z, mask_k, tau)`. Gradients add
/// linearly. `contributing_anchors` reports the maximum over terms.
pub fn combined_clinical<F: Scalar>(
    z: &[Vec<F>],
    masks: &[(&PairMask, F)],
    tau: F,
    reduction: Reduction,
) -> Result<LossResult<F>> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("combined loss needs at least one mask".into()));
    }
    let n = z.len();
    let d = if n == 0 { 0 } else { z[0].len() };
    let mut value = F::zero();
    let mut grad = vec![vec![F::zero(); d]; n];
    let mut contributing = 0;
    for &(mask, weight) in masks {
        let term = clinical_supcon(z, mask, tau, reduction)?;
        value = value + weight * term.value;
        for (gi, ti) in grad.iter_mut().zip(term.grad.iter()) {
            for (g, &t) in gi.iter_mut().zip(ti.iter()) {
                *g = *g + weight * t;
            }
        }
        contributing = contributing.max(term.contributing_anchors);
    }
    Ok(LossResult { value, grad, contributing_anchors: contributing })
}

/// Mean negative log softmax probability of the true class; gradient with
/// respect to the logits.
pub fn cross_entropy<F: Scalar>(logits: &[Vec<F>], labels: &[usize]) -> Result<LossResult<F>> {
    let n = logits.len();
    if labels.len() != n {
        return Err(Error::DimMismatch { expected: n, got: labels.len() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cross_entropy on empty batch".into()));
    }
    let k = logits[0].len();
    let inv_n = F::one() / F::from_usize_lossy(n);
    let mut value = F::zero();
    let mut grad = vec![vec![F::zero(); k]; n];
    for i in 0..n {
        let y = labels[i];
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {k} classes (row {i})"
            )));
        }
        let max = logits[i].iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for &x in &logits[i] {
            sum = sum + (x - max).exp();
        }
        value = value + inv_n * (sum.ln() - (logits[i][y] - max));
        for j in 0..k {
            let p = (logits[i][j] - max).exp() / sum;
            grad[i][j] = inv_n * (p - if j == y { F::one() } else { F::zero() });
        }
    }
    Ok(LossResult { value, grad, contributing_anchors: n })
}

/// Mean per-element binary cross-entropy over an N x K logit matrix with
/// binary targets.
pub fn bce_multilabel<F: Scalar>(logits: &[Vec<F>], targets: &[Vec<u8>]) -> Result<LossResult<F>> {
    let n = logits.len();
    if targets.len() != n {
        return Err(Error::DimMismatch { expected: n, got: targets.len() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("bce_multilabel on empty batch".into()));
    }
    let k = logits[0].len();
    let inv = F::one() / F::from_usize_lossy(n * k);
    let mut value = F::zero();
    let mut grad = vec![vec![F::zero(); k]; n];
    for i in 0..n {
        if targets[i].len() != k {
            return Err(Error::DimMismatch { expected: k, got: targets[i].len() });
        }
        for j in 0..k {
            let t_raw = targets[i][j];
            if t_raw > 1 {
                return Err(Error::InvalidArgument(format!(
                    "target must be binary, got {t_raw} at ({i},{j})"
                )));
            }
            let t = F::from_usize_lossy(t_raw as usize);
            let x = logits[i][j];
            // stable: max(x,0) - x*t + ln(1 + exp(-|x|))
            let loss = x.max(F::zero()) - x * t + (F::one() + (-x.abs()).exp()).ln();
            value = value + inv * loss;
            let sig = F::one() / (F::one() + (-x).exp());
            grad[i][j] = inv * (sig - t);
        }
    }
    Ok(LossResult { value, grad, contributing_anchors: n })
}

/// Soft-label distillation: mean over anchors of the cross-entropy from
/// the teacher's temperature-softened distribution to the student's.
/// Gradient is with respect to the student logits only.
pub fn distillation_loss<F: Scalar>(
    student_logits: &[Vec<F>],
    teacher_logits: &[Vec<F>],
    temperature: F,
) -> Result<LossResult<F>> {
    check_tau(temperature)?;
    let n = student_logits.len();
    if teacher_logits.len() != n {
        return Err(Error::DimMismatch { expected: n, got: teacher_logits.len() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("distillation on empty batch".into()));
    }
    let k = student_logits[0].len();
    let inv_n = F::one() / F::from_usize_lossy(n);
    let mut value = F::zero();
    let mut grad = vec![vec![F::zero(); k]; n];
    for i in 0..n {
        if teacher_logits[i].len() != k {
            return Err(Error::DimMismatch { expected: k, got: teacher_logits[i].len() });
        }
        let soft = |row: &[F]| -> (Vec<F>, F, F) {
            let scaled: Vec<F> = row.iter().map(|&x| x / temperature).collect();
            let max = scaled.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            let exps: Vec<F> = scaled.iter().map(|&x| (x - max).exp()).collect();
            for &e in &exps {
                sum = sum + e;
            }
            (exps.iter().map(|&e| e / sum).collect(), sum.ln(), max)
        };
        let (q, _, _) = soft(&teacher_logits[i]);
        let (p, lse_shifted, max_s) = soft(&student_logits[i]);
        let mut expected_logit = F::zero();
        for j in 0..k {
            expected_logit = expected_logit + q[j] * (student_logits[i][j] / temperature - max_s);
        }
        value = value + inv_n * (lse_shifted - expected_logit);
        for j in 0..k {
            grad[i][j] = inv_n / temperature * (p[j] - q[j]);
        }
    }
    Ok(LossResult { value, grad, contributing_anchors: n })
}

/// Central finite-difference gradient check. `f` returns the loss value
/// and its analytic gradient flattened over all input coordinates.
/// Returns the maximum relative error between analytic and numeric
/// gradients.
pub fn grad_check<LF>(f: LF, x: &[f64], h: f64) -> f64
where
    LF: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(x);
    assert_eq!(analytic.len(), x.len(), "gradient length mismatch");
    let mut max_err = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let (fp, _) = f(&probe);
        probe[i] = x[i] - h;
        let (fm, _) = f(&probe);
        probe[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs());
        let err = if denom > 1e-6 {
            (analytic[i] - numeric).abs() / denom
        } else {
            (analytic[i] - numeric).abs()
        };
        if err > max_err {
            max_err = err;
        }
    }
    max_err
}

/// Flattens a row-major matrix gradient.
pub fn flatten<F: Scalar>(rows: &[Vec<F>]) -> Vec<F> {
    rows.iter().flat_map(|r| r.iter().copied()).collect()
}

/// Rebuilds rows of width `d` from a flat slice.
pub fn unflatten<F: Scalar>(flat: &[F], d: usize) -> Vec<Vec<F>> {
    flat.chunks(d).map(|c| c.to_vec()).collect()
}
