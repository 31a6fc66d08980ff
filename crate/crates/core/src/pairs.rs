//! Two-view batch construction and positive-pair masks derived from
//! clinical labels.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{clinical_value, LabelValue, Sample};
use crate::error::{Error, Result};
use crate::Real;

/// Discrete label used for equality-based positive selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscreteLabel {
    /// Bin index `floor(value / bin_width)`.
    Bin(i64),
    Cat(String),
}

/// Quantizes a continuous clinical value to the lower edge of its bin:
/// `floor(value / bin_width) * bin_width`.
pub fn quantize_label(value: Real, bin_width: Real) -> Result<Real> {
    if bin_width.is_nan() || bin_width <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bin_width must be > 0, got {bin_width}"
        )));
    }
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite label value {value}")));
    }
    Ok((value / bin_width).floor() * bin_width)
}

fn discretize(value: &LabelValue, bin_width: Real) -> Result<DiscreteLabel> {
    match value {
        LabelValue::Num(v) => {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite label value {v}")));
            }
            Ok(DiscreteLabel::Bin((v / bin_width).floor() as i64))
        }
        LabelValue::Cat(s) => Ok(DiscreteLabel::Cat(s.clone())),
    }
}

/// Per-key bin widths; defaults match exact-value labels (bcva 1 letter,
/// cst 1 micrometer).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[derive(Default)]
pub struct BinWidths(pub BTreeMap<String, Real>);


impl BinWidths {
    pub fn width(&self, key: &str) -> Real {
        self.0.get(key).copied().unwrap_or(1.0)
    }
}

/// Square boolean positive/valid masks over a batch of embeddings.
///
/// `valid[i][j]` is the A(i) membership (all pairs except the diagonal);
/// `positives[i][j]` is the C(i) membership (equal labels, i != j).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMask {
    n: usize,
    positives: Vec<bool>,
    valid: Vec<bool>,
}

impl PairMask {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn positive(&self, i: usize, j: usize) -> bool {
        self.positives[i * self.n + j]
    }

    pub fn valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.n + j]
    }

    /// Indices in C(i).
    pub fn positives_of(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.positive(i, j)).collect()
    }

    pub fn positive_count(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.positive(i, j)).count()
    }

    /// Checks the structural invariants: zero diagonal, positives within
    /// valid, symmetry of positives.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.positive(i, i) || self.valid(i, i) {
                return Err(Error::InvalidArgument("mask diagonal must be false".into()));
            }
            for j in 0..self.n {
                if i != j && !self.valid(i, j) {
                    return Err(Error::InvalidArgument("valid mask must be all off-diagonal".into()));
                }
                if self.positive(i, j) && !self.valid(i, j) {
                    return Err(Error::InvalidArgument("positives must be within valid".into()));
                }
                if self.positive(i, j) != self.positive(j, i) {
                    return Err(Error::InvalidArgument("positives must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Packs the positive mask row-major into bytes (8 cells per byte,
    /// MSB first). Fixture format.
    pub fn positive_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; (self.n * self.n).div_ceil(8)];
        for (k, &p) in self.positives.iter().enumerate() {
            if p {
                out[k / 8] |= 0x80 >> (k % 8);
            }
        }
        out
    }

    pub fn from_positive_bits(n: usize, bits: &[u8]) -> Result<PairMask> {
        if bits.len() != (n * n).div_ceil(8) {
            return Err(Error::DimMismatch {
                expected: (n * n).div_ceil(8),
                got: bits.len(),
            });
        }
        let positives: Vec<bool> = (0..n * n)
            .map(|k| bits[k / 8] & (0x80 >> (k % 8)) != 0)
            .collect();
        let valid = (0..n * n).map(|k| k / n != k % n).collect();
        let mask = PairMask { n, positives, valid };
        mask.validate()?;
        Ok(mask)
    }
}

/// Builds C(i)/A(i) masks from discrete labels:
/// `positives[i][j] = (labels[i] == labels[j] && i != j)`.
pub fn positive_mask(labels: &[DiscreteLabel]) -> PairMask {
    let n = labels.len();
    let mut positives = vec![false; n * n];
    let mut valid = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                valid[i * n + j] = true;
                positives[i * n + j] = labels[i] == labels[j];
            }
        }
    }
    PairMask { n, positives, valid }
}

/// Stochastic augmentation for vector payloads: additive Gaussian noise
/// plus random coordinate dropout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Augmenter {
    pub noise_sigma: Real,
    pub dropout_rate: Real,
}

impl Default for Augmenter {
    fn default() -> Self {
        Augmenter {
            noise_sigma: 0.1,
            dropout_rate: 0.1,
        }
    }
}

impl Augmenter {
    pub fn identity() -> Self {
        Augmenter {
            noise_sigma: 0.0,
            dropout_rate: 0.0,
        }
    }

    pub fn apply(&self, payload: &[Real], rng: &mut ChaCha8Rng) -> Vec<Real> {
        payload
            .iter()
            .map(|&x| {
                let dropped = self.dropout_rate > 0.0 && rng.gen::<Real>() < self.dropout_rate;
                let noise = if self.noise_sigma > 0.0 {
                    sample_gaussian(rng) * self.noise_sigma
                } else {
                    0.0
                };
                if dropped {
                    0.0
                } else {
                    x + noise
                }
            })
            .collect()
    }
}

/// Box-Muller standard normal draw.
pub(crate) fn sample_gaussian(rng: &mut ChaCha8Rng) -> Real {
    let u1: Real = rng.gen_range(Real::MIN_POSITIVE..1.0);
    let u2: Real = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A batch of N samples duplicated through two independent augmentation
/// draws, laid out as `[all view1; all view2]` so `twin(i) = i +/- N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewBatch {
    pub views: Vec<Vec<Real>>,
    pub twin_index: Vec<usize>,
    /// Per clinical key, 2N discrete labels (duplicated to twins).
    pub labels: BTreeMap<String, Vec<DiscreteLabel>>,
    /// Studied-subset biomarker targets when every sample carries them.
    pub targets: Option<Vec<[u8; 5]>>,
}

impl TwoViewBatch {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn mask_for(&self, key: &str) -> Result<PairMask> {
        let labels = self
            .labels
            .get(key)
            .ok_or_else(|| Error::UnknownKey(key.to_string()))?;
        Ok(positive_mask(labels))
    }
}

pub fn build_two_view_batch(
    samples: &[Sample],
    augmenter: &Augmenter,
    keys: &[String],
    bin_widths: &BinWidths,
    seed: u64,
) -> Result<TwoViewBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_two_view_batch_with_rng(samples, augmenter, keys, bin_widths, &mut rng)
}

pub(crate) fn build_two_view_batch_with_rng(
    samples: &[Sample],
    augmenter: &Augmenter,
    keys: &[String],
    bin_widths: &BinWidths,
    rng: &mut ChaCha8Rng,
) -> Result<TwoViewBatch> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "two-view batch needs N >= 2 samples, got {n}"
        )));
    }
    let mut views = Vec::with_capacity(2 * n);
    for s in samples {
        views.push(augmenter.apply(&s.payload, rng));
    }
    for s in samples {
        views.push(augmenter.apply(&s.payload, rng));
    }
    let twin_index: Vec<usize> = (0..2 * n).map(|i| (i + n) % (2 * n)).collect();

    let mut labels = BTreeMap::new();
    for key in keys {
        let width = bin_widths.width(key);
        let mut per_sample = Vec::with_capacity(n);
        for s in samples {
            per_sample.push(discretize(&clinical_value(s, key)?, width)?);
        }
        let mut duplicated = per_sample.clone();
        duplicated.extend(per_sample);
        labels.insert(key.clone(), duplicated);
    }

    let targets = if samples.iter().all(|s| s.biomarkers.is_some()) {
        let per: Vec<[u8; 5]> = samples
            .iter()
            .map(|s| s.biomarkers.as_ref().unwrap().studied())
            .collect();
        let mut duplicated = per.clone();
        duplicated.extend(per);
        Some(duplicated)
    } else {
        None
    };

    // keep the rng stream position independent of key count
    let _ = rng.next_u32();

    Ok(TwoViewBatch {
        views,
        twin_index,
        labels,
        targets,
    })
}
