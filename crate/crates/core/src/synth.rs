//! Synthetic cohort generator: clinical values and biomarkers correlated
//! through a latent per-eye disease-severity variable, with a tunable
//! granularity knob per biomarker.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    BiomarkerVector, ClinicalRecord, Dataset, Sample, NUM_BIOMARKERS,
};
use crate::error::{Error, Result};
use crate::pairs::sample_gaussian;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Broad footprint: effect spans >= 25% of payload dims.
    Low,
    /// Localized footprint: effect spans <= 5% of payload dims.
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerSpec {
    pub name: String,
    /// Severity threshold theta in (0,1); biomarker present iff s > theta.
    pub threshold: Real,
    /// Label corruption probability in [0, 0.5).
    #[serde(default)]
    pub flip_prob: Real,
    pub granularity: Granularity,
    pub effect_dims: usize,
    pub effect_magnitude: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub n_eyes: usize,
    pub visits_per_eye: usize,
    pub payload_dim: usize,
    /// Per-visit perturbation of the eye's base severity.
    #[serde(default)]
    pub severity_noise: Real,
    #[serde(default)]
    pub bcva_sigma: Real,
    #[serde(default)]
    pub cst_sigma: Real,
    pub biomarker_specs: Vec<BiomarkerSpec>,
    pub seed: u64,
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_eyes == 0 || self.visits_per_eye == 0 || self.payload_dim == 0 {
            return Err(Error::InvalidArgument(
                "n_eyes, visits_per_eye, payload_dim must all be > 0".into(),
            ));
        }
        if self.severity_noise < 0.0 || self.bcva_sigma < 0.0 || self.cst_sigma < 0.0 {
            return Err(Error::InvalidArgument("noise sigmas must be >= 0".into()));
        }
        for spec in &self.biomarker_specs {
            if BiomarkerVector::studied_index(&spec.name).is_none() {
                return Err(Error::UnknownKey(spec.name.clone()));
            }
            if !(spec.threshold > 0.0 && spec.threshold < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "biomarker {} threshold must be in (0,1)",
                    spec.name
                )));
            }
            if !(spec.flip_prob >= 0.0 && spec.flip_prob < 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "biomarker {} flip_prob must be in [0, 0.5)",
                    spec.name
                )));
            }
            if spec.effect_dims > self.payload_dim {
                return Err(Error::InvalidArgument(format!(
                    "biomarker {} effect_dims exceeds payload_dim",
                    spec.name
                )));
            }
            let frac = spec.effect_dims as Real / self.payload_dim as Real;
            match spec.granularity {
                Granularity::Low if frac < 0.25 => {
                    return Err(Error::InvalidArgument(format!(
                        "low-granularity biomarker {} needs effect_dims >= 25% of payload_dim",
                        spec.name
                    )))
                }
                Granularity::High if frac > 0.05 => {
                    return Err(Error::InvalidArgument(format!(
                        "high-granularity biomarker {} needs effect_dims <= 5% of payload_dim",
                        spec.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Generation record kept alongside the dataset: severity trajectories and
/// effect-dimension index sets. Test oracle for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: CohortConfig,
    /// severity[eye][visit]
    pub severity: Vec<Vec<Real>>,
    /// biomarker name -> payload dims its effect touches
    pub effect_dims: BTreeMap<String, Vec<usize>>,
    pub provenance: String,
}

fn clip(v: Real, lo: Real, hi: Real) -> Real {
    v.max(lo).min(hi)
}

/// Generates a cohort. Per eye a base severity in [0,1] is drawn, then
/// perturbed per visit. Clinical values follow
/// `bcva = round(clip(100 (1-s) + N(0, bcva_sigma), 0, 100))` and
/// `cst = round(clip(250 + 400 s + N(0, cst_sigma), 150, 900))`; a
/// biomarker is present iff `s > theta`, then flipped with `flip_prob`.
/// Payload is a unit-Gaussian baseline plus each present biomarker's
/// magnitude on its effect dims. Deterministic given the seed.
pub fn generate_cohort(cfg: &CohortConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let provenance = format!(
        "synth:seed={}:eyes={}:visits={}:dim={}",
        cfg.seed, cfg.n_eyes, cfg.visits_per_eye, cfg.payload_dim
    );

    let mut effect_dims = BTreeMap::new();
    for spec in &cfg.biomarker_specs {
        let mut dims: Vec<usize> = (0..cfg.payload_dim).collect();
        dims.shuffle(&mut rng);
        let mut chosen = dims[..spec.effect_dims].to_vec();
        chosen.sort_unstable();
        effect_dims.insert(spec.name.clone(), chosen);
    }

    let mut samples = Vec::with_capacity(cfg.n_eyes * cfg.visits_per_eye);
    let mut severity = Vec::with_capacity(cfg.n_eyes);
    for eye in 0..cfg.n_eyes {
        let base: Real = rng.gen();
        let mut per_visit = Vec::with_capacity(cfg.visits_per_eye);
        for visit in 0..cfg.visits_per_eye {
            let s = if cfg.severity_noise > 0.0 {
                clip(base + sample_gaussian(&mut rng) * cfg.severity_noise, 0.0, 1.0)
            } else {
                base
            };
            per_visit.push(s);

            let bcva_noise = if cfg.bcva_sigma > 0.0 {
                sample_gaussian(&mut rng) * cfg.bcva_sigma
            } else {
                0.0
            };
            let cst_noise = if cfg.cst_sigma > 0.0 {
                sample_gaussian(&mut rng) * cfg.cst_sigma
            } else {
                0.0
            };
            let bcva = clip(100.0 * (1.0 - s) + bcva_noise, 0.0, 100.0).round() as u32;
            let cst = clip(250.0 + 400.0 * s + cst_noise, 150.0, 900.0).round() as u32;

            let mut flags = [0u8; NUM_BIOMARKERS];
            let mut payload: Vec<Real> = (0..cfg.payload_dim)
                .map(|_| sample_gaussian(&mut rng))
                .collect();
            for spec in &cfg.biomarker_specs {
                let mut present = s > spec.threshold;
                if spec.flip_prob > 0.0 && rng.gen::<Real>() < spec.flip_prob {
                    present = !present;
                }
                if present {
                    let idx = BiomarkerVector::studied_index(&spec.name).unwrap();
                    flags[idx] = 1;
                    for &d in &effect_dims[&spec.name] {
                        payload[d] += spec.effect_magnitude;
                    }
                }
            }

            samples.push(Sample {
                id: format!("E{eye:04}_V{visit:02}"),
                payload,
                clinical: ClinicalRecord {
                    patient_id: format!("P{:04}", eye / 2),
                    eye_id: format!("E{eye:04}"),
                    visit_index: visit as u32,
                    bcva,
                    cst,
                    extras: BTreeMap::new(),
                },
                biomarkers: Some(BiomarkerVector { flags }),
            });
        }
        severity.push(per_visit);
    }

    let ds = Dataset::new(samples, cfg.payload_dim, provenance.clone())?;
    let gt = GroundTruth {
        config: cfg.clone(),
        severity,
        effect_dims,
        provenance,
    };
    Ok((ds, gt))
}

/// Drops biomarker labels from every sample, mirroring a clinical-only pool.
pub fn strip_biomarkers(ds: &Dataset) -> Dataset {
    Dataset {
        samples: ds
            .samples
            .iter()
            .map(|s| Sample {
                biomarkers: None,
                ..s.clone()
            })
            .collect(),
        payload_dim: ds.payload_dim,
        provenance: ds.provenance.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerGroupStats {
    pub name: String,
    pub n_present: usize,
    pub n_absent: usize,
    pub mean_cst_present: Real,
    pub mean_cst_absent: Real,
    pub mean_bcva_present: Real,
    pub mean_bcva_absent: Real,
    /// Set when flip_prob = 0 and the CST group means fail to separate.
    pub separability_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub biomarkers: Vec<BiomarkerGroupStats>,
    pub violations: usize,
}

/// Verifies a dataset against its generation record: provenance and sample
/// order must match; reports empirical biomarker/clinical group means and
/// flags separability violations for noiseless biomarkers.
pub fn ground_truth_check(ds: &Dataset, gt: &GroundTruth) -> Result<CohortReport> {
    if ds.provenance != gt.provenance {
        return Err(Error::Provenance(format!(
            "dataset provenance `{}` does not match ground truth `{}`",
            ds.provenance, gt.provenance
        )));
    }
    let cfg = &gt.config;
    if ds.len() != cfg.n_eyes * cfg.visits_per_eye {
        return Err(Error::Provenance(format!(
            "dataset size {} does not match {} eyes x {} visits",
            ds.len(),
            cfg.n_eyes,
            cfg.visits_per_eye
        )));
    }
    for (i, s) in ds.samples.iter().enumerate() {
        let (eye, visit) = (i / cfg.visits_per_eye, i % cfg.visits_per_eye);
        let expected = format!("E{eye:04}_V{visit:02}");
        if s.id != expected {
            return Err(Error::Provenance(format!(
                "sample {i} id `{}` does not match expected `{expected}`",
                s.id
            )));
        }
    }

    let mut stats = Vec::new();
    let mut violations = 0;
    for spec in &cfg.biomarker_specs {
        let idx = BiomarkerVector::studied_index(&spec.name).unwrap();
        let (mut cst_p, mut cst_a, mut bcva_p, mut bcva_a) = (0.0, 0.0, 0.0, 0.0);
        let (mut n_p, mut n_a) = (0usize, 0usize);
        for s in &ds.samples {
            let present = s.biomarkers.map(|b| b.flags[idx] == 1).unwrap_or(false);
            if present {
                n_p += 1;
                cst_p += s.clinical.cst as Real;
                bcva_p += s.clinical.bcva as Real;
            } else {
                n_a += 1;
                cst_a += s.clinical.cst as Real;
                bcva_a += s.clinical.bcva as Real;
            }
        }
        let mean = |sum: Real, n: usize| if n > 0 { sum / n as Real } else { Real::NAN };
        let mean_cst_present = mean(cst_p, n_p);
        let mean_cst_absent = mean(cst_a, n_a);
        let violation = spec.flip_prob == 0.0
            && n_p > 0
            && n_a > 0
            && mean_cst_present <= mean_cst_absent;
        if violation {
            violations += 1;
        }
        stats.push(BiomarkerGroupStats {
            name: spec.name.clone(),
            n_present: n_p,
            n_absent: n_a,
            mean_cst_present,
            mean_cst_absent,
            mean_bcva_present: mean(bcva_p, n_p),
            mean_bcva_absent: mean(bcva_a, n_a),
            separability_violation: violation,
        });
    }
    Ok(CohortReport {
        biomarkers: stats,
        violations,
    })
}
