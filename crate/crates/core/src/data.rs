//! Domain types, manifest ingestion, identity-aware splits, balanced test
//! sets, and label histograms.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// The five biomarkers under study, in fixed order.
pub const STUDIED_BIOMARKERS: [&str; 5] = ["IRF", "DME", "IRHRF", "FAVF", "PAVF"];

/// Total biomarker flags carried per sample.
pub const NUM_BIOMARKERS: usize = 16;

/// Optional per-record clinical extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtraValue {
    Num(f64),
    Cat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub patient_id: String,
    pub eye_id: String,
    pub visit_index: u32,
    /// Letters read, 0..=100.
    pub bcva: u32,
    /// Central subfield thickness in micrometers.
    pub cst: u32,
    #[serde(default)]
    pub extras: BTreeMap<String, ExtraValue>,
}

/// 16 binary flags indexed by biomarker name; the studied subset is the
/// fixed 5-element projection named in [`STUDIED_BIOMARKERS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiomarkerVector {
    pub flags: [u8; NUM_BIOMARKERS],
}

impl BiomarkerVector {
    pub fn new(flags: [u8; NUM_BIOMARKERS]) -> Result<Self> {
        if flags.iter().any(|&f| f > 1) {
            return Err(Error::InvalidArgument("biomarker flags must be 0/1".into()));
        }
        Ok(Self { flags })
    }

    /// Index of a studied biomarker within the flag vector.
    pub fn studied_index(name: &str) -> Option<usize> {
        STUDIED_BIOMARKERS.iter().position(|&b| b == name)
    }

    /// The ordered studied-subset projection (IRF, DME, IRHRF, FAVF, PAVF).
    pub fn studied(&self) -> [u8; 5] {
        [
            self.flags[0],
            self.flags[1],
            self.flags[2],
            self.flags[3],
            self.flags[4],
        ]
    }

    pub fn get(&self, name: &str) -> Option<u8> {
        Self::studied_index(name).map(|i| self.flags[i])
    }
}

/// One scan: feature payload plus clinical record and optional biomarkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Stands in for the OCT scan; fixed dimension per dataset.
    pub payload: Vec<Real>,
    pub clinical: ClinicalRecord,
    pub biomarkers: Option<BiomarkerVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub payload_dim: usize,
    pub provenance: String,
}

impl Dataset {
    /// Validates id uniqueness, payload dimensions, and the eye->patient map.
    pub fn new(samples: Vec<Sample>, payload_dim: usize, provenance: String) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut eye_to_patient: HashMap<&str, &str> = HashMap::new();
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if s.payload.len() != payload_dim {
                return Err(Error::DimMismatch {
                    expected: payload_dim,
                    got: s.payload.len(),
                });
            }
            match eye_to_patient.entry(s.clinical.eye_id.as_str()) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(s.clinical.patient_id.as_str());
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    if *e.get() != s.clinical.patient_id.as_str() {
                        return Err(Error::EyePatientConflict {
                            eye_id: s.clinical.eye_id.clone(),
                            first: e.get().to_string(),
                            second: s.clinical.patient_id.clone(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            samples,
            payload_dim,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            payload_dim: self.payload_dim,
            provenance: self.provenance.clone(),
        }
    }
}

/// Identity used for leakage-free splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityKey {
    Eye,
    Patient,
}

impl IdentityKey {
    fn of(self, s: &Sample) -> &str {
        match self {
            IdentityKey::Eye => &s.clinical.eye_id,
            IdentityKey::Patient => &s.clinical.patient_id,
        }
    }
}

impl std::str::FromStr for IdentityKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eye" => Ok(IdentityKey::Eye),
            "patient" => Ok(IdentityKey::Patient),
            other => Err(Error::InvalidArgument(format!(
                "identity key must be `eye` or `patient`, got `{other}`"
            ))),
        }
    }
}

/// Discrete or categorical clinical label value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Num(f64),
    Cat(String),
}

impl LabelValue {
    fn sort_cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (LabelValue::Num(a), LabelValue::Num(b)) => a.total_cmp(b),
            (LabelValue::Cat(a), LabelValue::Cat(b)) => a.cmp(b),
            (LabelValue::Num(_), LabelValue::Cat(_)) => std::cmp::Ordering::Less,
            (LabelValue::Cat(_), LabelValue::Num(_)) => std::cmp::Ordering::Greater,
        }
    }
}

/// Looks up a clinical key on a sample. Known keys: `bcva`, `cst`, `eye`,
/// `patient`, `visit`, and any extras key present on the record.
pub fn clinical_value(sample: &Sample, key: &str) -> Result<LabelValue> {
    let c = &sample.clinical;
    match key {
        "bcva" => Ok(LabelValue::Num(c.bcva as f64)),
        "cst" => Ok(LabelValue::Num(c.cst as f64)),
        "eye" => Ok(LabelValue::Cat(c.eye_id.clone())),
        "patient" => Ok(LabelValue::Cat(c.patient_id.clone())),
        "visit" => Ok(LabelValue::Num(c.visit_index as f64)),
        other => match c.extras.get(other) {
            Some(ExtraValue::Num(v)) => Ok(LabelValue::Num(*v)),
            Some(ExtraValue::Cat(v)) => Ok(LabelValue::Cat(v.clone())),
            None => Err(Error::UnknownKey(other.to_string())),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub label: LabelValue,
    pub images: usize,
    pub eyes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub key: String,
    pub bins: Vec<HistogramBin>,
}

const MANIFEST_FIXED_COLUMNS: [&str; 12] = [
    "id",
    "patient_id",
    "eye_id",
    "visit_index",
    "bcva",
    "cst",
    "leakage_index",
    "drss",
    "diabetes_type",
    "diabetes_years",
    "gender",
    "payload_path",
];

/// Manifest biomarker column names: the studied five plus `b_5..b_15`.
pub fn biomarker_columns() -> Vec<String> {
    let mut cols: Vec<String> = STUDIED_BIOMARKERS
        .iter()
        .map(|b| format!("b_{b}"))
        .collect();
    for i in 5..NUM_BIOMARKERS {
        cols.push(format!("b_{i}"));
    }
    cols
}

fn parse_cell<T: std::str::FromStr>(row: usize, column: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Manifest {
        row,
        column: column.to_string(),
        message: format!("cannot parse `{raw}`"),
    })
}

/// Loads a CSV manifest into a [`Dataset`]. Payload files are resolved
/// relative to the manifest's directory and hold flat little-endian f32
/// vectors. Empty biomarker cells make the whole vector absent for that row.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Manifest {
                row: 0,
                column: name.to_string(),
                message: "missing column".into(),
            })
    };
    for c in MANIFEST_FIXED_COLUMNS {
        col(c)?;
    }
    let bio_cols = biomarker_columns();
    let bio_idx: Vec<Option<usize>> = bio_cols
        .iter()
        .map(|c| headers.iter().position(|h| h == c.as_str()))
        .collect();

    let mut samples = Vec::new();
    let mut payload_dim: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let get = |name: &str| -> Result<&str> {
            Ok(record.get(col(name)?).unwrap_or(""))
        };

        let mut extras = BTreeMap::new();
        for key in ["leakage_index", "diabetes_years"] {
            let raw = get(key)?.trim();
            if !raw.is_empty() {
                extras.insert(key.to_string(), ExtraValue::Num(parse_cell(row, key, raw)?));
            }
        }
        let drss = get("drss")?.trim();
        if !drss.is_empty() {
            extras.insert(
                "drss".into(),
                ExtraValue::Num(parse_cell::<i64>(row, "drss", drss)? as f64),
            );
        }
        for key in ["diabetes_type", "gender"] {
            let raw = get(key)?.trim();
            if !raw.is_empty() {
                extras.insert(key.to_string(), ExtraValue::Cat(raw.to_string()));
            }
        }

        let clinical = ClinicalRecord {
            patient_id: get("patient_id")?.trim().to_string(),
            eye_id: get("eye_id")?.trim().to_string(),
            visit_index: parse_cell(row, "visit_index", get("visit_index")?)?,
            bcva: parse_cell(row, "bcva", get("bcva")?)?,
            cst: parse_cell(row, "cst", get("cst")?)?,
            extras,
        };

        let mut flags = [0u8; NUM_BIOMARKERS];
        let mut any_empty = false;
        let mut any_present = false;
        for (k, idx) in bio_idx.iter().enumerate() {
            let raw = idx.and_then(|j| record.get(j)).unwrap_or("").trim();
            if raw.is_empty() {
                any_empty = true;
            } else {
                any_present = true;
                let v: u8 = parse_cell(row, &bio_cols[k], raw)?;
                if v > 1 {
                    return Err(Error::Manifest {
                        row,
                        column: bio_cols[k].clone(),
                        message: format!("biomarker flag must be 0/1, got {v}"),
                    });
                }
                flags[k] = v;
            }
        }
        let biomarkers = if any_present && !any_empty {
            Some(BiomarkerVector { flags })
        } else {
            None
        };

        let payload_path = dir.join(get("payload_path")?.trim());
        let payload = read_payload(&payload_path)?;
        match payload_dim {
            None => payload_dim = Some(payload.len()),
            Some(d) if d != payload.len() => {
                return Err(Error::Manifest {
                    row,
                    column: "payload_path".into(),
                    message: format!("payload dim {} differs from {}", payload.len(), d),
                })
            }
            _ => {}
        }

        samples.push(Sample {
            id: get("id")?.trim().to_string(),
            payload,
            clinical,
            biomarkers,
        });
    }

    Dataset::new(
        samples,
        payload_dim.unwrap_or(0),
        format!("manifest:{}", path.display()),
    )
}

/// Reads a flat little-endian f32 vector file.
pub fn read_payload(path: &Path) -> Result<Vec<Real>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "payload file {} length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as Real)
        .collect())
}

/// Writes a payload vector as flat little-endian f32.
pub fn write_payload(path: &Path, payload: &[Real]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for &v in payload {
        f.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Writes a dataset as manifest CSV plus per-sample payload files under
/// `dir/payloads/`.
pub fn write_manifest(ds: &Dataset, dir: &Path) -> Result<std::path::PathBuf> {
    let payload_dir = dir.join("payloads");
    std::fs::create_dir_all(&payload_dir)?;
    let manifest_path = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest_path)?;
    let mut header: Vec<String> = MANIFEST_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(biomarker_columns());
    w.write_record(&header)?;
    for s in &ds.samples {
        let rel = format!("payloads/{}.bin", s.id);
        write_payload(&dir.join(&rel), &s.payload)?;
        let extra_num = |k: &str| match s.clinical.extras.get(k) {
            Some(ExtraValue::Num(v)) => v.to_string(),
            _ => String::new(),
        };
        let extra_cat = |k: &str| match s.clinical.extras.get(k) {
            Some(ExtraValue::Cat(v)) => v.clone(),
            _ => String::new(),
        };
        let mut row = vec![
            s.id.clone(),
            s.clinical.patient_id.clone(),
            s.clinical.eye_id.clone(),
            s.clinical.visit_index.to_string(),
            s.clinical.bcva.to_string(),
            s.clinical.cst.to_string(),
            extra_num("leakage_index"),
            extra_num("drss"),
            extra_cat("diabetes_type"),
            extra_num("diabetes_years"),
            extra_cat("gender"),
            rel,
        ];
        match &s.biomarkers {
            Some(b) => row.extend(b.flags.iter().map(|f| f.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), NUM_BIOMARKERS)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(manifest_path)
}

/// Partitions distinct identities into train/test with no identity on both
/// sides. Deterministic given the seed.
pub fn split_by_identity(
    ds: &Dataset,
    key: IdentityKey,
    holdout_count: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut identities: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for s in &ds.samples {
        let id = key.of(s);
        if seen.insert(id) {
            identities.push(id);
        }
    }
    if holdout_count >= identities.len() && !(holdout_count == 0 && identities.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "holdout_count {} must be < {} distinct identities",
            holdout_count,
            identities.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = identities.clone();
    shuffled.shuffle(&mut rng);
    let test_ids: BTreeSet<&str> = shuffled.iter().take(holdout_count).copied().collect();

    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (i, s) in ds.samples.iter().enumerate() {
        if test_ids.contains(key.of(s)) {
            test_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Samples exactly `n_per_class` present and `n_per_class` absent images for
/// one biomarker, without replacement.
pub fn balanced_biomarker_testset(
    ds: &Dataset,
    biomarker: &str,
    n_per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    let idx = BiomarkerVector::studied_index(biomarker)
        .ok_or_else(|| Error::UnknownKey(biomarker.to_string()))?;
    let mut present = Vec::new();
    let mut absent = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        if let Some(b) = &s.biomarkers {
            if b.flags[idx] == 1 {
                present.push(i);
            } else {
                absent.push(i);
            }
        }
    }
    if present.len() < n_per_class || absent.len() < n_per_class {
        return Err(Error::InsufficientData(format!(
            "biomarker {biomarker}: need {n_per_class} per class, have {} present / {} absent",
            present.len(),
            absent.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    present.shuffle(&mut rng);
    absent.shuffle(&mut rng);
    let mut chosen: Vec<usize> = present[..n_per_class]
        .iter()
        .chain(absent[..n_per_class].iter())
        .copied()
        .collect();
    chosen.sort_unstable();
    Ok(ds.subset(&chosen))
}

/// Counts images and distinct eyes per label value of a clinical key.
pub fn label_histogram(ds: &Dataset, key: &str) -> Result<Histogram> {
    let mut groups: Vec<(LabelValue, usize, BTreeSet<String>)> = Vec::new();
    for s in &ds.samples {
        let v = clinical_value(s, key)?;
        match groups.iter_mut().find(|(l, _, _)| *l == v) {
            Some((_, count, eyes)) => {
                *count += 1;
                eyes.insert(s.clinical.eye_id.clone());
            }
            None => {
                let mut eyes = BTreeSet::new();
                eyes.insert(s.clinical.eye_id.clone());
                groups.push((v, 1, eyes));
            }
        }
    }
    groups.sort_by(|a, b| a.0.sort_cmp(&b.0));
    Ok(Histogram {
        key: key.to_string(),
        bins: groups
            .into_iter()
            .map(|(label, images, eyes)| HistogramBin {
                label,
                images,
                eyes: eyes.len(),
            })
            .collect(),
    })
}

/// Keeps `max(1, floor(fraction * N))` samples, uniform without replacement,
/// original order preserved.
pub fn subsample_fraction(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if ds.is_empty() {
        return Ok(ds.clone());
    }
    let k = ((fraction * ds.len() as f64).floor() as usize).max(1);
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut chosen: Vec<usize> = indices[..k].to_vec();
    chosen.sort_unstable();
    Ok(ds.subset(&chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(id: &str, eye: &str, patient: &str, bcva: u32, cst: u32) -> Sample {
        Sample {
            id: id.into(),
            payload: vec![0.0, 0.0],
            clinical: ClinicalRecord {
                patient_id: patient.into(),
                eye_id: eye.into(),
                visit_index: 0,
                bcva,
                cst,
                extras: BTreeMap::new(),
            },
            biomarkers: None,
        }
    }

    fn toy_dataset() -> Dataset {
        let samples = vec![
            sample("s1", "E1", "P1", 60, 300),
            sample("s2", "E1", "P1", 60, 310),
            sample("s3", "E2", "P2", 72, 400),
        ];
        Dataset::new(samples, 2, "test".into()).unwrap()
    }

    #[test]
    fn duplicate_id_rejected() {
        let samples = vec![sample("a", "E1", "P1", 1, 1), sample("a", "E2", "P2", 1, 1)];
        assert!(matches!(
            Dataset::new(samples, 2, "t".into()),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn eye_patient_conflict_rejected() {
        let samples = vec![sample("a", "E1", "P1", 1, 1), sample("b", "E1", "P2", 1, 1)];
        assert!(matches!(
            Dataset::new(samples, 2, "t".into()),
            Err(Error::EyePatientConflict { .. })
        ));
    }

    #[test]
    fn histogram_counts() {
        let h = label_histogram(&toy_dataset(), "bcva").unwrap();
        assert_eq!(h.bins.len(), 2);
        assert_eq!(h.bins[0].label, LabelValue::Num(60.0));
        assert_eq!(h.bins[0].images, 2);
        assert_eq!(h.bins[0].eyes, 1);
        assert_eq!(h.bins[1].images, 1);
        let total: usize = h.bins.iter().map(|b| b.images).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn histogram_eye_counts_brute_force() {
        // two eyes sharing bcva 60
        let samples = vec![
            sample("a", "E1", "P1", 60, 1),
            sample("b", "E2", "P2", 60, 1),
            sample("c", "E2", "P2", 60, 1),
        ];
        let ds = Dataset::new(samples, 2, "t".into()).unwrap();
        let h = label_histogram(&ds, "bcva").unwrap();
        assert_eq!(h.bins.len(), 1);
        assert_eq!(h.bins[0].images, 3);
        assert_eq!(h.bins[0].eyes, 2);
    }

    #[test]
    fn histogram_empty_and_unknown_key() {
        let empty = Dataset::new(vec![], 2, "t".into()).unwrap();
        assert!(label_histogram(&empty, "bcva").unwrap().bins.is_empty());
        assert!(matches!(
            label_histogram(&toy_dataset(), "nope"),
            Err(Error::UnknownKey(_))
        ));
    }

    #[test]
    fn split_holdout_zero_and_determinism() {
        let ds = toy_dataset();
        let (train, test) = split_by_identity(&ds, IdentityKey::Eye, 0, 7).unwrap();
        assert_eq!(train.len(), 3);
        assert!(test.is_empty());

        let (t1, h1) = split_by_identity(&ds, IdentityKey::Eye, 1, 42).unwrap();
        let (t2, h2) = split_by_identity(&ds, IdentityKey::Eye, 1, 42).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn split_no_identity_overlap() {
        let mut samples = Vec::new();
        for e in 0..96 {
            for v in 0..2 {
                samples.push(sample(&format!("s{e}_{v}"), &format!("E{e}"), &format!("P{}", e / 2), 50, 300));
            }
        }
        let ds = Dataset::new(samples, 2, "t".into()).unwrap();
        let (train, test) = split_by_identity(&ds, IdentityKey::Eye, 20, 3).unwrap();
        let train_eyes: HashSet<_> = train.samples.iter().map(|s| s.clinical.eye_id.clone()).collect();
        let test_eyes: HashSet<_> = test.samples.iter().map(|s| s.clinical.eye_id.clone()).collect();
        assert_eq!(train_eyes.len(), 76);
        assert_eq!(test_eyes.len(), 20);
        assert!(train_eyes.is_disjoint(&test_eyes));
    }

    #[test]
    fn split_holdout_too_large() {
        assert!(split_by_identity(&toy_dataset(), IdentityKey::Eye, 2, 0).is_err());
    }

    #[test]
    fn subsample_identity_and_floor() {
        let ds = toy_dataset();
        let full = subsample_fraction(&ds, 1.0, 0).unwrap();
        assert_eq!(full, ds);
        let one = subsample_fraction(&ds, 0.1, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!(subsample_fraction(&ds, 0.0, 0).is_err());
        assert!(subsample_fraction(&ds, 1.5, 0).is_err());
        let a = subsample_fraction(&ds, 0.5, 9).unwrap();
        let b = subsample_fraction(&ds, 0.5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_testset_counts_and_errors() {
        let mut samples = Vec::new();
        for i in 0..10 {
            let mut s = sample(&format!("s{i}"), &format!("E{i}"), &format!("P{i}"), 50, 300);
            let mut flags = [0u8; NUM_BIOMARKERS];
            flags[0] = (i < 4) as u8;
            s.biomarkers = Some(BiomarkerVector { flags });
            samples.push(s);
        }
        let ds = Dataset::new(samples, 2, "t".into()).unwrap();
        let bal = balanced_biomarker_testset(&ds, "IRF", 3, 1).unwrap();
        assert_eq!(bal.len(), 6);
        let present = bal
            .samples
            .iter()
            .filter(|s| s.biomarkers.unwrap().flags[0] == 1)
            .count();
        assert_eq!(present, 3);
        // no duplicates, subset of input
        let ids: HashSet<_> = bal.samples.iter().map(|s| s.id.clone()).collect();
        assert_eq!(ids.len(), 6);
        assert!(balanced_biomarker_testset(&ds, "IRF", 5, 1).is_err());
        assert!(balanced_biomarker_testset(&ds, "DME", 1, 1).is_err()); // zero present
    }
}
