//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clincon_core::data::{
    balanced_biomarker_testset, split_by_identity, subsample_fraction, Dataset, IdentityKey,
};
use clincon_core::losses::{
    bce_multilabel, clinical_supcon, combined_clinical, cross_entropy, distillation_loss, flatten,
    grad_check, info_nce, normalize, unflatten, LossSpec, Reduction,
};
use clincon_core::metrics::{auroc, spearman};
use clincon_core::mlp::Mlp;
use clincon_core::pairs::{positive_mask, Augmenter, BinWidths, DiscreteLabel, PairMask};
use clincon_core::synth::{generate_cohort, strip_biomarkers, BiomarkerSpec, CohortConfig, Granularity};
use clincon_core::theory::{
    decompose_loss, make_clinical_proxy, run_proxy_sweep, sample_latent_task, ProxySweepConfig,
    RandomLinearMap,
};
use clincon_core::train::{
    distill, evaluate_model, pretrain_contrastive, save_classifier, save_encoder,
    train_linear_probe, EncoderConfig, EncoderState, HyperParams, ProbeTarget,
};
use clincon_core::Real;

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {n:02} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn random_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Real>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen::<Real>() * 2.0 - 1.0).collect())
        .collect()
}

fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Real>> {
    normalize(&random_rows(rows, cols, rng)).unwrap().unit
}

fn twin_index(n2: usize) -> Vec<usize> {
    (0..n2).map(|i| (i + n2 / 2) % n2).collect()
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tau = 0.07;
    let (n2, d) = (8, 4);
    let mut worst = 0.0f64;

    for trial in 0..5 {
        let raw = random_rows(n2, d, &mut rng);
        let flat = flatten(&raw);
        let twins = twin_index(n2);
        let labels: Vec<DiscreteLabel> = (0..n2)
            .map(|i| DiscreteLabel::Bin((i % (n2 / 2)) as i64 / 2))
            .collect();
        let mask = positive_mask(&labels);
        let mask2 = positive_mask(
            &(0..n2)
                .map(|i| DiscreteLabel::Bin((i % 3) as i64))
                .collect::<Vec<_>>(),
        );

        // embedding losses, composed with normalize
        let through = |loss: &dyn Fn(&[Vec<Real>]) -> clincon_core::losses::LossResult<Real>,
                       x: &[Real]| {
            let rows = unflatten(x, d);
            let norm = normalize(&rows).unwrap();
            let r = loss(&norm.unit);
            (r.value, flatten(&norm.backward(&r.grad)))
        };
        let e1 = grad_check(
            |x| through(&|z| info_nce(z, &twins, tau, Reduction::Mean).unwrap(), x),
            &flat,
            1e-6,
        );
        let e2 = grad_check(
            |x| through(&|z| clinical_supcon(z, &mask, tau, Reduction::Mean).unwrap(), x),
            &flat,
            1e-6,
        );
        let e3 = grad_check(
            |x| {
                through(
                    &|z| {
                        combined_clinical(z, &[(&mask, 1.0), (&mask2, 0.5)], tau, Reduction::Mean)
                            .unwrap()
                    },
                    x,
                )
            },
            &flat,
            1e-6,
        );

        // logit losses on 4x5 batches
        let logits = random_rows(4, 5, &mut rng);
        let lflat = flatten(&logits);
        let ce_labels = vec![trial % 5, 1, 4, 2];
        let e4 = grad_check(
            |x| {
                let r = cross_entropy(&unflatten(x, 5), &ce_labels).unwrap();
                (r.value, flatten(&r.grad))
            },
            &lflat,
            1e-6,
        );
        let targets: Vec<Vec<u8>> = (0..4)
            .map(|i| (0..5).map(|j| ((i + j + trial) % 2) as u8).collect())
            .collect();
        let e5 = grad_check(
            |x| {
                let r = bce_multilabel(&unflatten(x, 5), &targets).unwrap();
                (r.value, flatten(&r.grad))
            },
            &lflat,
            1e-6,
        );
        let teacher = random_rows(4, 5, &mut rng);
        let e6 = grad_check(
            |x| {
                let r = distillation_loss(&unflatten(x, 5), &teacher, 2.0).unwrap();
                (r.value, flatten(&r.grad))
            },
            &lflat,
            1e-6,
        );
        worst = worst.max(e1).max(e2).max(e3).max(e4).max(e5).max(e6);
    }
    let elapsed = start.elapsed();
    report(
        1,
        "gradient-correctness",
        worst <= 1e-4 && elapsed.as_secs() < 10,
        &format!("max rel err {worst:.2e}, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- 2

/// Direct scalar evaluation of the per-anchor loss definition:
/// (-1/|C(i)|) sum_c log(exp(z_i.z_c/tau) / sum_a exp(z_i.z_a/tau)).
fn oracle_supcon(z: &[Vec<Real>], mask: &PairMask, tau: Real) -> Real {
    let n = z.len();
    let dot = |a: &[Real], b: &[Real]| a.iter().zip(b).map(|(x, y)| x * y).sum::<Real>();
    let mut total = 0.0;
    let mut contributing = 0;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| mask.positive(i, j)).collect();
        if positives.is_empty() {
            continue;
        }
        contributing += 1;
        let den: Real = (0..n)
            .filter(|&a| a != i)
            .map(|a| (dot(&z[i], &z[a]) / tau).exp())
            .sum();
        let mut anchor = 0.0;
        for &c in &positives {
            anchor += ((dot(&z[i], &z[c]) / tau).exp() / den).ln();
        }
        total += -anchor / positives.len() as Real;
    }
    if contributing == 0 {
        0.0
    } else {
        total / contributing as Real
    }
}

#[test]
fn criterion_02_loss_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for n2 in [4usize, 6, 8] {
        for trial in 0..40 {
            let z = unit_rows(n2, 3 + trial % 3, &mut rng);
            let labels: Vec<DiscreteLabel> = (0..n2)
                .map(|_| DiscreteLabel::Bin(rng.gen_range(0..3)))
                .collect();
            let mask = positive_mask(&labels);
            for tau in [0.05, 0.07, 0.5] {
                let got = clinical_supcon(&z, &mask, tau, Reduction::Mean).unwrap().value;
                let want = oracle_supcon(&z, &mask, tau);
                worst = worst.max((got - want).abs());
            }
        }
    }
    report(2, "loss-oracle-equivalence", worst <= 1e-10, &format!("max abs diff {worst:.2e}"));
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_infonce_bridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n2 = 2 * rng.gen_range(2..6);
        let z = unit_rows(n2, 4, &mut rng);
        let twins = twin_index(n2);
        // all-distinct source labels: each sample's only positive is its twin
        let labels: Vec<DiscreteLabel> = (0..n2)
            .map(|i| DiscreteLabel::Bin((i % (n2 / 2)) as i64))
            .collect();
        let mask = positive_mask(&labels);
        let a = clinical_supcon(&z, &mask, 0.07, Reduction::Mean).unwrap();
        let b = info_nce(&z, &twins, 0.07, Reduction::Mean).unwrap();
        worst = worst.max((a.value - b.value).abs());
        for (ga, gb) in a.grad.iter().zip(b.grad.iter()) {
            for (x, y) in ga.iter().zip(gb.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    report(3, "infonce-bridge", worst <= 1e-12, &format!("max value/grad diff {worst:.2e}"));
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_auroc_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0usize;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=200);
        // coarse grid forces ties
        let scores: Vec<Real> = (0..n).map(|_| (rng.gen_range(0..10) as Real) / 10.0).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        if pos == 0 || pos == n {
            continue;
        }
        let fast = auroc(&scores, &labels).unwrap();
        // O(n^2) pair-counting statistic with half credit for ties
        let mut num = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        let slow = num / pairs as Real;
        assert_eq!(fast, slow, "auroc mismatch on n={n}");
        checked += 1;
    }
    report(4, "auroc-oracle", checked > 900, &format!("{checked} vectors, exact agreement"));
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_decomposition_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut both = 0usize;
    for trial in 0..50 {
        let k = rng.gen_range(2..=5);
        let prior = vec![1.0 / k as Real; k];
        let task = sample_latent_task(k, &prior, 8, 0.3, trial).unwrap();
        let eps = rng.gen_range(0.05..0.6);
        let proxy = make_clinical_proxy(&task, eps).unwrap();
        let f = RandomLinearMap::new(task.m, 6, trial + 1000);
        let rep = decompose_loss(&|x| f.apply(x), &task, &proxy, 600, 6, 0.07, trial).unwrap();
        if let Some(res) = rep.identity_residual {
            both += 1;
            worst = worst.max(res);
        }
    }
    // tau_coll exact at eps = 0
    let task = sample_latent_task(3, &[1.0 / 3.0; 3], 8, 0.3, 9).unwrap();
    let proxy0 = make_clinical_proxy(&task, 0.0).unwrap();
    let f = RandomLinearMap::new(task.m, 6, 9);
    let rep0 = decompose_loss(&|x| f.apply(x), &task, &proxy0, 300, 6, 0.07, 9).unwrap();
    report(
        5,
        "decomposition-identity",
        worst <= 1e-12 && both >= 40 && rep0.tau_coll == 1.0,
        &format!("max residual {worst:.2e} over {both} two-partition triples, tau(0)={}", rep0.tau_coll),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_theory_trend() {
    let start = Instant::now();
    let cfg = ProxySweepConfig {
        k: 4,
        ..ProxySweepConfig::default()
    };
    let eps = [0.0, 0.2, 0.4, 0.6, 0.8];
    let rows = run_proxy_sweep(&eps, &cfg, &[1, 2, 3]).unwrap();
    let xs: Vec<Real> = rows.iter().map(|r| r.eps).collect();
    let ys: Vec<Real> = rows.iter().map(|r| r.probe_accuracy).collect();
    let rho = spearman(&xs, &ys).unwrap();
    let elapsed = start.elapsed();
    report(
        6,
        "theory-trend",
        rho <= -0.8 && elapsed.as_secs() < 300,
        &format!("spearman(eps, accuracy) = {rho:.3}, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- experiment helpers (7, 8)

const HIGH_BIOMARKER: &str = "PAVF";

fn acceptance_cohort(seed: u64) -> CohortConfig {
    CohortConfig {
        n_eyes: 400,
        visits_per_eye: 8,
        payload_dim: 64,
        severity_noise: 0.04,
        bcva_sigma: 2.0,
        cst_sigma: 10.0,
        biomarker_specs: vec![
            BiomarkerSpec {
                name: "IRF".into(),
                threshold: 0.35,
                flip_prob: 0.05,
                granularity: Granularity::Low,
                effect_dims: 16,
                effect_magnitude: 1.0,
            },
            BiomarkerSpec {
                name: HIGH_BIOMARKER.into(),
                threshold: 0.55,
                flip_prob: 0.05,
                granularity: Granularity::High,
                effect_dims: 3,
                effect_magnitude: 0.6,
            },
        ],
        seed,
    }
}

struct Experiment {
    pretrain_pool: Dataset,
    labeled: Dataset,
    test: Dataset,
}

/// Eye-level split into a clinical-only pretraining pool (>= 2000), a
/// 600-sample biomarker-labeled subset, and a held-out test set.
fn build_experiment(seed: u64) -> Experiment {
    let (cohort, _gt) = generate_cohort(&acceptance_cohort(seed)).unwrap();
    let (train, test) = split_by_identity(&cohort, IdentityKey::Eye, 60, seed).unwrap();
    let (pretrain_pool, labeled) = split_by_identity(&train, IdentityKey::Eye, 75, seed + 1).unwrap();
    assert!(pretrain_pool.len() >= 2000, "pool has {}", pretrain_pool.len());
    assert_eq!(labeled.len(), 600);
    Experiment {
        pretrain_pool: strip_biomarkers(&pretrain_pool),
        labeled,
        test,
    }
}

fn experiment_hp() -> HyperParams {
    HyperParams {
        epochs: 12,
        ..HyperParams::default()
    }
}

/// Heavier augmentation: InfoNCE invariance suppresses the subtle
/// high-granularity signal while the clinical masks keep it useful.
fn experiment_augmenter() -> Augmenter {
    Augmenter {
        noise_sigma: 0.4,
        dropout_rate: 0.2,
    }
}

/// Coarse CST binning so same-severity-band samples become positives.
fn experiment_bins() -> BinWidths {
    let mut bw = BinWidths::default();
    bw.0.insert("cst".into(), 50.0);
    bw
}

fn probe_hp() -> HyperParams {
    HyperParams {
        epochs: 30,
        lr_probe: 0.05,
        ..HyperParams::default()
    }
}

// narrow representation: the encoder must select features, so pretraining
// quality shows up in the probe
fn encoder_cfg() -> EncoderConfig {
    EncoderConfig {
        hidden_sizes: vec![64],
        repr_dim: 16,
        projection_hidden: 64,
    }
}

fn random_encoder(payload_dim: usize, seed: u64) -> EncoderState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = encoder_cfg();
    let mut dims = vec![payload_dim];
    dims.extend_from_slice(&cfg.hidden_sizes);
    dims.push(cfg.repr_dim);
    EncoderState {
        encoder: Mlp::new(&dims, &mut rng).unwrap(),
        projection: Mlp::new(&[cfg.repr_dim, cfg.projection_hidden, 128], &mut rng).unwrap(),
        hyper: experiment_hp(),
        config: cfg,
        loss_spec: LossSpec::self_supervised(),
        seed,
    }
}

fn probe_auroc(enc: &EncoderState, labeled: &Dataset, test: &Dataset, seed: u64) -> Real {
    let target = ProbeTarget::Biomarker(HIGH_BIOMARKER.into());
    let clf = train_linear_probe(enc, labeled, &target, &probe_hp(), seed).unwrap();
    let report = evaluate_model(&clf, test, seed).unwrap();
    report.per_biomarker[HIGH_BIOMARKER].auroc
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_granularity_pattern() {
    let start = Instant::now();
    let mut clinical = Vec::new();
    let mut selfsup = Vec::new();
    let mut random = Vec::new();
    for seed in 0..3u64 {
        let exp = build_experiment(seed);
        let hp = experiment_hp();
        let (enc_clin, _) = pretrain_contrastive(
            &exp.pretrain_pool,
            &LossSpec::parse("cst+eye").unwrap(),
            &hp,
            &encoder_cfg(),
            &experiment_augmenter(),
            &experiment_bins(),
            seed,
        )
        .unwrap();
        let (enc_self, _) = pretrain_contrastive(
            &exp.pretrain_pool,
            &LossSpec::self_supervised(),
            &hp,
            &encoder_cfg(),
            &experiment_augmenter(),
            &experiment_bins(),
            seed,
        )
        .unwrap();
        let enc_rand = random_encoder(exp.pretrain_pool.payload_dim, seed + 77);
        clinical.push(probe_auroc(&enc_clin, &exp.labeled, &exp.test, seed));
        selfsup.push(probe_auroc(&enc_self, &exp.labeled, &exp.test, seed));
        random.push(probe_auroc(&enc_rand, &exp.labeled, &exp.test, seed));
    }
    let mean = |v: &[Real]| v.iter().sum::<Real>() / v.len() as Real;
    let (mc, ms, mr) = (mean(&clinical), mean(&selfsup), mean(&random));
    let elapsed = start.elapsed();
    report(
        7,
        "granularity-pattern",
        mc - ms >= 0.03 && mc > mr && ms > mr && elapsed.as_secs() < 600,
        &format!(
            "{HIGH_BIOMARKER} auroc clinical {mc:.3} vs infonce {ms:.3} vs random {mr:.3}, {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_access_trend() {
    let fractions = [0.25, 0.5, 0.75, 1.0];
    let mut per_fraction = vec![Vec::new(); fractions.len()];
    for seed in 0..3u64 {
        let exp = build_experiment(100 + seed);
        let (enc, _) = pretrain_contrastive(
            &exp.pretrain_pool,
            &LossSpec::parse("cst+eye").unwrap(),
            &experiment_hp(),
            &encoder_cfg(),
            &experiment_augmenter(),
            &experiment_bins(),
            seed,
        )
        .unwrap();
        for (fi, &fraction) in fractions.iter().enumerate() {
            let subset = subsample_fraction(&exp.labeled, fraction, seed).unwrap();
            per_fraction[fi].push(probe_auroc(&enc, &subset, &exp.test, seed));
        }
    }
    let means: Vec<Real> = per_fraction
        .iter()
        .map(|v| v.iter().sum::<Real>() / v.len() as Real)
        .collect();
    let rho = spearman(fractions.as_ref(), &means).unwrap();
    report(
        8,
        "access-trend",
        rho >= 0.8,
        &format!("spearman(fraction, mean auroc) = {rho:.3}, means {means:?}"),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_frozen_encoder() {
    let (cohort, _) = generate_cohort(&CohortConfig {
        n_eyes: 40,
        visits_per_eye: 4,
        payload_dim: 24,
        severity_noise: 0.05,
        bcva_sigma: 2.0,
        cst_sigma: 10.0,
        biomarker_specs: vec![BiomarkerSpec {
            name: "IRF".into(),
            threshold: 0.5,
            flip_prob: 0.0,
            granularity: Granularity::Low,
            effect_dims: 6,
            effect_magnitude: 1.5,
        }],
        seed: 909,
    })
    .unwrap();
    let hp = HyperParams {
        epochs: 2,
        batch_size: 32,
        ..HyperParams::default()
    };
    let (enc, _) = pretrain_contrastive(
        &cohort,
        &LossSpec::parse("cst").unwrap(),
        &hp,
        &EncoderConfig::default(),
        &Augmenter::default(),
        &BinWidths::default(),
        1,
    )
    .unwrap();
    let before = enc.encoder_checksum();
    let target = ProbeTarget::Biomarker("IRF".into());
    let probe = train_linear_probe(&enc, &cohort, &target, &hp, 2).unwrap();
    let after_probe = probe.encoder.encoder_checksum();
    let empty = Dataset::new(vec![], cohort.payload_dim, "empty".into()).unwrap();
    let student = distill(&probe, &cohort, &empty, 2.0, &hp, 3).unwrap();
    let after_distill = student.encoder.encoder_checksum();
    report(
        9,
        "frozen-encoder",
        before == after_probe && before == after_distill,
        &format!("checksum {before}"),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_split_hygiene() {
    let (cohort, _) = generate_cohort(&CohortConfig {
        n_eyes: 60,
        visits_per_eye: 3,
        payload_dim: 8,
        severity_noise: 0.05,
        bcva_sigma: 2.0,
        cst_sigma: 10.0,
        biomarker_specs: vec![],
        seed: 1010,
    })
    .unwrap();
    let mut overlaps = 0usize;
    for seed in 0..1000u64 {
        let key = if seed % 2 == 0 { IdentityKey::Eye } else { IdentityKey::Patient };
        let holdout = 1 + (seed as usize % 20);
        let (train, test) = split_by_identity(&cohort, key, holdout, seed).unwrap();
        let pick = |s: &clincon_core::data::Sample| match key {
            IdentityKey::Eye => s.clinical.eye_id.clone(),
            IdentityKey::Patient => s.clinical.patient_id.clone(),
        };
        let train_ids: std::collections::HashSet<String> = train.samples.iter().map(pick).collect();
        if test.samples.iter().any(|s| train_ids.contains(&pick(s))) {
            overlaps += 1;
        }
    }

    // balanced draw at full scale: exactly 500/500
    let (big, _) = generate_cohort(&CohortConfig {
        n_eyes: 1400,
        visits_per_eye: 1,
        payload_dim: 8,
        severity_noise: 0.0,
        bcva_sigma: 0.0,
        cst_sigma: 0.0,
        biomarker_specs: vec![BiomarkerSpec {
            name: "IRF".into(),
            threshold: 0.5,
            flip_prob: 0.0,
            granularity: Granularity::Low,
            effect_dims: 2,
            effect_magnitude: 1.0,
        }],
        seed: 1011,
    })
    .unwrap();
    let balanced = balanced_biomarker_testset(&big, "IRF", 500, 0).unwrap();
    let pos = balanced
        .samples
        .iter()
        .filter(|s| s.biomarkers.unwrap().flags[0] == 1)
        .count();
    report(
        10,
        "split-hygiene",
        overlaps == 0 && balanced.len() == 1000 && pos == 500,
        &format!("{overlaps} overlaps in 1000 splits, balanced {pos}/{}", balanced.len() - pos),
    );
}

// ---------------------------------------------------------------- 11

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let (cohort, _) = generate_cohort(&CohortConfig {
            n_eyes: 30,
            visits_per_eye: 4,
            payload_dim: 24,
            severity_noise: 0.05,
            bcva_sigma: 2.0,
            cst_sigma: 10.0,
            biomarker_specs: vec![BiomarkerSpec {
                name: "IRF".into(),
                threshold: 0.5,
                flip_prob: 0.0,
                granularity: Granularity::Low,
                effect_dims: 6,
                effect_magnitude: 1.5,
            }],
            seed: 1111,
        })
        .unwrap();
        let hp = HyperParams {
            epochs: 2,
            batch_size: 32,
            ..HyperParams::default()
        };
        let (enc, _) = pretrain_contrastive(
            &cohort,
            &LossSpec::parse("bcva:1+cst:1").unwrap(),
            &hp,
            &EncoderConfig::default(),
            &Augmenter::default(),
            &BinWidths::default(),
            5,
        )
        .unwrap();
        let enc_path = dir.path().join(format!("enc_{tag}.ckpt"));
        save_encoder(&enc, &enc_path).unwrap();
        let target = ProbeTarget::Biomarker("IRF".into());
        let clf = train_linear_probe(&enc, &cohort, &target, &hp, 6).unwrap();
        let clf_path = dir.path().join(format!("clf_{tag}.ckpt"));
        save_classifier(&clf, &clf_path).unwrap();
        let report = evaluate_model(&clf, &cohort, 6).unwrap();
        (
            std::fs::read(&enc_path).unwrap(),
            std::fs::read(&clf_path).unwrap(),
            serde_json::to_vec(&report).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    report(
        11,
        "determinism",
        a == b,
        "byte-identical checkpoints and metric reports across reruns",
    );
}
