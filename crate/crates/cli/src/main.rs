//! `clincon`: reproducible experiment runs over the clinical-contrastive
//! toolkit. Every run resolves its configuration, seeds everything, and
//! writes a manifest with SHA-256 checksums of the produced artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clincon_core::data::{
    balanced_biomarker_testset, label_histogram, load_manifest, split_by_identity,
    subsample_fraction, write_manifest, IdentityKey,
};
use clincon_core::error::Error;
use clincon_core::losses::LossSpec;
use clincon_core::metrics::{paired_t_test, MetricReport};
use clincon_core::pairs::{Augmenter, BinWidths};
use clincon_core::synth::{generate_cohort, ground_truth_check, CohortConfig};
use clincon_core::theory::{run_proxy_cell, write_sweep_csv, ProxySweepConfig, SweepRow};
use clincon_core::train::{
    distill, evaluate_model, export_embeddings, load_classifier, load_encoder,
    pretrain_contrastive, save_classifier, save_encoder, train_linear_probe,
    train_supervised_baseline, EmbeddingLayer, EncoderConfig, HyperParams, ProbeTarget,
};
use clincon_core::Real;

/// Resolved run configuration; file values are overridden by flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    hyper: HyperParams,
    encoder: EncoderConfig,
    augment: Augmenter,
    bin_widths: BTreeMap<String, Real>,
    loss: Option<String>,
    seed: Option<u64>,
}

#[derive(Parser)]
#[command(name = "clincon", version, about = "Clinical-label contrastive learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; unknown keys are rejected
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (overrides config)
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch count (overrides config)
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size (overrides config)
    #[arg(long)]
    batch_size: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg: RunConfig = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(epochs) = self.epochs {
            cfg.hyper.epochs = epochs;
        }
        if let Some(bs) = self.batch_size {
            cfg.hyper.batch_size = bs;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (manifest + payload files + ground truth)
    GenSynth {
        /// Cohort configuration JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Seed override for the cohort config
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split a dataset by identity into train/test directories
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Identity to hold out by: `eye` or `patient`
        #[arg(long, default_value = "eye")]
        by: String,
        /// Number of identities to hold out
        #[arg(long)]
        holdout: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optionally also emit a balanced per-biomarker test set of this
        /// many images per class, drawn from the holdout
        #[arg(long)]
        balanced: Option<usize>,
        /// Biomarker for the balanced draw
        #[arg(long)]
        biomarker: Option<String>,
    },
    /// Histogram of a clinical key (images and distinct eyes per value)
    Histogram {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        key: String,
        /// Output JSON path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage-1 contrastive pretraining
    Pretrain {
        #[arg(long)]
        train: PathBuf,
        /// Loss grammar: keys joined by `+` with optional `:weight`
        /// (e.g. `bcva:1+cst:1`), or `self` for InfoNCE
        #[arg(long)]
        loss: Option<String>,
        /// Temperature override
        #[arg(long)]
        tau: Option<Real>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Frozen-encoder linear probe
    Probe {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        labeled: PathBuf,
        /// `multilabel` or a studied biomarker name (IRF, DME, IRHRF, FAVF, PAVF)
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// End-to-end supervised baseline (no pretraining)
    Baseline {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Teacher-student distillation over labeled + unlabeled data
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        labeled: PathBuf,
        /// Unlabeled pool manifest; omit for soft-label training only
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        temperature: Real,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Evaluate a classifier on a test manifest, writing a metric report
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Probe AUROC at several biomarker-access fractions x seeds
    SweepAccess {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        target: String,
        /// Percent fractions, e.g. `25,50,75,100`
        #[arg(long)]
        fractions: String,
        /// Comma-separated seeds, e.g. `1,2,3`
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Corruption sweep: (eps, KL, tau_coll, probe accuracy) rows
    TheorySweep {
        /// Comma-separated epsilon levels, e.g. `0,0.2,0.4,0.6,0.8`
        #[arg(long)]
        eps: String,
        #[arg(long)]
        seeds: String,
        /// Optional ProxySweepConfig JSON
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-sample embeddings as CSV
    ExportEmbeddings {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// `representation` or `projection`
        #[arg(long, default_value = "representation")]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch significance test between two populations of metric reports
    Compare {
        /// Comma-separated metric-report JSON paths (population A)
        #[arg(long)]
        a: String,
        /// Comma-separated metric-report JSON paths (population B)
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: Real,
        /// Output JSON path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    outputs: BTreeMap<String, String>,
}

fn write_run_manifest(
    anchor: &Path,
    command: &str,
    config: serde_json::Value,
    seeds: &[u64],
    outputs: &[&Path],
) -> Result<(), Error> {
    let mut checksums = BTreeMap::new();
    for p in outputs {
        checksums.insert(p.display().to_string(), sha256_file(p)?);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seeds: seeds.to_vec(),
        outputs: checksums,
    };
    let path = if anchor.is_dir() {
        anchor.join("run_manifest.json")
    } else {
        anchor.with_extension(format!(
            "{}run.json",
            anchor
                .extension()
                .map(|e| format!("{}.", e.to_string_lossy()))
                .unwrap_or_default()
        ))
    };
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn parse_target(s: &str) -> Result<ProbeTarget, Error> {
    if s.eq_ignore_ascii_case("multilabel") {
        Ok(ProbeTarget::Multilabel)
    } else if clincon_core::data::STUDIED_BIOMARKERS.contains(&s) {
        Ok(ProbeTarget::Biomarker(s.to_string()))
    } else {
        Err(Error::InvalidArgument(format!(
            "target must be `multilabel` or one of {:?}, got `{s}`",
            clincon_core::data::STUDIED_BIOMARKERS
        )))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("invalid {what} entry `{tok}`")))
        })
        .collect()
}

fn threads_cap() -> usize {
    std::env::var("CLINCON_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Runs one closure per job, at most `CLINCON_THREADS` at a time, and
/// returns results in job order regardless of completion order.
fn run_jobs<T, F>(jobs: Vec<F>) -> Result<Vec<T>, Error>
where
    T: Send,
    F: FnOnce() -> Result<T, Error> + Send,
{
    let cap = threads_cap();
    let mut results: Vec<Option<Result<T, Error>>> = Vec::new();
    for _ in 0..jobs.len() {
        results.push(None);
    }
    let mut jobs: Vec<Option<F>> = jobs.into_iter().map(Some).collect();
    for batch_start in (0..jobs.len()).step_by(cap) {
        let end = (batch_start + cap).min(jobs.len());
        let (done, rest) = results.split_at_mut(batch_start);
        let _ = done;
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (offset, job) in jobs[batch_start..end].iter_mut().enumerate() {
                let job = job.take().expect("job consumed once");
                handles.push((offset, scope.spawn(job)));
            }
            for (offset, handle) in handles {
                rest[offset] = Some(handle.join().expect("sweep worker panicked"));
            }
        });
    }
    results
        .into_iter()
        .map(|r| r.expect("all jobs ran"))
        .collect()
}

fn bin_widths_of(cfg: &RunConfig) -> BinWidths {
    let mut bw = BinWidths::default();
    for (k, v) in &cfg.bin_widths {
        bw.0.insert(k.clone(), *v);
    }
    bw
}

fn report_metric(report: &MetricReport) -> Result<Real, Error> {
    if let Some(avg) = &report.averaged {
        return Ok(avg.auroc);
    }
    let mut values = report.per_biomarker.values();
    match (values.next(), values.next()) {
        (Some(m), None) => Ok(m.auroc),
        _ => Err(Error::InvalidArgument(
            "report has neither an averaged suite nor a single biomarker".into(),
        )),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenSynth { config, out, seed } => {
            let mut cfg: CohortConfig = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let (ds, gt) = generate_cohort(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let manifest_path = write_manifest(&ds, &out)?;
            let gt_path = out.join("ground_truth.json");
            std::fs::write(&gt_path, serde_json::to_vec_pretty(&gt)?)?;
            // verify the cohort against its ground truth and that the
            // written manifest reloads to the same ids
            let report = ground_truth_check(&ds, &gt)?;
            let reloaded = load_manifest(&manifest_path)?;
            if reloaded.len() != ds.len()
                || reloaded
                    .samples
                    .iter()
                    .zip(ds.samples.iter())
                    .any(|(a, b)| a.id != b.id)
            {
                return Err(Error::Provenance("manifest round-trip mismatch".into()));
            }
            let report_path = out.join("cohort_report.json");
            std::fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
            write_run_manifest(
                &out,
                "gen-synth",
                serde_json::to_value(&cfg)?,
                &[cfg.seed],
                &[&manifest_path, &gt_path, &report_path],
            )?;
            println!("wrote {} samples to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Split {
            manifest,
            by,
            holdout,
            seed,
            out,
            balanced,
            biomarker,
        } => {
            let ds = load_manifest(&manifest)?;
            let key: IdentityKey = by.parse()?;
            let (train, test) = split_by_identity(&ds, key, holdout, seed)?;
            let train_dir = out.join("train");
            let test_dir = out.join("test");
            std::fs::create_dir_all(&train_dir)?;
            std::fs::create_dir_all(&test_dir)?;
            let train_manifest = write_manifest(&train, &train_dir)?;
            let test_manifest = write_manifest(&test, &test_dir)?;
            let mut outputs = vec![train_manifest.clone(), test_manifest.clone()];
            if let Some(n_per_class) = balanced {
                let name = biomarker.ok_or_else(|| {
                    Error::InvalidArgument("--balanced requires --biomarker".into())
                })?;
                let bal = balanced_biomarker_testset(&test, &name, n_per_class, seed)?;
                let bal_dir = out.join("balanced");
                std::fs::create_dir_all(&bal_dir)?;
                outputs.push(write_manifest(&bal, &bal_dir)?);
            }
            let output_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
            write_run_manifest(
                &out,
                "split",
                serde_json::json!({"by": by, "holdout": holdout}),
                &[seed],
                &output_refs,
            )?;
            println!("train {} / test {} samples", train.len(), test.len());
            Ok(())
        }
        Command::Histogram { manifest, key, out } => {
            let ds = load_manifest(&manifest)?;
            let hist = label_histogram(&ds, &key)?;
            let json = serde_json::to_string_pretty(&hist)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Pretrain {
            train,
            loss,
            tau,
            out,
            common,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(loss) = loss {
                cfg.loss = Some(loss);
            }
            if let Some(tau) = tau {
                cfg.hyper.tau = tau;
            }
            let spec = LossSpec::parse(cfg.loss.as_deref().unwrap_or("self"))?;
            let seed = cfg.seed.unwrap_or(0);
            let ds = load_manifest(&train)?;
            let (state, log) = pretrain_contrastive(
                &ds,
                &spec,
                &cfg.hyper,
                &cfg.encoder,
                &cfg.augment,
                &bin_widths_of(&cfg),
                seed,
            )?;
            save_encoder(&state, &out)?;
            write_run_manifest(&out, "pretrain", serde_json::to_value(&cfg)?, &[seed], &[&out])?;
            println!(
                "pretrained {} steps, final loss {:.6}, encoder {}",
                log.step_losses.len(),
                log.step_losses.last().copied().unwrap_or(Real::NAN),
                state.encoder_checksum()
            );
            Ok(())
        }
        Command::Probe {
            encoder,
            labeled,
            target,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let seed = cfg.seed.unwrap_or(0);
            let enc = load_encoder(&encoder)?;
            let ds = load_manifest(&labeled)?;
            let target = parse_target(&target)?;
            let clf = train_linear_probe(&enc, &ds, &target, &cfg.hyper, seed)?;
            save_classifier(&clf, &out)?;
            write_run_manifest(&out, "probe", serde_json::to_value(&cfg)?, &[seed], &[&out])?;
            println!("probe trained; encoder {}", clf.encoder.encoder_checksum());
            Ok(())
        }
        Command::Baseline {
            labeled,
            target,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let seed = cfg.seed.unwrap_or(0);
            let ds = load_manifest(&labeled)?;
            let target = parse_target(&target)?;
            let clf = train_supervised_baseline(&ds, &cfg.hyper, &cfg.encoder, &target, seed)?;
            save_classifier(&clf, &out)?;
            write_run_manifest(&out, "baseline", serde_json::to_value(&cfg)?, &[seed], &[&out])?;
            println!("baseline trained");
            Ok(())
        }
        Command::Distill {
            teacher,
            labeled,
            unlabeled,
            temperature,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let seed = cfg.seed.unwrap_or(0);
            let teacher = load_classifier(&teacher)?;
            let labeled_ds = load_manifest(&labeled)?;
            let unlabeled_ds = match unlabeled {
                Some(path) => load_manifest(&path)?,
                None => clincon_core::data::Dataset::new(
                    vec![],
                    labeled_ds.payload_dim,
                    "empty".into(),
                )?,
            };
            let student = distill(&teacher, &labeled_ds, &unlabeled_ds, temperature, &cfg.hyper, seed)?;
            save_classifier(&student, &out)?;
            write_run_manifest(
                &out,
                "distill",
                serde_json::json!({"temperature": temperature, "hyper": cfg.hyper}),
                &[seed],
                &[&out],
            )?;
            println!("student trained; encoder {}", student.encoder.encoder_checksum());
            Ok(())
        }
        Command::Eval {
            model,
            test,
            out,
            seed,
        } => {
            let clf = load_classifier(&model)?;
            let ds = load_manifest(&test)?;
            let report = evaluate_model(&clf, &ds, seed)?;
            std::fs::write(&out, serde_json::to_vec_pretty(&report)?)?;
            write_run_manifest(&out, "eval", serde_json::json!({}), &[seed], &[&out])?;
            println!("auroc {:.4} ({})", report_metric(&report)?, out.display());
            Ok(())
        }
        Command::SweepAccess {
            encoder,
            labeled,
            test,
            target,
            fractions,
            seeds,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let enc = load_encoder(&encoder)?;
            let labeled_ds = load_manifest(&labeled)?;
            let test_ds = load_manifest(&test)?;
            let target = parse_target(&target)?;
            let fractions: Vec<Real> = parse_list(&fractions, "fraction")?;
            let seeds: Vec<u64> = parse_list(&seeds, "seed")?;
            if fractions.is_empty() || seeds.is_empty() {
                return Err(Error::InvalidArgument("need at least one fraction and seed".into()));
            }
            let mut jobs = Vec::new();
            for &pct in &fractions {
                for &seed in &seeds {
                    let enc = &enc;
                    let labeled_ds = &labeled_ds;
                    let test_ds = &test_ds;
                    let target = &target;
                    let hyper = &cfg.hyper;
                    jobs.push(move || {
                        let subset = subsample_fraction(labeled_ds, pct / 100.0, seed)?;
                        let clf = train_linear_probe(enc, &subset, target, hyper, seed)?;
                        let report = evaluate_model(&clf, test_ds, seed)?;
                        Ok((pct, seed, report_metric(&report)?))
                    });
                }
            }
            let rows = run_jobs(jobs)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["fraction", "seed", "auroc"])?;
            for (pct, seed, auroc) in &rows {
                w.write_record(&[format!("{pct}"), format!("{seed}"), format!("{auroc}")])?;
            }
            w.flush()?;
            write_run_manifest(
                &out,
                "sweep-access",
                serde_json::json!({"fractions": fractions, "hyper": cfg.hyper}),
                &seeds,
                &[&out],
            )?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::TheorySweep {
            eps,
            seeds,
            config,
            out,
        } => {
            let cfg: ProxySweepConfig = match config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => ProxySweepConfig::default(),
            };
            let eps_levels: Vec<Real> = parse_list(&eps, "epsilon")?;
            let seeds: Vec<u64> = parse_list(&seeds, "seed")?;
            if eps_levels.len() < 3 {
                return Err(Error::InvalidArgument("sweep needs at least 3 epsilon levels".into()));
            }
            if seeds.is_empty() {
                return Err(Error::InvalidArgument("need at least one seed".into()));
            }
            let mut jobs = Vec::new();
            for &eps in &eps_levels {
                for &seed in &seeds {
                    let cfg = &cfg;
                    jobs.push(move || run_proxy_cell(cfg, eps, seed));
                }
            }
            let rows: Vec<SweepRow> = run_jobs(jobs)?;
            write_sweep_csv(&rows, &out)?;
            write_run_manifest(
                &out,
                "theory-sweep",
                serde_json::to_value(&cfg)?,
                &seeds,
                &[&out],
            )?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::ExportEmbeddings {
            encoder,
            manifest,
            layer,
            out,
        } => {
            let enc = load_encoder(&encoder)?;
            let ds = load_manifest(&manifest)?;
            let layer: EmbeddingLayer = layer.parse()?;
            export_embeddings(&enc, &ds.samples, &out, layer)?;
            write_run_manifest(&out, "export-embeddings", serde_json::json!({}), &[], &[&out])?;
            println!("exported {} embeddings", ds.len());
            Ok(())
        }
        Command::Compare { a, b, alpha, out } => {
            let load_population = |paths: &str| -> Result<Vec<Real>, Error> {
                paths
                    .split(',')
                    .map(|p| {
                        let report: MetricReport =
                            serde_json::from_str(&std::fs::read_to_string(p.trim())?)?;
                        report_metric(&report)
                    })
                    .collect()
            };
            let pop_a = load_population(&a)?;
            let pop_b = load_population(&b)?;
            let result = paired_t_test(&pop_a, &pop_b, alpha)?;
            let json = serde_json::to_string_pretty(&result)?;
            if let Some(path) = out { std::fs::write(path, &json)? }
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are success, all other parse failures
            // are usage errors (exit 1)
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
