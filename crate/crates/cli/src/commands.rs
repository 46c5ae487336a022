use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use sbd_core::analysis::{
    aggregate_metrics, boundary_metrics, calibrate_gap, run_ablation, segment_length_stats,
    segment_with_mode, verify_theorem, write_histogram_csv, AssumptionParams, BoundaryMetrics,
    LengthStats, MetricSummary, SegmentMode, VerifyConfig,
};
use sbd_core::io::{
    read_boundary_sets, read_segments, write_boundary_sets, write_loss_trace, write_segments,
    write_trajectory,
};
use sbd_core::synth::{
    oracle_from_library, ActionMode, DominantLayout, Generator, GeneratorConfig, LabeledTrajectory,
    ObsProcess, SkillSpec,
};
use sbd_core::{
    prune_segments, segment_corpus, segments_from_boundaries, train_count_predictor, BoundarySet,
    CountModel, DetectorConfig, PruneConfig, Segment, TailPolicy,
};

use crate::files::{create, open, out_dir, read_corpus, read_json, trajectory_path, write_json};
use crate::{usage, Common, VerificationFailed};

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => usage(format!("--{flag} is required")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Default,
    BoundCheck,
    Segmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Shuffled,
    Cyclic,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateArgs {
    /// Starting point for every generator field.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of trajectories.
    #[arg(long)]
    pub n: Option<u64>,
    /// Index of the first trajectory; use disjoint ranges for train and test.
    #[arg(long)]
    pub first_index: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Switching scale; skills change with probability 1/K per step.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub obs_vocab: Option<usize>,
    #[arg(long)]
    pub act_vocab: Option<usize>,
    #[arg(long)]
    pub n_skills: Option<usize>,
    #[arg(long)]
    pub dominant_prob: Option<f64>,
    /// Probability that a true boundary carries an injected event.
    #[arg(long)]
    pub event_prob: Option<f64>,
    /// Echo the previous action as the next observation, with this noise.
    #[arg(long)]
    pub echo_noise: Option<f64>,
    #[arg(long, value_enum)]
    pub layout: Option<Layout>,
    /// Always take the dominant action instead of sampling.
    #[arg(long)]
    pub dominant_actions: bool,
    /// Keep the initial skill for the whole trajectory.
    #[arg(long)]
    pub no_switching: bool,
    /// Do not constrain cross-skill action mass.
    #[arg(long)]
    pub no_deviance: bool,
}

#[derive(Serialize)]
struct GenerateRun<'a> {
    command: &'static str,
    n: u64,
    first_index: u64,
    generator: &'a GeneratorConfig,
}

fn generator_config(common: &Common, a: &GenerateArgs) -> GeneratorConfig {
    let mut g = match a.preset.unwrap_or(Preset::Default) {
        Preset::Default => GeneratorConfig::default(),
        Preset::BoundCheck => GeneratorConfig::bound_check(),
        Preset::Segmentation => GeneratorConfig::segmentation_suite(),
    };
    g.seed = common.seed.unwrap_or(g.seed);
    g.horizon = a.horizon.unwrap_or(g.horizon);
    g.k = a.k.unwrap_or(g.k);
    g.c = a.c.unwrap_or(g.c);
    g.delta = a.delta.unwrap_or(g.delta);
    g.m = a.m.unwrap_or(g.m);
    g.obs_vocab = a.obs_vocab.unwrap_or(g.obs_vocab);
    g.act_vocab = a.act_vocab.unwrap_or(g.act_vocab);
    g.n_skills = a.n_skills.unwrap_or(g.n_skills);
    g.dominant_prob = a.dominant_prob.unwrap_or(g.dominant_prob);
    g.event_prob = a.event_prob.unwrap_or(g.event_prob);
    if let Some(noise) = a.echo_noise {
        g.obs_process = ObsProcess::ActionEcho { noise };
    }
    match a.layout {
        Some(Layout::Shuffled) => g.layout = DominantLayout::Shuffled,
        Some(Layout::Cyclic) => g.layout = DominantLayout::Cyclic,
        None => {}
    }
    if a.dominant_actions {
        g.action_mode = ActionMode::Dominant;
    }
    if a.no_switching {
        g.switching = false;
    }
    if a.no_deviance {
        g.enforce_deviance = false;
    }
    g
}

pub fn generate(common: &Common, a: GenerateArgs) -> Result<()> {
    let cfg = generator_config(common, &a);
    let n = a.n.unwrap_or(10);
    let first = a.first_index.unwrap_or(0);
    let generator = Generator::new(cfg.clone())?;
    let out = out_dir(&common.out);

    let corpus = generator.corpus(first..first + n);
    for lt in &corpus {
        let path = trajectory_path(&out, &lt.trajectory.id);
        write_trajectory(&lt.trajectory, create(&path)?)?;
    }
    let labels: Vec<BoundarySet> = corpus.iter().map(|l| l.true_boundaries.clone()).collect();
    write_boundary_sets(&labels, create(&out.join("labels.jsonl"))?)?;
    write_json(&out.join("library.json"), &generator.library())?;
    write_json(
        &out.join("config.json"),
        &GenerateRun {
            command: "generate",
            n,
            first_index: first,
            generator: &cfg,
        },
    )?;
    eprintln!("wrote {n} trajectories to {}", out.display());
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Number of preceding observations in the context key.
    #[arg(long)]
    pub order: Option<usize>,
    /// Additive smoothing constant.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Serialize)]
struct TrainRun {
    command: &'static str,
    corpus: PathBuf,
    order: usize,
    alpha: f64,
    trajectories: usize,
}

pub fn train(common: &Common, a: TrainArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, "corpus")?;
    let order = a.order.unwrap_or(1);
    let alpha = a.alpha.unwrap_or(1.0);
    let corpus = read_corpus(&corpus_dir)?;
    let model = train_count_predictor(&corpus, order, alpha)?;
    let out = out_dir(&common.out);
    let mut w = create(&out.join("model.json"))?;
    model.save(&mut w)?;
    std::io::Write::flush(&mut w)?;
    write_json(
        &out.join("config.json"),
        &TrainRun {
            command: "train",
            corpus: corpus_dir,
            order,
            alpha,
            trajectories: corpus.len(),
        },
    )?;
    Ok(())
}

fn load_model(path: &Path) -> Result<CountModel> {
    CountModel::load(open(path)?).with_context(|| format!("loading model {}", path.display()))
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Model file from `train`; not needed for baseline modes.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// loss, info, both, fixed:L or uniform:MIN:MAX.
    #[arg(long)]
    pub mode: Option<String>,
    /// Loss excess (nats) that opens a segment; required for loss and both.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Context window of the predictor in steps (default: unbounded).
    #[arg(long)]
    pub window: Option<usize>,
    /// Forward shift of flags raised by kill_entity events.
    #[arg(long)]
    pub kill_offset: Option<usize>,
}

#[derive(Serialize)]
struct SegmentRun {
    command: &'static str,
    corpus: PathBuf,
    model: Option<PathBuf>,
    mode: String,
    gap: Option<f64>,
    window: usize,
    kill_offset: usize,
    seed: u64,
}

pub fn segment(common: &Common, a: SegmentArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, "corpus")?;
    let mode: SegmentMode = require(a.mode, "mode")?.parse()?;
    let window = a.window.unwrap_or(usize::MAX);
    let kill_offset = a.kill_offset.unwrap_or(DetectorConfig::DEFAULT_KILL_OFFSET);
    let seed = common.seed.unwrap_or(0);
    if mode.uses_loss() && a.gap.is_none() {
        return usage(format!(
            "mode {mode} needs --gap (see the calibrate subcommand)"
        ));
    }
    let detector = matches!(
        mode,
        SegmentMode::Loss | SegmentMode::Info | SegmentMode::Both
    );
    let model_path = if detector {
        Some(require(a.model, "model")?)
    } else {
        a.model
    };

    let corpus = read_corpus(&corpus_dir)?;
    let out = out_dir(&common.out);
    let mut base = DetectorConfig::new(a.gap.unwrap_or(f64::INFINITY), window, true, true);
    base.kill_offset = kill_offset;

    let (boundaries, segments): (Vec<BoundarySet>, Vec<Segment>) = if detector {
        let model = load_model(model_path.as_deref().expect("checked above"))?;
        let cfg = DetectorConfig {
            use_loss: mode.uses_loss(),
            use_events: !matches!(mode, SegmentMode::Loss),
            ..base
        };
        let runs = segment_corpus(&corpus, &model, &cfg)?;
        for (t, r) in corpus.iter().zip(&runs) {
            let path = out.join("loss_traces").join(format!("{}.jsonl", t.id));
            write_loss_trace(&r.detection, create(&path)?)?;
        }
        let segments = runs.iter().flat_map(|r| r.segments.clone()).collect();
        (
            runs.into_iter().map(|r| r.detection.boundaries).collect(),
            segments,
        )
    } else {
        let empty = CountModel::empty(0, 1.0, 1, 1)?;
        let sets = segment_with_mode(&corpus, &empty, mode, &base, seed)?;
        let mut segments = Vec::new();
        for (t, b) in corpus.iter().zip(&sets) {
            segments.extend(segments_from_boundaries(t.len(), b)?);
        }
        (sets, segments)
    };

    write_boundary_sets(&boundaries, create(&out.join("boundaries.jsonl"))?)?;
    write_segments(&segments, create(&out.join("segments.jsonl"))?)?;
    write_json(
        &out.join("config.json"),
        &SegmentRun {
            command: "segment",
            corpus: corpus_dir,
            model: model_path,
            mode: mode.to_string(),
            gap: a.gap,
            window,
            kill_offset,
            seed,
        },
    )?;
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneArgs {
    /// Segment file from `segment`.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub min: Option<usize>,
    #[arg(long)]
    pub max: Option<usize>,
    /// Keep a final undersized segment instead of dropping it.
    #[arg(long)]
    pub keep_tail: bool,
}

#[derive(Serialize)]
struct PruneRun {
    command: &'static str,
    segments: PathBuf,
    prune: PruneConfig,
}

pub fn prune(common: &Common, a: PruneArgs) -> Result<()> {
    let path = require(a.segments, "segments")?;
    let cfg = PruneConfig {
        min_len: a.min.unwrap_or(15),
        max_len: a.max.unwrap_or(200),
        tail_policy: if a.keep_tail {
            TailPolicy::KeepFlagged
        } else {
            TailPolicy::Drop
        },
    };
    let segments = read_segments(open(&path)?)?;
    let pruned = prune_segments(&segments, &cfg)?;
    let out = out_dir(&common.out);
    write_segments(
        &pruned.segments,
        create(&out.join("pruned_segments.jsonl"))?,
    )?;
    write_json(&out.join("prune_report.json"), &pruned.report)?;
    write_json(
        &out.join("config.json"),
        &PruneRun {
            command: "prune",
            segments: path,
            prune: cfg,
        },
    )?;
    eprintln!(
        "{} segments, {} tail steps dropped",
        pruned.report.emitted, pruned.report.dropped_tail_steps
    );
    Ok(())
}

fn labeled_corpus(dir: &Path) -> Result<Vec<LabeledTrajectory>> {
    read_corpus(dir)?
        .into_iter()
        .map(|t| LabeledTrajectory::from_trajectory(t).map_err(Into::into))
        .collect()
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Labeled corpus supplying the true boundaries.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Predicted boundary file from `segment`.
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    /// Segment file for length statistics (default: from the boundaries).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Matching tolerance in steps.
    #[arg(long)]
    pub tolerance: Option<i64>,
    /// Also run the four-arm ablation; needs --model and --gap.
    #[arg(long)]
    pub ablation: bool,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Segment length of the fixed baseline arm.
    #[arg(long)]
    pub fixed_len: Option<usize>,
}

#[derive(Serialize)]
struct EvaluateRun {
    command: &'static str,
    corpus: PathBuf,
    boundaries: Option<PathBuf>,
    segments: Option<PathBuf>,
    tolerance: i64,
    ablation: bool,
    model: Option<PathBuf>,
    gap: Option<f64>,
    window: usize,
    fixed_len: usize,
}

#[derive(Serialize)]
struct MetricsReport {
    summary: MetricSummary,
    per_trajectory: Vec<TrajectoryMetrics>,
}

#[derive(Serialize)]
struct TrajectoryMetrics {
    trajectory_id: String,
    #[serde(flatten)]
    metrics: BoundaryMetrics,
}

pub fn evaluate(common: &Common, a: EvaluateArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, "corpus")?;
    let tolerance = a.tolerance.unwrap_or(3);
    let window = a.window.unwrap_or(usize::MAX);
    let fixed_len = a.fixed_len.unwrap_or(128);
    if a.boundaries.is_none() && !a.ablation {
        return usage("nothing to evaluate: pass --boundaries and/or --ablation");
    }
    let corpus = labeled_corpus(&corpus_dir)?;
    let out = out_dir(&common.out);

    if let Some(path) = &a.boundaries {
        let predicted = read_boundary_sets(open(path)?)?;
        let mut per_trajectory = Vec::with_capacity(corpus.len());
        for lt in &corpus {
            let id = lt.trajectory.id.as_str();
            let p = predicted
                .iter()
                .find(|b| b.trajectory_id() == id)
                .cloned()
                .unwrap_or_else(|| BoundarySet::empty(id));
            per_trajectory.push(TrajectoryMetrics {
                trajectory_id: id.to_string(),
                metrics: boundary_metrics(&p, &lt.true_boundaries, tolerance)?,
            });
        }
        let all: Vec<BoundaryMetrics> = per_trajectory.iter().map(|t| t.metrics.clone()).collect();
        let report = MetricsReport {
            summary: aggregate_metrics(&all),
            per_trajectory,
        };
        write_json(&out.join("metrics.json"), &report)?;
        eprintln!(
            "precision {:.4} recall {:.4} F1 {:.4}",
            report.summary.precision, report.summary.recall, report.summary.f1
        );

        let segments = match &a.segments {
            Some(p) => read_segments(open(p)?)?,
            None => {
                let mut segs = Vec::new();
                for lt in &corpus {
                    let id = lt.trajectory.id.as_str();
                    let b = predicted
                        .iter()
                        .find(|b| b.trajectory_id() == id)
                        .cloned()
                        .unwrap_or_else(|| BoundarySet::empty(id));
                    segs.extend(segments_from_boundaries(lt.trajectory.len(), &b)?);
                }
                segs
            }
        };
        let stats: LengthStats = segment_length_stats(&segments)?;
        write_histogram_csv(&stats.histogram, create(&out.join("length_histogram.csv"))?)?;
        write_json(&out.join("lengths.json"), &stats)?;
    }

    if a.ablation {
        let model = load_model(&require(a.model.clone(), "model")?)?;
        let gap = require(a.gap, "gap")?;
        let base = DetectorConfig::new(gap, window, true, true);
        let rows = run_ablation(&corpus, &model, &base, fixed_len, tolerance)?;
        write_json(&out.join("ablation.json"), &rows)?;
        let mut w = create(&out.join("ablation.csv"))?;
        std::io::Write::write_all(&mut w, b"mode,precision,recall,f1\n")?;
        for r in &rows {
            let line = format!(
                "{},{},{},{}\n",
                r.mode, r.metrics.precision, r.metrics.recall, r.metrics.f1
            );
            std::io::Write::write_all(&mut w, line.as_bytes())?;
            eprintln!("{:<12} F1 {:.4}", r.mode, r.metrics.f1);
        }
        std::io::Write::flush(&mut w)?;
    }

    write_json(
        &out.join("config.json"),
        &EvaluateRun {
            command: "evaluate",
            corpus: corpus_dir,
            boundaries: a.boundaries,
            segments: a.segments,
            tolerance,
            ablation: a.ablation,
            model: a.model,
            gap: a.gap,
            window,
            fixed_len,
        },
    )?;
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyArgs {
    /// Corpus written by `generate` (needs library.json and config.json).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Overrides of the generator's parameters.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    /// Age buckets with fewer transition samples are not judged.
    #[arg(long)]
    pub min_bucket_samples: Option<usize>,
    /// Binomial standard errors allowed below each required rate.
    #[arg(long)]
    pub sigma_margin: Option<f64>,
    /// Randomly permute the transition labels (negative control).
    #[arg(long)]
    pub shuffle_labels: bool,
}

#[derive(Deserialize)]
struct StoredGenerateRun {
    generator: GeneratorConfig,
}

#[derive(Serialize)]
struct VerifyRun {
    command: &'static str,
    corpus: PathBuf,
    params: AssumptionParams,
    verify: VerifyConfig,
}

pub fn verify_bounds(common: &Common, a: VerifyArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, "corpus")?;
    let stored: StoredGenerateRun = read_json(&corpus_dir.join("config.json"))?;
    let library: Vec<SkillSpec> = read_json(&corpus_dir.join("library.json"))?;
    let g = stored.generator;
    let params = AssumptionParams {
        k: a.k.unwrap_or(g.k),
        c: a.c.unwrap_or(g.c),
        delta: a.delta.unwrap_or(g.delta),
        m: a.m.unwrap_or(g.m),
    };
    let defaults = VerifyConfig::default();
    let cfg = VerifyConfig {
        min_bucket_samples: a.min_bucket_samples.unwrap_or(defaults.min_bucket_samples),
        sigma_margin: a.sigma_margin.unwrap_or(defaults.sigma_margin),
        shuffle_seed: a.shuffle_labels.then(|| common.seed.unwrap_or(0)),
    };
    let oracle = oracle_from_library(&library, g.switch_prob())?;
    let corpus = labeled_corpus(&corpus_dir)?;
    let report = verify_theorem(&corpus, &oracle, &params, &cfg)?;

    let out = out_dir(&common.out);
    write_json(&out.join("verify_report.json"), &report)?;
    write_histogram_csv(
        &report.nontransition_hist,
        create(&out.join("ratio_hist_nontransition.csv"))?,
    )?;
    write_histogram_csv(
        &report.transition_hist,
        create(&out.join("ratio_hist_transition.csv"))?,
    )?;
    write_json(
        &out.join("config.json"),
        &VerifyRun {
            command: "verify-bounds",
            corpus: corpus_dir,
            params,
            verify: cfg,
        },
    )?;

    eprintln!(
        "non-transition: {:.5} of {} above {:.6} (need {:.5}) {}",
        report.nontransition.rate,
        report.nontransition.samples,
        report.bounds.lower_nontransition,
        report.nontransition.required - report.nontransition.margin,
        if report.nontransition.pass {
            "pass"
        } else {
            "FAIL"
        }
    );
    for b in &report.transition_buckets {
        eprintln!(
            "transition age {}-{}: {:.5} of {} below {:.6} (need {:.5}) {}",
            b.age_lo,
            b.age_hi,
            b.check.rate,
            b.check.samples,
            report.bounds.upper_transition,
            b.check.required - b.check.margin,
            match (b.evaluated, b.check.pass) {
                (false, _) => "not judged",
                (true, true) => "pass",
                (true, false) => "FAIL",
            }
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(VerificationFailed.into())
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Quantile of the excess distribution, in (0, 1].
    #[arg(long)]
    pub quantile: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Serialize)]
struct CalibrateRun {
    command: &'static str,
    corpus: PathBuf,
    model: PathBuf,
    quantile: f64,
    window: usize,
}

pub fn calibrate(common: &Common, a: CalibrateArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, "corpus")?;
    let model_path = require(a.model, "model")?;
    let quantile = a.quantile.unwrap_or(0.999);
    let window = a.window.unwrap_or(usize::MAX);
    let corpus = read_corpus(&corpus_dir)?;
    let model = load_model(&model_path)?;
    let cal = calibrate_gap(&corpus, &model, window, quantile)?;
    if cal.degenerate {
        eprintln!(
            "warning: every excess equals {}; the gap carries no information",
            cal.gap
        );
    }
    let out = out_dir(&common.out);
    write_json(&out.join("calibration.json"), &cal)?;
    write_json(
        &out.join("config.json"),
        &CalibrateRun {
            command: "calibrate",
            corpus: corpus_dir,
            model: model_path,
            quantile,
            window,
        },
    )?;
    println!("{}", cal.gap);
    Ok(())
}
