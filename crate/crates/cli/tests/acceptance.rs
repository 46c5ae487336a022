//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use sbd_core::analysis::{
    calibrate_gap, length_stats, run_ablation, theorem_bounds, verify_theorem, AssumptionParams,
    VerifyConfig,
};
use sbd_core::synth::{Generator, GeneratorConfig};
use sbd_core::{
    detect_boundaries, mark_event_indicators, prune_lengths, train_count_predictor, DetectorConfig,
    EventSet, IndicatorTrack, PolicyTable, PredictorModel, PruneConfig, TailPolicy, Trajectory,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ac1_prune_fixture() -> Outcome {
    let start = Instant::now();
    let out = prune_lengths(&[12, 12, 6, 196, 37], &PruneConfig::new(15, 200))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        out.lengths == [24, 200, 39] && elapsed < Duration::from_millis(1),
        format!("{:?} in {elapsed:?}", out.lengths),
    )
}

fn events(names: &[&str]) -> EventSet {
    let mut set = EventSet::new();
    for n in names {
        set.insert(*n);
    }
    set
}

fn trajectory_with_events(sets: Vec<EventSet>) -> Trajectory {
    let n = sets.len();
    let mut t = Trajectory::from_tokens("fixture", 1, 1, &vec![0; n], &vec![0; n]);
    for (step, e) in t.steps.iter_mut().zip(sets) {
        step.events = e;
    }
    t
}

fn ac2_event_fixture() -> Outcome {
    let iron = events(&["use_item:iron_pickaxe", "mine_block:iron_ore"]);
    let diamond = events(&["use_item:iron_pickaxe", "mine_block:diamond_ore"]);
    let torch = events(&["use_item:torch"]);
    let t = trajectory_with_events(vec![iron.clone(), iron, diamond, torch.clone(), torch]);
    let marked = mark_event_indicators(&t, 16).positions();

    let mut sets = vec![EventSet::new(); 40];
    sets[4] = events(&["kill_entity:zombie"]);
    sets[30] = events(&["kill_entity:skeleton"]);
    let kills = mark_event_indicators(&trajectory_with_events(sets), 16).positions();

    check(
        marked == [1, 2, 4] && kills == [20, 39],
        format!("positives {marked:?}, kill flags {kills:?} (T=40)"),
    )
}

fn ac3_bound_formulas() -> Outcome {
    let (k, c, m) = (100.0f64, 0.9f64, 0.1f64);
    let b = theorem_bounds(&AssumptionParams {
        k,
        c,
        delta: 0.01,
        m,
    })
    .map_err(|e| e.to_string())?;
    let lower = (k - 1.0) * c / k;
    let upper = k * m / (2.0 * (k - 1.0)) + 1.0 / (c * (k - 1.0));
    check(
        (b.lower_nontransition - lower).abs() < 1e-9
            && (b.lower_nontransition - 0.891).abs() < 1e-9
            && (b.upper_transition - upper).abs() < 1e-9
            && (b.upper_transition - 0.061728).abs() < 1e-6
            && b.separated,
        format!(
            "lower {:.9} upper {:.9} separated {}",
            b.lower_nontransition, b.upper_transition, b.separated
        ),
    )
}

fn ac4_monte_carlo() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| {
        let start = Instant::now();
        let cfg = GeneratorConfig::bound_check();
        let g = Generator::new(cfg.clone()).map_err(|e| e.to_string())?;
        let corpus = g.corpus(0..100);
        let oracle = g.oracle().map_err(|e| e.to_string())?;
        let params = cfg.assumption_params();
        let report = verify_theorem(&corpus, &oracle, &params, &VerifyConfig::default())
            .map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let shuffled = verify_theorem(
            &corpus,
            &oracle,
            &params,
            &VerifyConfig {
                shuffle_seed: Some(1),
                ..VerifyConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let judged = report
            .transition_buckets
            .iter()
            .filter(|b| b.evaluated)
            .count();
        let evaluated = report.nontransition.samples
            + report
                .transition_buckets
                .iter()
                .map(|b| b.check.samples)
                .sum::<usize>();
        check(
            report.passed
                && judged > 0
                && evaluated >= 100_000
                && !shuffled.passed
                && elapsed <= Duration::from_secs(60),
            format!(
                "non-transition {:.5} (need {:.5}), {judged} age buckets judged, \
                 {evaluated} steps, shuffled control passed={}, {elapsed:.2?} on one thread",
                report.nontransition.rate,
                report.nontransition.required - report.nontransition.margin,
                shuffled.passed
            ),
        )
    })
}

fn ac5_hand_trace() -> Outcome {
    let (p1, p30) = ((-1.0f64).exp(), (-30.0f64).exp());
    let mut policy =
        PolicyTable::from_rows(&[vec![p1, p30, 1.0 - p1 - p30]]).map_err(|e| e.to_string())?;
    let t = Trajectory::from_tokens("trace", 1, 3, &[0, 0, 0, 0], &[0, 0, 0, 1]);
    let d = detect_boundaries(
        &t,
        &mut policy,
        &DetectorConfig::loss_only(18.0, usize::MAX),
        &IndicatorTrack::none(4),
    )
    .map_err(|e| e.to_string())?;
    let idx = d.boundaries.indices();
    let excess = d.excesses[3];
    check(
        idx == [3] && (excess - 21.75).abs() < 1e-9,
        format!("boundaries {idx:?}, excess at step 4 {excess:.6}"),
    )
}

fn ac6_segmentation_quality() -> Outcome {
    let start = Instant::now();
    let g = Generator::new(GeneratorConfig {
        seed: 7,
        ..GeneratorConfig::segmentation_suite()
    })
    .map_err(|e| e.to_string())?;
    let test = g.corpus(0..100);
    let train: Vec<Trajectory> = g
        .corpus(100..200)
        .into_iter()
        .map(|l| l.trajectory)
        .collect();
    let model = train_count_predictor(&train, 1, 1.0).map_err(|e| e.to_string())?;
    let window = 4096;
    let cal = calibrate_gap(&train, &model, window, 0.999).map_err(|e| e.to_string())?;
    let base = DetectorConfig::new(cal.gap, window, true, true);
    let rows = run_ablation(&test, &model, &base, 128, 3).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let f1 = |mode: &str| {
        rows.iter()
            .find(|r| r.mode == mode)
            .map(|r| r.metrics.f1)
            .unwrap_or(f64::NAN)
    };
    let (fixed, info, loss, both) = (f1("fixed:128"), f1("info"), f1("loss"), f1("both"));
    check(
        loss - fixed >= 0.30 && both >= info && elapsed <= Duration::from_secs(300),
        format!(
            "gap {:.3}; F1 fixed {fixed:.3} info {info:.3} loss {loss:.3} both {both:.3}; {elapsed:.2?}",
            cal.gap
        ),
    )
}

fn ac7_monotone_gap() -> Outcome {
    let g = Generator::new(GeneratorConfig {
        seed: 21,
        horizon: 600,
        ..GeneratorConfig::segmentation_suite()
    })
    .map_err(|e| e.to_string())?;
    let test: Vec<Trajectory> = g.corpus(0..20).into_iter().map(|l| l.trajectory).collect();
    let train: Vec<Trajectory> = g.corpus(20..40).into_iter().map(|l| l.trajectory).collect();
    let model = train_count_predictor(&train, 1, 1.0).map_err(|e| e.to_string())?;
    let gaps = [0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0];
    let mut violations = Vec::new();
    let mut first_last = (0, 0);
    for traj in &test {
        let mut counts = Vec::with_capacity(gaps.len());
        for &gap in &gaps {
            let mut s = model.session(usize::MAX);
            let d = detect_boundaries(
                traj,
                &mut s,
                &DetectorConfig::loss_only(gap, usize::MAX),
                &IndicatorTrack::none(traj.len()),
            )
            .map_err(|e| e.to_string())?;
            counts.push(d.boundaries.len());
        }
        first_last.0 += counts[0];
        first_last.1 += counts[gaps.len() - 1];
        if !counts.windows(2).all(|w| w[0] >= w[1]) {
            violations.push(format!("{} {counts:?}", traj.id));
        }
    }
    check(
        violations.is_empty(),
        format!(
            "20 trajectories x 10 gaps, total boundaries {} -> {}; violations {violations:?}",
            first_last.0, first_last.1
        ),
    )
}

fn ac8_prune_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..10_000 {
        let min = rng.random_range(1..40usize);
        let max = rng.random_range(min..400usize);
        let n = rng.random_range(1..60usize);
        let lengths: Vec<usize> = (0..n).map(|_| rng.random_range(1..500)).collect();
        let keep = rng.random_bool(0.5);
        let cfg = PruneConfig {
            min_len: min,
            max_len: max,
            tail_policy: if keep {
                TailPolicy::KeepFlagged
            } else {
                TailPolicy::Drop
            },
        };
        let out = prune_lengths(&lengths, &cfg).map_err(|e| e.to_string())?;
        let total: usize = lengths.iter().sum();
        let emitted: usize = out.lengths.iter().sum();
        if emitted + out.dropped_tail_steps() != total {
            return Err(format!("case {case}: steps not conserved for {lengths:?}"));
        }
        let body = match out.tail {
            Some(t) if t.kept => &out.lengths[..out.lengths.len() - 1],
            _ => &out.lengths[..],
        };
        if body.iter().any(|&l| l < min || l > max) {
            return Err(format!(
                "case {case}: length outside [{min}, {max}]: {:?}",
                out.lengths
            ));
        }
        if out.tail.is_some_and(|t| t.len >= min) {
            return Err(format!(
                "case {case}: tail of {} reached min {min}",
                out.tail.unwrap().len
            ));
        }
    }
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(10),
        format!("10000 random lists, conservation and bounds hold, {elapsed:.2?}"),
    )
}

fn run_sbd(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sbd"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "sbd {args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn ac9_determinism() -> Outcome {
    let runs: Vec<tempfile::TempDir> = (0..2)
        .map(|_| tempfile::TempDir::new())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for dir in &runs {
        let d = dir.path();
        run_sbd(
            d,
            &[
                "--seed",
                "11",
                "generate",
                "--preset",
                "segmentation",
                "--n",
                "6",
                "--horizon",
                "800",
                "--out",
                "corpus",
            ],
        )?;
        run_sbd(d, &["train", "--corpus", "corpus", "--out", "model"])?;
        run_sbd(
            d,
            &[
                "segment",
                "--corpus",
                "corpus",
                "--model",
                "model/model.json",
                "--mode",
                "both",
                "--gap",
                "3.5",
                "--out",
                "seg",
            ],
        )?;
        run_sbd(
            d,
            &[
                "--seed",
                "11",
                "segment",
                "--corpus",
                "corpus",
                "--mode",
                "uniform:20:300",
                "--out",
                "uni",
            ],
        )?;
    }
    let a = tree_bytes(runs[0].path());
    let b = tree_bytes(runs[1].path());
    check(
        a == b && a.len() > 10,
        format!("{} output files compared across two runs", a.len()),
    )
}

fn ac10_lognormal_lengths() -> Outcome {
    let (mu, sigma, n) = (4.0, 0.8, 100_000usize);
    let dist = LogNormal::<f64>::new(mu, sigma).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let lengths: Vec<usize> = (0..n)
        .map(|_| dist.sample(&mut rng).round().max(1.0) as usize)
        .collect();
    let s = length_stats(&lengths).map_err(|e| e.to_string())?;
    let se_mean = sigma / (n as f64).sqrt();
    let se_std = sigma / (2.0 * n as f64).sqrt();
    check(
        (s.log_mean - mu).abs() < 3.0 * se_mean && (s.log_std - sigma).abs() < 3.0 * se_std,
        format!(
            "log-mean {:.4} (tol {:.4}), log-std {:.4} (tol {:.4})",
            s.log_mean,
            3.0 * se_mean,
            s.log_std,
            3.0 * se_std
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("AC1", "pruning fixture", ac1_prune_fixture),
        ("AC2", "event marking fixture", ac2_event_fixture),
        ("AC3", "bound formulas", ac3_bound_formulas),
        ("AC4", "bound Monte Carlo", ac4_monte_carlo),
        ("AC5", "detector hand trace", ac5_hand_trace),
        ("AC6", "segmentation quality", ac6_segmentation_quality),
        ("AC7", "monotone gap", ac7_monotone_gap),
        ("AC8", "pruning properties", ac8_prune_properties),
        ("AC9", "CLI determinism", ac9_determinism),
        ("AC10", "length statistics", ac10_lognormal_lengths),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let outcome =
            catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
