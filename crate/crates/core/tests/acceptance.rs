//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use irpatch::aggreg::aggregation_map;
use irpatch::harness::{
    self, compute_ap, recount_asr, ApRecord, ExperimentReport, RunConfig, THREADS_VAR,
};
use irpatch::imgcore::{CoverSpec, Mask};
use irpatch::optim::{run, OptimConfig, StopReason};
use irpatch::patchkit::{export_stencil, import_stencil, PatchStencil};
use irpatch::victim::{fixture_detector, generate_scene, SceneSpec, Scorer};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, limit: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    check(
        took < limit,
        format!(
            "{detail}; {:.2}s (limit {}s)",
            took.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn aggregation_oracle() -> Outcome {
    let start = Instant::now();
    let gap = aggregation_oracle_gap(100);
    let ones = aggregation_map(&Mask::ones(12, 12), None).map_err(|e| e.to_string())?;
    let interior = ones.c.get(6, 6);
    check(
        gap <= 1e-12 && interior == 3.0 / 7.0,
        format!("max gap {gap:.1e}, all-ones interior {interior}"),
    )?;
    within(
        start,
        Duration::from_secs(5),
        format!("max gap {gap:.1e}, all-ones interior = 3/7"),
    )
}

fn ring_identity() -> Outcome {
    let start = Instant::now();
    let gap = ring_identity_gap(1000);
    check(gap <= 1e-12, format!("max gap {gap:.1e}"))?;
    within(
        start,
        Duration::from_secs(1),
        format!("max gap {gap:.1e} over 1000 windows"),
    )
}

fn gradient_suites() -> Outcome {
    let start = Instant::now();
    let worst_of = |name: &str, f: &dyn Fn(u64) -> Option<f64>| -> Result<String, String> {
        let (mut n, mut worst, mut seed) = (0, 0.0f64, 0);
        while n < 20 && seed < 100 {
            if let Some(e) = f(seed) {
                worst = worst.max(e);
                n += 1;
            }
            seed += 1;
        }
        check(
            n == 20 && worst <= 1e-3,
            format!("{name} {worst:.1e} ({n} instances)"),
        )
    };
    let parts = [
        worst_of("agg", &|s| Some(agg_gradient_error(s)))?,
        worst_of("binary", &|s| Some(binary_gradient_error(s)))?,
        worst_of("attack", &attack_gradient_error)?,
        worst_of("total", &total_gradient_error)?,
    ];
    within(
        start,
        Duration::from_secs(30),
        format!("max rel err {}", parts.join(", ")),
    )
}

fn fixture_run(
    snapshot_every: Option<usize>,
) -> Result<(irpatch::optim::OptimOutcome, Mask, f64), String> {
    let (x, obj) = generate_scene(&SceneSpec::fixture(0)).map_err(|e| e.to_string())?;
    let det = fixture_detector();
    let clean = det.score(&x).map_err(|e| e.to_string())?.top1_score();
    let cfg = OptimConfig {
        snapshot_every,
        ..OptimConfig::default()
    };
    let cover = CoverSpec::new(RunConfig::default().cover_value).map_err(|e| e.to_string())?;
    let out = run(&det, &x, cover, &obj, &cfg).map_err(|e| e.to_string())?;
    Ok((out, obj, clean))
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let (out, _, clean) = fixture_run(None)?;
    let (again, _, _) = fixture_run(None)?;
    let score = out.detections.top1_score();
    let l1 = out.mask.l1_norm();
    let detail = format!(
        "clean {clean:.3}, {} after {} iterations, top-1 {score:.3}, |M|_1 {l1:.2} <= {:.2}",
        out.state.stop_reason.as_str(),
        out.state.t,
        out.epsilon_max
    );
    check(
        clean >= 0.9
            && out.state.stop_reason == StopReason::Converged
            && out.state.t <= 500
            && score <= 0.3
            && l1 <= out.epsilon_max
            && out.state.history == again.state.history,
        detail.clone(),
    )?;
    within(
        start,
        Duration::from_secs(60),
        format!("{detail}, deterministic"),
    )
}

fn asr(r: &ExperimentReport, arm: &str) -> f64 {
    r.arm(arm).map_or(f64::NAN, |a| a.asr())
}

fn placement_trend() -> Outcome {
    let cfg = RunConfig {
        n_scenes: 50,
        ..RunConfig::default()
    };
    let rep = harness::ablate_placement(&cfg).map_err(|e| e.to_string())?;
    let (opt, rnd, can, none) = (
        asr(&rep, "optimized"),
        asr(&rep, "random_location"),
        asr(&rep, "canonical_shape"),
        asr(&rep, "no_patch"),
    );
    check(
        opt > rnd && opt > can && can > none && none == 0.0,
        format!("ASR optimized {opt:.3}, random location {rnd:.3}, canonical shape {can:.3}, no patch {none:.3}"),
    )
}

fn loss_trend() -> Outcome {
    let cfg = RunConfig {
        n_scenes: 50,
        ..RunConfig::default()
    };
    let rep = harness::ablate_losses(&cfg).map_err(|e| e.to_string())?;
    let agg = |arm: &str| rep.arm(arm).map_or(f64::NAN, |a| a.mean_support());
    let (a_atk, a_full) = (agg("attack_only"), agg("full"));
    let (s_atk, s_full) = (asr(&rep, "attack_only"), asr(&rep, "full"));
    check(
        a_full >= 5.0 * a_atk && a_full > 0.0 && s_atk >= s_full,
        format!(
            "aggregation full {a_full:.4} vs attack-only {a_atk:.4}; ASR attack-only {s_atk:.2} vs full {s_full:.2}"
        ),
    )
}

fn aggregation_trend() -> Outcome {
    let (out, obj, _) = fixture_run(Some(10))?;
    let aggs: Vec<f64> = out
        .state
        .snapshots
        .iter()
        .map(|(_, m)| aggregation_map(m, Some(&obj)).map(|a| a.mean_support))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let tail = &aggs[aggs.len() / 2..];
    let worst_step = tail
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                (w[0] - w[1]) / w[0]
            } else {
                0.0
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let stencil =
        PatchStencil::from_continuous(&out.mask, 0.5, Some(&obj)).map_err(|e| e.to_string())?;
    let comps = stencil.components.len();
    check(
        worst_step <= 0.05 && comps <= 3,
        format!(
            "{} snapshots in the final half, largest relative drop {:.3}, {comps} components",
            tail.len(),
            worst_step.max(0.0)
        ),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| {
            (
                p.strip_prefix(dir).unwrap().display().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = |e: irpatch::Error| e.to_string();
    let mut cfg = RunConfig {
        n_scenes: 4,
        n_random: 3,
        ..RunConfig::default()
    };
    cfg.optim.snapshot_every = Some(50);
    let mut runs = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        std::env::set_var(THREADS_VAR, threads);
        let dir = tmp.path().join(format!("run{k}"));
        harness::optimize(&cfg, &dir).map_err(err)?;
        harness::ablate_placement(&cfg)
            .map_err(err)?
            .write(&dir)
            .map_err(err)?;
        harness::ablate_losses(&cfg)
            .map_err(err)?
            .write(&dir)
            .map_err(err)?;
        harness::defend_smooth(&cfg)
            .map_err(err)?
            .write(&dir)
            .map_err(err)?;
        harness::eval_ap(&cfg)
            .map_err(err)?
            .write(&dir)
            .map_err(err)?;
        runs.push(read_dir_bytes(&dir));
    }
    std::env::remove_var(THREADS_VAR);
    check(
        runs[0] == runs[1],
        format!("{} artifacts differ between reruns", runs[0].len()),
    )?;

    let csv = tmp.path().join("run0/ablate_placement_records.csv");
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let recount = recount_asr(&text).map_err(err)?;
    let summary = std::fs::read_to_string(tmp.path().join("run0/ablate_placement_summary.txt"))
        .map_err(|e| e.to_string())?;
    let consistent = recount
        .iter()
        .all(|(arm, v)| summary.contains(&format!("{arm}.asr = {v}\n")));
    check(
        consistent,
        "summary ASR differs from the CSV recount".into(),
    )?;

    let stencil = import_stencil(&tmp.path().join("run0/stencil.pbm"), None).map_err(err)?;
    let again = tmp.path().join("again.pbm");
    export_stencil(&stencil, &again).map_err(err)?;
    let same = std::fs::read(&again).ok()
        == std::fs::read(tmp.path().join("run0/stencil.pbm")).ok()
        && std::fs::read(again.with_extension("manifest.txt")).ok()
            == std::fs::read(tmp.path().join("run0/stencil.manifest.txt")).ok();
    check(
        same,
        format!(
            "{} artifacts byte-identical across reruns and worker counts; ASR recount matches; stencil round-trips",
            runs[0].len()
        ),
    )
}

fn ap_machinery() -> Outcome {
    let rec = |score: f64, positive: bool| ApRecord {
        score,
        positive,
        matched: positive,
    };
    let separable: Vec<_> = (0..25)
        .map(|i| rec(0.99 - 0.01 * i as f64, true))
        .chain((0..25).map(|i| rec(0.5 - 0.01 * i as f64, false)))
        .collect();
    let uniform: Vec<_> = (0..50).map(|i| rec(0.6, i % 2 == 0)).collect();
    let (a, b) = (compute_ap(&separable), compute_ap(&uniform));
    check(
        a == Some(1.0) && b == Some(0.5),
        format!("separable {a:?}, uniform half-positive {b:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("aggregation oracle equivalence", aggregation_oracle),
        ("ring-edge identity", ring_identity),
        ("gradient suites", gradient_suites),
        ("end-to-end convergence fixture", convergence),
        ("placement ablation ordering", placement_trend),
        ("loss ablation direction", loss_trend),
        ("aggregation grows while shrinking", aggregation_trend),
        ("determinism and formats", determinism),
        ("AP machinery", ap_machinery),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
