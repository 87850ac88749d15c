//! Experiment commands. Scenes are processed in parallel; every scene's
//! work depends only on its seed, so reports are identical for any worker
//! count.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Detector, RunConfig};
use super::metrics::{compute_ap, median_filter, ApRecord};
use super::report::{ExperimentReport, SceneRecord};
use super::shapes::{canonical_patch, centroid, translate, valid_offsets, CanonicalShape};
use crate::aggreg::aggregation_map;
use crate::error::{Error, Result};
use crate::imgcore::{compose_adversarial, pnm, CoverSpec, GrayImage, Mask};
use crate::optim::{self, HistoryRecord, OptimConfig, OptimOutcome, StopReason};
use crate::patchkit::{export_stencil, PatchStencil};
use crate::victim::{generate_scene, VictimModel};

pub const THREADS_VAR: &str = "IRPATCH_THREADS";

/// Worker pool sized by `IRPATCH_THREADS` when set, else by rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config {
            key: THREADS_VAR.into(),
            message: format!("expected a worker count, got `{v}`"),
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))
}

fn par_scenes<T: Send>(cfg: &RunConfig, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let base = cfg.optim.seed;
    worker_pool()?.install(|| {
        (0..cfg.n_scenes as u64)
            .into_par_iter()
            .map(|i| f(base.wrapping_add(i)))
            .collect()
    })
}

struct Scene {
    seed: u64,
    x: GrayImage,
    m_obj: Mask,
    model: Box<dyn VictimModel>,
    clean: f64,
}

fn load_scene(cfg: &RunConfig, det: &Detector, seed: u64) -> Result<Scene> {
    let (x, m_obj) = generate_scene(&cfg.suite_scene(seed))?;
    let model = det.model(&m_obj)?;
    let clean = model.score(&x)?.top1_score();
    Ok(Scene {
        seed,
        x,
        m_obj,
        model,
        clean,
    })
}

struct Optimized {
    outcome: OptimOutcome,
    stencil: PatchStencil,
}

fn optimize_scene(cfg: &RunConfig, scene: &Scene, optim: &OptimConfig) -> Result<Optimized> {
    let optim = OptimConfig {
        seed: scene.seed,
        ..optim.clone()
    };
    let outcome = optim::run(
        scene.model.as_ref(),
        &scene.x,
        cfg.cover()?,
        &scene.m_obj,
        &optim,
    )?;
    let stencil =
        PatchStencil::from_continuous(&outcome.mask, cfg.binarize_threshold, Some(&scene.m_obj))?;
    Ok(Optimized { outcome, stencil })
}

/// Scores `scene` with `patch` applied and fills a record.
fn patched_record(
    arm: &str,
    variant: usize,
    scene: &Scene,
    cover: CoverSpec,
    patch: &Mask,
    s_thr: f64,
    iterations: usize,
) -> Result<SceneRecord> {
    let x_adv = compose_adversarial(&scene.x, cover, patch)?;
    let adv_score = scene.model.score(&x_adv)?.top1_score();
    let agg = aggregation_map(patch, Some(&scene.m_obj))?;
    let components = if patch.is_binary() {
        crate::patchkit::connected_components(patch)?.len()
    } else {
        0
    };
    Ok(SceneRecord {
        arm: arm.to_owned(),
        variant,
        seed: scene.seed,
        clean_score: scene.clean,
        adv_score,
        attacked: adv_score <= s_thr,
        mask_l1: patch.l1_norm(),
        aggregation_support: agg.mean_support,
        aggregation_literal: agg.mean_literal,
        components,
        iterations,
    })
}

fn split_arms(
    names: &[&str],
    per_scene: Vec<Vec<Vec<SceneRecord>>>,
) -> Vec<(String, Vec<SceneRecord>)> {
    let mut arms: Vec<(String, Vec<SceneRecord>)> =
        names.iter().map(|n| (n.to_string(), Vec::new())).collect();
    for scene in per_scene {
        for (slot, recs) in arms.iter_mut().zip(scene) {
            slot.1.extend(recs);
        }
    }
    arms
}

pub const PLACEMENT_ARMS: [&str; 4] = [
    "optimized",
    "random_location",
    "canonical_shape",
    "no_patch",
];

/// Shape and location ablation. Every arm is scored with a binary patch:
/// the optimized stencil, that stencil translated to `n_random` uniformly
/// drawn positions inside the object, the five canonical shapes of the
/// same area centered on the stencil, and no patch.
pub fn ablate_placement(cfg: &RunConfig) -> Result<ExperimentReport> {
    let det = cfg.detector()?;
    let cover = cfg.cover()?;
    let s_thr = cfg.optim.s_thr;
    let per_scene = par_scenes(cfg, |seed| {
        let scene = load_scene(cfg, &det, seed)?;
        let opt = optimize_scene(cfg, &scene, &cfg.optim)?;
        let iters = opt.outcome.state.t;
        let stencil = &opt.stencil.grid;
        let optimized = vec![patched_record(
            "optimized",
            0,
            &scene,
            cover,
            stencil,
            s_thr,
            iters,
        )?];

        let offsets = valid_offsets(stencil, &scene.m_obj)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ff5_e75e);
        let mut random = Vec::with_capacity(cfg.n_random);
        for k in 0..cfg.n_random {
            let patch = if offsets.is_empty() {
                stencil.clone()
            } else {
                let (dr, dc) = offsets[rng.gen_range(0..offsets.len())];
                translate(stencil, dr, dc)
            };
            random.push(patched_record(
                "random_location",
                k,
                &scene,
                cover,
                &patch,
                s_thr,
                iters,
            )?);
        }

        let mut canonical = Vec::with_capacity(CanonicalShape::ALL.len());
        let area = opt.stencil.total_area;
        let center = centroid(stencil);
        for (k, shape) in CanonicalShape::ALL.iter().enumerate() {
            let patch = match center {
                Some(c) => canonical_patch(*shape, c, area, &scene.m_obj)?,
                None => Mask::zeros(scene.x.height(), scene.x.width()),
            };
            canonical.push(patched_record(
                "canonical_shape",
                k,
                &scene,
                cover,
                &patch,
                s_thr,
                iters,
            )?);
        }

        let empty = Mask::zeros(scene.x.height(), scene.x.width());
        let none = vec![patched_record(
            "no_patch", 0, &scene, cover, &empty, s_thr, 0,
        )?];
        Ok(vec![optimized, random, canonical, none])
    })?;
    let mut report = ExperimentReport::new("ablate-placement", s_thr, cfg.optim.seed, cfg.n_scenes);
    for (name, recs) in split_arms(&PLACEMENT_ARMS, per_scene) {
        report.push_arm(&name, recs);
    }
    report
        .extras
        .push(("n_random".into(), cfg.n_random.to_string()));
    let shapes: Vec<&str> = CanonicalShape::ALL.iter().map(|s| s.name()).collect();
    report
        .extras
        .push(("canonical_shapes".into(), shapes.join(",")));
    Ok(report)
}

pub const LOSS_ARMS: [&str; 3] = ["attack_only", "attack_binary", "full"];

/// Loss ablation on paired scenes: attack loss alone, with the binary
/// regularizer, and with both regularizers. Scored on the binarized
/// stencil of each run.
pub fn ablate_losses(cfg: &RunConfig) -> Result<ExperimentReport> {
    let det = cfg.detector()?;
    let cover = cfg.cover()?;
    let s_thr = cfg.optim.s_thr;
    let variants = [
        OptimConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..cfg.optim.clone()
        },
        OptimConfig {
            lambda2: 0.0,
            ..cfg.optim.clone()
        },
        cfg.optim.clone(),
    ];
    let per_scene = par_scenes(cfg, |seed| {
        let scene = load_scene(cfg, &det, seed)?;
        variants
            .iter()
            .zip(LOSS_ARMS)
            .map(|(optim, name)| {
                let opt = optimize_scene(cfg, &scene, optim)?;
                let rec = patched_record(
                    name,
                    0,
                    &scene,
                    cover,
                    &opt.stencil.grid,
                    s_thr,
                    opt.outcome.state.t,
                )?;
                Ok(vec![rec])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut report = ExperimentReport::new("ablate-losses", s_thr, cfg.optim.seed, cfg.n_scenes);
    for (name, recs) in split_arms(&LOSS_ARMS, per_scene) {
        report.push_arm(&name, recs);
    }
    Ok(report)
}

pub const DEFENSE_ARMS: [&str; 3] = ["undefended", "smoothed", "clean_smoothed"];

/// Median-smoothing defense. `clean_smoothed` scores the smoothed clean
/// image with no patch; its non-attacked fraction is the clean detection
/// rate after smoothing.
pub fn defend_smooth(cfg: &RunConfig) -> Result<ExperimentReport> {
    let det = cfg.detector()?;
    let cover = cfg.cover()?;
    let s_thr = cfg.optim.s_thr;
    let k = cfg.smooth_kernel;
    let per_scene = par_scenes(cfg, |seed| {
        let scene = load_scene(cfg, &det, seed)?;
        let opt = optimize_scene(cfg, &scene, &cfg.optim)?;
        let iters = opt.outcome.state.t;
        let patch = &opt.stencil.grid;
        let undefended = patched_record("undefended", 0, &scene, cover, patch, s_thr, iters)?;

        let x_adv = compose_adversarial(&scene.x, cover, patch)?;
        let smooth_score = scene.model.score(&median_filter(&x_adv, k)?)?.top1_score();
        let smoothed = SceneRecord {
            arm: "smoothed".into(),
            adv_score: smooth_score,
            attacked: smooth_score <= s_thr,
            ..undefended.clone()
        };

        let clean_score = scene
            .model
            .score(&median_filter(&scene.x, k)?)?
            .top1_score();
        let empty = Mask::zeros(scene.x.height(), scene.x.width());
        let mut clean = patched_record("clean_smoothed", 0, &scene, cover, &empty, s_thr, 0)?;
        clean.adv_score = clean_score;
        clean.attacked = clean_score <= s_thr;
        Ok(vec![vec![undefended], vec![smoothed], vec![clean]])
    })?;
    let mut report = ExperimentReport::new("defend", s_thr, cfg.optim.seed, cfg.n_scenes);
    for (name, recs) in split_arms(&DEFENSE_ARMS, per_scene) {
        report.push_arm(&name, recs);
    }
    let clean_rate = 1.0 - report.arm("clean_smoothed").map_or(0.0, |a| a.asr());
    report.extras.push(("smooth_kernel".into(), k.to_string()));
    report
        .extras
        .push(("clean_detection_rate".into(), clean_rate.to_string()));
    Ok(report)
}

pub const AP_ARMS: [&str; 3] = ["clean", "adversarial", "background"];

fn fmt_ap(ap: Option<f64>) -> String {
    ap.map_or_else(|| "absent".to_string(), |v| v.to_string())
}

/// AP of the detector on clean and on patched scenes. Each scene also
/// contributes its target-free background as a negative. A top-1 score at
/// or below `s_thr` is treated as no detection, so it can never be a true
/// positive.
pub fn eval_ap(cfg: &RunConfig) -> Result<ExperimentReport> {
    let det = cfg.detector()?;
    let cover = cfg.cover()?;
    let s_thr = cfg.optim.s_thr;
    let per_scene = par_scenes(cfg, |seed| {
        let spec = cfg.suite_scene(seed);
        let scene = load_scene(cfg, &det, seed)?;
        let truth = spec
            .blob_box()
            .ok_or_else(|| Error::Precondition("AP needs scenes with a target".into()))?;
        let opt = optimize_scene(cfg, &scene, &cfg.optim)?;
        let patch = &opt.stencil.grid;
        let x_adv = compose_adversarial(&scene.x, cover, patch)?;
        let (bg, _) = generate_scene(&spec.without_blob())?;

        let mut recs = Vec::with_capacity(3);
        let mut aps = Vec::with_capacity(3);
        for (arm, img, positive) in [
            ("clean", &scene.x, true),
            ("adversarial", &x_adv, true),
            ("background", &bg, false),
        ] {
            let dets = scene.model.score(img)?;
            let top = dets.top1();
            aps.push(ApRecord {
                score: top.score,
                positive,
                matched: positive && top.score > s_thr && top.bbox.iou(&truth) >= cfg.iou_threshold,
            });
            let applied = if arm == "adversarial" {
                patch.clone()
            } else {
                Mask::zeros(scene.x.height(), scene.x.width())
            };
            let mut rec =
                patched_record(arm, 0, &scene, cover, &applied, s_thr, opt.outcome.state.t)?;
            rec.adv_score = top.score;
            rec.attacked = top.score <= s_thr;
            recs.push(rec);
        }
        Ok((recs, aps))
    })?;
    let mut report = ExperimentReport::new("eval-ap", s_thr, cfg.optim.seed, cfg.n_scenes);
    let mut arms: Vec<Vec<SceneRecord>> = vec![Vec::new(); 3];
    let (mut clean_ap, mut adv_ap) = (Vec::new(), Vec::new());
    for (recs, aps) in per_scene {
        for (slot, rec) in arms.iter_mut().zip(recs) {
            slot.push(rec);
        }
        clean_ap.extend([aps[0], aps[2]]);
        adv_ap.extend([aps[1], aps[2]]);
    }
    for (name, recs) in AP_ARMS.iter().zip(arms) {
        report.push_arm(name, recs);
    }
    report
        .extras
        .push(("iou_threshold".into(), cfg.iou_threshold.to_string()));
    report
        .extras
        .push(("ap_clean".into(), fmt_ap(compute_ap(&clean_ap))));
    report
        .extras
        .push(("ap_adversarial".into(), fmt_ap(compute_ap(&adv_ap))));
    Ok(report)
}

/// What `optimize` wrote and how the run ended.
#[derive(Clone, Debug)]
pub struct OptimizeSummary {
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub clean_score: f64,
    pub adv_score: f64,
    pub mask_l1: f64,
    pub epsilon_max: f64,
    pub stencil_area: usize,
    pub components: usize,
    pub aggregation: f64,
}

impl OptimizeSummary {
    pub fn exit_code(&self) -> i32 {
        match self.stop_reason {
            StopReason::Converged => 0,
            _ => 2,
        }
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "stop_reason = {}", self.stop_reason.as_str());
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "clean_score = {}", self.clean_score);
        let _ = writeln!(out, "adv_score = {}", self.adv_score);
        let _ = writeln!(out, "mask_l1 = {}", self.mask_l1);
        let _ = writeln!(out, "epsilon_max = {}", self.epsilon_max);
        let _ = writeln!(out, "stencil_area = {}", self.stencil_area);
        let _ = writeln!(out, "components = {}", self.components);
        let _ = writeln!(out, "aggregation = {}", self.aggregation);
        out
    }
}

pub fn history_csv(history: &[HistoryRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HistoryRecord::CSV_HEADER.split(','))
        .expect("in-memory write");
    for (t, h) in history.iter().enumerate() {
        w.write_record([
            (t + 1).to_string(),
            h.attack.to_string(),
            h.binary.to_string(),
            h.agg.to_string(),
            h.top1.to_string(),
            h.mask_l1.to_string(),
            h.aggregation.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the optimizer on the configured scene and writes `mask.pgm`,
/// `adversarial.pgm`, `stencil.pbm` with its manifest, `history.csv`,
/// `summary.txt` and, when enabled, `snapshots/snapshot_<t>.pgm` into `out`.
pub fn optimize(cfg: &RunConfig, out: &Path) -> Result<OptimizeSummary> {
    let det = cfg.detector()?;
    let (x, m_obj) = generate_scene(&cfg.scene)?;
    let model = det.model(&m_obj)?;
    let clean_score = model.score(&x)?.top1_score();
    let outcome = optim::run(model.as_ref(), &x, cfg.cover()?, &m_obj, &cfg.optim)?;
    let stencil =
        PatchStencil::from_continuous(&outcome.mask, cfg.binarize_threshold, Some(&m_obj))?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    pnm::write_pgm(
        &out.join("mask.pgm"),
        &GrayImage::new(outcome.mask.grid().clone())?,
    )?;
    pnm::write_pgm(&out.join("adversarial.pgm"), &outcome.x_adv)?;
    export_stencil(&stencil, &out.join("stencil.pbm"))?;
    write_file(
        &out.join("history.csv"),
        history_csv(&outcome.state.history),
    )?;
    if !outcome.state.snapshots.is_empty() {
        let dir = out.join("snapshots");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (t, m) in &outcome.state.snapshots {
            let img = GrayImage::new(m.grid().clone())?;
            pnm::write_pgm(&dir.join(format!("snapshot_{t:05}.pgm")), &img)?;
        }
    }

    let summary = OptimizeSummary {
        stop_reason: outcome.state.stop_reason,
        iterations: outcome.state.t,
        clean_score,
        adv_score: outcome.detections.top1_score(),
        mask_l1: outcome.mask.l1_norm(),
        epsilon_max: outcome.epsilon_max,
        stencil_area: stencil.total_area,
        components: stencil.components.len(),
        aggregation: stencil.aggregation_final,
    };
    write_file(&out.join("summary.txt"), summary.to_key_values())?;
    Ok(summary)
}
