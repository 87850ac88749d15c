//! Flat key-value run configuration.
//!
//! The file is TOML restricted to top-level scalars. Every key is optional;
//! a missing key takes its default and is logged. Unknown keys and values of
//! the wrong type are errors naming the key.

use std::path::{Path, PathBuf};

use toml::Value;

use crate::error::{Error, Result};
use crate::imgcore::{pnm, CoverSpec, Mask};
use crate::optim::OptimConfig;
use crate::victim::{
    finite_difference_adapter, CommandScorer, SceneSpec, SuiteSpec, TemplateDetector, TemplateSpec,
    VictimModel,
};

/// Where the victim detector comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DetectorSource {
    /// The procedural template with optional bias and stride overrides.
    Procedural(TemplateSpec),
    /// Template weights `scale * (v - offset)` read from an 8-bit PGM.
    Pgm {
        path: PathBuf,
        scale: f64,
        offset: f64,
        bias: f64,
        stride: usize,
    },
    /// External scorer differentiated by central differences on M_obj.
    Command { line: String, fd_step: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub optim: OptimConfig,
    pub cover_value: f64,
    /// Base scene; its seed is replaced per run.
    pub scene: SceneSpec,
    pub suite: SuiteSpec,
    pub detector: DetectorSource,
    pub n_scenes: usize,
    pub n_random: usize,
    pub smooth_kernel: usize,
    pub iou_threshold: f64,
    pub binarize_threshold: f64,
    /// Keys that were absent from the file, in canonical order.
    pub defaulted: Vec<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            optim: OptimConfig::default(),
            cover_value: 0.4,
            scene: SceneSpec::fixture(0),
            suite: SuiteSpec::default(),
            detector: DetectorSource::Procedural(TemplateSpec::default()),
            n_scenes: 50,
            n_random: 10,
            smooth_kernel: 3,
            iou_threshold: 0.5,
            binarize_threshold: 0.5,
            defaulted: Vec::new(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "mu",
    "epsilon_step",
    "max_iters",
    "epsilon_max",
    "epsilon_max_fraction",
    "s_thr",
    "gauss_size",
    "gauss_sigma",
    "seed",
    "v_thre",
    "alpha",
    "snapshot_every",
    "cover_value",
    "scene_height",
    "scene_width",
    "background",
    "noise_amplitude",
    "blob_center_row",
    "blob_center_col",
    "blob_semi_axis_rows",
    "blob_semi_axis_cols",
    "blob_intensity",
    "suite_max_shift",
    "suite_intensity_min",
    "suite_intensity_max",
    "template_pgm",
    "template_scale",
    "template_offset",
    "template_bias",
    "template_stride",
    "scorer_command",
    "fd_step",
    "n_scenes",
    "n_random",
    "smooth_kernel",
    "iou_threshold",
    "binarize_threshold",
];

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_owned(),
        message: message.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(bad(
            key,
            format!("expected a number, got {}", other.type_str()),
        )),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(bad(
            key,
            format!("expected a non-negative integer, got {i}"),
        )),
        other => Err(bad(
            key,
            format!("expected an integer, got {}", other.type_str()),
        )),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| bad(key, format!("expected a string, got {}", v.type_str())))
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Parses `text`; relative file paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            key: "<file>".into(),
            message: e.message().to_owned(),
        })?;
        for (key, value) in &table {
            if !KEYS.contains(&key.as_str()) {
                return Err(bad(key, "unknown key"));
            }
            if value.is_table() || value.is_array() {
                return Err(bad(key, "expected a scalar value"));
            }
        }

        let mut cfg = RunConfig::default();
        let get = |key: &str| table.get(key);
        let f = |key: &str, slot: &mut f64| -> Result<()> {
            if let Some(v) = get(key) {
                *slot = as_f64(key, v)?;
            }
            Ok(())
        };
        let u = |key: &str, slot: &mut usize| -> Result<()> {
            if let Some(v) = get(key) {
                *slot = as_usize(key, v)?;
            }
            Ok(())
        };

        let o = &mut cfg.optim;
        f("lambda1", &mut o.lambda1)?;
        f("lambda2", &mut o.lambda2)?;
        f("mu", &mut o.mu)?;
        f("epsilon_step", &mut o.epsilon_step)?;
        u("max_iters", &mut o.max_iters)?;
        if let Some(v) = get("epsilon_max") {
            o.epsilon_max = Some(as_f64("epsilon_max", v)?);
        }
        f("epsilon_max_fraction", &mut o.epsilon_max_fraction)?;
        f("s_thr", &mut o.s_thr)?;
        u("gauss_size", &mut o.gauss_size)?;
        f("gauss_sigma", &mut o.gauss_sigma)?;
        if let Some(v) = get("seed") {
            o.seed = as_usize("seed", v)? as u64;
        }
        f("v_thre", &mut o.binary.v_thre)?;
        f("alpha", &mut o.binary.alpha)?;
        if let Some(v) = get("snapshot_every") {
            o.snapshot_every = Some(as_usize("snapshot_every", v)?);
        }
        f("cover_value", &mut cfg.cover_value)?;

        let s = &mut cfg.scene;
        u("scene_height", &mut s.height)?;
        u("scene_width", &mut s.width)?;
        f("background", &mut s.background)?;
        f("noise_amplitude", &mut s.noise_amplitude)?;
        if let Some(b) = s.blob.as_mut() {
            f("blob_center_row", &mut b.center_row)?;
            f("blob_center_col", &mut b.center_col)?;
            f("blob_semi_axis_rows", &mut b.semi_axis_rows)?;
            f("blob_semi_axis_cols", &mut b.semi_axis_cols)?;
            f("blob_intensity", &mut b.intensity)?;
        }
        s.seed = cfg.optim.seed;
        u("suite_max_shift", &mut cfg.suite.max_shift)?;
        f("suite_intensity_min", &mut cfg.suite.intensity_min)?;
        f("suite_intensity_max", &mut cfg.suite.intensity_max)?;

        let mut spec = TemplateSpec::default();
        f("template_bias", &mut spec.bias)?;
        u("template_stride", &mut spec.stride)?;
        let mut scale = 1.0;
        let mut offset = 0.0;
        f("template_scale", &mut scale)?;
        f("template_offset", &mut offset)?;
        let mut fd_step = 1e-3;
        f("fd_step", &mut fd_step)?;
        cfg.detector = match (get("scorer_command"), get("template_pgm")) {
            (Some(_), Some(_)) => {
                return Err(bad("scorer_command", "conflicts with template_pgm"));
            }
            (Some(v), None) => DetectorSource::Command {
                line: as_str("scorer_command", v)?.to_owned(),
                fd_step,
            },
            (None, Some(v)) => {
                let rel = PathBuf::from(as_str("template_pgm", v)?);
                let path = match base_dir {
                    Some(dir) if rel.is_relative() => dir.join(rel),
                    _ => rel,
                };
                DetectorSource::Pgm {
                    path,
                    scale,
                    offset,
                    bias: spec.bias,
                    stride: spec.stride,
                }
            }
            (None, None) => DetectorSource::Procedural(spec),
        };

        u("n_scenes", &mut cfg.n_scenes)?;
        u("n_random", &mut cfg.n_random)?;
        u("smooth_kernel", &mut cfg.smooth_kernel)?;
        f("iou_threshold", &mut cfg.iou_threshold)?;
        f("binarize_threshold", &mut cfg.binarize_threshold)?;

        cfg.defaulted = KEYS
            .iter()
            .copied()
            .filter(|k| !table.contains_key(*k))
            .collect();
        for key in &cfg.defaulted {
            log::info!("config key `{key}` not set; using the default");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks, reported against the offending key.
    pub fn validate(&self) -> Result<()> {
        let o = &self.optim;
        let checks: [(&str, bool, String); 16] = [
            ("lambda1", o.lambda1 >= 0.0, "must be non-negative".into()),
            ("lambda2", o.lambda2 >= 0.0, "must be non-negative".into()),
            (
                "mu",
                (0.0..1.0).contains(&o.mu),
                "must lie in [0, 1)".into(),
            ),
            (
                "epsilon_step",
                o.epsilon_step > 0.0,
                "must be positive".into(),
            ),
            ("max_iters", o.max_iters >= 1, "must be at least 1".into()),
            (
                "epsilon_max",
                o.epsilon_max.map_or(true, |e| e > 0.0),
                "must be positive".into(),
            ),
            (
                "epsilon_max_fraction",
                o.epsilon_max_fraction > 0.0,
                "must be positive".into(),
            ),
            (
                "s_thr",
                o.s_thr > 0.0 && o.s_thr <= 1.0,
                "must lie in (0, 1]".into(),
            ),
            ("gauss_size", o.gauss_size % 2 == 1, "must be odd".into()),
            (
                "gauss_sigma",
                o.gauss_sigma > 0.0,
                "must be positive".into(),
            ),
            (
                "v_thre",
                o.binary.v_thre > 0.0 && o.binary.v_thre < 1.0,
                "must lie in (0, 1)".into(),
            ),
            (
                "alpha",
                o.binary.alpha >= 0.0,
                "must be non-negative".into(),
            ),
            (
                "snapshot_every",
                o.snapshot_every != Some(0),
                "must be at least 1".into(),
            ),
            (
                "cover_value",
                (0.0..=1.0).contains(&self.cover_value),
                "must lie in [0, 1]".into(),
            ),
            (
                "smooth_kernel",
                self.smooth_kernel >= 3 && self.smooth_kernel % 2 == 1,
                "must be odd and at least 3".into(),
            ),
            (
                "iou_threshold",
                self.iou_threshold > 0.0 && self.iou_threshold <= 1.0,
                "must lie in (0, 1]".into(),
            ),
        ];
        for (key, ok, message) in checks {
            if !ok {
                return Err(bad(key, message));
            }
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(bad("binarize_threshold", "must lie in (0, 1)"));
        }
        if self.n_scenes == 0 {
            return Err(bad("n_scenes", "must be at least 1"));
        }
        self.scene
            .validate()
            .map_err(|e| bad("scene", e.to_string()))?;
        self.suite
            .validate()
            .map_err(|e| bad("suite_intensity_min", e.to_string()))?;
        match &self.detector {
            DetectorSource::Procedural(spec) if spec.stride == 0 => {
                Err(bad("template_stride", "must be at least 1"))
            }
            DetectorSource::Pgm { stride: 0, .. } => {
                Err(bad("template_stride", "must be at least 1"))
            }
            DetectorSource::Command { fd_step, .. } if !(*fd_step > 0.0) => {
                Err(bad("fd_step", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn cover(&self) -> Result<CoverSpec> {
        CoverSpec::new(self.cover_value)
    }

    /// Scene `seed` of the suite built on the configured base scene.
    pub fn suite_scene(&self, seed: u64) -> SceneSpec {
        self.suite.member(&self.scene, seed)
    }

    /// Loads the detector once; command scorers are bound to an object
    /// mask per scene through [`Detector::model`].
    pub fn detector(&self) -> Result<Detector> {
        match &self.detector {
            DetectorSource::Procedural(spec) => Ok(Detector::Template(spec.build()?)),
            DetectorSource::Pgm {
                path,
                scale,
                offset,
                bias,
                stride,
            } => {
                let img = pnm::read_pgm(path)?;
                let weights = img.grid().map(|v| scale * (v - offset));
                Ok(Detector::Template(TemplateDetector::new(
                    weights, *bias, *stride,
                )?))
            }
            DetectorSource::Command { line, fd_step } => Ok(Detector::Command {
                scorer: CommandScorer::from_command_line(line)?,
                fd_step: *fd_step,
            }),
        }
    }
}

pub enum Detector {
    Template(TemplateDetector),
    Command { scorer: CommandScorer, fd_step: f64 },
}

impl Detector {
    pub fn model(&self, m_obj: &Mask) -> Result<Box<dyn VictimModel>> {
        match self {
            Detector::Template(t) => Ok(Box::new(t.clone())),
            Detector::Command { scorer, fd_step } => Ok(Box::new(finite_difference_adapter(
                scorer.clone(),
                *fd_step,
                m_obj.clone(),
            )?)),
        }
    }
}
