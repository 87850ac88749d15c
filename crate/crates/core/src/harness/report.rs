//! Per-scene records, per-arm ASR and their CSV and key-value forms.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Outcome of one patch construction on one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub arm: String,
    /// Index of the trial within the arm for this scene (random placement
    /// draw, canonical shape); 0 when the arm has one trial per scene.
    pub variant: usize,
    pub seed: u64,
    pub clean_score: f64,
    pub adv_score: f64,
    pub attacked: bool,
    pub mask_l1: f64,
    pub aggregation_support: f64,
    pub aggregation_literal: f64,
    pub components: usize,
    pub iterations: usize,
}

impl SceneRecord {
    pub const CSV_HEADER: [&'static str; 11] = [
        "arm",
        "variant",
        "seed",
        "clean_score",
        "adv_score",
        "attacked",
        "mask_l1",
        "aggregation_support",
        "aggregation_literal",
        "components",
        "iterations",
    ];

    fn csv_fields(&self) -> [String; 11] {
        [
            self.arm.clone(),
            self.variant.to_string(),
            self.seed.to_string(),
            self.clean_score.to_string(),
            self.adv_score.to_string(),
            self.attacked.to_string(),
            self.mask_l1.to_string(),
            self.aggregation_support.to_string(),
            self.aggregation_literal.to_string(),
            self.components.to_string(),
            self.iterations.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmReport {
    pub name: String,
    pub records: Vec<SceneRecord>,
}

impl ArmReport {
    pub fn asr(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.attacked).count() as f64 / self.records.len() as f64
    }

    fn mean(&self, f: impl Fn(&SceneRecord) -> f64) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(f).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_support(&self) -> f64 {
        self.mean(|r| r.aggregation_support)
    }

    pub fn mean_literal(&self) -> f64 {
        self.mean(|r| r.aggregation_literal)
    }

    pub fn mean_mask_l1(&self) -> f64 {
        self.mean(|r| r.mask_l1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub command: String,
    pub s_thr: f64,
    pub seed: u64,
    pub n_scenes: usize,
    pub arms: Vec<ArmReport>,
    /// Command-specific summary entries, written after the per-arm ones.
    pub extras: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn new(command: &str, s_thr: f64, seed: u64, n_scenes: usize) -> Self {
        ExperimentReport {
            command: command.to_owned(),
            s_thr,
            seed,
            n_scenes,
            arms: Vec::new(),
            extras: Vec::new(),
        }
    }

    /// Adds an arm with its records sorted by scene seed, then variant.
    pub fn push_arm(&mut self, name: &str, mut records: Vec<SceneRecord>) {
        records.sort_by_key(|r| (r.seed, r.variant));
        self.arms.push(ArmReport {
            name: name.to_owned(),
            records,
        });
    }

    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn records_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SceneRecord::CSV_HEADER)
            .expect("in-memory write");
        for rec in self.arms.iter().flat_map(|a| &a.records) {
            w.write_record(rec.csv_fields()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# a scene counts as attacked when the top-1 score of the patched image is <= s_thr"
        );
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "s_thr = {}", self.s_thr);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "n_scenes = {}", self.n_scenes);
        for arm in &self.arms {
            let n = &arm.name;
            let _ = writeln!(out, "{n}.records = {}", arm.records.len());
            let _ = writeln!(out, "{n}.asr = {}", arm.asr());
            let _ = writeln!(out, "{n}.mean_mask_l1 = {}", arm.mean_mask_l1());
            let _ = writeln!(out, "{n}.mean_support = {}", arm.mean_support());
            let _ = writeln!(out, "{n}.mean_literal = {}", arm.mean_literal());
        }
        for (k, v) in &self.extras {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes `<command>_records.csv` and `<command>_summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = self.command.replace('-', "_");
        let csv_path = dir.join(format!("{stem}_records.csv"));
        std::fs::write(&csv_path, self.records_csv()).map_err(|e| Error::io(&csv_path, e))?;
        let sum_path = dir.join(format!("{stem}_summary.txt"));
        std::fs::write(&sum_path, self.summary()).map_err(|e| Error::io(&sum_path, e))
    }
}

/// Per-arm ASR recounted from a records CSV, in order of first appearance.
pub fn recount_asr(csv_text: &str) -> Result<Vec<(String, f64)>> {
    let fmt = |message: String| Error::Format {
        path: "<records>".into(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fmt(format!("missing column `{name}`")))
    };
    let (arm_col, hit_col) = (col("arm")?, col("attacked")?);
    let mut tally: Vec<(String, usize, usize)> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| fmt(e.to_string()))?;
        let hit = match &row[hit_col] {
            "true" => 1,
            "false" => 0,
            other => return Err(fmt(format!("bad attacked value `{other}`"))),
        };
        let arm = &row[arm_col];
        match tally.iter_mut().find(|t| t.0 == arm) {
            Some(t) => {
                t.1 += hit;
                t.2 += 1;
            }
            None => tally.push((arm.to_owned(), hit, 1)),
        }
    }
    Ok(tally
        .into_iter()
        .map(|(arm, hits, n)| (arm, hits as f64 / n as f64))
        .collect())
}
