//! Adapter for detectors that live in another process.
//!
//! The command receives the path of an 8-bit PGM as its last argument and
//! prints one candidate per line, either `<score>` (box = whole frame) or
//! `<row> <col> <height> <width> <score>`. Blank lines and `#` comments are
//! ignored.

use std::process::Command;

use super::{BoxRect, Detection, DetectionSet, Scorer};
use crate::error::{Error, Result};
use crate::imgcore::{pnm, GrayImage};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandScorer {
    program: String,
    args: Vec<String>,
}

impl CommandScorer {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandScorer {
            program: program.into(),
            args,
        }
    }

    /// Splits a shell-like command line on whitespace (no quoting).
    pub fn from_command_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::Parameter("empty scorer command".into()))?;
        Ok(CommandScorer::new(program, parts.collect()))
    }
}

impl Scorer for CommandScorer {
    fn score(&self, image: &GrayImage) -> Result<DetectionSet> {
        let file = tempfile::Builder::new()
            .prefix("irpatch-")
            .suffix(".pgm")
            .tempfile()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        pnm::write_pgm(file.path(), image)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(file.path())
            .output()
            .map_err(|e| Error::Scorer(format!("cannot run `{}`: {e}", self.program)))?;
        if !out.status.success() {
            return Err(Error::Scorer(format!(
                "`{}` exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = String::from_utf8(out.stdout)
            .map_err(|e| Error::Scorer(format!("non-UTF-8 output: {e}")))?;
        parse_score_lines(&text, image.shape())
    }
}

pub fn parse_score_lines(text: &str, frame: (usize, usize)) -> Result<DetectionSet> {
    let mut dets = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Scorer(format!("line {}: {msg}", n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (bbox, score_text) = match fields.as_slice() {
            [s] => (
                BoxRect {
                    row: 0,
                    col: 0,
                    height: frame.0,
                    width: frame.1,
                },
                *s,
            ),
            [r, c, h, w, s] => {
                let p = |t: &str| {
                    t.parse::<usize>()
                        .map_err(|e| bad(format!("bad box field {t}: {e}")))
                };
                (
                    BoxRect {
                        row: p(r)?,
                        col: p(c)?,
                        height: p(h)?,
                        width: p(w)?,
                    },
                    *s,
                )
            }
            _ => return Err(bad(format!("expected 1 or 5 fields, got {}", fields.len()))),
        };
        let score: f64 = score_text
            .parse()
            .map_err(|e| bad(format!("bad score {score_text}: {e}")))?;
        if !bbox.fits_in(frame.0, frame.1) {
            return Err(bad("box extends outside the image".into()));
        }
        dets.push(Detection { bbox, score });
    }
    DetectionSet::new(dets).map_err(|e| Error::Scorer(e.to_string()))
}
