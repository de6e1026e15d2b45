//! Line-delimited JSON frames.

use std::path::Path;

use super::{quantize_frame, LandmarkFrame};
use crate::error::{PalsyError, Result};
use crate::io;

/// Parse JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_frames(text: &str, path: &Path) -> Result<Vec<LandmarkFrame>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let frame: LandmarkFrame = serde_json::from_str(line).map_err(|e| PalsyError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        frame.validate()?;
        out.push(frame);
    }
    Ok(out)
}

pub fn read_frames(path: &Path) -> Result<Vec<LandmarkFrame>> {
    let bytes = io::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| PalsyError::Parse {
        path: path.to_owned(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_frames(&text, path)
}

/// JSONL text with every real rounded to 9 significant digits.
pub fn render_frames(frames: &[LandmarkFrame]) -> Result<String> {
    let mut out = String::new();
    for f in frames {
        f.validate()?;
        let mut q = f.clone();
        quantize_frame(&mut q);
        out.push_str(&serde_json::to_string(&q).map_err(|e| PalsyError::Schema(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_frames(frames: &[LandmarkFrame], path: &Path) -> Result<()> {
    io::write_atomic(path, render_frames(frames)?.as_bytes())
}
