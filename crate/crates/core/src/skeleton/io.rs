//! Line-oriented motion text format: a header `J <count> FPS <rate>`, then one
//! line per frame with `3·J` space-separated decimals (x y z per joint).

use std::io::{BufRead, Write};

use super::buffer::MotionFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MotionFile {
    pub joint_count: usize,
    pub fps: f64,
    pub frames: Vec<MotionFrame>,
}

/// Writes frames using the shortest round-trip decimal form of each value.
pub fn write_motion<W: Write>(mut w: W, joint_count: usize, fps: f64, frames: &[MotionFrame]) -> Result<()> {
    writeln!(w, "J {joint_count} FPS {fps}")?;
    let mut line = String::new();
    for f in frames {
        if f.joints.len() != joint_count {
            return Err(Error::shape("write_motion", &[f.joints.len()], &[joint_count]));
        }
        line.clear();
        for (i, v) in f.joints.iter().flatten().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a motion file; frame `k` gets timestamp `k / fps`.
pub fn read_motion<R: BufRead>(r: R) -> Result<MotionFile> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header = header?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || Error::Parse {
        line: 1,
        msg: format!("expected `J <count> FPS <rate>`, got `{header}`"),
    };
    if tok.len() != 4 || tok[0] != "J" || tok[2] != "FPS" {
        return Err(bad_header());
    }
    let joint_count: usize = tok[1].parse().map_err(|_| bad_header())?;
    let fps: f64 = tok[3].parse().map_err(|_| bad_header())?;
    if joint_count == 0 || !(fps > 0.0 && fps.is_finite()) {
        return Err(bad_header());
    }
    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != 3 * joint_count {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {} values, found {}", 3 * joint_count, vals.len()),
            });
        }
        let joints = vals.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let ts = frames.len() as f64 / fps;
        frames.push(MotionFrame::new(joints, ts).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(MotionFile {
        joint_count,
        fps,
        frames,
    })
}
