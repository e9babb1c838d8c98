use std::fmt;

use log::warn;

use super::SkeletonSequence;
use crate::error::{Error, Result};

/// Source frame indices for `F` equidistant samples of `T` frames:
/// `round(i·(T−1)/(F−1))`. Short inputs (`T < F`) are padded by repeating
/// the last frame.
pub fn subsample_indices(total: usize, frames: usize) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::Data("cannot subsample an empty sequence".into()));
    }
    if total < frames {
        return Ok((0..frames).map(|i| i.min(total - 1)).collect());
    }
    if frames == 1 {
        return Ok(vec![0]);
    }
    let step = (total - 1) as f64 / (frames - 1) as f64;
    Ok((0..frames).map(|i| (i as f64 * step).round() as usize).collect())
}

pub fn subsample_frames(seq: &SkeletonSequence, frames: usize) -> Result<SkeletonSequence> {
    let idx = subsample_indices(seq.frames(), frames)?;
    let data = idx.iter().flat_map(|&t| seq.frame(t).iter().copied()).collect();
    Ok(seq.with_data(frames, data))
}

/// Translates every frame so joint `pelvis` sits at the origin.
pub fn center_pelvis(seq: &SkeletonSequence, pelvis: usize) -> Result<SkeletonSequence> {
    if pelvis >= seq.joints() {
        return Err(Error::Data(format!(
            "pelvis index {pelvis} out of range for {} joints",
            seq.joints()
        )));
    }
    let mut out = seq.clone();
    let joints = seq.joints();
    for frame in out.data_mut().chunks_mut(joints * 3) {
        let origin = [frame[pelvis * 3], frame[pelvis * 3 + 1], frame[pelvis * 3 + 2]];
        for joint in frame.chunks_mut(3) {
            for (c, o) in joint.iter_mut().zip(origin) {
                *c -= o;
            }
        }
    }
    Ok(out)
}

/// Clamps coordinates into [−1, 1]; returns how many were changed.
pub fn clamp_to_range(seq: &mut SkeletonSequence) -> usize {
    let mut changed = 0;
    for v in seq.data_mut() {
        if v.is_finite() && v.abs() > 1.0 {
            *v = v.clamp(-1.0, 1.0);
            changed += 1;
        }
    }
    changed
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    FrameCount { expected: usize, found: usize },
    JointCount { expected: usize, found: usize },
    NonFinite { frame: usize, joint: usize, axis: usize },
    OutOfRange { frame: usize, joint: usize, axis: usize, value: f64 },
    PelvisOffset { frame: usize, offset: [f64; 3] },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const AXES: [char; 3] = ['x', 'y', 'z'];
        match self {
            Self::FrameCount { expected, found } => {
                write!(f, "expected {expected} frames, found {found}")
            }
            Self::JointCount { expected, found } => {
                write!(f, "expected {expected} joints, found {found}")
            }
            Self::NonFinite { frame, joint, axis } => {
                write!(f, "non-finite value at frame {frame}, joint {joint}, axis {}", AXES[*axis])
            }
            Self::OutOfRange { frame, joint, axis, value } => write!(
                f,
                "value {value} outside [-1, 1] at frame {frame}, joint {joint}, axis {}",
                AXES[*axis]
            ),
            Self::PelvisOffset { frame, offset } => {
                write!(f, "pelvis not at origin in frame {frame}: {offset:?}")
            }
        }
    }
}

/// What a preprocessed sequence must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expectations {
    pub frames: Option<usize>,
    pub joints: Option<usize>,
    pub pelvis: usize,
}

/// Checks shape, finiteness, range, and pelvis centering. Never alters the
/// data; rotation in particular is left as recorded.
pub fn validate_sequence(seq: &SkeletonSequence, expect: &Expectations) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if let Some(f) = expect.frames {
        if f != seq.frames() {
            out.push(Violation::FrameCount { expected: f, found: seq.frames() });
        }
    }
    if let Some(j) = expect.joints {
        if j != seq.joints() {
            out.push(Violation::JointCount { expected: j, found: seq.joints() });
        }
    }
    for frame in 0..seq.frames() {
        for joint in 0..seq.joints() {
            for (axis, value) in seq.joint(frame, joint).into_iter().enumerate() {
                if !value.is_finite() {
                    out.push(Violation::NonFinite { frame, joint, axis });
                } else if value.abs() > 1.0 {
                    out.push(Violation::OutOfRange { frame, joint, axis, value });
                }
            }
        }
        if expect.pelvis < seq.joints() {
            let p = seq.joint(frame, expect.pelvis);
            if p.iter().any(|v| *v != 0.0 && v.is_finite()) {
                out.push(Violation::PelvisOffset { frame, offset: p });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Subsample, center, clamp (with a warning), then validate.
pub fn preprocess(seq: &SkeletonSequence, expect: &Expectations) -> Result<SkeletonSequence> {
    let frames = expect.frames.unwrap_or(seq.frames());
    let mut out = center_pelvis(&subsample_frames(seq, frames)?, expect.pelvis)?;
    let clamped = clamp_to_range(&mut out);
    if clamped > 0 {
        warn!("{}: clamped {clamped} coordinates into [-1, 1]", seq.source_id);
    }
    validate_sequence(&out, expect).map_err(|v| {
        let listed: Vec<String> = v.iter().take(3).map(ToString::to_string).collect();
        Error::Data(format!(
            "{}: {} violation(s): {}",
            seq.source_id,
            v.len(),
            listed.join("; ")
        ))
    })?;
    Ok(out)
}
