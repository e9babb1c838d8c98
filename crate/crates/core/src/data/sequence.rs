use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frames of 3D joint coordinates, stored frame-major as `[T][J][xyz]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    data: Vec<f64>,
    frames: usize,
    joints: usize,
    pub class_label: Option<String>,
    pub source_id: String,
}

impl SkeletonSequence {
    pub fn new(
        frames: usize,
        joints: usize,
        data: Vec<f64>,
        class_label: Option<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if data.len() != frames * joints * 3 {
            return Err(Error::Data(format!(
                "sequence data has {} values, expected {frames}×{joints}×3",
                data.len()
            )));
        }
        Ok(Self {
            data,
            frames,
            joints,
            class_label,
            source_id: source_id.into(),
        })
    }

    /// Builds from per-frame joint lists.
    pub fn from_frames(
        frames: &[Vec<[f64; 3]>],
        class_label: Option<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let joints = frames.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(frames.len() * joints * 3);
        for (i, f) in frames.iter().enumerate() {
            if f.len() != joints {
                return Err(Error::Data(format!(
                    "frame {i} has {} joints, expected {joints}",
                    f.len()
                )));
            }
            data.extend(f.iter().flatten());
        }
        Self::new(frames.len(), joints, data, class_label, source_id)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `J·3` coordinates of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.joints * 3;
        &self.data[t * w..(t + 1) * w]
    }

    pub fn joint(&self, t: usize, j: usize) -> [f64; 3] {
        let base = (t * self.joints + j) * 3;
        [self.data[base], self.data[base + 1], self.data[base + 2]]
    }

    /// `T×(J·3)` matrix, the network's input layout.
    pub fn to_matrix(&self) -> Tensor {
        Tensor::new(vec![self.frames, self.joints * 3], self.data.clone()).expect("shape")
    }

    /// Same metadata, new frames.
    pub(crate) fn with_data(&self, frames: usize, data: Vec<f64>) -> Self {
        Self {
            data,
            frames,
            joints: self.joints,
            class_label: self.class_label.clone(),
            source_id: self.source_id.clone(),
        }
    }
}
