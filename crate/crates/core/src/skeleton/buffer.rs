use super::graph::SkeletonGraph;
use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

/// Frames per observation window.
pub const WINDOW_FRAMES: usize = 25;

/// One pose: `J` root-relative joint positions in meters. The pelvis slot
/// carries the root displacement from the phase start.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFrame {
    pub joints: Vec<[f64; 3]>,
    pub timestamp: f64,
}

impl MotionFrame {
    pub fn new(joints: Vec<[f64; 3]>, timestamp: f64) -> Result<Self> {
        if !timestamp.is_finite() || joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("motion frame at t={timestamp}")));
        }
        Ok(Self { joints, timestamp })
    }

    pub fn zeros(joint_count: usize, timestamp: f64) -> Self {
        Self {
            joints: vec![[0.0; 3]; joint_count],
            timestamp,
        }
    }
}

/// Collects frames into disjoint windows of `capacity` frames.
#[derive(Debug, Clone)]
pub struct FrameBuffer {
    capacity: usize,
    frames: Vec<MotionFrame>,
    last_timestamp: Option<f64>,
}

impl Default for FrameBuffer {
    fn default() -> Self {
        Self::new(WINDOW_FRAMES)
    }
}

impl FrameBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "frame buffer capacity must be positive");
        Self {
            capacity,
            frames: Vec::with_capacity(capacity),
            last_timestamp: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Appends a frame; every `capacity`-th push returns the completed window
    /// and starts a fresh one.
    pub fn push_frame(&mut self, frame: MotionFrame) -> Result<Option<Vec<MotionFrame>>> {
        if let Some(prev) = self.last_timestamp {
            if frame.timestamp <= prev {
                return Err(Error::Timestamp {
                    prev,
                    next: frame.timestamp,
                });
            }
        }
        self.last_timestamp = Some(frame.timestamp);
        self.frames.push(frame);
        if self.frames.len() == self.capacity {
            let window = std::mem::replace(&mut self.frames, Vec::with_capacity(self.capacity));
            Ok(Some(window))
        } else {
            Ok(None)
        }
    }
}

/// Packs a window as `[1, N, J, 3]` in graph joint order, channels `(x, y, z)`.
pub fn to_graph_tensor<T: Scalar>(window: &[MotionFrame], g: &SkeletonGraph) -> Result<Tensor<T>> {
    let j = g.joint_count();
    if window.is_empty() {
        return Err(Error::InvalidArgument("empty window".into()));
    }
    let mut data = Vec::with_capacity(window.len() * j * 3);
    for f in window {
        if f.joints.len() != j {
            return Err(Error::shape("to_graph_tensor", &[f.joints.len(), 3], &[j, 3]));
        }
        data.extend(f.joints.iter().flatten().map(|&v| T::from_f64_lossy(v)));
    }
    Tensor::new(&[1, window.len(), j, 3], data)
}

/// Inverse of [`to_graph_tensor`] given the original timestamps.
pub fn unpack_graph_tensor<T: Scalar>(t: &Tensor<T>, timestamps: &[f64]) -> Result<Vec<MotionFrame>> {
    let s = t.shape();
    if s.len() != 4 || s[0] != 1 || s[1] != timestamps.len() || s[3] != 3 {
        return Err(Error::shape("unpack_graph_tensor", s, &[1, timestamps.len(), 0, 3]));
    }
    let j = s[2];
    Ok(t.data()
        .chunks(j * 3)
        .zip(timestamps)
        .map(|(chunk, &ts)| MotionFrame {
            joints: chunk
                .chunks(3)
                .map(|c| [c[0].to_f64_lossy(), c[1].to_f64_lossy(), c[2].to_f64_lossy()])
                .collect(),
            timestamp: ts,
        })
        .collect())
}
