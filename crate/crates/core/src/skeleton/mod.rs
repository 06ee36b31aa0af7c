//! Skeleton graph, normalized adjacency and the 25-frame observation buffer.

mod buffer;
mod graph;
mod io;

pub use buffer::{to_graph_tensor, unpack_graph_tensor, FrameBuffer, MotionFrame, WINDOW_FRAMES};
pub use graph::{joint, normalized_adjacency, SkeletonGraph, DEFAULT_JOINT_NAMES};
pub use io::{read_motion, write_motion, MotionFile};

/// Frames per second of all synthetic and imported motion.
pub const FPS: f64 = 25.0;
