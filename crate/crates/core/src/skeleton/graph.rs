use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

/// Joint names of the default 15-joint skeleton, in graph order.
pub const DEFAULT_JOINT_NAMES: [&str; 15] = [
    "head",
    "neck",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "pelvis",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_hip",
    "r_knee",
    "r_ankle",
];

/// Indices into the default skeleton.
pub mod joint {
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const L_SHOULDER: usize = 2;
    pub const L_ELBOW: usize = 3;
    pub const L_WRIST: usize = 4;
    pub const R_SHOULDER: usize = 5;
    pub const R_ELBOW: usize = 6;
    pub const R_WRIST: usize = 7;
    pub const PELVIS: usize = 8;
    pub const L_HIP: usize = 9;
    pub const L_KNEE: usize = 10;
    pub const L_ANKLE: usize = 11;
    pub const R_HIP: usize = 12;
    pub const R_KNEE: usize = 13;
    pub const R_ANKLE: usize = 14;
}

/// Undirected, connected kinematic graph. Edges are stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonGraph {
    joint_count: usize,
    edges: Vec<(usize, usize)>,
}

impl SkeletonGraph {
    pub fn new(joint_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if joint_count == 0 {
            return Err(Error::Graph("skeleton needs at least one joint".into()));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            if a >= joint_count || b >= joint_count {
                return Err(Error::Graph(format!("edge ({a}, {b}) references a joint outside 0..{joint_count}")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on joint {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Graph(format!("duplicate edge ({a}, {b})")));
            }
        }
        let g = Self {
            joint_count,
            edges: edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
        };
        if !g.is_connected() {
            return Err(Error::Graph("skeleton graph is disconnected".into()));
        }
        Ok(g)
    }

    /// The 15-joint body: head, neck, both arms, pelvis, both legs.
    pub fn default_body() -> Self {
        use joint::*;
        let edges = [
            (HEAD, NECK),
            (NECK, L_SHOULDER),
            (L_SHOULDER, L_ELBOW),
            (L_ELBOW, L_WRIST),
            (NECK, R_SHOULDER),
            (R_SHOULDER, R_ELBOW),
            (R_ELBOW, R_WRIST),
            (NECK, PELVIS),
            (PELVIS, L_HIP),
            (L_HIP, L_KNEE),
            (L_KNEE, L_ANKLE),
            (PELVIS, R_HIP),
            (R_HIP, R_KNEE),
            (R_KNEE, R_ANKLE),
        ];
        Self::new(15, &edges).expect("default skeleton is valid")
    }

    /// A path graph `0 - 1 - ... - (n-1)`.
    pub fn chain(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.joint_count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.joint_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalized_adjacency<T: Scalar>(g: &SkeletonGraph) -> Tensor<T> {
    let n = g.joint_count;
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for &(u, v) in &g.edges {
        a[u * n + v] = 1.0;
        a[v * n + u] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    let vals: Vec<f64> = (0..n * n)
        .map(|idx| a[idx] / (deg[idx / n] * deg[idx % n]).sqrt())
        .collect();
    Tensor::from_f64(&[n, n], &vals).expect("square adjacency")
}
