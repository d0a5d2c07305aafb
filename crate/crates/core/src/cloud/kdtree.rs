//! Static 3-D k-d tree with exact, deterministic queries.
//!
//! Results are ordered by `(distance, index)`, so equidistant points resolve
//! to the smaller index in every query.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// A query hit: point index and Euclidean distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build(0, tree.points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the widest axis.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let dim = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][dim].total_cmp(&pts[b][dim]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// Visits every leaf that may contain a point with squared distance
    /// `<= bound()`; `visit` receives point indices.
    fn search(&self, q: &[f64; 3], bound: &mut dyn FnMut() -> f64, visit: &mut dyn FnMut(usize, f64)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((node, plane_d2)) = stack.pop() {
            if plane_d2 > bound() {
                continue;
            }
            match self.nodes[node] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        visit(i, dist2(q, &self.points[i]));
                    }
                }
                Node::Split { dim, value, left, right } => {
                    let diff = q[dim] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    // Far side first on the stack so the near side is searched first.
                    stack.push((far, diff * diff));
                    stack.push((near, plane_d2));
                }
            }
        }
    }

    /// The `k` nearest points to `q`, sorted by `(distance, index)`.
    pub fn knn(&self, q: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let heap = std::cell::RefCell::new(BinaryHeap::<Candidate>::with_capacity(k + 1));
        let mut bound = || {
            let h = heap.borrow();
            if h.len() < k {
                f64::INFINITY
            } else {
                h.peek().unwrap().d2
            }
        };
        let mut visit = |index: usize, d2: f64| {
            let mut h = heap.borrow_mut();
            let c = Candidate { d2, index };
            if h.len() < k {
                h.push(c);
            } else if c < *h.peek().unwrap() {
                h.pop();
                h.push(c);
            }
        };
        self.search(&q, &mut bound, &mut visit);
        let mut out = heap.into_inner().into_sorted_vec();
        out.truncate(k);
        out.into_iter()
            .map(|c| Neighbor { index: c.index, distance: c.d2.sqrt() })
            .collect()
    }

    pub fn nearest(&self, q: &Point3<f64>) -> Option<Neighbor> {
        self.knn(q, 1).into_iter().next()
    }

    /// All points with distance strictly below `radius`, sorted by `(distance, index)`.
    pub fn within(&self, q: &Point3<f64>, radius: f64) -> Vec<Neighbor> {
        let q = [q.x, q.y, q.z];
        let r2 = radius * radius;
        let mut hits = Vec::new();
        let mut bound = || r2;
        let mut visit = |index: usize, d2: f64| {
            if d2 < r2 {
                hits.push(Candidate { d2, index });
            }
        };
        self.search(&q, &mut bound, &mut visit);
        hits.sort();
        hits.into_iter()
            .map(|c| Neighbor { index: c.index, distance: c.d2.sqrt() })
            .collect()
    }
}
