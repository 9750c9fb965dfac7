use super::{Point3, PointCloud};
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

/// The `k` nearest reference points of a query, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl KnnResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a borrowed point set.
///
/// Queries return exactly what a brute-force scan would: Euclidean distances
/// computed with [`nalgebra::distance`], ordered by `(distance, index)`.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
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
        // split the widest axis at the median
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            pts[i][axis].total_cmp(&pts[j][axis])
        });
        let value = pts[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `min(k, N)` nearest points; ties go to the lower index.
    pub fn nearest(&self, query: &Point3, k: usize) -> KnnResult {
        let k = k.min(self.points.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.nearest_in(0, query, k, &mut best);
        }
        KnnResult {
            indices: best.iter().map(|&(_, i)| i).collect(),
            distances: best.iter().map(|&(d, _)| d).collect(),
        }
    }

    fn nearest_in(&self, node: usize, query: &Point3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = nalgebra::distance(query, &self.points[i]);
                    insert_candidate(best, k, (d, i));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_in(near, query, k, best);
                // `<=` keeps equal-distance candidates with a lower index reachable
                if best.len() < k || delta.abs() <= best[best.len() - 1].0 {
                    self.nearest_in(far, query, k, best);
                }
            }
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within_radius(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.radius_in(0, query, radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_in(&self, node: usize, query: &Point3, radius: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => out.extend(
                self.order[start..end]
                    .iter()
                    .copied()
                    .filter(|&i| nalgebra::distance(query, &self.points[i]) <= radius),
            ),
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                if delta <= radius {
                    self.radius_in(left, query, radius, out);
                }
                if -delta <= radius {
                    self.radius_in(right, query, radius, out);
                }
            }
        }
    }
}

fn insert_candidate(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    let worse = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if best.len() == k && worse(&cand, &best[k - 1]).is_ge() {
        return;
    }
    let pos = best.partition_point(|e| worse(e, &cand).is_lt());
    best.insert(pos, cand);
    best.truncate(k);
}

/// The `k` nearest reference points to `query`, ties broken by lower index.
pub fn knn_search(query: &Point3, reference: &PointCloud, k: usize) -> Result<KnnResult> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if k == 0 {
        return Err(Error::BadK {
            k,
            max: reference.len(),
        });
    }
    Ok(KdTree::new(reference.points()).nearest(query, k))
}
