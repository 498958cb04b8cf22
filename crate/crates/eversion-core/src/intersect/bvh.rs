//! Axis-aligned bounding-box hierarchy over mesh faces, used to prune the
//! all-pairs face test down to overlapping candidates. Built by median split
//! on the longest centroid axis; traversal enumerates each unordered face
//! pair at most once.

use crate::mesh::TriMesh;
use crate::real::Real;
use nalgebra::Vector3;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Aabb<T: Real> {
    pub lo: Vector3<T>,
    pub hi: Vector3<T>,
}

impl<T: Real> Aabb<T> {
    fn of_face(mesh: &TriMesh<T>, f: usize) -> Self {
        let [a, b, c] = mesh.face_vertices(f);
        let pa = mesh.position(a);
        let pb = mesh.position(b);
        let pc = mesh.position(c);
        Aabb {
            lo: pa.inf(&pb).inf(&pc),
            hi: pa.sup(&pb).sup(&pc),
        }
    }

    fn union(&self, other: &Aabb<T>) -> Self {
        Aabb {
            lo: self.lo.inf(&other.lo),
            hi: self.hi.sup(&other.hi),
        }
    }

    fn overlaps(&self, other: &Aabb<T>) -> bool {
        self.lo.x <= other.hi.x
            && other.lo.x <= self.hi.x
            && self.lo.y <= other.hi.y
            && other.lo.y <= self.hi.y
            && self.lo.z <= other.hi.z
            && other.lo.z <= self.hi.z
    }
}

enum Node<T: Real> {
    Leaf {
        bounds: Aabb<T>,
        /// Range into `FaceBvh::order`.
        start: usize,
        len: usize,
    },
    Inner {
        bounds: Aabb<T>,
        left: usize,
        right: usize,
    },
}

impl<T: Real> Node<T> {
    fn bounds(&self) -> &Aabb<T> {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 8;

/// Bounding-volume hierarchy over a subset of a mesh's faces.
pub(crate) struct FaceBvh<T: Real> {
    nodes: Vec<Node<T>>,
    /// Face ids permuted so every leaf owns a contiguous slice.
    order: Vec<usize>,
    boxes: Vec<Aabb<T>>,
    root: usize,
}

impl<T: Real> FaceBvh<T> {
    /// Builds the hierarchy over `faces` (ids into `mesh`).
    pub fn build(mesh: &TriMesh<T>, faces: &[usize]) -> Self {
        let boxes: Vec<Aabb<T>> = (0..mesh.face_count())
            .map(|f| Aabb::of_face(mesh, f))
            .collect();
        let mut bvh = FaceBvh {
            nodes: Vec::new(),
            order: faces.to_vec(),
            boxes,
            root: 0,
        };
        if bvh.order.is_empty() {
            bvh.nodes.push(Node::Leaf {
                bounds: Aabb {
                    lo: Vector3::zeros(),
                    hi: Vector3::zeros(),
                },
                start: 0,
                len: 0,
            });
        } else {
            bvh.root = bvh.split(0, faces.len());
        }
        bvh
    }

    fn range_bounds(&self, start: usize, len: usize) -> Aabb<T> {
        let mut b = self.boxes[self.order[start]];
        for i in start + 1..start + len {
            b = b.union(&self.boxes[self.order[i]]);
        }
        b
    }

    fn split(&mut self, start: usize, len: usize) -> usize {
        let bounds = self.range_bounds(start, len);
        if len <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, len });
            return self.nodes.len() - 1;
        }
        // Median split along the longest axis of the centroid cloud.
        let centroid = |b: &Aabb<T>, axis: usize| b.lo[axis] + b.hi[axis];
        let mut axis = 0;
        let mut best = T::zero();
        for a in 0..3 {
            let slice = &self.order[start..start + len];
            let mut lo = centroid(&self.boxes[slice[0]], a);
            let mut hi = lo;
            for &f in slice.iter().skip(1) {
                let c = centroid(&self.boxes[f], a);
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > best {
                best = hi - lo;
                axis = a;
            }
        }
        let boxes = &self.boxes;
        self.order[start..start + len].sort_by(|&f, &g| {
            centroid(&boxes[f], axis)
                .partial_cmp(&centroid(&boxes[g], axis))
                .expect("finite centroids")
                .then(f.cmp(&g))
        });
        let half = len / 2;
        let left = self.split(start, half);
        let right = self.split(start + half, len - half);
        self.nodes.push(Node::Inner { bounds, left, right });
        self.nodes.len() - 1
    }

    /// All unordered face pairs `(i, j)` with `i < j` whose boxes overlap,
    /// sorted. Every genuinely intersecting pair is included (a nonempty
    /// triangle intersection forces box overlap); disjoint-box pairs are
    /// pruned.
    pub fn candidate_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if !self.order.is_empty() {
            self.pairs_within(self.root, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn pairs_within(&self, node: usize, out: &mut Vec<(usize, usize)>) {
        match &self.nodes[node] {
            Node::Leaf { start, len, .. } => {
                let slice = &self.order[*start..*start + *len];
                for (k, &f) in slice.iter().enumerate() {
                    for &g in &slice[k + 1..] {
                        if self.boxes[f].overlaps(&self.boxes[g]) {
                            out.push((f.min(g), f.max(g)));
                        }
                    }
                }
            }
            Node::Inner { left, right, .. } => {
                self.pairs_within(*left, out);
                self.pairs_within(*right, out);
                self.pairs_across(*left, *right, out);
            }
        }
    }

    fn pairs_across(&self, a: usize, b: usize, out: &mut Vec<(usize, usize)>) {
        if !self.nodes[a].bounds().overlaps(self.nodes[b].bounds()) {
            return;
        }
        match (&self.nodes[a], &self.nodes[b]) {
            (Node::Leaf { start: sa, len: la, .. }, Node::Leaf { start: sb, len: lb, .. }) => {
                for &f in &self.order[*sa..*sa + *la] {
                    for &g in &self.order[*sb..*sb + *lb] {
                        if self.boxes[f].overlaps(&self.boxes[g]) {
                            out.push((f.min(g), f.max(g)));
                        }
                    }
                }
            }
            (Node::Inner { left, right, .. }, _) => {
                self.pairs_across(*left, b, out);
                self.pairs_across(*right, b, out);
            }
            (_, Node::Inner { left, right, .. }) => {
                self.pairs_across(a, *left, out);
                self.pairs_across(a, *right, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn candidates_are_a_superset_of_box_overlaps_and_sorted() {
        let mesh: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let faces: Vec<usize> = (0..mesh.face_count()).collect();
        let bvh = FaceBvh::build(&mesh, &faces);
        let candidates = bvh.candidate_pairs();

        // Sorted and unique.
        for w in candidates.windows(2) {
            assert!(w[0] < w[1]);
        }

        // Exactly the set brute-force box overlap finds.
        let boxes: Vec<Aabb<f64>> = (0..mesh.face_count())
            .map(|f| Aabb::of_face(&mesh, f))
            .collect();
        let mut brute = Vec::new();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].overlaps(&boxes[j]) {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(candidates, brute);
    }

    #[test]
    fn empty_face_set_yields_no_pairs() {
        let mesh: TriMesh<f64> = icosphere(0, 1.0).unwrap();
        let bvh = FaceBvh::build(&mesh, &[]);
        assert!(bvh.candidate_pairs().is_empty());
    }
}
