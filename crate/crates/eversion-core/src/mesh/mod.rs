//! Half-edge triangle meshes for closed oriented surfaces.
//!
//! The mesh is immutable after construction: every operation that changes
//! connectivity or positions returns a new mesh. Self-intersections are
//! explicitly allowed (the surfaces here are immersions, not embeddings);
//! what is *not* allowed is non-manifold connectivity, open boundary, or
//! inconsistent orientation. [`TriMesh::build_and_validate`] enforces all of
//! that and fixes orientation where a consistent choice exists.

mod generate;
mod improve;
mod io;
mod refine;

pub use generate::icosphere;
pub use improve::{improve, ImproveConfig, ImproveReport};
pub use io::{
    read_mesh, read_mesh_str, write_mesh, write_mesh_string, ParseError, MESH_EXTENSION,
};
pub use refine::subdivide;

use crate::real::{pairwise_sum_with, real, Real};
use nalgebra::Vector3;
use std::collections::HashMap;

/// Sentinel for "no half-edge".
pub const INVALID: u32 = u32::MAX;

/// Errors from mesh construction and surgery.
#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("edge ({0}, {1}) borders {2} faces; a closed surface allows exactly 2")]
    NonManifoldEdge(usize, usize, usize),
    #[error("vertex {0} has a disconnected or non-disk neighborhood")]
    NonManifoldVertex(usize),
    #[error("faces cannot be consistently oriented")]
    NotOrientable,
    #[error("edge ({0}, {1}) borders only one face; the surface is not closed")]
    OpenBoundary(usize, usize),
    #[error("face {0} references vertex {1}, but only {2} positions were given")]
    IndexOutOfRange(usize, usize, usize),
    #[error("face {0} repeats a vertex")]
    DegenerateIndexing(usize),
    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),
    #[error("face {0} has area {1:e}, below the degeneracy threshold {2:e}")]
    DegenerateFace(usize, f64, f64),
    #[error("subdivision level {0} exceeds the supported maximum {1}")]
    LevelTooLarge(u32, u32),
    #[error("refinement produced a face below the degeneracy threshold")]
    DegenerateResult,
    #[error("a position coordinate is not finite")]
    NonFiniteCoordinate,
}

/// One directed half of an undirected edge.
#[derive(Clone, Copy, Debug)]
pub struct HalfEdge {
    /// Next half-edge counterclockwise around the same face.
    pub next: u32,
    /// Oppositely directed half-edge in the adjacent face.
    pub twin: u32,
    /// Vertex this half-edge points away from.
    pub origin: u32,
    /// Face on the left of this half-edge.
    pub face: u32,
}

/// A closed, oriented, manifold triangle mesh (possibly self-intersecting,
/// possibly with several connected components).
#[derive(Clone, Debug)]
pub struct TriMesh<T: Real> {
    positions: Vec<Vector3<T>>,
    halfedges: Vec<HalfEdge>,
    /// One half-edge per face (the loop entry point).
    face_halfedge: Vec<u32>,
    /// One outgoing half-edge per vertex.
    vertex_halfedge: Vec<u32>,
}

/// Relative face-area threshold: a face is degenerate when its area falls
/// below `DEGENERACY_FACTOR * (total_area / face_count)`.
pub const DEGENERACY_FACTOR: f64 = 1e-12;

/// Scalar surface metrics; see [`TriMesh::metrics`].
#[derive(Clone, Copy, Debug)]
pub struct MeshMetrics<T: Real> {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub face_count: usize,
    pub euler_characteristic: i64,
    pub total_area: T,
    pub signed_volume: T,
    /// Sum over vertices of (2*pi - total incident corner angle).
    pub total_angle_defect: T,
    pub mean_edge_length: T,
    pub max_edge_length: T,
    /// Minimum over faces of the scale-free quality `4*sqrt(3)*A / sum(l^2)`
    /// (1 for equilateral, -> 0 for slivers).
    pub min_face_quality: T,
}

impl<T: Real> TriMesh<T> {
    /// Builds a half-edge mesh from a face-index list, validating that the
    /// result is a closed manifold surface and making the face orientations
    /// globally consistent (each connected component keeps the winding of its
    /// lowest-numbered face).
    pub fn build_and_validate(
        positions: Vec<Vector3<T>>,
        faces: &[[usize; 3]],
    ) -> Result<Self, MeshError> {
        let nv = positions.len();
        for p in &positions {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(MeshError::NonFiniteCoordinate);
            }
        }
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange(fi, v, nv));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateIndexing(fi));
            }
        }

        // Undirected edge -> incident (face, traversal direction) pairs.
        let mut edge_faces: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                edge_faces.entry(key).or_default().push((fi, a < b));
            }
        }
        let mut edge_keys: Vec<(usize, usize)> = edge_faces.keys().copied().collect();
        edge_keys.sort_unstable();
        for &(a, b) in &edge_keys {
            match edge_faces[&(a, b)].len() {
                2 => {}
                1 => return Err(MeshError::OpenBoundary(a, b)),
                n => return Err(MeshError::NonManifoldEdge(a, b, n)),
            }
        }

        // Orient: BFS over face adjacency, flipping so that twins traverse
        // shared edges in opposite directions.
        let nf = faces.len();
        let mut flip = vec![false; nf];
        let mut seen = vec![false; nf];
        for start in 0..nf {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(fi) = queue.pop_front() {
                let f = &faces[fi];
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    let inc = &edge_faces[&key];
                    let (other, other_dir) = if inc[0].0 == fi && inc[1].0 != fi {
                        inc[1]
                    } else if inc[1].0 == fi && inc[0].0 != fi {
                        inc[0]
                    } else {
                        // Both records belong to this face: the edge appears
                        // twice in one face, i.e. a pinched configuration.
                        return Err(MeshError::NonManifoldEdge(a, b, 2));
                    };
                    let my_dir = (a < b) != flip[fi];
                    // Consistent orientation needs the two traversals opposed,
                    // so the neighbor must flip iff its stored traversal runs
                    // the same way as ours.
                    let want_flip_other = other_dir == my_dir;
                    if !seen[other] {
                        seen[other] = true;
                        flip[other] = want_flip_other;
                        queue.push_back(other);
                    } else if flip[other] != want_flip_other {
                        return Err(MeshError::NotOrientable);
                    }
                }
            }
        }

        let oriented: Vec<[usize; 3]> = faces
            .iter()
            .zip(&flip)
            .map(|(f, &fl)| if fl { [f[0], f[2], f[1]] } else { *f })
            .collect();

        // Half-edge assembly.
        let mut halfedges: Vec<HalfEdge> = Vec::with_capacity(3 * nf);
        let mut face_halfedge = vec![INVALID; nf];
        let mut vertex_halfedge = vec![INVALID; nv];
        let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(3 * nf);
        for (fi, f) in oriented.iter().enumerate() {
            let base = halfedges.len() as u32;
            face_halfedge[fi] = base;
            for k in 0..3u32 {
                let a = f[k as usize] as u32;
                let b = f[(k as usize + 1) % 3] as u32;
                halfedges.push(HalfEdge {
                    next: base + (k + 1) % 3,
                    twin: INVALID,
                    origin: a,
                    face: fi as u32,
                });
                if directed.insert((a, b), base + k).is_some() {
                    // Two faces traverse (a, b) the same way even after
                    // orientation repair: not an orientable configuration.
                    return Err(MeshError::NotOrientable);
                }
                if vertex_halfedge[a as usize] == INVALID {
                    vertex_halfedge[a as usize] = base + k;
                }
            }
        }
        for h in 0..halfedges.len() {
            let a = halfedges[h].origin;
            let b = halfedges[halfedges[h].next as usize].origin;
            match directed.get(&(b, a)) {
                Some(&t) => halfedges[h].twin = t,
                None => return Err(MeshError::OpenBoundary(a as usize, b as usize)),
            }
        }

        for (v, &h) in vertex_halfedge.iter().enumerate() {
            if h == INVALID {
                return Err(MeshError::UnreferencedVertex(v));
            }
        }

        let mesh = TriMesh { positions, halfedges, face_halfedge, vertex_halfedge };

        // Umbrella test: walking twin/next around each vertex must visit every
        // incident face exactly once (a single disk, no bowties).
        let mut incident = vec![0usize; nv];
        for f in &oriented {
            for &v in f {
                incident[v] += 1;
            }
        }
        for v in 0..nv {
            if mesh.vertex_ring_len(v) != incident[v] {
                return Err(MeshError::NonManifoldVertex(v));
            }
        }

        Ok(mesh)
    }

    /// Number of faces around vertex `v` reachable by the half-edge umbrella walk.
    fn vertex_ring_len(&self, v: usize) -> usize {
        let start = self.vertex_halfedge[v];
        let mut h = start;
        let mut count = 0;
        loop {
            count += 1;
            // rotate clockwise: twin of the previous half-edge around the face
            let prev = self.halfedges[self.halfedges[h as usize].next as usize].next;
            h = self.halfedges[prev as usize].twin;
            if h == start || count > self.halfedges.len() {
                break;
            }
        }
        count
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.face_halfedge.len()
    }

    pub fn halfedge_count(&self) -> usize {
        self.halfedges.len()
    }

    pub fn edge_count(&self) -> usize {
        self.halfedges.len() / 2
    }

    pub fn positions(&self) -> &[Vector3<T>] {
        &self.positions
    }

    pub fn position(&self, v: usize) -> Vector3<T> {
        self.positions[v]
    }

    pub fn halfedge(&self, h: usize) -> &HalfEdge {
        &self.halfedges[h]
    }

    /// The three vertex indices of face `f`, in orientation order.
    pub fn face_vertices(&self, f: usize) -> [usize; 3] {
        let h0 = self.face_halfedge[f] as usize;
        let h1 = self.halfedges[h0].next as usize;
        let h2 = self.halfedges[h1].next as usize;
        [
            self.halfedges[h0].origin as usize,
            self.halfedges[h1].origin as usize,
            self.halfedges[h2].origin as usize,
        ]
    }

    /// The three corner positions of face `f`.
    pub fn face_points(&self, f: usize) -> [Vector3<T>; 3] {
        let [a, b, c] = self.face_vertices(f);
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    pub fn face_area(&self, f: usize) -> T {
        let [a, b, c] = self.face_points(f);
        (b - a).cross(&(c - a)).norm() * real::<T>(0.5)
    }

    pub fn face_normal(&self, f: usize) -> Vector3<T> {
        let [a, b, c] = self.face_points(f);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > T::zero() {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Face list in index form (orientation order), for rebuilds and I/O.
    pub fn face_list(&self) -> Vec<[usize; 3]> {
        (0..self.face_count()).map(|f| self.face_vertices(f)).collect()
    }

    /// One-ring neighbor vertex indices of `v`, counterclockwise.
    pub fn vertex_neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let start = self.vertex_halfedge[v];
        let mut h = start;
        loop {
            let he = &self.halfedges[h as usize];
            out.push(self.halfedges[he.next as usize].origin as usize);
            let prev = self.halfedges[he.next as usize].next;
            h = self.halfedges[prev as usize].twin;
            if h == start {
                break;
            }
        }
        out
    }

    /// Faces incident to vertex `v`, counterclockwise.
    pub fn vertex_faces(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let start = self.vertex_halfedge[v];
        let mut h = start;
        loop {
            let he = &self.halfedges[h as usize];
            out.push(he.face as usize);
            let prev = self.halfedges[he.next as usize].next;
            h = self.halfedges[prev as usize].twin;
            if h == start {
                break;
            }
        }
        out
    }

    /// Same connectivity, new positions.
    pub fn with_positions(&self, positions: Vec<Vector3<T>>) -> Self {
        assert_eq!(positions.len(), self.positions.len());
        TriMesh {
            positions,
            halfedges: self.halfedges.clone(),
            face_halfedge: self.face_halfedge.clone(),
            vertex_halfedge: self.vertex_halfedge.clone(),
        }
    }

    /// Area-weighted surface centroid.
    pub fn area_centroid(&self) -> Vector3<T> {
        let mut acc = Vector3::zeros();
        let mut total = T::zero();
        for f in 0..self.face_count() {
            let [a, b, c] = self.face_points(f);
            let area = (b - a).cross(&(c - a)).norm() * real::<T>(0.5);
            acc += (a + b + c) * (area / real::<T>(3.0));
            total += area;
        }
        acc / total
    }

    /// Angle-weighted vertex normal (robust for immersed surfaces).
    pub fn vertex_normal(&self, v: usize) -> Vector3<T> {
        let mut n = Vector3::zeros();
        let start = self.vertex_halfedge[v];
        let mut h = start;
        loop {
            let he = &self.halfedges[h as usize];
            let b = self.halfedges[he.next as usize].origin as usize;
            let next = &self.halfedges[he.next as usize];
            let c = self.halfedges[next.next as usize].origin as usize;
            let e1 = self.positions[b] - self.positions[v];
            let e2 = self.positions[c] - self.positions[v];
            let cross = e1.cross(&e2);
            let denom = e1.norm() * e2.norm();
            if denom > T::zero() {
                let cosang = (e1.dot(&e2) / denom).clamp(-T::one(), T::one());
                n += cross.normalize() * cosang.acos();
            }
            let prev = self.halfedges[he.next as usize].next;
            h = self.halfedges[prev as usize].twin;
            if h == start {
                break;
            }
        }
        let len = n.norm();
        if len > T::zero() {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// All scalar metrics in one pass.
    pub fn metrics(&self) -> MeshMetrics<T> {
        let nf = self.face_count();
        let total_area = pairwise_sum_with(nf, &|f| self.face_area(f));
        let signed_volume = pairwise_sum_with(nf, &|f| {
            let [a, b, c] = self.face_points(f);
            a.dot(&b.cross(&c)) / real::<T>(6.0)
        });

        // Corner angles per vertex.
        let mut angle_sum = vec![T::zero(); self.vertex_count()];
        let mut min_quality = T::one();
        let mut edge_len_sum = T::zero();
        let mut max_edge = T::zero();
        for f in 0..nf {
            let vs = self.face_vertices(f);
            let ps = self.face_points(f);
            let mut l2 = T::zero();
            for k in 0..3 {
                let e = ps[(k + 1) % 3] - ps[k];
                let len = e.norm();
                l2 += len * len;
                // each undirected edge visited twice; halve later
                edge_len_sum += len;
                if len > max_edge {
                    max_edge = len;
                }
                let u = ps[(k + 1) % 3] - ps[k];
                let w = ps[(k + 2) % 3] - ps[k];
                let denom = u.norm() * w.norm();
                if denom > T::zero() {
                    let cosang = (u.dot(&w) / denom).clamp(-T::one(), T::one());
                    angle_sum[vs[k]] += cosang.acos();
                }
            }
            let area = self.face_area(f);
            if l2 > T::zero() {
                let q = real::<T>(4.0) * real::<T>(3.0).sqrt() * area / l2;
                if q < min_quality {
                    min_quality = q;
                }
            }
        }
        let two_pi = T::two_pi();
        let total_angle_defect =
            pairwise_sum_with(self.vertex_count(), &|v| two_pi - angle_sum[v]);

        MeshMetrics {
            vertex_count: self.vertex_count(),
            edge_count: self.edge_count(),
            face_count: nf,
            euler_characteristic: self.vertex_count() as i64 - self.edge_count() as i64
                + nf as i64,
            total_area,
            signed_volume,
            total_angle_defect,
            mean_edge_length: edge_len_sum / real::<T>((3 * nf) as f64),
            max_edge_length: max_edge,
            min_face_quality: min_quality,
        }
    }

    /// Degenerate-face threshold for this mesh: `DEGENERACY_FACTOR * mean face area`.
    pub fn degeneracy_threshold(&self) -> T {
        let nf = self.face_count();
        let total = pairwise_sum_with(nf, &|f| self.face_area(f));
        real::<T>(DEGENERACY_FACTOR) * total / real::<T>(nf as f64)
    }

    /// Errors if any face area is at or below the degeneracy threshold.
    pub fn check_face_areas(&self) -> Result<(), MeshError> {
        let threshold = self.degeneracy_threshold();
        for f in 0..self.face_count() {
            let a = self.face_area(f);
            if a <= threshold {
                return Err(MeshError::DegenerateFace(
                    f,
                    a.as_f64(),
                    threshold.as_f64(),
                ));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> (Vector3<T>, Vector3<T>) {
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions {
            for k in 0..3 {
                if p[k] < lo[k] {
                    lo[k] = p[k];
                }
                if p[k] > hi[k] {
                    hi[k] = p[k];
                }
            }
        }
        (lo, hi)
    }
}
