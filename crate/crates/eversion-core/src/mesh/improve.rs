//! Mesh quality maintenance: Delaunay-style edge flips, tangential vertex
//! smoothing, and collapse repair of degenerate faces.
//!
//! `improve` never fails: if anything goes wrong (or the bending energy rises
//! beyond the configured tolerance) the original mesh is returned unchanged
//! and the report says so.

use super::{MeshError, TriMesh};
use crate::real::{real, Real};
use crate::willmore::willmore_energy;
use nalgebra::Vector3;
use std::collections::HashMap;

/// Settings for [`improve`].
#[derive(Clone, Copy, Debug)]
pub struct ImproveConfig<T: Real> {
    /// Apply equiangulation edge flips (changes connectivity; disable inside
    /// symmetry-constrained flows, where connectivity must stay equivariant).
    pub enable_flips: bool,
    /// Maximum sweeps of the flip loop.
    pub max_flip_passes: usize,
    /// Number of tangential-smoothing sweeps.
    pub smoothing_passes: usize,
    /// Fraction of the tangential centroid offset applied per sweep.
    pub smoothing_lambda: T,
    /// Collapse edges of degenerate (below-area-threshold) faces.
    pub repair_degenerate: bool,
    /// Allowed bending-energy increase before the whole step is rolled back.
    pub energy_tolerance: T,
}

impl<T: Real> Default for ImproveConfig<T> {
    fn default() -> Self {
        ImproveConfig {
            enable_flips: true,
            max_flip_passes: 8,
            smoothing_passes: 1,
            smoothing_lambda: real(0.5),
            repair_degenerate: true,
            energy_tolerance: T::zero(),
        }
    }
}

/// What [`improve`] did (or declined to do).
#[derive(Clone, Copy, Debug, Default)]
pub struct ImproveReport {
    pub flips: usize,
    pub smoothing_passes: usize,
    pub collapses: usize,
    /// The improved mesh raised the bending energy beyond tolerance (or broke
    /// validity), so the input was returned instead.
    pub rolled_back: bool,
}

/// Improves mesh quality without changing the surface's topology type:
/// collapse repair of degenerate faces, equiangulation flips, then tangential
/// smoothing. The result is kept only if the Willmore energy does not rise
/// by more than `config.energy_tolerance`.
pub fn improve<T: Real>(mesh: &TriMesh<T>, config: &ImproveConfig<T>) -> (TriMesh<T>, ImproveReport) {
    let mut report = ImproveReport::default();
    let energy_before = willmore_energy(mesh).map(|b| b.total);

    let mut current = mesh.clone();

    if config.repair_degenerate {
        match repair_degenerate_faces(&current, &mut report) {
            Ok(m) => current = m,
            Err(_) => {
                report.rolled_back = true;
                return (mesh.clone(), report);
            }
        }
    }

    if config.enable_flips {
        match equiangulate(&current, config.max_flip_passes, &mut report) {
            Ok(m) => current = m,
            Err(_) => {
                report.rolled_back = true;
                return (mesh.clone(), report);
            }
        }
    }

    for _ in 0..config.smoothing_passes {
        current = smooth_tangentially(&current, config.smoothing_lambda);
        report.smoothing_passes += 1;
    }

    // Energy guard: roll the whole step back if the energy rose beyond
    // tolerance (or became unevaluable while the input was fine).
    if let Ok(before) = energy_before {
        match willmore_energy(&current) {
            Ok(after) if after.total <= before + config.energy_tolerance => {}
            _ => {
                report.rolled_back = true;
                return (mesh.clone(), report);
            }
        }
    }

    (current, report)
}

/// One flip sweep at a time: flips every edge whose opposite-angle cotangent
/// sum is negative (the intrinsic Delaunay criterion), skipping illegal flips.
fn equiangulate<T: Real>(
    mesh: &TriMesh<T>,
    max_passes: usize,
    report: &mut ImproveReport,
) -> Result<TriMesh<T>, MeshError> {
    let mut faces = mesh.face_list();
    let positions = mesh.positions().to_vec();
    let eps = real::<T>(1e-10);
    let area_floor = mesh.degeneracy_threshold();

    for _ in 0..max_passes {
        // Undirected edge -> the faces on both sides.
        let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut edge_exists: std::collections::HashSet<(usize, usize)> =
            std::collections::HashSet::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                edge_faces.entry(key).or_default().push(fi);
                edge_exists.insert(key);
            }
        }

        let mut keys: Vec<(usize, usize)> = edge_faces.keys().copied().collect();
        keys.sort_unstable();

        let mut dirty = vec![false; faces.len()];
        let mut flips_this_pass = 0usize;
        for key in keys {
            let incident = &edge_faces[&key];
            if incident.len() != 2 {
                continue;
            }
            let (f1, f2) = (incident[0], incident[1]);
            if dirty[f1] || dirty[f2] {
                continue;
            }
            let (a, b) = key;
            let c = opposite_vertex(&faces[f1], a, b);
            let d = opposite_vertex(&faces[f2], a, b);
            if c == d {
                continue;
            }
            let new_key = (c.min(d), c.max(d));
            if edge_exists.contains(&new_key) {
                continue; // flip would duplicate an existing edge
            }
            let cot_c = cot_angle(&positions, c, a, b);
            let cot_d = cot_angle(&positions, d, a, b);
            if cot_c + cot_d >= -eps {
                continue;
            }
            // Orient the replacement triangles to match f1's winding.
            let (a1, b1) = oriented_edge(&faces[f1], a, b);
            let t1 = [d, b1, c];
            let t2 = [d, c, a1];
            if triangle_area(&positions, t1) <= area_floor
                || triangle_area(&positions, t2) <= area_floor
            {
                continue;
            }
            faces[f1] = t1;
            faces[f2] = t2;
            dirty[f1] = true;
            dirty[f2] = true;
            edge_exists.insert(new_key);
            flips_this_pass += 1;
        }

        report.flips += flips_this_pass;
        if flips_this_pass == 0 {
            break;
        }
    }

    TriMesh::build_and_validate(positions, &faces)
}

/// The face's vertex that is not `a` or `b`.
fn opposite_vertex(face: &[usize; 3], a: usize, b: usize) -> usize {
    *face.iter().find(|&&v| v != a && v != b).unwrap()
}

/// Returns `(a, b)` ordered as the face traverses them.
fn oriented_edge(face: &[usize; 3], a: usize, b: usize) -> (usize, usize) {
    for k in 0..3 {
        if face[k] == a && face[(k + 1) % 3] == b {
            return (a, b);
        }
        if face[k] == b && face[(k + 1) % 3] == a {
            return (b, a);
        }
    }
    unreachable!("edge not on face");
}

/// Cotangent of the angle at `apex` subtending edge `(a, b)`.
fn cot_angle<T: Real>(positions: &[Vector3<T>], apex: usize, a: usize, b: usize) -> T {
    let u = positions[a] - positions[apex];
    let w = positions[b] - positions[apex];
    let cross = u.cross(&w).norm();
    if cross > T::zero() {
        u.dot(&w) / cross
    } else {
        T::zero()
    }
}

fn triangle_area<T: Real>(positions: &[Vector3<T>], t: [usize; 3]) -> T {
    let e1 = positions[t[1]] - positions[t[0]];
    let e2 = positions[t[2]] - positions[t[0]];
    e1.cross(&e2).norm() * real::<T>(0.5)
}

/// Moves every vertex a fraction `lambda` of the way toward its one-ring
/// centroid, keeping only the component tangent to the surface (projected out
/// of the area-weighted vertex normal) so the smoothing redistributes
/// vertices without shrinking the surface.
fn smooth_tangentially<T: Real>(mesh: &TriMesh<T>, lambda: T) -> TriMesh<T> {
    let old = mesh.positions();
    let mut new_positions = old.to_vec();
    for v in 0..mesh.vertex_count() {
        let neighbors = mesh.vertex_neighbors(v);
        if neighbors.is_empty() {
            continue;
        }
        let mut centroid = Vector3::zeros();
        for &u in &neighbors {
            centroid += old[u];
        }
        centroid /= real::<T>(neighbors.len() as f64);
        let offset = centroid - old[v];
        let normal = mesh.vertex_normal(v);
        let tangential = offset - normal * offset.dot(&normal);
        new_positions[v] = old[v] + tangential * lambda;
    }
    mesh.with_positions(new_positions)
}

/// Collapses the shortest edge of every degenerate face (when the collapse is
/// legal), rebuilding the mesh. At most a handful of iterations; gives up and
/// errors if a degenerate face cannot be repaired.
fn repair_degenerate_faces<T: Real>(
    mesh: &TriMesh<T>,
    report: &mut ImproveReport,
) -> Result<TriMesh<T>, MeshError> {
    let mut current = mesh.clone();
    for _ in 0..8 {
        let threshold = current.degeneracy_threshold();
        let bad = (0..current.face_count()).find(|&f| current.face_area(f) <= threshold);
        let Some(f) = bad else {
            return Ok(current);
        };
        let vs = current.face_vertices(f);
        let ps = current.face_points(f);
        // Shortest edge of the degenerate face.
        let (mut a, mut b, mut best) = (vs[0], vs[1], (ps[1] - ps[0]).norm());
        for k in 1..3 {
            let len = (ps[(k + 1) % 3] - ps[k]).norm();
            if len < best {
                best = len;
                a = vs[k];
                b = vs[(k + 1) % 3];
            }
        }
        current = collapse_edge(&current, a, b)?;
        report.collapses += 1;
    }
    Err(MeshError::DegenerateResult)
}

/// Collapses edge `(keep, drop)` to the midpoint, removing the two incident
/// faces. Fails if the link condition is violated (the collapse would pinch
/// the surface) or the result does not validate.
fn collapse_edge<T: Real>(mesh: &TriMesh<T>, keep: usize, drop: usize) -> Result<TriMesh<T>, MeshError> {
    // Link condition: common neighbors of the endpoints must be exactly the
    // two vertices opposite the collapsing edge.
    let nk: std::collections::HashSet<usize> = mesh.vertex_neighbors(keep).into_iter().collect();
    let nd: std::collections::HashSet<usize> = mesh.vertex_neighbors(drop).into_iter().collect();
    let common: Vec<usize> = nk.intersection(&nd).copied().collect();
    if common.len() != 2 {
        return Err(MeshError::NonManifoldVertex(keep));
    }

    let mut positions = mesh.positions().to_vec();
    positions[keep] = (positions[keep] + positions[drop]) * real::<T>(0.5);

    let mut faces: Vec<[usize; 3]> = Vec::with_capacity(mesh.face_count());
    for f in mesh.face_list() {
        let has_keep = f.contains(&keep);
        let has_drop = f.contains(&drop);
        if has_keep && has_drop {
            continue; // the two faces spanning the collapsed edge vanish
        }
        let mut g = f;
        if has_drop {
            for v in &mut g {
                if *v == drop {
                    *v = keep;
                }
            }
        }
        faces.push(g);
    }

    // Re-index to drop the removed vertex.
    let mut remap = vec![usize::MAX; positions.len()];
    let mut kept_positions = Vec::with_capacity(positions.len() - 1);
    for (v, p) in positions.iter().enumerate() {
        if v != drop {
            remap[v] = kept_positions.len();
            kept_positions.push(*p);
        }
    }
    for f in &mut faces {
        for v in f {
            *v = remap[*v];
        }
    }

    TriMesh::build_and_validate(kept_positions, &faces)
}
