//! Refinement: conforming midpoint subdivision of long edges.

use super::{MeshError, TriMesh};
use crate::real::{real, Real};
use nalgebra::Vector3;
use std::collections::HashMap;

/// Bisects every edge strictly longer than `edge_length_threshold` at its
/// midpoint and re-triangulates each face conformingly (1→2, 1→3, or 1→4
/// depending on how many of its edges were split). No vertex is moved and no
/// new vertex leaves its edge, so the surface is unchanged as a point set.
///
/// A single pass only: edges created by the split are not re-examined even if
/// they exceed the threshold (callers loop if they want a bound on all edges).
pub fn subdivide<T: Real>(
    mesh: &TriMesh<T>,
    edge_length_threshold: T,
) -> Result<TriMesh<T>, MeshError> {
    let mut positions: Vec<Vector3<T>> = mesh.positions().to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();

    let faces = mesh.face_list();
    for f in &faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if midpoint.contains_key(&key) {
                continue;
            }
            if (positions[a] - positions[b]).norm() > edge_length_threshold {
                positions.push((positions[a] + positions[b]) * real::<T>(0.5));
                midpoint.insert(key, positions.len() - 1);
            }
        }
    }

    if midpoint.is_empty() {
        return Ok(mesh.clone());
    }

    let mut out_faces: Vec<[usize; 3]> = Vec::with_capacity(faces.len());
    for f in &faces {
        let mid = |k: usize| -> Option<usize> {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            midpoint.get(&(a.min(b), a.max(b))).copied()
        };
        let m: [Option<usize>; 3] = [mid(0), mid(1), mid(2)];
        let count = m.iter().filter(|x| x.is_some()).count();
        let [a, b, c] = *f;
        match count {
            0 => out_faces.push(*f),
            3 => {
                let (p, q, r) = (m[0].unwrap(), m[1].unwrap(), m[2].unwrap());
                out_faces.push([a, p, r]);
                out_faces.push([p, b, q]);
                out_faces.push([r, q, c]);
                out_faces.push([p, q, r]);
            }
            1 => {
                // Rotate so the split edge is (a, b).
                let k = m.iter().position(|x| x.is_some()).unwrap();
                let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                let p = m[k].unwrap();
                out_faces.push([a, p, c]);
                out_faces.push([p, b, c]);
            }
            2 => {
                // Rotate so the split edges are (a, b) and (b, c); the quad
                // left after cutting off (p, b, q) is split by the diagonal
                // from a to q, a fixed deterministic choice.
                let k = m.iter().position(|x| x.is_none()).unwrap(); // unsplit edge starts at f[k]
                let (c, a, b) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                let p = m[(k + 1) % 3].unwrap(); // midpoint of (a, b)
                let q = m[(k + 2) % 3].unwrap(); // midpoint of (b, c)
                out_faces.push([p, b, q]);
                out_faces.push([a, p, q]);
                out_faces.push([a, q, c]);
            }
            _ => unreachable!(),
        }
    }

    let result = TriMesh::build_and_validate(positions, &out_faces)?;
    result
        .check_face_areas()
        .map_err(|_| MeshError::DegenerateResult)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use approx::assert_relative_eq;

    #[test]
    fn infinite_threshold_is_identity() {
        let m: TriMesh<f64> = icosphere(1, 1.0).unwrap();
        let out = subdivide(&m, f64::INFINITY).unwrap();
        assert_eq!(out.face_count(), m.face_count());
        assert_eq!(out.vertex_count(), m.vertex_count());
    }

    #[test]
    fn splitting_every_edge_quadruples_faces() {
        let m: TriMesh<f64> = icosphere(0, 1.0).unwrap();
        let shortest = (0..m.face_count())
            .flat_map(|f| {
                let p = m.face_points(f);
                (0..3).map(move |k| (p[(k + 1) % 3] - p[k]).norm())
            })
            .fold(f64::INFINITY, f64::min);
        let out = subdivide(&m, shortest * 0.999).unwrap();
        assert_eq!(out.face_count(), 80);
        assert_eq!(out.metrics().euler_characteristic, 2);
    }

    #[test]
    fn area_is_preserved_exactly_for_planar_splits() {
        let m: TriMesh<f64> = icosphere(1, 1.0).unwrap();
        let before = m.metrics().total_area;
        let out = subdivide(&m, 0.0).unwrap();
        assert_relative_eq!(out.metrics().total_area, before, max_relative = 1e-12);
        assert_relative_eq!(
            out.metrics().signed_volume,
            m.metrics().signed_volume,
            max_relative = 1e-12
        );
    }

    #[test]
    fn partial_split_is_conforming() {
        // Split only the edges of one cap of the icosahedron: faces touching
        // split edges must subdivide conformingly, everything else stays.
        let m: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        // Threshold between the max and min edge length splits a strict subset.
        let mut lens: Vec<f64> = (0..m.face_count())
            .flat_map(|f| {
                let p = m.face_points(f);
                (0..3).map(move |k| (p[(k + 1) % 3] - p[k]).norm())
            })
            .collect();
        lens.sort_by(f64::total_cmp);
        let threshold = lens[lens.len() / 2];
        let out = subdivide(&m, threshold).unwrap();
        assert!(out.face_count() > m.face_count());
        assert_eq!(out.metrics().euler_characteristic, 2);
        out.check_face_areas().unwrap();
    }
}
