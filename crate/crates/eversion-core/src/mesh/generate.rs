//! Mesh generators: the subdivided icosahedron ("icosphere").

use super::{MeshError, TriMesh};
use crate::real::{real, Real};
use nalgebra::Vector3;
use std::collections::HashMap;

/// Highest supported icosphere level; level 8 already has 1.3M faces.
pub const MAX_ICOSPHERE_LEVEL: u32 = 8;

/// Icosphere: the regular icosahedron with every edge midpoint-split `level`
/// times, all vertices projected to the origin-centered sphere of the given
/// radius. Level 0 is the icosahedron itself (12 vertices, 20 faces); each
/// level quadruples the face count.
pub fn icosphere<T: Real>(level: u32, radius: T) -> Result<TriMesh<T>, MeshError> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(MeshError::LevelTooLarge(level, MAX_ICOSPHERE_LEVEL));
    }
    assert!(radius > T::zero(), "icosphere radius must be positive");

    // Vertices of the regular icosahedron from three golden rectangles.
    let phi = real::<T>((1.0 + 5.0f64.sqrt()) / 2.0);
    let one = T::one();
    let raw = [
        (-one, phi, T::zero()),
        (one, phi, T::zero()),
        (-one, -phi, T::zero()),
        (one, -phi, T::zero()),
        (T::zero(), -one, phi),
        (T::zero(), one, phi),
        (T::zero(), -one, -phi),
        (T::zero(), one, -phi),
        (phi, T::zero(), -one),
        (phi, T::zero(), one),
        (-phi, T::zero(), -one),
        (-phi, T::zero(), one),
    ];
    let mut positions: Vec<Vector3<T>> = raw
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();

    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let p = ((positions[a] + positions[b]) * real::<T>(0.5)).normalize();
                    positions.push(p);
                    positions.len() - 1
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }

    if radius != T::one() {
        for p in &mut positions {
            *p *= radius;
        }
    }
    TriMesh::build_and_validate(positions, &faces)
}
