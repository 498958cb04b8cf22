//! Triangle–triangle intersection primitive: interval overlap along the
//! plane–plane line, with explicit 3D endpoints so every reported endpoint
//! lies on an edge of one of the two triangles.

use crate::real::{real, Real};
use nalgebra::Vector3;

/// Result of intersecting two triangles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TriTriOutcome<T: Real> {
    /// No intersection (point or edge-grazing contact also lands here: the
    /// crossing has no interior).
    Disjoint,
    /// A proper intersection segment.
    Segment(Vector3<T>, Vector3<T>),
    /// The triangles are coplanar within tolerance; the caller resolves this
    /// by deterministic perturbation (see `self_intersection`).
    Coplanar,
}

/// Chord of `tri` cut by the plane with unit normal `n` through offset `d`
/// (plane equation `n·x = d`): the 0, 1, or 2 points where the triangle's
/// boundary crosses the plane. Vertices within `eps` of the plane count as
/// lying on it.
fn plane_chord<T: Real>(
    tri: &[Vector3<T>; 3],
    n: &Vector3<T>,
    d: T,
    eps: T,
) -> Option<[Vector3<T>; 2]> {
    let dist = [
        n.dot(&tri[0]) - d,
        n.dot(&tri[1]) - d,
        n.dot(&tri[2]) - d,
    ];
    let side = |x: T| {
        if x.abs() <= eps {
            0i8
        } else if x > T::zero() {
            1
        } else {
            -1
        }
    };
    let s = [side(dist[0]), side(dist[1]), side(dist[2])];

    let mut points: Vec<Vector3<T>> = Vec::with_capacity(2);
    // On-plane vertices are chord endpoints themselves.
    for i in 0..3 {
        if s[i] == 0 {
            points.push(tri[i]);
        }
    }
    // Sign-changing edges contribute their crossing point.
    for i in 0..3 {
        let j = (i + 1) % 3;
        if s[i] * s[j] < 0 {
            let t = dist[i] / (dist[i] - dist[j]);
            points.push(tri[i] + (tri[j] - tri[i]) * t);
        }
    }
    match points.len() {
        2 => Some([points[0], points[1]]),
        // 0 or 1: no interior crossing. 3 means all vertices within eps of
        // the plane, which the caller already classified as coplanar.
        _ => None,
    }
}

/// Intersects two nondegenerate triangles.
///
/// The tolerance for "on the plane" and "parallel planes" scales with the
/// size of the input pair, so the primitive behaves identically under
/// uniform scaling.
pub fn tri_tri_intersect<T: Real>(
    t1: &[Vector3<T>; 3],
    t2: &[Vector3<T>; 3],
) -> TriTriOutcome<T> {
    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let n2 = (t2[1] - t2[0]).cross(&(t2[2] - t2[0]));
    let n1 = n1.normalize();
    let n2 = n2.normalize();

    let scale = (t1[0].norm())
        .max(t1[1].norm())
        .max(t1[2].norm())
        .max(t2[0].norm())
        .max(t2[1].norm())
        .max(t2[2].norm())
        .max(T::one() * real::<T>(1e-30));
    let eps = scale * real::<T>(1e-12);

    // Early out: all of t1 strictly on one side of t2's plane, or vice versa.
    let d2 = n2.dot(&t2[0]);
    let h1 = [
        n2.dot(&t1[0]) - d2,
        n2.dot(&t1[1]) - d2,
        n2.dot(&t1[2]) - d2,
    ];
    if h1.iter().all(|&x| x > eps) || h1.iter().all(|&x| x < -eps) {
        return TriTriOutcome::Disjoint;
    }
    if h1.iter().all(|&x| x.abs() <= eps) {
        return TriTriOutcome::Coplanar;
    }
    let d1 = n1.dot(&t1[0]);
    let h2 = [
        n1.dot(&t2[0]) - d1,
        n1.dot(&t2[1]) - d1,
        n1.dot(&t2[2]) - d1,
    ];
    if h2.iter().all(|&x| x > eps) || h2.iter().all(|&x| x < -eps) {
        return TriTriOutcome::Disjoint;
    }
    if h2.iter().all(|&x| x.abs() <= eps) {
        return TriTriOutcome::Coplanar;
    }

    // Near-parallel but not coplanar: the chord machinery below would divide
    // by a tiny line direction; such pairs have no robust interior crossing.
    let line = n1.cross(&n2);
    let line_norm = line.norm();
    if line_norm <= real::<T>(1e-9) {
        return TriTriOutcome::Disjoint;
    }
    let line = line / line_norm;

    let Some(c1) = plane_chord(t1, &n2, d2, eps) else {
        return TriTriOutcome::Disjoint;
    };
    let Some(c2) = plane_chord(t2, &n1, d1, eps) else {
        return TriTriOutcome::Disjoint;
    };

    // Both chords lie on the plane–plane line; overlap their parameter
    // intervals along it.
    let params = [
        line.dot(&c1[0]),
        line.dot(&c1[1]),
        line.dot(&c2[0]),
        line.dot(&c2[1]),
    ];
    let (a1, b1) = if params[0] <= params[1] { (0, 1) } else { (1, 0) };
    let (a2, b2) = if params[2] <= params[3] { (2, 3) } else { (3, 2) };
    let (lo_idx, lo) = if params[a1] >= params[a2] {
        (a1, params[a1])
    } else {
        (a2, params[a2])
    };
    let (hi_idx, hi) = if params[b1] <= params[b2] {
        (b1, params[b1])
    } else {
        (b2, params[b2])
    };
    if hi - lo <= eps {
        return TriTriOutcome::Disjoint;
    }
    let point_of = |idx: usize| {
        if idx < 2 {
            c1[idx]
        } else {
            c2[idx - 2]
        }
    };
    TriTriOutcome::Segment(point_of(lo_idx), point_of(hi_idx))
}
