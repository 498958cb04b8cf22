//! Chains raw intersection segments into closed double curves.
//!
//! Segment endpoints within the chaining tolerance form a node; every node
//! of a closed immersed surface's intersection set has even degree (curves
//! have no ends), and walking paired endpoints around recovers the curves.
//! Junction nodes of degree four or more appear where double curves pass
//! through an exactly coincident point (e.g. two sheets crossing through a
//! pinned symmetric vertex); there the walk pairs each arrival with the most
//! nearly opposite departure, which continues each curve straight through
//! the junction.

use super::{cluster_points, DoubleCurve, IntersectError, IntersectionSegment};
use crate::real::{real, Real};
use nalgebra::Vector3;

pub(crate) fn chain_segments<T: Real>(
    segments: &[IntersectionSegment<T>],
    tol: T,
) -> Result<Vec<DoubleCurve<T>>, IntersectError> {
    let n = segments.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    // Endpoint instances: 2s is segment s's start, 2s+1 its end.
    let mut endpoint = Vec::with_capacity(2 * n);
    for seg in segments {
        endpoint.push(seg.start);
        endpoint.push(seg.end);
    }
    let node_of = cluster_points(&endpoint, tol);
    let node_count = node_of.iter().map(|&c| c as usize + 1).max().unwrap_or(0);

    // Node centroids (over all instances, including ones later dropped —
    // they are within tolerance anyway).
    let mut centroid = vec![Vector3::<T>::zeros(); node_count];
    let mut weight = vec![0usize; node_count];
    for (e, p) in endpoint.iter().enumerate() {
        centroid[node_of[e] as usize] += p;
        weight[node_of[e] as usize] += 1;
    }
    for (c, w) in centroid.iter_mut().zip(&weight) {
        *c /= real::<T>((*w).max(1) as f64);
    }

    // Segments whose two endpoints land in one node are point contacts at
    // the tolerance scale (corner clips); they carry no curve length.
    let degenerate: Vec<bool> = (0..n).map(|s| node_of[2 * s] == node_of[2 * s + 1]).collect();

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for e in 0..2 * n {
        if !degenerate[e / 2] {
            incident[node_of[e] as usize].push(e);
        }
    }

    // Pair arrivals with departures at every node: most-opposite outgoing
    // directions continue a curve through the node.
    let mut partner = vec![usize::MAX; 2 * n];
    for (node, list) in incident.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        if list.len() % 2 != 0 {
            let p = centroid[node];
            return Err(IntersectError::ToleranceBreakdown {
                x: p.x.as_f64(),
                y: p.y.as_f64(),
                z: p.z.as_f64(),
                degree: list.len(),
                tol: tol.as_f64(),
            });
        }
        // Direction pointing away from the node along each segment.
        let away: Vec<Vector3<T>> = list
            .iter()
            .map(|&e| (endpoint[e ^ 1] - endpoint[e]).normalize())
            .collect();
        let mut unpaired: Vec<usize> = (0..list.len()).collect();
        while !unpaired.is_empty() {
            let mut best = (0, 1);
            let mut best_dot = real::<T>(2.0);
            for (a, &i) in unpaired.iter().enumerate() {
                for (b, &j) in unpaired.iter().enumerate().skip(a + 1) {
                    let d = away[i].dot(&away[j]);
                    if d < best_dot {
                        best_dot = d;
                        best = (a, b);
                    }
                }
            }
            let (a, b) = best;
            let (i, j) = (list[unpaired[a]], list[unpaired[b]]);
            partner[i] = j;
            partner[j] = i;
            // Remove b first: it is the larger position.
            unpaired.remove(b);
            unpaired.remove(a);
        }
    }

    // Walk the pairing. Entering a segment at instance `i`, we exit at the
    // sibling `i ^ 1` and continue along that node's partner.
    let mut visited = vec![false; n];
    let mut curves = Vec::new();
    for start in 0..n {
        if visited[start] || degenerate[start] {
            continue;
        }
        let mut points = Vec::new();
        let mut seg_ids = Vec::new();
        let mut i = 2 * start;
        loop {
            let s = i / 2;
            debug_assert!(!visited[s], "pairing produced a non-simple walk");
            visited[s] = true;
            seg_ids.push(s);
            let exit = i ^ 1;
            points.push(centroid[node_of[exit] as usize]);
            i = partner[exit];
            if i == 2 * start {
                break;
            }
        }
        curves.push(DoubleCurve { points, segments: seg_ids });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: [f64; 3], b: [f64; 3]) -> IntersectionSegment<f64> {
        IntersectionSegment {
            faces: (0, 1),
            start: Vector3::from(a),
            end: Vector3::from(b),
        }
    }

    #[test]
    fn square_chains_into_one_closed_curve() {
        let segments = vec![
            seg([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            seg([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            seg([1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
            seg([0.0, 1.0, 0.0], [0.0, 0.0, 0.0]),
        ];
        let curves = chain_segments(&segments, 1e-9).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].segments.len(), 4);
        assert!((curves[0].length() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_loops_stay_separate() {
        let mut segments = vec![
            seg([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            seg([1.0, 0.0, 0.0], [0.5, 1.0, 0.0]),
            seg([0.5, 1.0, 0.0], [0.0, 0.0, 0.0]),
        ];
        for s in 0..3 {
            let t = &segments[s];
            segments.push(seg(
                [t.start.x + 10.0, t.start.y, t.start.z],
                [t.end.x + 10.0, t.end.y, t.end.z],
            ));
        }
        let curves = chain_segments(&segments, 1e-9).unwrap();
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].segments.len(), 3);
        assert_eq!(curves[1].segments.len(), 3);
    }

    #[test]
    fn open_chain_is_a_tolerance_breakdown() {
        let segments = vec![
            seg([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            seg([1.0, 0.0, 0.0], [2.0, 0.0, 0.0]),
        ];
        match chain_segments(&segments, 1e-9) {
            Err(IntersectError::ToleranceBreakdown { degree, .. }) => assert_eq!(degree, 1),
            other => panic!("expected a breakdown, got {other:?}"),
        }
    }

    #[test]
    fn endpoints_within_tolerance_are_identified() {
        let segments = vec![
            seg([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            seg([1.0 + 5e-10, 0.0, 0.0], [1.0, 1.0, 0.0]),
            seg([1.0, 1.0 - 5e-10, 0.0], [0.0, 0.0, 5e-10]),
        ];
        let curves = chain_segments(&segments, 1e-8).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].segments.len(), 3);
    }

    #[test]
    fn junction_node_continues_curves_straight_through() {
        // A figure of eight: two diamond lobes meeting at the origin. The
        // degree-4 node must pair opposite tangents, yielding one closed
        // curve that runs straight through the crossing twice.
        let segments = vec![
            seg([0.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            seg([1.0, 1.0, 0.0], [2.0, 0.0, 0.0]),
            seg([2.0, 0.0, 0.0], [1.0, -1.0, 0.0]),
            seg([1.0, -1.0, 0.0], [0.0, 0.0, 0.0]),
            seg([0.0, 0.0, 0.0], [-1.0, 1.0, 0.0]),
            seg([-1.0, 1.0, 0.0], [-2.0, 0.0, 0.0]),
            seg([-2.0, 0.0, 0.0], [-1.0, -1.0, 0.0]),
            seg([-1.0, -1.0, 0.0], [0.0, 0.0, 0.0]),
        ];
        let curves = chain_segments(&segments, 1e-9).unwrap();
        assert_eq!(curves.len(), 1, "tangent pairing crosses the junction");
        assert_eq!(curves[0].segments.len(), 8);
    }

    #[test]
    fn corner_clips_are_dropped_without_breaking_closure()
    {
        let segments = vec![
            seg([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            seg([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            seg([1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
            seg([0.0, 1.0, 0.0], [0.0, 0.0, 0.0]),
            // Sub-tolerance sliver at a corner: a point contact.
            seg([1.0, 1e-10, 0.0], [1.0 - 1e-10, 0.0, 0.0]),
        ];
        let curves = chain_segments(&segments, 1e-8).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].segments.len(), 4, "the sliver joins no curve");
        assert!(!curves[0].segments.contains(&4));
    }
}
