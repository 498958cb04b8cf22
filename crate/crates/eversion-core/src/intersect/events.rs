//! Topological event detection across the frames of a homotopy.
//!
//! As an immersed sphere deforms, its self-intersection picture changes at
//! isolated times, and between those times only deforms isotopically.  This
//! module compares the [`SelfIntersectionReport`]s of consecutive frames and
//! pins each change to a frame interval:
//!
//! * a **lake** — a new double curve is born at a tangency (count +1);
//! * an **island** — a double curve shrinks to a point and vanishes (−1);
//! * an **isthmus** — double curves reconnect through a saddle tangency;
//! * a **triple pair** — two triple points are created or annihilated
//!   together when a double curve sweeps through another sheet;
//! * a **quadruple point** — four sheets pass through one point, visible as
//!   a frame whose report carries a [`QuadrupleCluster`].
//!
//! Count-changing curve events fall out of matching curves between frames.
//! Count-preserving reconnections are invisible to matching, so they are
//! hunted with a local *pairing-flip* test: around a candidate tangency
//! site, each curve arc crosses a small ball boundary at two points, and the
//! partition of boundary crossings into arcs flips exactly when the curves
//! reconnect inside the ball.  The test runs across the frames flanking a
//! quadruple-cluster frame, where the picture is maximally degenerate and
//! several events may share one instant; everything found there is reported
//! as one simultaneous group spanning the flanking interval pair.  A
//! count-preserving reconnection far from any quadruple frame is not
//! searched for — the flows this crate produces only reconnect without a
//! count change at their most symmetric instant.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::{
    cluster_points, for_each_close_pair, point_segment_distance, self_intersection, DoubleCurve,
    IntersectError, IntersectionConfig, SelfIntersectionReport, TriplePoint, UnionFind,
};
use crate::mesh::TriMesh;
use crate::real::{real, Real};

/// What happened to the self-intersection picture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// A new double curve appeared (curve count +1).
    Lake,
    /// Double curves reconnected through a saddle tangency.
    Isthmus,
    /// A double curve shrank away (curve count −1).
    Island,
    /// Two triple points were born together (triple count +2).
    TriplePairCreate,
    /// Two triple points cancelled (triple count −2).
    TriplePairAnnihilate,
    /// Four sheets passed through a single point.
    Quadruple,
}

impl EventKind {
    /// Stable lowercase label for logs and exported event tables.
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Lake => "lake",
            EventKind::Isthmus => "isthmus",
            EventKind::Island => "island",
            EventKind::TriplePairCreate => "triple-pair-create",
            EventKind::TriplePairAnnihilate => "triple-pair-annihilate",
            EventKind::Quadruple => "quadruple",
        }
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One detected transition of the self-intersection picture.
#[derive(Clone, Debug)]
pub struct EventRecord<T: Real> {
    pub kind: EventKind,
    /// The event happened between these two frame indices.  Usually the
    /// indices are consecutive; around a quadruple-cluster frame they span
    /// the two flanking intervals, because the middle frame itself is the
    /// degenerate configuration.
    pub frame_interval: (usize, usize),
    /// Approximate location of the transition.
    pub location: Vector3<T>,
    /// Events sharing an id were detected in the same interval and cannot be
    /// ordered relative to each other.
    pub simultaneous_group: Option<usize>,
}

/// Tolerances for [`classify_events`].
#[derive(Clone, Copy, Debug)]
pub struct EventConfig<T: Real> {
    /// Per-frame intersection tolerances.
    pub intersection: IntersectionConfig<T>,
    /// Consecutive frames may move vertices at most this multiple of the
    /// mean edge length; beyond it, matching curves between frames is
    /// ambiguous and classification fails with `FramesTooFarApart`.
    pub max_displacement_factor: T,
    /// Curves and triple points match across an interval when within this
    /// multiple of (frame displacement + mean edge length).
    pub match_factor: T,
    /// Radius of the pairing-flip test ball, as a multiple of the mean edge
    /// length.
    pub flip_ball_factor: T,
}

impl<T: Real> Default for EventConfig<T> {
    fn default() -> Self {
        EventConfig {
            intersection: IntersectionConfig::default(),
            max_displacement_factor: real(2.0),
            match_factor: real(1.5),
            flip_ball_factor: real(3.0),
        }
    }
}

/// Computes per-frame self-intersection reports and classifies the events
/// between consecutive frames.  Needs at least two frames.
pub fn classify_events<T: Real>(
    frames: &[TriMesh<T>],
    config: &EventConfig<T>,
) -> Result<Vec<EventRecord<T>>, IntersectError> {
    let reports = frames
        .iter()
        .map(|f| self_intersection(f, &config.intersection))
        .collect::<Result<Vec<_>, _>>()?;
    classify_from_reports(frames, &reports, config)
}

/// Classifies events from precomputed per-frame reports (`reports[i]` must
/// belong to `frames[i]`).  Lets callers that already need the reports —
/// e.g. for lower-bound certificates — avoid recomputing them.
pub fn classify_from_reports<T: Real>(
    frames: &[TriMesh<T>],
    reports: &[SelfIntersectionReport<T>],
    config: &EventConfig<T>,
) -> Result<Vec<EventRecord<T>>, IntersectError> {
    assert_eq!(frames.len(), reports.len());
    assert!(frames.len() >= 2, "need at least two frames to compare");
    let n = frames.len();

    // Frame-to-frame displacement gate: matching is only meaningful when the
    // surface moves a small multiple of its own resolution per frame.
    let edge: Vec<T> = frames.iter().map(|f| f.metrics().mean_edge_length).collect();
    let mut disp: Vec<T> = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        if frames[i].vertex_count() != frames[i + 1].vertex_count() {
            return Err(IntersectError::FramesTooFarApart {
                a: i,
                b: i + 1,
                why: format!(
                    "vertex counts differ ({} vs {})",
                    frames[i].vertex_count(),
                    frames[i + 1].vertex_count()
                ),
            });
        }
        let mut worst = T::zero();
        for (p, q) in frames[i].positions().iter().zip(frames[i + 1].positions()) {
            worst = worst.max((q - p).norm());
        }
        let allowed = config.max_displacement_factor * edge[i];
        if worst > allowed {
            return Err(IntersectError::FramesTooFarApart {
                a: i,
                b: i + 1,
                why: format!(
                    "max vertex displacement {:.3e} exceeds {:.3e}",
                    worst.as_f64(),
                    allowed.as_f64()
                ),
            });
        }
        disp.push(worst);
    }

    // Quadruple-cluster frames are degenerate: group them into runs, and
    // treat each run together with its flanking frames as one window.
    let mut windows: Vec<(usize, usize, usize, usize)> = Vec::new(); // (a, b, s, e)
    {
        let mut f = 0;
        while f < n {
            if !reports[f].quadruple_clusters.is_empty() {
                let s = f;
                while f + 1 < n && !reports[f + 1].quadruple_clusters.is_empty() {
                    f += 1;
                }
                let e = f;
                windows.push((s.saturating_sub(1), (e + 1).min(n - 1), s, e));
            }
            f += 1;
        }
    }

    let mut events: Vec<EventRecord<T>> = Vec::new();
    let mut next_group = 0usize;
    // A triple pair whose members straddle the detection radius can change
    // the count by ±1 in one interval and ±1 in the next; the odd remainder
    // rides forward so the pair is still reported once.
    let mut carry: i64 = 0;

    let mut assign_group = |batch: Vec<(EventKind, Vector3<T>)>,
                            interval: (usize, usize),
                            events: &mut Vec<EventRecord<T>>| {
        let gid = if batch.len() >= 2 {
            next_group += 1;
            Some(next_group - 1)
        } else {
            None
        };
        for (kind, location) in batch {
            events.push(EventRecord {
                kind,
                frame_interval: interval,
                location,
                simultaneous_group: gid,
            });
        }
    };

    let mut i = 0;
    while i + 1 < n {
        if let Some(&(a, b, s, e)) = windows.iter().find(|w| w.0 == i) {
            let h = edge[s];
            let travel = disp[a..b].iter().fold(T::zero(), |acc, &d| acc + d);
            let radius = config.match_factor * (travel + h);
            let mut batch: Vec<(EventKind, Vector3<T>)> = Vec::new();

            // One quadruple event per distinct cluster site across the run.
            let mut sites: Vec<Vector3<T>> = Vec::new();
            for f in s..=e {
                for c in &reports[f].quadruple_clusters {
                    sites.push(c.center);
                }
            }
            for center in dedupe_points(&sites, radius) {
                batch.push((EventKind::Quadruple, center));
            }

            // Compare the picture across the whole window, skipping the
            // degenerate middle frame(s).
            batch.extend(curve_events(
                &reports[a].double_curves,
                &reports[b].double_curves,
                radius,
            ));
            batch.extend(flip_isthmuses(&reports[a], &reports[b], h, config));
            dedupe_isthmuses(&mut batch, config.flip_ball_factor * h * real(2.0));
            batch.extend(triple_events(
                &reports[a].triple_points,
                &reports[b].triple_points,
                radius,
                &mut carry,
            ));

            assign_group(batch, (a, b), &mut events);
            i = b;
            continue;
        }

        let radius = config.match_factor * (disp[i] + edge[i]);
        let mut batch = curve_events(
            &reports[i].double_curves,
            &reports[i + 1].double_curves,
            radius,
        );
        batch.extend(triple_events(
            &reports[i].triple_points,
            &reports[i + 1].triple_points,
            radius,
            &mut carry,
        ));
        assign_group(batch, (i, i + 1), &mut events);
        i += 1;
    }

    events.sort_by(|x, y| {
        (x.frame_interval, x.kind)
            .cmp(&(y.frame_interval, y.kind))
            .then_with(|| lex(&x.location, &y.location))
    });
    Ok(events)
}

fn lex<T: Real>(p: &Vector3<T>, q: &Vector3<T>) -> std::cmp::Ordering {
    for k in 0..3 {
        match p[k].partial_cmp(&q[k]) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

// ---------------------------------------------------------------------------
// Curve matching: count-changing events.

/// Distance from a point to a closed polyline.
fn point_curve_distance<T: Real>(p: Vector3<T>, curve: &DoubleCurve<T>) -> T {
    let n = curve.points.len();
    if n == 0 {
        return real(f64::INFINITY);
    }
    if n == 1 {
        return (p - curve.points[0]).norm();
    }
    let mut best = real::<T>(f64::INFINITY);
    for i in 0..n {
        let d = point_segment_distance(p, curve.points[i], curve.points[(i + 1) % n]);
        best = best.min(d);
    }
    best
}

/// Directed Hausdorff distance from `a`'s corners to `b`.
fn directed_hausdorff<T: Real>(a: &DoubleCurve<T>, b: &DoubleCurve<T>) -> T {
    let mut worst = T::zero();
    for &p in &a.points {
        worst = worst.max(point_curve_distance(p, b));
    }
    worst
}

/// Closest approach between two closed polylines: (distance, midpoint).
fn closest_approach<T: Real>(a: &DoubleCurve<T>, b: &DoubleCurve<T>) -> (T, Vector3<T>) {
    let mut best = real::<T>(f64::INFINITY);
    let mut at = Vector3::zeros();
    let mut scan = |from: &DoubleCurve<T>, to: &DoubleCurve<T>| {
        let n = to.points.len();
        for &p in &from.points {
            for i in 0..n {
                let q = closest_point_on_segment(p, to.points[i], to.points[(i + 1) % n]);
                let d = (q - p).norm();
                if d < best {
                    best = d;
                    at = (p + q) * real::<T>(0.5);
                }
            }
        }
    };
    scan(a, b);
    scan(b, a);
    (best, at)
}

fn closest_point_on_segment<T: Real>(p: Vector3<T>, a: Vector3<T>, b: Vector3<T>) -> Vector3<T> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= T::zero() {
        return a;
    }
    let t = (p - a).dot(&ab) / len2;
    a + ab * t.max(T::zero()).min(T::one())
}

/// Matches curves across one interval and reports count-changing events.
/// Curves are matched when either directed Hausdorff distance is within
/// `radius`; connected components of the match graph are read off:
/// unmatched new curves are lakes, unmatched old ones islands, and a
/// component that changes count inside itself pins its reconnections to the
/// closest approaches of the majority side.  A balanced component is taken
/// as plain isotopy — count-preserving reconnections are the pairing-flip
/// test's job.
fn curve_events<T: Real>(
    a: &[DoubleCurve<T>],
    b: &[DoubleCurve<T>],
    radius: T,
) -> Vec<(EventKind, Vector3<T>)> {
    let (na, nb) = (a.len(), b.len());
    let mut uf = UnionFind::new(na + nb);
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            if directed_hausdorff(ca, cb) <= radius || directed_hausdorff(cb, ca) <= radius {
                uf.union(i, na + j);
            }
        }
    }
    let mut comps: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..na {
        comps.entry(uf.find(i)).or_default().0.push(i);
    }
    for j in 0..nb {
        comps.entry(uf.find(na + j)).or_default().1.push(j);
    }

    let mut events = Vec::new();
    for (ia, ib) in comps.values() {
        let (p, q) = (ia.len(), ib.len());
        if p == 0 {
            for &j in ib {
                events.push((EventKind::Lake, b[j].centroid()));
            }
        } else if q == 0 {
            for &i in ia {
                events.push((EventKind::Island, a[i].centroid()));
            }
        } else if p != q {
            let majority: Vec<&DoubleCurve<T>> = if p > q {
                ia.iter().map(|&i| &a[i]).collect()
            } else {
                ib.iter().map(|&j| &b[j]).collect()
            };
            events.extend(isthmus_locations(&majority, p.abs_diff(q)));
        }
    }
    events
}

/// Pins `count` reconnections inside one match component: repeatedly fuse
/// the two closest curve groups, emitting an isthmus at each fusion's
/// closest-approach midpoint.
fn isthmus_locations<T: Real>(
    curves: &[&DoubleCurve<T>],
    count: usize,
) -> Vec<(EventKind, Vector3<T>)> {
    let n = curves.len();
    let mut pairs: Vec<(T, usize, usize, Vector3<T>)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (d, at) = closest_approach(curves[i], curves[j]);
            pairs.push((d, i, j, at));
        }
    }
    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut uf = UnionFind::new(n);
    let mut out = Vec::new();
    for &(_, i, j, at) in &pairs {
        if out.len() == count {
            break;
        }
        if uf.find(i) != uf.find(j) {
            uf.union(i, j);
            out.push((EventKind::Isthmus, at));
        }
    }
    while out.len() < count {
        out.push((EventKind::Isthmus, curves[0].centroid()));
    }
    out
}

/// Collapses isthmus events within `radius` of each other to one survivor
/// (centroid location): the count-driven and pairing-flip detectors may both
/// see the same reconnection.
fn dedupe_isthmuses<T: Real>(batch: &mut Vec<(EventKind, Vector3<T>)>, radius: T) {
    let idx: Vec<usize> = (0..batch.len())
        .filter(|&k| batch[k].0 == EventKind::Isthmus)
        .collect();
    if idx.len() < 2 {
        return;
    }
    let pts: Vec<Vector3<T>> = idx.iter().map(|&k| batch[k].1).collect();
    let merged = dedupe_points(&pts, radius);
    if merged.len() == idx.len() {
        return;
    }
    let mut out: Vec<(EventKind, Vector3<T>)> = Vec::with_capacity(batch.len());
    for (k, ev) in batch.iter().enumerate() {
        if !idx.contains(&k) {
            out.push(*ev);
        }
    }
    for center in merged {
        out.push((EventKind::Isthmus, center));
    }
    *batch = out;
}

/// Clusters points within `radius` and returns one centroid per cluster.
fn dedupe_points<T: Real>(points: &[Vector3<T>], radius: T) -> Vec<Vector3<T>> {
    if points.is_empty() {
        return Vec::new();
    }
    let ids = cluster_points(points, radius);
    let k = ids.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut sums = vec![Vector3::zeros(); k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(&ids) {
        sums[c as usize] += p;
        counts[c as usize] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s / real::<T>(c as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// Triple-point pair events.

/// Reads triple-pair creations/annihilations off the count change across one
/// interval, locating each pair at the midpoint of its two closest fresh (or
/// vanished) triple points.
fn triple_events<T: Real>(
    a: &[TriplePoint<T>],
    b: &[TriplePoint<T>],
    radius: T,
    carry: &mut i64,
) -> Vec<(EventKind, Vector3<T>)> {
    let delta = b.len() as i64 - a.len() as i64 + *carry;
    let pairs = delta / 2;
    *carry = delta - pairs * 2;
    if pairs == 0 {
        return Vec::new();
    }
    let (kind, fresh, other) = if pairs > 0 {
        (EventKind::TriplePairCreate, b, a)
    } else {
        (EventKind::TriplePairAnnihilate, a, b)
    };
    // Triple points with no counterpart in the other frame are the event's
    // positional evidence.
    let mut unmatched: Vec<Vector3<T>> = fresh
        .iter()
        .filter(|t| {
            other
                .iter()
                .all(|o| (o.position - t.position).norm() > radius)
        })
        .map(|t| t.position)
        .collect();

    let mut out = Vec::new();
    for _ in 0..pairs.unsigned_abs() {
        if unmatched.len() >= 2 {
            let (mut bi, mut bj) = (0usize, 1usize);
            let mut bd = real::<T>(f64::INFINITY);
            for x in 0..unmatched.len() {
                for y in x + 1..unmatched.len() {
                    let d = (unmatched[x] - unmatched[y]).norm();
                    if d < bd {
                        bd = d;
                        bi = x;
                        bj = y;
                    }
                }
            }
            let at = (unmatched[bi] + unmatched[bj]) * real::<T>(0.5);
            unmatched.swap_remove(bj);
            unmatched.swap_remove(bi);
            out.push((kind, at));
        } else if let Some(p) = unmatched.pop() {
            out.push((kind, p));
        } else {
            let mut c = Vector3::zeros();
            for t in fresh {
                c += t.position;
            }
            out.push((kind, c / real::<T>(fresh.len().max(1) as f64)));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Pairing-flip test: count-preserving reconnections.

/// Crossing points of the curves with the boundary sphere of `B(center, rho)`
/// plus the pairing of crossings joined by an arc inside the ball.
fn ball_crossings<T: Real>(
    curves: &[DoubleCurve<T>],
    center: Vector3<T>,
    rho: T,
) -> (Vec<Vector3<T>>, Vec<(usize, usize)>) {
    let mut points = Vec::new();
    let mut pairs = Vec::new();
    for curve in curves {
        let n = curve.points.len();
        if n < 2 {
            continue;
        }
        let inside: Vec<bool> = curve
            .points
            .iter()
            .map(|p| (p - center).norm() < rho)
            .collect();
        let Some(start) = (0..n).find(|&k| !inside[k]) else {
            continue; // entirely inside: touches no boundary
        };
        if inside.iter().all(|&f| !f) {
            continue;
        }
        let mut entry: Option<usize> = None;
        for k in 0..n {
            let i = (start + k) % n;
            let j = (start + k + 1) % n;
            if inside[i] == inside[j] {
                continue;
            }
            let di = (curve.points[i] - center).norm();
            let dj = (curve.points[j] - center).norm();
            // Linear interpolation of the radial distance along the edge is
            // plenty: crossings only need locating to a fraction of rho.
            let t = (rho - di) / (dj - di);
            let x = curve.points[i] + (curve.points[j] - curve.points[i]) * t;
            let idx = points.len();
            points.push(x);
            if inside[j] {
                entry = Some(idx);
            } else if let Some(e) = entry.take() {
                pairs.push((e, idx));
            }
        }
        debug_assert!(entry.is_none(), "closed curve left the ball unbalanced");
    }
    (points, pairs)
}

/// Decides whether the inside-ball pairing of boundary crossings flipped
/// between two frames.  Only the clean two-arc picture (4 crossings, 2 arcs
/// on each side) is judged; anything else returns `None`.
fn pairing_flip<T: Real>(
    a: &(Vec<Vector3<T>>, Vec<(usize, usize)>),
    b: &(Vec<Vector3<T>>, Vec<(usize, usize)>),
    match_radius: T,
) -> Option<bool> {
    let (pa, ca) = a;
    let (pb, cb) = b;
    if pa.len() != 4 || pb.len() != 4 || ca.len() != 2 || cb.len() != 2 {
        return None;
    }
    // Match the boundary crossings across the frames, closest first.
    let mut entries: Vec<(T, usize, usize)> = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            entries.push(((pa[i] - pb[j]).norm(), i, j));
        }
    }
    entries.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut a_to_b = [usize::MAX; 4];
    let mut b_taken = [false; 4];
    for &(d, i, j) in &entries {
        if a_to_b[i] != usize::MAX || b_taken[j] {
            continue;
        }
        if d > match_radius {
            return None; // crossings moved too much to correspond
        }
        a_to_b[i] = j;
        b_taken[j] = true;
    }
    let mut b_to_a = [usize::MAX; 4];
    for (i, &j) in a_to_b.iter().enumerate() {
        b_to_a[j] = i;
    }
    let ordered = |x: usize, y: usize| if x < y { (x, y) } else { (y, x) };
    let mut pair_a = [ordered(ca[0].0, ca[0].1), ordered(ca[1].0, ca[1].1)];
    pair_a.sort_unstable();
    let mut pair_b = [
        ordered(b_to_a[cb[0].0], b_to_a[cb[0].1]),
        ordered(b_to_a[cb[1].0], b_to_a[cb[1].1]),
    ];
    pair_b.sort_unstable();
    Some(pair_a != pair_b)
}

/// Candidate tangency sites: midpoints of close approaches between distinct
/// curve arcs (different curves, or the same curve at arc-length separation
/// beyond the ball diameter), clustered to one site per `rho`-neighborhood.
fn candidate_sites<T: Real>(curves: &[DoubleCurve<T>], r_cand: T, rho: T) -> Vec<Vector3<T>> {
    let mut pts: Vec<Vector3<T>> = Vec::new();
    let mut tags: Vec<(usize, T)> = Vec::new();
    let mut lengths: Vec<T> = Vec::new();
    for (ci, curve) in curves.iter().enumerate() {
        let n = curve.points.len();
        let mut s = T::zero();
        for i in 0..n {
            pts.push(curve.points[i]);
            tags.push((ci, s));
            s += (curve.points[(i + 1) % n] - curve.points[i]).norm();
        }
        lengths.push(s);
    }
    let mut cands: Vec<Vector3<T>> = Vec::new();
    for_each_close_pair(&pts, r_cand, |i, j| {
        let (ci, si) = tags[i];
        let (cj, sj) = tags[j];
        if ci == cj {
            let l = lengths[ci];
            let along = (si - sj).abs();
            let arc = along.min(l - along);
            if arc <= rho * real(2.0) {
                return; // neighbors along the same arc, not a tangency
            }
        }
        cands.push((pts[i] + pts[j]) * real::<T>(0.5));
    });
    dedupe_points(&cands, rho)
}

/// Runs the pairing-flip test between two reports.  Sites come from close
/// approaches in either frame; at each site the ball radius steps down until
/// both frames show the clean two-arc picture (a stray third arc in the ball
/// disqualifies it, and a smaller ball may exclude the stray).
fn flip_isthmuses<T: Real>(
    ra: &SelfIntersectionReport<T>,
    rb: &SelfIntersectionReport<T>,
    h: T,
    config: &EventConfig<T>,
) -> Vec<(EventKind, Vector3<T>)> {
    let rho = config.flip_ball_factor * h;
    let r_cand = rho * real(0.5);
    let mut sites = candidate_sites(&ra.double_curves, r_cand, rho);
    sites.extend(candidate_sites(&rb.double_curves, r_cand, rho));
    let sites = dedupe_points(&sites, rho);

    let mut out = Vec::new();
    for site in sites {
        for shrink in [1.0, 0.6, 0.36] {
            let r = rho * real(shrink);
            let a = ball_crossings(&ra.double_curves, site, r);
            let b = ball_crossings(&rb.double_curves, site, r);
            match pairing_flip(&a, &b, r) {
                Some(true) => {
                    out.push((EventKind::Isthmus, site));
                    break;
                }
                Some(false) => break, // clean picture, no reconnection
                None => continue,     // cluttered ball: try smaller
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A closed square-ish curve of `n` points around `center` with the given
    /// `radius`, lying in the plane spanned by `u`, `v`.
    fn ring<T: Real>(
        center: Vector3<T>,
        radius: T,
        n: usize,
        u: Vector3<T>,
        v: Vector3<T>,
    ) -> DoubleCurve<T> {
        let mut points = Vec::with_capacity(n);
        for k in 0..n {
            let th = real::<T>(2.0 * std::f64::consts::PI * k as f64 / n as f64);
            points.push(center + u * (radius * th.cos()) + v * (radius * th.sin()));
        }
        DoubleCurve {
            points,
            segments: Vec::new(),
        }
    }

    fn xy() -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0))
    }

    fn triple_at(p: Vector3<f64>) -> TriplePoint<f64> {
        TriplePoint {
            position: p,
            face_triples: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn new_curve_is_a_lake_and_a_vanished_one_an_island() {
        let (u, v) = xy();
        let big = ring(Vector3::zeros(), 1.0, 24, u, v);
        let small = ring(Vector3::new(3.0, 0.0, 0.0), 0.05, 12, u, v);
        let before = vec![big.clone()];
        let after = vec![big, small.clone()];

        let events = curve_events(&before, &after, 0.2);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].0, EventKind::Lake);
        assert!((events[0].1 - small.centroid()).norm() < 1e-12);

        let events = curve_events(&after, &before, 0.2);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].0, EventKind::Island);
    }

    /// Open circular arc in the xy-plane, angles in degrees, inclusive ends.
    fn arc(center: Vector3<f64>, r: f64, th0: f64, th1: f64, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|k| {
                let th = (th0 + (th1 - th0) * k as f64 / (n - 1) as f64).to_radians();
                center + Vector3::new(r * th.cos(), r * th.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn merging_curves_make_an_isthmus_at_their_closest_approach() {
        let (u, v) = xy();
        // Two circles kissing near the origin become one peanut outline:
        // both circle arcs survive, joined by a neck where they touched.
        let lc = Vector3::new(-1.03, 0.0, 0.0);
        let rc = Vector3::new(1.03, 0.0, 0.0);
        let left = ring(lc, 1.0, 96, u, v);
        let right = ring(rc, 1.0, 96, u, v);
        let mut peanut = arc(lc, 1.0, 15.0, 345.0, 120);
        peanut.extend(arc(rc, 1.0, -165.0, 165.0, 120));
        let merged = DoubleCurve {
            points: peanut,
            segments: Vec::new(),
        };
        let events = curve_events(&[left, right], &[merged], 0.4);
        assert_eq!(events.len(), 1, "events: {events:?}");
        assert_eq!(events[0].0, EventKind::Isthmus);
        assert!(events[0].1.norm() < 0.1, "at {:?}", events[0].1);
    }

    #[test]
    fn isotopic_wiggle_reports_nothing() {
        let (u, v) = xy();
        let before = ring(Vector3::zeros(), 1.0, 24, u, v);
        let after = ring(Vector3::new(0.02, 0.01, 0.0), 1.02, 24, u, v);
        assert!(curve_events(&[before], &[after], 0.2).is_empty());
    }

    #[test]
    fn triple_count_jump_of_two_is_one_pair_event() {
        let old = vec![triple_at(Vector3::new(5.0, 0.0, 0.0))];
        let new = vec![
            triple_at(Vector3::new(5.0, 0.0, 0.0)),
            triple_at(Vector3::new(0.0, 0.1, 0.0)),
            triple_at(Vector3::new(0.0, -0.1, 0.0)),
        ];
        let mut carry = 0;
        let events = triple_events(&old, &new, 0.05, &mut carry);
        assert_eq!(carry, 0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].0, EventKind::TriplePairCreate);
        assert!(events[0].1.norm() < 1e-12);

        let events = triple_events(&new, &old, 0.05, &mut carry);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].0, EventKind::TriplePairAnnihilate);
    }

    #[test]
    fn odd_triple_jump_carries_to_the_next_interval() {
        let one = vec![triple_at(Vector3::new(0.0, 1.0, 0.0))];
        let two = vec![
            triple_at(Vector3::new(0.0, 1.0, 0.0)),
            triple_at(Vector3::new(0.0, 1.2, 0.0)),
        ];
        let mut carry = 0;
        let first = triple_events(&[], &one, 0.05, &mut carry);
        assert!(first.is_empty());
        assert_eq!(carry, 1);
        let second = triple_events(&one, &two, 0.05, &mut carry);
        assert_eq!(carry, 0);
        assert_eq!(second.len(), 1);
        assert_eq!(second[0].0, EventKind::TriplePairCreate);
    }

    #[test]
    fn ball_crossings_pair_arcs_through_the_ball() {
        let (u, v) = xy();
        // One ring passing straight through a ball at the origin.
        let curve = ring(Vector3::new(1.0, 0.0, 0.0), 1.0, 256, u, v);
        let (pts, pairs) = ball_crossings(&[curve], Vector3::zeros(), 0.3);
        assert_eq!(pts.len(), 2);
        assert_eq!(pairs.len(), 1);
        for p in &pts {
            assert!((p.norm() - 0.3).abs() < 0.01, "crossing off sphere: {p:?}");
        }
    }

    /// Closed rectangle-ish loop through the given corners, densely sampled
    /// so every edge registers point-wise inside/outside transitions.
    fn dense_loop(corners: &[(f64, f64)], per_edge: usize) -> DoubleCurve<f64> {
        let n = corners.len();
        let mut points = Vec::with_capacity(n * per_edge);
        for i in 0..n {
            let a = Vector3::new(corners[i].0, corners[i].1, 0.0);
            let b = Vector3::new(corners[(i + 1) % n].0, corners[(i + 1) % n].1, 0.0);
            for k in 0..per_edge {
                points.push(a + (b - a) * (k as f64 / per_edge as f64));
            }
        }
        DoubleCurve {
            points,
            segments: Vec::new(),
        }
    }

    #[test]
    fn pairing_flip_detects_a_reconnection() {
        // Before: two loops whose near-origin strands run vertically at
        // x = ±0.02.  After: loops whose strands run horizontally at
        // y = ±0.02.  A reconnection inside the ball swaps which boundary
        // crossings join up, and nothing else about the picture matters.
        let before = vec![
            dense_loop(&[(-0.02, -3.0), (-0.02, 3.0), (-6.0, 3.0), (-6.0, -3.0)], 60),
            dense_loop(&[(0.02, -3.0), (0.02, 3.0), (6.0, 3.0), (6.0, -3.0)], 60),
        ];
        let after = vec![
            dense_loop(&[(-3.0, -0.02), (3.0, -0.02), (3.0, -6.0), (-3.0, -6.0)], 60),
            dense_loop(&[(-3.0, 0.02), (3.0, 0.02), (3.0, 6.0), (-3.0, 6.0)], 60),
        ];
        let a = ball_crossings(&before, Vector3::zeros(), 0.3);
        let b = ball_crossings(&after, Vector3::zeros(), 0.3);
        assert_eq!(a.0.len(), 4, "crossings: {:?}", a.0);
        assert_eq!(b.0.len(), 4, "crossings: {:?}", b.0);
        // The crossings rotate a quarter-turn around the ball here, so allow
        // a generous matching radius; real frames move far less.
        assert_eq!(pairing_flip(&a, &b, 0.5), Some(true));

        // Comparing a frame with itself reports no flip.
        assert_eq!(pairing_flip(&a, &a, 0.5), Some(false));
    }

    #[test]
    fn kissing_curves_yield_one_candidate_site() {
        let (u, v) = xy();
        let left = ring(Vector3::new(-1.0, 0.0, 0.0), 0.98, 256, u, v);
        let right = ring(Vector3::new(1.0, 0.0, 0.0), 0.98, 256, u, v);
        let sites = candidate_sites(&[left, right], 0.15, 0.3);
        assert_eq!(sites.len(), 1, "sites: {sites:?}");
        assert!(sites[0].norm() < 0.1);
    }

    #[test]
    fn no_flip_without_reconnection() {
        let (u, v) = xy();
        let a = vec![
            ring(Vector3::new(-0.5, 0.0, 0.0), 0.45, 128, u, v),
            ring(Vector3::new(0.5, 0.0, 0.0), 0.45, 128, u, v),
        ];
        let b = vec![
            ring(Vector3::new(-0.5, 0.0, 0.0), 0.46, 128, u, v),
            ring(Vector3::new(0.5, 0.0, 0.0), 0.46, 128, u, v),
        ];
        let config = EventConfig::<f64>::default();
        let events = flip_isthmuses(
            &SelfIntersectionReport {
                double_curves: a,
                ..Default::default()
            },
            &SelfIntersectionReport {
                double_curves: b,
                ..Default::default()
            },
            0.1,
            &config,
        );
        assert!(events.is_empty(), "events: {events:?}");
    }

    #[test]
    fn far_apart_frames_are_rejected() {
        use crate::mesh::icosphere;
        let a: TriMesh<f64> = icosphere(1, 1.0).unwrap();
        let b: TriMesh<f64> = icosphere(1, 3.0).unwrap();
        let err = classify_events(&[a, b], &EventConfig::default()).unwrap_err();
        assert!(matches!(err, IntersectError::FramesTooFarApart { .. }), "{err}");
    }

    #[test]
    fn embedded_flow_has_no_events() {
        use crate::mesh::icosphere;
        let mut frames: Vec<TriMesh<f64>> = Vec::new();
        for k in 0..4 {
            let m: TriMesh<f64> = icosphere(1, 1.0 + 0.02 * k as f64).unwrap();
            frames.push(m);
        }
        let events = classify_events(&frames, &EventConfig::default()).unwrap();
        assert!(events.is_empty());
    }
}
