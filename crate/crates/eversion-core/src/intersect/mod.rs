//! Self-intersection analysis of immersed meshes.
//!
//! [`self_intersection`] reports where a closed immersed surface crosses
//! itself: the raw triangle–triangle crossing segments, those segments
//! chained into closed double curves, triple points where three sheets meet,
//! and quadruple clusters where four (or more) sheets pass through a common
//! point. [`events`] compares the reports of consecutive homotopy frames and
//! classifies the topological events between them.
//!
//! The geometric primitive is epsilon-based floating point with a
//! deterministic perturbation fallback for coplanar pairs; a brute-force
//! all-pairs path ([`self_intersection_brute`]) shares every filter and
//! predicate with the accelerated path and serves as its oracle.
//!
//! Coincident geometry is handled positionally: vertices closer than the
//! chaining tolerance form one *position class*. A face pair sharing two or
//! more classes is geometrically edge-adjacent (excluded, like index-adjacent
//! pairs); faces whose three classes coincide are two copies of one triangle,
//! and all but the lowest-indexed copy is dropped, so a doubly covered
//! surface is analyzed as its image. Pairs sharing exactly one class are
//! kept: two sheets meeting at a single coincident point can genuinely cross
//! along curves through it.

mod bvh;
mod chain;
pub mod events;
mod tri_tri;

pub use tri_tri::{tri_tri_intersect, TriTriOutcome};

use crate::mesh::{MeshError, TriMesh};
use crate::real::{real, Real};
use crate::willmore::willmore_energy;
use bvh::FaceBvh;
use nalgebra::Vector3;
use std::collections::{BTreeMap, HashMap};

/// Errors from self-intersection analysis.
#[derive(Debug, thiserror::Error)]
pub enum IntersectError {
    #[error(
        "chaining found an open double curve: endpoint cluster near \
         ({x:.6}, {y:.6}, {z:.6}) has odd degree {degree} at tolerance {tol:e}"
    )]
    ToleranceBreakdown {
        x: f64,
        y: f64,
        z: f64,
        degree: usize,
        tol: f64,
    },
    #[error("frames {a} and {b} are too far apart to match events: {why}")]
    FramesTooFarApart { a: usize, b: usize, why: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// One crossing segment of a pair of faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntersectionSegment<T: Real> {
    /// The two crossing faces, lower index first.
    pub faces: (usize, usize),
    pub start: Vector3<T>,
    pub end: Vector3<T>,
}

/// A closed polyline along which two sheets of the surface cross.
#[derive(Clone, Debug)]
pub struct DoubleCurve<T: Real> {
    /// Corner points in walk order; the last connects back to the first.
    pub points: Vec<Vector3<T>>,
    /// Indices into the report's segment list, in walk order.
    pub segments: Vec<usize>,
}

impl<T: Real> DoubleCurve<T> {
    /// Total polyline length (including the closing edge).
    pub fn length(&self) -> T {
        let n = self.points.len();
        let mut sum = T::zero();
        for i in 0..n {
            sum += (self.points[(i + 1) % n] - self.points[i]).norm();
        }
        sum
    }

    /// Mean of the corner points.
    pub fn centroid(&self) -> Vector3<T> {
        let mut c = Vector3::zeros();
        for p in &self.points {
            c += p;
        }
        c / real::<T>(self.points.len().max(1) as f64)
    }
}

/// A point where three local sheets of the surface meet.
#[derive(Clone, Debug)]
pub struct TriplePoint<T: Real> {
    pub position: Vector3<T>,
    /// Face triples of the discrete double-curve crossings merged into this
    /// point — one crossing per hosting sheet, so up to three triples.
    pub face_triples: Vec<[usize; 3]>,
}

/// A cluster of triple points through which ≥ 4 distinct local sheets pass.
#[derive(Clone, Debug)]
pub struct QuadrupleCluster<T: Real> {
    pub center: Vector3<T>,
    /// Largest distance from the center to a member triple point.
    pub radius: T,
    /// Distinct local sheets through the cluster.
    pub sheet_count: usize,
    /// Indices into the report's triple-point list.
    pub triples: Vec<usize>,
}

/// Everything [`self_intersection`] finds.
#[derive(Clone, Debug, Default)]
pub struct SelfIntersectionReport<T: Real> {
    /// Raw crossing segments, sorted by face pair.
    pub segments: Vec<IntersectionSegment<T>>,
    /// Segments chained into closed curves.
    pub double_curves: Vec<DoubleCurve<T>>,
    /// Merged double-curve crossings: three sheets through one point.
    pub triple_points: Vec<TriplePoint<T>>,
    /// Triple-point clusters with at least four distinct sheets.
    pub quadruple_clusters: Vec<QuadrupleCluster<T>>,
    /// Largest number of local sheets through any point: 1 for an embedded
    /// surface, 2 along double curves, 3 at triple points, ≥ 4 at quadruple
    /// clusters.
    pub max_multiplicity: usize,
}

/// Tolerances for [`self_intersection`].
#[derive(Clone, Copy, Debug)]
pub struct IntersectionConfig<T: Real> {
    /// Segment endpoints within this fraction of the bounding-box diagonal
    /// are identified when chaining curves; the same tolerance detects
    /// crossings of chained segments (triple points) and groups coincident
    /// vertices into position classes.
    pub chaining_factor: T,
    /// Radius for merging the per-sheet discoveries of one triple point, as
    /// a fraction of the mean edge length (the crossings scatter at
    /// discretization scale around the true point).
    pub triple_merge_factor: T,
    /// Radius for clustering triple points into quadruple candidates.
    /// `None` derives a mesh-resolution radius (2 × mean edge length,
    /// floored at 3 × the chaining tolerance): triple points merging at a
    /// quadruple point sit an edge length apart on a discrete mesh long
    /// before they sit within chaining tolerance.
    pub cluster_radius: Option<T>,
}

impl<T: Real> Default for IntersectionConfig<T> {
    fn default() -> Self {
        IntersectionConfig {
            chaining_factor: real(1e-7),
            triple_merge_factor: real(0.75),
            cluster_radius: None,
        }
    }
}

/// Derived tolerances plus the deduplicated face set and position classes.
struct Context<T: Real> {
    /// Position class of every vertex.
    class: Vec<u32>,
    /// Sorted distinct class triple per face (degenerate faces keep
    /// duplicates; they only ever shrink the shared-class count).
    face_classes: Vec<[u32; 3]>,
    /// Faces that survive coincident-copy deduplication, ascending.
    kept: Vec<usize>,
    chain_tol: T,
    triple_merge_radius: T,
    cluster_radius: T,
}

impl<T: Real> Context<T> {
    fn build(mesh: &TriMesh<T>, config: &IntersectionConfig<T>) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let diag = (hi - lo).norm().max(real(1e-30));
        let chain_tol = config.chaining_factor * diag;

        let class = cluster_points(mesh.positions(), chain_tol);
        let nf = mesh.face_count();
        let mut face_classes = Vec::with_capacity(nf);
        let mut kept = Vec::with_capacity(nf);
        let mut seen: HashMap<[u32; 3], usize> = HashMap::with_capacity(nf);
        for f in 0..nf {
            let vs = mesh.face_vertices(f);
            let mut key = [class[vs[0]], class[vs[1]], class[vs[2]]];
            key.sort_unstable();
            face_classes.push(key);
            if !seen.contains_key(&key) {
                seen.insert(key, f);
                kept.push(f);
            }
        }

        let h = mesh.metrics().mean_edge_length;
        let cluster_radius = config
            .cluster_radius
            .unwrap_or_else(|| (real::<T>(2.0) * h).max(real::<T>(3.0) * chain_tol));
        Context {
            class,
            face_classes,
            kept,
            chain_tol,
            triple_merge_radius: config.triple_merge_factor * h,
            cluster_radius,
        }
    }

    /// Number of distinct position classes the two (sorted) triples share.
    fn shared_classes(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.face_classes[i], &self.face_classes[j]);
        let mut count = 0;
        let mut last = None;
        for &c in a {
            if Some(c) != last && b.contains(&c) {
                count += 1;
            }
            last = Some(c);
        }
        count
    }

    /// Face pairs whose contact is combinatorial rather than geometric:
    /// sharing a vertex index, or positionally edge-adjacent (two or more
    /// shared position classes).
    fn excluded(&self, mesh: &TriMesh<T>, i: usize, j: usize) -> bool {
        let (fi, fj) = (mesh.face_vertices(i), mesh.face_vertices(j));
        if fi.iter().any(|a| fj.contains(a)) {
            return true;
        }
        self.shared_classes(i, j) >= 2
    }
}

/// Self-intersection report with hierarchy-accelerated candidate pairs.
pub fn self_intersection<T: Real>(
    mesh: &TriMesh<T>,
    config: &IntersectionConfig<T>,
) -> Result<SelfIntersectionReport<T>, IntersectError> {
    with_grazing_fallback(mesh, config, |m| {
        let ctx = Context::build(m, config);
        let pairs = FaceBvh::build(m, &ctx.kept).candidate_pairs();
        assemble(m, &ctx, &pairs)
    })
}

/// Brute-force all-pairs variant: identical filters and predicates, no
/// candidate pruning. The oracle [`self_intersection`] is tested against.
pub fn self_intersection_brute<T: Real>(
    mesh: &TriMesh<T>,
    config: &IntersectionConfig<T>,
) -> Result<SelfIntersectionReport<T>, IntersectError> {
    with_grazing_fallback(mesh, config, |m| {
        let ctx = Context::build(m, config);
        let mut pairs = Vec::new();
        for (k, &i) in ctx.kept.iter().enumerate() {
            for &j in &ctx.kept[k + 1..] {
                pairs.push((i, j));
            }
        }
        assemble(m, &ctx, &pairs)
    })
}

/// Exact grazing contact — distinct crossing sheets sharing vertices or
/// whole edges bitwise — can leave chains with odd-degree endpoints: the
/// shared simplices join the sheets into one position-class neighborhood and
/// the crossing there is filtered as combinatorial.  Such coincidences are
/// knife-edge, so a tolerance breakdown is retried once on a copy jiggled
/// just past the position-class tolerance (still orders of magnitude below
/// mesh resolution, so no curve visibly moves).
fn with_grazing_fallback<T: Real>(
    mesh: &TriMesh<T>,
    config: &IntersectionConfig<T>,
    run: impl Fn(&TriMesh<T>) -> Result<SelfIntersectionReport<T>, IntersectError>,
) -> Result<SelfIntersectionReport<T>, IntersectError> {
    match run(mesh) {
        Err(IntersectError::ToleranceBreakdown { .. }) => {
            run(&jiggled(mesh, config.chaining_factor * real(5.0)))
        }
        other => other,
    }
}

/// A copy of the mesh with every vertex displaced pseudo-randomly (but
/// deterministically, keyed on its index) by `factor` times the bounding-box
/// diagonal.
fn jiggled<T: Real>(mesh: &TriMesh<T>, factor: T) -> TriMesh<T> {
    let (lo, hi) = mesh.bounding_box();
    let amp = (hi - lo).norm().max(real(1e-30)) * factor;
    let positions = mesh
        .positions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut unit = || {
                // splitmix64 step, mapped to [-1, 1]
                h ^= h >> 30;
                h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
                h ^= h >> 27;
                h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
                h ^= h >> 31;
                real::<T>((h >> 11) as f64 / (1u64 << 52) as f64 - 1.0)
            };
            p + Vector3::new(unit(), unit(), unit()) * amp
        })
        .collect();
    mesh.with_positions(positions)
}

/// Li-Yau audit at default tolerances: the largest self-intersection
/// multiplicity `k`, the bending energy, and whether the bound
/// `energy ≥ k − 0.15` holds.
pub fn li_yau_check<T: Real>(mesh: &TriMesh<T>) -> Result<(usize, T, bool), IntersectError> {
    li_yau_check_with(mesh, &IntersectionConfig::default())
}

/// [`li_yau_check`] with explicit tolerances.
pub fn li_yau_check_with<T: Real>(
    mesh: &TriMesh<T>,
    config: &IntersectionConfig<T>,
) -> Result<(usize, T, bool), IntersectError> {
    let report = self_intersection(mesh, config)?;
    let energy = willmore_energy(mesh)?.total;
    let k = report.max_multiplicity;
    let pass = energy >= real::<T>(k as f64) - real::<T>(0.15);
    Ok((k, energy, pass))
}

/// Shared back half of both candidate paths: primitive tests, chaining,
/// triple and quadruple detection.
fn assemble<T: Real>(
    mesh: &TriMesh<T>,
    ctx: &Context<T>,
    pairs: &[(usize, usize)],
) -> Result<SelfIntersectionReport<T>, IntersectError> {
    let mut segments: Vec<IntersectionSegment<T>> = Vec::new();
    for &(i, j) in pairs {
        if ctx.excluded(mesh, i, j) {
            continue;
        }
        let t1 = mesh.face_points(i);
        let t2 = mesh.face_points(j);
        let outcome = match tri_tri_intersect(&t1, &t2) {
            TriTriOutcome::Coplanar => {
                // Deterministic perturbation: push the higher-indexed face a
                // hair along the lower's normal and retry once. Coplanar
                // contact either resolves into a genuine crossing or (for
                // parallel grazing) into disjointness.
                let n = mesh.face_normal(i);
                let scale = t1
                    .iter()
                    .chain(t2.iter())
                    .map(|p| p.norm())
                    .fold(T::zero(), |a, b| a.max(b));
                let d = n * (scale * real::<T>(1e-10));
                let moved = [t2[0] + d, t2[1] + d, t2[2] + d];
                tri_tri_intersect(&t1, &moved)
            }
            other => other,
        };
        if let TriTriOutcome::Segment(a, b) = outcome {
            segments.push(IntersectionSegment { faces: (i, j), start: a, end: b });
        }
    }

    let double_curves = chain::chain_segments(&segments, ctx.chain_tol)?;
    let triple_points = detect_triples(ctx, &segments);
    let (quadruple_clusters, max_sheets) = cluster_triples(mesh, ctx, &triple_points);

    let max_multiplicity = if segments.is_empty() {
        1
    } else {
        max_sheets.max(2)
    };
    Ok(SelfIntersectionReport {
        segments,
        double_curves,
        triple_points,
        quadruple_clusters,
        max_multiplicity,
    })
}

/// Triple points: crossings of two intersection segments hosted on a common
/// face, deduplicated per face triple and merged across the (up to three)
/// hosting sheets.
fn detect_triples<T: Real>(
    ctx: &Context<T>,
    segments: &[IntersectionSegment<T>],
) -> Vec<TriplePoint<T>> {
    // Host face -> segments lying on it.
    let mut per_face: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (s, seg) in segments.iter().enumerate() {
        per_face.entry(seg.faces.0).or_default().push(s);
        per_face.entry(seg.faces.1).or_default().push(s);
    }

    // One discrete crossing per sorted face triple (the same crossing is
    // found on each of its hosting faces; average those discoveries).
    let mut raw: BTreeMap<[usize; 3], (Vector3<T>, usize)> = BTreeMap::new();
    for (&f, segs) in &per_face {
        for (k, &s) in segs.iter().enumerate() {
            for &t in &segs[k + 1..] {
                let b = other_face(&segments[s], f);
                let c = other_face(&segments[t], f);
                // Partner sheets touching each other host consecutive
                // segments of one curve, not a third sheet.
                if ctx.shared_classes(b, c) >= 1 {
                    continue;
                }
                if let Some(p) = segment_crossing(&segments[s], &segments[t], ctx.chain_tol) {
                    let mut key = [f, b, c];
                    key.sort_unstable();
                    let entry = raw.entry(key).or_insert((Vector3::zeros(), 0));
                    entry.0 += p;
                    entry.1 += 1;
                }
            }
        }
    }
    let crossings: Vec<([usize; 3], Vector3<T>)> = raw
        .into_iter()
        .map(|(key, (sum, n))| (key, sum / real::<T>(n as f64)))
        .collect();

    // Merge discoveries of the same point found on different hosting sheets:
    // nearby crossings whose face triples match sheet-for-sheet (equal or
    // touching faces). Distinct triple points on the same three sheets stay
    // separate once they are more than the merge radius apart.
    let positions: Vec<Vector3<T>> = crossings.iter().map(|c| c.1).collect();
    let mut uf = UnionFind::new(crossings.len());
    for_each_close_pair(&positions, ctx.triple_merge_radius, |i, j| {
        if triples_match(ctx, &crossings[i].0, &crossings[j].0) {
            uf.union(i, j);
        }
    });

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..crossings.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut triples: Vec<TriplePoint<T>> = groups
        .into_values()
        .map(|members| {
            let mut position = Vector3::zeros();
            let mut face_triples = Vec::with_capacity(members.len());
            for &m in &members {
                position += crossings[m].1;
                face_triples.push(crossings[m].0);
            }
            TriplePoint {
                position: position / real::<T>(members.len() as f64),
                face_triples,
            }
        })
        .collect();
    triples.sort_by(|a, b| {
        a.face_triples[0]
            .cmp(&b.face_triples[0])
            .then(a.face_triples.len().cmp(&b.face_triples.len()))
    });
    triples
}

fn other_face<T: Real>(seg: &IntersectionSegment<T>, f: usize) -> usize {
    if seg.faces.0 == f {
        seg.faces.1
    } else {
        seg.faces.0
    }
}

/// Do two crossing discoveries name the same point on the same three local
/// sheets? True when some pairing matches every face of one triple to an
/// equal or touching (shared position class) face of the other.
fn triples_match<T: Real>(ctx: &Context<T>, a: &[usize; 3], b: &[usize; 3]) -> bool {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let touch = |x: usize, y: usize| x == y || ctx.shared_classes(x, y) >= 1;
    PERMS
        .iter()
        .any(|p| (0..3).all(|k| touch(a[k], b[p[k]])))
}

/// Closest-approach crossing of two segments: the midpoint of the closest
/// points when they are within `tol` of each other.
fn segment_crossing<T: Real>(
    s: &IntersectionSegment<T>,
    t: &IntersectionSegment<T>,
    tol: T,
) -> Option<Vector3<T>> {
    let (p, q) = closest_points(s.start, s.end, t.start, t.end);
    if (p - q).norm() <= tol {
        Some((p + q) * real::<T>(0.5))
    } else {
        None
    }
}

/// Closest points of two segments (clamped line-line solve).
fn closest_points<T: Real>(
    a0: Vector3<T>,
    a1: Vector3<T>,
    b0: Vector3<T>,
    b1: Vector3<T>,
) -> (Vector3<T>, Vector3<T>) {
    let u = a1 - a0;
    let v = b1 - b0;
    let w = a0 - b0;
    let uu = u.dot(&u);
    let vv = v.dot(&v);
    let uv = u.dot(&v);
    let uw = u.dot(&w);
    let vw = v.dot(&w);
    let denom = uu * vv - uv * uv;
    let clamp = |x: T| x.max(T::zero()).min(T::one());
    let mut s = if denom.abs() > (uu * vv) * real::<T>(1e-14) {
        clamp((uv * vw - vv * uw) / denom)
    } else {
        T::zero() // near-parallel: pick an end and project
    };
    let t = if vv > T::zero() {
        clamp((uv * s + vw) / vv)
    } else {
        T::zero()
    };
    // Re-project s against the clamped t (one Gauss-Seidel pass suffices for
    // segments).
    if uu > T::zero() {
        s = clamp((uv * t - uw) / uu);
    }
    (a0 + u * s, b0 + v * t)
}

/// Proximity clusters of triple points with their local sheet counts.
/// Returns the clusters with ≥ 4 sheets and the largest sheet count seen.
fn cluster_triples<T: Real>(
    mesh: &TriMesh<T>,
    ctx: &Context<T>,
    triples: &[TriplePoint<T>],
) -> (Vec<QuadrupleCluster<T>>, usize) {
    let positions: Vec<Vector3<T>> = triples.iter().map(|t| t.position).collect();
    let mut uf = UnionFind::new(triples.len());
    for_each_close_pair(&positions, ctx.cluster_radius, |i, j| uf.union(i, j));

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..triples.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }

    let mut clusters = Vec::new();
    let mut max_sheets = if triples.is_empty() { 0 } else { 3 };
    for members in groups.into_values() {
        let mut center = Vector3::zeros();
        for &m in &members {
            center += triples[m].position;
        }
        center /= real::<T>(members.len() as f64);
        let radius = members
            .iter()
            .map(|&m| (triples[m].position - center).norm())
            .fold(T::zero(), |a, b| a.max(b));

        let sheet_count = count_sheets(mesh, ctx, triples, &members, center, radius);
        max_sheets = max_sheets.max(sheet_count);
        if sheet_count >= 4 {
            clusters.push(QuadrupleCluster {
                center,
                radius,
                sheet_count,
                triples: members,
            });
        }
    }
    (clusters, max_sheets)
}

/// Distinct local sheets through a triple-point cluster: region-grow the
/// mesh faces near the cluster and count the connected components that
/// contain a face incident to a member triple.
fn count_sheets<T: Real>(
    mesh: &TriMesh<T>,
    ctx: &Context<T>,
    triples: &[TriplePoint<T>],
    members: &[usize],
    center: Vector3<T>,
    radius: T,
) -> usize {
    let mut incident: Vec<usize> = members
        .iter()
        .flat_map(|&m| triples[m].face_triples.iter().flatten().copied())
        .collect();
    incident.sort_unstable();
    incident.dedup();

    // Local mesh scale from the incident faces themselves.
    let mut h = T::zero();
    for &f in &incident {
        let p = mesh.face_points(f);
        h += (p[1] - p[0]).norm() + (p[2] - p[1]).norm() + (p[0] - p[2]).norm();
    }
    h /= real::<T>((3 * incident.len().max(1)) as f64);
    let growth = radius + h * real::<T>(2.0);

    // All faces with a vertex inside the grown ball.
    let mut region: Vec<usize> = (0..mesh.face_count())
        .filter(|&f| {
            mesh.face_points(f)
                .iter()
                .any(|p| (p - center).norm() <= growth)
        })
        .collect();
    for &f in &incident {
        if !region.contains(&f) {
            region.push(f);
        }
    }
    region.sort_unstable();

    // Components under shared-vertex or positional-edge adjacency. The
    // region is a small ball; pairwise testing is fine.
    let mut uf = UnionFind::new(region.len());
    for i in 0..region.len() {
        for j in i + 1..region.len() {
            let (a, b) = (region[i], region[j]);
            let (fa, fb) = (mesh.face_vertices(a), mesh.face_vertices(b));
            if fa.iter().any(|v| fb.contains(v)) || ctx.shared_classes(a, b) >= 2 {
                uf.union(i, j);
            }
        }
    }
    let mut sheets: Vec<usize> = incident
        .iter()
        .map(|f| uf.find(region.binary_search(f).expect("incident face is in region")))
        .collect();
    sheets.sort_unstable();
    sheets.dedup();
    sheets.len()
}

/// Distance from a point to a segment.
pub(crate) fn point_segment_distance<T: Real>(p: Vector3<T>, a: Vector3<T>, b: Vector3<T>) -> T {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == T::zero() {
        return (p - a).norm();
    }
    let t = (p - a).dot(&ab) / len2;
    let t = t.max(T::zero()).min(T::one());
    (p - (a + ab * t)).norm()
}

/// How far a segment endpoint sits from the nearest boundary edge of either
/// of its two faces (report invariant; used by tests).
pub fn endpoint_edge_distance<T: Real>(mesh: &TriMesh<T>, seg: &IntersectionSegment<T>) -> T {
    let mut worst = T::zero();
    for p in [seg.start, seg.end] {
        let mut best = real::<T>(f64::INFINITY);
        for f in [seg.faces.0, seg.faces.1] {
            let t = mesh.face_points(f);
            for k in 0..3 {
                best = best.min(point_segment_distance(p, t[k], t[(k + 1) % 3]));
            }
        }
        worst = worst.max(best);
    }
    worst
}

// ---------------------------------------------------------------------------
// Spatial clustering utilities shared across the module.

/// Minimal union-find (path halving, union by size).
pub(crate) struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
    }
}

/// Calls `visit(i, j)` (with `i < j`) for every point pair within `radius`,
/// via a uniform hash grid; deterministic visiting order.
pub(crate) fn for_each_close_pair<T: Real, F: FnMut(usize, usize)>(
    points: &[Vector3<T>],
    radius: T,
    mut visit: F,
) {
    if points.is_empty() {
        return;
    }
    let cell = radius.max(real(1e-30));
    let key = |p: &Vector3<T>| -> (i64, i64, i64) {
        (
            (p.x / cell).floor().as_f64() as i64,
            (p.y / cell).floor().as_f64() as i64,
            (p.z / cell).floor().as_f64() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    for (i, p) in points.iter().enumerate() {
        let (kx, ky, kz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        if j > i && (points[j] - p).norm() <= radius {
                            visit(i, j);
                        }
                    }
                }
            }
        }
    }
}

/// Groups points within `tol` into classes; returns each point's class id
/// (ids are dense, ordered by first member).
pub(crate) fn cluster_points<T: Real>(points: &[Vector3<T>], tol: T) -> Vec<u32> {
    let mut uf = UnionFind::new(points.len());
    for_each_close_pair(points, tol, |i, j| uf.union(i, j));
    let mut ids: HashMap<usize, u32> = HashMap::new();
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let root = uf.find(i);
        let next = ids.len() as u32;
        out.push(*ids.entry(root).or_insert(next));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use approx::assert_relative_eq;

    fn merged_spheres(level: u32, separation: f64) -> TriMesh<f64> {
        let a: TriMesh<f64> = icosphere(level, 1.0).unwrap();
        let mut positions = a.positions().to_vec();
        let mut faces = a.face_list();
        let offset = positions.len();
        for p in a.positions() {
            positions.push(p + Vector3::new(separation, 0.0, 0.0));
        }
        for f in a.face_list() {
            faces.push([f[0] + offset, f[1] + offset, f[2] + offset]);
        }
        TriMesh::build_and_validate(positions, &faces).unwrap()
    }

    #[test]
    fn embedded_icosphere_reports_nothing() {
        let mesh: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let report = self_intersection(&mesh, &IntersectionConfig::default()).unwrap();
        assert!(report.segments.is_empty());
        assert!(report.double_curves.is_empty());
        assert!(report.triple_points.is_empty());
        assert!(report.quadruple_clusters.is_empty());
        assert_eq!(report.max_multiplicity, 1);
    }

    #[test]
    fn two_offset_spheres_cross_in_a_circle() {
        // Unit spheres with centers 1 apart intersect in the circle
        // x = 1/2, y^2 + z^2 = 3/4.
        let mesh = merged_spheres(3, 1.0);
        let report = self_intersection(&mesh, &IntersectionConfig::default()).unwrap();
        assert!(!report.segments.is_empty());
        assert_eq!(report.double_curves.len(), 1, "one double curve");
        assert_eq!(report.max_multiplicity, 2);
        assert!(report.triple_points.is_empty());

        let h = mesh.metrics().mean_edge_length;
        let r = (3.0f64 / 4.0).sqrt();
        for p in &report.double_curves[0].points {
            let radial = (p.y * p.y + p.z * p.z).sqrt();
            let dev = ((radial - r).powi(2) + (p.x - 0.5).powi(2)).sqrt();
            assert!(
                dev <= 2.0 * h,
                "curve point deviates {dev:.4} from the circle (edge length {h:.4})"
            );
        }
        // The curve must wrap all the way around: its length approximates
        // the circle's circumference.
        let len = report.double_curves[0].length();
        let circumference = 2.0 * std::f64::consts::PI * r;
        assert_relative_eq!(len, circumference, max_relative = 0.05);
    }

    #[test]
    fn segment_endpoints_sit_on_face_edges() {
        let mesh = merged_spheres(2, 1.0);
        let report = self_intersection(&mesh, &IntersectionConfig::default()).unwrap();
        assert!(!report.segments.is_empty());
        for seg in &report.segments {
            assert!(
                endpoint_edge_distance(&mesh, seg) <= 1e-9,
                "endpoint strays from its face boundary"
            );
        }
    }

    #[test]
    fn hierarchy_matches_brute_force_exactly() {
        for (level, sep) in [(1u32, 1.0f64), (2, 1.0), (2, 0.4), (3, 1.7)] {
            let mesh = merged_spheres(level, sep);
            let config = IntersectionConfig::default();
            let fast = self_intersection(&mesh, &config).unwrap();
            let brute = self_intersection_brute(&mesh, &config).unwrap();
            assert_eq!(fast.segments.len(), brute.segments.len());
            for (a, b) in fast.segments.iter().zip(&brute.segments) {
                assert_eq!(a, b, "segment sets must match bitwise");
            }
        }
    }

    #[test]
    fn exact_vertex_on_surface_contact_recovers_by_jiggling() {
        // Two icospheres inscribing congruent unit spheres at separation
        // exactly 1.0 share vertices along their intersection circle, the
        // worst kind of grazing contact; the jiggle fallback must still
        // produce the single closed crossing curve.
        let mesh = merged_spheres(1, 1.0);
        let report = self_intersection(&mesh, &IntersectionConfig::default()).unwrap();
        assert_eq!(report.double_curves.len(), 1);
        let r = (3.0f64).sqrt() / 2.0;
        let len = report.double_curves[0].length();
        assert_relative_eq!(len, 2.0 * std::f64::consts::PI * r, max_relative = 0.15);
    }

    #[test]
    fn three_sheets_make_a_triple_point() {
        // Three long boxes... kept simple: three unit spheres with centers
        // forming a small triangle all cross pairwise, and near the common
        // center three sheets pass through common points.
        let a: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let mut positions = Vec::new();
        let mut faces = Vec::new();
        let centers = [
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(-0.25, 0.4330127018922193, 0.0),
            Vector3::new(-0.25, -0.4330127018922193, 0.0),
        ];
        for c in &centers {
            let offset = positions.len();
            for p in a.positions() {
                positions.push(p + c);
            }
            for f in a.face_list() {
                faces.push([f[0] + offset, f[1] + offset, f[2] + offset]);
            }
        }
        let mesh = TriMesh::build_and_validate(positions, &faces).unwrap();
        let report = self_intersection(&mesh, &IntersectionConfig::default()).unwrap();
        // Three spheres in this arrangement meet at exactly two genuine
        // triple points, one above and one below the center plane.
        assert_eq!(report.triple_points.len(), 2, "exactly two triple points");
        assert_eq!(report.max_multiplicity, 3);
        assert!(report.quadruple_clusters.is_empty());
        for t in &report.triple_points {
            assert!(t.position.x.abs() < 0.1 && t.position.y.abs() < 0.1);
            // z = ±sqrt(1 - |c|^2) for the analytic triple point.
            let z = (1.0f64 - 0.25).sqrt();
            assert!(
                (t.position.z.abs() - z).abs() < 0.05,
                "triple point at z = {:.4}, expected ±{z:.4}",
                t.position.z
            );
        }
    }

    #[test]
    fn coincident_copies_collapse_to_the_image_surface() {
        // Two exactly coincident spheres: the doubled surface's image is one
        // embedded sphere, so the report must be empty.
        let a: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let mut positions = a.positions().to_vec();
        let mut faces = a.face_list();
        let offset = positions.len();
        positions.extend_from_slice(a.positions());
        for f in a.face_list() {
            // Flip copies so the doubled mesh stays orientable.
            faces.push([f[0] + offset, f[2] + offset, f[1] + offset]);
        }
        let mesh = TriMesh::build_and_validate(positions, &faces).unwrap();
        let report = self_intersection(&mesh, &IntersectionConfig::default()).unwrap();
        assert!(report.segments.is_empty(), "coincident copies are one image");
        assert_eq!(report.max_multiplicity, 1);
    }

    #[test]
    fn li_yau_holds_for_sphere_and_crossing_pair() {
        let sphere: TriMesh<f64> = icosphere(3, 1.0).unwrap();
        let (k, energy, pass) = li_yau_check(&sphere).unwrap();
        assert_eq!(k, 1);
        assert!(pass, "round sphere: energy {energy:.3} ≥ 1 − 0.15");

        let pair = merged_spheres(2, 1.0);
        let (k, energy, pass) = li_yau_check(&pair).unwrap();
        assert_eq!(k, 2);
        assert!(pass, "two crossed spheres: energy {energy:.3} ≥ 2 − 0.15");
    }

    #[test]
    fn cluster_points_groups_by_distance() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1e-9, 0.0, 0.0),
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(0.5, 1e-9, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        let ids = cluster_points(&pts, 1e-6);
        assert_eq!(ids[0], ids[1]);
        assert_eq!(ids[2], ids[3]);
        assert_ne!(ids[0], ids[2]);
        assert_ne!(ids[2], ids[4]);
    }

    #[test]
    fn closest_points_of_crossing_segments_touch() {
        let (p, q) = closest_points(
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.25, -1.0, 0.0),
            Vector3::new(0.25, 1.0, 0.0),
        );
        assert_relative_eq!((p - q).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.x, 0.25, epsilon = 1e-12);
    }
}
