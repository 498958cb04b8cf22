//! Finite cyclic symmetry groups acting on meshes through vertex orbits.
//!
//! A group here is generated by one rigid motion: a rotation by `2pi/order`
//! about an axis through the origin, optionally composed with the reflection
//! through the plane normal to that axis (a rotoreflection). The group acts
//! on a mesh through a *combinatorial automorphism* supplied by whoever built
//! the mesh (an [`OrbitMap`]): vertex `v` at group element `j` of its orbit
//! must sit at `G^j x_rep`. Symmetry is enforced by orbit averaging, which is
//! an exact projection onto the invariant configuration space.
//!
//! Side exchange — the halfway-model property that the symmetry swaps the
//! surface's inside and outside — is carried as metadata. For the Morin-type
//! halfway model the geometric generator is a *pure rotation* and the side
//! swap comes from the orbit map's orientation-reversing vertex permutation
//! (a 90-degree turn of the surface exchanges its sides even though the
//! ambient motion preserves orientation); rotoreflection groups get the same
//! flag through their orientation-reversing ambient motion.

use crate::mesh::TriMesh;
use crate::real::{real, Real};
use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

/// Errors from group construction and orbit operations.
#[derive(Debug, thiserror::Error)]
pub enum SymmetryError {
    #[error("rotoreflection groups need even order, got {0}")]
    BadOrder(usize),
    #[error("orbit map does not fit the mesh: {0}")]
    OrbitMismatch(String),
    #[error("vertex {vertex} is pinned by the group but its position is off the fixed set by {deviation:e}")]
    FixedPointInconsistency { vertex: usize, deviation: f64 },
}

/// A finite cyclic group of rigid motions fixing the origin.
#[derive(Clone, Debug)]
pub struct SymmetryGroup<T: Real> {
    pub order: usize,
    pub axis: Unit<Vector3<T>>,
    pub rotoreflect: bool,
    /// Whether the generator (with its orbit map) swaps inside and outside.
    pub side_exchanging: bool,
    generator: Matrix3<T>,
    /// Cached powers `G^0 .. G^(order-1)`.
    powers: Vec<Matrix3<T>>,
}

/// Builds the cyclic group of the given order about `axis`. With
/// `rotoreflect` the generator is the rotation composed with the reflection
/// through the plane normal to the axis, which requires even order (odd
/// powers would never return to the identity); such groups are marked
/// side-exchanging.
pub fn make_group<T: Real>(
    order: usize,
    axis: Vector3<T>,
    rotoreflect: bool,
) -> Result<SymmetryGroup<T>, SymmetryError> {
    assert!(order >= 1, "group order must be at least 1");
    assert!(axis.norm() > T::zero(), "axis must be nonzero");
    if rotoreflect && order % 2 != 0 {
        return Err(SymmetryError::BadOrder(order));
    }
    let axis = Unit::new_normalize(axis);
    let angle = T::two_pi() / real::<T>(order as f64);
    let rotation = Rotation3::from_axis_angle(&axis, angle);
    let mut generator: Matrix3<T> = *rotation.matrix();
    if rotoreflect {
        let n = axis.into_inner();
        let mirror = Matrix3::identity() - n * n.transpose() * real::<T>(2.0);
        generator = mirror * generator;
    }
    let mut powers = Vec::with_capacity(order);
    let mut p = Matrix3::identity();
    for _ in 0..order {
        powers.push(p);
        p = generator * p;
    }
    Ok(SymmetryGroup {
        order,
        axis,
        rotoreflect,
        side_exchanging: rotoreflect,
        generator,
        powers,
    })
}

impl<T: Real> SymmetryGroup<T> {
    /// The generating rigid motion.
    pub fn generator(&self) -> &Matrix3<T> {
        &self.generator
    }

    /// `G^j` for `j` taken modulo the order (so `power(order) = identity`).
    pub fn power(&self, j: usize) -> &Matrix3<T> {
        &self.powers[j % self.order]
    }

    /// `G^(-j)`.
    pub fn inverse_power(&self, j: usize) -> &Matrix3<T> {
        &self.powers[(self.order - j % self.order) % self.order]
    }

    /// Same group, with the side-exchange flag overridden. Used by halfway
    /// models whose side swap is realized by an orientation-reversing orbit
    /// map over a pure rotation.
    pub fn marked_side_exchanging(mut self, flag: bool) -> Self {
        self.side_exchanging = flag;
        self
    }

    /// The cyclic subgroup generated by `G^k` (order / gcd factors); used to
    /// keep the rotational half of a rotoreflection or side-exchanging group.
    pub fn subgroup(&self, k: usize) -> SymmetryGroup<T> {
        assert!(k >= 1 && self.order % k == 0, "subgroup step must divide order");
        let order = self.order / k;
        let generator = self.powers[k % self.order.max(1)];
        let mut powers = Vec::with_capacity(order);
        let mut p = Matrix3::identity();
        for _ in 0..order {
            powers.push(p);
            p = generator * p;
        }
        SymmetryGroup {
            order,
            axis: self.axis,
            rotoreflect: false,
            side_exchanging: false,
            generator,
            powers,
        }
    }
}

/// How a group acts on a particular mesh: each vertex's orbit and its group
/// element within that orbit. Element indices run `0..orbit_size` with the
/// representative at 0, and `x_{v_j} = G^j x_rep` when the mesh is symmetric.
#[derive(Clone, Debug)]
pub struct OrbitMap {
    /// One representative vertex per orbit (element index 0).
    pub representatives: Vec<usize>,
    /// Per vertex: orbit id.
    pub orbit_of: Vec<usize>,
    /// Per vertex: group element index within its orbit.
    pub element_of: Vec<usize>,
}

impl OrbitMap {
    /// Builds an orbit map from the generator's vertex permutation `sigma`
    /// (σ(v) is where vertex v is carried). Cycle lengths must divide the
    /// group order.
    pub fn from_permutation(sigma: &[usize], order: usize) -> Result<OrbitMap, SymmetryError> {
        let n = sigma.len();
        let mut seen = vec![false; n];
        for (v, &s) in sigma.iter().enumerate() {
            if s >= n {
                return Err(SymmetryError::OrbitMismatch(format!(
                    "permutation sends {v} to {s}, out of range"
                )));
            }
            if seen[s] {
                return Err(SymmetryError::OrbitMismatch(format!(
                    "vertex {s} has two preimages"
                )));
            }
            seen[s] = true;
        }

        let mut orbit_of = vec![usize::MAX; n];
        let mut element_of = vec![0usize; n];
        let mut representatives = Vec::new();
        for start in 0..n {
            if orbit_of[start] != usize::MAX {
                continue;
            }
            let orbit_id = representatives.len();
            representatives.push(start);
            let mut v = start;
            let mut j = 0usize;
            loop {
                orbit_of[v] = orbit_id;
                element_of[v] = j;
                v = sigma[v];
                j += 1;
                if v == start {
                    break;
                }
                if j > n {
                    return Err(SymmetryError::OrbitMismatch(
                        "permutation cycle does not close".into(),
                    ));
                }
            }
            if order % j != 0 {
                return Err(SymmetryError::OrbitMismatch(format!(
                    "orbit of vertex {start} has size {j}, which does not divide group order {order}"
                )));
            }
        }
        Ok(OrbitMap {
            representatives,
            orbit_of,
            element_of,
        })
    }

    pub fn orbit_count(&self) -> usize {
        self.representatives.len()
    }

    /// The generator's vertex permutation σ encoded by this orbit map.
    pub fn permutation(&self) -> Vec<usize> {
        let orbits = self.orbit_elements();
        let mut sigma = vec![0usize; self.orbit_of.len()];
        for elems in &orbits {
            let s = elems.len();
            for (j, &v) in elems.iter().enumerate() {
                sigma[v] = elems[(j + 1) % s];
            }
        }
        sigma
    }

    /// Vertices of each orbit, listed by element index.
    pub fn orbit_elements(&self) -> Vec<Vec<usize>> {
        let mut sizes = vec![0usize; self.orbit_count()];
        for &o in &self.orbit_of {
            sizes[o] += 1;
        }
        let mut orbits: Vec<Vec<usize>> =
            sizes.iter().map(|&s| vec![usize::MAX; s]).collect();
        for v in 0..self.orbit_of.len() {
            orbits[self.orbit_of[v]][self.element_of[v]] = v;
        }
        orbits
    }

    fn check_against<T: Real>(
        &self,
        mesh: &TriMesh<T>,
        group: &SymmetryGroup<T>,
    ) -> Result<Vec<Vec<usize>>, SymmetryError> {
        if self.orbit_of.len() != mesh.vertex_count()
            || self.element_of.len() != mesh.vertex_count()
        {
            return Err(SymmetryError::OrbitMismatch(format!(
                "orbit map covers {} vertices, mesh has {}",
                self.orbit_of.len(),
                mesh.vertex_count()
            )));
        }
        let orbits = self.orbit_elements();
        for (oid, elems) in orbits.iter().enumerate() {
            if elems.iter().any(|&v| v == usize::MAX) {
                return Err(SymmetryError::OrbitMismatch(format!(
                    "orbit {oid} has gaps in its element indices"
                )));
            }
            if group.order % elems.len() != 0 {
                return Err(SymmetryError::OrbitMismatch(format!(
                    "orbit {oid} has size {}, which does not divide group order {}",
                    elems.len(),
                    group.order
                )));
            }
            if self.representatives[oid] != elems[0] {
                return Err(SymmetryError::OrbitMismatch(format!(
                    "orbit {oid} representative is not its element 0"
                )));
            }
        }
        Ok(orbits)
    }
}

/// Projects a position field onto the group-invariant subspace: each orbit is
/// replaced by the group average pulled back through its representative.
/// Orbits smaller than the group order land on the fixed set of their
/// stabilizer automatically (the average runs over the full group).
pub fn symmetrize_positions<T: Real>(
    positions: &[Vector3<T>],
    group: &SymmetryGroup<T>,
    orbits: &[Vec<usize>],
) -> Vec<Vector3<T>> {
    let mut out = positions.to_vec();
    let scale = T::one() / real::<T>(group.order as f64);
    for elems in orbits {
        let s = elems.len();
        let mut mean = Vector3::zeros();
        for j in 0..group.order {
            mean += group.inverse_power(j) * positions[elems[j % s]];
        }
        mean *= scale;
        for (l, &v) in elems.iter().enumerate() {
            out[v] = group.power(l) * mean;
        }
    }
    out
}

/// Projects a per-vertex field onto the sign channel of the group: the
/// subspace where the generator acts as multiplication by −1 (so the order
/// must be even).  At a halfway model the side-exchanging element reverses
/// the direction of the eversion, so the downhill mode out of the saddle
/// flips sign under it while staying invariant under the element's square —
/// exactly this channel.  Vertices fixed by a sub-order stabilizer are
/// damped toward the channel's kernel there (zero on the axis).
pub fn anti_symmetrize_field<T: Real>(
    field: &[Vector3<T>],
    group: &SymmetryGroup<T>,
    orbits: &[Vec<usize>],
) -> Vec<Vector3<T>> {
    assert!(
        group.order % 2 == 0,
        "the sign channel needs an even group order"
    );
    let mut out = field.to_vec();
    let scale = T::one() / real::<T>(group.order as f64);
    for elems in orbits {
        let s = elems.len();
        let mut mean = Vector3::zeros();
        for j in 0..group.order {
            let signed = group.inverse_power(j) * field[elems[j % s]];
            if j % 2 == 0 {
                mean += signed;
            } else {
                mean -= signed;
            }
        }
        mean *= scale;
        for (l, &v) in elems.iter().enumerate() {
            let img = group.power(l) * mean;
            out[v] = if l % 2 == 0 { img } else { -img };
        }
    }
    out
}

/// Explicit orthonormal basis of the sign channel (the image of
/// [`anti_symmetrize_field`]), one cluster of basis fields per vertex orbit,
/// each supported on that orbit alone.
///
/// A seed vector `u` at an orbit's first vertex propagates around the orbit
/// as `(-1)^l G^l u`; closing up after the orbit length `s` requires
/// `(-1)^s G^s u = u`, so the admissible seeds span the +1-eigenspace of the
/// closure matrix `(-1)^s G^s` — all of space on a free orbit, a line or a
/// plane on shorter orbits, nothing at vertices fixed by the generator.
/// Distinct basis fields are orthogonal (disjoint supports across orbits,
/// orthonormal seeds within one), and each has unit field norm, which makes
/// the collection directly usable as a restriction basis for reduced
/// Hessian assembly.
pub fn sign_channel_basis<T: Real>(
    group: &SymmetryGroup<T>,
    orbits: &[Vec<usize>],
) -> Vec<Vec<(usize, Vector3<T>)>> {
    assert!(
        group.order % 2 == 0,
        "the sign channel needs an even group order"
    );
    let mut basis = Vec::new();
    for elems in orbits {
        let s = elems.len();
        let mut closure = *group.power(s % group.order);
        if s % 2 == 1 {
            closure = -closure;
        }
        // +1-eigenvectors of the orthogonal closure matrix. For orthogonal M,
        // `M u = u` exactly when the symmetric part fixes `u` (equality in
        // Cauchy-Schwarz), so a symmetric eigensolve finds the space.
        let eig = ((closure + closure.transpose()) * real::<T>(0.5)).symmetric_eigen();
        let scale = T::one() / real::<T>(s as f64).sqrt();
        for k in 0..3 {
            if (eig.eigenvalues[k] - T::one()).abs() > real(1e-9) {
                continue;
            }
            let u = eig.eigenvectors.column(k).into_owned();
            let mut entries = Vec::with_capacity(s);
            for (l, &v) in elems.iter().enumerate() {
                let mut w = group.power(l) * u * scale;
                if l % 2 == 1 {
                    w = -w;
                }
                entries.push((v, w));
            }
            basis.push(entries);
        }
    }
    basis
}

/// Symmetrizes a mesh (see [`symmetrize_positions`]); the output's
/// [`symmetry_deviation`] is zero to roundoff.
pub fn symmetrize<T: Real>(
    mesh: &TriMesh<T>,
    group: &SymmetryGroup<T>,
    orbits: &OrbitMap,
) -> Result<TriMesh<T>, SymmetryError> {
    let elements = orbits.check_against(mesh, group)?;
    Ok(mesh.with_positions(symmetrize_positions(
        mesh.positions(),
        group,
        &elements,
    )))
}

/// Maximum over vertices of `|G x_v - x_sigma(v)|`: how far the mesh is from
/// exact equivariance under the generator.
pub fn symmetry_deviation<T: Real>(
    mesh: &TriMesh<T>,
    group: &SymmetryGroup<T>,
    orbits: &OrbitMap,
) -> Result<T, SymmetryError> {
    let elements = orbits.check_against(mesh, group)?;
    let positions = mesh.positions();
    let mut worst = T::zero();
    for elems in &elements {
        let s = elems.len();
        for j in 0..s {
            let expected = group.generator() * positions[elems[j]];
            let actual = positions[elems[(j + 1) % s]];
            let d = (expected - actual).norm();
            if d > worst {
                worst = d;
            }
        }
        // Sub-order orbits additionally pin the representative to the fixed
        // set of the stabilizer G^s; the wrap term above covers s = 1, and
        // larger strict divisors are covered by composing wrap steps.
    }
    Ok(worst)
}

/// Expands one position per orbit representative into the full vertex set by
/// the group action. Representatives of sub-order orbits must already lie on
/// their stabilizer's fixed set (within 1e-12 of it), or the expansion is
/// inconsistent.
pub fn orbit_expand<T: Real>(
    domain_positions: &[Vector3<T>],
    group: &SymmetryGroup<T>,
    orbits: &OrbitMap,
) -> Result<Vec<Vector3<T>>, SymmetryError> {
    if domain_positions.len() != orbits.orbit_count() {
        return Err(SymmetryError::OrbitMismatch(format!(
            "{} domain positions for {} orbits",
            domain_positions.len(),
            orbits.orbit_count()
        )));
    }
    let elements = orbits.orbit_elements();
    let mut out = vec![Vector3::zeros(); orbits.orbit_of.len()];
    for (oid, elems) in elements.iter().enumerate() {
        let s = elems.len();
        let rep = domain_positions[oid];
        if s < group.order {
            let wrapped = group.power(s) * rep;
            let deviation = (wrapped - rep).norm();
            if deviation.as_f64() > 1e-12 {
                return Err(SymmetryError::FixedPointInconsistency {
                    vertex: elems[0],
                    deviation: deviation.as_f64(),
                });
            }
        }
        for (j, &v) in elems.iter().enumerate() {
            out[v] = group.power(j) * rep;
        }
    }
    Ok(out)
}

/// Transplants a mesh through the group action: the result has the same
/// connectivity with `y_w = G x_{sigma^{-1}(w)}`. With an
/// orientation-reversing `sigma` this swaps the surface's sides (the signed
/// volume changes sign accordingly); it is the "twist" that builds the
/// second half of an eversion from the first.
pub fn apply_automorphism<T: Real>(
    mesh: &TriMesh<T>,
    sigma: &[usize],
    motion: &Matrix3<T>,
) -> TriMesh<T> {
    assert_eq!(sigma.len(), mesh.vertex_count());
    let old = mesh.positions();
    let mut positions = vec![Vector3::zeros(); old.len()];
    for (v, &sv) in sigma.iter().enumerate() {
        positions[sv] = motion * old[v];
    }
    mesh.with_positions(positions)
}

/// Checks that a vertex permutation is a combinatorial automorphism: every
/// face maps to a face (up to cyclic rotation or reflection of its corners).
pub fn is_automorphism<T: Real>(mesh: &TriMesh<T>, sigma: &[usize]) -> bool {
    if sigma.len() != mesh.vertex_count() {
        return false;
    }
    let mut face_set: std::collections::HashSet<[usize; 3]> =
        std::collections::HashSet::with_capacity(mesh.face_count());
    for f in 0..mesh.face_count() {
        face_set.insert(canonical_triple(mesh.face_vertices(f)));
    }
    (0..mesh.face_count()).all(|f| {
        let [a, b, c] = mesh.face_vertices(f);
        face_set.contains(&canonical_triple([sigma[a], sigma[b], sigma[c]]))
    })
}

fn canonical_triple(mut t: [usize; 3]) -> [usize; 3] {
    t.sort_unstable();
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use crate::willmore::willmore_gradient;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Recovers the generator's vertex permutation of a geometrically
    /// symmetric mesh by nearest-position matching (test helper only; real
    /// generators construct their permutations combinatorially).
    fn permutation_from_motion(mesh: &TriMesh<f64>, g: &Matrix3<f64>) -> Vec<usize> {
        let positions = mesh.positions();
        positions
            .iter()
            .map(|p| {
                let target = g * p;
                let (best, dist) = positions
                    .iter()
                    .enumerate()
                    .map(|(v, q)| (v, (q - target).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(dist < 1e-9, "no matching vertex under the motion");
                best
            })
            .collect()
    }

    fn two_fold_icosphere() -> (TriMesh<f64>, SymmetryGroup<f64>, OrbitMap) {
        let mesh: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let group = make_group(2, Vector3::z(), false).unwrap();
        let sigma = permutation_from_motion(&mesh, group.generator());
        assert!(is_automorphism(&mesh, &sigma));
        let orbits = OrbitMap::from_permutation(&sigma, 2).unwrap();
        (mesh, group, orbits)
    }

    #[test]
    fn generator_powers_close() {
        for (order, rotoreflect) in [(1usize, false), (2, false), (3, false), (4, true), (6, true)]
        {
            let g: SymmetryGroup<f64> =
                make_group(order, Vector3::new(0.3, -0.2, 0.9), rotoreflect).unwrap();
            let closed = g.generator() * g.power(order - 1);
            let err = (closed - Matrix3::identity()).norm();
            assert!(err < 1e-14, "order {order} rotoreflect {rotoreflect}: {err:e}");
        }
    }

    #[test]
    fn odd_rotoreflection_is_rejected() {
        assert!(matches!(
            make_group::<f64>(3, Vector3::z(), true),
            Err(SymmetryError::BadOrder(3))
        ));
    }

    #[test]
    fn rotoreflection_flips_z() {
        let g: SymmetryGroup<f64> = make_group(4, Vector3::z(), true).unwrap();
        let p = Vector3::new(1.0, 0.0, 0.5);
        let q = g.generator() * p;
        assert_relative_eq!(q.z, -0.5, epsilon = 1e-15);
        assert_relative_eq!(q.norm(), p.norm(), epsilon = 1e-15);
        assert!(g.side_exchanging);
    }

    #[test]
    fn symmetrize_is_idempotent_and_exact() {
        let (mesh, group, orbits) = two_fold_icosphere();
        // Perturb, then project back.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = mesh.with_positions(
            mesh.positions()
                .iter()
                .map(|p| {
                    p + Vector3::new(
                        rng.gen_range(-0.01..0.01),
                        rng.gen_range(-0.01..0.01),
                        rng.gen_range(-0.01..0.01),
                    )
                })
                .collect(),
        );
        let projected = symmetrize(&noisy, &group, &orbits).unwrap();
        let dev = symmetry_deviation(&projected, &group, &orbits).unwrap();
        assert!(dev <= 1e-13, "deviation {dev:e}");
        let twice = symmetrize(&projected, &group, &orbits).unwrap();
        let drift = projected
            .positions()
            .iter()
            .zip(twice.positions())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-13, "second projection moved points by {drift:e}");
    }

    #[test]
    fn symmetric_mesh_is_a_fixed_point() {
        let (mesh, group, orbits) = two_fold_icosphere();
        let dev_before = symmetry_deviation(&mesh, &group, &orbits).unwrap();
        assert!(dev_before <= 1e-13);
        let projected = symmetrize(&mesh, &group, &orbits).unwrap();
        let drift = mesh
            .positions()
            .iter()
            .zip(projected.positions())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-13);
    }

    #[test]
    fn translation_off_axis_breaks_symmetry() {
        let (mesh, group, orbits) = two_fold_icosphere();
        let shift = Vector3::new(0.05, 0.0, 0.0);
        let moved =
            mesh.with_positions(mesh.positions().iter().map(|p| p + shift).collect());
        let dev = symmetry_deviation(&moved, &group, &orbits).unwrap();
        assert!(dev > 0.05, "deviation {dev} should grow with the shift");
    }

    #[test]
    fn orbit_expand_round_trips() {
        let (mesh, group, orbits) = two_fold_icosphere();
        let elements = orbits.orbit_elements();
        let reps: Vec<Vector3<f64>> = elements
            .iter()
            .map(|e| mesh.position(e[0]))
            .collect();
        let expanded = orbit_expand(&reps, &group, &orbits).unwrap();
        for (v, p) in expanded.iter().enumerate() {
            assert_relative_eq!((p - mesh.position(v)).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn orbit_sizes_divide_group_order() {
        let (_, _, orbits) = two_fold_icosphere();
        for elems in orbits.orbit_elements() {
            assert!(2 % elems.len() == 0);
        }
    }

    #[test]
    fn fixed_point_inconsistency_is_detected() {
        // A 2-cycle permutation on 2 vertices... use the icosphere map but
        // displace a fixed-axis representative off the axis.
        let (mesh, group, orbits) = two_fold_icosphere();
        let elements = orbits.orbit_elements();
        // The level-2 icosphere about z has no size-1 orbit for order 2
        // unless a vertex sits on the z-axis; this mesh has two (the poles of
        // the subdivided icosahedron are not on z), so synthesize one: take
        // any orbit and fake it as fixed by truncating the permutation.
        if let Some(singleton) = elements.iter().position(|e| e.len() == 1) {
            let v = elements[singleton][0];
            let mut reps: Vec<Vector3<f64>> =
                elements.iter().map(|e| mesh.position(e[0])).collect();
            reps[orbits.orbit_of[v]] += Vector3::new(0.1, 0.0, 0.0);
            assert!(matches!(
                orbit_expand(&reps, &group, &orbits),
                Err(SymmetryError::FixedPointInconsistency { .. })
            ));
        } else {
            // No on-axis vertex: construct a tiny synthetic case instead.
            let sigma = vec![0usize]; // one fixed vertex
            let orbits = OrbitMap::from_permutation(&sigma, 2).unwrap();
            let reps = vec![Vector3::new(0.1, 0.2, 0.3)]; // off the z-axis
            assert!(matches!(
                orbit_expand(&reps, &group, &orbits),
                Err(SymmetryError::FixedPointInconsistency { .. })
            ));
        }
    }

    #[test]
    fn gradient_is_equivariant_on_symmetric_meshes() {
        let (mesh, group, orbits) = two_fold_icosphere();
        // Symmetric but non-round configuration: squash along x+z.
        let squashed = mesh.with_positions(
            mesh.positions()
                .iter()
                .map(|p| Vector3::new(p.x * 0.8, p.y * 1.1, p.z * 0.8))
                .collect(),
        );
        let exact = symmetrize(&squashed, &group, &orbits).unwrap();
        let grad = willmore_gradient(&exact).unwrap();
        let sigma = orbits.permutation();
        let g = group.generator();
        let scale = grad.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for v in 0..exact.vertex_count() {
            let lhs = g * grad[v];
            let rhs = grad[sigma[v]];
            assert!(
                (lhs - rhs).norm() <= 1e-10 * scale.max(1.0),
                "gradient not equivariant at vertex {v}"
            );
        }
    }

    #[test]
    fn anti_symmetrized_field_flips_sign_under_the_generator() {
        // One free orbit of 4 around the z-axis plus a fixed axis vertex.
        let group: SymmetryGroup<f64> =
            make_group(4, Vector3::new(0.0, 0.0, 1.0), false).unwrap();
        let sigma = vec![1, 2, 3, 0, 4];
        let orbits = OrbitMap::from_permutation(&sigma, 4).unwrap();
        let elements = orbits.orbit_elements();
        let field = vec![
            Vector3::new(0.3, -1.1, 0.7),
            Vector3::new(-0.2, 0.5, 0.1),
            Vector3::new(0.9, 0.4, -0.6),
            Vector3::new(0.0, -0.8, 1.3),
            Vector3::new(0.5, 0.5, 0.5),
        ];
        let anti = anti_symmetrize_field(&field, &group, &elements);
        let g = group.generator();
        for v in 0..4 {
            let lhs = g * anti[v];
            let rhs = -anti[sigma[v]];
            assert!(
                (lhs - rhs).norm() <= 1e-12,
                "sign channel violated at vertex {v}: {lhs:?} vs {rhs:?}"
            );
        }
        // The axis vertex is fixed by the generator, so the channel kills it.
        assert!(anti[4].norm() <= 1e-12);
        // Projector property: applying it twice changes nothing.
        let twice = anti_symmetrize_field(&anti, &group, &elements);
        for v in 0..5 {
            assert!((twice[v] - anti[v]).norm() <= 1e-12);
        }
        // The channel is orthogonal to the invariant one.
        let inv = symmetrize_positions(&field, &group, &elements);
        let dot: f64 = inv.iter().zip(&anti).map(|(a, b)| a.dot(b)).sum();
        assert!(dot.abs() <= 1e-12, "channels not orthogonal: {dot}");
    }

    #[test]
    fn apply_automorphism_moves_positions_through_the_action() {
        let (mesh, group, orbits) = two_fold_icosphere();
        let sigma = orbits.permutation();
        let image = apply_automorphism(&mesh, &sigma, group.generator());
        // The icosphere is symmetric, so the automorphism fixes it pointwise.
        for v in 0..mesh.vertex_count() {
            assert_relative_eq!(
                (image.position(v) - mesh.position(v)).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
        // Signed volume is preserved (sigma here is orientation-preserving).
        assert_relative_eq!(
            image.metrics().signed_volume,
            mesh.metrics().signed_volume,
            max_relative = 1e-12
        );
    }
}
