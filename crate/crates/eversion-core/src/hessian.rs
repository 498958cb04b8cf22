//! Matrix-free second-order information: Hessian-vector products by central
//! differences of the exact gradient, and the lowest eigenpair of the Hessian
//! restricted to the complement of the energy's invariance modes.

use crate::mesh::{MeshError, TriMesh};
use crate::real::{pairwise_sum_with, real, Real};
use crate::willmore::{gradient_norm, willmore_energy, willmore_gradient, GradientField};
use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Errors from the eigenpair solver.
#[derive(Debug, thiserror::Error)]
pub enum EigenError {
    #[error(
        "iteration budget exhausted before the residual tolerance was met \
         (best residual {0:e} at eigenvalue estimate {1:e})"
    )]
    NotConverged(f64, f64),
    #[error("mesh is not critical: gradient norm {0:e} exceeds threshold {1:e}")]
    NotCritical(f64, f64),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Settings for [`lowest_eigenpair`].
#[derive(Clone, Copy, Debug)]
pub struct EigenConfig<T: Real> {
    /// Total budget of Hessian-vector products across restarts.
    pub max_applies: usize,
    /// Lanczos steps per restart cycle.
    pub block_size: usize,
    /// Accept the Ritz pair when `|H v - lambda v| <= residual_tolerance`.
    ///
    /// The product is a central-difference estimate, so the achievable
    /// residual has a noise floor that grows with mesh stiffness; on fine
    /// meshes a tolerance well below that floor can never be met and the
    /// solver reports the best pair it found instead.
    pub residual_tolerance: T,
    /// Precondition: gradient norm must be below this for the mesh to count
    /// as a critical point.
    pub critical_threshold: T,
    /// Seed for the random start vector.
    pub seed: u64,
}

impl<T: Real> Default for EigenConfig<T> {
    fn default() -> Self {
        EigenConfig {
            max_applies: 900,
            block_size: 60,
            residual_tolerance: real(1e-3),
            critical_threshold: real(1e-2),
            seed: 0,
        }
    }
}

/// Applies the Hessian of the bending energy to a per-vertex direction field
/// by central differences of the exact gradient:
/// `H d = (grad E(x + eps d) - grad E(x - eps d)) / (2 eps)`, with `eps`
/// scaled to the mesh size and `|d|`. If a displaced configuration has a
/// degenerate face, `eps` shrinks and the product is retried (5 attempts).
pub fn hessian_apply<T: Real>(
    mesh: &TriMesh<T>,
    direction: &[Vector3<T>],
) -> Result<GradientField<T>, MeshError> {
    assert_eq!(direction.len(), mesh.vertex_count());
    let dnorm = field_norm(direction);
    if dnorm == T::zero() {
        return Ok(vec![Vector3::zeros(); mesh.vertex_count()]);
    }
    let scale = mesh.metrics().mean_edge_length;
    let mut eps = real::<T>(1e-5) * scale / dnorm;
    let mut last_err = None;
    for _ in 0..5 {
        let displaced = |sign: T| -> Result<GradientField<T>, MeshError> {
            let pos: Vec<Vector3<T>> = mesh
                .positions()
                .iter()
                .zip(direction)
                .map(|(p, d)| p + d * (eps * sign))
                .collect();
            willmore_gradient(&mesh.with_positions(pos))
        };
        match (displaced(T::one()), displaced(-T::one())) {
            (Ok(gp), Ok(gm)) => {
                let inv = T::one() / (real::<T>(2.0) * eps);
                return Ok(gp
                    .iter()
                    .zip(&gm)
                    .map(|(p, m)| (p - m) * inv)
                    .collect());
            }
            (Err(e), _) | (_, Err(e)) => {
                last_err = Some(e);
                eps *= real::<T>(0.2);
            }
        }
    }
    Err(last_err.unwrap())
}

/// Second directional derivative of the bending energy along `direction`
/// (taken at unit field norm), computed as a central second difference of
/// the *exact energy*: no gradient differencing is involved, so the only
/// noise is roundoff in the energy values and the O(step²) Taylor tail.  The
/// probe step is `relative_step` times the mean edge length.
///
/// The value is a Rayleigh quotient, hence an upper bound for the lowest
/// Hessian eigenvalue on the direction's subspace: a negative value at a
/// critical point *certifies* a descent direction regardless of how well the
/// iterative eigensolver converged.
pub fn energy_curvature<T: Real>(
    mesh: &TriMesh<T>,
    direction: &[Vector3<T>],
    relative_step: T,
) -> Result<T, MeshError> {
    assert_eq!(direction.len(), mesh.vertex_count());
    let dnorm = field_norm(direction);
    assert!(dnorm > T::zero(), "direction must be nonzero");
    let s = relative_step * mesh.metrics().mean_edge_length;
    let k = s / dnorm;
    let displaced = |sign: T| -> Result<T, MeshError> {
        let pos: Vec<Vector3<T>> = mesh
            .positions()
            .iter()
            .zip(direction)
            .map(|(p, d)| p + d * (k * sign))
            .collect();
        Ok(willmore_energy(&mesh.with_positions(pos))?.total)
    };
    let e0 = willmore_energy(mesh)?.total;
    let ep = displaced(T::one())?;
    let em = displaced(-T::one())?;
    Ok((ep + em - e0 - e0) / (s * s))
}

/// Lowest eigenvalue and unit eigenvector of the Hessian restricted to the
/// orthogonal complement of the 7 invariance modes (3 translations, 3
/// infinitesimal rotations, 1 scaling), found by Lanczos iteration with full
/// reorthogonalization and restarts.
pub fn lowest_eigenpair<T: Real>(
    mesh: &TriMesh<T>,
    config: &EigenConfig<T>,
) -> Result<(T, GradientField<T>), EigenError> {
    lowest_eigenpair_in(mesh, config, &|_| {})
}

/// Lowest eigenpair of the Hessian restricted to the span of an explicit
/// orthonormal basis of sparse fields (each basis field is a list of
/// `(vertex, vector)` entries; distinct fields must be orthonormal under
/// [`field_dot`], as the bases from
/// [`crate::symmetry::sign_channel_basis`] are).
///
/// The reduced matrix is assembled with one [`hessian_apply`] per basis
/// field and diagonalized densely, so — unlike the Lanczos path — there is
/// no iterative convergence question: accuracy is limited only by the
/// finite-difference noise of the products.  On a symmetry channel whose
/// dimension is a fraction of `3V` this costs the same order of gradient
/// evaluations as one long Lanczos run, but cannot stagnate when the
/// spectrum is stiff.  Confirm a negative result with [`energy_curvature`]
/// along the returned vector: the curvature is exact where the assembly is
/// differenced.
pub fn lowest_restricted_eigenpair<T: Real>(
    mesh: &TriMesh<T>,
    basis: &[Vec<(usize, Vector3<T>)>],
) -> Result<(T, GradientField<T>), EigenError> {
    let reduced = restricted_matrix(mesh, basis)?;
    let r = basis.len();
    let eig = reduced.symmetric_eigen();
    let mut best = 0;
    for k in 1..r {
        if eig.eigenvalues[k] < eig.eigenvalues[best] {
            best = k;
        }
    }
    let lambda = eig.eigenvalues[best];
    let coeffs = eig.eigenvectors.column(best);
    let mut field: GradientField<T> = vec![Vector3::zeros(); mesh.vertex_count()];
    for (j, entries) in basis.iter().enumerate() {
        for &(v, u) in entries {
            field[v] += u * coeffs[j];
        }
    }
    normalize(&mut field);
    Ok((lambda, field))
}

/// The Hessian compressed onto the span of an orthonormal sparse basis (see
/// [`lowest_restricted_eigenpair`]): entry `(i, j)` is `<b_i, H b_j>`,
/// symmetrized after assembly because the finite differencing inside
/// [`hessian_apply`] breaks the exact symmetry at its noise level.
pub fn restricted_matrix<T: Real>(
    mesh: &TriMesh<T>,
    basis: &[Vec<(usize, Vector3<T>)>],
) -> Result<DMatrix<T>, EigenError> {
    let nv = mesh.vertex_count();
    let r = basis.len();
    assert!(r > 0, "restriction basis is empty");
    let mut reduced = DMatrix::<T>::zeros(r, r);
    let mut dense: GradientField<T> = vec![Vector3::zeros(); nv];
    for j in 0..r {
        for &(v, u) in &basis[j] {
            dense[v] += u;
        }
        let image = hessian_apply(mesh, &dense)?;
        for &(v, _) in &basis[j] {
            dense[v] = Vector3::zeros();
        }
        for (i, entries) in basis.iter().enumerate() {
            let mut acc = T::zero();
            for &(v, u) in entries {
                acc += u.dot(&image[v]);
            }
            reduced[(i, j)] = acc;
        }
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let avg = (reduced[(i, j)] + reduced[(j, i)]) * real::<T>(0.5);
            reduced[(i, j)] = avg;
            reduced[(j, i)] = avg;
        }
    }
    Ok(reduced)
}

/// [`lowest_eigenpair`] restricted to a closed invariant subspace: `channel`
/// must orthogonally project a field onto it (say, a symmetry isotype such
/// as [`crate::symmetry::anti_symmetrize_field`]).  The Hessian commutes
/// with such a projection whenever the mesh itself is invariant under the
/// symmetry defining it, so the iteration stays in the channel and returns
/// the channel's own lowest eigenpair.
pub fn lowest_eigenpair_in<T: Real>(
    mesh: &TriMesh<T>,
    config: &EigenConfig<T>,
    channel: &dyn Fn(&mut GradientField<T>),
) -> Result<(T, GradientField<T>), EigenError> {
    let grad = willmore_gradient(mesh)?;
    let gnorm = gradient_norm(&grad);
    if gnorm > config.critical_threshold {
        return Err(EigenError::NotCritical(
            gnorm.as_f64(),
            config.critical_threshold.as_f64(),
        ));
    }

    let nv = mesh.vertex_count();
    let deflation = invariance_basis(mesh);

    // Random start, projected and normalized.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut v0: Vec<Vector3<T>> = (0..nv)
        .map(|_| {
            Vector3::new(
                real::<T>(rng.gen_range(-1.0..1.0)),
                real::<T>(rng.gen_range(-1.0..1.0)),
                real::<T>(rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    channel(&mut v0);
    project_out(&mut v0, &deflation);
    normalize(&mut v0);

    let mut applies = 0usize;
    let mut best: Option<(f64, T)> = None;
    while applies < config.max_applies {
        let steps = config.block_size.min(config.max_applies - applies);
        let (lambda, vec, _residual_est, used) =
            lanczos_cycle(mesh, &v0, &deflation, channel, steps)?;
        applies += used;

        // Explicit residual check with a fresh product. This is the honest
        // certificate: the Lanczos-internal estimate reflects only the
        // (noisy) products the sweep itself saw.
        let hv = hessian_apply(mesh, &vec)?;
        applies += 1;
        let mut r: Vec<Vector3<T>> = hv
            .iter()
            .zip(&vec)
            .map(|(h, v)| h - v * lambda)
            .collect();
        // Invariance-mode and out-of-channel components of the residual are
        // projection noise, not error against the restricted operator.
        channel(&mut r);
        project_out(&mut r, &deflation);
        let residual = field_norm(&r).as_f64();
        if best.map_or(true, |(br, _)| residual < br) {
            best = Some((residual, lambda));
        }
        if residual <= config.residual_tolerance.as_f64() {
            return Ok((lambda, vec));
        }
        v0 = vec;
    }
    let (residual, lambda) = best.unwrap_or((f64::INFINITY, T::zero()));
    Err(EigenError::NotConverged(residual, lambda.as_f64()))
}

/// One Lanczos sweep: returns the lowest Ritz pair, a residual estimate, and
/// the number of Hessian applications consumed.
fn lanczos_cycle<T: Real>(
    mesh: &TriMesh<T>,
    start: &[Vector3<T>],
    deflation: &[Vec<Vector3<T>>],
    channel: &dyn Fn(&mut GradientField<T>),
    max_steps: usize,
) -> Result<(T, GradientField<T>, T, usize), EigenError> {
    let mut q: Vec<Vec<Vector3<T>>> = Vec::new();
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();

    let mut w = start.to_vec();
    channel(&mut w);
    project_out(&mut w, deflation);
    normalize(&mut w);
    q.push(w);

    let mut applies = 0usize;
    for j in 0..max_steps.max(2) {
        let mut z = hessian_apply(mesh, &q[j])?;
        applies += 1;
        channel(&mut z);
        project_out(&mut z, deflation);
        let a = field_dot(&q[j], &z);
        alpha.push(a);
        axpy(&mut z, -a, &q[j]);
        if j > 0 {
            let b = beta[j - 1];
            axpy(&mut z, -b, &q[j - 1]);
        }
        // Full reorthogonalization (twice) against the whole basis.
        for _ in 0..2 {
            for qi in &q {
                let c = field_dot(qi, &z);
                axpy(&mut z, -c, qi);
            }
            channel(&mut z);
            project_out(&mut z, deflation);
        }
        let b = field_norm(&z);
        if b.as_f64() < 1e-14 {
            break; // exact invariant subspace
        }
        beta.push(b);
        let mut next = z;
        scale_field(&mut next, T::one() / b);
        q.push(next);
    }

    let m = alpha.len();
    let mut tri = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        tri[(i, i)] = alpha[i];
        if i + 1 < m {
            tri[(i, i + 1)] = beta[i];
            tri[(i + 1, i)] = beta[i];
        }
    }
    let eig = tri.symmetric_eigen();
    let mut lowest = 0;
    for i in 1..m {
        if eig.eigenvalues[i] < eig.eigenvalues[lowest] {
            lowest = i;
        }
    }
    let lambda = eig.eigenvalues[lowest];
    let y = eig.eigenvectors.column(lowest);

    let nv = mesh.vertex_count();
    let mut vec = vec![Vector3::<T>::zeros(); nv];
    for (i, qi) in q.iter().enumerate().take(m) {
        axpy(&mut vec, y[i], qi);
    }
    normalize(&mut vec);
    let residual_est = if m < q.len() && m > 0 && !beta.is_empty() {
        beta[m - 1].abs() * y[m - 1].abs()
    } else {
        T::zero()
    };
    Ok((lambda, vec, residual_est, applies))
}

/// Orthonormal basis of the 7 invariance modes at this mesh: rigid
/// translations, infinitesimal rotations `e x x_v`, and uniform scaling
/// `x_v` (about the centroid).
pub fn invariance_basis<T: Real>(mesh: &TriMesh<T>) -> Vec<Vec<Vector3<T>>> {
    let nv = mesh.vertex_count();
    let centroid = mesh.area_centroid();
    let centered: Vec<Vector3<T>> = mesh.positions().iter().map(|p| p - centroid).collect();

    let mut basis: Vec<Vec<Vector3<T>>> = Vec::with_capacity(7);
    for axis in 0..3 {
        let mut e = Vector3::zeros();
        e[axis] = T::one();
        basis.push(vec![e; nv]);
    }
    for axis in 0..3 {
        let mut e = Vector3::zeros();
        e[axis] = T::one();
        basis.push(centered.iter().map(|x| e.cross(x)).collect());
    }
    basis.push(centered.clone());

    // Gram-Schmidt (translations are already mutually orthogonal; rotations
    // and scaling are not, in general).
    let mut ortho: Vec<Vec<Vector3<T>>> = Vec::with_capacity(7);
    for mut b in basis {
        for o in &ortho {
            let c = field_dot(o, &b);
            axpy(&mut b, -c, o);
        }
        let n = field_norm(&b);
        if n.as_f64() > 1e-12 {
            scale_field(&mut b, T::one() / n);
            ortho.push(b);
        }
    }
    ortho
}

/// Removes the components of `v` along each (orthonormal) basis field.
pub fn project_out<T: Real>(v: &mut [Vector3<T>], basis: &[Vec<Vector3<T>>]) {
    for b in basis {
        let c = field_dot(b, v);
        axpy(v, -c, b);
    }
}

pub fn field_dot<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> T {
    pairwise_sum_with(a.len(), &|i| a[i].dot(&b[i]))
}

pub fn field_norm<T: Real>(a: &[Vector3<T>]) -> T {
    field_dot(a, a).sqrt()
}

fn axpy<T: Real>(y: &mut [Vector3<T>], alpha: T, x: &[Vector3<T>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * alpha;
    }
}

fn scale_field<T: Real>(y: &mut [Vector3<T>], alpha: T) {
    for yi in y.iter_mut() {
        *yi *= alpha;
    }
}

pub fn normalize<T: Real>(y: &mut [Vector3<T>]) {
    let n = field_norm(y);
    if n > T::zero() {
        scale_field(y, T::one() / n);
    }
}
