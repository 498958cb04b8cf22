//! Gradient descent on the bending energy: single Armijo-backtracked steps,
//! flow orchestration to an energy plateau (optionally under a symmetry
//! constraint), saddle pushoff along the lowest Hessian eigenvector, and
//! pose normalization.

use crate::hessian::{field_norm, lowest_eigenpair, EigenConfig, EigenError};
use crate::mesh::{improve, ImproveConfig, MeshError, TriMesh};
use crate::real::{real, Real};
use crate::symmetry::{symmetrize, symmetry_deviation, OrbitMap, SymmetryGroup, SymmetryError};
use crate::willmore::{gradient_norm, willmore_energy, willmore_gradient};
use nalgebra::Vector3;

/// Errors from descent and flow.
#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("line search failed: step size underflowed below 1e-14")]
    LineSearchFailure,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("symmetry deviation {0:e} exceeded the allowed 1e-8 during a constrained flow")]
    SymmetryLost(f64),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// Errors from [`saddle_pushoff`].
#[derive(Debug, thiserror::Error)]
pub enum PushoffError {
    #[error("lowest constrained eigenvalue {0:e} is not negative; the mesh is not a saddle")]
    NotASaddle(f64),
    #[error("pushoff raised the energy from {from} to {to}; shrink the magnitude")]
    EnergyIncreased { from: f64, to: f64 },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Knobs for [`descent_step`] and [`flow_until`].
#[derive(Clone, Copy, Debug)]
pub struct FlowConfig<T: Real> {
    pub max_steps: usize,
    /// Converged when the gradient field norm drops below this.
    pub gradient_tolerance: T,
    /// Armijo sufficient-decrease constant, in (0, 1).
    pub armijo_constant: T,
    /// Backtracking shrink factor, in (0, 1).
    pub step_shrink: T,
    /// First trial step size of the very first step (later steps warm-start
    /// from the previously accepted size).
    pub initial_step: T,
    /// Run `improve` every this many steps (0 = never).
    pub improve_every: usize,
    /// Record a frame every this many accepted steps.
    pub frame_every: usize,
    /// Early stop: converged when the energy is within this window of
    /// `target_energy` (ignored when `target_energy` is `None`).
    pub target_energy_window: T,
    pub target_energy: Option<T>,
    /// Allow connectivity-changing flips inside `improve` (must be off in
    /// symmetry-constrained flows, where connectivity carries the orbit map).
    pub flips_in_improve: bool,
}

impl<T: Real> Default for FlowConfig<T> {
    fn default() -> Self {
        FlowConfig {
            max_steps: 2000,
            gradient_tolerance: real(1e-4),
            armijo_constant: real(1e-4),
            step_shrink: real(0.5),
            initial_step: real(1e-2),
            improve_every: 0,
            frame_every: 10,
            target_energy_window: real(1e-3),
            target_energy: None,
            flips_in_improve: true,
        }
    }
}

/// Why a flow stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxSteps,
    LineSearchFailure,
}

/// Surgery log entry inside a flow.
#[derive(Clone, Copy, Debug)]
pub struct SurgeryEvent {
    pub step: usize,
    pub flips: usize,
    pub collapses: usize,
}

/// A gradient flow: recorded frames with time stamps (normalized arc length
/// of the trajectory through configuration space), the full energy history,
/// and the surgery log.
#[derive(Clone, Debug)]
pub struct FlowTrace<T: Real> {
    /// `(mesh, time)` with time in `[0, 1]`; always includes start and end.
    pub frames: Vec<(TriMesh<T>, T)>,
    /// Energy after step `i` (`energies[0]` is the initial energy).
    pub energies: Vec<T>,
    pub events: Vec<SurgeryEvent>,
    pub terminated_by: Termination,
    /// Gradient norm at the final mesh.
    pub final_gradient_norm: T,
}

impl<T: Real> FlowTrace<T> {
    pub fn final_mesh(&self) -> &TriMesh<T> {
        &self.frames.last().expect("flow always records frames").0
    }

    pub fn final_energy(&self) -> T {
        *self.energies.last().expect("flow always records energies")
    }
}

/// Optional symmetry constraint for a flow: the mesh is re-projected onto
/// the group-invariant space after every step, and the flow fails with
/// [`FlowError::SymmetryLost`] if a step ever drifts past 1e-8 before the
/// projection.
pub struct SymmetryConstraint<'a, T: Real> {
    pub group: &'a SymmetryGroup<T>,
    pub orbits: &'a OrbitMap,
}

/// One Armijo-backtracked descent step: `x' = x - t grad E` with `t` found by
/// halving from `initial_step` until `E(x') <= E(x) - c t |grad E|^2`.
pub fn descent_step<T: Real>(
    mesh: &TriMesh<T>,
    config: &FlowConfig<T>,
) -> Result<(TriMesh<T>, T), FlowError> {
    let energy = willmore_energy(mesh)?.total;
    let grad = willmore_gradient(mesh)?;
    step_from(mesh, energy, &grad, config.initial_step, config).map(|(m, t, _)| (m, t))
}

/// Backtracking core shared by `descent_step` and `flow_until`; returns the
/// stepped mesh, the accepted step size, and the new energy.
fn step_from<T: Real>(
    mesh: &TriMesh<T>,
    energy: T,
    grad: &[Vector3<T>],
    first_try: T,
    config: &FlowConfig<T>,
) -> Result<(TriMesh<T>, T, T), FlowError> {
    let g2 = field_norm(grad);
    let g2 = g2 * g2;
    let mut t = first_try;
    let floor = real::<T>(1e-14);
    while t >= floor && t.is_finite() {
        let positions: Vec<Vector3<T>> = mesh
            .positions()
            .iter()
            .zip(grad)
            .map(|(p, g)| p - g * t)
            .collect();
        let candidate = mesh.with_positions(positions);
        match willmore_energy(&candidate) {
            Ok(e) if e.total <= energy - config.armijo_constant * t * g2 => {
                return Ok((candidate, t, e.total));
            }
            _ => t *= config.step_shrink,
        }
    }
    Err(FlowError::LineSearchFailure)
}

/// Runs gradient descent until the gradient tolerance, the step budget, or a
/// line-search plateau, recording frames and energies. Every accepted step is
/// followed by pose normalization (and symmetrization when constrained);
/// `improve` runs every `improve_every` steps.
pub fn flow_until<T: Real>(mesh: &TriMesh<T>, config: &FlowConfig<T>) -> Result<FlowTrace<T>, FlowError> {
    flow_with(mesh, config, None)
}

/// [`flow_until`] with an optional symmetry constraint.
pub fn flow_with<T: Real>(
    mesh: &TriMesh<T>,
    config: &FlowConfig<T>,
    constraint: Option<&SymmetryConstraint<'_, T>>,
) -> Result<FlowTrace<T>, FlowError> {
    let mut current = normalize_pose(mesh);
    if let Some(c) = constraint {
        current = symmetrize(&current, c.group, c.orbits)?;
    }
    let mut energy = willmore_energy(&current)?.total;

    let mut energies = vec![energy];
    let mut events = Vec::new();
    let mut raw_frames: Vec<(TriMesh<T>, T)> = vec![(current.clone(), T::zero())];
    let mut arc_length = T::zero();
    let mut try_step = config.initial_step;
    let try_step_cap = config.initial_step * real::<T>(1e8);
    let mut terminated_by: Option<Termination> = None;
    let mut grad = willmore_gradient(&current)?;
    let mut gnorm = gradient_norm(&grad);

    // A constrained flow must keep the vertex numbering that the orbit map
    // indexes, so improvement is limited to tangential smoothing there: no
    // flips, no degenerate-edge collapses.
    let improve_config = ImproveConfig {
        enable_flips: config.flips_in_improve && constraint.is_none(),
        repair_degenerate: constraint.is_none(),
        ..ImproveConfig::default()
    };

    let mut step = 0usize;
    while step < config.max_steps && terminated_by.is_none() {
        if gnorm <= config.gradient_tolerance {
            terminated_by = Some(Termination::Converged);
            break;
        }
        if let Some(target) = config.target_energy {
            if energy <= target + config.target_energy_window {
                terminated_by = Some(Termination::Converged);
                break;
            }
        }

        let stepped = match step_from(&current, energy, &grad, try_step, config) {
            Ok(x) => x,
            Err(FlowError::LineSearchFailure) => {
                // A discrete plateau close to convergence counts as converged.
                terminated_by = Some(if gnorm < config.gradient_tolerance * real::<T>(10.0) {
                    Termination::Converged
                } else {
                    Termination::LineSearchFailure
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let (mut next, accepted_t, _) = stepped;
        step += 1;
        // Warm start: one notch more ambitious than what just worked.
        try_step = (accepted_t / config.step_shrink).min(try_step_cap);

        if config.improve_every > 0 && step % config.improve_every == 0 {
            let (improved, rep) = improve(&next, &improve_config);
            if rep.flips > 0 || rep.collapses > 0 {
                events.push(SurgeryEvent {
                    step,
                    flips: rep.flips,
                    collapses: rep.collapses,
                });
            }
            next = improved;
        }

        next = normalize_pose(&next);
        if let Some(c) = constraint {
            let deviation = symmetry_deviation(&next, c.group, c.orbits)?;
            if deviation.as_f64() > 1e-8 {
                return Err(FlowError::SymmetryLost(deviation.as_f64()));
            }
            next = symmetrize(&next, c.group, c.orbits)?;
        }

        let new_energy = willmore_energy(&next)?.total;
        if new_energy > energy {
            // The post-step pipeline (normalize/symmetrize jitter) pushed the
            // energy up: we are at the numerical floor. Keep the previous
            // mesh so the recorded energies stay monotone.
            terminated_by = Some(Termination::Converged);
            break;
        }

        if next.vertex_count() == current.vertex_count() {
            let displacement: T = field_norm(
                &next
                    .positions()
                    .iter()
                    .zip(current.positions())
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            arc_length += displacement;
        } else {
            arc_length += accepted_t * gnorm; // surgery changed the vertex set
        }

        current = next;
        energy = new_energy;
        energies.push(energy);
        grad = willmore_gradient(&current)?;
        gnorm = gradient_norm(&grad);

        if config.frame_every > 0 && step % config.frame_every == 0 {
            raw_frames.push((current.clone(), arc_length));
        }
    }
    let terminated_by = terminated_by.unwrap_or(Termination::MaxSteps);

    // Always include the final state as a frame.
    if raw_frames
        .last()
        .map(|(_, t)| *t != arc_length || raw_frames.len() == 1)
        .unwrap_or(true)
    {
        raw_frames.push((current.clone(), arc_length));
    }

    // Normalize times to [0, 1] by arc length.
    let total = arc_length;
    let frames = raw_frames
        .into_iter()
        .map(|(m, t)| {
            let time = if total > T::zero() { t / total } else { T::zero() };
            (m, time)
        })
        .collect();

    Ok(FlowTrace {
        frames,
        energies,
        events,
        terminated_by,
        final_gradient_norm: gnorm,
    })
}

/// Moves the area-weighted centroid to the origin and rescales the total
/// area to `4 pi` (the energy is blind to both, so this pins the gauge).
pub fn normalize_pose<T: Real>(mesh: &TriMesh<T>) -> TriMesh<T> {
    let metrics = mesh.metrics();
    let centroid = mesh.area_centroid();
    let scale = (real::<T>(4.0) * T::pi() / metrics.total_area).sqrt();
    let positions: Vec<Vector3<T>> = mesh
        .positions()
        .iter()
        .map(|p| (p - centroid) * scale)
        .collect();
    mesh.with_positions(positions)
}

/// Displaces an approximately critical mesh along `sign` times the lowest
/// Hessian eigenvector by `magnitude` (in model length units). Fails if the
/// mesh is not a saddle (lowest constrained eigenvalue non-negative) or if
/// the displacement fails to lower the energy.
pub fn saddle_pushoff<T: Real>(
    mesh: &TriMesh<T>,
    magnitude: T,
    sign: i8,
    eigen: &EigenConfig<T>,
) -> Result<TriMesh<T>, PushoffError> {
    let (lambda, vector) = lowest_eigenpair(mesh, eigen)?;
    if lambda >= T::zero() {
        return Err(PushoffError::NotASaddle(lambda.as_f64()));
    }
    pushoff_along(mesh, &vector, magnitude, sign)
}

/// Displaces along a precomputed (already projected/filtered) unit direction;
/// the energy must strictly decrease.
pub fn pushoff_along<T: Real>(
    mesh: &TriMesh<T>,
    direction: &[Vector3<T>],
    magnitude: T,
    sign: i8,
) -> Result<TriMesh<T>, PushoffError> {
    let before = willmore_energy(mesh)?.total;
    let s = if sign >= 0 { magnitude } else { -magnitude };
    let positions: Vec<Vector3<T>> = mesh
        .positions()
        .iter()
        .zip(direction)
        .map(|(p, d)| p + d * s)
        .collect();
    let pushed = mesh.with_positions(positions);
    let after = willmore_energy(&pushed)?.total;
    if after >= before {
        return Err(PushoffError::EnergyIncreased {
            from: before.as_f64(),
            to: after.as_f64(),
        });
    }
    Ok(pushed)
}
