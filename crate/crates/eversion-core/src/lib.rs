//! Energy-driven sphere eversion.
//!
//! This crate turns a sphere inside out the minimax way: it relaxes a
//! symmetric halfway model to a critical point of the discrete Willmore
//! bending energy, finds the downhill direction through the saddle by
//! Hessian eigenanalysis, flows to the round sphere, and assembles the full
//! eversion from that half-flow by time reversal composed with the model's
//! side-exchanging symmetry. A self-intersection analyzer audits the
//! homotopy's double curves, triple/quadruple points, and topological events.
//!
//! Module map:
//! - [`mesh`] — half-edge triangle meshes: validation, generation,
//!   refinement, quality maintenance, metrics, ASCII I/O.
//! - [`willmore`] — the bending energy and its exact gradient.
//! - [`hessian`] — matrix-free Hessian products and the lowest constrained
//!   eigenpair (saddle detection).
//! - [`optimize`] — Armijo gradient descent, flow orchestration, saddle
//!   pushoff, pose normalization.
//! - [`symmetry`] — cyclic symmetry groups, orbit maps, symmetrization.
//! - [`halfway`] — halfway models: Boy double cover, Morin-type seed,
//!   Möbius compactification, symmetric relaxation.
//! - [`intersect`] — self-intersection reports (double curves, triple and
//!   quadruple points) and event classification along a homotopy.
//! - [`pipeline`] — end-to-end eversion assembly, analysis, and exports.
//!
//! All geometry is generic over the scalar type via [`real::Real`]; the
//! aliases below fix the two shipped instantiations.

pub mod halfway;
pub mod hessian;
pub mod intersect;
pub mod mesh;
pub mod optimize;
pub mod pipeline;
pub mod real;
pub mod symmetry;
pub mod willmore;

pub use real::Real;

/// Double-precision mesh (the pipeline's working type).
pub type TriMesh64 = mesh::TriMesh<f64>;
/// Single-precision mesh (export/interchange).
pub type TriMesh32 = mesh::TriMesh<f32>;
