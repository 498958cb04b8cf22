//! End-to-end eversion assembly and the analysis/export plumbing behind the
//! command-line driver.
//!
//! The construction follows the minimax recipe: relax a symmetric halfway
//! model to a critical point of the bending energy, push off the saddle
//! along a certified descent mode, and flow downhill to the round sphere.
//! That *half-flow* determines everything: the first half of the eversion is
//! the half-flow reversed in time (round sphere up over the saddle), and the
//! second half is the half-flow replayed forward through the model's
//! side-exchanging symmetry — the quarter-turn twist. Because the twist's
//! vertex permutation reverses mesh orientation, the final round sphere
//! comes out with the opposite signed volume: inside out.
//!
//! The assembled homotopy carries its own audit: per-frame self-intersection
//! reports, the event timeline between frames, a Li–Yau lower-bound table,
//! and a provenance block (config hash, seed, halfway energy, saddle data)
//! that exports verbatim so a run can be reproduced or re-analyzed from its
//! files alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::halfway::{
    boy_double_cover, morin_initial, relax_halfway, HalfwayError, HalfwayKind, HalfwayModel,
};
use crate::hessian::{energy_curvature, restricted_matrix, EigenError};
use crate::intersect::events::{
    classify_from_reports, EventConfig, EventRecord,
};
use crate::intersect::{IntersectError, SelfIntersectionReport};
use crate::mesh::{read_mesh, write_mesh_string, MeshError, ParseError, TriMesh, MESH_EXTENSION};
use crate::optimize::{
    flow_with, pushoff_along, FlowConfig, FlowError, PushoffError, SymmetryConstraint,
    Termination,
};
use crate::real::{real, Real};
use crate::symmetry::{
    apply_automorphism, sign_channel_basis, OrbitMap, SymmetryError,
};
use crate::willmore::willmore_energy;
use nalgebra::Vector3;
use sha2::{Digest, Sha256};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything a full eversion run depends on. The canonical text form (see
/// [`EversionConfig::to_config_string`]) doubles as the config-file format
/// and as the input of the provenance hash, so identical settings hash
/// identically across machines.
#[derive(Clone, Debug)]
pub struct EversionConfig<T: Real> {
    /// Which halfway model anchors the eversion.
    pub kind: HalfwayKind,
    /// Grid resolution passed to the model builder.
    pub resolution: usize,
    /// Flow settings for the symmetric relaxation to the saddle.
    pub relaxation: FlowConfig<T>,
    /// Flow settings for the downhill run to the round sphere.
    pub descent: FlowConfig<T>,
    /// Displacement along the certified descent mode, in model length units.
    pub pushoff_magnitude: T,
    /// Target number of retained frames (at least 16); continuity may force
    /// a few extras so that consecutive frames stay within the event
    /// classifier's displacement gate.
    pub frame_budget: usize,
    /// Where exports land.
    pub output_dir: PathBuf,
    /// Tie-break seed for a degenerate saddle eigenspace; everything else is
    /// deterministic.
    pub seed: u64,
}

impl<T: Real> EversionConfig<T> {
    /// Defaults sized for the two-fold eversion: a few thousand triangles,
    /// a relaxation that parks well inside the saddle's energy window, and a
    /// descent tuned to stop on the round sphere.
    pub fn morin_default() -> Self {
        EversionConfig {
            kind: HalfwayKind::Morin2Fold,
            resolution: 40,
            relaxation: FlowConfig {
                max_steps: 8000,
                gradient_tolerance: real(3e-4),
                improve_every: 20,
                frame_every: 0,
                ..FlowConfig::default()
            },
            descent: FlowConfig {
                max_steps: 40_000,
                gradient_tolerance: real(1e-5),
                improve_every: 10,
                frame_every: 10,
                target_energy: Some(real(1.0)),
                target_energy_window: real(2e-2),
                ..FlowConfig::default()
            },
            pushoff_magnitude: real(2e-2),
            frame_budget: 96,
            output_dir: PathBuf::from("eversion-out"),
            seed: 0,
        }
    }

    /// Defaults for the three-fold eversion through the Boy double cover.
    pub fn boy_default() -> Self {
        EversionConfig {
            kind: HalfwayKind::Boy3Fold,
            ..Self::morin_default()
        }
    }

    /// Checks the invariants the pipeline relies on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.frame_budget < 16 {
            return Err(ConfigError::new(format!(
                "frame_budget must be at least 16, got {}",
                self.frame_budget
            )));
        }
        if !(self.pushoff_magnitude > T::zero()) {
            return Err(ConfigError::new("pushoff_magnitude must be positive"));
        }
        for (name, flow) in [("relaxation", &self.relaxation), ("descent", &self.descent)] {
            if flow.max_steps == 0 {
                return Err(ConfigError::new(format!("{name}.max_steps must be positive")));
            }
            if !(flow.gradient_tolerance > T::zero()) {
                return Err(ConfigError::new(format!(
                    "{name}.gradient_tolerance must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` serialization: one line per key, sorted, with
    /// floats in shortest round-trip form. Parsing this text reproduces the
    /// config exactly, and its hash is the provenance config hash (the
    /// output directory is excluded — it does not influence the numbers).
    pub fn to_config_string(&self) -> String {
        let mut map = self.key_values();
        map.insert("output_dir".into(), self.output_dir.display().to_string());
        let mut out = String::new();
        for (k, v) in &map {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// Hash of the computation-relevant keys (everything but `output_dir`).
    pub fn config_hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in &self.key_values() {
            writeln!(text, "{k} = {v}").unwrap();
        }
        sha256_hex(text.as_bytes())
    }

    fn key_values(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert(
            "kind".to_string(),
            match self.kind {
                HalfwayKind::Morin2Fold => "morin2fold".to_string(),
                HalfwayKind::Boy3Fold => "boy3fold".to_string(),
            },
        );
        map.insert("resolution".into(), self.resolution.to_string());
        map.insert("pushoff_magnitude".into(), self.pushoff_magnitude.to_string());
        map.insert("frame_budget".into(), self.frame_budget.to_string());
        map.insert("seed".into(), self.seed.to_string());
        for (prefix, flow) in [("relax", &self.relaxation), ("descent", &self.descent)] {
            map.insert(format!("{prefix}.max_steps"), flow.max_steps.to_string());
            map.insert(
                format!("{prefix}.gradient_tolerance"),
                flow.gradient_tolerance.to_string(),
            );
            map.insert(
                format!("{prefix}.armijo_constant"),
                flow.armijo_constant.to_string(),
            );
            map.insert(format!("{prefix}.step_shrink"), flow.step_shrink.to_string());
            map.insert(format!("{prefix}.initial_step"), flow.initial_step.to_string());
            map.insert(
                format!("{prefix}.improve_every"),
                flow.improve_every.to_string(),
            );
            map.insert(format!("{prefix}.frame_every"), flow.frame_every.to_string());
            map.insert(
                format!("{prefix}.target_energy"),
                flow.target_energy
                    .map(|t| t.to_string())
                    .unwrap_or_else(|| "none".into()),
            );
            map.insert(
                format!("{prefix}.target_energy_window"),
                flow.target_energy_window.to_string(),
            );
        }
        map
    }

    /// Applies one `key = value` assignment (config-file line or CLI flag).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| {
            ConfigError::new(format!("key `{key}`: cannot parse `{value}` as {what}"))
        };
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| bad("an integer"));
        let parse_real = |v: &str| {
            v.parse::<f64>()
                .map(real::<T>)
                .map_err(|_| bad("a number"))
        };
        match key {
            "kind" => {
                self.kind = match value.to_ascii_lowercase().as_str() {
                    "morin2fold" | "morin" => HalfwayKind::Morin2Fold,
                    "boy3fold" | "boy" => HalfwayKind::Boy3Fold,
                    _ => {
                        return Err(ConfigError::new(format!(
                            "key `kind`: expected morin2fold or boy3fold, got `{value}`"
                        )))
                    }
                }
            }
            "resolution" => self.resolution = parse_usize(value)?,
            "pushoff_magnitude" => self.pushoff_magnitude = parse_real(value)?,
            "frame_budget" => self.frame_budget = parse_usize(value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| bad("an unsigned integer"))?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => {
                let (prefix, rest) = key
                    .split_once('.')
                    .ok_or_else(|| ConfigError::new(format!("unknown key `{key}`")))?;
                let flow = match prefix {
                    "relax" => &mut self.relaxation,
                    "descent" => &mut self.descent,
                    _ => return Err(ConfigError::new(format!("unknown key `{key}`"))),
                };
                match rest {
                    "max_steps" => flow.max_steps = parse_usize(value)?,
                    "gradient_tolerance" => flow.gradient_tolerance = parse_real(value)?,
                    "armijo_constant" => flow.armijo_constant = parse_real(value)?,
                    "step_shrink" => flow.step_shrink = parse_real(value)?,
                    "initial_step" => flow.initial_step = parse_real(value)?,
                    "improve_every" => flow.improve_every = parse_usize(value)?,
                    "frame_every" => flow.frame_every = parse_usize(value)?,
                    "target_energy" => {
                        flow.target_energy = if value.eq_ignore_ascii_case("none") {
                            None
                        } else {
                            Some(parse_real(value)?)
                        }
                    }
                    "target_energy_window" => flow.target_energy_window = parse_real(value)?,
                    _ => return Err(ConfigError::new(format!("unknown key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    /// Applies a whole config file (`key = value` lines, `#` comments).
    /// Unknown keys are errors — a typo must not silently fall back to a
    /// default.
    pub fn apply_config_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(format!("line {}: expected `key = value`", ln + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| ConfigError::new(format!("line {}: {}", ln + 1, e.0)))?;
        }
        Ok(())
    }
}

/// A rejected configuration (bad key, bad value, broken invariant).
#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(String);

impl ConfigError {
    fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

// ---------------------------------------------------------------------------
// Errors and diagnostics
// ---------------------------------------------------------------------------

/// What a halted pipeline leaves behind: the stage name, the last mesh that
/// was still good, and the energy trace up to the failure. The CLI writes
/// these next to the partial outputs so a failed run can be inspected.
#[derive(Debug, Clone)]
pub struct DiagnosticBundle<T: Real> {
    pub stage: &'static str,
    pub last_mesh: TriMesh<T>,
    pub energies: Vec<T>,
}

impl<T: Real> DiagnosticBundle<T> {
    /// Writes `last_good.obj` and `energy_trace.csv` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), std::io::Error> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("last_good.obj"),
            write_mesh_string(&self.last_mesh),
        )?;
        let mut csv = String::from("step,energy\n");
        for (i, e) in self.energies.iter().enumerate() {
            writeln!(csv, "{i},{e}").unwrap();
        }
        std::fs::write(dir.join("energy_trace.csv"), csv)
    }
}

/// The failure that halted a stage; wraps the propagated error kinds.
#[derive(Debug, thiserror::Error)]
pub enum StageFailure {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Pushoff(#[from] PushoffError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Halfway(#[from] HalfwayError),
    #[error(transparent)]
    Intersect(#[from] IntersectError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("invariant broken: {0}")]
    Invariant(String),
}

/// Pipeline errors: configuration rejections, staged numerical failures
/// carrying a diagnostic bundle, and I/O failures from exports and imports.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError<T: Real> {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` halted: {failure}")]
    Halted {
        stage: &'static str,
        failure: StageFailure,
        bundle: Box<DiagnosticBundle<T>>,
    },
    #[error("parse: {0}")]
    Parse(#[from] ParseError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl<T: Real> PipelineError<T> {
    /// The diagnostic bundle, when the error is a halted stage.
    pub fn bundle(&self) -> Option<&DiagnosticBundle<T>> {
        match self {
            PipelineError::Halted { bundle, .. } => Some(bundle),
            _ => None,
        }
    }
}

fn halt<T: Real>(
    stage: &'static str,
    failure: impl Into<StageFailure>,
    last_mesh: &TriMesh<T>,
    energies: &[T],
) -> PipelineError<T> {
    PipelineError::Halted {
        stage,
        failure: failure.into(),
        bundle: Box::new(DiagnosticBundle {
            stage,
            last_mesh: last_mesh.clone(),
            energies: energies.to_vec(),
        }),
    }
}

// ---------------------------------------------------------------------------
// The homotopy
// ---------------------------------------------------------------------------

/// One stop of the eversion.
#[derive(Clone, Debug)]
pub struct Frame<T: Real> {
    /// Position in the eversion, 0 = round sphere, 1 = inside-out round
    /// sphere, ½ = the halfway model exactly.
    pub time: T,
    pub mesh: TriMesh<T>,
}

/// Per-frame lower-bound audit: a surface with a point of multiplicity `k`
/// needs bending energy at least `k`, so `energy + slack >= k` must hold
/// (the slack absorbs discretization error).
#[derive(Clone, Copy, Debug)]
pub struct LiYauRow<T: Real> {
    pub frame: usize,
    pub max_multiplicity: usize,
    pub energy: T,
    pub pass: bool,
}

/// Reproducibility block attached to a homotopy and exported verbatim.
#[derive(Clone, Debug)]
pub struct Provenance<T: Real> {
    pub config_hash: String,
    pub seed: u64,
    pub halfway_energy: T,
    /// Channel eigenvalue of the chosen descent mode.
    pub saddle_eigenvalue: T,
    /// Exact-energy curvature certificate along that mode (negative).
    pub saddle_curvature: T,
    /// Number of classified events (recorded so re-analysis can be checked
    /// against the original run).
    pub event_count: usize,
    /// Frames retained beyond the budget to keep consecutive frames within
    /// the event classifier's displacement gate.
    pub forced_extra_frames: usize,
}

/// A complete eversion: time-ordered frames with their energies, the event
/// timeline, per-frame intersection reports and Li–Yau audit, and the
/// provenance block.
#[derive(Clone, Debug)]
pub struct Homotopy<T: Real> {
    pub frames: Vec<Frame<T>>,
    /// Bending energy per frame (same indexing as `frames`).
    pub energies: Vec<T>,
    pub events: Vec<EventRecord<T>>,
    /// Self-intersection report per frame.
    pub reports: Vec<SelfIntersectionReport<T>>,
    pub li_yau: Vec<LiYauRow<T>>,
    pub provenance: Provenance<T>,
}

impl<T: Real> Homotopy<T> {
    /// Index of the frame at time ½ (the halfway model).
    pub fn apex(&self) -> usize {
        let half = real::<T>(0.5);
        let mut best = 0;
        for (i, f) in self.frames.iter().enumerate() {
            if (f.time - half).abs() < (self.frames[best].time - half).abs() {
                best = i;
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Saddle escape
// ---------------------------------------------------------------------------

/// A certified descent mode out of the saddle: the channel eigenvalue, the
/// exact-energy curvature along the mode at pushoff scale, and the unit
/// direction field itself.
pub struct DescentMode<T: Real> {
    pub eigenvalue: T,
    pub curvature: T,
    pub direction: Vec<Vector3<T>>,
}

/// Finds the downhill direction out of a relaxed halfway model.
///
/// The escape mode flips sign under the side-exchanging generator (the
/// symmetry reverses the eversion's time direction), so the search space is
/// that sign channel, where the Hessian is assembled on an explicit orbit
/// basis and diagonalized densely. The bottom of the spectrum can contain
/// *spike modes* — near-degenerate vertex stars whose energy dips only over
/// sub-resolution displacements before the quartic term takes over — so raw
/// eigenvalue order is not trusted: candidates are scanned from the bottom
/// up and the first whose exact-energy curvature at the probe step is
/// negative wins. That curvature is a Rayleigh quotient, hence a rigorous
/// upper bound on the lowest eigenvalue over physically meaningful
/// displacements: a negative value *certifies* the saddle.
///
/// `probe_step` is the curvature probe displacement as a multiple of the
/// mean edge length; use a value comparable to the intended pushoff. `seed`
/// only breaks ties when the bottom of the spectrum is degenerate.
pub fn descent_mode<T: Real>(
    model: &HalfwayModel<T>,
    probe_step: T,
    scan: usize,
    seed: u64,
) -> Result<DescentMode<T>, StageFailure> {
    use rand::{Rng, SeedableRng};

    let elements = model.orbits.orbit_elements();
    let basis = sign_channel_basis(&model.group, &elements);
    let reduced = restricted_matrix(&model.mesh, &basis)?;
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let reconstruct = |coeffs: &[T]| -> Vec<Vector3<T>> {
        let mut field = vec![Vector3::zeros(); model.mesh.vertex_count()];
        for (j, entries) in basis.iter().enumerate() {
            for &(v, u) in entries {
                field[v] += u * coeffs[j];
            }
        }
        field
    };

    let mut best_positive: Option<(T, T)> = None;
    for (rank, &k) in order.iter().take(scan.max(1)).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda >= T::zero() {
            break; // the rest of the spectrum only goes up
        }
        let mut coeffs: Vec<T> = eig.eigenvectors.column(k).iter().copied().collect();
        // Degenerate eigenspaces leave the eigenvector basis arbitrary; mix
        // the pair with a seeded angle so the choice is reproducible rather
        // than accidental.
        if let Some(&next) = order.get(rank + 1) {
            let spread = eig.eigenvalues[order[order.len() - 1]]
                - eig.eigenvalues[order[0]];
            if (eig.eigenvalues[next] - lambda).abs() <= spread * real(1e-12) {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let angle: T = real(rng.gen_range(0.0..std::f64::consts::TAU));
                let (sin, cos) = (angle.sin(), angle.cos());
                let other = eig.eigenvectors.column(next);
                for (c, o) in coeffs.iter_mut().zip(other.iter()) {
                    *c = *c * cos + *o * sin;
                }
            }
        }
        let direction = reconstruct(&coeffs);
        let curvature = energy_curvature(&model.mesh, &direction, probe_step)
            .map_err(StageFailure::Mesh)?;
        if curvature < T::zero() {
            return Ok(DescentMode {
                eigenvalue: lambda,
                curvature,
                direction,
            });
        }
        if best_positive.map(|(c, _)| curvature < c).unwrap_or(true) {
            best_positive = Some((curvature, lambda));
        }
    }
    match best_positive {
        Some((c, l)) => Err(StageFailure::Invariant(format!(
            "not a saddle at pushoff scale: no scanned channel mode has \
             negative curvature (best {:.3e} at eigenvalue {:.3e})",
            c.as_f64(),
            l.as_f64()
        ))),
        None => Err(StageFailure::Pushoff(PushoffError::NotASaddle(
            eig.eigenvalues[order[0]].as_f64(),
        ))),
    }
}

// ---------------------------------------------------------------------------
// run_eversion
// ---------------------------------------------------------------------------

/// Builds the full eversion. Stages: (1) build and relax the halfway model;
/// (2) find the certified descent mode and push off with sign +1; (3) flow
/// downhill to the round sphere under the preserved rotational subgroup;
/// (4) assemble both halves by time reversal and the side-exchanging twist;
/// (5) reparameterize to [0, 1]; (6) classify events and audit Li–Yau
/// bounds over the retained frames. Any stage failure halts the pipeline
/// with a [`DiagnosticBundle`].
pub fn run_eversion<T: Real>(config: &EversionConfig<T>) -> Result<Homotopy<T>, PipelineError<T>> {
    config.validate()?;

    // Stage 1: build and relax.
    let initial: HalfwayModel<T> = match config.kind {
        HalfwayKind::Morin2Fold => morin_initial(config.resolution),
        HalfwayKind::Boy3Fold => boy_double_cover(config.resolution),
    }
    .map_err(|e| {
        PipelineError::Config(ConfigError::new(format!("cannot build halfway model: {e}")))
    })?;
    let seed_energy = initial.energy;
    let model = relax_halfway(&initial, &config.relaxation)
        .map_err(|e| halt("relax", e, &initial.mesh, &[seed_energy]))?;

    // Stage 2: certified saddle escape, sign +1.
    let probe_step = config.pushoff_magnitude / model.mesh.metrics().mean_edge_length;
    let mode = descent_mode(&model, probe_step, 12, config.seed)
        .map_err(|e| halt("pushoff", e, &model.mesh, &[model.energy]))?;
    let pushed = pushoff_along(&model.mesh, &mode.direction, config.pushoff_magnitude, 1)
        .map_err(|e| halt("pushoff", e, &model.mesh, &[model.energy]))?;

    // Stage 3: downhill under the preserved subgroup (the square of the
    // side-exchanging generator; the pushoff direction is exactly invariant
    // under it, so the flow keeps it to machine precision).
    let sub_group = model.group.subgroup(2);
    let sigma = model.orbits.permutation();
    let sigma_sq: Vec<usize> = sigma.iter().map(|&s| sigma[s]).collect();
    let sub_orbits = OrbitMap::from_permutation(&sigma_sq, sub_group.order)
        .map_err(|e| halt("descend", e, &pushed, &[model.energy]))?;
    let constraint = SymmetryConstraint {
        group: &sub_group,
        orbits: &sub_orbits,
    };
    let trace = flow_with(&pushed, &config.descent, Some(&constraint))
        .map_err(|e| halt("descend", e, &pushed, &[model.energy]))?;
    if trace.terminated_by != Termination::Converged {
        return Err(halt(
            "descend",
            StageFailure::Invariant(format!(
                "downhill flow stopped by {:?} at energy {} (gradient norm {:e}) \
                 before reaching the round sphere",
                trace.terminated_by,
                trace.final_energy(),
                trace.final_gradient_norm.as_f64(),
            )),
            trace.final_mesh(),
            &trace.energies,
        ));
    }
    let round_energy = trace.final_energy();
    if round_energy > real(1.05) {
        return Err(halt(
            "descend",
            StageFailure::Invariant(format!(
                "flow converged at energy {round_energy}, not a round sphere"
            )),
            trace.final_mesh(),
            &trace.energies,
        ));
    }

    // Stage 4/5: retain frames and assemble both halves.
    let (half, forced_extra_frames) = retain_half_frames(
        &model.mesh,
        &trace.frames,
        config.frame_budget,
    );
    let (frames, energies) = assemble_homotopy(&model, &half)
        .map_err(|e| halt("assemble", e, &model.mesh, &trace.energies))?;

    // Stage 6: analysis. Reports parallelize across frames; classification
    // and the audit are cheap serial passes over the results.
    let event_config = EventConfig::default();
    let meshes: Vec<&TriMesh<T>> = frames.iter().map(|f| &f.mesh).collect();
    let reports = parallel_reports(&meshes, &event_config)
        .map_err(|e| halt("analyze", e, &model.mesh, &energies))?;
    let owned: Vec<TriMesh<T>> = frames.iter().map(|f| f.mesh.clone()).collect();
    let events = classify_from_reports(&owned, &reports, &event_config)
        .map_err(|e| halt("analyze", e, &model.mesh, &energies))?;
    let li_yau = li_yau_table(&reports, &energies);

    let homotopy = Homotopy {
        provenance: Provenance {
            config_hash: config.config_hash(),
            seed: config.seed,
            halfway_energy: model.energy,
            saddle_eigenvalue: mode.eigenvalue,
            saddle_curvature: mode.curvature,
            event_count: events.len(),
            forced_extra_frames,
        },
        frames,
        energies,
        events,
        reports,
        li_yau,
    };
    check_homotopy_invariants(&homotopy)
        .map_err(|e| halt("assemble", e, &homotopy.frames[homotopy.apex()].mesh, &homotopy.energies))?;
    Ok(homotopy)
}

/// Selects which half-flow frames to keep: equal arc-length spacing within
/// the budget's half, then midpoint insertions wherever consecutive retained
/// frames would trip the event classifier's displacement gate. Returns the
/// retained frames (halfway side first) and how many insertions were forced.
fn retain_half_frames<T: Real>(
    halfway: &TriMesh<T>,
    flow_frames: &[(TriMesh<T>, T)],
    frame_budget: usize,
) -> (Vec<TriMesh<T>>, usize) {
    let half_budget = ((frame_budget.max(16) - 1) / 2).max(4);
    let n = flow_frames.len();
    let mut picked: Vec<usize> = Vec::with_capacity(half_budget + 1);
    // Equal arc-length targets against the flow's own [0, 1] arc parameter.
    let mut k = 0usize;
    for i in 0..half_budget {
        let target = real::<T>(i as f64 / (half_budget - 1) as f64);
        while k + 1 < n
            && (flow_frames[k + 1].1 - target).abs() <= (flow_frames[k].1 - target).abs()
        {
            k += 1;
        }
        if picked.last() != Some(&k) {
            picked.push(k);
        }
    }
    if picked.last() != Some(&(n - 1)) {
        picked.push(n - 1);
    }

    // Continuity: the classifier needs consecutive frames within a small
    // multiple of the mesh resolution; split any retained interval that
    // exceeds a conservative fraction of that gate, while raw frames exist
    // in between.
    let edge = halfway.metrics().mean_edge_length;
    let gate = real::<T>(0.9) * EventConfig::<T>::default().max_displacement_factor * edge;
    let mut forced = 0usize;
    let mut i = 0;
    while i + 1 < picked.len() {
        let (a, b) = (picked[i], picked[i + 1]);
        if b > a + 1 && max_vertex_displacement(&flow_frames[a].0, &flow_frames[b].0) > gate {
            picked.insert(i + 1, (a + b) / 2);
            forced += 1;
        } else {
            i += 1;
        }
    }
    // The link to the exact halfway frame obeys the gate automatically: the
    // first flow frame sits one pushoff away from it.
    let retained = picked
        .iter()
        .map(|&i| flow_frames[i].0.clone())
        .collect();
    (retained, forced)
}

fn max_vertex_displacement<T: Real>(a: &TriMesh<T>, b: &TriMesh<T>) -> T {
    let mut worst = T::zero();
    for (p, q) in a.positions().iter().zip(b.positions()) {
        worst = worst.max((q - p).norm());
    }
    worst
}

/// Mirrors the retained half-flow into the full homotopy:
/// `reverse(half) ++ [halfway model] ++ twist(half)`, timed so the frame at
/// eversion time `t` and the frame at `1 − t` are exact mirror images under
/// the side-exchanging twist.
fn assemble_homotopy<T: Real>(
    model: &HalfwayModel<T>,
    half: &[TriMesh<T>],
) -> Result<(Vec<Frame<T>>, Vec<T>), StageFailure> {
    let sigma = model.orbits.permutation();
    let twist = model.group.generator();

    // Arc length of the half (pushed -> round), plus the closing link to
    // the exact halfway frame.
    let mut cum: Vec<T> = Vec::with_capacity(half.len() + 1);
    let link = field_displacement(model.mesh.positions(), half[0].positions());
    cum.push(link);
    for w in half.windows(2) {
        let d = field_displacement(w[0].positions(), w[1].positions());
        cum.push(cum.last().copied().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    if !(total > T::zero()) {
        return Err(StageFailure::Invariant(
            "half-flow has zero arc length".into(),
        ));
    }

    let mut frames: Vec<Frame<T>> = Vec::with_capacity(2 * half.len() + 1);
    let half_t = real::<T>(0.5);
    // First half: round sphere at t = 0 back to the saddle at t = ½.
    for (i, mesh) in half.iter().enumerate().rev() {
        let time = half_t * (T::one() - cum[i] / total);
        frames.push(Frame {
            time,
            mesh: mesh.clone(),
        });
    }
    frames.push(Frame {
        time: half_t,
        mesh: model.mesh.clone(),
    });
    // Second half: the twist replays the half-flow forward in time. The
    // permutation is orientation-reversing, so these frames carry the
    // opposite signed volume — the sphere comes back inside out.
    for (i, mesh) in half.iter().enumerate() {
        let time = T::one() - (half_t * (T::one() - cum[i] / total));
        frames.push(Frame {
            time,
            mesh: apply_automorphism(mesh, &sigma, twist),
        });
    }

    let energies = frames
        .iter()
        .map(|f| willmore_energy(&f.mesh).map(|e| e.total))
        .collect::<Result<Vec<T>, _>>()?;
    Ok((frames, energies))
}

fn field_displacement<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> T {
    let mut acc = T::zero();
    for (p, q) in a.iter().zip(b) {
        acc += (q - p).norm_squared();
    }
    acc.sqrt()
}

/// The structural invariants every finished homotopy satisfies; violations
/// are pipeline bugs, not user errors, but they halt the run all the same so
/// bad artifacts never ship.
fn check_homotopy_invariants<T: Real>(h: &Homotopy<T>) -> Result<(), StageFailure> {
    let broken = |msg: String| Err(StageFailure::Invariant(msg));
    let n = h.frames.len();
    if n < 3 {
        return broken(format!("only {n} frames assembled"));
    }
    let e0 = h.energies[0];
    let e1 = h.energies[n - 1];
    if e0 > real(1.05) || e1 > real(1.05) {
        return broken(format!("endpoint energies {e0} / {e1} are not round"));
    }
    let v0 = h.frames[0].mesh.metrics().signed_volume;
    let v1 = h.frames[n - 1].mesh.metrics().signed_volume;
    if v0 * v1 >= T::zero() {
        return broken(format!("endpoint signed volumes {v0} / {v1} do not flip"));
    }
    for w in h.frames.windows(2) {
        if !(w[1].time > w[0].time) {
            return broken("frame times are not strictly increasing".into());
        }
    }
    // Unimodal energy: rises (weakly) to the apex, then falls (weakly),
    // with a tolerance for the roundoff of re-evaluating rotated copies.
    let apex = h.apex();
    let tol = real::<T>(1e-9);
    for i in 0..n - 1 {
        let (a, b) = (h.energies[i], h.energies[i + 1]);
        if i < apex && b < a - tol {
            return broken(format!(
                "energy dips on the way up: frame {i} {a} -> {b}"
            ));
        }
        if i >= apex && b > a + tol {
            return broken(format!(
                "energy rises on the way down: frame {i} {a} -> {b}"
            ));
        }
    }
    Ok(())
}

fn li_yau_table<T: Real>(
    reports: &[SelfIntersectionReport<T>],
    energies: &[T],
) -> Vec<LiYauRow<T>> {
    reports
        .iter()
        .zip(energies)
        .enumerate()
        .map(|(frame, (r, &energy))| {
            let k = r.max_multiplicity;
            LiYauRow {
                frame,
                max_multiplicity: k,
                energy,
                pass: energy >= real::<T>(k as f64) - real::<T>(0.15),
            }
        })
        .collect()
}

/// Computes per-frame self-intersection reports, fanning frames out across
/// threads. Each frame's computation is pure and the results are stored by
/// index, so the output is identical to the sequential run no matter how the
/// scheduler interleaves.
pub fn parallel_reports<T: Real>(
    frames: &[&TriMesh<T>],
    config: &EventConfig<T>,
) -> Result<Vec<SelfIntersectionReport<T>>, IntersectError> {
    use crate::intersect::self_intersection;
    let n = frames.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let workers = std::thread::available_parallelism()
        .map(|w| w.get())
        .unwrap_or(1)
        .min(n);
    let chunk = n.div_ceil(workers);
    let mut slots: Vec<Option<Result<SelfIntersectionReport<T>, IntersectError>>> = Vec::new();
    slots.resize_with(n, || None);
    std::thread::scope(|scope| {
        for (fs, out) in frames.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (f, slot) in fs.iter().zip(out) {
                    *slot = Some(self_intersection(f, &config.intersection));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every chunk slot is written by its worker"))
        .collect()
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// What [`export_homotopy`] wrote: relative path → (sha-256, byte size),
/// plus the config hash. Its canonical string is itself written as
/// `manifest.txt`, last, so the listed checksums cover every other file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub config_hash: String,
    pub entries: BTreeMap<String, (String, u64)>,
}

impl Manifest {
    /// Canonical text: header, then one `sha256 bytes path` line per file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "config_hash {}", self.config_hash).unwrap();
        writeln!(out, "files {}", self.entries.len()).unwrap();
        for (path, (sha, bytes)) in &self.entries {
            writeln!(out, "{sha} {bytes} {path}").unwrap();
        }
        out
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// Writes a homotopy to `dir`: numbered mesh frames, per-frame double-curve
/// polylines, the energy trace CSV, the event log, the provenance block,
/// and a checksum manifest. Deterministic: the same homotopy exports to
/// byte-identical files, so the manifest is a fingerprint of the run.
pub fn export_homotopy<T: Real>(
    h: &Homotopy<T>,
    dir: &Path,
) -> Result<Manifest, PipelineError<T>> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)?;
    let mut manifest = Manifest {
        config_hash: h.provenance.config_hash.clone(),
        entries: BTreeMap::new(),
    };
    let mut put = |rel: String, bytes: &[u8]| -> Result<(), std::io::Error> {
        std::fs::write(dir.join(&rel), bytes)?;
        manifest
            .entries
            .insert(rel, (sha256_hex(bytes), bytes.len() as u64));
        Ok(())
    };

    for (i, frame) in h.frames.iter().enumerate() {
        put(
            format!("frames/frame_{i:04}.{MESH_EXTENSION}"),
            write_mesh_string(&frame.mesh).as_bytes(),
        )?;
        put(
            format!("frames/frame_{i:04}.curves"),
            polylines_string(&h.reports[i]).as_bytes(),
        )?;
    }
    put("energy.csv".into(), energy_csv(h).as_bytes())?;
    put("events.txt".into(), events_string(&h.events).as_bytes())?;
    put("li_yau.csv".into(), li_yau_csv(&h.li_yau).as_bytes())?;
    put("provenance.txt".into(), provenance_string(&h.provenance).as_bytes())?;

    std::fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    Ok(manifest)
}

fn polylines_string<T: Real>(report: &SelfIntersectionReport<T>) -> String {
    let mut out = String::new();
    writeln!(out, "# double curves: {}", report.double_curves.len()).unwrap();
    for (k, curve) in report.double_curves.iter().enumerate() {
        writeln!(
            out,
            "curve {k} points {} length {}",
            curve.points.len(),
            curve.length()
        )
        .unwrap();
        for p in &curve.points {
            writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
        }
    }
    writeln!(out, "# triple points: {}", report.triple_points.len()).unwrap();
    for t in &report.triple_points {
        writeln!(
            out,
            "triple {} {} {}",
            t.position.x, t.position.y, t.position.z
        )
        .unwrap();
    }
    for q in &report.quadruple_clusters {
        writeln!(
            out,
            "quadruple {} {} {} sheets {}",
            q.center.x, q.center.y, q.center.z, q.sheet_count
        )
        .unwrap();
    }
    out
}

fn energy_csv<T: Real>(h: &Homotopy<T>) -> String {
    let mut out = String::from("frame,time,energy,max_multiplicity\n");
    for (i, f) in h.frames.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{}",
            f.time, h.energies[i], h.reports[i].max_multiplicity
        )
        .unwrap();
    }
    out
}

fn events_string<T: Real>(events: &[EventRecord<T>]) -> String {
    let mut out = String::new();
    writeln!(out, "# events: {}", events.len()).unwrap();
    for e in events {
        let group = e
            .simultaneous_group
            .map(|g| g.to_string())
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "interval {} {} kind {} location {} {} {} group {group}",
            e.frame_interval.0,
            e.frame_interval.1,
            e.kind,
            e.location.x,
            e.location.y,
            e.location.z,
        )
        .unwrap();
    }
    out
}

fn li_yau_csv<T: Real>(rows: &[LiYauRow<T>]) -> String {
    let mut out = String::from("frame,max_multiplicity,energy,pass\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.frame, r.max_multiplicity, r.energy, r.pass
        )
        .unwrap();
    }
    out
}

fn provenance_string<T: Real>(p: &Provenance<T>) -> String {
    let mut out = String::new();
    writeln!(out, "config_hash = {}", p.config_hash).unwrap();
    writeln!(out, "seed = {}", p.seed).unwrap();
    writeln!(out, "halfway_energy = {}", p.halfway_energy).unwrap();
    writeln!(out, "saddle_eigenvalue = {}", p.saddle_eigenvalue).unwrap();
    writeln!(out, "saddle_curvature = {}", p.saddle_curvature).unwrap();
    writeln!(out, "event_count = {}", p.event_count).unwrap();
    writeln!(out, "forced_extra_frames = {}", p.forced_extra_frames).unwrap();
    out
}

// ---------------------------------------------------------------------------
// Standalone analysis
// ---------------------------------------------------------------------------

/// Result of analyzing a directory of mesh frames with no optimization
/// involved: works on this pipeline's exports and on third-party homotopies
/// alike.
#[derive(Clone, Debug)]
pub struct AnalysisReport<T: Real> {
    /// The frame files, in the naming order that defined time.
    pub frame_files: Vec<PathBuf>,
    pub energies: Vec<T>,
    pub reports: Vec<SelfIntersectionReport<T>>,
    pub events: Vec<EventRecord<T>>,
    pub li_yau: Vec<LiYauRow<T>>,
}

/// Reads every `.obj` frame under `frames_dir` (in file-name order), runs
/// the self-intersection analysis across them, classifies the events, and
/// writes `events.txt`, `li_yau.csv`, `energy.csv`, and per-frame `.curves`
/// polylines to `out_dir`.
pub fn analyze_command<T: Real>(
    frames_dir: &Path,
    out_dir: &Path,
) -> Result<AnalysisReport<T>, PipelineError<T>> {
    let analysis = analyze_frames(frames_dir)?;
    write_analysis(&analysis, out_dir)?;
    Ok(analysis)
}

/// The read-and-analyze half of [`analyze_command`].
pub fn analyze_frames<T: Real>(frames_dir: &Path) -> Result<AnalysisReport<T>, PipelineError<T>> {
    let mut frame_files: Vec<PathBuf> = std::fs::read_dir(frames_dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().map(|e| e == MESH_EXTENSION).unwrap_or(false))
        .collect();
    frame_files.sort();
    if frame_files.len() < 2 {
        return Err(PipelineError::Config(ConfigError::new(format!(
            "{} holds {} mesh frame(s); event analysis needs at least 2",
            frames_dir.display(),
            frame_files.len()
        ))));
    }
    let frames: Vec<TriMesh<T>> = frame_files
        .iter()
        .map(|p| read_mesh(p))
        .collect::<Result<_, _>>()?;

    let event_config = EventConfig::default();
    let refs: Vec<&TriMesh<T>> = frames.iter().collect();
    let reports = parallel_reports(&refs, &event_config)
        .map_err(|e| halt("analyze", e, &frames[0], &[]))?;
    let events = classify_from_reports(&frames, &reports, &event_config)
        .map_err(|e| halt("analyze", e, &frames[0], &[]))?;
    let energies = frames
        .iter()
        .map(|f| willmore_energy(f).map(|e| e.total))
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| halt("analyze", e, &frames[0], &[]))?;
    let li_yau = li_yau_table(&reports, &energies);
    Ok(AnalysisReport {
        frame_files,
        energies,
        reports,
        events,
        li_yau,
    })
}

/// The write-reports half of [`analyze_command`]; returns the paths written.
pub fn write_analysis<T: Real>(
    analysis: &AnalysisReport<T>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError<T>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<(), std::io::Error> {
        let path = out_dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };

    emit("events.txt", events_string(&analysis.events))?;
    emit("li_yau.csv", li_yau_csv(&analysis.li_yau))?;
    let mut energy = String::from("frame,energy,max_multiplicity\n");
    for (i, e) in analysis.energies.iter().enumerate() {
        writeln!(
            energy,
            "{i},{e},{}",
            analysis.reports[i].max_multiplicity
        )
        .unwrap();
    }
    emit("energy.csv", energy)?;
    let mut summary = String::from(
        "# per-frame self-intersection summary\n\
         # frame file segments curves triples quadruples max_multiplicity\n",
    );
    for (i, r) in analysis.reports.iter().enumerate() {
        let name = analysis.frame_files[i]
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        writeln!(
            summary,
            "{i} {name} {} {} {} {} {}",
            r.segments.len(),
            r.double_curves.len(),
            r.triple_points.len(),
            r.quadruple_clusters.len(),
            r.max_multiplicity
        )
        .unwrap();
    }
    emit("reports.txt", summary)?;
    for (i, r) in analysis.reports.iter().enumerate() {
        emit(&format!("frame_{i:04}.curves"), polylines_string(r))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn config_round_trips_through_its_text_form() {
        let mut config: EversionConfig<f64> = EversionConfig::morin_default();
        config.resolution = 24;
        config.seed = 7;
        config.descent.target_energy = Some(1.25);
        let text = config.to_config_string();
        let mut parsed = EversionConfig::<f64>::morin_default();
        parsed.apply_config_str(&text).unwrap();
        assert_eq!(parsed.to_config_string(), text);
        assert_eq!(parsed.config_hash(), config.config_hash());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let mut config: EversionConfig<f64> = EversionConfig::morin_default();
        let err = config.apply_config_str("resolutionn = 40\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        // Comments and blank lines are fine.
        config
            .apply_config_str("# comment\n\nresolution = 32 # trailing\n")
            .unwrap();
        assert_eq!(config.resolution, 32);
    }

    #[test]
    fn output_dir_does_not_change_the_config_hash() {
        let mut a: EversionConfig<f64> = EversionConfig::morin_default();
        let mut b = a.clone();
        a.output_dir = PathBuf::from("here");
        b.output_dir = PathBuf::from("there");
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn frame_budget_floor_is_enforced() {
        let mut config: EversionConfig<f64> = EversionConfig::morin_default();
        config.frame_budget = 8;
        assert!(config.validate().is_err());
    }

    #[test]
    fn analyze_needs_at_least_two_frames() {
        let dir = tempdir("analyze-one-frame");
        let m: TriMesh<f64> = icosphere(1, 1.0).unwrap();
        std::fs::write(dir.join("frame_0000.obj"), write_mesh_string(&m)).unwrap();
        let err = analyze_frames::<f64>(&dir).unwrap_err();
        assert!(matches!(err, PipelineError::Config(_)), "{err}");
    }

    #[test]
    fn constant_sequence_analyzes_to_zero_events() {
        let dir = tempdir("analyze-constant");
        let m: TriMesh<f64> = icosphere(1, 1.0).unwrap();
        for i in 0..4 {
            std::fs::write(
                dir.join(format!("frame_{i:04}.obj")),
                write_mesh_string(&m),
            )
            .unwrap();
        }
        let analysis = analyze_command::<f64>(&dir, &dir.join("out")).unwrap();
        assert!(analysis.events.is_empty());
        assert!(analysis.li_yau.iter().all(|r| r.pass));
        assert!(dir.join("out/events.txt").is_file());
        assert!(dir.join("out/frame_0003.curves").is_file());
    }

    #[test]
    fn separating_spheres_analyze_to_one_island() {
        // A two-sphere immersion pulled apart: the mutual double curve
        // shrinks and vanishes — exactly one Island, no other events.
        let dir = tempdir("analyze-island");
        for (i, sep) in [1.55, 1.7, 1.85, 2.3].iter().enumerate() {
            let m = two_spheres(*sep);
            std::fs::write(
                dir.join(format!("frame_{i:04}.obj")),
                write_mesh_string(&m),
            )
            .unwrap();
        }
        let analysis = analyze_frames::<f64>(&dir).unwrap();
        assert_eq!(analysis.reports[0].double_curves.len(), 1);
        assert_eq!(analysis.reports[3].double_curves.len(), 0);
        assert_eq!(analysis.events.len(), 1, "events: {:?}", analysis.events);
        assert_eq!(
            analysis.events[0].kind,
            crate::intersect::events::EventKind::Island
        );
    }

    /// Two unit icospheres along x at the given center separation, merged
    /// into one immersed mesh.
    fn two_spheres(separation: f64) -> TriMesh<f64> {
        let a: TriMesh<f64> = icosphere(2, 1.0).unwrap();
        let shift = Vector3::new(separation, 0.0, 0.0);
        let mut positions: Vec<Vector3<f64>> = a.positions().to_vec();
        positions.extend(a.positions().iter().map(|p| p + shift));
        let mut faces: Vec<[usize; 3]> = (0..a.face_count()).map(|f| a.face_vertices(f)).collect();
        let nv = a.vertex_count();
        faces.extend(
            (0..a.face_count())
                .map(|f| a.face_vertices(f))
                .map(|[i, j, k]| [i + nv, j + nv, k + nv]),
        );
        TriMesh::build_and_validate(positions, &faces).unwrap()
    }

    fn tempdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "eversion-pipeline-{tag}-{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
