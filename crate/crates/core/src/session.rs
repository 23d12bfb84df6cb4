//! Editing session: a splat scene with simulated bodies bound to it.
//!
//! A frame applies scheduled pin drags, steps every body, then carries each
//! body's deformation onto its kernels. All state lives in [`Session`], which
//! serializes losslessly, so a saved session continues bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::binding::{bind_kernels, BindOptions, BindingSet};
use crate::camera::Camera;
use crate::edit::{self, ObjectTransform};
use crate::error::{Error, Result};
use crate::extract::{default_cell_size, mesh_object, DEFAULT_ISO_LEVEL};
use crate::image::ImageBuffer;
use crate::io::{self, AnimationScript, Command};
use crate::material::{Assignments, MaterialCatalog, RuleClassifier};
use crate::mesh::TriangleMesh;
use crate::raster::{render_fast, render_oracle};
use crate::splat::SplatScene;
use crate::xpbd::{build_sim, SimParams, Simulation};

pub const SESSION_FORMAT: &str = "meshsplat-session";
pub const SESSION_VERSION: u32 = 1;

/// Tolerance, in frames, when deciding whether a scheduled time has arrived.
const TIME_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Renderer {
    #[default]
    Fast,
    Oracle,
}

impl Renderer {
    pub fn render(self, scene: &SplatScene, camera: &Camera) -> ImageBuffer {
        match self {
            Renderer::Fast => render_fast(scene, camera),
            Renderer::Oracle => render_oracle(scene, camera),
        }
    }
}

/// One simulated object. Binding kernel indices refer to the session scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub object_id: u32,
    pub faces: Vec<[u32; 3]>,
    pub bindings: BindingSet,
    pub sim: Simulation,
    pub material: String,
}

impl Body {
    pub fn mesh(&self) -> TriangleMesh {
        self.sim.mesh(&self.faces)
    }

    pub fn max_speed(&self) -> f64 {
        self.sim.state.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_height(&self) -> f64 {
        self.sim.positions().iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A pin anchor moving linearly from `from` at `start` to `to` at
/// `start + duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drag {
    pub object_id: u32,
    pub vertex: usize,
    pub from: Vector3<f64>,
    pub to: Vector3<f64>,
    pub start: f64,
    pub duration: f64,
}

impl Drag {
    fn anchor_at(&self, t: f64) -> Vector3<f64> {
        if self.duration <= 0.0 {
            return self.to;
        }
        let s = ((t - self.start) / self.duration).clamp(0.0, 1.0);
        if s >= 1.0 {
            self.to
        } else {
            self.from + (self.to - self.from) * s
        }
    }

    fn done_at(&self, t: f64) -> bool {
        t >= self.start + self.duration
    }
}

/// Wall-clock cost of one frame in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTiming {
    pub sim_ms: f64,
    pub bind_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub scene: SplatScene,
    pub bodies: Vec<Body>,
    pub assignments: Assignments,
    pub catalog: MaterialCatalog,
    pub cameras: BTreeMap<String, Camera>,
    pub params: SimParams,
    /// Seconds per frame.
    pub dt: f64,
    pub drags: Vec<Drag>,
    /// Frames stepped so far; session time is `frame · dt`.
    pub frame: u64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl Session {
    pub fn new(scene: SplatScene, catalog: MaterialCatalog, params: SimParams, dt: f64) -> Result<Session> {
        scene.validate()?;
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("frame time must be positive, got {dt}")));
        }
        Ok(Session {
            scene,
            bodies: Vec::new(),
            assignments: Assignments::default(),
            catalog,
            cameras: BTreeMap::new(),
            params,
            dt,
            drags: Vec::new(),
            frame: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.frame as f64 * self.dt
    }

    pub fn body(&self, object_id: u32) -> Result<&Body> {
        self.bodies
            .iter()
            .find(|b| b.object_id == object_id)
            .ok_or_else(|| Error::NotFound(format!("no simulated body for object {object_id}")))
    }

    fn body_mut(&mut self, object_id: u32) -> Result<&mut Body> {
        self.bodies
            .iter_mut()
            .find(|b| b.object_id == object_id)
            .ok_or_else(|| Error::NotFound(format!("no simulated body for object {object_id}")))
    }

    /// Binds the object's kernels to `mesh` and simulates it with the
    /// object's assigned material.
    pub fn add_body(&mut self, object_id: u32, mesh: TriangleMesh, options: &BindOptions) -> Result<&Body> {
        if self.bodies.iter().any(|b| b.object_id == object_id) {
            return Err(Error::InvalidInput(format!("object {object_id} already has a body")));
        }
        let indices = self.scene.object_indices(object_id);
        if indices.is_empty() {
            return Err(Error::NotFound(format!("object {object_id}")));
        }
        let mut bindings = bind_kernels(&self.scene.segment(object_id)?, &mesh, options)?;
        let global: Vec<Option<usize>> = indices.into_iter().map(Some).collect();
        bindings.remap_kernels(&global);
        let (material, _) = self.assignments.material_for(&self.catalog, object_id)?;
        let sim = build_sim(&mesh, material, self.params.clone())?;
        self.bodies.push(Body { object_id, faces: mesh.faces.clone(), bindings, sim, material: material.name.clone() });
        Ok(self.bodies.last().expect("just pushed"))
    }

    /// Extracts the object's mesh from its own density and adds it as a body.
    pub fn add_extracted_body(&mut self, object_id: u32, iso: Option<f64>, cell: Option<f64>, options: &BindOptions) -> Result<&Body> {
        let segment = self.scene.segment(object_id)?;
        let cell = match cell {
            Some(c) => c,
            None => default_cell_size(&segment)?,
        };
        let extraction = mesh_object(&self.scene, object_id, iso.unwrap_or(DEFAULT_ISO_LEVEL), cell)?;
        if extraction.empty {
            return Err(Error::InvalidInput(format!("object {object_id} has no surface at the chosen iso level")));
        }
        self.add_body(object_id, extraction.mesh, options)
    }

    pub fn set_gravity(&mut self, gravity: Vector3<f64>) -> Result<()> {
        if !gravity.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("gravity must be finite".into()));
        }
        self.params.gravity = gravity;
        for b in &mut self.bodies {
            b.sim.params.gravity = gravity;
        }
        Ok(())
    }

    /// Pins a vertex at `anchor`, or where it currently is.
    pub fn pin(&mut self, object_id: u32, vertex: usize, anchor: Option<Vector3<f64>>) -> Result<()> {
        let body = self.body_mut(object_id)?;
        let at = match anchor {
            Some(a) => a,
            None => *body
                .sim
                .positions()
                .get(vertex)
                .ok_or_else(|| Error::NotFound(format!("vertex {vertex} of object {object_id}")))?,
        };
        body.sim.pin_vertex(vertex, at)?;
        self.drags.retain(|d| !(d.object_id == object_id && d.vertex == vertex));
        Ok(())
    }

    /// Schedules the vertex's anchor to travel to `target` over `duration`
    /// seconds, pinning it where it is if it was free.
    pub fn move_pin(&mut self, object_id: u32, vertex: usize, target: Vector3<f64>, duration: f64) -> Result<()> {
        if !(duration >= 0.0 && duration.is_finite()) || !target.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("move_pin needs a finite target and non-negative duration".into()));
        }
        let now = self.time();
        let body = self.body_mut(object_id)?;
        let from = match body.sim.pins().iter().find(|(v, _)| *v == vertex) {
            Some((_, a)) => *a,
            None => *body
                .sim
                .positions()
                .get(vertex)
                .ok_or_else(|| Error::NotFound(format!("vertex {vertex} of object {object_id}")))?,
        };
        if duration == 0.0 {
            body.sim.move_pin(vertex, target)?;
        } else {
            body.sim.move_pin(vertex, from)?;
        }
        self.drags.retain(|d| !(d.object_id == object_id && d.vertex == vertex));
        if duration > 0.0 {
            self.drags.push(Drag { object_id, vertex, from, to: target, start: now, duration });
        }
        Ok(())
    }

    pub fn release(&mut self, object_id: u32, vertex: usize) -> Result<()> {
        self.body_mut(object_id)?.sim.release(vertex)?;
        self.drags.retain(|d| !(d.object_id == object_id && d.vertex == vertex));
        Ok(())
    }

    /// `(object, vertex, anchor)` for every pin.
    pub fn pins(&self) -> Vec<(u32, usize, Vector3<f64>)> {
        self.bodies.iter().flat_map(|b| b.sim.pins().into_iter().map(|(v, a)| (b.object_id, v, a))).collect()
    }

    /// Transforms the object's kernels and, when simulated, its body and
    /// rest pose. Returns the pivot used.
    pub fn transform_object(&mut self, object_id: u32, transform: &ObjectTransform) -> Result<Vector3<f64>> {
        let pivot = edit::transform_object(&mut self.scene, object_id, transform)?;
        let (q, s, t) = (transform.rotation, transform.scale, transform.translation);
        if let Ok(body) = self.body_mut(object_id) {
            body.sim.transform(&q, s, &pivot, &t);
            body.bindings.transform_rest(&q, s, &(pivot + t - s * (q * pivot)));
        }
        let map = |p: &Vector3<f64>| s * (q * (p - pivot)) + pivot + t;
        for d in self.drags.iter_mut().filter(|d| d.object_id == object_id) {
            d.from = map(&d.from);
            d.to = map(&d.to);
        }
        Ok(pivot)
    }

    /// Removes the object's kernels, body, drags and assignment.
    pub fn delete_object(&mut self, object_id: u32) -> Result<()> {
        let map = edit::delete_object(&mut self.scene, object_id)?;
        self.bodies.retain(|b| b.object_id != object_id);
        for b in &mut self.bodies {
            b.bindings.remap_kernels(&map);
        }
        self.drags.retain(|d| d.object_id != object_id);
        self.assignments.remove(object_id);
        Ok(())
    }

    /// Assigns a catalog material by name, or classifies the object from a
    /// rendering. A simulated body is rebuilt with the new material while
    /// keeping its current state and pins.
    pub fn assign_material(&mut self, object_id: u32, material: Option<&str>, classify_with: Option<&Camera>) -> Result<String> {
        let name = match (material, classify_with) {
            (Some(name), _) => self.assignments.assign_manual(&self.scene, &self.catalog, object_id, name)?.material.clone(),
            (None, Some(camera)) => self
                .assignments
                .assign_classified(&self.scene, &self.catalog, object_id, &RuleClassifier::default(), camera)?
                .material
                .clone(),
            (None, None) => return Err(Error::InvalidParameter("assign_material needs a material or a classifier camera".into())),
        };
        let props = self.catalog.get(&name)?.clone();
        if let Ok(body) = self.body_mut(object_id) {
            let mut sim = build_sim(&body.bindings.rest_mesh, &props, body.sim.params.clone())?;
            let old = &body.sim.state;
            sim.state.positions.clone_from(&old.positions);
            sim.state.prev_positions.clone_from(&old.prev_positions);
            sim.state.velocities.clone_from(&old.velocities);
            sim.state.time = old.time;
            for (v, a) in body.sim.pins() {
                sim.pin_vertex(v, a)?;
            }
            body.sim = sim;
            body.material = name.clone();
        }
        Ok(name)
    }

    /// Advances one frame. On error the session is left as it was.
    pub fn step_frame(&mut self) -> Result<FrameTiming> {
        let t_end = (self.frame + 1) as f64 * self.dt;
        let start = Instant::now();
        let mut sims: Vec<Simulation> = self.bodies.iter().map(|b| b.sim.clone()).collect();
        for d in &self.drags {
            let i = self.bodies.iter().position(|b| b.object_id == d.object_id).expect("drags belong to bodies");
            sims[i].move_pin(d.vertex, d.anchor_at(t_end))?;
        }
        for sim in &mut sims {
            sim.step(self.dt)?;
        }
        for (b, sim) in self.bodies.iter_mut().zip(sims) {
            b.sim = sim;
        }
        self.drags.retain(|d| !d.done_at(t_end));
        let sim_ms = ms(start);
        let start = Instant::now();
        self.apply_bindings()?;
        self.frame += 1;
        Ok(FrameTiming { sim_ms, bind_ms: ms(start) })
    }

    /// Poses every bound kernel from its body's current mesh.
    pub fn apply_bindings(&mut self) -> Result<()> {
        for b in &self.bodies {
            b.bindings.apply_deformation(&b.mesh(), &mut self.scene)?;
        }
        Ok(())
    }

    /// Steps whole frames until session time reaches `time`.
    pub fn step_to(&mut self, time: f64) -> Result<Vec<FrameTiming>> {
        let mut out = Vec::new();
        while self.time() < time - TIME_SLACK * self.dt {
            out.push(self.step_frame()?);
        }
        Ok(out)
    }

    pub fn camera(&self, id: &str) -> Result<&Camera> {
        self.cameras.get(id).ok_or_else(|| Error::NotFound(format!("camera {id:?}")))
    }

    pub fn render(&self, camera: &Camera, renderer: Renderer) -> ImageBuffer {
        renderer.render(&self.scene, camera)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::versioned::save(path, SESSION_FORMAT, SESSION_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Session> {
        let s: Session = io::versioned::load(path, SESSION_FORMAT, SESSION_VERSION)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        io::versioned::encode(SESSION_FORMAT, SESSION_VERSION, self)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Session> {
        let s: Session = io::versioned::decode(text, path, SESSION_FORMAT, SESSION_VERSION)?;
        s.validate()?;
        Ok(s)
    }

    /// Cross-checks loaded state.
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("frame time must be positive, got {}", self.dt)));
        }
        for b in &self.bodies {
            let n = b.sim.state.len();
            if b.bindings.rest_mesh.vertices.len() != n || b.bindings.rest_mesh.faces != b.faces {
                return Err(Error::InvalidInput(format!("body {} mesh does not match its simulation", b.object_id)));
            }
            if b.bindings.bindings.iter().any(|x| x.kernel_index >= self.scene.len()) {
                return Err(Error::InvalidInput(format!("body {} binds a kernel outside the scene", b.object_id)));
            }
        }
        if let Some(d) = self.drags.iter().find(|d| self.bodies.iter().all(|b| b.object_id != d.object_id)) {
            return Err(Error::InvalidInput(format!("drag on object {} without a body", d.object_id)));
        }
        Ok(())
    }
}

/// Options for [`run_script`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub renderer: Renderer,
    /// Directory for relative render outputs; defaults to the script's.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub time: f64,
    pub camera: String,
    pub path: PathBuf,
    pub render_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptReport {
    pub frames: Vec<FrameTiming>,
    pub renders: Vec<RenderedFrame>,
    /// Largest vertex speed per body after the last command.
    pub residual_speed: Vec<(u32, f64)>,
}

impl ScriptReport {
    pub fn mean_sim_ms(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.sim_ms))
    }

    pub fn mean_bind_ms(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.bind_ms))
    }

    pub fn mean_render_ms(&self) -> f64 {
        mean(self.renders.iter().map(|r| r.render_ms))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Builds the session an animation script describes, before any command.
pub fn session_from_script(script: &AnimationScript, script_path: &Path) -> Result<Session> {
    let scene = io::load_ply(&script.resolve(script_path, &script.scene))?;
    let catalog = match &script.catalog {
        Some(p) => MaterialCatalog::load(&script.resolve(script_path, p))?,
        None => MaterialCatalog::builtin(),
    };
    let mut session = Session::new(scene, catalog, script.sim.params(), script.sim.dt)?;
    for c in &script.cameras {
        session.cameras.insert(c.id.clone(), c.camera()?);
    }
    for b in &script.bodies {
        if let Some(m) = &b.material {
            session.assign_material(b.object, Some(m), None)?;
        }
        let options = BindOptions { max_distance: b.max_bind_distance };
        match &b.mesh {
            Some(p) => {
                let mesh = io::load_obj(&script.resolve(script_path, p))?;
                session.add_body(b.object, mesh, &options)?;
            }
            None => {
                session.add_extracted_body(b.object, b.iso, b.cell, &options)?;
            }
        }
    }
    Ok(session)
}

/// Runs a script headlessly, writing every requested render.
pub fn run_script(script: &AnimationScript, script_path: &Path, options: &RunOptions) -> Result<ScriptReport> {
    let mut session = session_from_script(script, script_path)?;
    run_commands(&mut session, script, script_path, options)
}

/// Applies a script's commands to an existing session.
pub fn run_commands(session: &mut Session, script: &AnimationScript, script_path: &Path, options: &RunOptions) -> Result<ScriptReport> {
    let mut report = ScriptReport::default();
    let out_dir = match &options.output_dir {
        Some(d) => d.clone(),
        None => script_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for tc in &script.commands {
        report.frames.extend(session.step_to(tc.at)?);
        match &tc.command {
            Command::SetGravity { gravity } => session.set_gravity((*gravity).into())?,
            Command::Pin { object, vertex, position } => session.pin(*object, *vertex, position.map(Vector3::from))?,
            Command::Release { object, vertex } => session.release(*object, *vertex)?,
            Command::MovePin { object, vertex, target, duration } => {
                session.move_pin(*object, *vertex, (*target).into(), *duration)?
            }
            Command::TransformObject { object, translation, rotation_deg, scale, pivot } => {
                session.transform_object(*object, &io::object_transform(*translation, *rotation_deg, *scale, *pivot))?;
            }
            Command::DeleteObject { object } => session.delete_object(*object)?,
            Command::AssignMaterial { object, material, classifier: _, camera } => {
                let cam = camera.as_deref().map(|c| session.camera(c).cloned()).transpose()?;
                session.assign_material(*object, material.as_deref(), cam.as_ref())?;
            }
            Command::Render { camera, output } => {
                let cam = session.camera(camera)?.clone();
                let start = Instant::now();
                let image = session.render(&cam, options.renderer);
                let render_ms = ms(start);
                let path = if output.is_absolute() { output.clone() } else { out_dir.join(output) };
                image.save(&path)?;
                report.renders.push(RenderedFrame { time: session.time(), camera: camera.clone(), path, render_ms });
            }
            Command::StepTo { time } => report.frames.extend(session.step_to(*time)?),
        }
    }
    report.residual_speed = session.bodies.iter().map(|b| (b.object_id, b.max_speed())).collect();
    Ok(report)
}
