//! Extended position-based dynamics on triangle meshes.
//!
//! Every substep predicts positions from velocities and gravity, then runs
//! Gauss–Seidel passes over the constraints in construction order with
//! multipliers reset to zero. Pinned vertices carry zero inverse mass and
//! are placed at their anchors kinematically.

mod constraint;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Divergence, Error, Result};
use crate::mesh::TriangleMesh;

pub use constraint::{dihedral_angle, dihedral_gradient, wrap_angle, Constraint};

pub const DEFAULT_DAMPING: f64 = 0.999;
pub const STANDARD_GRAVITY: Vector3<f64> = Vector3::new(0.0, -9.81, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProperties {
    pub name: String,
    /// kg/m³.
    pub density: f64,
    /// Pa.
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Shell thickness in meters.
    pub thickness: f64,
}

impl MaterialProperties {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("material {:?}: {what}", self.name)));
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return bad("Young's modulus must be positive");
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return bad("Poisson ratio must lie in (-1, 0.5)");
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return bad("thickness must be positive");
        }
        Ok(())
    }

    /// Membrane compliance 1/(E·t).
    pub fn distance_compliance(&self) -> f64 {
        1.0 / (self.youngs_modulus * self.thickness)
    }

    /// Plate bending compliance 12(1−ν²)/(E·t³).
    pub fn bending_compliance(&self) -> f64 {
        12.0 * (1.0 - self.poisson_ratio * self.poisson_ratio) / (self.youngs_modulus * self.thickness.powi(3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub substeps: usize,
    pub iterations: usize,
    pub gravity: Vector3<f64>,
    /// Velocity factor applied after every substep; 1 disables damping.
    pub damping: f64,
    /// Height of the ground plane `y = h`, if collisions are enabled.
    pub ground: Option<f64>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { substeps: 10, iterations: 4, gravity: STANDARD_GRAVITY, damping: DEFAULT_DAMPING, ground: None }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 || self.iterations == 0 {
            return Err(Error::InvalidParameter("substeps and iterations must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) || self.ground.is_some_and(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter("gravity and ground height must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub positions: Vec<Vector3<f64>>,
    pub prev_positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    /// Zero for pinned vertices.
    pub inverse_masses: Vec<f64>,
    /// Inverse masses before pinning, restored on release.
    pub free_inverse_masses: Vec<f64>,
    /// Parallel to the constraint list.
    pub lambdas: Vec<f64>,
    pub time: f64,
}

impl SimState {
    /// Free particles at rest.
    pub fn from_particles(positions: Vec<Vector3<f64>>, inverse_masses: Vec<f64>) -> Result<SimState> {
        if positions.len() != inverse_masses.len() {
            return Err(Error::InvalidInput("position and inverse mass counts differ".into()));
        }
        if inverse_masses.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("inverse masses must be finite and non-negative".into()));
        }
        let n = positions.len();
        Ok(SimState {
            prev_positions: positions.clone(),
            positions,
            velocities: vec![Vector3::zeros(); n],
            free_inverse_masses: inverse_masses.clone(),
            inverse_masses,
            lambdas: Vec::new(),
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A state, its constraints and stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub state: SimState,
    pub constraints: Vec<Constraint>,
    pub params: SimParams,
}

/// Builds a simulation for `mesh` made of `material`.
pub fn build_sim(mesh: &TriangleMesh, material: &MaterialProperties, params: SimParams) -> Result<Simulation> {
    mesh.validate()?;
    material.validate()?;
    params.validate()?;
    if mesh.is_empty() || mesh.total_area() <= 0.0 {
        return Err(Error::InvalidInput("mesh has zero area".into()));
    }
    let mut area = vec![0.0; mesh.vertices.len()];
    for f in 0..mesh.faces.len() {
        let a = mesh.face_area(f);
        for &v in &mesh.faces[f] {
            area[v as usize] += a;
        }
    }
    let mut inverse_masses = Vec::with_capacity(area.len());
    for (v, a) in area.iter().enumerate() {
        let m = material.density * material.thickness * a / 3.0;
        if !(m > 0.0) {
            return Err(Error::InvalidInput(format!("vertex {v} has zero mass")));
        }
        inverse_masses.push(1.0 / m);
    }
    let alpha_d = material.distance_compliance();
    let alpha_b = material.bending_compliance();
    let mut constraints = Vec::new();
    let edges = mesh.edge_faces();
    for ([a, b], _) in &edges {
        let rest_length = (mesh.vertices[*a as usize] - mesh.vertices[*b as usize]).norm();
        if rest_length <= 0.0 {
            return Err(Error::InvalidInput(format!("edge ({a}, {b}) has zero length")));
        }
        constraints.push(Constraint::Distance { vertices: [*a as usize, *b as usize], rest_length, compliance: alpha_d });
    }
    for ([a, b], faces) in &edges {
        if faces.len() != 2 {
            continue;
        }
        let (f1, f2) = (mesh.faces[faces[0]], mesh.faces[faces[1]]);
        // Orient the edge as it runs in the first face.
        let (p, q) = if directed(&f1, *a, *b) { (*a, *b) } else { (*b, *a) };
        if !directed(&f2, q, p) {
            log::warn!("faces {} and {} disagree in orientation; edge ({a}, {b}) gets no bending constraint", faces[0], faces[1]);
            continue;
        }
        let opposite = |f: &[u32; 3]| *f.iter().find(|&&v| v != p && v != q).unwrap();
        let vertices = [opposite(&f1), opposite(&f2), p, q].map(|v| v as usize);
        let rest_angle = dihedral_angle(vertices.map(|v| mesh.vertices[v]));
        constraints.push(Constraint::Bending { vertices, rest_angle, compliance: alpha_b });
    }
    if let Some(height) = params.ground {
        constraints.extend((0..mesh.vertices.len()).map(|vertex| Constraint::Ground { vertex, height }));
    }
    let mut state = SimState::from_particles(mesh.vertices.clone(), inverse_masses)?;
    state.lambdas = vec![0.0; constraints.len()];
    Ok(Simulation { state, constraints, params })
}

fn directed(f: &[u32; 3], a: u32, b: u32) -> bool {
    (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b)
}

impl Simulation {
    /// Simulation of free particles with the given constraints.
    pub fn from_parts(state: SimState, constraints: Vec<Constraint>, params: SimParams) -> Result<Simulation> {
        params.validate()?;
        let n = state.len();
        for (i, c) in constraints.iter().enumerate() {
            if c.vertices().iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!("constraint {i} references a vertex out of range")));
            }
            if c.compliance() < 0.0 || !c.compliance().is_finite() {
                return Err(Error::InvalidInput(format!("constraint {i} has invalid compliance")));
            }
            if let Constraint::Distance { rest_length, .. } = c {
                if !(*rest_length > 0.0) {
                    return Err(Error::InvalidInput(format!("constraint {i} has non-positive rest length")));
                }
            }
        }
        let mut sim = Simulation { state, constraints: Vec::new(), params };
        sim.state.lambdas.clear();
        for c in constraints {
            if let Constraint::Pin { vertex, anchor } = c {
                sim.pin_vertex(vertex, anchor)?;
            } else {
                sim.constraints.push(c);
                sim.state.lambdas.push(0.0);
            }
        }
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.state.positions
    }

    fn check_vertex(&self, vertex: usize) -> Result<()> {
        if vertex >= self.state.len() {
            return Err(Error::NotFound(format!("vertex {vertex} (mesh has {})", self.state.len())));
        }
        Ok(())
    }

    fn pin_slot(&self, vertex: usize) -> Option<usize> {
        self.constraints.iter().position(|c| matches!(c, Constraint::Pin { vertex: v, .. } if *v == vertex))
    }

    /// Anchors `vertex` at `anchor`; re-pinning retargets the anchor.
    pub fn pin_vertex(&mut self, vertex: usize, anchor: Vector3<f64>) -> Result<()> {
        self.check_vertex(vertex)?;
        if !anchor.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("pin anchor must be finite".into()));
        }
        match self.pin_slot(vertex) {
            Some(i) => self.constraints[i] = Constraint::Pin { vertex, anchor },
            None => {
                self.constraints.push(Constraint::Pin { vertex, anchor });
                self.state.lambdas.push(0.0);
            }
        }
        self.state.inverse_masses[vertex] = 0.0;
        Ok(())
    }

    /// Moves the anchor of `vertex`, pinning it first if necessary. The vertex
    /// reaches the anchor at the next substep.
    pub fn move_pin(&mut self, vertex: usize, anchor: Vector3<f64>) -> Result<()> {
        self.pin_vertex(vertex, anchor)
    }

    pub fn release(&mut self, vertex: usize) -> Result<()> {
        self.check_vertex(vertex)?;
        if let Some(i) = self.pin_slot(vertex) {
            self.constraints.remove(i);
            self.state.lambdas.remove(i);
            self.state.inverse_masses[vertex] = self.state.free_inverse_masses[vertex];
        }
        Ok(())
    }

    /// `(vertex, anchor)` for every pin, in pinning order.
    pub fn pins(&self) -> Vec<(usize, Vector3<f64>)> {
        self.constraints
            .iter()
            .filter_map(|c| match c {
                Constraint::Pin { vertex, anchor } => Some((*vertex, *anchor)),
                _ => None,
            })
            .collect()
    }

    /// Advances by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        self.params.validate()?;
        let h = dt / self.params.substeps as f64;
        let pins = self.pins();
        let s = &mut self.state;
        let mut predicted = vec![Vector3::zeros(); s.len()];
        for sub in 0..self.params.substeps {
            let t0 = s.time + sub as f64 * h;
            s.prev_positions.copy_from_slice(&s.positions);
            for i in 0..s.positions.len() {
                if s.inverse_masses[i] > 0.0 {
                    s.positions[i] += h * s.velocities[i] + h * h * self.params.gravity;
                }
            }
            predicted.copy_from_slice(&s.positions);
            for (v, anchor) in &pins {
                s.positions[*v] = *anchor;
            }
            s.lambdas.iter_mut().for_each(|l| *l = 0.0);
            for _ in 0..self.params.iterations {
                for (ci, c) in self.constraints.iter().enumerate() {
                    if constraint::project(c, &mut s.positions, &s.inverse_masses, &mut s.lambdas[ci], h).is_none() {
                        return Err(Error::SimulationDiverged(Divergence {
                            time: t0,
                            substep: sub,
                            constraint: Some(ci),
                            vertex: c.vertices().first().copied(),
                        }));
                    }
                }
            }
            for i in 0..s.positions.len() {
                // Equal to (x − x_prev)/h for free vertices, without the
                // cancellation that difference suffers at small h.
                let v = if s.inverse_masses[i] > 0.0 {
                    s.velocities[i] + h * self.params.gravity + (s.positions[i] - predicted[i]) / h
                } else {
                    (s.positions[i] - s.prev_positions[i]) / h
                };
                s.velocities[i] = v * self.params.damping;
            }
            if let Some(v) = s.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(Error::SimulationDiverged(Divergence { time: t0, substep: sub, constraint: None, vertex: Some(v) }));
            }
        }
        s.time += dt;
        Ok(())
    }

    /// Applies `x ↦ s·Q·(x − pivot) + pivot + t` to the whole body, including
    /// pin anchors and rest lengths; velocities rotate and scale with it.
    pub fn transform(&mut self, rotation: &UnitQuaternion<f64>, scale: f64, pivot: &Vector3<f64>, translation: &Vector3<f64>) {
        let map = |p: &Vector3<f64>| scale * (rotation * (p - pivot)) + pivot + translation;
        let s = &mut self.state;
        for p in s.positions.iter_mut().chain(s.prev_positions.iter_mut()) {
            *p = map(p);
        }
        for v in &mut s.velocities {
            *v = scale * (rotation * *v);
        }
        for c in &mut self.constraints {
            match c {
                Constraint::Distance { rest_length, .. } => *rest_length *= scale,
                Constraint::Pin { anchor, .. } => *anchor = map(anchor),
                _ => {}
            }
        }
    }

    /// The simulated surface as a mesh with `faces`.
    pub fn mesh(&self, faces: &[[u32; 3]]) -> TriangleMesh {
        TriangleMesh { vertices: self.state.positions.clone(), faces: faces.to_vec(), inverse_masses: self.state.inverse_masses.clone() }
    }
}

#[cfg(test)]
mod tests;
