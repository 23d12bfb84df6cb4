//! Versioned TOML animation scripts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::edit::ObjectTransform;
use crate::error::{Error, Result};
use crate::xpbd::{SimParams, DEFAULT_DAMPING};

pub const SCRIPT_FORMAT: &str = "meshsplat-script";
pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnimationScript {
    pub format: String,
    pub version: u32,
    /// Splat PLY, relative to the script's directory.
    pub scene: PathBuf,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub cameras: Vec<CameraDef>,
    #[serde(default)]
    pub bodies: Vec<BodyDef>,
    #[serde(default)]
    pub commands: Vec<TimedCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    /// Seconds per frame.
    pub dt: f64,
    pub substeps: usize,
    pub iterations: usize,
    pub damping: f64,
    pub gravity: [f64; 3],
    pub ground: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { dt: 1.0 / 60.0, substeps: 10, iterations: 4, damping: DEFAULT_DAMPING, gravity: [0.0, -9.81, 0.0], ground: None }
    }
}

impl SimSettings {
    pub fn params(&self) -> SimParams {
        SimParams {
            substeps: self.substeps,
            iterations: self.iterations,
            gravity: Vector3::from(self.gravity),
            damping: self.damping,
            ground: self.ground,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDef {
    pub id: String,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "world_up")]
    pub up: [f64; 3],
    #[serde(default = "default_fov")]
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

fn world_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn default_fov() -> f64 {
    50.0
}

impl CameraDef {
    pub fn camera(&self) -> Result<Camera> {
        Camera::look_at(self.eye.into(), self.target.into(), self.up.into(), self.fov_y, self.width, self.height)
    }
}

/// A simulated object: its mesh comes from an OBJ file or is extracted
/// from the segment's density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDef {
    pub object: u32,
    #[serde(default)]
    pub mesh: Option<PathBuf>,
    #[serde(default)]
    pub iso: Option<f64>,
    #[serde(default)]
    pub cell: Option<f64>,
    #[serde(default)]
    pub material: Option<String>,
    #[serde(default)]
    pub max_bind_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    /// Simulated time at which the command runs.
    pub at: f64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetGravity {
        gravity: [f64; 3],
    },
    Pin {
        object: u32,
        vertex: usize,
        /// Defaults to the vertex's current position.
        #[serde(default)]
        position: Option<[f64; 3]>,
    },
    Release {
        object: u32,
        vertex: usize,
    },
    /// Moves the anchor linearly to `target` over `duration` seconds.
    MovePin {
        object: u32,
        vertex: usize,
        target: [f64; 3],
        #[serde(default)]
        duration: f64,
    },
    TransformObject {
        object: u32,
        #[serde(default)]
        translation: [f64; 3],
        /// Roll, pitch, yaw in degrees about x, y, z.
        #[serde(default)]
        rotation_deg: [f64; 3],
        #[serde(default = "unit_scale")]
        scale: f64,
        #[serde(default)]
        pivot: Option<[f64; 3]>,
    },
    DeleteObject {
        object: u32,
    },
    /// Either a catalog name or `classifier = "rule"` with a camera.
    AssignMaterial {
        object: u32,
        #[serde(default)]
        material: Option<String>,
        #[serde(default)]
        classifier: Option<String>,
        #[serde(default)]
        camera: Option<String>,
    },
    Render {
        camera: String,
        output: PathBuf,
    },
    StepTo {
        time: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

/// Builds the edit transform of a `transform_object` command.
pub fn object_transform(translation: [f64; 3], rotation_deg: [f64; 3], scale: f64, pivot: Option<[f64; 3]>) -> ObjectTransform {
    let [r, p, y] = rotation_deg.map(f64::to_radians);
    ObjectTransform {
        rotation: UnitQuaternion::from_euler_angles(r, p, y),
        scale,
        translation: translation.into(),
        pivot: pivot.map(Vector3::from),
    }
}

pub fn load_script(path: &Path) -> Result<AnimationScript> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_script(&text, path)
}

pub fn parse_script(text: &str, path: &Path) -> Result<AnimationScript> {
    let parse_err = |e: toml::de::Error| Error::parse(path, e.span().map_or(0, |s| s.start) as u64, e.message().to_string());
    let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
    match table.get("format").and_then(|v| v.as_str()) {
        Some(SCRIPT_FORMAT) => {}
        other => return Err(Error::parse(path, 0, format!("expected format = {SCRIPT_FORMAT:?}, found {other:?}"))),
    }
    let version = table.get("version").and_then(|v| v.as_integer()).ok_or_else(|| Error::parse(path, 0, "missing integer version".to_string()))?;
    if version != SCRIPT_VERSION as i64 {
        return Err(Error::UnsupportedVersion { what: SCRIPT_FORMAT, found: version.clamp(0, u32::MAX as i64) as u32, expected: SCRIPT_VERSION });
    }
    let script: AnimationScript = toml::from_str(text).map_err(parse_err)?;
    script.validate()?;
    Ok(script)
}

impl AnimationScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return bad(format!("sim.dt must be positive, got {}", s.dt));
        }
        s.params().validate()?;
        let mut cameras = BTreeSet::new();
        for c in &self.cameras {
            if !cameras.insert(c.id.as_str()) {
                return bad(format!("camera {:?} defined twice", c.id));
            }
            c.camera()?;
        }
        let mut bodies = BTreeSet::new();
        for b in &self.bodies {
            if !bodies.insert(b.object) {
                return bad(format!("body for object {} defined twice", b.object));
            }
        }
        let mut last = 0.0;
        for (i, tc) in self.commands.iter().enumerate() {
            if !(tc.at.is_finite() && tc.at >= last) {
                return bad(format!("command {i}: time {} precedes {last}", tc.at));
            }
            last = tc.at;
            let camera = |id: &str| if cameras.contains(id) { Ok(()) } else { bad(format!("command {i}: unknown camera {id:?}")) };
            let body = |id: u32| if bodies.contains(&id) { Ok(()) } else { bad(format!("command {i}: object {id} has no body")) };
            match &tc.command {
                Command::Render { camera: c, .. } => camera(c)?,
                Command::Pin { object, .. } | Command::Release { object, .. } => body(*object)?,
                Command::MovePin { object, duration, .. } => {
                    body(*object)?;
                    if !(*duration >= 0.0 && duration.is_finite()) {
                        return bad(format!("command {i}: duration must be non-negative"));
                    }
                }
                Command::StepTo { time } => {
                    if !(time.is_finite() && *time >= tc.at) {
                        return bad(format!("command {i}: step_to time {time} precedes its start {}", tc.at));
                    }
                    last = *time;
                }
                Command::AssignMaterial { material, classifier, camera: cam, .. } => match (material, classifier) {
                    (Some(_), None) => {}
                    (None, Some(name)) if name == "rule" => camera(cam.as_deref().unwrap_or(""))?,
                    (None, Some(name)) => return bad(format!("command {i}: unknown classifier {name:?}")),
                    _ => return bad(format!("command {i}: give exactly one of material or classifier")),
                },
                Command::TransformObject { scale, .. } => {
                    if !(*scale > 0.0) {
                        return bad(format!("command {i}: scale must be positive"));
                    }
                }
                Command::SetGravity { .. } | Command::DeleteObject { .. } => {}
            }
        }
        Ok(())
    }

    /// Resolves a script-relative path.
    pub fn resolve(&self, script_path: &Path, p: &Path) -> PathBuf {
        match script_path.parent() {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
