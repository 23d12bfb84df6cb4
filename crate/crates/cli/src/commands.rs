//! Subcommand definitions and their implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use meshsplat::binding::{bind_kernels, BindOptions};
use meshsplat::edit;
use meshsplat::extract::{default_cell_size, extract_mesh, DEFAULT_ISO_LEVEL};
use meshsplat::io::{self, object_transform};
use meshsplat::metrics::MetricsReport;
use meshsplat::session::{run_commands, session_from_script, Renderer, RunOptions, Session};
use meshsplat::{Camera, Error, ImageBuffer};

use crate::exit::CliError;
use crate::protocol::ViewSpec;
use crate::server::{self, ServerOptions};

#[derive(Debug, Parser)]
#[command(name = "meshsplat", version, about = "Mesh-embedded Gaussian splatting engine")]
pub struct Cli {
    /// Worker threads for rendering and extraction (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: CommandKind,
}

#[derive(Debug, Subcommand)]
pub enum CommandKind {
    /// Render one frame of a splat scene.
    Render(RenderArgs),
    /// Run an animation script headlessly.
    Simulate(SimulateArgs),
    /// Extract a triangle mesh from splat density.
    Extract(ExtractArgs),
    /// Edit objects of a splat scene.
    Edit(EditArgs),
    /// Bind kernels to a mesh and write the binding sidecar.
    Bind(BindArgs),
    /// Compare two images.
    Metrics(MetricsArgs),
    /// Serve a live session to editor clients over WebSocket.
    Serve(ServeArgs),
}

/// Comma-separated triple, e.g. `1,0,-2.5`.
pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0f64; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
        if !o.is_finite() {
            return Err(format!("not finite: {p:?}"));
        }
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct CameraArgs {
    /// Camera position.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, conflicts_with = "script")]
    pub eye: Option<[f64; 3]>,
    /// Point the camera looks at.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,0")]
    pub target: [f64; 3],
    /// World up direction.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,1,0")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 50.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    /// Take the camera from an animation script instead.
    #[arg(long, requires = "camera")]
    pub script: Option<PathBuf>,
    /// Camera id within `--script`.
    #[arg(long, requires = "script")]
    pub camera: Option<String>,
}

impl CameraArgs {
    pub fn camera(&self) -> Result<Camera, CliError> {
        if let (Some(script), Some(id)) = (&self.script, &self.camera) {
            let s = io::load_script(script)?;
            let def = s.cameras.iter().find(|c| &c.id == id).ok_or_else(|| Error::NotFound(format!("camera {id:?} in {}", script.display())))?;
            return Ok(def.camera()?);
        }
        let eye = self.eye.ok_or_else(|| CliError::Usage("give --eye or --script with --camera".into()))?;
        Ok(Camera::look_at(eye.into(), self.target.into(), self.up.into(), self.fov, self.width, self.height)?)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Splat scene (binary PLY).
    pub scene: PathBuf,
    /// Output image (.png, .ppm or .pfm).
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub view: CameraArgs,
    /// Use the per-pixel reference renderer.
    #[arg(long, conflicts_with = "fast")]
    pub oracle: bool,
    /// Use the tiled renderer (default).
    #[arg(long)]
    pub fast: bool,
    /// Reference image; prints a metrics line comparing against it.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Animation script (TOML).
    pub script: PathBuf,
    /// Render with the per-pixel reference renderer.
    #[arg(long)]
    pub oracle: bool,
    /// Directory for relative render outputs (default: the script's).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write the final session state here.
    #[arg(long)]
    pub save_session: Option<PathBuf>,
    /// Continue from a saved session instead of building one from the script.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print one timing line per simulated frame.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Splat scene (binary PLY).
    pub scene: PathBuf,
    /// Output mesh (OBJ).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Only this object's kernels contribute.
    #[arg(long)]
    pub object: Option<u32>,
    /// Density iso level.
    #[arg(long, default_value_t = DEFAULT_ISO_LEVEL)]
    pub iso: f64,
    /// Grid cell edge length (default: padded bounds diagonal / 128).
    #[arg(long)]
    pub cell: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Splat scene (binary PLY).
    pub scene: PathBuf,
    /// Edited scene (binary PLY).
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(subcommand)]
    pub op: EditOp,
}

#[derive(Debug, Subcommand)]
pub enum EditOp {
    /// Move, rotate and uniformly scale one object.
    Transform {
        #[arg(long)]
        object: u32,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,0")]
        translate: [f64; 3],
        /// Roll, pitch and yaw in degrees about x, y and z.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,0")]
        rotate_deg: [f64; 3],
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Defaults to the centroid of the object's kernel means.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        pivot: Option<[f64; 3]>,
    },
    /// Remove one object's kernels.
    Delete {
        #[arg(long)]
        object: u32,
    },
    /// Set the object id of kernels `start..end`.
    Relabel {
        #[arg(long)]
        start: usize,
        #[arg(long)]
        end: usize,
        #[arg(long)]
        object: u32,
    },
}

#[derive(Debug, Args)]
pub struct BindArgs {
    /// Splat scene (binary PLY).
    pub scene: PathBuf,
    /// Mesh (OBJ).
    pub mesh: PathBuf,
    /// Binding sidecar to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Only bind this object's kernels.
    #[arg(long)]
    pub object: Option<u32>,
    /// Kernels farther than this stay unbound (default: 3 × median kernel scale).
    #[arg(long)]
    pub max_distance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Saved session (.json) or animation script (.toml).
    pub session: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Simulation frames per second.
    #[arg(long, default_value_t = server::DEFAULT_RATE_HZ)]
    pub rate: f64,
    /// Initial viewport width.
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    /// Initial viewport height.
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    /// Start with the simulation paused.
    #[arg(long)]
    pub paused: bool,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    match cli.command {
        CommandKind::Render(a) => render(a, out),
        CommandKind::Simulate(a) => simulate(a, out),
        CommandKind::Extract(a) => extract(a, out),
        CommandKind::Edit(a) => edit_scene(a, out),
        CommandKind::Bind(a) => bind(a, out),
        CommandKind::Metrics(a) => metrics(a, out),
        CommandKind::Serve(a) => serve(a, out),
    }
}

fn w(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Core(Error::Io { path: "<stdout>".into(), source: e }))
}

fn render(a: RenderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scene = io::load_ply(&a.scene)?;
    let camera = a.view.camera()?;
    let renderer = if a.oracle { Renderer::Oracle } else { Renderer::Fast };
    let start = std::time::Instant::now();
    let image = renderer.render(&scene, &camera);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    image.save(&a.output)?;
    w(out, format!("render kernels={} width={} height={} ms={ms:.3} output={}", scene.len(), image.width, image.height, a.output.display()))?;
    if let Some(r) = &a.reference {
        let reference = ImageBuffer::load(r)?;
        w(out, MetricsReport::compute(&image, &reference)?.to_line())?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let script = io::load_script(&a.script)?;
    let mut session = match &a.resume {
        Some(p) => Session::load(p)?,
        None => session_from_script(&script, &a.script)?,
    };
    let options = RunOptions { renderer: if a.oracle { Renderer::Oracle } else { Renderer::Fast }, output_dir: a.output_dir.clone() };
    let report = run_commands(&mut session, &script, &a.script, &options)?;
    if a.timing {
        for (i, f) in report.frames.iter().enumerate() {
            w(out, format!("frame={i} sim_ms={:.3} bind_ms={:.3}", f.sim_ms, f.bind_ms))?;
        }
    }
    for r in &report.renders {
        w(out, format!("render time={:.4} camera={} ms={:.3} output={}", r.time, r.camera, r.render_ms, r.path.display()))?;
    }
    let mut line = format!(
        "simulate frames={} time={:.4} sim_ms={:.3} bind_ms={:.3} render_ms={:.3}",
        report.frames.len(),
        session.time(),
        report.mean_sim_ms(),
        report.mean_bind_ms(),
        report.mean_render_ms()
    );
    for b in &session.bodies {
        line += &format!(" residual_speed[{}]={:.6e} max_height[{}]={:.6}", b.object_id, b.max_speed(), b.object_id, b.max_height());
    }
    w(out, line)?;
    if let Some(p) = &a.save_session {
        session.save(p)?;
    }
    Ok(())
}

fn extract(a: ExtractArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut scene = io::load_ply(&a.scene)?;
    if let Some(id) = a.object {
        scene = scene.segment(id)?;
    }
    let cell = match a.cell {
        Some(c) => c,
        None => default_cell_size(&scene)?,
    };
    let ex = extract_mesh(&scene, a.iso, cell)?;
    io::save_obj(&ex.mesh, &a.output)?;
    let [x, y, z] = ex.grid_dims;
    w(
        out,
        format!(
            "extract vertices={} faces={} components={} euler={} closed={} grid={x}x{y}x{z} cell={:.6e} empty={}",
            ex.mesh.vertices.len(),
            ex.mesh.faces.len(),
            ex.mesh.connected_components(),
            ex.mesh.euler_characteristic(),
            ex.mesh.is_closed_manifold(),
            ex.cell_size,
            ex.empty
        ),
    )
}

fn edit_scene(a: EditArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut scene = io::load_ply(&a.scene)?;
    let summary = match a.op {
        EditOp::Transform { object, translate, rotate_deg, scale, pivot } => {
            let p = edit::transform_object(&mut scene, object, &object_transform(translate, rotate_deg, scale, pivot))?;
            format!("edit transform object={object} pivot={},{},{}", p.x, p.y, p.z)
        }
        EditOp::Delete { object } => {
            let before = scene.len();
            edit::delete_object(&mut scene, object)?;
            format!("edit delete object={object} removed={}", before - scene.len())
        }
        EditOp::Relabel { start, end, object } => {
            if start > end {
                return Err(Error::InvalidParameter(format!("kernel range {start}..{end} is reversed")).into());
            }
            edit::relabel(&mut scene, start..end, object)?;
            format!("edit relabel range={start}..{end} object={object}")
        }
    };
    io::save_ply(&scene, &a.output)?;
    w(out, format!("{summary} kernels={}", scene.len()))
}

fn bind(a: BindArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scene = io::load_ply(&a.scene)?;
    let mesh = io::load_obj(&a.mesh)?;
    let options = BindOptions { max_distance: a.max_distance };
    let set = match a.object {
        Some(id) => {
            let mut set = bind_kernels(&scene.segment(id)?, &mesh, &options)?;
            let global: Vec<Option<usize>> = scene.object_indices(id).into_iter().map(Some).collect();
            set.remap_kernels(&global);
            set
        }
        None => bind_kernels(&scene, &mesh, &options)?,
    };
    io::save_bindings(&set.records(), &a.output)?;
    w(out, format!("bind bound={} unbound={} max_distance={:.6e}", set.len(), set.unbound.len(), set.max_distance))
}

fn metrics(a: MetricsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let x = ImageBuffer::load(&a.a)?;
    let y = ImageBuffer::load(&a.b)?;
    w(out, MetricsReport::compute(&x, &y)?.to_line())
}

/// Loads a saved session, or builds one from a script's scene and bodies.
pub fn load_session(path: &Path) -> Result<Session, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            let script = io::load_script(path)?;
            Ok(session_from_script(&script, path)?)
        }
        _ => Ok(Session::load(path)?),
    }
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let session = load_session(&a.session)?;
    let view = script_view(&a.session, a.width, a.height).unwrap_or_else(|| server::framing_view(&session.scene, a.width, a.height));
    view.camera()?;
    let options = ServerOptions { rate_hz: a.rate, default_view: Some(view), paused: a.paused, ..ServerOptions::default() };
    let handle = server::start(session, (a.host.as_str(), a.port), options)?;
    w(out, format!("serve listening=ws://{}", handle.local_addr()))?;
    out.flush().ok();
    handle.wait();
    Ok(())
}

/// First camera of a script as a view, resized to the viewport.
fn script_view(path: &Path, width: u32, height: u32) -> Option<ViewSpec> {
    if path.extension().and_then(|e| e.to_str()) != Some("toml") {
        return None;
    }
    let script = io::load_script(path).ok()?;
    let c = script.cameras.first()?;
    Some(ViewSpec { eye: c.eye, target: c.target, up: c.up, fov_y: c.fov_y, width, height })
}
