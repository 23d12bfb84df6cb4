//! Regenerates the committed test fixtures: the cloth-over-ground scene,
//! its cloth mesh, and oracle-rendered goldens.

use std::path::Path;

use meshsplat::io::{load_script, save_obj, save_ply};
use meshsplat::session::{run_script, Renderer, RunOptions};
use meshsplat::synth;

/// Cloth grid resolution; vertex 10 is the corner opposite vertex 0.
const CELLS: usize = 10;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let goldens = dir.join("goldens");
    std::fs::create_dir_all(&goldens)?;

    let (scene, cloth) = synth::cloth_over_ground(CELLS, 2);
    save_ply(&scene, &dir.join("scene.ply"))?;
    save_obj(&cloth, &dir.join("cloth.obj"))?;

    let script_path = dir.join("cloth.toml");
    let script = load_script(&script_path)?;
    let front = script.cameras.iter().find(|c| c.id == "front").ok_or("no front camera")?.camera()?;
    Renderer::Oracle.render(&scene, &front).save(&goldens.join("scene_front.pfm"))?;

    let options = RunOptions { renderer: Renderer::Oracle, output_dir: Some(goldens.clone()) };
    let report = run_script(&script, &script_path, &options)?;
    for r in &report.renders {
        println!("{} t={:.4} {}", r.camera, r.time, r.path.display());
    }
    Ok(())
}
