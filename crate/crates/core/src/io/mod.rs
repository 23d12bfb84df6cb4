//! File formats: splat PLY, mesh OBJ, sidecars, sessions and scripts.

mod obj;
mod ply;
mod script;
mod sidecar;
pub mod versioned;

pub use obj::{encode_obj, load_obj, parse_obj, save_obj};
pub use ply::{load_ply, save_ply, segments_path};
pub use script::{
    load_script, object_transform, parse_script, AnimationScript, BodyDef, CameraDef, Command, SimSettings, TimedCommand,
    SCRIPT_FORMAT, SCRIPT_VERSION,
};
pub use sidecar::{encode_bindings, load_bindings, load_segments, parse_bindings, parse_segments, save_bindings, save_segments};
