//! Messages exchanged with editor clients.
//!
//! Client messages are JSON text frames carrying a `type` and a `seq`.
//! Server replies are JSON text frames, except rendered frames, which are
//! binary: a fixed [`FRAME_HEADER_LEN`]-byte header followed by the image.
//! Unknown fields are ignored.

use meshsplat::{Camera, Error};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const PROTOCOL_VERSION: u32 = 1;
pub const FRAME_MAGIC: [u8; 4] = *b"MSFR";
pub const FRAME_HEADER_LEN: usize = 32;
/// Largest accepted viewport side, in pixels.
pub const MAX_VIEWPORT_SIDE: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameEncoding {
    /// 8-bit gamma-encoded RGBA, rows top to bottom.
    #[default]
    Raw,
    Png,
}

impl FrameEncoding {
    pub fn code(self) -> u8 {
        match self {
            FrameEncoding::Raw => 0,
            FrameEncoding::Png => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FrameEncoding::Raw),
            1 => Some(FrameEncoding::Png),
            _ => None,
        }
    }
}

/// Camera on a sphere around `target`; angles in degrees, elevation
/// measured up from the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub target: [f64; 3],
    pub distance: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl Orbit {
    pub fn eye(&self) -> Vector3<f64> {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        Vector3::from(self.target) + self.distance * Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }
}

/// Partial camera update; absent fields keep their current values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraUpdate {
    #[serde(default)]
    pub orbit: Option<Orbit>,
    #[serde(default)]
    pub eye: Option<[f64; 3]>,
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    #[serde(default)]
    pub up: Option<[f64; 3]>,
    #[serde(default)]
    pub fov_y: Option<f64>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
}

/// A look-at camera description the server keeps per client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

impl ViewSpec {
    pub fn camera(&self) -> meshsplat::Result<Camera> {
        Camera::look_at(self.eye.into(), self.target.into(), self.up.into(), self.fov_y, self.width, self.height)
    }

    /// Applies an update, validating the result.
    pub fn updated(&self, u: &CameraUpdate) -> meshsplat::Result<ViewSpec> {
        let mut v = *self;
        if let Some(o) = &u.orbit {
            if !(o.distance > 0.0 && o.distance.is_finite()) {
                return Err(Error::InvalidParameter(format!("orbit distance must be positive, got {}", o.distance)));
            }
            v.eye = o.eye().into();
            v.target = o.target;
        }
        if let Some(e) = u.eye {
            v.eye = e;
        }
        if let Some(t) = u.target {
            v.target = t;
        }
        if let Some(up) = u.up {
            v.up = up;
        }
        if let Some(f) = u.fov_y {
            v.fov_y = f;
        }
        if let Some(w) = u.width {
            v.width = w;
        }
        if let Some(h) = u.height {
            v.height = h;
        }
        if v.width == 0 || v.height == 0 || v.width > MAX_VIEWPORT_SIDE || v.height > MAX_VIEWPORT_SIDE {
            return Err(Error::InvalidParameter(format!(
                "viewport {}x{} outside 1..={MAX_VIEWPORT_SIDE}",
                v.width, v.height
            )));
        }
        v.camera()?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        version: u32,
        #[serde(default)]
        encoding: FrameEncoding,
        #[serde(default)]
        camera: Option<CameraUpdate>,
    },
    SetCamera(CameraUpdate),
    Pin {
        object: u32,
        vertex: usize,
        #[serde(default)]
        position: Option<[f64; 3]>,
    },
    MovePin {
        object: u32,
        vertex: usize,
        target: [f64; 3],
    },
    ReleasePin {
        object: u32,
        vertex: usize,
    },
    TransformObject {
        object: u32,
        #[serde(default)]
        translation: [f64; 3],
        #[serde(default)]
        rotation_deg: [f64; 3],
        #[serde(default = "unit")]
        scale: f64,
        #[serde(default)]
        pivot: Option<[f64; 3]>,
    },
    DeleteObject {
        object: u32,
    },
    AssignMaterial {
        object: u32,
        material: String,
    },
    Pause,
    Resume,
    StepRate {
        hz: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl ClientMessage {
    /// Whether the message changes shared state and so needs editor rights.
    pub fn mutates(&self) -> bool {
        !matches!(self, ClientMessage::Hello { .. } | ClientMessage::SetCamera(_))
    }
}

/// A decoded client message with its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub seq: u64,
    pub message: ClientMessage,
}

/// Why a text frame could not be decoded; `seq` is echoed when readable.
#[derive(Debug, Clone, PartialEq)]
pub struct Malformed {
    pub seq: Option<u64>,
    pub message: String,
}

pub fn decode_request(text: &str) -> Result<Request, Malformed> {
    let value: Value = serde_json::from_str(text).map_err(|e| Malformed { seq: None, message: format!("invalid JSON: {e}") })?;
    let seq = value.get("seq").and_then(Value::as_u64);
    let Some(seq) = seq else {
        return Err(Malformed { seq: None, message: "missing non-negative integer `seq`".into() });
    };
    let message = serde_json::from_value(value).map_err(|e| Malformed { seq: Some(seq), message: e.to_string() })?;
    Ok(Request { seq, message })
}

/// Stable machine-readable error codes.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::InvalidInput(_) => "invalid_input",
        Error::NotFound(_) => "not_found",
        Error::EmptyScene => "empty_scene",
        Error::CatalogMiss(_) => "catalog_miss",
        Error::Parse { .. } => "parse",
        Error::Io { .. } => "io",
        Error::UnsupportedVersion { .. } => "unsupported_version",
        Error::SimulationDiverged(_) => "diverged",
    }
}

pub fn ack(seq: u64, extra: Value) -> String {
    let mut v = json!({ "type": "ack", "seq": seq });
    if let (Some(obj), Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v.to_string()
}

pub fn error(seq: Option<u64>, code: &str, message: &str) -> String {
    json!({ "type": "error", "seq": seq, "code": code, "message": message }).to_string()
}

/// Fixed-size header of a binary frame message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    /// Per-connection frame counter, strictly increasing.
    pub seq: u64,
    /// Version of the simulation snapshot the frame was rendered from.
    pub state_version: u64,
    pub width: u32,
    pub height: u32,
    pub encoding: FrameEncoding,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; FRAME_HEADER_LEN] {
        let mut b = [0u8; FRAME_HEADER_LEN];
        b[0..4].copy_from_slice(&FRAME_MAGIC);
        b[4..12].copy_from_slice(&self.seq.to_le_bytes());
        b[12..20].copy_from_slice(&self.state_version.to_le_bytes());
        b[20..24].copy_from_slice(&self.width.to_le_bytes());
        b[24..28].copy_from_slice(&self.height.to_le_bytes());
        b[28] = self.encoding.code();
        b
    }

    pub fn decode(bytes: &[u8]) -> Option<FrameHeader> {
        if bytes.len() < FRAME_HEADER_LEN || bytes[0..4] != FRAME_MAGIC {
            return None;
        }
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        Some(FrameHeader {
            seq: u64_at(4),
            state_version: u64_at(12),
            width: u32_at(20),
            height: u32_at(24),
            encoding: FrameEncoding::from_code(bytes[28])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_commands_and_ignores_unknown_fields() {
        let r = decode_request(r#"{"type":"move_pin","seq":7,"object":1,"vertex":3,"target":[0,1,2],"extra":true}"#).unwrap();
        assert_eq!(r.seq, 7);
        assert_eq!(r.message, ClientMessage::MovePin { object: 1, vertex: 3, target: [0.0, 1.0, 2.0] });
        let r = decode_request(r#"{"type":"pause","seq":0}"#).unwrap();
        assert_eq!(r.message, ClientMessage::Pause);
        let r = decode_request(r#"{"type":"set_camera","seq":1,"width":64}"#).unwrap();
        assert_eq!(r.message, ClientMessage::SetCamera(CameraUpdate { width: Some(64), ..Default::default() }));
    }

    #[test]
    fn malformed_requests_are_described() {
        assert_eq!(decode_request("{").unwrap_err().seq, None);
        assert_eq!(decode_request(r#"{"type":"pause"}"#).unwrap_err().seq, None);
        let e = decode_request(r#"{"type":"teleport","seq":4}"#).unwrap_err();
        assert_eq!(e.seq, Some(4));
        assert!(e.message.contains("teleport"));
        assert!(decode_request(r#"{"type":"pin","seq":4,"object":1}"#).is_err());
    }

    #[test]
    fn frame_header_round_trips() {
        let h = FrameHeader { seq: u64::MAX - 3, state_version: 9, width: 640, height: 480, encoding: FrameEncoding::Png };
        let b = h.encode();
        assert_eq!(&b[0..4], b"MSFR");
        assert_eq!(FrameHeader::decode(&b), Some(h));
        assert_eq!(FrameHeader::decode(&b[..31]), None);
    }

    #[test]
    fn ack_merges_payload() {
        let v: Value = serde_json::from_str(&ack(3, json!({"role": "editor"}))).unwrap();
        assert_eq!(v, json!({"type": "ack", "seq": 3, "role": "editor"}));
    }

    #[test]
    fn orbit_updates_and_limits() {
        let base = ViewSpec { eye: [0.0, 0.0, 3.0], target: [0.0; 3], up: [0.0, 1.0, 0.0], fov_y: 50.0, width: 64, height: 48 };
        let o = Orbit { target: [0.0; 3], distance: 2.0, azimuth: 90.0, elevation: 0.0 };
        let v = base.updated(&CameraUpdate { orbit: Some(o), ..Default::default() }).unwrap();
        assert!((Vector3::from(v.eye) - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        let bad = CameraUpdate { width: Some(0), ..Default::default() };
        assert!(base.updated(&bad).is_err());
        let bad = CameraUpdate { orbit: Some(Orbit { distance: 0.0, ..o }), ..Default::default() };
        assert!(base.updated(&bad).is_err());
    }
}
