//! Live session server.
//!
//! One simulation thread owns the [`Session`]. It applies queued commands
//! between frames, steps at a fixed rate and publishes immutable snapshots.
//! Each client has a connection thread (socket I/O) and a render thread
//! that renders the newest snapshot from the client's camera into a
//! single-slot mailbox, so slow clients skip frames instead of queueing them.
//! A command is acknowledged only after the snapshot containing its effect
//! is published, and frames older than that snapshot are never sent after
//! the ack.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use meshsplat::io::object_transform;
use meshsplat::raster::render_fast;
use meshsplat::session::Session;
use meshsplat::{Error, SplatScene};
use nalgebra::Vector3;
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use crate::protocol::{self, ClientMessage, FrameEncoding, FrameHeader, Request, ViewSpec, PROTOCOL_VERSION};

pub const DEFAULT_RATE_HZ: f64 = 60.0;
pub const DEFAULT_STATS_HZ: f64 = 10.0;
/// Protocol violations tolerated before a client is disconnected.
pub const MAX_STRIKES: u32 = 3;
pub const MAX_RATE_HZ: f64 = 1000.0;
const POLL: Duration = Duration::from_millis(2);
const RENDER_WAIT: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Simulation frames per wall-clock second.
    pub rate_hz: f64,
    /// `sim_stats` broadcasts per second.
    pub stats_hz: f64,
    /// Initial camera for new clients; framed on the scene when absent.
    pub default_view: Option<ViewSpec>,
    /// Start with the simulation paused.
    pub paused: bool,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions { rate_hz: DEFAULT_RATE_HZ, stats_hz: DEFAULT_STATS_HZ, default_view: None, paused: false }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("invalid server option: {0}")]
    Option(String),
}

/// Immutable state handed to renderers.
struct Snapshot {
    version: u64,
    scene: Arc<SplatScene>,
    /// `(object, vertex count)` per simulated body.
    bodies: Vec<(u32, usize)>,
    time: f64,
}

enum Outbound {
    Text(String),
    /// An acknowledgement whose effect is visible from `state_version` on.
    Ack { text: String, state_version: u64 },
}

struct SimRequest {
    client: u64,
    request: Request,
}

struct Shared {
    stop: AtomicBool,
    snapshot: Mutex<Arc<Snapshot>>,
    /// Signalled on snapshot publication and on any client view change.
    changed: Condvar,
    editor: Mutex<Option<u64>>,
    outboxes: Mutex<BTreeMap<u64, Sender<Outbound>>>,
    materials: Vec<String>,
    default_view: ViewSpec,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn publish(&self, snapshot: Snapshot) {
        *lock(&self.snapshot) = Arc::new(snapshot);
        self.changed.notify_all();
    }

    fn current(&self) -> Arc<Snapshot> {
        lock(&self.snapshot).clone()
    }

    fn send_to(&self, client: u64, msg: Outbound) {
        if let Some(tx) = lock(&self.outboxes).get(&client) {
            let _ = tx.send(msg);
        }
    }

    fn broadcast(&self, text: &str) {
        for tx in lock(&self.outboxes).values() {
            let _ = tx.send(Outbound::Text(text.to_string()));
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops all threads and waits for them.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn stop_and_join(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.changed.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// View framing the whole scene.
pub fn framing_view(scene: &SplatScene, width: u32, height: u32) -> ViewSpec {
    let (center, radius) = match scene.bounds() {
        Some(b) => (b.center(), (0.5 * b.diagonal()).max(1e-3)),
        None => (Vector3::zeros(), 1.0),
    };
    let orbit = protocol::Orbit { target: center.into(), distance: 2.2 * radius, azimuth: 30.0, elevation: 20.0 };
    ViewSpec { eye: orbit.eye().into(), target: center.into(), up: [0.0, 1.0, 0.0], fov_y: 50.0, width, height }
}

fn snapshot_of(session: &Session, version: u64) -> Snapshot {
    Snapshot {
        version,
        scene: Arc::new(session.scene.clone()),
        bodies: session.bodies.iter().map(|b| (b.object_id, b.sim.state.len())).collect(),
        time: session.time(),
    }
}

/// Binds `addr` and starts serving `session`.
pub fn start(session: Session, addr: impl ToSocketAddrs + std::fmt::Debug, options: ServerOptions) -> Result<ServerHandle, ServerError> {
    if !(options.rate_hz > 0.0 && options.rate_hz <= MAX_RATE_HZ) {
        return Err(ServerError::Option(format!("rate {} Hz outside (0, {MAX_RATE_HZ}]", options.rate_hz)));
    }
    if !(options.stats_hz > 0.0 && options.stats_hz.is_finite()) {
        return Err(ServerError::Option(format!("stats rate {} Hz must be positive", options.stats_hz)));
    }
    let addr_text = format!("{addr:?}");
    let listener = TcpListener::bind(addr).map_err(|source| ServerError::Bind { addr: addr_text.clone(), source })?;
    listener.set_nonblocking(true).map_err(|source| ServerError::Bind { addr: addr_text.clone(), source })?;
    let local = listener.local_addr().map_err(|source| ServerError::Bind { addr: addr_text, source })?;

    let default_view = options.default_view.unwrap_or_else(|| framing_view(&session.scene, 640, 480));
    let shared = Arc::new(Shared {
        stop: AtomicBool::new(false),
        snapshot: Mutex::new(Arc::new(snapshot_of(&session, 1))),
        changed: Condvar::new(),
        editor: Mutex::new(None),
        outboxes: Mutex::new(BTreeMap::new()),
        materials: session.catalog.names().map(str::to_string).collect(),
        default_view,
    });
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let sim = {
        let shared = shared.clone();
        let options = options.clone();
        thread::Builder::new().name("sim".into()).spawn(move || sim_loop(session, shared, cmd_rx, options)).expect("spawn sim thread")
    };
    let accept = {
        let shared = shared.clone();
        thread::Builder::new().name("accept".into()).spawn(move || accept_loop(listener, shared, cmd_tx)).expect("spawn accept thread")
    };
    log::info!("serving on ws://{local}");
    Ok(ServerHandle { addr: local, shared, threads: vec![sim, accept] })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, commands: Sender<SimRequest>) {
    let next_id = AtomicU64::new(1);
    let mut clients = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let shared = shared.clone();
                let commands = commands.clone();
                let spawned = thread::Builder::new().name(format!("client-{id}")).spawn(move || {
                    if let Err(e) = serve_client(id, stream, shared, commands) {
                        log::debug!("client {id} ({peer}): {e}");
                    }
                });
                match spawned {
                    Ok(h) => clients.push(h),
                    Err(e) => log::error!("cannot spawn client thread: {e}"),
                }
                clients.retain(|h: &JoinHandle<()>| !h.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
    for h in clients {
        let _ = h.join();
    }
}

struct SimControl {
    paused: bool,
    rate_hz: f64,
}

fn vec3(v: Vector3<f64>) -> [f64; 3] {
    v.into()
}

/// Applies one mutating command; returns the ack payload.
fn apply(session: &mut Session, control: &mut SimControl, message: &ClientMessage) -> meshsplat::Result<Value> {
    Ok(match message {
        ClientMessage::Pin { object, vertex, position } => {
            session.pin(*object, *vertex, position.map(Vector3::from))?;
            let anchor = session.body(*object)?.sim.pins().into_iter().find(|(v, _)| v == vertex).map(|(_, a)| vec3(a));
            json!({ "anchor": anchor })
        }
        ClientMessage::MovePin { object, vertex, target } => {
            session.move_pin(*object, *vertex, Vector3::from(*target), 0.0)?;
            json!({ "anchor": target })
        }
        ClientMessage::ReleasePin { object, vertex } => {
            session.release(*object, *vertex)?;
            json!({})
        }
        ClientMessage::TransformObject { object, translation, rotation_deg, scale, pivot } => {
            let t = object_transform(*translation, *rotation_deg, *scale, *pivot);
            let pivot = session.transform_object(*object, &t)?;
            session.apply_bindings()?;
            json!({ "pivot": vec3(pivot) })
        }
        ClientMessage::DeleteObject { object } => {
            session.delete_object(*object)?;
            json!({ "objects": session.scene.object_ids() })
        }
        ClientMessage::AssignMaterial { object, material } => {
            let name = session.assign_material(*object, Some(material), None)?;
            json!({ "material": name })
        }
        ClientMessage::Pause => {
            control.paused = true;
            json!({ "paused": true })
        }
        ClientMessage::Resume => {
            control.paused = false;
            json!({ "paused": false })
        }
        ClientMessage::StepRate { hz } => {
            if !(*hz > 0.0 && *hz <= MAX_RATE_HZ) {
                return Err(Error::InvalidParameter(format!("step rate {hz} Hz outside (0, {MAX_RATE_HZ}]")));
            }
            control.rate_hz = *hz;
            json!({ "rate_hz": hz })
        }
        ClientMessage::Hello { .. } | ClientMessage::SetCamera(_) => {
            return Err(Error::InvalidInput("handled by the connection".into()));
        }
    })
}

fn stats(session: &Session, control: &SimControl, version: u64, sim_ms: f64, bind_ms: f64) -> String {
    let pins: Vec<Value> = session
        .bodies
        .iter()
        .flat_map(|b| {
            b.sim.pins().into_iter().map(move |(v, a)| {
                json!({ "object": b.object_id, "vertex": v, "anchor": vec3(a), "position": vec3(b.sim.positions()[v]) })
            })
        })
        .collect();
    let bodies: Vec<Value> = session
        .bodies
        .iter()
        .map(|b| json!({ "object": b.object_id, "material": b.material, "max_speed": b.max_speed() }))
        .collect();
    json!({
        "type": "sim_stats",
        "time": session.time(),
        "frame": session.frame,
        "state_version": version,
        "paused": control.paused,
        "rate_hz": control.rate_hz,
        "sim_ms": sim_ms,
        "bind_ms": bind_ms,
        "pins": pins,
        "bodies": bodies,
    })
    .to_string()
}

fn sim_loop(mut session: Session, shared: Arc<Shared>, commands: Receiver<SimRequest>, options: ServerOptions) {
    let mut control = SimControl { paused: options.paused, rate_hz: options.rate_hz };
    let mut version = shared.current().version;
    let mut next_tick = Instant::now();
    let mut next_stats = Instant::now();
    let (mut sim_ms, mut bind_ms) = (0.0, 0.0);
    let mut pending = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        let due = now >= next_tick;
        if !due {
            // Commands are applied as they arrive, between frames.
            match commands.recv_timeout((next_tick - now).min(Duration::from_millis(5))) {
                Ok(r) => pending.push(r),
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => thread::sleep(POLL),
            }
        }
        pending.extend(commands.try_iter());
        let mut replies = Vec::new();
        let mut changed = false;
        for SimRequest { client, request } in pending.drain(..) {
            let result = apply(&mut session, &mut control, &request.message);
            changed |= result.is_ok();
            replies.push((client, request.seq, result));
        }
        if due {
            next_tick = (next_tick + Duration::from_secs_f64(1.0 / control.rate_hz)).max(now);
            if !control.paused {
                match session.step_frame() {
                    Ok(t) => {
                        (sim_ms, bind_ms) = (t.sim_ms, t.bind_ms);
                        changed |= !session.bodies.is_empty();
                    }
                    Err(e) => {
                        control.paused = true;
                        log::error!("{e}; simulation paused");
                        shared.broadcast(&protocol::error(None, protocol::error_code(&e), &format!("{e}; simulation paused")));
                    }
                }
            }
        }
        if changed {
            version += 1;
            shared.publish(snapshot_of(&session, version));
        }
        for (client, seq, result) in replies {
            let msg = match result {
                Ok(mut payload) => {
                    payload["state_version"] = json!(version);
                    Outbound::Ack { text: protocol::ack(seq, payload), state_version: version }
                }
                Err(e) => Outbound::Text(protocol::error(Some(seq), protocol::error_code(&e), &e.to_string())),
            };
            shared.send_to(client, msg);
        }
        let now = Instant::now();
        if now >= next_stats {
            shared.broadcast(&stats(&session, &control, version, sim_ms, bind_ms));
            next_stats = now + Duration::from_secs_f64(1.0 / options.stats_hz);
        }
    }
}

/// Per-client view state shared with its render thread.
struct ClientView {
    spec: ViewSpec,
    revision: u64,
    encoding: FrameEncoding,
}

struct RenderedFrame {
    state_version: u64,
    width: u32,
    height: u32,
    encoding: FrameEncoding,
    payload: Vec<u8>,
}

struct ClientShared {
    view: Mutex<ClientView>,
    slot: Mutex<Option<RenderedFrame>>,
    closed: AtomicBool,
}

fn render_loop(shared: Arc<Shared>, client: Arc<ClientShared>) {
    let mut last = (0u64, u64::MAX);
    loop {
        let snapshot = {
            let mut guard = lock(&shared.snapshot);
            loop {
                if shared.stop.load(Ordering::SeqCst) || client.closed.load(Ordering::SeqCst) {
                    return;
                }
                let rev = lock(&client.view).revision;
                if (guard.version, rev) != last {
                    break guard.clone();
                }
                guard = shared.changed.wait_timeout(guard, RENDER_WAIT).unwrap_or_else(|e| e.into_inner()).0;
            }
        };
        let (spec, rev, encoding) = {
            let v = lock(&client.view);
            (v.spec, v.revision, v.encoding)
        };
        last = (snapshot.version, rev);
        let Ok(camera) = spec.camera() else { continue };
        let image = render_fast(&snapshot.scene, &camera);
        let payload = match encoding {
            FrameEncoding::Raw => image.to_display_rgba(),
            FrameEncoding::Png => {
                let mut out = Vec::new();
                if let Err(e) = image.write_png(&mut out) {
                    log::error!("png encode failed: {e}");
                    continue;
                }
                out
            }
        };
        *lock(&client.slot) = Some(RenderedFrame {
            state_version: snapshot.version,
            width: image.width,
            height: image.height,
            encoding,
            payload,
        });
    }
}

fn hello_payload(shared: &Shared, role: &str, view: &ViewSpec) -> Value {
    let snap = shared.current();
    json!({
        "protocol_version": PROTOCOL_VERSION,
        "role": role,
        "state_version": snap.version,
        "time": snap.time,
        "objects": snap.scene.object_ids(),
        "bodies": snap.bodies.iter().map(|(o, n)| json!({ "object": o, "vertices": n })).collect::<Vec<_>>(),
        "materials": shared.materials,
        "camera": view,
    })
}

struct Connection {
    id: u64,
    shared: Arc<Shared>,
    commands: Sender<SimRequest>,
    client: Arc<ClientShared>,
    greeted: bool,
    editor: bool,
    strikes: u32,
    frame_seq: u64,
    /// Frames rendered from older snapshots are not sent.
    min_version: u64,
    renderer: Option<JoinHandle<()>>,
}

enum Flow {
    Continue,
    Close,
}

impl Connection {
    fn strike(&mut self, ws: &mut WebSocket<TcpStream>, seq: Option<u64>, code: &str, message: &str) -> tungstenite::Result<Flow> {
        self.strikes += 1;
        ws.send(Message::text(protocol::error(seq, code, message)))?;
        if self.strikes >= MAX_STRIKES {
            ws.send(Message::text(protocol::error(None, "disconnected", "too many protocol violations")))?;
            return Ok(Flow::Close);
        }
        Ok(Flow::Continue)
    }

    fn handle_text(&mut self, ws: &mut WebSocket<TcpStream>, text: &str) -> tungstenite::Result<Flow> {
        let request = match protocol::decode_request(text) {
            Ok(r) => r,
            Err(m) => return self.strike(ws, m.seq, "malformed", &m.message),
        };
        let seq = request.seq;
        match &request.message {
            ClientMessage::Hello { version, encoding, camera } => {
                if self.greeted {
                    ws.send(Message::text(protocol::error(Some(seq), "invalid_input", "hello already received")))?;
                    return Ok(Flow::Continue);
                }
                if *version != PROTOCOL_VERSION {
                    let msg = format!("unsupported protocol version {version} (server speaks {PROTOCOL_VERSION})");
                    ws.send(Message::text(protocol::error(Some(seq), "unsupported_version", &msg)))?;
                    return Ok(Flow::Close);
                }
                let spec = match camera {
                    Some(u) => match self.shared.default_view.updated(u) {
                        Ok(s) => s,
                        Err(e) => {
                            ws.send(Message::text(protocol::error(Some(seq), protocol::error_code(&e), &e.to_string())))?;
                            return Ok(Flow::Continue);
                        }
                    },
                    None => self.shared.default_view,
                };
                {
                    let mut editor = lock(&self.shared.editor);
                    if editor.is_none() {
                        *editor = Some(self.id);
                        self.editor = true;
                    }
                }
                {
                    let mut v = lock(&self.client.view);
                    v.spec = spec;
                    v.encoding = *encoding;
                    v.revision += 1;
                }
                self.greeted = true;
                let role = if self.editor { "editor" } else { "viewer" };
                ws.send(Message::text(protocol::ack(seq, hello_payload(&self.shared, role, &spec))))?;
                let (shared, client) = (self.shared.clone(), self.client.clone());
                self.renderer = Some(
                    thread::Builder::new()
                        .name(format!("render-{}", self.id))
                        .spawn(move || render_loop(shared, client))
                        .expect("spawn render thread"),
                );
            }
            _ if !self.greeted => return self.strike(ws, Some(seq), "hello_required", "send hello first"),
            ClientMessage::SetCamera(update) => {
                let current = lock(&self.client.view).spec;
                match current.updated(update) {
                    Ok(spec) => {
                        {
                            let mut v = lock(&self.client.view);
                            v.spec = spec;
                            v.revision += 1;
                        }
                        // A frame for the old view must not follow this ack.
                        *lock(&self.client.slot) = None;
                        let _guard = lock(&self.shared.snapshot);
                        self.shared.changed.notify_all();
                        ws.send(Message::text(protocol::ack(seq, json!({ "camera": spec }))))?;
                    }
                    Err(e) => ws.send(Message::text(protocol::error(Some(seq), protocol::error_code(&e), &e.to_string())))?,
                }
            }
            m if m.mutates() && !self.editor => {
                ws.send(Message::text(protocol::error(Some(seq), "read_only", "another client holds editor rights")))?;
            }
            _ => {
                if self.commands.send(SimRequest { client: self.id, request }).is_err() {
                    ws.send(Message::text(protocol::error(Some(seq), "shutting_down", "simulation stopped")))?;
                    return Ok(Flow::Close);
                }
            }
        }
        Ok(Flow::Continue)
    }

    fn flush_outbound(&mut self, ws: &mut WebSocket<TcpStream>, outbox: &Receiver<Outbound>) -> tungstenite::Result<()> {
        while let Ok(msg) = outbox.try_recv() {
            match msg {
                Outbound::Text(t) => ws.send(Message::text(t))?,
                Outbound::Ack { text, state_version } => {
                    self.min_version = self.min_version.max(state_version);
                    ws.send(Message::text(text))?;
                }
            }
        }
        if self.greeted {
            let frame = {
                let mut slot = lock(&self.client.slot);
                match slot.as_ref() {
                    Some(f) if f.state_version >= self.min_version => slot.take(),
                    Some(_) => {
                        *slot = None;
                        None
                    }
                    None => None,
                }
            };
            if let Some(f) = frame {
                self.frame_seq += 1;
                let header = FrameHeader {
                    seq: self.frame_seq,
                    state_version: f.state_version,
                    width: f.width,
                    height: f.height,
                    encoding: f.encoding,
                };
                let mut bytes = Vec::with_capacity(protocol::FRAME_HEADER_LEN + f.payload.len());
                bytes.extend_from_slice(&header.encode());
                bytes.extend_from_slice(&f.payload);
                ws.send(Message::binary(bytes))?;
            }
        }
        Ok(())
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.client.closed.store(true, Ordering::SeqCst);
        self.shared.changed.notify_all();
        lock(&self.shared.outboxes).remove(&self.id);
        if self.editor {
            let mut editor = lock(&self.shared.editor);
            if *editor == Some(self.id) {
                *editor = None;
            }
        }
        if let Some(h) = self.renderer.take() {
            let _ = h.join();
        }
    }
}

fn serve_client(id: u64, stream: TcpStream, shared: Arc<Shared>, commands: Sender<SimRequest>) -> tungstenite::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    let (tx, outbox) = mpsc::channel();
    lock(&shared.outboxes).insert(id, tx);
    let mut conn = Connection {
        id,
        shared: shared.clone(),
        commands,
        client: Arc::new(ClientShared {
            view: Mutex::new(ClientView { spec: shared.default_view, revision: 0, encoding: FrameEncoding::Raw }),
            slot: Mutex::new(None),
            closed: AtomicBool::new(false),
        }),
        greeted: false,
        editor: false,
        strikes: 0,
        frame_seq: 0,
        min_version: 0,
        renderer: None,
    };
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if let Flow::Close = conn.handle_text(&mut ws, t.as_str())? {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
            Ok(Message::Binary(_)) => {
                if let Flow::Close = conn.strike(&mut ws, None, "malformed", "binary messages are not accepted")? {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        conn.flush_outbound(&mut ws, &outbox)?;
        match ws.flush() {
            Ok(()) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
}
