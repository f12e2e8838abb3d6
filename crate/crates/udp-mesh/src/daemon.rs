//! Production runtime: the protocol engine on real UDP sockets.
//!
//! Thread layout: one socket reader, one protocol thread owning the
//! [`Node`], one delivery thread fanning completed messages out to
//! subscribers, and one IPC listener accepting local control/pub-sub
//! connections. Everything crosses between threads through serialized
//! channels; protocol state is never shared mutably.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self};
use std::net::{SocketAddr, UdpSocket};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use thiserror::Error;

use crate::config::DaemonConfig;
use crate::ipc;
use crate::node::{Node, NodeError, NodeEvent, OutAddr, PublishOutcome};
use crate::peers::PeerRecord;
use crate::time::Timestamp;
use crate::topics::{InboundDelivery, TopicConfig, TopicMode};
use crate::wire::NodeId;

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("cannot bind UDP socket {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("cannot bind control socket {path}: {source}")]
    ControlSocket {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("daemon is shutting down")]
    Stopped,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Monotonic wall clock mapped onto protocol [`Timestamp`]s.
#[derive(Debug, Clone, Copy)]
struct Clock {
    start: Instant,
}

impl Clock {
    fn new() -> Clock {
        Clock { start: Instant::now() }
    }

    fn now(&self) -> Timestamp {
        Timestamp::from_nanos(self.start.elapsed().as_nanos() as u64)
    }
}

enum Cmd {
    Datagram { bytes: Vec<u8>, from: SocketAddr },
    Publish { topic: String, payload: Vec<u8>, reply: Sender<Result<PublishOutcome, NodeError>> },
    PublishTo { topic: String, dest: String, payload: Vec<u8>, reply: Sender<Result<u32, NodeError>> },
    SetPriority { topic: String, priority: u8 },
    Reconfigure { topics: Vec<TopicConfig>, reply: Sender<Result<(), NodeError>> },
    Status { reply: Sender<StatusReport> },
    Shutdown,
}

/// One peer line in the status report.
#[derive(Debug, Clone)]
pub struct PeerStatus {
    pub name: String,
    pub state: &'static str,
    pub last_heard_age: Duration,
    pub queued_bytes: u64,
    pub in_flight: usize,
}

/// Machine-parseable daemon status (`key=value` lines via `Display`).
#[derive(Debug, Clone)]
pub struct StatusReport {
    pub name: String,
    pub id: NodeId,
    pub addr: SocketAddr,
    pub uptime: Duration,
    pub peers: Vec<PeerStatus>,
    pub topics: Vec<(String, u8, String)>,
    pub stats: crate::node::NodeStats,
}

impl fmt::Display for StatusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "node name={} id={} addr={} uptime_s={:.3}",
            self.name,
            self.id,
            self.addr,
            self.uptime.as_secs_f64()
        )?;
        for p in &self.peers {
            writeln!(
                f,
                "peer name={} state={} last_heard_age_s={:.3} queued_bytes={} in_flight={}",
                p.name,
                p.state,
                p.last_heard_age.as_secs_f64(),
                p.queued_bytes,
                p.in_flight
            )?;
        }
        for (name, priority, mode) in &self.topics {
            writeln!(f, "topic name={name} priority={priority} mode={mode}")?;
        }
        let s = &self.stats;
        writeln!(
            f,
            "counters data_sent={} data_received={} acks_sent={} acks_received={} \
             retransmits={} heartbeats_sent={} heartbeats_received={} transfers_completed={} \
             transfers_aborted={} messages_delivered={} payload_bytes_sent={} payload_bytes_delivered={} \
             decode_drops={} publishes_rejected={}",
            s.data_sent,
            s.data_received,
            s.acks_sent,
            s.acks_received,
            s.retransmits,
            s.heartbeats_sent,
            s.heartbeats_received,
            s.transfers_completed,
            s.transfers_aborted,
            s.messages_delivered,
            s.payload_bytes_sent,
            s.payload_bytes_delivered,
            s.decode_drops,
            s.publishes_rejected,
        )
    }
}

enum Sink {
    Channel(Sender<InboundDelivery>),
    Stream(UnixStream),
}

/// Topic-filtered delivery fan-out, owned by the delivery thread.
struct DeliveryRouter {
    sinks: Mutex<Vec<(String, Sink)>>,
}

impl DeliveryRouter {
    fn dispatch(&self, delivery: &InboundDelivery) {
        let mut sinks = self.sinks.lock().unwrap();
        sinks.retain_mut(|(topic, sink)| {
            if *topic != delivery.topic {
                return true;
            }
            match sink {
                Sink::Channel(tx) => tx.send(delivery.clone()).is_ok(),
                Sink::Stream(stream) => ipc::write_frame(stream, &ipc::encode_delivery(delivery)).is_ok(),
            }
        });
    }
}

/// Handle to a running daemon. Dropping it shuts the daemon down.
pub struct MeshNode {
    name: String,
    local_addr: SocketAddr,
    control_socket: PathBuf,
    cmd_tx: Sender<Cmd>,
    router: Arc<DeliveryRouter>,
    events_rx: Mutex<Option<Receiver<NodeEvent>>>,
    events_wanted: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl MeshNode {
    /// Bind sockets, start all threads, and begin advertising.
    pub fn spawn(config: DaemonConfig) -> Result<MeshNode, DaemonError> {
        let node = Node::new(config.node.clone())?;
        let socket = UdpSocket::bind(config.bind)
            .map_err(|source| DaemonError::BindFailure { addr: config.bind, source })?;
        if config.broadcast.is_some() {
            socket.set_broadcast(true).map_err(DaemonError::Io)?;
        }
        socket.set_read_timeout(Some(Duration::from_millis(50))).map_err(DaemonError::Io)?;
        let local_addr = socket.local_addr().map_err(DaemonError::Io)?;
        let socket = Arc::new(socket);

        // Stale socket file from a previous run.
        let _ = std::fs::remove_file(&config.control_socket);
        let listener = UnixListener::bind(&config.control_socket)
            .map_err(|source| DaemonError::ControlSocket { path: config.control_socket.clone(), source })?;
        listener.set_nonblocking(true).map_err(DaemonError::Io)?;

        let stop = Arc::new(AtomicBool::new(false));
        let clock = Clock::new();
        let (cmd_tx, cmd_rx) = mpsc::channel::<Cmd>();
        let (delivery_tx, delivery_rx) = mpsc::channel::<InboundDelivery>();
        let (events_tx, events_rx) = mpsc::channel::<NodeEvent>();
        let events_wanted = Arc::new(AtomicBool::new(false));
        let router = Arc::new(DeliveryRouter { sinks: Mutex::new(Vec::new()) });

        let mut threads = Vec::new();

        // Socket reader.
        {
            let socket = Arc::clone(&socket);
            let cmd_tx = cmd_tx.clone();
            let stop = Arc::clone(&stop);
            threads.push(std::thread::Builder::new().name("umesh-reader".into()).spawn(move || {
                let mut buf = [0u8; 2048];
                while !stop.load(Ordering::Relaxed) {
                    match socket.recv_from(&mut buf) {
                        Ok((len, from)) => {
                            let _ = cmd_tx.send(Cmd::Datagram { bytes: buf[..len].to_vec(), from });
                        }
                        Err(e)
                            if e.kind() == io::ErrorKind::WouldBlock
                                || e.kind() == io::ErrorKind::TimedOut => {}
                        Err(e) => {
                            debug!("socket recv error: {e}");
                        }
                    }
                }
            })?);
        }

        // Protocol thread.
        {
            let socket = Arc::clone(&socket);
            let stop = Arc::clone(&stop);
            let events_wanted = Arc::clone(&events_wanted);
            let broadcast = config.broadcast;
            let static_peers = config.static_peers.clone();
            let name = config.node.name.clone();
            threads.push(std::thread::Builder::new().name("umesh-proto".into()).spawn(move || {
                protocol_loop(
                    node,
                    clock,
                    socket,
                    local_addr,
                    broadcast,
                    static_peers,
                    cmd_rx,
                    delivery_tx,
                    events_tx,
                    events_wanted,
                    stop,
                );
                debug!("protocol thread for {name} exited");
            })?);
        }

        // Delivery thread.
        {
            let router = Arc::clone(&router);
            threads.push(std::thread::Builder::new().name("umesh-delivery".into()).spawn(move || {
                while let Ok(delivery) = delivery_rx.recv() {
                    router.dispatch(&delivery);
                }
            })?);
        }

        // IPC listener.
        {
            let cmd_tx = cmd_tx.clone();
            let router = Arc::clone(&router);
            let stop = Arc::clone(&stop);
            threads.push(std::thread::Builder::new().name("umesh-ipc".into()).spawn(move || {
                ipc_listener_loop(listener, cmd_tx, router, stop);
            })?);
        }

        info!("daemon {} listening on {local_addr}", config.node.name);
        Ok(MeshNode {
            name: config.node.name,
            local_addr,
            control_socket: config.control_socket,
            cmd_tx,
            router,
            events_rx: Mutex::new(Some(events_rx)),
            events_wanted,
            stop,
            threads,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn control_socket(&self) -> &PathBuf {
        &self.control_socket
    }

    /// Publish on a configured topic (routing per its mode).
    pub fn publish(&self, topic: &str, payload: Vec<u8>) -> Result<PublishOutcome, DaemonError> {
        let (reply, rx) = mpsc::channel();
        self.cmd_tx
            .send(Cmd::Publish { topic: topic.into(), payload, reply })
            .map_err(|_| DaemonError::Stopped)?;
        rx.recv().map_err(|_| DaemonError::Stopped)?.map_err(DaemonError::Node)
    }

    /// Reliable publish to an explicit destination, returning the
    /// message id.
    pub fn publish_to(&self, topic: &str, dest: &str, payload: Vec<u8>) -> Result<u32, DaemonError> {
        let (reply, rx) = mpsc::channel();
        self.cmd_tx
            .send(Cmd::PublishTo { topic: topic.into(), dest: dest.into(), payload, reply })
            .map_err(|_| DaemonError::Stopped)?;
        rx.recv().map_err(|_| DaemonError::Stopped)?.map_err(DaemonError::Node)
    }

    /// In-process subscription: deliveries for `topic` arrive on the
    /// returned channel in arrival order.
    pub fn subscribe(&self, topic: &str) -> Receiver<InboundDelivery> {
        let (tx, rx) = mpsc::channel();
        self.router.sinks.lock().unwrap().push((topic.to_owned(), Sink::Channel(tx)));
        rx
    }

    /// Transfer and peer events (completion, abort, discovery…). May be
    /// taken once; events before the first call are dropped.
    pub fn take_events(&self) -> Option<Receiver<NodeEvent>> {
        let rx = self.events_rx.lock().unwrap().take();
        if rx.is_some() {
            self.events_wanted.store(true, Ordering::Relaxed);
        }
        rx
    }

    pub fn set_priority(&self, topic: &str, priority: u8) -> Result<(), DaemonError> {
        self.cmd_tx.send(Cmd::SetPriority { topic: topic.into(), priority }).map_err(|_| DaemonError::Stopped)
    }

    pub fn reconfigure(&self, topics: Vec<TopicConfig>) -> Result<(), DaemonError> {
        let (reply, rx) = mpsc::channel();
        self.cmd_tx.send(Cmd::Reconfigure { topics, reply }).map_err(|_| DaemonError::Stopped)?;
        rx.recv().map_err(|_| DaemonError::Stopped)?.map_err(DaemonError::Node)
    }

    pub fn status(&self) -> Result<StatusReport, DaemonError> {
        let (reply, rx) = mpsc::channel();
        self.cmd_tx.send(Cmd::Status { reply }).map_err(|_| DaemonError::Stopped)?;
        rx.recv().map_err(|_| DaemonError::Stopped)
    }

    /// Stop all threads, abort in-flight transfers, remove the control
    /// socket. Idempotent.
    pub fn shutdown(mut self) {
        self.shutdown_inner();
    }

    fn shutdown_inner(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = self.cmd_tx.send(Cmd::Shutdown);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let _ = std::fs::remove_file(&self.control_socket);
        info!("daemon {} stopped", self.name);
    }
}

impl Drop for MeshNode {
    fn drop(&mut self) {
        self.shutdown_inner();
    }
}

#[allow(clippy::too_many_arguments)]
fn protocol_loop(
    mut node: Node,
    clock: Clock,
    socket: Arc<UdpSocket>,
    local_addr: SocketAddr,
    broadcast: Option<SocketAddr>,
    static_peers: Vec<SocketAddr>,
    cmd_rx: Receiver<Cmd>,
    delivery_tx: Sender<InboundDelivery>,
    events_tx: Sender<NodeEvent>,
    events_wanted: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
) {
    let tick = node.reliable_config().tick_interval().min(Duration::from_millis(20));
    let start = Instant::now();
    let mut next_tick = start;
    loop {
        let now_wall = Instant::now();
        if now_wall >= next_tick {
            node.handle_timer(clock.now());
            while next_tick <= now_wall {
                next_tick += tick;
            }
        }
        flush(
            &mut node,
            &socket,
            local_addr,
            broadcast,
            &static_peers,
            &delivery_tx,
            &events_tx,
            &events_wanted,
        );

        let wait = next_tick.saturating_duration_since(Instant::now());
        match cmd_rx.recv_timeout(wait) {
            Ok(Cmd::Datagram { bytes, from }) => {
                node.handle_datagram(&bytes, from, clock.now());
                flush(
                    &mut node,
                    &socket,
                    local_addr,
                    broadcast,
                    &static_peers,
                    &delivery_tx,
                    &events_tx,
                    &events_wanted,
                );
            }
            Ok(Cmd::Publish { topic, payload, reply }) => {
                let _ = reply.send(node.publish(&topic, &payload, clock.now()));
            }
            Ok(Cmd::PublishTo { topic, dest, payload, reply }) => {
                let _ = reply.send(node.publish_to(&topic, &dest, &payload, clock.now()));
            }
            Ok(Cmd::SetPriority { topic, priority }) => node.set_topic_priority(&topic, priority),
            Ok(Cmd::Reconfigure { topics, reply }) => {
                let _ = reply.send(node.reconfigure_topics(&topics).map_err(NodeError::Topic));
            }
            Ok(Cmd::Status { reply }) => {
                let _ = reply.send(status_report(&node, local_addr, start.elapsed(), clock.now()));
            }
            Ok(Cmd::Shutdown) => break,
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }
    }
    // Clean shutdown: abort pending transfers so callers holding the
    // events channel see a definite outcome for every submission.
    node.abort_all();
    while let Some(ev) = node.poll_event() {
        if events_wanted.load(Ordering::Relaxed) {
            let _ = events_tx.send(ev);
        }
    }
}

/// Drain the engine's outbox onto the socket and its events to the other
/// threads.
#[allow(clippy::too_many_arguments)]
fn flush(
    node: &mut Node,
    socket: &UdpSocket,
    local_addr: SocketAddr,
    broadcast: Option<SocketAddr>,
    static_peers: &[SocketAddr],
    delivery_tx: &Sender<InboundDelivery>,
    events_tx: &Sender<NodeEvent>,
    events_wanted: &AtomicBool,
) {
    while let Some(out) = node.poll_transmit() {
        match out.to {
            OutAddr::Unicast(addr) => {
                if let Err(e) = socket.send_to(&out.bytes, addr) {
                    debug!("send to {addr} failed: {e}");
                }
            }
            OutAddr::AllPeers => {
                // Directed broadcast when available, plus unicast fan-out to
                // static and discovered peers (dedup by address).
                let mut targets: BTreeSet<SocketAddr> = static_peers.iter().copied().collect();
                targets.extend(node.peers().known_addrs());
                targets.remove(&local_addr);
                if let Some(addr) = broadcast {
                    targets.insert(addr);
                }
                for addr in targets {
                    if let Err(e) = socket.send_to(&out.bytes, addr) {
                        debug!("broadcast to {addr} failed: {e}");
                    }
                }
            }
        }
    }
    while let Some(ev) = node.poll_event() {
        match ev {
            NodeEvent::Delivery(d) => {
                let _ = delivery_tx.send(d);
            }
            ev => {
                log_event(&ev);
                if events_wanted.load(Ordering::Relaxed) {
                    let _ = events_tx.send(ev);
                }
            }
        }
    }
}

fn log_event(ev: &NodeEvent) {
    match ev {
        NodeEvent::PeerDiscovered { name, id } => info!("discovered peer {name} ({id})"),
        NodeEvent::PeerOnline { name, .. } => info!("peer {name} came online"),
        NodeEvent::PeerOffline { name, .. } => warn!("peer {name} went offline"),
        NodeEvent::TransferAborted { dest, message_id, .. } => {
            warn!("transfer {message_id} to {dest} aborted")
        }
        NodeEvent::TransferComplete { dest, message_id } => {
            debug!("transfer {message_id} to {dest} complete")
        }
        NodeEvent::ReassemblyPurged { source, message_id } => {
            warn!("purged idle partial message {message_id} from {source}")
        }
        NodeEvent::Delivery(_) => {}
    }
}

fn status_report(node: &Node, addr: SocketAddr, uptime: Duration, now: Timestamp) -> StatusReport {
    let peers = node
        .peer_snapshot()
        .into_iter()
        .map(|p: PeerRecord| PeerStatus {
            state: p.state.as_str(),
            last_heard_age: now.since(p.last_heard),
            queued_bytes: node.queued_bytes(p.id),
            in_flight: node.in_flight(p.id),
            name: p.name,
        })
        .collect();
    let topics = node
        .topics()
        .iter()
        .map(|(name, priority, mode)| {
            let mode = match mode {
                TopicMode::Reliable { dest } => format!("reliable dest={dest}"),
                TopicMode::Broadcast => "broadcast".to_owned(),
            };
            (name.to_owned(), priority, mode)
        })
        .collect();
    StatusReport {
        name: node.name().to_owned(),
        id: node.id(),
        addr,
        uptime,
        peers,
        topics,
        stats: node.stats().clone(),
    }
}

fn ipc_listener_loop(
    listener: UnixListener,
    cmd_tx: Sender<Cmd>,
    router: Arc<DeliveryRouter>,
    stop: Arc<AtomicBool>,
) {
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let cmd_tx = cmd_tx.clone();
                let router = Arc::clone(&router);
                let _ = std::thread::Builder::new().name("umesh-ipc-conn".into()).spawn(move || {
                    if let Err(e) = serve_connection(stream, cmd_tx, router) {
                        debug!("ipc connection ended: {e}");
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(25));
            }
            Err(e) => {
                debug!("ipc accept error: {e}");
                std::thread::sleep(Duration::from_millis(100));
            }
        }
    }
}

fn serve_connection(
    mut stream: UnixStream,
    cmd_tx: Sender<Cmd>,
    router: Arc<DeliveryRouter>,
) -> io::Result<()> {
    let Some(first) = ipc::read_frame(&mut stream)? else {
        return Ok(());
    };
    let line = String::from_utf8_lossy(&first).into_owned();
    let mut parts = line.split_whitespace();
    let verb = parts.next().unwrap_or_default().to_owned();
    match verb.as_str() {
        "pub" => {
            let Some(topic) = parts.next() else {
                ipc::write_frame(&mut stream, b"err usage: pub <topic>")?;
                return Ok(());
            };
            while let Some(payload) = ipc::read_frame(&mut stream)? {
                let (reply, rx) = mpsc::channel();
                if cmd_tx.send(Cmd::Publish { topic: topic.into(), payload, reply }).is_err() {
                    ipc::write_frame(&mut stream, b"err daemon stopping")?;
                    return Ok(());
                }
                match rx.recv() {
                    Ok(Ok(_)) => ipc::write_frame(&mut stream, b"ok")?,
                    Ok(Err(e)) => ipc::write_frame(&mut stream, format!("err {e}").as_bytes())?,
                    Err(_) => {
                        ipc::write_frame(&mut stream, b"err daemon stopping")?;
                        return Ok(());
                    }
                }
            }
        }
        "sub" => {
            let Some(topic) = parts.next() else {
                ipc::write_frame(&mut stream, b"err usage: sub <topic>")?;
                return Ok(());
            };
            // Register the stream itself; the delivery thread writes the
            // frames. This thread is done.
            router.sinks.lock().unwrap().push((topic.to_owned(), Sink::Stream(stream)));
        }
        "status" => {
            let (reply, rx) = mpsc::channel();
            if cmd_tx.send(Cmd::Status { reply }).is_ok() {
                if let Ok(report) = rx.recv() {
                    ipc::write_frame(&mut stream, report.to_string().as_bytes())?;
                }
            }
        }
        "set-priority" => {
            let (topic, prio) = (parts.next(), parts.next().and_then(|p| p.parse::<u8>().ok()));
            match (topic, prio) {
                (Some(topic), Some(priority)) => {
                    let _ = cmd_tx.send(Cmd::SetPriority { topic: topic.into(), priority });
                    ipc::write_frame(&mut stream, b"ok")?;
                }
                _ => ipc::write_frame(&mut stream, b"err usage: set-priority <topic> <0-255>")?,
            }
        }
        _ => ipc::write_frame(&mut stream, format!("err unknown command {verb:?}").as_bytes())?,
    }
    Ok(())
}
