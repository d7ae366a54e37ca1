//! Live teleoperation service: one simulation loop, any number of websocket
//! clients. Frames go out through a bounded queue per client and are dropped
//! for clients that fall behind; commands from all clients share one inbox.

use std::io::{ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TryRecvError, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use hsa_core::planner::Workspace;
use hsa_core::simulator::{
    ClosedLoop, CommandInbox, CommandSourceConfig, InboxSource, LogWriter, Scenario,
};
use tungstenite::{Message, WebSocket};

use crate::wire::{parse_command, RenderFrame, ServerMessage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    /// Render frames per second of simulated time.
    pub frame_rate: f64,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Frames buffered per client before new ones are dropped.
    pub client_buffer: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            frame_rate: 18.0,
            speed: 1.0,
            client_buffer: 4,
        }
    }
}

/// Counters readable while the service runs.
#[derive(Debug, Default)]
pub struct ServiceStats {
    pub frames: AtomicU64,
    pub dropped: AtomicU64,
    pub clients: AtomicU64,
    pub rejected: AtomicU64,
}

struct Client {
    tx: SyncSender<Arc<str>>,
}

type Clients = Arc<Mutex<Vec<Client>>>;

pub struct Service {
    addr: SocketAddr,
    inbox: CommandInbox,
    stop: Arc<AtomicBool>,
    stats: Arc<ServiceStats>,
    sim: Option<JoinHandle<Result<()>>>,
    accept: Option<JoinHandle<()>>,
}

impl Service {
    /// Starts the loop and the listener. The scenario's command source is
    /// replaced by the shared inbox.
    pub fn start(
        scenario: &Scenario,
        workspace: Workspace,
        listener: TcpListener,
        opts: ServeOptions,
        log_sink: Option<Box<dyn Write + Send>>,
    ) -> Result<Self> {
        anyhow::ensure!(
            opts.frame_rate > 0.0 && opts.speed > 0.0,
            "frame rate and speed must be positive"
        );
        anyhow::ensure!(
            opts.client_buffer > 0,
            "client buffer must hold at least one frame"
        );
        let mut sc = scenario.clone();
        sc.command = CommandSourceConfig::Inbox;
        let inbox = CommandInbox::new();
        let boundary: Vec<[f64; 2]> = workspace.boundary.iter().map(|p| [p[0], p[1]]).collect();
        let lp = ClosedLoop::new(
            &sc,
            Some(workspace),
            Some(Box::new(InboxSource::new(inbox.clone()))),
        )?;

        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(ServiceStats::default());
        let clients: Clients = Arc::default();

        let sim = {
            let (stop, stats, clients) = (stop.clone(), stats.clone(), clients.clone());
            thread::Builder::new()
                .name("sim".into())
                .spawn(move || simulate(lp, boundary, opts, log_sink, &stop, &stats, &clients))?
        };
        let accept = {
            let (stop, stats, inbox) = (stop.clone(), stats.clone(), inbox.clone());
            thread::Builder::new()
                .name("accept".into())
                .spawn(move || accept_loop(listener, opts, &stop, &stats, &clients, &inbox))?
        };
        log::info!("serving on ws://{addr}");
        Ok(Self {
            addr,
            inbox,
            stop,
            stats,
            sim: Some(sim),
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// The queue client commands land in.
    pub fn inbox(&self) -> &CommandInbox {
        &self.inbox
    }

    pub fn stats(&self) -> &ServiceStats {
        &self.stats
    }

    /// Blocks until the simulation reaches the scenario duration.
    pub fn wait(mut self) -> Result<()> {
        let res = self.sim.take().map(join).unwrap_or(Ok(()));
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        res
    }

    pub fn shutdown(self) -> Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        self.wait()
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

fn join(h: JoinHandle<Result<()>>) -> Result<()> {
    h.join()
        .map_err(|_| anyhow::anyhow!("simulation thread panicked"))?
}

fn wall_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn broadcast(clients: &Clients, msg: Arc<str>, stats: &ServiceStats) {
    let mut list = clients.lock().expect("client list poisoned");
    list.retain(|c| match c.tx.try_send(msg.clone()) {
        Ok(()) => true,
        Err(TrySendError::Full(_)) => {
            stats.dropped.fetch_add(1, Ordering::Relaxed);
            true
        }
        Err(TrySendError::Disconnected(_)) => false,
    });
    stats.clients.store(list.len() as u64, Ordering::Relaxed);
}

fn simulate(
    mut lp: ClosedLoop,
    boundary: Vec<[f64; 2]>,
    opts: ServeOptions,
    log_sink: Option<Box<dyn Write + Send>>,
    stop: &AtomicBool,
    stats: &ServiceStats,
    clients: &Clients,
) -> Result<()> {
    let mut log = log_sink.map(LogWriter::new).transpose()?;
    let start = Instant::now();
    let mut seq = 0u64;
    while !stop.load(Ordering::SeqCst) && !lp.is_finished() {
        let t = seq as f64 / opts.frame_rate;
        if let Err(e) = lp.advance_to(t) {
            broadcast(
                clients,
                ServerMessage::error(format!("simulation stopped: {e}"))
                    .to_json()
                    .into(),
                stats,
            );
            return Err(e).context("simulation failed");
        }
        let rows = lp.take_log();
        lp.take_commands();
        if let Some(w) = log.as_mut() {
            w.write(&rows)?;
            w.flush()?;
        }
        let frame = RenderFrame::new(&lp.snapshot(), lp.plant(), &boundary, seq, wall_ms());
        broadcast(clients, ServerMessage::Frame(frame).to_json().into(), stats);
        stats.frames.fetch_add(1, Ordering::Relaxed);
        seq += 1;
        let due = start + Duration::from_secs_f64(seq as f64 / (opts.frame_rate * opts.speed));
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
    }
    Ok(())
}

fn accept_loop(
    listener: TcpListener,
    opts: ServeOptions,
    stop: &Arc<AtomicBool>,
    stats: &Arc<ServiceStats>,
    clients: &Clients,
    inbox: &CommandInbox,
) {
    let mut handlers: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (tx, rx) = sync_channel(opts.client_buffer);
                let (stop, stats, inbox) = (stop.clone(), stats.clone(), inbox.clone());
                let spawned =
                    thread::Builder::new()
                        .name(format!("client {peer}"))
                        .spawn(move || {
                            if let Err(e) = client_loop(stream, rx, &stop, &stats, &inbox) {
                                log::debug!("client {peer}: {e}");
                            }
                        });
                match spawned {
                    Ok(h) => {
                        clients
                            .lock()
                            .expect("client list poisoned")
                            .push(Client { tx });
                        handlers.push(h);
                    }
                    Err(e) => log::warn!("could not start client thread: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => log::warn!("accept failed: {e}"),
        }
        handlers.retain(|h| !h.is_finished());
    }
    for h in handlers {
        let _ = h.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn client_loop(
    stream: TcpStream,
    frames: Receiver<Arc<str>>,
    stop: &AtomicBool,
    stats: &ServiceStats,
    inbox: &CommandInbox,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> =
        tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake: {e}"))?;
    ws.get_ref()
        .set_read_timeout(Some(Duration::from_millis(5)))?;
    ws.get_ref()
        .set_write_timeout(Some(Duration::from_millis(5)))?;
    // Set while the socket has not taken the last frame; no new frames are
    // pulled until it drains, so the bounded queue overflows instead.
    let mut pending = false;
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        if pending {
            match ws.flush() {
                Ok(()) => pending = false,
                Err(e) if is_timeout(&e) => {}
                Err(e) => return Err(e.into()),
            }
        }
        while !pending {
            match frames.try_recv() {
                Ok(text) => match ws.send(Message::text(text.as_ref())) {
                    Ok(()) => {}
                    Err(e) if is_timeout(&e) => pending = true,
                    Err(e) => return Err(e.into()),
                },
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply =
                    parse_command(&text).and_then(|cmd| inbox.push(cmd).map_err(|e| e.to_string()));
                if let Err(msg) = reply {
                    stats.rejected.fetch_add(1, Ordering::Relaxed);
                    reply_error(&mut ws, msg, &mut pending)?;
                }
            }
            Ok(Message::Binary(_)) => {
                stats.rejected.fetch_add(1, Ordering::Relaxed);
                reply_error(&mut ws, "expected a JSON text frame".into(), &mut pending)?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn reply_error(ws: &mut WebSocket<TcpStream>, msg: String, pending: &mut bool) -> Result<()> {
    match ws.send(Message::text(ServerMessage::error(msg).to_json())) {
        Ok(()) => Ok(()),
        Err(e) if is_timeout(&e) => {
            *pending = true;
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}
