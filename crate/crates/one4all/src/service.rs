//! Executor host: accepts plans over TCP, validates them against its own
//! schemas, queues them per robot, executes serially per robot, and serves
//! post-completion reports on request.
//!
//! Every outbound frame answers exactly one inbound frame; the service never
//! pushes. Reports for unknown or still-executing missions say `unknown` —
//! a mission only gains a status once it finished.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::executor::{run, MissionStatus, RobotBackend, RunnerConfig};
use crate::plan::MissionPlan;
use crate::schema::ActionPool;
use crate::sim::SimWorld;
use crate::validator::{render_error_log, validate};
use crate::wire::{encode, FrameDecoder, Message, ReportStatus};

pub type BackendFactory = Box<dyn Fn(&ActionPool, &SimWorld) -> Box<dyn RobotBackend + Send> + Send>;

/// One robot the service can execute for: its schema, a pristine world
/// template cloned per mission, and a backend constructor.
pub struct RobotHost {
    pub pool: ActionPool,
    pub world: SimWorld,
    pub make_backend: BackendFactory,
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Every mission runs on a fresh world clone reset to this seed, so a
    /// given plan always produces the same trace.
    pub seed: u64,
    /// When set, each finished mission's trace lands here as
    /// `<mission_id>.ndjson`.
    pub trace_dir: Option<PathBuf>,
    pub runner: RunnerConfig,
}

enum MissionRecord {
    Queued,
    Done { status: MissionStatus, trace_ndjson: String },
}

type MissionMap = Arc<Mutex<HashMap<String, MissionRecord>>>;
type QueueMap = Arc<HashMap<String, Mutex<Sender<MissionPlan>>>>;

/// Running service; dropping or stopping it ends the accept loop.
pub struct ServiceHandle {
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    local_addr: std::net::SocketAddr,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.local_addr
    }

    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    /// Block until the accept loop exits (serve-forever mode).
    pub fn join(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind and start serving. Fails when the address is unavailable.
pub fn serve(
    addr: impl ToSocketAddrs,
    hosts: Vec<RobotHost>,
    config: ServiceConfig,
) -> std::io::Result<ServiceHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;

    let missions: MissionMap = Arc::new(Mutex::new(HashMap::new()));
    let pools: Arc<Vec<ActionPool>> = Arc::new(hosts.iter().map(|h| h.pool.clone()).collect());

    let mut queues = HashMap::new();
    for host in hosts {
        let (tx, rx) = channel::<MissionPlan>();
        let robot_id = host.pool.robot_id.clone();
        queues.insert(robot_id, Mutex::new(tx));
        spawn_worker(host, rx, Arc::clone(&missions), config.clone());
    }
    let queues: QueueMap = Arc::new(queues);

    let shutdown = Arc::new(AtomicBool::new(false));
    let accept_shutdown = Arc::clone(&shutdown);
    let accept_thread = std::thread::spawn(move || {
        accept_loop(listener, accept_shutdown, pools, queues, missions);
    });

    Ok(ServiceHandle { shutdown, accept_thread: Some(accept_thread), local_addr })
}

fn spawn_worker(
    host: RobotHost,
    rx: Receiver<MissionPlan>,
    missions: MissionMap,
    config: ServiceConfig,
) {
    std::thread::spawn(move || {
        // Serial execution per robot: one mission at a time, each on a fresh
        // world reset to the configured seed.
        while let Ok(plan) = rx.recv() {
            let mut world = host.world.clone();
            world.reset(config.seed);
            let mut backend = (host.make_backend)(&host.pool, &world);
            let trace = run(&plan, backend.as_mut(), &mut world, &config.runner);
            let ndjson = crate::executor::trace_to_ndjson(&trace);
            if let Some(dir) = &config.trace_dir {
                let _ = std::fs::create_dir_all(dir);
                let _ = std::fs::write(dir.join(format!("{}.ndjson", trace.mission_id)), &ndjson);
            }
            missions.lock().expect("mission map lock").insert(
                trace.mission_id.clone(),
                MissionRecord::Done { status: trace.final_status, trace_ndjson: ndjson },
            );
        }
    });
}

fn accept_loop(
    listener: TcpListener,
    shutdown: Arc<AtomicBool>,
    pools: Arc<Vec<ActionPool>>,
    queues: QueueMap,
    missions: MissionMap,
) {
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let pools = Arc::clone(&pools);
                let queues = Arc::clone(&queues);
                let missions = Arc::clone(&missions);
                let shutdown = Arc::clone(&shutdown);
                std::thread::spawn(move || {
                    handle_connection(stream, shutdown, pools, queues, missions)
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(std::time::Duration::from_millis(5));
            }
            Err(_) => break,
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    shutdown: Arc<AtomicBool>,
    pools: Arc<Vec<ActionPool>>,
    queues: QueueMap,
    missions: MissionMap,
) {
    // Short read timeout so idle handlers notice shutdown.
    let _ = stream.set_read_timeout(Some(std::time::Duration::from_millis(100)));
    let mut decoder = FrameDecoder::new();
    let mut chunk = [0u8; 4096];
    loop {
        let msg = loop {
            match decoder.push(&[]) {
                Ok(Some(m)) => break Some(m),
                Ok(None) => {}
                Err(e) => {
                    // Undecodable request; answer once and drop the link.
                    let reply = Message::Ack {
                        mission_id: String::new(),
                        accepted: false,
                        reason: Some(e.to_string()),
                    };
                    let _ = stream.write_all(&encode(&reply));
                    return;
                }
            }
            match stream.read(&mut chunk) {
                Ok(0) => break None,
                Ok(n) => match decoder.push(&chunk[..n]) {
                    Ok(Some(m)) => break Some(m),
                    Ok(None) => {}
                    Err(e) => {
                        let reply = Message::Ack {
                            mission_id: String::new(),
                            accepted: false,
                            reason: Some(e.to_string()),
                        };
                        let _ = stream.write_all(&encode(&reply));
                        return;
                    }
                },
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut =>
                {
                    if shutdown.load(Ordering::SeqCst) {
                        return;
                    }
                }
                Err(_) => break None,
            }
        };
        let Some(msg) = msg else { return };
        let reply = respond(msg, &pools, &queues, &missions);
        if stream.write_all(&encode(&reply)).is_err() {
            return;
        }
    }
}

fn respond(msg: Message, pools: &[ActionPool], queues: &QueueMap, missions: &MissionMap) -> Message {
    match msg {
        Message::SubmitPlan { mission_id, plan_xml, .. } => {
            submit(mission_id, &plan_xml, pools, queues, missions)
        }
        Message::FetchReport { mission_id } => {
            let map = missions.lock().expect("mission map lock");
            match map.get(&mission_id) {
                Some(MissionRecord::Done { status, trace_ndjson }) => Message::Report {
                    mission_id,
                    status: match status {
                        MissionStatus::Completed => ReportStatus::Completed,
                        MissionStatus::Failed => ReportStatus::Failed,
                    },
                    trace: trace_ndjson.clone(),
                },
                // Queued, running, or never seen: no status yet.
                _ => Message::Report {
                    mission_id,
                    status: ReportStatus::Unknown,
                    trace: String::new(),
                },
            }
        }
        other => Message::Ack {
            mission_id: other.mission_id().to_string(),
            accepted: false,
            reason: Some("unexpected message type".to_string()),
        },
    }
}

fn submit(
    mission_id: String,
    plan_xml: &str,
    pools: &[ActionPool],
    queues: &QueueMap,
    missions: &MissionMap,
) -> Message {
    let (plan, report) = validate(plan_xml, pools);
    let Some(plan) = plan else {
        return Message::Ack {
            mission_id,
            accepted: false,
            reason: Some(render_error_log(&report)),
        };
    };
    if plan.mission_id != mission_id {
        let reason = format!(
            "frame mission_id {:?} does not match plan id {:?}",
            mission_id, plan.mission_id
        );
        return Message::Ack { mission_id, accepted: false, reason: Some(reason) };
    }
    {
        let mut map = missions.lock().expect("mission map lock");
        if map.contains_key(&mission_id) {
            return Message::Ack {
                mission_id,
                accepted: false,
                reason: Some("mission id already submitted".to_string()),
            };
        }
        map.insert(mission_id.clone(), MissionRecord::Queued);
    }
    let queue = queues.get(&plan.robot_id).expect("validated robot has a queue");
    match queue.lock().expect("queue lock").send(plan) {
        Ok(()) => Message::Ack { mission_id, accepted: true, reason: None },
        Err(_) => {
            missions.lock().expect("mission map lock").remove(&mission_id);
            Message::Ack {
                mission_id,
                accepted: false,
                reason: Some("robot worker is gone".to_string()),
            }
        }
    }
}
