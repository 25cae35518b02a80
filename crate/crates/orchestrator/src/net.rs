//! Networked workers: length-prefixed JSON messages over TCP.
//!
//! Every request travels on its own connection as a big-endian `u32` byte
//! length followed by a JSON body, and is answered the same way.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use modecal_core::hyperband::{StopDecision, TrialStatus};
use modecal_core::sim::Scenario;
use serde::{Deserialize, Serialize};

use crate::coordinator::{Assignment, CoordError, Coordinator, Evaluation, HEARTBEAT_INTERVAL_SECS};
use crate::evaluate::Evaluator;

const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error("bad message: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(u32),
    #[error("master replied with an error: {0}")]
    Rejected(String),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error(transparent)]
    Coordinator(#[from] CoordError),
    #[error("cannot load the scenario: {0}")]
    Scenario(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Register {
        address: String,
    },
    RequestJob {
        worker: String,
    },
    Intermediate {
        worker: String,
        trial: u64,
        iteration: u64,
        l1: f64,
    },
    Result {
        worker: String,
        trial: u64,
        evaluation: Evaluation,
    },
    Heartbeat {
        worker: String,
    },
    Deregister {
        worker: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Registered {
        worker: String,
        scenario: Box<Scenario>,
        check_iteration: u64,
        heartbeat_secs: f64,
    },
    Job {
        assignment: Assignment,
    },
    Wait {
        retry_ms: u64,
    },
    Shutdown,
    Decision {
        decision: StopDecision,
    },
    Ack {
        accepted: bool,
    },
    Error {
        message: String,
    },
}

pub fn write_frame<T: Serialize>(stream: &mut impl Write, msg: &T) -> Result<(), NetError> {
    let body = serde_json::to_vec(msg)?;
    let len = u32::try_from(body.len()).map_err(|_| NetError::FrameTooLarge(u32::MAX))?;
    if len > MAX_FRAME {
        return Err(NetError::FrameTooLarge(len));
    }
    stream.write_all(&len.to_be_bytes())?;
    stream.write_all(&body)?;
    stream.flush()?;
    Ok(())
}

pub fn read_frame<T: for<'de> Deserialize<'de>>(stream: &mut impl Read) -> Result<T, NetError> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(NetError::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    stream.read_exact(&mut body)?;
    Ok(serde_json::from_slice(&body)?)
}

/// Sends one request and waits for its reply.
pub fn call(addr: &str, request: &Request) -> Result<Reply, NetError> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(60)))?;
    write_frame(&mut stream, request)?;
    read_frame(&mut stream)
}

#[derive(Clone, Debug)]
pub struct MasterOptions {
    /// run-clock minutes per wall-clock minute
    pub time_scale: f64,
    /// run clock at start, for resumed runs
    pub start_minutes: f64,
    pub heartbeat_secs: f64,
    /// idle workers poll again after this long
    pub retry_ms: u64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions {
            time_scale: 1.0,
            start_minutes: 0.0,
            heartbeat_secs: HEARTBEAT_INTERVAL_SECS,
            retry_ms: 200,
        }
    }
}

struct Shared {
    coord: Mutex<Coordinator>,
    scenario: Scenario,
    opts: MasterOptions,
    started: Instant,
}

impl Shared {
    fn wall_secs(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn run_minutes(&self) -> f64 {
        self.opts.start_minutes + self.wall_secs() / 60.0 * self.opts.time_scale
    }

    fn handle(&self, request: Request) -> Reply {
        let mut coord = self.coord.lock().expect("coordinator lock");
        let now_secs = self.wall_secs();
        let now = self.run_minutes();
        if let Some(worker) = request_worker(&request) {
            if let Err(e) = coord.heartbeat(worker, now_secs) {
                return Reply::Error { message: e.to_string() };
            }
        }
        let result = match request {
            Request::Register { address } => {
                let worker = coord.register(&address, now_secs);
                log::info!("worker {worker} joined from {address}");
                Ok(Reply::Registered {
                    worker,
                    scenario: Box::new(self.scenario.clone()),
                    check_iteration: coord.rule().check_iteration,
                    heartbeat_secs: self.opts.heartbeat_secs,
                })
            }
            Request::RequestJob { worker } => match coord.request_job(&worker, now) {
                Ok(Some(assignment)) => Ok(Reply::Job { assignment }),
                Ok(None) if coord.is_finished() => Ok(Reply::Shutdown),
                Ok(None) => Ok(Reply::Wait {
                    retry_ms: self.opts.retry_ms,
                }),
                Err(e) => Err(e),
            },
            Request::Intermediate {
                worker,
                trial,
                iteration,
                l1,
            } => coord
                .intermediate(&worker, trial, iteration, l1, now)
                .map(|decision| Reply::Decision { decision }),
            Request::Result {
                worker,
                trial,
                evaluation,
            } => coord
                .complete(&worker, trial, evaluation, now)
                .map(|accepted| Reply::Ack { accepted }),
            Request::Heartbeat { .. } => Ok(Reply::Ack { accepted: true }),
            Request::Deregister { worker } => coord.deregister(&worker).map(|_| Reply::Ack { accepted: true }),
        };
        result.unwrap_or_else(|e| {
            if matches!(e, CoordError::Journal(_)) {
                log::error!("{e}");
            }
            Reply::Error { message: e.to_string() }
        })
    }
}

fn request_worker(request: &Request) -> Option<&str> {
    match request {
        Request::Register { .. } => None,
        Request::RequestJob { worker }
        | Request::Intermediate { worker, .. }
        | Request::Result { worker, .. }
        | Request::Heartbeat { worker }
        | Request::Deregister { worker } => Some(worker),
    }
}

/// Serves workers on `listener` until the run is finished and every worker
/// has been told to shut down (or has gone silent). Returns the final
/// coordinator.
pub fn serve(
    coord: Coordinator,
    listener: TcpListener,
    scenario: Scenario,
    opts: MasterOptions,
) -> Result<Coordinator, NetError> {
    listener.set_nonblocking(true)?;
    let shared = Arc::new(Shared {
        coord: Mutex::new(coord),
        scenario,
        opts,
        started: Instant::now(),
    });
    log::info!("master listening on {}", listener.local_addr()?);
    let mut last_reap = Instant::now();
    loop {
        match listener.accept() {
            Ok((stream, peer)) => {
                let shared = Arc::clone(&shared);
                thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, &shared) {
                        log::warn!("connection from {peer}: {e}");
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(e.into()),
        }
        if last_reap.elapsed().as_secs_f64() >= shared.opts.heartbeat_secs.min(1.0) {
            last_reap = Instant::now();
            let mut coord = shared.coord.lock().expect("coordinator lock");
            coord.reap(shared.wall_secs(), shared.opts.heartbeat_secs)?;
            let live = coord
                .workers()
                .values()
                .filter(|w| w.state != crate::coordinator::WorkerState::Lost)
                .count();
            if coord.is_finished() && live == 0 {
                break;
            }
        }
    }
    // let in-flight handlers finish with the lock
    drop(shared.coord.lock().expect("coordinator lock"));
    let shared = wait_unique(shared);
    Ok(shared.coord.into_inner().expect("coordinator lock"))
}

fn wait_unique(mut shared: Arc<Shared>) -> Shared {
    loop {
        match Arc::try_unwrap(shared) {
            Ok(s) => return s,
            Err(s) => {
                shared = s;
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
}

fn serve_connection(mut stream: TcpStream, shared: &Shared) -> Result<(), NetError> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let request: Request = match read_frame(&mut stream) {
        Ok(r) => r,
        Err(e) => {
            let _ = write_frame(&mut stream, &Reply::Error { message: e.to_string() });
            return Err(e);
        }
    };
    let reply = shared.handle(request);
    write_frame(&mut stream, &reply)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkerStats {
    pub worker: String,
    pub trials: usize,
}

/// Joins the master at `addr` and evaluates jobs until told to shut down.
pub fn run_worker(addr: &str) -> Result<WorkerStats, NetError> {
    let local = addr
        .to_socket_addrs()?
        .next()
        .map(|a| a.to_string())
        .unwrap_or_else(|| addr.to_string());
    let (worker, scenario, check_iteration, heartbeat_secs) = match call(
        addr,
        &Request::Register {
            address: format!("pid {} -> {local}", std::process::id()),
        },
    )? {
        Reply::Registered {
            worker,
            scenario,
            check_iteration,
            heartbeat_secs,
        } => (worker, scenario, check_iteration, heartbeat_secs),
        other => return Err(unexpected(other)),
    };
    log::info!("registered as {worker}");
    let evaluator = Evaluator::new(*scenario, check_iteration).map_err(|e| NetError::Scenario(e.to_string()))?;

    let stop = Arc::new(AtomicBool::new(false));
    let beat = {
        let stop = Arc::clone(&stop);
        let addr = addr.to_string();
        let worker = worker.clone();
        thread::spawn(move || {
            let step = Duration::from_millis(50);
            let mut since = Instant::now();
            while !stop.load(Ordering::Relaxed) {
                thread::sleep(step);
                if since.elapsed().as_secs_f64() >= heartbeat_secs {
                    since = Instant::now();
                    if let Err(e) = call(&addr, &Request::Heartbeat { worker: worker.clone() }) {
                        log::warn!("heartbeat failed: {e}");
                    }
                }
            }
        })
    };
    let result = work_loop(addr, &worker, &evaluator);
    stop.store(true, Ordering::Relaxed);
    let _ = beat.join();
    result.map(|trials| WorkerStats { worker, trials })
}

fn work_loop(addr: &str, worker: &str, evaluator: &Evaluator) -> Result<usize, NetError> {
    let mut trials = 0;
    loop {
        match call(addr, &Request::RequestJob { worker: worker.into() })? {
            Reply::Job { assignment } => {
                let mut failure = None;
                let evaluation = evaluator.evaluate(&assignment, |iteration, l1| {
                    let request = Request::Intermediate {
                        worker: worker.into(),
                        trial: assignment.trial,
                        iteration,
                        l1,
                    };
                    match call(addr, &request) {
                        Ok(Reply::Decision { decision }) => decision,
                        Ok(other) => {
                            failure = Some(unexpected(other));
                            StopDecision::Continue
                        }
                        Err(e) => {
                            failure = Some(e);
                            StopDecision::Continue
                        }
                    }
                });
                if let Some(e) = failure {
                    return Err(e);
                }
                if evaluation.status == TrialStatus::Failed {
                    log::warn!("trial {} failed: {:?}", assignment.trial, evaluation.diagnostic);
                }
                let request = Request::Result {
                    worker: worker.into(),
                    trial: assignment.trial,
                    evaluation,
                };
                match call(addr, &request)? {
                    Reply::Ack { .. } => trials += 1,
                    other => return Err(unexpected(other)),
                }
            }
            Reply::Wait { retry_ms } => thread::sleep(Duration::from_millis(retry_ms)),
            Reply::Shutdown => {
                call(addr, &Request::Deregister { worker: worker.into() })?;
                log::info!("{worker} done after {trials} trials");
                return Ok(trials);
            }
            other => return Err(unexpected(other)),
        }
    }
}

fn unexpected(reply: Reply) -> NetError {
    match reply {
        Reply::Error { message } => NetError::Rejected(message),
        other => NetError::Unexpected(format!("{other:?}")),
    }
}
