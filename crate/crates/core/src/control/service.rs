//! TCP front end for the control plane. One thread per connection; the
//! plane sits behind a mutex so all writes are serialized.

use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::{ControlAction, ControlError, ControlPlane};
use crate::model::{Micros, NodeId};
use crate::protocol::{read_frame, write_frame, ErrorKind, Message, ProtocolError, WireError};

/// Shared master state: the plane plus per-node outboxes.
pub struct Master {
    plane: Mutex<(ControlPlane, BTreeMap<NodeId, Vec<Message>>)>,
    epoch: Instant,
}

impl Master {
    pub fn new(plane: ControlPlane) -> Arc<Self> {
        Arc::new(Master { plane: Mutex::new((plane, BTreeMap::new())), epoch: Instant::now() })
    }

    fn now(&self) -> Micros {
        self.epoch.elapsed().as_micros() as Micros
    }

    pub fn snapshot(&self) -> ControlPlane {
        self.plane.lock().unwrap().0.clone()
    }

    /// Handles one request and returns the reply.
    pub fn handle(&self, msg: Message) -> Message {
        let now = self.now();
        let mut guard = self.plane.lock().unwrap();
        let (plane, outbox) = &mut *guard;
        let mut dispatch = |actions: Vec<ControlAction>| {
            for a in actions {
                let node = match &a {
                    ControlAction::Deploy { node, .. } | ControlAction::Evict { node, .. } => node.clone(),
                    ControlAction::SlotGrant(_) => continue,
                };
                outbox.entry(node).or_default().push(a.into());
            }
        };
        match msg {
            Message::Register(node) => {
                let id = node.id.clone();
                match plane.state.register_node(node, now) {
                    Ok(()) => {
                        dispatch(plane.reconcile(now, &[]).actions);
                        Message::Accepted(vec![id])
                    }
                    Err(e) => error_reply(e),
                }
            }
            Message::Submit(spec) => match plane.submit(spec) {
                Ok(ids) => {
                    dispatch(plane.reconcile(now, &[]).actions);
                    Message::Accepted(ids)
                }
                Err(e) => error_reply(e),
            },
            Message::Delete(name) => {
                let placed: Vec<_> = plane.state.placements.iter().map(|(j, p)| (j.clone(), p.node.clone())).collect();
                match plane.delete(&name) {
                    Ok(ids) => {
                        for (j, n) in placed.into_iter().filter(|(j, _)| ids.contains(j)) {
                            outbox.entry(n.clone()).or_default().push(Message::Evict { job: j, node: n });
                        }
                        Message::Accepted(ids)
                    }
                    Err(e) => error_reply(e),
                }
            }
            Message::GetNodes => Message::Nodes(plane.nodes()),
            Message::GetJobs => Message::Jobs(plane.jobs()),
            Message::GetDeployments => Message::Deployments(plane.deployments()),
            m => match m.as_report() {
                Some(report) => {
                    let node = match &report {
                        crate::control::NodeReport::Heartbeat { node, .. }
                        | crate::control::NodeReport::Migrate { node, .. }
                        | crate::control::NodeReport::Killed { node, .. } => node.clone(),
                    };
                    dispatch(plane.reconcile(now, &[report]).actions);
                    Message::Actions(outbox.remove(&node).unwrap_or_default())
                }
                None => Message::Error(WireError {
                    kind: ErrorKind::Protocol,
                    message: "unexpected message for the master".into(),
                    violations: Vec::new(),
                }),
            },
        }
    }
}

fn error_reply(e: ControlError) -> Message {
    let (kind, violations) = match &e {
        ControlError::Invalid(v) => (ErrorKind::Validation, v.clone()),
        ControlError::UnknownJob(_) => (ErrorKind::NotFound, Vec::new()),
        ControlError::DuplicateJob(_) | ControlError::DuplicateNode(_) => (ErrorKind::Conflict, Vec::new()),
    };
    Message::Error(WireError { kind, message: e.to_string(), violations })
}

fn serve_conn(master: Arc<Master>, mut stream: TcpStream) {
    loop {
        let msg = match read_frame(&mut stream) {
            Ok(m) => m,
            Err(ProtocolError::Io(_)) => return,
            Err(e) => {
                let reply = Message::Error(WireError { kind: ErrorKind::Protocol, message: e.to_string(), violations: Vec::new() });
                let _ = write_frame(&mut stream, &reply);
                return;
            }
        };
        if write_frame(&mut stream, &master.handle(msg)).is_err() {
            return;
        }
    }
}

/// Accepts connections until the listener fails.
pub fn serve(listener: TcpListener, master: Arc<Master>) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let m = Arc::clone(&master);
        std::thread::spawn(move || serve_conn(m, stream));
    }
    Ok(())
}

/// Sends one request and waits for the reply.
pub fn request<A: ToSocketAddrs>(addr: A, msg: &Message) -> Result<Message, ProtocolError> {
    let mut stream = TcpStream::connect(addr)?;
    write_frame(&mut stream, msg)?;
    read_frame(&mut stream)
}

/// Runs in-process simulated agents for `nodes`: each heartbeats every
/// `period` and applies the Deploy/Evict actions it gets back.
pub fn spawn_local_agents(master: Arc<Master>, nodes: Vec<NodeId>, period: std::time::Duration) {
    std::thread::spawn(move || {
        let mut running: BTreeMap<NodeId, std::collections::BTreeSet<String>> =
            nodes.iter().map(|n| (n.clone(), Default::default())).collect();
        loop {
            for node in &nodes {
                let (util, effective) = {
                    let guard = master.plane.lock().unwrap();
                    match guard.0.state.nodes.get(node) {
                        Some(n) => (n.rt.per_core_utilization(), n.spec.assurance.effective()),
                        None => continue,
                    }
                };
                let jobs = running.get_mut(node).unwrap();
                let hb = Message::Heartbeat {
                    node: node.clone(),
                    at: master.now(),
                    per_core_utilization: util,
                    effective_assurance: effective,
                    running: jobs.iter().cloned().collect(),
                };
                if let Message::Actions(actions) = master.handle(hb) {
                    for a in actions {
                        match a {
                            Message::Deploy { job, .. } => {
                                jobs.insert(job);
                            }
                            Message::Evict { job, .. } => {
                                jobs.remove(&job);
                            }
                            _ => {}
                        }
                    }
                }
            }
            std::thread::sleep(period);
        }
    });
}
