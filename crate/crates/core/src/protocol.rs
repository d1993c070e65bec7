//! Wire protocol between node agents, the master and clients.
//!
//! Every frame is a big-endian `u32` byte length followed by one JSON
//! encoded [`Message`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::admission::{AdmissionRequest, AdmissionResponse, Allocation};
use crate::control::{ControlAction, DeploymentView, JobView, NodeReport, NodeView};
use crate::model::{JobId, JobSpec, Micros, NodeId, Rational, Violation, WorkerNode};
use crate::net::SlotGrant;

/// Frames above this size are rejected before allocation.
pub const MAX_FRAME: u32 = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body")]
pub enum Message {
    Register(WorkerNode),
    Heartbeat {
        node: NodeId,
        at: Micros,
        per_core_utilization: Vec<Rational>,
        effective_assurance: i64,
        running: Vec<JobId>,
    },
    AdmissionRequest(AdmissionRequest),
    AdmissionResponse(AdmissionResponse),
    Deploy { job: JobId, node: NodeId, spec: JobSpec, allocation: Option<Allocation> },
    Evict { job: JobId, node: NodeId },
    KillJob { node: NodeId, job: JobId },
    GammaDowngrade { node: NodeId, delta: i64 },
    MigrateRequest { node: NodeId, jobs: Vec<JobId> },
    SlotGrant(SlotGrant),
    /// Actions queued for a node, sent in reply to its reports.
    Actions(Vec<Message>),

    Submit(JobSpec),
    Delete(String),
    GetNodes,
    GetJobs,
    GetDeployments,
    Nodes(Vec<NodeView>),
    Jobs(Vec<JobView>),
    Deployments(Vec<DeploymentView>),
    Accepted(Vec<JobId>),
    Error(WireError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Protocol,
}

impl From<ControlAction> for Message {
    fn from(a: ControlAction) -> Self {
        match a {
            ControlAction::Deploy { job, node, spec, allocation } => Message::Deploy { job, node, spec, allocation },
            ControlAction::Evict { job, node } => Message::Evict { job, node },
            ControlAction::SlotGrant(g) => Message::SlotGrant(g),
        }
    }
}

impl Message {
    /// The report carried by an agent message, if any.
    pub fn as_report(&self) -> Option<NodeReport> {
        match self.clone() {
            Message::Heartbeat { node, at, per_core_utilization, effective_assurance, running } => {
                Some(NodeReport::Heartbeat { node, at, per_core_utilization, effective_assurance, running })
            }
            Message::MigrateRequest { node, jobs } => Some(NodeReport::Migrate { node, jobs }),
            Message::KillJob { node, job } => Some(NodeReport::Killed { node, job }),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("messages always serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Message, ProtocolError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(ProtocolError::TooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(serde_json::from_slice(&body)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Criticality;

    #[test]
    fn frame_round_trip() {
        let msgs = vec![
            Message::GetNodes,
            Message::Submit(JobSpec::best_effort("j", Criticality::Low)),
            Message::MigrateRequest { node: "a".into(), jobs: vec!["h".into()] },
            Message::Actions(vec![Message::Evict { job: "x".into(), node: "a".into() }]),
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_frame(&mut buf, m).unwrap();
        }
        let mut cur = buf.as_slice();
        for m in &msgs {
            assert_eq!(&read_frame(&mut cur).unwrap(), m);
        }
        assert!(read_frame(&mut cur).is_err());
    }

    #[test]
    fn header_is_big_endian_length() {
        let bytes = encode(&Message::GetJobs);
        let body = br#"{"type":"GetJobs"}"#;
        assert_eq!(&bytes[..4], &(body.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], body);
    }

    #[test]
    fn oversized_frame_rejected() {
        let mut bytes = (MAX_FRAME + 1).to_be_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        assert!(matches!(read_frame(&mut bytes.as_slice()), Err(ProtocolError::TooLarge(_))));
    }
}
