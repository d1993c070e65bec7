//! Operator command line. Every subcommand is a thin adapter over the
//! library; `run` is the whole program minus process exit.
//!
//! Exit status: 0 success, 1 validation or input error, 2 transport error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assurance::read_trace_csv;
use crate::control::service::{request, serve, spawn_local_agents, Master};
use crate::control::{ControlConfig, ControlPlane, SchedulingPolicy};
use crate::metrics::{load_pipeline_inputs, rank_metrics, read_targets_csv, write_ranking_csv, write_targets_csv, PipelineConfig};
use crate::model::{validate_job, JobSpec, Network, WorkerNode};
use crate::protocol::{Message, ProtocolError};
use crate::sim::{self, SimScenario};

pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";

#[derive(Debug, Parser)]
#[command(name = "mcorch", about = "Mixed-criticality orchestrator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the master, with simulated agents for the configured nodes.
    Serve {
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
        /// Cluster configuration (nodes, networks, policy).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Submit a job specification.
    Submit {
        jobspec: PathBuf,
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
    },
    /// Delete a job or deployment.
    Delete {
        job: String,
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
    },
    /// List worker nodes.
    Nodes {
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
    },
    /// List jobs.
    Jobs {
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
    },
    /// List replica deployments.
    Deployments {
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
    },
    /// Run a simulation scenario. Prints the report unless --report is given.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the metric trace CSV here.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Write the latency/slack target CSV here.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Rank metrics against latency and slack; CSV on standard output.
    RankMetrics {
        traces: PathBuf,
        targets: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long, default_value_t = 4)]
        exponent: u32,
        #[arg(long, default_value_t = 0.5)]
        wl: f64,
        #[arg(long, default_value_t = 0.5)]
        ws: f64,
        #[arg(long, default_value_t = 0.95)]
        redundancy_threshold: f64,
    },
}

/// Cluster configuration file for `serve`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClusterConfig {
    #[serde(default)]
    pub nodes: Vec<WorkerNode>,
    #[serde(default)]
    pub networks: Vec<Network>,
    #[serde(default)]
    pub policy: SchedulingPolicy,
    #[serde(default)]
    pub control: ControlConfig,
}

struct Failure {
    code: i32,
    body: serde_json::Value,
}

fn input_error(kind: &str, message: impl ToString) -> Failure {
    Failure { code: 1, body: json!({ "error": kind, "message": message.to_string() }) }
}

fn transport(e: ProtocolError) -> Failure {
    Failure { code: 2, body: json!({ "error": "transport", "message": e.to_string() }) }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let f = File::open(path).map_err(|e| input_error("input", format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| input_error("parse", format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| input_error("output", format!("{}: {e}", path.display())))
}

fn call(addr: &str, msg: &Message) -> Result<Message, Failure> {
    match request(addr, msg).map_err(transport)? {
        Message::Error(e) => {
            let code = if matches!(e.kind, crate::protocol::ErrorKind::Protocol) { 2 } else { 1 };
            Err(Failure { code, body: serde_json::to_value(&e).unwrap() })
        }
        reply => Ok(reply),
    }
}

fn unexpected(reply: Message) -> Failure {
    Failure { code: 2, body: json!({ "error": "transport", "message": format!("unexpected reply {reply:?}") }) }
}

fn fmt_util(u: &[crate::model::Rational]) -> String {
    let parts: Vec<String> = u.iter().map(|r| format!("{:.3}", r.to_f64())).collect();
    format!("[{}]", parts.join(", "))
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| input_error("output", e);
    match cmd {
        Command::Serve { addr, config } => {
            let cfg: ClusterConfig = match config {
                Some(p) => read_json(&p)?,
                None => ClusterConfig::default(),
            };
            let beat = std::time::Duration::from_micros((cfg.control.heartbeat_timeout / 5).max(1_000));
            let mut plane = ControlPlane::new(cfg.policy, cfg.control);
            let ids: Vec<String> = cfg.nodes.iter().map(|n| n.id.clone()).collect();
            for n in cfg.networks {
                plane.state.add_network(n).map_err(|e| input_error("validation", e))?;
            }
            for n in cfg.nodes {
                plane.state.register_node(n, 0).map_err(|e| input_error("validation", e))?;
            }
            let listener = TcpListener::bind(&addr).map_err(|e| transport(e.into()))?;
            writeln!(out, "listening on {}", listener.local_addr().map_err(io)?).map_err(io)?;
            let master = Master::new(plane);
            spawn_local_agents(master.clone(), ids, beat);
            serve(listener, master).map_err(|e| transport(e.into()))
        }
        Command::Submit { jobspec, addr } => {
            let spec: JobSpec = read_json(&jobspec)?;
            let violations = validate_job(&spec);
            if !violations.is_empty() {
                return Err(Failure {
                    code: 1,
                    body: json!({ "error": "validation", "message": "job specification is invalid", "violations": violations }),
                });
            }
            match call(&addr, &Message::Submit(spec))? {
                Message::Accepted(ids) => {
                    for id in ids {
                        writeln!(out, "{id}").map_err(io)?;
                    }
                    Ok(())
                }
                other => Err(unexpected(other)),
            }
        }
        Command::Delete { job, addr } => match call(&addr, &Message::Delete(job))? {
            Message::Accepted(ids) => {
                for id in ids {
                    writeln!(out, "{id}").map_err(io)?;
                }
                Ok(())
            }
            other => Err(unexpected(other)),
        },
        Command::Nodes { addr } => match call(&addr, &Message::GetNodes)? {
            Message::Nodes(nodes) => {
                writeln!(out, "{:<12} {:<12} {:<3} {:>9}  per-core util", "id", "platform", "rt", "assurance").map_err(io)?;
                for n in nodes {
                    writeln!(
                        out,
                        "{:<12} {:<12} {:<3} {:>9}  {}",
                        n.id,
                        n.platform,
                        if n.rt_capable { "yes" } else { "no" },
                        n.effective_assurance,
                        fmt_util(&n.per_core_utilization)
                    )
                    .map_err(io)?;
                }
                Ok(())
            }
            other => Err(unexpected(other)),
        },
        Command::Jobs { addr } => match call(&addr, &Message::GetJobs)? {
            Message::Jobs(jobs) => {
                writeln!(out, "{:<16} {:<4} {:<8} {:<12} server", "name", "crit", "status", "node").map_err(io)?;
                for j in jobs {
                    let server = j.allocation.map_or("-".to_string(), |a| format!("core{} {}/{}", a.core, a.budget, a.period));
                    let status = serde_json::to_value(j.status).unwrap();
                    writeln!(
                        out,
                        "{:<16} {:<4} {:<8} {:<12} {}",
                        j.name,
                        j.criticality.to_string(),
                        status.as_str().unwrap_or(""),
                        j.node.unwrap_or_else(|| "-".into()),
                        server
                    )
                    .map_err(io)?;
                }
                Ok(())
            }
            other => Err(unexpected(other)),
        },
        Command::Deployments { addr } => match call(&addr, &Message::GetDeployments)? {
            Message::Deployments(deps) => {
                for d in deps {
                    writeln!(out, "{} leader={} backups={} tmr={}", d.name, d.leader, d.backups.join(","), d.tmr).map_err(io)?;
                }
                Ok(())
            }
            other => Err(unexpected(other)),
        },
        Command::Simulate { scenario, report, traces, targets } => {
            let s: SimScenario = read_json(&scenario)?;
            let r = sim::run(&s).map_err(|e| input_error("scenario", e))?;
            if let Some(p) = traces {
                crate::assurance::write_trace_csv(create(&p)?, &r.traces).map_err(|e| input_error("output", e))?;
            }
            if let Some(p) = targets {
                write_targets_csv(create(&p)?, &r.targets).map_err(|e| input_error("output", e))?;
            }
            match report {
                Some(p) => {
                    create(&p)?.write_all(r.to_json().as_bytes()).map_err(io)?;
                    for e in &r.timeline {
                        writeln!(out, "{} {}", e.at, serde_json::to_string(&e.event).unwrap()).map_err(io)?;
                    }
                    writeln!(out, "misses={} violations={}", r.misses.len(), r.violations.len()).map_err(io)?;
                }
                None => writeln!(out, "{}", r.to_json()).map_err(io)?,
            }
            Ok(())
        }
        Command::RankMetrics { traces, targets, window, exponent, wl, ws, redundancy_threshold } => {
            let open = |p: &Path| File::open(p).map_err(|e| input_error("input", format!("{}: {e}", p.display())));
            let trace = read_trace_csv(open(&traces)?).map_err(|e| input_error("input", e))?;
            let target = read_targets_csv(open(&targets)?).map_err(|e| input_error("input", e))?;
            let inputs = load_pipeline_inputs(&trace, &target).map_err(|e| input_error("input", e))?;
            let cfg = PipelineConfig { window, exponent, weight_latency: wl, weight_slack: ws, redundancy_threshold };
            let ranking =
                rank_metrics(&inputs.metrics, &inputs.latency, &inputs.slack, &cfg).map_err(|e| input_error("validation", e))?;
            write_ranking_csv(out, &ranking).map_err(|e| input_error("output", e))
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "{}", f.body);
            f.code
        }
    }
}
