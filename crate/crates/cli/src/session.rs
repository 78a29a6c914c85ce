//! Message handling for live sessions, independent of the transport.
//!
//! Every request is one JSON envelope `{type, session, seq, payload}`, and
//! every request gets exactly one reply carrying the same `seq`.

use std::collections::HashMap;

use scd_core::belief::DynamicsVariant;
use scd_core::freespace::Phase;
use scd_core::model::{Action, UNIT_TOL};
use scd_core::scenario::{Coord, PolicySpec, Scenario, ScenarioFile};
use scd_core::sim::{Simulation, StepRecord};
use scd_core::{Error, Violation};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Horizon given to session scenarios that do not set one; sessions are
/// driven by inputs, not by the horizon.
pub const SESSION_HORIZON: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub session: String,
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: &str, session: &str, seq: u64, payload: Value) -> Self {
        Self {
            kind: kind.to_string(),
            session: session.to_string(),
            seq,
            payload,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

/// Payload of `created` and `state` replies. Fields describing a step are
/// absent for the step-0 snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub step: usize,
    /// Current state, after the step's transition.
    pub x: Coord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    pub log_belief: Vec<f64>,
    pub belief: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assist_action: Option<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    pub goals: Vec<Coord>,
    pub variant: DynamicsVariant,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ErrorPayload<'a> {
    code: &'a str,
    message: String,
    #[serde(skip_serializing_if = "<[Violation]>::is_empty")]
    violations: Vec<Violation>,
}

struct Session {
    sim: Simulation,
    last_seq: u64,
}

/// Sessions belonging to one connection.
#[derive(Default)]
pub struct SessionHost {
    sessions: HashMap<String, Session>,
    next_id: u64,
}

impl SessionHost {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Handle one raw line and return the serialized reply.
    pub fn handle_line(&mut self, line: &str) -> String {
        let reply = match serde_json::from_str::<Value>(line) {
            Err(e) => error_reply("", 0, "malformed", format!("not valid JSON: {e}"), vec![]),
            Ok(value) => {
                let session = value.get("session").and_then(Value::as_str).unwrap_or("").to_string();
                let seq = value.get("seq").and_then(Value::as_u64).unwrap_or(0);
                match serde_json::from_value::<Envelope>(value) {
                    Ok(env) => self.handle(env),
                    Err(e) => error_reply(&session, seq, "malformed", format!("bad envelope: {e}"), vec![]),
                }
            }
        };
        reply.to_line()
    }

    pub fn handle(&mut self, env: Envelope) -> Envelope {
        let Envelope {
            kind,
            session,
            seq,
            payload,
        } = env;
        match kind.as_str() {
            "create" => self.create(session, seq, payload),
            "input" | "set_variant" | "reset" | "close" => {
                let Some(entry) = self.sessions.get_mut(&session) else {
                    return error_reply(
                        &session,
                        seq,
                        "unknown_session",
                        format!("no session \"{session}\""),
                        vec![],
                    );
                };
                if seq <= entry.last_seq {
                    return error_reply(
                        &session,
                        seq,
                        "out_of_order",
                        format!("seq {seq} does not follow {}", entry.last_seq),
                        vec![],
                    );
                }
                entry.last_seq = seq;
                let reply = match kind.as_str() {
                    "input" => input(entry, &session, seq, &payload),
                    "set_variant" => set_variant(entry, &session, seq, &payload),
                    "reset" => {
                        entry.sim.reset();
                        state_reply("state", &session, seq, &entry.sim, None)
                    }
                    _ => Envelope::new("close", &session, seq, json!({})),
                };
                if kind == "close" {
                    self.sessions.remove(&session);
                }
                reply
            }
            other => error_reply(
                &session,
                seq,
                "unknown_type",
                format!("unknown message type \"{other}\""),
                vec![],
            ),
        }
    }

    fn create(&mut self, requested: String, seq: u64, payload: Value) -> Envelope {
        let id = if requested.is_empty() {
            loop {
                self.next_id += 1;
                let id = format!("s{}", self.next_id);
                if !self.sessions.contains_key(&id) {
                    break id;
                }
            }
        } else if self.sessions.contains_key(&requested) {
            return error_reply(
                &requested,
                seq,
                "session_exists",
                format!("session \"{requested}\" already exists"),
                vec![],
            );
        } else {
            requested
        };
        let mut file: ScenarioFile = match serde_json::from_value(payload) {
            Ok(f) => f,
            Err(e) => {
                return error_reply(
                    &id,
                    seq,
                    "invalid_scenario",
                    format!("scenario does not parse: {e}"),
                    vec![],
                )
            }
        };
        file.policy.get_or_insert(PolicySpec::Interactive);
        file.horizon.get_or_insert(SESSION_HORIZON);
        let scenario = match Scenario::from_file(file) {
            Ok(s) => s,
            Err(e) => {
                return error_reply(&id, seq, "invalid_scenario", e.to_string(), e.violations)
            }
        };
        let sim = Simulation::new(scenario);
        let reply = state_reply("created", &id, seq, &sim, None);
        if reply.kind == "created" {
            self.sessions.insert(id, Session { sim, last_seq: seq });
        }
        reply
    }
}

fn input(entry: &mut Session, session: &str, seq: u64, payload: &Value) -> Envelope {
    let coord = match payload.get("u").map(|u| serde_json::from_value::<Coord>(u.clone())) {
        Some(Ok(c)) => c,
        _ => {
            return error_reply(
                session,
                seq,
                "invalid_input",
                "payload needs \"u\": a vector or an action id".into(),
                vec![],
            )
        }
    };
    let action = match parse_input(&entry.sim, &coord) {
        Ok(a) => a,
        Err(e) => return error_reply(session, seq, "invalid_input", e.to_string(), vec![]),
    };
    match entry.sim.advance(&action) {
        Ok(record) => state_reply("state", session, seq, &entry.sim, Some(record)),
        Err(e) => engine_error(session, seq, e),
    }
}

/// Free-space inputs of any nonzero length are scaled to unit length; the
/// zero vector is the explicit "no input".
pub fn parse_input(sim: &Simulation, coord: &Coord) -> Result<Action, Error> {
    let coord = match coord {
        Coord::Vector(v) => {
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 0.0 && (norm - 1.0).abs() > UNIT_TOL && norm.is_finite() {
                Coord::Vector(v.iter().map(|c| c / norm).collect())
            } else {
                coord.clone()
            }
        }
        Coord::Id(_) => coord.clone(),
    };
    sim.scenario().parse_action(&coord)
}

fn set_variant(entry: &mut Session, session: &str, seq: u64, payload: &Value) -> Envelope {
    let parsed = payload
        .get("variant")
        .and_then(Value::as_str)
        .ok_or_else(|| "payload needs \"variant\": pure | leaky:K | leakyd:K:KD".to_string())
        .and_then(|s| s.parse::<DynamicsVariant>().map_err(|e| e.to_string()));
    match parsed.and_then(|v| entry.sim.set_variant(v).map_err(|e| e.to_string())) {
        Ok(()) => state_reply("state", session, seq, &entry.sim, None),
        Err(message) => error_reply(session, seq, "invalid_variant", message, vec![]),
    }
}

fn state_reply(
    kind: &str,
    session: &str,
    seq: u64,
    sim: &Simulation,
    record: Option<StepRecord>,
) -> Envelope {
    match state_payload(sim, record) {
        Ok(p) => Envelope::new(kind, session, seq, serde_json::to_value(p).expect("state serializes")),
        Err(e) => engine_error(session, seq, e),
    }
}

pub fn state_payload(sim: &Simulation, record: Option<StepRecord>) -> Result<StatePayload, Error> {
    let snap = sim.snapshot()?;
    let scenario = sim.scenario();
    let goals = scenario
        .source()
        .goals
        .clone()
        .unwrap_or_default();
    let (u, v, a, value) = match record {
        Some(r) => (Some(r.u), Some(r.v), Some(r.a), Some(r.value)),
        None => (None, None, None, None),
    };
    Ok(StatePayload {
        step: snap.step,
        x: snap.x,
        u,
        v,
        log_belief: snap.log_belief,
        belief: snap.belief,
        set_point: snap.set_point,
        assist_action: a,
        value,
        phase: snap.phase,
        goals,
        variant: sim.variant(),
        stopped: sim.is_stopped(),
    })
}

fn engine_error(session: &str, seq: u64, err: Error) -> Envelope {
    let code = match err.root() {
        Error::NonConvergence { .. } => "solver",
        Error::Domain(_) | Error::Argument(_) => "invalid_input",
        _ => "internal",
    };
    error_reply(session, seq, code, err.to_string(), vec![])
}

fn error_reply(session: &str, seq: u64, code: &str, message: String, violations: Vec<Violation>) -> Envelope {
    let payload = ErrorPayload {
        code,
        message,
        violations,
    };
    Envelope::new("error", session, seq, serde_json::to_value(payload).expect("error serializes"))
}
