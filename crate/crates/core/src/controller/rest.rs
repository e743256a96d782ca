//! HTTP/JSON flow endpoint and a client that installs flows through it.
//!
//! ```text
//! POST   /flows                      {"dpid":1,"priority":100,"match":{...},"actions":[...],"hard_timeout_s":10}
//!                                    -> 201 {"rule_id":n}
//! DELETE /flows/{dpid}/{rule_id}     -> 204
//! GET    /flows/{dpid}               -> 200 {"rules":[...]}
//! ```

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::wire::{Action, DatapathId, FlowOp, FlowRule, Frame, MacAddr, Match, OutPort};

use super::api::{ControlApi, CoreError, DatapathInfo, FlowModRequest};

pub const DEFAULT_REST_ADDR: &str = "127.0.0.1:8181";
/// Environment variable overriding the listen address.
pub const REST_ADDR_ENV: &str = "SDN_REST_ADDR";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_port: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eth_src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eth_dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ethertype: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum ActionJson {
    Output { port: u16 },
    Flood,
    Drop,
    Controller,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowBody {
    pub dpid: u64,
    pub priority: u16,
    #[serde(rename = "match", default)]
    pub matcher: MatchJson,
    pub actions: Vec<ActionJson>,
    #[serde(default)]
    pub hard_timeout_s: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleJson {
    pub rule_id: u64,
    pub priority: u16,
    #[serde(rename = "match")]
    pub matcher: MatchJson,
    pub actions: Vec<ActionJson>,
    pub hard_timeout_s: u32,
    pub packet_count: u64,
    pub byte_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesJson {
    pub rules: Vec<RuleJson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CreatedJson {
    rule_id: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ErrorJson {
    error: String,
}

impl From<&Match> for MatchJson {
    fn from(m: &Match) -> MatchJson {
        MatchJson {
            in_port: m.in_port,
            eth_src: m.eth_src.map(|a| a.to_string()),
            eth_dst: m.eth_dst.map(|a| a.to_string()),
            ethertype: m.ethertype,
        }
    }
}

impl TryFrom<&MatchJson> for Match {
    type Error = String;

    fn try_from(m: &MatchJson) -> Result<Match, String> {
        let mac = |s: &Option<String>| -> Result<Option<MacAddr>, String> {
            s.as_deref()
                .map(|s| s.parse::<MacAddr>().map_err(|e| e.to_string()))
                .transpose()
        };
        Ok(Match {
            in_port: m.in_port,
            eth_src: mac(&m.eth_src)?,
            eth_dst: mac(&m.eth_dst)?,
            ethertype: m.ethertype,
        })
    }
}

impl From<Action> for ActionJson {
    fn from(a: Action) -> ActionJson {
        match a {
            Action::Output(port) => ActionJson::Output { port },
            Action::Flood => ActionJson::Flood,
            Action::Drop => ActionJson::Drop,
            Action::Controller => ActionJson::Controller,
        }
    }
}

impl From<ActionJson> for Action {
    fn from(a: ActionJson) -> Action {
        match a {
            ActionJson::Output { port } => Action::Output(port),
            ActionJson::Flood => Action::Flood,
            ActionJson::Drop => Action::Drop,
            ActionJson::Controller => Action::Controller,
        }
    }
}

impl From<&FlowRule> for RuleJson {
    fn from(r: &FlowRule) -> RuleJson {
        RuleJson {
            rule_id: r.rule_id,
            priority: r.priority,
            matcher: (&r.matcher).into(),
            actions: r.actions.iter().map(|&a| a.into()).collect(),
            hard_timeout_s: r.hard_timeout_s,
            packet_count: r.packet_count,
            byte_count: r.byte_count,
        }
    }
}

impl RuleJson {
    pub fn to_rule(&self) -> Result<FlowRule, String> {
        Ok(FlowRule {
            rule_id: self.rule_id,
            priority: self.priority,
            matcher: Match::try_from(&self.matcher)?,
            actions: self.actions.iter().map(|&a| a.into()).collect(),
            hard_timeout_s: self.hard_timeout_s,
            packet_count: self.packet_count,
            byte_count: self.byte_count,
        })
    }
}

impl FlowBody {
    pub fn from_request(req: &FlowModRequest) -> FlowBody {
        FlowBody {
            dpid: req.dpid.0,
            priority: req.priority,
            matcher: (&req.matcher).into(),
            actions: req.actions.iter().map(|&a| a.into()).collect(),
            hard_timeout_s: req.hard_timeout_s,
        }
    }

    pub fn to_request(&self) -> Result<FlowModRequest, String> {
        Ok(FlowModRequest::add(
            DatapathId(self.dpid),
            self.priority,
            Match::try_from(&self.matcher)?,
            self.actions.iter().map(|&a| a.into()).collect(),
            self.hard_timeout_s,
        ))
    }
}

struct Reply {
    status: u16,
    body: Option<String>,
}

impl Reply {
    fn json<T: Serialize>(status: u16, value: &T) -> Reply {
        Reply {
            status,
            body: Some(serde_json::to_string(value).expect("serializable")),
        }
    }

    fn error(status: u16, msg: impl Into<String>) -> Reply {
        Reply::json(status, &ErrorJson { error: msg.into() })
    }

    fn from_core(e: CoreError) -> Reply {
        let status = match e {
            CoreError::UnknownDatapath(_)
            | CoreError::UnknownRule { .. }
            | CoreError::UnknownPort { .. } => 404,
            CoreError::InvalidRequest(_) | CoreError::DuplicateDatapath(_) => 400,
            CoreError::Disconnected(_) | CoreError::Transport(_) => 503,
        };
        Reply::error(status, e.to_string())
    }
}

fn route(api: &dyn ControlApi, method: &tiny_http::Method, url: &str, body: &str) -> Reply {
    use tiny_http::Method;
    let path = url.split('?').next().unwrap_or("");
    let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
    match (method, parts.as_slice()) {
        (Method::Post, ["flows"]) => {
            let parsed: FlowBody = match serde_json::from_str(body) {
                Ok(b) => b,
                Err(e) => return Reply::error(400, e.to_string()),
            };
            let req = match parsed.to_request() {
                Ok(r) => r,
                Err(e) => return Reply::error(400, e),
            };
            match api.flow_mod(req) {
                Ok(rule_id) => Reply::json(201, &CreatedJson { rule_id }),
                Err(e) => Reply::from_core(e),
            }
        }
        (Method::Get, ["flows", dpid]) => {
            let Ok(dpid) = dpid.parse::<u64>() else {
                return Reply::error(400, "dpid must be an integer");
            };
            match api.flows(DatapathId(dpid)) {
                Ok(rules) => Reply::json(
                    200,
                    &RulesJson {
                        rules: rules.iter().map(RuleJson::from).collect(),
                    },
                ),
                Err(e) => Reply::from_core(e),
            }
        }
        (Method::Delete, ["flows", dpid, rule_id]) => {
            let (Ok(dpid), Ok(rule_id)) = (dpid.parse::<u64>(), rule_id.parse::<u64>()) else {
                return Reply::error(400, "dpid and rule_id must be integers");
            };
            match api.flow_mod(FlowModRequest::remove(DatapathId(dpid), rule_id)) {
                Ok(_) => Reply {
                    status: 204,
                    body: None,
                },
                Err(e) => Reply::from_core(e),
            }
        }
        (_, ["flows"]) | (_, ["flows", _]) | (_, ["flows", _, _]) => {
            Reply::error(405, "method not allowed")
        }
        _ => Reply::error(404, "no such resource"),
    }
}

fn serve(api: &dyn ControlApi, mut req: tiny_http::Request) {
    let mut body = String::new();
    let reply = if req.as_reader().read_to_string(&mut body).is_err() {
        Reply::error(400, "body is not UTF-8")
    } else {
        route(api, req.method(), req.url(), &body)
    };
    let result = match reply.body {
        Some(text) => {
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                .expect("static header");
            req.respond(
                tiny_http::Response::from_string(text)
                    .with_status_code(reply.status)
                    .with_header(header),
            )
        }
        None => req.respond(tiny_http::Response::empty(reply.status)),
    };
    if let Err(e) = result {
        log::debug!("rest: failed to respond: {e}");
    }
}

/// The REST listener; a few worker threads share one socket.
pub struct RestServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl RestServer {
    pub fn start(api: Arc<dyn ControlApi>, addr: &str) -> io::Result<RestServer> {
        let server = tiny_http::Server::http(addr)
            .map_err(|e| io::Error::new(io::ErrorKind::AddrNotAvailable, e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let mut workers = Vec::new();
        for i in 0..4 {
            let server = server.clone();
            let api = api.clone();
            workers.push(
                std::thread::Builder::new()
                    .name(format!("rest-{i}"))
                    .spawn(move || {
                        while let Ok(req) = server.recv() {
                            serve(api.as_ref(), req);
                        }
                    })?,
            );
        }
        Ok(RestServer {
            server,
            addr,
            workers,
        })
    }

    /// Listen address from the environment, else the default.
    pub fn addr_from_env() -> String {
        std::env::var(REST_ADDR_ENV).unwrap_or_else(|_| DEFAULT_REST_ADDR.to_string())
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for RestServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Installs and removes flows over HTTP; everything else goes through
/// `direct`, since the REST endpoint only covers flows.
pub struct RestControl {
    base: String,
    agent: ureq::Agent,
    direct: Arc<dyn ControlApi>,
}

impl RestControl {
    pub fn new(base_url: &str, direct: Arc<dyn ControlApi>) -> RestControl {
        RestControl {
            base: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(10))
                .build(),
            direct,
        }
    }

    fn error(e: ureq::Error) -> CoreError {
        match e {
            ureq::Error::Status(code, resp) => {
                let msg = resp
                    .into_json::<ErrorJson>()
                    .map(|j| j.error)
                    .unwrap_or_default();
                match code {
                    404 => CoreError::InvalidRequest(format!("not found: {msg}")),
                    400 => CoreError::InvalidRequest(msg),
                    _ => CoreError::Transport(format!("HTTP {code}: {msg}")),
                }
            }
            other => CoreError::Transport(other.to_string()),
        }
    }
}

impl ControlApi for RestControl {
    fn packet_out(&self, dpid: DatapathId, out: OutPort, frame: Frame) -> Result<(), CoreError> {
        self.direct.packet_out(dpid, out, frame)
    }

    fn flow_mod(&self, req: FlowModRequest) -> Result<u64, CoreError> {
        match req.op {
            FlowOp::Add => {
                let created: CreatedJson = self
                    .agent
                    .post(&format!("{}/flows", self.base))
                    .send_json(FlowBody::from_request(&req))
                    .map_err(Self::error)?
                    .into_json()
                    .map_err(|e| CoreError::Transport(e.to_string()))?;
                Ok(created.rule_id)
            }
            FlowOp::Remove => {
                self.agent
                    .delete(&format!("{}/flows/{}/{}", self.base, req.dpid.0, req.rule_id))
                    .call()
                    .map_err(Self::error)?;
                Ok(req.rule_id)
            }
            FlowOp::Modify => Err(CoreError::InvalidRequest(
                "the REST endpoint has no modify operation".into(),
            )),
        }
    }

    fn flows(&self, dpid: DatapathId) -> Result<Vec<FlowRule>, CoreError> {
        let rules: RulesJson = self
            .agent
            .get(&format!("{}/flows/{}", self.base, dpid.0))
            .call()
            .map_err(Self::error)?
            .into_json()
            .map_err(|e| CoreError::Transport(e.to_string()))?;
        rules
            .rules
            .iter()
            .map(|r| r.to_rule().map_err(CoreError::Transport))
            .collect()
    }

    fn datapaths(&self) -> Result<Vec<DatapathInfo>, CoreError> {
        self.direct.datapaths()
    }

    fn report_link(
        &self,
        src: (DatapathId, u16),
        dst: (DatapathId, u16),
        up: bool,
    ) -> Result<(), CoreError> {
        self.direct.report_link(src, dst, up)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_json_shape() {
        let body: FlowBody = serde_json::from_str(
            r#"{"dpid":1,"priority":100,"match":{"eth_dst":"02:00:00:00:00:02"},
                "actions":[{"kind":"OUTPUT","port":2},{"kind":"CONTROLLER"}],"hard_timeout_s":10}"#,
        )
        .unwrap();
        let req = body.to_request().unwrap();
        assert_eq!(req.matcher, Match::eth_dst(MacAddr::host(2)));
        assert_eq!(req.actions, vec![Action::Output(2), Action::Controller]);
        assert_eq!(FlowBody::from_request(&req), body);
    }

    #[test]
    fn negative_priority_does_not_parse() {
        assert!(serde_json::from_str::<FlowBody>(r#"{"dpid":1,"priority":-1,"actions":[]}"#).is_err());
    }

    #[test]
    fn bad_mac_is_rejected() {
        let body: FlowBody = serde_json::from_str(
            r#"{"dpid":1,"priority":1,"match":{"eth_src":"zz"},"actions":[]}"#,
        )
        .unwrap();
        assert!(body.to_request().is_err());
    }

    #[test]
    fn rule_json_omits_absent_fields() {
        let rule = FlowRule {
            rule_id: 4,
            priority: 2,
            matcher: Match::any(),
            actions: vec![Action::Flood],
            hard_timeout_s: 0,
            packet_count: 1,
            byte_count: 60,
        };
        let text = serde_json::to_string(&RuleJson::from(&rule)).unwrap();
        assert_eq!(
            text,
            r#"{"rule_id":4,"priority":2,"match":{},"actions":[{"kind":"FLOOD"}],"hard_timeout_s":0,"packet_count":1,"byte_count":60}"#
        );
        assert_eq!(RuleJson::from(&rule).to_rule().unwrap(), rule);
    }
}
