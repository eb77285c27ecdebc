//! FIPA-ACL messages and the in-process bus that carries them.
//!
//! The bus gives exactly-once delivery in per-(sender, receiver) send order and
//! keeps an append-only delivery log with a global sequence number.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Performative {
    Request,
    Inform,
    Confirm,
    Refuse,
    Failure,
}

impl Performative {
    pub const ALL: [Performative; 5] = [
        Performative::Request,
        Performative::Inform,
        Performative::Confirm,
        Performative::Refuse,
        Performative::Failure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Request => "request",
            Performative::Inform => "inform",
            Performative::Confirm => "confirm",
            Performative::Refuse => "refuse",
            Performative::Failure => "failure",
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Performative {
    type Err = AclError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Performative::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| AclError::UnknownPerformative(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AclError {
    #[error("malformed message text: {0}")]
    Malformed(String),
    #[error("unknown performative \"{0}\"")]
    UnknownPerformative(String),
    #[error("missing required field \"{0}\"")]
    MissingField(&'static str),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("unknown receiver \"{0}\"")]
    UnknownReceiver(String),
    #[error("unknown agent \"{0}\"")]
    UnknownAgent(String),
    #[error("agent \"{0}\" is already registered")]
    DuplicateAgent(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AclMessage {
    pub performative: Performative,
    pub sender: String,
    pub receiver: String,
    pub content: Value,
    pub conversation_id: String,
    pub reply_with: Option<String>,
    pub in_reply_to: Option<String>,
}

impl AclMessage {
    pub fn new(
        performative: Performative,
        sender: impl Into<String>,
        receiver: impl Into<String>,
        conversation_id: impl Into<String>,
        content: Value,
    ) -> Self {
        Self {
            performative,
            sender: sender.into(),
            receiver: receiver.into(),
            content,
            conversation_id: conversation_id.into(),
            reply_with: None,
            in_reply_to: None,
        }
    }

    pub fn reply_with(mut self, key: impl Into<String>) -> Self {
        self.reply_with = Some(key.into());
        self
    }

    pub fn in_reply_to(mut self, key: impl Into<String>) -> Self {
        self.in_reply_to = Some(key.into());
        self
    }

    /// Checks that do not need bus history.
    pub fn check(&self) -> Result<(), AclError> {
        if self.sender.is_empty() || self.receiver.is_empty() {
            return Err(AclError::Invalid("sender and receiver must be non-empty".into()));
        }
        if self.sender == self.receiver {
            return Err(AclError::Invalid(format!("sender and receiver are both \"{}\"", self.sender)));
        }
        Ok(())
    }

    /// Canonical JSON text: keys sorted at every level, no whitespace.
    pub fn serialize(&self) -> String {
        let mut m = Map::new();
        m.insert("performative".into(), Value::from(self.performative.as_str()));
        m.insert("sender".into(), Value::from(self.sender.clone()));
        m.insert("receiver".into(), Value::from(self.receiver.clone()));
        m.insert("content".into(), self.content.clone());
        m.insert("conversation_id".into(), Value::from(self.conversation_id.clone()));
        if let Some(r) = &self.reply_with {
            m.insert("reply_with".into(), Value::from(r.clone()));
        }
        if let Some(r) = &self.in_reply_to {
            m.insert("in_reply_to".into(), Value::from(r.clone()));
        }
        canonical_json(&Value::Object(m))
    }

    pub fn deserialize(text: &str) -> Result<Self, AclError> {
        let value: Value = serde_json::from_str(text).map_err(|e| AclError::Malformed(e.to_string()))?;
        let Value::Object(mut m) = value else {
            return Err(AclError::Malformed("message must be a JSON object".into()));
        };
        fn text_field(m: &mut Map<String, Value>, name: &'static str) -> Result<String, AclError> {
            match m.remove(name) {
                Some(Value::String(s)) => Ok(s),
                Some(_) => Err(AclError::Malformed(format!("field \"{name}\" must be a string"))),
                None => Err(AclError::MissingField(name)),
            }
        }
        fn optional(m: &mut Map<String, Value>, name: &'static str) -> Result<Option<String>, AclError> {
            match m.remove(name) {
                Some(Value::String(s)) => Ok(Some(s)),
                Some(Value::Null) | None => Ok(None),
                Some(_) => Err(AclError::Malformed(format!("field \"{name}\" must be a string"))),
            }
        }
        let performative: Performative = text_field(&mut m, "performative")?.parse()?;
        let sender = text_field(&mut m, "sender")?;
        let receiver = text_field(&mut m, "receiver")?;
        let conversation_id = text_field(&mut m, "conversation_id")?;
        let content = m.remove("content").ok_or(AclError::MissingField("content"))?;
        let reply_with = optional(&mut m, "reply_with")?;
        let in_reply_to = optional(&mut m, "in_reply_to")?;
        if let Some(extra) = m.keys().next() {
            return Err(AclError::Malformed(format!("unexpected field \"{extra}\"")));
        }
        let msg = AclMessage { performative, sender, receiver, content, conversation_id, reply_with, in_reply_to };
        msg.check()?;
        Ok(msg)
    }
}

/// Compact JSON with object keys in sorted order at every depth.
pub fn canonical_json(value: &Value) -> String {
    fn sorted(value: &Value) -> Value {
        match value {
            Value::Object(m) => {
                let ordered: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, sorted(v))).collect();
                Value::Object(ordered.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sorted(value)).expect("JSON values always serialize")
}

/// One line of a trace file: `seq TAB performative TAB sender TAB receiver TAB conversation TAB content`.
pub fn trace_line(seq: u64, msg: &AclMessage) -> String {
    format!(
        "{seq}\t{}\t{}\t{}\t{}\t{}",
        msg.performative,
        msg.sender,
        msg.receiver,
        msg.conversation_id,
        canonical_json(&msg.content)
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub seq: u64,
    pub performative: Performative,
    pub sender: String,
    pub receiver: String,
    pub conversation_id: String,
    pub content: Value,
}

pub fn parse_trace_line(line: &str) -> Result<TraceEntry, AclError> {
    let fields: Vec<&str> = line.splitn(6, '\t').collect();
    let [seq, perf, sender, receiver, conv, content] = fields[..] else {
        return Err(AclError::Malformed(format!("expected 6 tab-separated fields in {line:?}")));
    };
    Ok(TraceEntry {
        seq: seq.parse().map_err(|_| AclError::Malformed(format!("bad sequence number {seq:?}")))?,
        performative: perf.parse()?,
        sender: sender.to_string(),
        receiver: receiver.to_string(),
        conversation_id: conv.to_string(),
        content: serde_json::from_str(content).map_err(|e| AclError::Malformed(e.to_string()))?,
    })
}

#[derive(Default)]
struct BusState {
    inboxes: HashMap<String, VecDeque<AclMessage>>,
    log: Vec<(u64, AclMessage)>,
    next_seq: u64,
    reply_keys: HashSet<(String, String)>,
}

/// Thread-safe message bus. Clones share state.
#[derive(Clone, Default)]
pub struct Bus {
    state: Arc<(Mutex<BusState>, Condvar)>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, agent_id: &str) -> Result<(), AclError> {
        let mut st = self.state.0.lock().expect("bus lock poisoned");
        if st.inboxes.contains_key(agent_id) {
            return Err(AclError::DuplicateAgent(agent_id.to_string()));
        }
        st.inboxes.insert(agent_id.to_string(), VecDeque::new());
        Ok(())
    }

    /// Removes the inbox; undelivered messages are discarded and returned.
    pub fn unregister(&self, agent_id: &str) -> Vec<AclMessage> {
        let mut st = self.state.0.lock().expect("bus lock poisoned");
        st.inboxes.remove(agent_id).map(Vec::from).unwrap_or_default()
    }

    pub fn is_registered(&self, agent_id: &str) -> bool {
        self.state.0.lock().expect("bus lock poisoned").inboxes.contains_key(agent_id)
    }

    pub fn send(&self, msg: AclMessage) -> Result<u64, AclError> {
        msg.check()?;
        let (lock, cvar) = &*self.state;
        let mut st = lock.lock().expect("bus lock poisoned");
        if !st.inboxes.contains_key(&msg.receiver) {
            return Err(AclError::UnknownReceiver(msg.receiver.clone()));
        }
        if let Some(target) = &msg.in_reply_to {
            if !st.reply_keys.contains(&(msg.conversation_id.clone(), target.clone())) {
                return Err(AclError::Invalid(format!(
                    "in_reply_to \"{target}\" does not match an earlier reply_with in conversation \"{}\"",
                    msg.conversation_id
                )));
            }
        }
        if let Some(key) = &msg.reply_with {
            if !st.reply_keys.insert((msg.conversation_id.clone(), key.clone())) {
                return Err(AclError::Invalid(format!("reply_with \"{key}\" reused")));
            }
        }
        st.next_seq += 1;
        let seq = st.next_seq;
        st.log.push((seq, msg.clone()));
        st.inboxes.get_mut(&msg.receiver).expect("checked above").push_back(msg);
        cvar.notify_all();
        Ok(seq)
    }

    pub fn try_receive(&self, agent_id: &str) -> Result<Option<AclMessage>, AclError> {
        let mut st = self.state.0.lock().expect("bus lock poisoned");
        let inbox = st.inboxes.get_mut(agent_id).ok_or_else(|| AclError::UnknownAgent(agent_id.to_string()))?;
        Ok(inbox.pop_front())
    }

    /// Blocks up to `timeout`; `Ok(None)` means the inbox stayed empty.
    pub fn receive(&self, agent_id: &str, timeout: Duration) -> Result<Option<AclMessage>, AclError> {
        let (lock, cvar) = &*self.state;
        let deadline = Instant::now() + timeout;
        let mut st = lock.lock().expect("bus lock poisoned");
        loop {
            let inbox = st.inboxes.get_mut(agent_id).ok_or_else(|| AclError::UnknownAgent(agent_id.to_string()))?;
            if let Some(msg) = inbox.pop_front() {
                return Ok(Some(msg));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            st = cvar.wait_timeout(st, deadline - now).expect("bus lock poisoned").0;
        }
    }

    pub fn pending(&self, agent_id: &str) -> usize {
        let st = self.state.0.lock().expect("bus lock poisoned");
        st.inboxes.get(agent_id).map_or(0, VecDeque::len)
    }

    pub fn log(&self) -> Vec<(u64, AclMessage)> {
        self.state.0.lock().expect("bus lock poisoned").log.clone()
    }

    pub fn conversation(&self, conversation_id: &str) -> Vec<(u64, AclMessage)> {
        let st = self.state.0.lock().expect("bus lock poisoned");
        st.log.iter().filter(|(_, m)| m.conversation_id == conversation_id).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn scenario_contents_round_trip() {
        for content in [json!({"task": "move_pallet", "from": "P1", "to": "P2"}), json!({"event": "pallet_placed"})] {
            let m = AclMessage::new(Performative::Request, "turtlebot", "roboticarm", "c1", content);
            let text = m.serialize();
            assert_eq!(AclMessage::deserialize(&text).unwrap(), m);
        }
    }

    #[test]
    fn canonical_key_order() {
        let m = AclMessage::new(Performative::Inform, "a", "b", "c", json!({"z": 1, "a": {"y": 2, "b": 3}}));
        assert_eq!(
            m.serialize(),
            r#"{"content":{"a":{"b":3,"y":2},"z":1},"conversation_id":"c","performative":"inform","receiver":"b","sender":"a"}"#
        );
    }

    #[test]
    fn distinguished_errors() {
        let demand = r#"{"performative":"demand","sender":"a","receiver":"b","conversation_id":"c","content":{}}"#;
        assert_eq!(AclMessage::deserialize(demand), Err(AclError::UnknownPerformative("demand".into())));
        let missing = r#"{"performative":"inform","sender":"a","conversation_id":"c","content":{}}"#;
        assert_eq!(AclMessage::deserialize(missing), Err(AclError::MissingField("receiver")));
        assert!(matches!(AclMessage::deserialize("{not json"), Err(AclError::Malformed(_))));
        let same = r#"{"performative":"inform","sender":"a","receiver":"a","conversation_id":"c","content":{}}"#;
        assert!(matches!(AclMessage::deserialize(same), Err(AclError::Invalid(_))));
    }

    #[test]
    fn send_and_receive() {
        let bus = Bus::new();
        bus.register("kg").unwrap();
        bus.register("a1").unwrap();
        let m = AclMessage::new(
            Performative::Request,
            "a1",
            "kg",
            "c",
            json!({"query": "next_action", "task": "coordinate_task"}),
        );
        assert_eq!(bus.send(m.clone()).unwrap(), 1);
        assert_eq!(bus.receive("kg", Duration::from_millis(10)).unwrap(), Some(m));
        let selfie = AclMessage::new(Performative::Inform, "kg", "kg", "c", json!({}));
        assert!(matches!(bus.send(selfie), Err(AclError::Invalid(_))));
        let lost = AclMessage::new(Performative::Inform, "kg", "nobody", "c", json!({}));
        assert_eq!(bus.send(lost), Err(AclError::UnknownReceiver("nobody".into())));
        assert!(matches!(bus.register("kg"), Err(AclError::DuplicateAgent(_))));
    }

    #[test]
    fn receive_times_out() {
        let bus = Bus::new();
        bus.register("kg").unwrap();
        let start = Instant::now();
        assert_eq!(bus.receive("kg", Duration::from_millis(10)).unwrap(), None);
        let waited = start.elapsed();
        assert!(waited >= Duration::from_millis(10) && waited < Duration::from_millis(500), "{waited:?}");
        assert!(matches!(bus.receive("ghost", Duration::ZERO), Err(AclError::UnknownAgent(_))));
    }

    #[test]
    fn reply_threading_is_checked() {
        let bus = Bus::new();
        bus.register("a").unwrap();
        bus.register("b").unwrap();
        let orphan = AclMessage::new(Performative::Inform, "a", "b", "c", json!({})).in_reply_to("x");
        assert!(bus.send(orphan).is_err());
        bus.send(AclMessage::new(Performative::Request, "a", "b", "c", json!({})).reply_with("x")).unwrap();
        bus.send(AclMessage::new(Performative::Inform, "b", "a", "c", json!({})).in_reply_to("x")).unwrap();
        // the key is scoped to its conversation
        let other = AclMessage::new(Performative::Inform, "b", "a", "d", json!({})).in_reply_to("x");
        assert!(bus.send(other).is_err());
    }

    #[test]
    fn trace_line_round_trip() {
        let m = AclMessage::new(Performative::Refuse, "kg", "a1", "move_pallet#1", json!({"reason": "tab\there"}));
        let line = trace_line(7, &m);
        assert_eq!(line.split('\t').count(), 6);
        let e = parse_trace_line(&line).unwrap();
        assert_eq!((e.seq, e.performative, e.content), (7, Performative::Refuse, m.content));
    }
}
