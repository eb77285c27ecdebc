//! Protocol adapters over in-process hubs.
//!
//! Three hub kinds stand in for the protocols a setup graph can name:
//!
//! * `ros+ws` → [`TransportKind::TopicPubsub`]: fan-out to current subscribers, no retention.
//! * `mqtt` → [`TransportKind::BrokerPubsub`]: as above, plus the last value per topic is
//!   delivered to new subscribers.
//! * `rest+http` → [`TransportKind::RequestResponse`]: one responder per path. Subscribing
//!   registers a responder that queues payloads; publishing is a fire-and-forget request.
//!
//! Hubs are keyed by `scheme://address`, so two assets with equal bindings share a hub.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex, Weak};

use serde_json::{json, Value};
use thiserror::Error;

use crate::rami::CommunicationBinding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransportKind {
    TopicPubsub,
    RequestResponse,
    BrokerPubsub,
}

impl TransportKind {
    pub const ALL: [TransportKind; 3] =
        [TransportKind::TopicPubsub, TransportKind::RequestResponse, TransportKind::BrokerPubsub];

    pub fn default_scheme(self) -> &'static str {
        match self {
            TransportKind::TopicPubsub => "ros+ws",
            TransportKind::RequestResponse => "rest+http",
            TransportKind::BrokerPubsub => "mqtt",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("unknown protocol scheme \"{0}\"")]
    UnknownScheme(String),
    #[error("protocol scheme \"{0}\" is already registered")]
    DuplicateScheme(String),
    #[error("invalid endpoint \"{0}\"")]
    InvalidEndpoint(String),
    #[error("no responder registered for \"{0}\"")]
    NoResponder(String),
    #[error("a responder is already registered for \"{0}\"")]
    ResponderTaken(String),
    #[error("{0} is not supported on this transport")]
    Unsupported(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub scheme: String,
    pub address: String,
}

impl Endpoint {
    pub fn new(scheme: impl Into<String>, address: impl Into<String>) -> Result<Self, TransportError> {
        let (scheme, address) = (scheme.into(), address.into());
        if scheme.is_empty() || address.is_empty() || address.chars().any(char::is_whitespace) {
            return Err(TransportError::InvalidEndpoint(format!("{scheme}://{address}")));
        }
        Ok(Self { scheme, address })
    }

    pub fn from_binding(binding: &CommunicationBinding) -> Result<Self, TransportError> {
        Self::new(binding.protocol_scheme.clone(), binding.endpoint.clone())
    }

    pub fn hub_name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}", self.scheme, self.address)
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
#[derive(Debug)]
pub struct Subscription {
    topic: String,
    queue: Arc<Mutex<VecDeque<Value>>>,
    // keeps a request/response registration alive
    _guard: Option<ResponderGuard>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn try_recv(&self) -> Option<Value> {
        self.queue.lock().expect("subscription lock poisoned").pop_front()
    }

    pub fn drain(&self) -> Vec<Value> {
        self.queue.lock().expect("subscription lock poisoned").drain(..).collect()
    }
}

type Queue = Arc<Mutex<VecDeque<Value>>>;
pub type Responder = Arc<dyn Fn(&Value) -> Value + Send + Sync>;

#[derive(Default)]
struct PubSubState {
    subscribers: BTreeMap<String, Vec<Weak<Mutex<VecDeque<Value>>>>>,
    retained: BTreeMap<String, Value>,
}

/// Topic or broker hub. Publishing holds the hub lock while fanning out, so every
/// subscriber sees publishes in one global order.
pub struct PubSubHub {
    retain: bool,
    state: Mutex<PubSubState>,
}

impl PubSubHub {
    fn new(retain: bool) -> Self {
        Self { retain, state: Mutex::new(PubSubState::default()) }
    }

    fn publish(&self, topic: &str, payload: Value) {
        let mut st = self.state.lock().expect("hub lock poisoned");
        if let Some(subs) = st.subscribers.get_mut(topic) {
            subs.retain(|w| match w.upgrade() {
                Some(q) => {
                    q.lock().expect("subscription lock poisoned").push_back(payload.clone());
                    true
                }
                None => false,
            });
        }
        if self.retain {
            st.retained.insert(topic.to_string(), payload);
        }
    }

    fn subscribe(&self, topic: &str) -> Subscription {
        let queue: Queue = Arc::default();
        let mut st = self.state.lock().expect("hub lock poisoned");
        if let Some(last) = st.retained.get(topic) {
            queue.lock().expect("subscription lock poisoned").push_back(last.clone());
        }
        st.subscribers.entry(topic.to_string()).or_default().push(Arc::downgrade(&queue));
        Subscription { topic: topic.to_string(), queue, _guard: None }
    }
}

/// Request/response hub: at most one responder per path.
#[derive(Default)]
pub struct RequestHub {
    responders: Mutex<HashMap<String, (u64, Responder)>>,
    next_id: Mutex<u64>,
}

struct ResponderGuard {
    hub: Weak<RequestHub>,
    path: String,
    id: u64,
}

impl fmt::Debug for ResponderGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResponderGuard").field("path", &self.path).field("id", &self.id).finish()
    }
}

impl Drop for ResponderGuard {
    fn drop(&mut self) {
        if let Some(hub) = self.hub.upgrade() {
            let mut map = hub.responders.lock().expect("hub lock poisoned");
            if map.get(&self.path).is_some_and(|(id, _)| *id == self.id) {
                map.remove(&self.path);
            }
        }
    }
}

impl RequestHub {
    fn serve(self: &Arc<Self>, path: &str, responder: Responder) -> Result<ResponderGuard, TransportError> {
        let mut map = self.responders.lock().expect("hub lock poisoned");
        if map.contains_key(path) {
            return Err(TransportError::ResponderTaken(path.to_string()));
        }
        let id = {
            let mut n = self.next_id.lock().expect("hub lock poisoned");
            *n += 1;
            *n
        };
        map.insert(path.to_string(), (id, responder));
        Ok(ResponderGuard { hub: Arc::downgrade(self), path: path.to_string(), id })
    }

    fn request(&self, path: &str, payload: &Value) -> Result<Value, TransportError> {
        let responder = {
            let map = self.responders.lock().expect("hub lock poisoned");
            map.get(path).map(|(_, r)| r.clone())
        };
        // the caller blocks until the responder returns
        responder.map(|r| r(payload)).ok_or_else(|| TransportError::NoResponder(path.to_string()))
    }
}

/// All hubs of one running system, keyed by `scheme://address`.
#[derive(Clone, Default)]
pub struct HubNetwork {
    pubsub: Arc<Mutex<HashMap<String, Arc<PubSubHub>>>>,
    request: Arc<Mutex<HashMap<String, Arc<RequestHub>>>>,
}

impl HubNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pubsub_hub(&self, endpoint: &Endpoint, retain: bool) -> Arc<PubSubHub> {
        let mut hubs = self.pubsub.lock().expect("network lock poisoned");
        hubs.entry(endpoint.hub_name()).or_insert_with(|| Arc::new(PubSubHub::new(retain))).clone()
    }

    pub fn request_hub(&self, endpoint: &Endpoint) -> Arc<RequestHub> {
        let mut hubs = self.request.lock().expect("network lock poisoned");
        hubs.entry(endpoint.hub_name()).or_default().clone()
    }
}

/// What an agent or connection component sees of a transport.
pub trait Adapter: Send + Sync {
    fn kind(&self) -> TransportKind;
    fn endpoint(&self) -> &Endpoint;
    fn publish(&self, topic: &str, payload: Value) -> Result<(), TransportError>;
    fn subscribe(&self, topic: &str) -> Result<Subscription, TransportError>;
    fn request(&self, path: &str, payload: Value) -> Result<Value, TransportError>;
}

pub struct PubSubAdapter {
    kind: TransportKind,
    endpoint: Endpoint,
    hub: Arc<PubSubHub>,
}

impl PubSubAdapter {
    pub fn connect(network: &HubNetwork, endpoint: Endpoint, retain: bool) -> Self {
        let hub = network.pubsub_hub(&endpoint, retain);
        let kind = if retain { TransportKind::BrokerPubsub } else { TransportKind::TopicPubsub };
        Self { kind, endpoint, hub }
    }
}

impl Adapter for PubSubAdapter {
    fn kind(&self) -> TransportKind {
        self.kind
    }

    fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn publish(&self, topic: &str, payload: Value) -> Result<(), TransportError> {
        self.hub.publish(topic, payload);
        Ok(())
    }

    fn subscribe(&self, topic: &str) -> Result<Subscription, TransportError> {
        Ok(self.hub.subscribe(topic))
    }

    fn request(&self, _path: &str, _payload: Value) -> Result<Value, TransportError> {
        Err(TransportError::Unsupported("request"))
    }
}

pub struct RequestAdapter {
    endpoint: Endpoint,
    hub: Arc<RequestHub>,
    emulate_publish: bool,
}

impl RequestAdapter {
    pub fn connect(network: &HubNetwork, endpoint: Endpoint, emulate_publish: bool) -> Self {
        let hub = network.request_hub(&endpoint);
        Self { endpoint, hub, emulate_publish }
    }

    /// Register an arbitrary responder for `path`; it stays registered while the
    /// returned subscription (whose queue stays empty) is alive.
    pub fn serve(&self, path: &str, responder: Responder) -> Result<Subscription, TransportError> {
        let guard = self.hub.serve(path, responder)?;
        Ok(Subscription { topic: path.to_string(), queue: Arc::default(), _guard: Some(guard) })
    }
}

impl Adapter for RequestAdapter {
    fn kind(&self) -> TransportKind {
        TransportKind::RequestResponse
    }

    fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn publish(&self, topic: &str, payload: Value) -> Result<(), TransportError> {
        if !self.emulate_publish {
            return Err(TransportError::Unsupported("publish without emulation"));
        }
        self.hub.request(topic, &payload).map(drop)
    }

    fn subscribe(&self, topic: &str) -> Result<Subscription, TransportError> {
        let queue: Queue = Arc::default();
        let sink = Arc::downgrade(&queue);
        let responder: Responder = Arc::new(move |payload: &Value| match sink.upgrade() {
            Some(q) => {
                q.lock().expect("subscription lock poisoned").push_back(payload.clone());
                json!({"ack": true})
            }
            None => json!({"ack": false}),
        });
        let guard = self.hub.serve(topic, responder)?;
        Ok(Subscription { topic: topic.to_string(), queue, _guard: Some(guard) })
    }

    fn request(&self, path: &str, payload: Value) -> Result<Value, TransportError> {
        self.hub.request(path, &payload)
    }
}

/// Builds connected adapters for one scheme.
pub trait AdapterFactory: Send + Sync {
    fn connect(&self, network: &HubNetwork, endpoint: Endpoint) -> Result<Box<dyn Adapter>, TransportError>;
}

impl<F> AdapterFactory for F
where
    F: Fn(&HubNetwork, Endpoint) -> Result<Box<dyn Adapter>, TransportError> + Send + Sync,
{
    fn connect(&self, network: &HubNetwork, endpoint: Endpoint) -> Result<Box<dyn Adapter>, TransportError> {
        self(network, endpoint)
    }
}

struct BuiltIn(TransportKind);

impl AdapterFactory for BuiltIn {
    fn connect(&self, network: &HubNetwork, endpoint: Endpoint) -> Result<Box<dyn Adapter>, TransportError> {
        Ok(match self.0 {
            TransportKind::TopicPubsub => Box::new(PubSubAdapter::connect(network, endpoint, false)),
            TransportKind::BrokerPubsub => Box::new(PubSubAdapter::connect(network, endpoint, true)),
            TransportKind::RequestResponse => Box::new(RequestAdapter::connect(network, endpoint, true)),
        })
    }
}

/// Scheme → adapter factory, plus the hub network adapters connect into.
#[derive(Clone)]
pub struct TransportRegistry {
    factories: BTreeMap<String, Arc<dyn AdapterFactory>>,
    network: HubNetwork,
}

impl Default for TransportRegistry {
    fn default() -> Self {
        let mut reg = Self { factories: BTreeMap::new(), network: HubNetwork::new() };
        for kind in TransportKind::ALL {
            reg.factories.insert(kind.default_scheme().to_string(), Arc::new(BuiltIn(kind)));
        }
        reg
    }
}

impl TransportRegistry {
    /// The three built-in schemes.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, scheme: &str, factory: Arc<dyn AdapterFactory>) -> Result<(), TransportError> {
        if self.factories.contains_key(scheme) {
            return Err(TransportError::DuplicateScheme(scheme.to_string()));
        }
        self.factories.insert(scheme.to_string(), factory);
        Ok(())
    }

    pub fn schemes(&self) -> BTreeSet<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn network(&self) -> &HubNetwork {
        &self.network
    }

    pub fn resolve(&self, binding: &CommunicationBinding) -> Result<Box<dyn Adapter>, TransportError> {
        let factory = self
            .factories
            .get(&binding.protocol_scheme)
            .ok_or_else(|| TransportError::UnknownScheme(binding.protocol_scheme.clone()))?;
        factory.connect(&self.network, Endpoint::from_binding(binding)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binding(scheme: &str) -> CommunicationBinding {
        CommunicationBinding { protocol_scheme: scheme.into(), endpoint: "localhost:9090".into() }
    }

    #[test]
    fn fresh_registry_has_three_schemes() {
        let reg = TransportRegistry::new();
        let expected: BTreeSet<String> = ["mqtt", "rest+http", "ros+ws"].into_iter().map(String::from).collect();
        assert_eq!(reg.schemes(), expected);
    }

    #[test]
    fn duplicate_and_unknown_scheme() {
        let mut reg = TransportRegistry::new();
        let err = reg.register("mqtt", Arc::new(BuiltIn(TransportKind::BrokerPubsub))).unwrap_err();
        assert_eq!(err, TransportError::DuplicateScheme("mqtt".into()));
        let err = reg.resolve(&binding("unknown+proto")).err().unwrap();
        assert_eq!(err, TransportError::UnknownScheme("unknown+proto".into()));
        assert!(err.to_string().contains("unknown+proto"));
    }

    #[test]
    fn shared_endpoint_shares_hub() {
        let reg = TransportRegistry::new();
        let a = reg.resolve(&binding("ros+ws")).unwrap();
        let b = reg.resolve(&binding("ros+ws")).unwrap();
        let sub = b.subscribe("/cmd_vel").unwrap();
        a.publish("/cmd_vel", json!({"v": 1})).unwrap();
        assert_eq!(sub.drain(), vec![json!({"v": 1})]);
    }

    #[test]
    fn topic_drops_before_subscribe_broker_retains() {
        let reg = TransportRegistry::new();
        let topic = reg.resolve(&binding("ros+ws")).unwrap();
        topic.publish("/t", json!(1)).unwrap();
        let sub = topic.subscribe("/t").unwrap();
        assert_eq!(sub.try_recv(), None);
        topic.publish("/t", json!(2)).unwrap();
        assert_eq!(sub.drain(), vec![json!(2)]);

        let broker = reg.resolve(&binding("mqtt")).unwrap();
        broker.publish("/t", json!(1)).unwrap();
        broker.publish("/t", json!(2)).unwrap();
        let sub = broker.subscribe("/t").unwrap();
        assert_eq!(sub.drain(), vec![json!(2)]);
    }

    #[test]
    fn request_response_semantics() {
        let reg = TransportRegistry::new();
        let client = reg.resolve(&binding("rest+http")).unwrap();
        assert_eq!(client.request("/x", json!({})), Err(TransportError::NoResponder("/x".into())));
        let sub = client.subscribe("/x").unwrap();
        assert!(matches!(client.subscribe("/x"), Err(TransportError::ResponderTaken(_))));
        assert_eq!(client.request("/x", json!({"a": 1})).unwrap(), json!({"ack": true}));
        client.publish("/x", json!({"a": 2})).unwrap();
        assert_eq!(sub.drain(), vec![json!({"a": 1}), json!({"a": 2})]);
        drop(sub);
        assert!(client.publish("/x", json!(3)).is_err());

        let strict = RequestAdapter::connect(reg.network(), Endpoint::new("rest+http", "h:1").unwrap(), false);
        assert_eq!(strict.publish("/x", json!(1)), Err(TransportError::Unsupported("publish without emulation")));
        let served = strict.serve("/echo", Arc::new(|v: &Value| v.clone())).unwrap();
        assert_eq!(strict.request("/echo", json!([1, 2])).unwrap(), json!([1, 2]));
        drop(served);
        assert!(strict.request("/echo", json!(0)).is_err());
    }

    #[test]
    fn pubsub_has_no_request() {
        let reg = TransportRegistry::new();
        let a = reg.resolve(&binding("mqtt")).unwrap();
        assert_eq!(a.request("/x", json!(1)), Err(TransportError::Unsupported("request")));
    }

    #[test]
    fn dropped_subscription_stops_delivery() {
        let reg = TransportRegistry::new();
        let a = reg.resolve(&binding("ros+ws")).unwrap();
        let keep = a.subscribe("/t").unwrap();
        let gone = a.subscribe("/t").unwrap();
        drop(gone);
        a.publish("/t", json!(1)).unwrap();
        assert_eq!(keep.drain().len(), 1);
    }
}
