mod common;

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use common::{random_json, random_message};
use kgmas::acl::{canonical_json, parse_trace_line, trace_line, AclError, AclMessage, Bus, Performative};
use kgmas::rami::CommunicationBinding;
use kgmas::transports::{TransportKind, TransportRegistry};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::{json, Value};

const REQUEST_CONTENT: &str = r#"{"task": "move_pallet", "from": "P1", "to": "P2"}"#;
const EVENT_CONTENT: &str = r#"{"event": "pallet_placed"}"#;

#[test]
fn thousand_random_messages_round_trip() {
    let mut rng = StdRng::seed_from_u64(42);
    for i in 0..1000 {
        let msg = random_message(&mut rng);
        let text = msg.serialize();
        let back = AclMessage::deserialize(&text).unwrap_or_else(|e| panic!("message {i}: {e}\n{text}"));
        assert_eq!(back, msg, "message {i}");
        assert_eq!(back.serialize(), text);
    }
}

#[test]
fn scenario_contents_survive_verbatim() {
    for (perf, text) in [(Performative::Request, REQUEST_CONTENT), (Performative::Inform, EVENT_CONTENT)] {
        let content: Value = serde_json::from_str(text).unwrap();
        let msg = AclMessage::new(perf, "turtlebot", "roboticarm", "move_pallet#1", content.clone());
        let back = AclMessage::deserialize(&msg.serialize()).unwrap();
        assert_eq!(back.content, content);
        let entry = parse_trace_line(&trace_line(7, &back)).unwrap();
        assert_eq!(entry.content, content);
    }
    assert_eq!(canonical_json(&serde_json::from_str(REQUEST_CONTENT).unwrap()), r#"{"from":"P1","task":"move_pallet","to":"P2"}"#);
}

#[test]
fn malformed_text_is_distinguished() {
    let good = AclMessage::new(Performative::Inform, "a", "b", "c", json!({})).serialize();
    assert!(matches!(AclMessage::deserialize("{"), Err(AclError::Malformed(_))));
    assert!(matches!(AclMessage::deserialize("[]"), Err(AclError::Malformed(_))));
    let no_sender = good.replace(r#","sender":"a""#, "");
    assert_eq!(AclMessage::deserialize(&no_sender), Err(AclError::MissingField("sender")));
    let bad_perf = good.replace(r#""inform""#, r#""propose""#);
    assert_eq!(AclMessage::deserialize(&bad_perf), Err(AclError::UnknownPerformative("propose".into())));
    let loop_back = good.replace(r#""receiver":"b""#, r#""receiver":"a""#);
    assert!(matches!(AclMessage::deserialize(&loop_back), Err(AclError::Invalid(_))));
}

#[test]
fn concurrent_senders_keep_fifo_and_exactly_once() {
    const SENDERS: usize = 4;
    const PER_SENDER: usize = 250;
    let bus = Bus::new();
    bus.register("sink").unwrap();
    let handles: Vec<_> = (0..SENDERS)
        .map(|s| {
            let bus = bus.clone();
            thread::spawn(move || {
                for n in 0..PER_SENDER {
                    let msg = AclMessage::new(Performative::Inform, format!("s{s}"), "sink", format!("c{s}"), json!({"n": n}));
                    bus.send(msg).unwrap();
                }
            })
        })
        .collect();
    let mut received: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for _ in 0..SENDERS * PER_SENDER {
        let m = bus.receive("sink", Duration::from_secs(5)).unwrap().expect("message lost");
        received.entry(m.sender).or_default().push(m.content["n"].as_u64().unwrap());
    }
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(bus.try_receive("sink").unwrap(), None);
    assert_eq!(received.len(), SENDERS);
    for seq in received.values() {
        assert_eq!(*seq, (0..PER_SENDER as u64).collect::<Vec<_>>());
    }
    let log_seqs: Vec<u64> = bus.log().iter().map(|(s, _)| *s).collect();
    assert_eq!(log_seqs, (1..=(SENDERS * PER_SENDER) as u64).collect::<Vec<_>>());
}

#[test]
fn reply_threading() {
    let bus = Bus::new();
    bus.register("a").unwrap();
    bus.register("b").unwrap();
    let req = AclMessage::new(Performative::Request, "a", "b", "c1", json!({})).reply_with("r1");
    bus.send(req.clone()).unwrap();
    assert!(bus.send(req).is_err(), "reply_with reused");
    let stray = AclMessage::new(Performative::Inform, "b", "a", "c2", json!({})).in_reply_to("r1");
    assert!(bus.send(stray).is_err(), "key from another conversation");
    bus.send(AclMessage::new(Performative::Confirm, "b", "a", "c1", json!({})).in_reply_to("r1")).unwrap();
    assert_eq!(bus.conversation("c1").len(), 2);
    assert_eq!(
        bus.send(AclMessage::new(Performative::Inform, "a", "ghost", "c1", json!({}))),
        Err(AclError::UnknownReceiver("ghost".into()))
    );
}

/// The same payload sequence arrives unchanged over every hub kind.
#[test]
fn transports_are_content_neutral() {
    let mut rng = StdRng::seed_from_u64(5);
    let payloads: Vec<Value> = (0..50).map(|_| json!({"p": random_json(&mut rng, 3)})).collect();
    for kind in TransportKind::ALL {
        let registry = TransportRegistry::new();
        let binding = CommunicationBinding { protocol_scheme: kind.default_scheme().into(), endpoint: "localhost:1".into() };
        let rx = registry.resolve(&binding).unwrap();
        let tx = registry.resolve(&binding).unwrap();
        let sub = rx.subscribe("/t").unwrap();
        for p in &payloads {
            tx.publish("/t", p.clone()).unwrap();
        }
        assert_eq!(sub.drain(), payloads, "{kind:?}");
    }
}

proptest! {
    #[test]
    fn canonical_json_is_stable(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let v = random_json(&mut rng, 4);
        let text = canonical_json(&v);
        let back: Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &v);
        prop_assert_eq!(canonical_json(&back), text);
    }
}
