//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use common::{
    oracle_bgp_bounded, pairwise_oracle, placements_graph, random_bgp, random_message, random_placements, random_setup,
    random_triples, SETUP, SETUP_PLUS_ONE, WORLD,
};
use kgmas::acl::{parse_trace_line, AclMessage, Bus, Performative};
use kgmas::agent_factory::{agent_id_for, generate_agents};
use kgmas::cli::{cmd_run, RunConfig, DATA_FILE, EXIT_OK, TRACE_FILE};
use kgmas::coordination::{
    check_world_consistency, expected_skeleton, load_protocol, role_bindings, stored_task_state, ConsistencyRule, Party,
    System, KG_AGENT_ID,
};
use kgmas::environments::{WarehouseWorld, WorldFixture};
use kgmas::kg_store::{evaluate, turtle, Graph, Literal, NamedGraphStore, Object, Triple};
use kgmas::transports::TransportRegistry;
use kgmas::vocab::{self, kgmas};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;
use tempfile::TempDir;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn graph(text: &str) -> Graph {
    turtle::parse(text).expect("fixture parses").into_iter().collect()
}

fn task_id() -> kgmas::kg_store::Iri {
    kgmas("task_move_pallet_1")
}

struct Run {
    code: i32,
    stdout: String,
    trace: String,
    data: String,
}

fn run(out: &Path, overrides: &[(&str, &str)]) -> Run {
    let mut config = RunConfig::new(fixture("fig3_setup.ttl"), fixture("warehouse_world.json"), out);
    config.params = [("from", "P1"), ("to", "P2")].into_iter().map(|(k, v)| (k.into(), v.into())).collect();
    config.seed = 0;
    config.transport_overrides = overrides.iter().map(|(a, s)| (a.to_string(), s.to_string())).collect();
    let mut buf = Vec::new();
    let code = cmd_run(&config, &mut buf);
    Run {
        code,
        stdout: String::from_utf8_lossy(&buf).into_owned(),
        trace: fs::read_to_string(out.join(TRACE_FILE)).unwrap_or_default(),
        data: fs::read_to_string(out.join(DATA_FILE)).unwrap_or_default(),
    }
}

fn criterion_1() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let r = run(dir.path(), &[]);
    ensure!(r.code == EXIT_OK, "exit {}: {}", r.code, r.stdout.trim());
    let data = graph(&r.data);
    let placed = Object::Literal(Literal::plain("pallet_placed"));
    let events = data.subjects(&vocab::event_name(), &placed).filter(|e| data.contains(&Triple::new((*e).clone(), vocab::of_task(), task_id()))).count();
    ensure!(events == 1, "{events} pallet_placed events for the task");
    let pos = data.object(&kgmas("pallet1"), &vocab::at_position()).map(Object::text);
    ensure!(pos == Some("P2"), "pallet at {pos:?}");

    let setup = graph(SETUP);
    let proto = load_protocol(&setup, &kgmas("MovePallet")).map_err(|e| e.to_string())?;
    let mut parties: BTreeMap<String, Party> = role_bindings(&setup, agent_id_for).into_iter().map(|(role, a)| (a, Party::Role(role))).collect();
    parties.insert(KG_AGENT_ID.to_string(), Party::Kg);
    let mut projected = Vec::new();
    for line in r.trace.lines() {
        let e = parse_trace_line(line).map_err(|e| e.to_string())?;
        let party = |a: &str| parties.get(a).cloned().ok_or_else(|| format!("unbound agent {a}"));
        projected.push((e.performative, party(&e.sender)?, party(&e.receiver)?));
    }
    let expected: Vec<_> = expected_skeleton(&proto).into_iter().map(|x| (x.performative, x.sender, x.receiver)).collect();
    ensure!(projected == expected, "projection {projected:?} != skeleton {expected:?}");
    Ok(format!("{} messages match the skeleton, pallet at P2", expected.len()))
}

fn criterion_2() -> Outcome {
    let base = generate_agents(&graph(SETUP)).map_err(|e| e.to_string())?;
    ensure!(base.len() == 2, "fixture gave {} agents", base.len());
    let mut rng = StdRng::seed_from_u64(2);
    for i in 0..50 {
        let k = rng.gen_range(0..=10);
        let n = generate_agents(&graph(&random_setup(&mut rng, k))).map_err(|e| format!("setup {i}: {e}"))?.len();
        ensure!(n == k, "setup {i}: {k} assets gave {n} agents");
    }
    // config-only diff: the larger fixture contains every triple of the smaller one
    let (small, large) = (graph(SETUP), graph(SETUP_PLUS_ONE));
    ensure!(small.iter().all(|t| large.contains(&t)), "plus-one fixture drops triples");
    let plus = generate_agents(&large).map_err(|e| e.to_string())?;
    ensure!(plus.len() == base.len() + 1, "plus-one fixture gave {} agents", plus.len());
    Ok("2 / 50 random k / k+1".into())
}

fn criterion_3() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let graphs: Vec<Vec<Triple>> = (0..20).map(|_| random_triples(&mut rng, 500)).collect();
    let mut regenerated = 0;
    let mut solutions = 0;
    for q in 0..50 {
        let triples = &graphs[q % graphs.len()];
        let g: Graph = triples.iter().cloned().collect();
        let (patterns, expected) = loop {
            let p = random_bgp(&mut rng, triples);
            match oracle_bgp_bounded(triples, &p, 20_000) {
                Some(e) => break (p, e),
                None => regenerated += 1,
            }
        };
        let got = evaluate(&g, &patterns).map_err(|e| e.to_string())?;
        let got_set: BTreeSet<_> = got.iter().cloned().collect();
        ensure!(got_set.len() == got.len(), "query {q}: duplicate solutions");
        ensure!(got_set == expected, "query {q}: {} solutions, oracle {}", got_set.len(), expected.len());
        solutions += expected.len();
    }
    Ok(format!("50 queries, {solutions} solutions, {regenerated} oversized queries redrawn"))
}

fn criterion_4() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    for i in 0..100 {
        let g: Graph = random_triples(&mut rng, 200).into_iter().collect();
        let text = turtle::serialize(&g);
        let back: Graph = turtle::parse(&text).map_err(|e| format!("graph {i}: {e}"))?.into_iter().collect();
        ensure!(back == g, "graph {i}: dump/load mismatch");
    }
    let scenario_contents = [
        json!({"task": "move_pallet", "from": "P1", "to": "P2"}),
        json!({"event": "pallet_placed"}),
    ];
    let mut messages: Vec<AclMessage> = scenario_contents
        .iter()
        .map(|c| AclMessage::new(Performative::Request, "turtlebot", "roboticarm", "move_pallet#1", c.clone()))
        .collect();
    messages.extend((0..998).map(|_| random_message(&mut rng)));
    for (i, m) in messages.iter().enumerate() {
        let back = AclMessage::deserialize(&m.serialize()).map_err(|e| format!("message {i}: {e}"))?;
        ensure!(back == *m, "message {i}: round trip mismatch");
    }
    Ok("100 graphs, 1000 messages, 0 mismatches".into())
}

fn criterion_5() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let schemes = ["ros+ws", "mqtt", "rest+http"];
    let mut states = BTreeSet::new();
    let mut dumps = BTreeSet::new();
    for bot in schemes {
        for arm in schemes {
            let out = dir.path().join(format!("{bot}-{arm}").replace('+', "_"));
            let r = run(&out, &[("Turtlebot", bot), ("RoboticArm", arm)]);
            ensure!(r.code == EXIT_OK, "{bot}/{arm}: exit {}: {}", r.code, r.stdout.trim());
            let state = stored_task_state(&graph(&r.data), &task_id());
            ensure!(state == Some(("completed".into(), 8)), "{bot}/{arm}: task state {state:?}");
            states.insert(state);
            dumps.insert(r.data);
        }
    }
    ensure!(states.len() == 1, "task states differ");
    Ok(format!("9 assignments completed, {} distinct data dump(s)", dumps.len()))
}

fn criterion_6() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    for i in 0..200 {
        let entities = random_placements(&mut rng);
        let got: BTreeSet<_> = check_world_consistency(&placements_graph(&entities))
            .into_iter()
            .map(|v| {
                let rule = match v.rule {
                    ConsistencyRule::PhysicalColocation => "physical_colocation",
                    ConsistencyRule::PhysicalDigitalColocation => "physical_digital_colocation",
                };
                (v.position, v.entities.0.local_name().to_string(), v.entities.1.local_name().to_string(), rule)
            })
            .collect();
        ensure!(got == pairwise_oracle(&entities), "placement {i}: {got:?}");
    }

    let store = NamedGraphStore::new();
    store.load_turtle(&vocab::setup_graph(), SETUP).map_err(|e| e.to_string())?;
    let world = WarehouseWorld::from_fixture(&WorldFixture::from_json(WORLD).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut sys = System::new(store, world, TransportRegistry::new()).map_err(|e| e.to_string())?;
    sys.start_all().map_err(|e| e.to_string())?;
    let params = [("from", "P1"), ("to", "P2")].into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let report = sys.run_task("move_pallet", &params).map_err(|e| e.to_string())?;
    ensure!(report.completed(), "scenario stalled at {:?}", report.stalled_step);
    let ticks = sys.consistency_log().len();
    ensure!(ticks > 0, "no ticks checked");
    if let Some((tick, v)) = sys.consistency_log().iter().find(|(_, v)| !v.is_empty()) {
        return Err(format!("tick {tick}: {} violations", v.len()));
    }
    Ok(format!("200 placements match the oracle, 0 violations over {ticks} ticks"))
}

fn criterion_7() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let a = run(&dir.path().join("a"), &[]);
    let b = run(&dir.path().join("b"), &[]);
    ensure!(a.code == EXIT_OK && b.code == EXIT_OK, "runs exited {} and {}", a.code, b.code);
    ensure!(a.trace == b.trace, "traces differ");
    ensure!(a.data == b.data, "data dumps differ");
    Ok(format!("{} trace bytes, {} data bytes identical", a.trace.len(), a.data.len()))
}

fn criterion_8() -> Outcome {
    const SENDERS: usize = 4;
    const PER_SENDER: usize = 250;
    let bus = Bus::new();
    bus.register("sink").map_err(|e| e.to_string())?;
    let senders: Vec<_> = (0..SENDERS)
        .map(|s| {
            let bus = bus.clone();
            thread::spawn(move || {
                for n in 0..PER_SENDER {
                    bus.send(AclMessage::new(Performative::Inform, format!("s{s}"), "sink", "bulk", json!({"n": n}))).expect("send");
                }
            })
        })
        .collect();
    let mut received = Vec::new();
    while received.len() < SENDERS * PER_SENDER {
        match bus.receive("sink", Duration::from_secs(5)).map_err(|e| e.to_string())? {
            Some(m) => received.push(m),
            None => return Err(format!("only {} messages arrived", received.len())),
        }
    }
    for s in senders {
        s.join().map_err(|_| "sender panicked".to_string())?;
    }
    ensure!(bus.try_receive("sink").map_err(|e| e.to_string())?.is_none(), "extra message delivered");
    for s in 0..SENDERS {
        let order: Vec<u64> = received.iter().filter(|m| m.sender == format!("s{s}")).filter_map(|m| m.content["n"].as_u64()).collect();
        ensure!(order == (0..PER_SENDER as u64).collect::<Vec<_>>(), "sender s{s} out of order");
    }
    let key = |m: &AclMessage| m.serialize();
    let mut sent: Vec<String> = bus.log().iter().map(|(_, m)| key(m)).collect();
    let mut got: Vec<String> = received.iter().map(key).collect();
    sent.sort();
    got.sort();
    ensure!(sent == got, "received multiset differs from the send log");
    Ok("1000 messages, per-sender FIFO, exactly once".into())
}

fn main() {
    let criteria: [(u32, Option<u64>, fn() -> Outcome); 8] = [
        (1, Some(5), criterion_1),
        (2, Some(10), criterion_2),
        (3, Some(30), criterion_3),
        (4, None, criterion_4),
        (5, Some(60), criterion_5),
        (6, None, criterion_6),
        (7, None, criterion_7),
        (8, None, criterion_8),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, limit, f) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if secs >= l as f64 => Err(format!("took {secs:.2} s, limit {l} s")),
            (o, _) => o,
        };
        let timing = match limit {
            Some(l) => format!("{secs:.2} s, limit {l} s"),
            None => format!("{secs:.2} s"),
        };
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail}; {timing})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL ({detail}; {timing})");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
