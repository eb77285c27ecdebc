use std::collections::BTreeMap;

use kgmas::acl::Performative;
use kgmas::coordination::{
    check_world_consistency, expected_skeleton, load_protocol, recorded_events, replay, stored_task_state, Party,
    System, TaskState, TaskStatus, KG_AGENT_ID,
};
use kgmas::environments::{WarehouseWorld, WorldFixture};
use kgmas::kg_store::{NamedGraphStore, Object};
use kgmas::transports::TransportRegistry;
use kgmas::vocab;

const SETUP: &str = include_str!("../../../fixtures/fig3_setup.ttl");
const WORLD: &str = include_str!("../../../fixtures/warehouse_world.json");

fn system() -> System {
    let store = NamedGraphStore::new();
    store.load_turtle(&vocab::setup_graph(), SETUP).unwrap();
    let world = WarehouseWorld::from_fixture(&WorldFixture::from_json(WORLD).unwrap()).unwrap();
    System::new(store, world, TransportRegistry::new()).unwrap()
}

fn params() -> BTreeMap<String, String> {
    [("from", "P1"), ("to", "P2")].into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn move_pallet_completes() {
    let mut sys = system();
    sys.start_all().unwrap();
    let report = sys.run_task("move_pallet", &params()).unwrap();
    assert!(report.completed(), "{report:?}");

    let data = sys.store.snapshot(sys.data_graph());
    let pallet = vocab::kgmas("pallet1");
    assert_eq!(data.object(&pallet, &vocab::at_position()).map(Object::text), Some("P2"));
    let placed = data.subjects(&vocab::event_name(), &Object::Literal(kgmas::kg_store::Literal::plain("pallet_placed"))).count();
    assert_eq!(placed, 1);

    // skeleton
    let setup = sys.store.snapshot(sys.setup_graph());
    let proto = load_protocol(&setup, &vocab::kgmas("MovePallet")).unwrap();
    let roles: BTreeMap<&str, Party> = [
        (KG_AGENT_ID, Party::Kg),
        ("turtlebot", Party::Role(vocab::kgmas("mover"))),
        ("roboticarm", Party::Role(vocab::kgmas("placer"))),
    ]
    .into_iter()
    .collect();
    let projected: Vec<(Performative, Party, Party)> = report
        .trace
        .iter()
        .map(|(_, m)| (m.performative, roles[m.sender.as_str()].clone(), roles[m.receiver.as_str()].clone()))
        .collect();
    let expected: Vec<_> = expected_skeleton(&proto).into_iter().map(|e| (e.performative, e.sender, e.receiver)).collect();
    assert_eq!(projected, expected);
    assert_eq!(expected.len(), 8);

    for (tick, v) in sys.consistency_log() {
        assert!(v.is_empty(), "tick {tick}: {v:?}");
    }
    assert!(check_world_consistency(&data).is_empty());

    let events = recorded_events(&data, &report.state.task_id);
    let fresh = TaskState::new(report.state.task_id.clone(), &proto, params());
    assert_eq!(replay(&proto, &fresh, &events).unwrap(), report.state);
    assert_eq!(stored_task_state(&data, &report.state.task_id), Some(("completed".to_string(), 8)));
}

#[test]
fn zero_deadline_fails_at_step_one() {
    let mut sys = system();
    sys.start_all().unwrap();
    sys.set_step_deadline_ms(0);
    let report = sys.run_task("move_pallet", &params()).unwrap();
    assert_eq!(report.state.status, TaskStatus::Failed);
    assert_eq!(report.stalled_step, Some(1));
}

#[test]
fn missing_placer_stalls_at_step_three() {
    let mut sys = system();
    sys.start_agent("turtlebot").unwrap();
    let report = sys.run_task("move_pallet", &params()).unwrap();
    assert_eq!(report.state.status, TaskStatus::Failed);
    assert_eq!(report.stalled_step, Some(3));
}
