//! Command implementations behind the `kgmas` binary. Each returns a process
//! exit code: 0 success, 1 domain failure, 2 input or parse error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::acl::{parse_trace_line, trace_line, TraceEntry};
use crate::agent_factory::{self, agent_id_for, AgentSpec, FactoryError};
use crate::coordination::{
    check_world_consistency, expected_skeleton, load_protocol, list_protocols, role_bindings, Party, ProtocolDefinition,
    System, SystemError, DEFAULT_STEP_DEADLINE_MS,
};
use crate::environments::{WarehouseWorld, WorldFixture};
use crate::kg_store::{turtle, Graph, Iri, KgError, Literal, NamedGraphStore, Triple};
use crate::rami;
use crate::transports::TransportRegistry;
use crate::vocab;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

pub const TRACE_FILE: &str = "trace.tsv";
pub const DATA_FILE: &str = "data.ttl";
pub const CONSISTENCY_FILE: &str = "consistency.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub setup: PathBuf,
    pub world: PathBuf,
    pub task: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub deadline_ms: u64,
    pub out: PathBuf,
    /// Asset (local name or agent id) → protocol scheme.
    pub transport_overrides: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(setup: impl Into<PathBuf>, world: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            setup: setup.into(),
            world: world.into(),
            task: "move_pallet".to_string(),
            params: BTreeMap::new(),
            seed: 0,
            deadline_ms: DEFAULT_STEP_DEADLINE_MS,
            out: out.into(),
            transport_overrides: BTreeMap::new(),
        }
    }
}

/// `k=v` → (k, v).
pub fn parse_binding(text: &str) -> Result<(String, String), String> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got \"{text}\"")),
    }
}

struct InputError(String);

impl From<io::Error> for InputError {
    fn from(e: io::Error) -> Self {
        InputError(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn parse_turtle(path: &Path) -> Result<Graph, InputError> {
    let text = read(path)?;
    match turtle::parse(&text) {
        Ok(triples) => Ok(triples.into_iter().collect()),
        Err(e @ KgError::Parse { .. }) => Err(InputError(format!("{}: {e}", path.display()))),
        Err(e) => Err(InputError(e.to_string())),
    }
}

macro_rules! input {
    ($out:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(InputError(msg)) => {
                let _ = writeln!($out, "error: {msg}");
                return EXIT_INPUT;
            }
        }
    };
}

pub fn cmd_validate(setup: &Path, out: &mut dyn Write) -> i32 {
    let graph = input!(out, parse_turtle(setup));
    let report = rami::validate_setup(&graph, &TransportRegistry::new().schemes());
    let _ = write!(out, "{report}");
    if report.ok() {
        let _ = writeln!(out, "ok: {} assets, {} systems", rami::list_assets(&graph).len(), rami::list_systems(&graph).len());
        EXIT_OK
    } else {
        let _ = writeln!(out, "{} violations", report.violations.len());
        EXIT_FAILURE
    }
}

/// One line per spec: id, asset kind, realm, scheme, role.
pub fn spec_line(spec: &AgentSpec) -> String {
    let bp = &spec.blueprint;
    format!(
        "{}\t{}\t{}\t{}\t{}",
        spec.agent_id,
        bp.asset_kind.local_name(),
        bp.realm,
        bp.binding.protocol_scheme,
        bp.coordination_role.local_name()
    )
}

fn report_factory_error(out: &mut dyn Write, e: &FactoryError) -> i32 {
    let _ = writeln!(out, "error: {e}");
    match e {
        FactoryError::Invalid(_) | FactoryError::DuplicateAgentId(_) | FactoryError::Rami(_) => EXIT_FAILURE,
        _ => EXIT_INPUT,
    }
}

pub fn cmd_generate(setup: &Path, emit: Option<&Path>, out: &mut dyn Write) -> i32 {
    let graph = input!(out, parse_turtle(setup));
    let specs = match agent_factory::generate_agents(&graph) {
        Ok(s) => s,
        Err(e) => return report_factory_error(out, &e),
    };
    for spec in &specs {
        let _ = writeln!(out, "{}", spec_line(spec));
    }
    if let Some(dir) = emit {
        let written: Result<(), InputError> = (|| {
            fs::create_dir_all(dir)?;
            for spec in &specs {
                fs::write(dir.join(format!("{}.json", spec.agent_id)), spec.to_json() + "\n")?;
            }
            Ok(())
        })();
        input!(out, written);
    }
    EXIT_OK
}

/// Replace the protocol scheme of the named assets.
fn apply_overrides(store: &NamedGraphStore, overrides: &BTreeMap<String, String>) -> Result<(), InputError> {
    let setup = store.snapshot(&vocab::setup_graph());
    let assets = rami::list_assets(&setup);
    for (name, scheme) in overrides {
        let asset = assets
            .iter()
            .find(|a| a.local_name() == name || agent_id_for(a) == *name)
            .ok_or_else(|| InputError(format!("--transport-override: no asset \"{name}\"")))?;
        let old: Vec<Triple> = setup
            .objects(asset, &vocab::has_protocol())
            .map(|o| Triple::new(asset.clone(), vocab::has_protocol(), o.clone()))
            .collect();
        let new = Triple::new(asset.clone(), vocab::has_protocol(), Literal::plain(scheme.clone()));
        store.atomic_update(&vocab::setup_graph(), &old, &[new]);
    }
    Ok(())
}

fn load_world(path: &Path, seed: u64) -> Result<WarehouseWorld, InputError> {
    let fixture = WorldFixture::from_json(&read(path)?).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let mut world = WarehouseWorld::from_fixture(&fixture).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    world.seed = seed;
    Ok(world)
}

pub fn cmd_run(config: &RunConfig, out: &mut dyn Write) -> i32 {
    let store = NamedGraphStore::new();
    let setup_text = input!(out, read(&config.setup));
    if let Err(e) = store.load_turtle(&vocab::setup_graph(), &setup_text) {
        let _ = writeln!(out, "error: {}: {e}", config.setup.display());
        return EXIT_INPUT;
    }
    input!(out, apply_overrides(&store, &config.transport_overrides));
    let world = input!(out, load_world(&config.world, config.seed));

    let mut system = match System::new(store, world, TransportRegistry::new()) {
        Ok(s) => s,
        Err(SystemError::Factory(e)) => return report_factory_error(out, &e),
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return EXIT_FAILURE;
        }
    };
    system.set_step_deadline_ms(config.deadline_ms);
    if let Err(e) = system.start_all() {
        let _ = writeln!(out, "error: {e}");
        return EXIT_FAILURE;
    }
    let report = match system.run_task(&config.task, &config.params) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return EXIT_INPUT;
        }
    };
    system.shutdown_all();

    let trace: String = report.trace.iter().map(|(seq, m)| trace_line(*seq, m) + "\n").collect();
    let data = system.store.dump_turtle(system.data_graph());
    let mut consistency = String::new();
    let mut violations = 0;
    for (tick, found) in system.consistency_log() {
        for v in found {
            consistency.push_str(&format!("{tick}\t{v}\n"));
            violations += 1;
        }
    }
    consistency.push_str(&format!("# {} ticks checked, {violations} violations\n", system.consistency_log().len()));
    let written: Result<(), InputError> = (|| {
        fs::create_dir_all(&config.out)?;
        fs::write(config.out.join(TRACE_FILE), &trace)?;
        fs::write(config.out.join(DATA_FILE), &data)?;
        fs::write(config.out.join(CONSISTENCY_FILE), &consistency)?;
        Ok(())
    })();
    input!(out, written);

    match report.stalled_step {
        None => {
            let _ = writeln!(
                out,
                "{}: completed in {} ticks, {} messages, {violations} consistency violations",
                report.conversation_id,
                report.ticks,
                report.trace.len()
            );
        }
        Some(step) => {
            let _ = writeln!(out, "{}: failed at step {step} after {} ticks", report.conversation_id, report.ticks);
        }
    }
    if report.completed() && violations == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Print a Turtle file in canonical form.
pub fn cmd_dump(path: &Path, out: &mut dyn Write) -> i32 {
    let graph = input!(out, parse_turtle(path));
    let _ = write!(out, "{}", turtle::serialize(&graph));
    EXIT_OK
}

pub fn cmd_check(data: &Path, out: &mut dyn Write) -> i32 {
    let graph = input!(out, parse_turtle(data));
    let violations = check_world_consistency(&graph);
    for v in &violations {
        let _ = writeln!(out, "{v}");
    }
    let _ = writeln!(out, "{} violations", violations.len());
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Trace entries grouped by protocol step, following the expected message order.
pub fn annotate_trace(
    proto: &ProtocolDefinition,
    roles: &BTreeMap<String, Iri>,
    entries: &[TraceEntry],
) -> (BTreeMap<usize, Vec<TraceEntry>>, Vec<TraceEntry>) {
    let party = |agent: &str| if agent == crate::coordination::KG_AGENT_ID { Some(Party::Kg) } else { roles.get(agent).cloned().map(Party::Role) };
    let mut expected = expected_skeleton(proto).into_iter().peekable();
    let mut by_step: BTreeMap<usize, Vec<TraceEntry>> = BTreeMap::new();
    let mut unmatched = Vec::new();
    for e in entries {
        let fits = expected.peek().is_some_and(|x| {
            x.performative == e.performative && Some(&x.sender) == party(&e.sender).as_ref() && Some(&x.receiver) == party(&e.receiver).as_ref()
        });
        if fits {
            let x = expected.next().expect("peeked");
            by_step.entry(x.step).or_default().push(e.clone());
        } else {
            unmatched.push(e.clone());
        }
    }
    (by_step, unmatched)
}

fn entry_line(e: &TraceEntry) -> String {
    format!("  #{} {} {} -> {} {}", e.seq, e.performative, e.sender, e.receiver, crate::acl::canonical_json(&e.content))
}

/// Pretty-print a trace file; with a setup graph, messages are grouped under
/// the protocol steps they belong to.
pub fn cmd_trace(trace: &Path, setup: Option<&Path>, out: &mut dyn Write) -> i32 {
    let text = input!(out, read(trace));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match parse_trace_line(line) {
            Ok(e) => entries.push(e),
            Err(e) => {
                let _ = writeln!(out, "error: {}:{}: {e}", trace.display(), n + 1);
                return EXIT_INPUT;
            }
        }
    }
    let Some(setup) = setup else {
        for e in &entries {
            let _ = writeln!(out, "{}", entry_line(e));
        }
        return EXIT_OK;
    };
    let graph = input!(out, parse_turtle(setup));
    let task = entries.first().map(|e| e.conversation_id.split('#').next().unwrap_or_default().to_string());
    let protocol = list_protocols(&graph)
        .into_iter()
        .find(|p| task.as_deref().is_none_or(|t| graph.object(p, &vocab::for_task()).map(|o| o.text()) == Some(t)));
    let Some(protocol_id) = protocol else {
        let _ = writeln!(out, "error: no protocol for the traced task");
        return EXIT_INPUT;
    };
    let proto = match load_protocol(&graph, &protocol_id) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return EXIT_FAILURE;
        }
    };
    let roles: BTreeMap<String, Iri> = role_bindings(&graph, agent_id_for).into_iter().map(|(r, a)| (a, r)).collect();
    let (by_step, unmatched) = annotate_trace(&proto, &roles, &entries);
    for step in &proto.steps {
        let target = step.target_role.as_ref().map(|t| format!(" -> {}", t.local_name())).unwrap_or_default();
        let _ = writeln!(out, "step {}: {} {}{}", step.index, step.role.local_name(), step.action_kind.as_str(), target);
        match by_step.get(&step.index) {
            Some(msgs) => {
                for e in msgs {
                    let _ = writeln!(out, "{}", entry_line(e));
                }
            }
            None => {
                let _ = writeln!(out, "  (no message exchange)");
            }
        }
    }
    if !unmatched.is_empty() {
        let _ = writeln!(out, "unannotated:");
        for e in &unmatched {
            let _ = writeln!(out, "{}", entry_line(e));
        }
    }
    EXIT_OK
}
