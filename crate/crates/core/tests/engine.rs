use std::path::{Path, PathBuf};

use gridloop::controller::{GeneratorMode, OperatorRequest, SyncStatus};
use gridloop::devices::RelayState;
use gridloop::engine::{run_scenario, EventKind, Scenario, Simulation, SimulationRecord};

fn reference(name: &str) -> Scenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn first_annotated(record: &SimulationRecord, needle: &str) -> Option<usize> {
    record
        .decisions
        .iter()
        .position(|d| d.annotations.iter().any(|a| a.contains(needle)))
}

#[test]
fn reference_scenarios_round_trip_through_toml() {
    for f in ["nominal.toml", "gen1-trip.toml", "overcurrent.toml", "sync-phase-offset.toml"] {
        let s = reference(f);
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s, "{f}");
    }
}

#[test]
fn phase_offset_sync_is_held_off_until_residuals_clear() {
    let r = run_scenario(&reference("sync-phase-offset.toml")).unwrap();
    assert!(r.diagnostic.is_none());
    let blocked = first_annotated(&r, "g1 sync blocked: phase residual").expect("phase hold-off");
    let closed = first_annotated(&r, "g1 sync close").expect("eventual close");
    assert!(closed > blocked);

    let d = &r.decisions[closed];
    assert_eq!(d.sync_close, Some(1));
    let cfg = &r.scenario.controller.sync;
    match d.sync[0] {
        Some(SyncStatus::Live { residuals, in_tolerance }) => {
            assert!(in_tolerance);
            assert!(residuals.phase.abs() <= cfg.phase);
        }
        other => panic!("close without live-bus check: {other:?}"),
    }
    // The permissive held for the whole window before the close.
    for prev in &r.decisions[closed + 1 - cfg.window as usize..=closed] {
        assert!(matches!(prev.sync[0], Some(SyncStatus::Live { in_tolerance: true, .. })));
    }
    let delay = (r.scenario.devices.relay_delay / r.scenario.controller.control_period).ceil() as usize;
    let after = closed + 2 + delay;
    assert!(r.frames[after.min(r.frames.len() - 1)].is_closed("BRK1"));
    assert_eq!(r.decisions.last().unwrap().modes[0], GeneratorMode::Running);
}

#[test]
fn injected_generator_trip_follows_isolation_path() {
    let mut sim = Simulation::new(Scenario::nominal("inject-trip", 1.5)).unwrap();
    while sim.time() < 0.5 - 1e-9 {
        sim.step_period();
    }
    sim.inject(EventKind::GeneratorTrip { generator: 2 }).unwrap();
    sim.run();
    let r = sim.into_record();
    assert_eq!(r.events.len(), 1);
    assert!((r.events[0].applied_at - 0.5).abs() < 1e-12);
    let log = r.decision_log();
    let isolated = log.lines().find(|l| l.contains("g2 isolated")).expect("isolation logged");
    assert!(isolated.starts_with("t=0.500000"), "{isolated}");
    assert!(isolated.contains("BRK2:open"));
    let last = r.decisions.last().unwrap();
    assert_eq!(last.modes[1], GeneratorMode::Tripped);
    assert!(!r.frames.last().unwrap().is_closed("BRK2"));
}

#[test]
fn injection_for_unknown_device_is_rejected_without_side_effects() {
    let s = Scenario::nominal("inject-bad", 0.2);
    let baseline = run_scenario(&s).unwrap();
    let mut sim = Simulation::new(s).unwrap();
    for _ in 0..50 {
        sim.step_period();
    }
    for bad in [
        EventKind::OperatorCommand(OperatorRequest::RelaySet {
            device: "R7".into(),
            state: RelayState::Open,
        }),
        EventKind::GeneratorTrip { generator: 3 },
        EventKind::SensorBias {
            sensor: "g3_field_current".into(),
            bias: 1.0,
        },
    ] {
        assert!(sim.inject(bad).is_err());
    }
    sim.run();
    let r = sim.into_record();
    assert!(r.events.is_empty());
    assert_eq!(r.digest, baseline.digest);
}

#[test]
fn applied_events_are_ordered_on_period_boundaries() {
    let mut s = Scenario::nominal("ordering", 0.5);
    let at = |t: f64, kind: EventKind| gridloop::engine::Event { t, kind };
    s.events = vec![
        at(0.01, EventKind::SensorBias { sensor: "load_voltage".into(), bias: 0.5 }),
        at(0.0105, EventKind::RelayForce { device: "R3".into(), state: RelayState::Open }),
        at(0.2, EventKind::OperatorCommand(OperatorRequest::RelaySet { device: "R3".into(), state: RelayState::Closed })),
        at(0.2, EventKind::LoadStep { load: "L1".into(), power: Some(300.0), resistance: None, reactance: None }),
    ];
    let r = run_scenario(&s).unwrap();
    let applied: Vec<f64> = r.events.iter().map(|e| e.applied_at).collect();
    assert_eq!(applied, [0.01, 0.011, 0.2, 0.2]);
    assert_eq!(r.events[1].scheduled, 0.0105);
    for e in &r.events {
        let k = e.applied_at / s.controller.control_period;
        assert!((k - k.round()).abs() < 1e-9);
    }
}

#[test]
fn ten_second_decision_log_matches_golden_and_replays_identically() {
    let r = run_scenario(&reference("gen1-trip.toml")).unwrap();
    let log = r.decision_log();
    assert_eq!(r.decisions.len(), 7000);

    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("record.json");
    r.save(&saved).unwrap();
    let loaded = SimulationRecord::load(&saved).unwrap();
    let replayed = run_scenario(&loaded.scenario).unwrap();
    assert_eq!(replayed.decision_log(), log);
    assert_eq!(replayed.digest, r.digest);

    let nominal = run_scenario(&reference("nominal.toml")).unwrap();
    assert_eq!(nominal.decisions.len(), 10_000);
    let path = golden("nominal.decisions.log");
    let text = nominal.decision_log();
    if std::env::var_os("GRIDLOOP_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file; set GRIDLOOP_BLESS=1 to create");
    assert!(text == expected, "decision log drifted from {}", path.display());
    let replay = run_scenario(&nominal.scenario).unwrap();
    assert_eq!(replay.decision_log(), expected);
}
