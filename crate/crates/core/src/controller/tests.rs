use super::limits::tests::nominal_frame;
use super::*;

fn cfg() -> ControllerConfig {
    ControllerConfig::default()
}

fn state() -> ControllerState {
    ControllerState::new(&cfg(), [true, true], [0.5; 2], [0.85; 2])
}

fn at(mut f: TelemetryFrame, t: f64) -> TelemetryFrame {
    f.timestamp = t;
    f
}

fn set_switch(f: &mut TelemetryFrame, id: &str, state: RelayState) {
    f.switches.iter_mut().find(|s| s.id == id).unwrap().state = state;
}

/// Runs `n` periods on a frame produced by `frame_at(k, &switches)` and
/// applies relay commands to the frame's switches one period later.
fn run(
    mut s: ControllerState,
    n: usize,
    mut frame_at: impl FnMut(usize, &TelemetryFrame) -> TelemetryFrame,
) -> (ControllerState, Vec<ControllerDecision>) {
    let mut base = nominal_frame();
    let mut out = Vec::new();
    for k in 0..n {
        let f = at(frame_at(k, &base), (k + 1) as f64 * 1e-3);
        let (ns, d) = controller_step(&f, &s, &cfg());
        for c in d.relay_commands.iter().chain(&d.breaker_commands) {
            set_switch(&mut base, &c.device, c.state);
        }
        s = ns;
        out.push(d);
    }
    (s, out)
}

#[test]
fn nominal_frame_yields_only_regulation() {
    let (_, d) = controller_step(&nominal_frame(), &state(), &cfg());
    assert!(!d.has_switching());
    assert!(d.annotations.is_empty());
    assert_eq!(d.system_mode, SystemMode::Normal);
    for x in d.excitation_duty.iter().chain(&d.armature_duty) {
        assert!((0.0..=1.0).contains(x));
    }
}

#[test]
fn step_is_pure() {
    let mut f = nominal_frame();
    f.load_bus.current_rms = 19.0;
    let s = state();
    let a = controller_step(&f, &s, &cfg());
    let b = controller_step(&f, &s, &cfg());
    assert_eq!(a, b);
    assert_eq!(a.1.log_line(), b.1.log_line());
}

#[test]
fn stale_frame_is_ignored() {
    let (s, _) = controller_step(&nominal_frame(), &state(), &cfg());
    let (s2, d) = controller_step(&nominal_frame(), &s, &cfg());
    assert_eq!(s2.stale_frames, 1);
    assert!(d.annotations[0].contains("stale"));
}

#[test]
fn log_line_format_is_stable() {
    let (_, d) = controller_step(&nominal_frame(), &state(), &cfg());
    let line = d.log_line();
    assert!(line.starts_with("t=0.001000 modes=running,running,normal exc="));
    assert!(line.ends_with("brk=- relay=- sync=-"));
}

#[test]
fn overcurrent_sheds_lowest_priority_first_after_confirmation() {
    let (_, ds) = run(state(), 80, |_, base| {
        let mut f = base.clone();
        let open = ["R1", "R2", "R3"].iter().filter(|r| !f.is_closed(r)).count();
        f.load_bus.current_rms = [20.0, 18.0, 15.0, 10.0][open];
        f
    });
    let sheds: Vec<(usize, String)> = ds
        .iter()
        .enumerate()
        .flat_map(|(k, d)| d.relay_commands.iter().map(move |c| (k, c.device.clone())))
        .collect();
    assert_eq!(sheds, vec![(49, "R1".to_string()), (50, "R2".to_string())]);
    assert!(ds[51].annotations.iter().any(|a| a.starts_with("shedding complete")));
}

#[test]
fn next_shed_waits_for_observed_open() {
    // Relays that never move: only one shed may be outstanding.
    let mut s = state();
    let mut f = nominal_frame();
    f.load_bus.current_rms = 20.0;
    let mut commands = 0;
    for k in 0..120 {
        let (ns, d) = controller_step(&at(f.clone(), (k + 1) as f64 * 1e-3), &s, &cfg());
        commands += d.relay_commands.len();
        s = ns;
    }
    assert_eq!(commands, 1);
    assert_eq!(s.system, SystemMode::Shedding);
}

#[test]
fn in_band_overcurrent_never_sheds() {
    let (s, ds) = run(state(), 500, |_, base| {
        let mut f = base.clone();
        f.load_bus.current_rms = 16.5;
        f
    });
    assert!(ds.iter().all(|d| d.relay_commands.is_empty()));
    assert!(ds[0].annotations.iter().any(|a| a.contains("excitation correction")));
    assert_eq!(s.system, SystemMode::Alert);
}

#[test]
fn beyond_band_overcurrent_holds_excitation() {
    let mut f = nominal_frame();
    f.load_bus.current_rms = 20.0;
    f.generators[0].terminal_voltage_rms = 150.0;
    let s = state();
    let (_, d) = controller_step(&f, &s, &cfg());
    assert_eq!(d.excitation_duty, s.excitation_duty);
}

#[test]
fn operator_cannot_reclose_shed_relay_during_episode() {
    let (mut s, _) = run(state(), 51, |_, base| {
        let mut f = base.clone();
        f.load_bus.current_rms = if f.is_closed("R1") { 20.0 } else { 18.0 };
        f
    });
    assert!(s.episode.as_ref().unwrap().shed.contains(&"R1".to_string()));
    s.requests.push(OperatorRequest::RelaySet {
        device: "R1".into(),
        state: RelayState::Closed,
    });
    let mut f = nominal_frame();
    f.timestamp = 1.0;
    f.load_bus.current_rms = 18.0;
    set_switch(&mut f, "R1", RelayState::Open);
    let (_, d) = controller_step(&f, &s, &cfg());
    assert!(!d.relay_commands.iter().any(|c| c.device == "R1" && c.state == RelayState::Closed));
    assert!(d.annotations.iter().any(|a| a.contains("R1 close refused")));
}

#[test]
fn commanded_trip_isolates_and_latches() {
    let mut s = state();
    s.requests.push(OperatorRequest::Trip { generator: 1 });
    let (s, d) = controller_step(&nominal_frame(), &s, &cfg());
    assert_eq!(s.modes[0], GeneratorMode::Tripped);
    assert_eq!(
        d.breaker_commands,
        vec![SwitchCommand {
            device: "BRK1".into(),
            state: RelayState::Open
        }]
    );
    assert_eq!(d.excitation_duty[0], 0.0);
    assert!(d.annotations[0].contains("g1 isolated (commanded trip)"));
    // Demand 1190 W fits one 1200 W machine: no shedding.
    assert!(s.episode.is_none());

    let mut s = s;
    s.requests.push(OperatorRequest::Trip { generator: 1 });
    s.requests.push(OperatorRequest::SyncRequest { generator: 1 });
    let mut f = at(nominal_frame(), 0.002);
    set_switch(&mut f, "BRK1", RelayState::Open);
    let (s, d) = controller_step(&f, &s, &cfg());
    assert!(d.annotations.iter().any(|a| a.contains("already tripped")));
    assert!(d.annotations.iter().any(|a| a.contains("tripped latch")));
    assert!(d.breaker_commands.is_empty());
    assert_eq!(s.modes[0], GeneratorMode::Tripped);
}

#[test]
fn trip_with_demand_above_rating_engages_shedding() {
    let mut s = state();
    s.requests.push(OperatorRequest::Trip { generator: 2 });
    let mut f = nominal_frame();
    f.load_bus.real_power = 1800.0;
    let (s, d) = controller_step(&f, &s, &cfg());
    assert_eq!(s.episode.as_ref().unwrap().reason, ShedReason::Capacity);
    // The trip is seen before shedding within the same period.
    assert_eq!(d.breaker_commands[0].device, "BRK2");
    assert_eq!(d.relay_commands[0].device, "R1");
}

#[test]
fn external_breaker_opening_sets_latch() {
    let mut f = nominal_frame();
    set_switch(&mut f, "BRK2", RelayState::Open);
    let (s, d) = controller_step(&f, &state(), &cfg());
    assert_eq!(s.modes[1], GeneratorMode::Tripped);
    assert!(d.annotations[0].contains("opened externally"));
}

#[test]
fn both_machines_tripped_is_island() {
    let mut s = state();
    s.requests.push(OperatorRequest::Trip { generator: 1 });
    s.requests.push(OperatorRequest::Trip { generator: 2 });
    let (s, d) = controller_step(&nominal_frame(), &s, &cfg());
    assert_eq!(s.system, SystemMode::Island);
    assert_eq!(d.breaker_commands.len(), 2);
    assert!(d.annotations.iter().any(|a| a.contains("no healthy machine")));
}

#[test]
fn breaker_close_request_is_refused() {
    let mut s = ControllerState::new(&cfg(), [false, true], [0.5; 2], [0.85; 2]);
    s.requests.push(OperatorRequest::RelaySet {
        device: "BRK1".into(),
        state: RelayState::Closed,
    });
    let mut f = nominal_frame();
    set_switch(&mut f, "BRK1", RelayState::Open);
    let (_, d) = controller_step(&f, &s, &cfg());
    assert!(d.breaker_commands.is_empty());
    assert!(d.annotations[0].contains("use sync_request"));
}

fn syncing_frame(phase: f64) -> TelemetryFrame {
    let mut f = nominal_frame();
    set_switch(&mut f, "BRK1", RelayState::Open);
    f.generators[0].phase_angle = f.load_bus.phase_angle + phase;
    f.generators[0].terminal_voltage_rms = f.load_bus.voltage_rms;
    f
}

#[test]
fn sync_closes_after_window_only() {
    let mut s = ControllerState::new(&cfg(), [false, true], [0.5; 2], [0.85; 2]);
    s.requests.push(OperatorRequest::SyncRequest { generator: 1 });
    let mut closes = Vec::new();
    for k in 0..30 {
        let (ns, d) = controller_step(&at(syncing_frame(2.0), (k + 1) as f64 * 1e-3), &s, &cfg());
        if d.sync_close.is_some() {
            closes.push(k);
            assert_eq!(d.breaker_commands[0].device, "BRK1");
        }
        s = ns;
    }
    assert_eq!(closes, vec![19]);
}

#[test]
fn sync_blocked_by_phase_is_annotated() {
    let mut s = ControllerState::new(&cfg(), [false, true], [0.5; 2], [0.85; 2]);
    s.requests.push(OperatorRequest::SyncRequest { generator: 1 });
    let mut notes = Vec::new();
    for k in 0..100 {
        let (ns, d) = controller_step(&at(syncing_frame(40.0), (k + 1) as f64 * 1e-3), &s, &cfg());
        assert!(d.sync_close.is_none());
        notes.extend(d.annotations);
        s = ns;
    }
    assert!(notes.contains(&"g1 sync blocked: phase residual".to_string()));
    assert_eq!(notes.iter().filter(|n| n.contains("blocked")).count(), 1);
}

#[test]
fn sync_window_resets_on_any_excursion() {
    let mut s = ControllerState::new(&cfg(), [false, true], [0.5; 2], [0.85; 2]);
    s.requests.push(OperatorRequest::SyncRequest { generator: 1 });
    for k in 0..200 {
        let phase = if k % 15 == 14 { 12.0 } else { 0.0 };
        let (ns, d) = controller_step(&at(syncing_frame(phase), (k + 1) as f64 * 1e-3), &s, &cfg());
        assert!(d.sync_close.is_none());
        s = ns;
    }
}

#[test]
fn speed_fault_on_one_machine_isolates_it() {
    let (s, ds) = run(state(), 60, |_, base| {
        let mut f = base.clone();
        if f.is_closed("BRK2") {
            f.generators[1].speed_rpm = 1200.0;
        }
        f
    });
    assert_eq!(s.modes[1], GeneratorMode::Tripped);
    assert_eq!(s.modes[0], GeneratorMode::Running);
    let k = ds.iter().position(|d| !d.breaker_commands.is_empty()).unwrap();
    assert_eq!(k, 49);
    assert!(ds[k].annotations[0].contains("speed deviation"));
}

#[test]
fn setpoint_change_is_range_checked() {
    let mut s = state();
    s.requests.push(OperatorRequest::SetpointChange {
        generator: Some(2),
        voltage: Some(235.0),
        speed_rpm: None,
    });
    s.requests.push(OperatorRequest::SetpointChange {
        generator: None,
        voltage: Some(1000.0),
        speed_rpm: None,
    });
    let (s, d) = controller_step(&nominal_frame(), &s, &cfg());
    assert_eq!(s.voltage_setpoint, [230.0, 235.0]);
    assert!(d.annotations[1].contains("refused"));
}

#[test]
fn request_json_shape() {
    let r: OperatorRequest = serde_json::from_str(r#"{"command":"relay_set","device":"R2","state":"open"}"#).unwrap();
    assert_eq!(
        r,
        OperatorRequest::RelaySet {
            device: "R2".into(),
            state: RelayState::Open
        }
    );
    let r: OperatorRequest = serde_json::from_str(r#"{"command":"setpoint_change","speed_rpm":1410}"#).unwrap();
    assert!(matches!(r, OperatorRequest::SetpointChange { generator: None, .. }));
}
