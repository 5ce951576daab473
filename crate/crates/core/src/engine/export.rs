use std::path::{Path, PathBuf};

use super::SimulationRecord;
use crate::error::EngineError;
use crate::plant::BREAKER_IDS;

/// CSV groups in export order.
pub const CSV_GROUPS: [&str; 3] = ["generators", "load_bus", "decisions"];

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// Writes one CSV per selected group into `dir` and returns the paths.
///
/// An empty selection exports every group.
pub fn export_csv(record: &SimulationRecord, dir: &Path, groups: &[&str]) -> Result<Vec<PathBuf>, EngineError> {
    let selected: Vec<&str> = if groups.is_empty() { CSV_GROUPS.to_vec() } else { groups.to_vec() };
    for g in &selected {
        if !CSV_GROUPS.contains(g) {
            return Err(EngineError::UnknownChannel {
                name: g.to_string(),
                valid: CSV_GROUPS.iter().map(|s| s.to_string()).collect(),
            });
        }
    }
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for g in CSV_GROUPS.iter().filter(|g| selected.contains(g)) {
        let path = dir.join(format!("{g}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        match *g {
            "generators" => write_generators(record, &mut w)?,
            "load_bus" => write_load_bus(record, &mut w)?,
            _ => write_decisions(record, &mut w)?,
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

type Writer = csv::Writer<std::fs::File>;

fn write_generators(r: &SimulationRecord, w: &mut Writer) -> Result<(), EngineError> {
    let cols = [
        "voltage",
        "current",
        "real_power",
        "reactive_power",
        "speed_rpm",
        "torque",
        "frequency",
        "phase_angle",
        "field_voltage",
        "field_current",
        "breaker",
    ];
    let mut header = vec!["t".to_string()];
    for k in 1..=2 {
        header.extend(cols.iter().map(|c| format!("g{k}_{c}")));
    }
    w.write_record(&header)?;
    for f in &r.frames {
        let mut row = vec![num(f.timestamp)];
        for (k, g) in f.generators.iter().enumerate() {
            let rails = &f.dc_rails[k];
            row.extend(
                [
                    g.terminal_voltage_rms,
                    g.stator_current_rms,
                    g.real_power,
                    g.reactive_power,
                    g.speed_rpm,
                    g.torque,
                    g.frequency,
                    g.phase_angle,
                    rails.field_voltage,
                    rails.field_current,
                ]
                .map(num),
            );
            row.push(f.switch(BREAKER_IDS[k]).map_or("", |s| s.as_str()).to_string());
        }
        w.write_record(&row)?;
    }
    Ok(())
}

fn write_load_bus(r: &SimulationRecord, w: &mut Writer) -> Result<(), EngineError> {
    let relays: Vec<String> = r.scenario.plant.loads.elements.iter().map(|e| e.relay.clone()).collect();
    let mut header: Vec<String> = ["t", "voltage", "current", "real_power", "reactive_power", "frequency", "phase_angle"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(relays.iter().cloned());
    w.write_record(&header)?;
    for f in &r.frames {
        let l = &f.load_bus;
        let mut row: Vec<String> = [
            f.timestamp,
            l.voltage_rms,
            l.current_rms,
            l.real_power,
            l.reactive_power,
            l.frequency,
            l.phase_angle,
        ]
        .map(num)
        .to_vec();
        row.extend(relays.iter().map(|id| f.switch(id).map_or("", |s| s.as_str()).to_string()));
        w.write_record(&row)?;
    }
    Ok(())
}

fn write_decisions(r: &SimulationRecord, w: &mut Writer) -> Result<(), EngineError> {
    w.write_record([
        "t",
        "g1_mode",
        "g2_mode",
        "system_mode",
        "g1_excitation_duty",
        "g2_excitation_duty",
        "g1_armature_duty",
        "g2_armature_duty",
        "breaker_commands",
        "relay_commands",
        "sync_close",
        "annotations",
    ])?;
    for d in &r.decisions {
        let cmds = |c: &[crate::controller::SwitchCommand]| {
            c.iter()
                .map(|c| format!("{}:{}", c.device, c.state.as_str()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        w.write_record([
            num(d.timestamp),
            d.modes[0].as_str().to_string(),
            d.modes[1].as_str().to_string(),
            d.system_mode.as_str().to_string(),
            num(d.excitation_duty[0]),
            num(d.excitation_duty[1]),
            num(d.armature_duty[0]),
            num(d.armature_duty[1]),
            cmds(&d.breaker_commands),
            cmds(&d.relay_commands),
            d.sync_close.map_or(String::new(), |g| format!("g{g}")),
            d.annotations.join("; "),
        ])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_scenario, Scenario};

    #[test]
    fn empty_record_gives_header_only() {
        let r = run_scenario(&Scenario::nominal("empty", 0.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = export_csv(&r, dir.path(), &[]).unwrap();
        assert_eq!(paths.len(), 3);
        for p in paths {
            let text = std::fs::read_to_string(p).unwrap();
            assert_eq!(text.lines().count(), 1);
        }
    }

    #[test]
    fn row_count_equals_frame_count_and_reexport_is_identical() {
        let r = run_scenario(&Scenario::nominal("rows", 0.02)).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        export_csv(&r, a.path(), &["load_bus"]).unwrap();
        export_csv(&r, b.path(), &["load_bus"]).unwrap();
        let ta = std::fs::read(a.path().join("load_bus.csv")).unwrap();
        let tb = std::fs::read(b.path().join("load_bus.csv")).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 21);
        assert!(!a.path().join("generators.csv").exists());
    }

    #[test]
    fn unknown_group_lists_valid_ones() {
        let r = run_scenario(&Scenario::nominal("x", 0.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let e = export_csv(&r, dir.path(), &["motors"]).unwrap_err().to_string();
        assert!(e.contains("motors") && e.contains("generators, load_bus, decisions"));
    }
}
