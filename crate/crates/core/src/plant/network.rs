//! Quasi-static phasor nodal analysis of the microgrid.
//!
//! Buses are indexed `0 = Bus1`, `1 = Bus2`, `2 = load bus`. Generators enter
//! as Norton equivalents of their EMF behind synchronous impedance, loads as
//! shunt impedances on the load bus. Each connected set of buses is solved
//! separately; islands without a closed source are reported dead (zero volts).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::PlantConfig;
use super::generator::GeneratorState;
use crate::error::PlantError;

pub const BUS1: usize = 0;
pub const BUS2: usize = 1;
pub const LOAD_BUS: usize = 2;
pub const BUS_COUNT: usize = 3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub impedance: Complex64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shunt {
    pub bus: usize,
    pub impedance: Complex64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub bus: usize,
    pub emf: Complex64,
    pub impedance: Complex64,
    pub closed: bool,
}

/// A small general network: buses, series lines, shunt loads, EMF sources.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub bus_count: usize,
    pub lines: Vec<Line>,
    pub shunts: Vec<Shunt>,
    pub sources: Vec<Source>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub bus_voltages: Vec<Complex64>,
    /// Line currents, positive from `from` to `to`.
    pub line_currents: Vec<Complex64>,
    /// Current out of each source into its bus.
    pub generator_currents: Vec<Complex64>,
    /// Current drawn by each shunt load.
    pub load_currents: Vec<Complex64>,
    /// System electrical frequency, Hz (zero when everything is dead).
    pub frequency: f64,
}

impl NetworkState {
    pub fn dead(buses: usize, sources: usize, loads: usize) -> Self {
        Self {
            bus_voltages: vec![ZERO; buses],
            line_currents: vec![ZERO; 2],
            generator_currents: vec![ZERO; sources],
            load_currents: vec![ZERO; loads],
            frequency: 0.0,
        }
    }

    /// Every branch current: lines, then sources, then loads.
    pub fn branch_currents(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.line_currents
            .iter()
            .chain(&self.generator_currents)
            .chain(&self.load_currents)
            .copied()
    }

    pub fn load_bus_current(&self) -> Complex64 {
        self.load_currents.iter().sum()
    }
}

/// Open/closed state of the switchable elements, index-aligned with the plant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub breakers: [bool; 2],
    pub loads: Vec<bool>,
}

impl Topology {
    pub fn all_open(loads: usize) -> Self {
        Self {
            breakers: [false; 2],
            loads: vec![false; loads],
        }
    }

    pub fn all_closed(loads: usize) -> Self {
        Self {
            breakers: [true; 2],
            loads: vec![true; loads],
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups buses into islands joined by closed lines; sorted, deterministic.
pub fn islands(model: &NetworkModel) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..model.bus_count).collect();
    for l in model.lines.iter().filter(|l| l.closed) {
        let (a, b) = (find(&mut parent, l.from), find(&mut parent, l.to));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    for bus in 0..model.bus_count {
        let root = find(&mut parent, bus);
        match out.iter_mut().find(|g| find(&mut parent, g[0]) == root) {
            Some(g) => g.push(bus),
            None => out.push(vec![bus]),
        }
    }
    out
}

pub fn solve(model: &NetworkModel) -> Result<NetworkState, PlantError> {
    let mut state = NetworkState {
        bus_voltages: vec![ZERO; model.bus_count],
        line_currents: vec![ZERO; model.lines.len()],
        generator_currents: vec![ZERO; model.sources.len()],
        load_currents: vec![ZERO; model.shunts.len()],
        frequency: 0.0,
    };
    for island in islands(model) {
        let energized = model
            .sources
            .iter()
            .any(|s| s.closed && island.contains(&s.bus));
        if !energized {
            continue;
        }
        let n = island.len();
        let local = |bus: usize| island.iter().position(|&b| b == bus);
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        let mut inj = DVector::<Complex64>::zeros(n);
        for l in model.lines.iter().filter(|l| l.closed) {
            if let (Some(a), Some(b)) = (local(l.from), local(l.to)) {
                let g = l.impedance.inv();
                y[(a, a)] += g;
                y[(b, b)] += g;
                y[(a, b)] -= g;
                y[(b, a)] -= g;
            }
        }
        for s in model.shunts.iter().filter(|s| s.closed) {
            if let Some(a) = local(s.bus) {
                y[(a, a)] += s.impedance.inv();
            }
        }
        for s in model.sources.iter().filter(|s| s.closed) {
            if let Some(a) = local(s.bus) {
                let g = s.impedance.inv();
                y[(a, a)] += g;
                inj[a] += s.emf * g;
            }
        }
        let v = y
            .lu()
            .solve(&inj)
            .filter(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
            .ok_or_else(|| PlantError::NetworkSingular {
                island: island.clone(),
            })?;
        for (k, &bus) in island.iter().enumerate() {
            state.bus_voltages[bus] = v[k];
        }
    }
    let v = &state.bus_voltages;
    for (i, l) in model.lines.iter().enumerate() {
        if l.closed {
            state.line_currents[i] = (v[l.from] - v[l.to]) / l.impedance;
        }
    }
    for (i, s) in model.shunts.iter().enumerate() {
        if s.closed {
            state.load_currents[i] = v[s.bus] / s.impedance;
        }
    }
    for (i, s) in model.sources.iter().enumerate() {
        if s.closed {
            state.generator_currents[i] = (s.emf - v[s.bus]) / s.impedance;
        }
    }
    Ok(state)
}

/// Magnitude of the current-law mismatch at every bus.
pub fn kcl_residuals(model: &NetworkModel, state: &NetworkState) -> Vec<f64> {
    let mut net = vec![ZERO; model.bus_count];
    for (i, s) in model.sources.iter().enumerate() {
        net[s.bus] += state.generator_currents[i];
    }
    for (i, s) in model.shunts.iter().enumerate() {
        net[s.bus] -= state.load_currents[i];
    }
    for (i, l) in model.lines.iter().enumerate() {
        net[l.from] -= state.line_currents[i];
        net[l.to] += state.line_currents[i];
    }
    net.into_iter().map(|c| c.norm()).collect()
}

/// Builds the three-bus model from plant ratings, machine states and switch states.
pub fn microgrid_model(
    cfg: &PlantConfig,
    generators: &[GeneratorState; 2],
    topology: &Topology,
) -> NetworkModel {
    NetworkModel {
        bus_count: BUS_COUNT,
        lines: vec![
            Line {
                from: BUS1,
                to: LOAD_BUS,
                impedance: cfg.line_impedance[0],
                closed: true,
            },
            Line {
                from: BUS2,
                to: LOAD_BUS,
                impedance: cfg.line_impedance[1],
                closed: true,
            },
        ],
        shunts: cfg
            .loads
            .elements
            .iter()
            .zip(&topology.loads)
            .map(|(e, &closed)| Shunt {
                bus: LOAD_BUS,
                impedance: e.impedance,
                closed,
            })
            .collect(),
        sources: generators
            .iter()
            .zip(&cfg.machines)
            .zip(topology.breakers)
            .enumerate()
            .map(|(i, ((g, m), closed))| Source {
                bus: i,
                emf: g.emf_phasor(),
                impedance: m.generator.synchronous_impedance(),
                closed,
            })
            .collect(),
    }
}

/// Solves the microgrid and reports the inertia-weighted frequency of online machines.
pub fn solve_network(
    cfg: &PlantConfig,
    generators: &[GeneratorState; 2],
    topology: &Topology,
) -> Result<NetworkState, PlantError> {
    let mut state = solve(&microgrid_model(cfg, generators, topology))?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((g, m), closed) in generators.iter().zip(&cfg.machines).zip(topology.breakers) {
        if closed {
            num += m.generator.inertia * g.electrical_frequency(&m.generator);
            den += m.generator.inertia;
        }
    }
    if den > 0.0 && state.bus_voltages[LOAD_BUS].norm() > 0.0 {
        state.frequency = num / den;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::loads::{LoadBank, LoadElement};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn machine(emf: f64, angle: f64) -> GeneratorState {
        GeneratorState {
            rotor_angle: angle,
            rotor_speed: 146.6,
            internal_emf: emf,
            ..Default::default()
        }
    }

    #[test]
    fn dead_network_when_everything_open() {
        let cfg = PlantConfig::default();
        let gens = [machine(230.0, 0.0), machine(230.0, 0.0)];
        let s = solve_network(&cfg, &gens, &Topology::all_open(3)).unwrap();
        assert!(s.branch_currents().all(|i| i.norm() == 0.0));
        assert_eq!(s.bus_voltages[LOAD_BUS].norm(), 0.0);
        assert_eq!(s.frequency, 0.0);
    }

    #[test]
    fn single_loop_matches_closed_form() {
        let model = NetworkModel {
            bus_count: 1,
            lines: vec![],
            shunts: vec![Shunt {
                bus: 0,
                impedance: c(40.0, 0.0),
                closed: true,
            }],
            sources: vec![Source {
                bus: 0,
                emf: c(230.0, 0.0),
                impedance: c(0.0, 20.0),
                closed: true,
            }],
        };
        let s = solve(&model).unwrap();
        let expected = 230.0 / c(40.0, 20.0).norm();
        assert!((s.load_currents[0].norm() - expected).abs() < 1e-12);
        assert!(kcl_residuals(&model, &s).iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn symmetric_sources_share_equally() {
        let mut cfg = PlantConfig::default();
        cfg.loads = LoadBank::new(vec![LoadElement::resistive("L", 900.0, 230.0, 1, "R")]);
        let gens = [machine(240.0, 0.1), machine(240.0, 0.1)];
        let s = solve_network(&cfg, &gens, &Topology::all_closed(1)).unwrap();
        let (a, b) = (s.generator_currents[0], s.generator_currents[1]);
        assert!((a - b).norm() <= 1e-9 * a.norm());
        assert!((a + b - s.load_currents[0]).norm() < 1e-9);
    }

    #[test]
    fn unloaded_island_with_source_is_solvable() {
        let cfg = PlantConfig::default();
        let gens = [machine(230.0, 0.0), machine(230.0, 0.0)];
        let topo = Topology {
            breakers: [true, false],
            loads: vec![false; 3],
        };
        let s = solve_network(&cfg, &gens, &topo).unwrap();
        assert!((s.bus_voltages[LOAD_BUS].norm() - 230.0).abs() < 1e-9);
        assert_eq!(s.generator_currents[1].norm(), 0.0);
    }

    #[test]
    fn singular_island_is_reported() {
        // A source whose impedance cancels the shunt makes Y singular.
        let model = NetworkModel {
            bus_count: 2,
            lines: vec![],
            shunts: vec![Shunt {
                bus: 1,
                impedance: c(0.0, -10.0),
                closed: true,
            }],
            sources: vec![Source {
                bus: 1,
                emf: c(100.0, 0.0),
                impedance: c(0.0, 10.0),
                closed: true,
            }],
        };
        assert_eq!(
            solve(&model),
            Err(PlantError::NetworkSingular { island: vec![1] })
        );
    }

    #[test]
    fn islands_are_grouped() {
        let model = NetworkModel {
            bus_count: 4,
            lines: vec![
                Line {
                    from: 0,
                    to: 2,
                    impedance: c(1.0, 0.0),
                    closed: true,
                },
                Line {
                    from: 1,
                    to: 3,
                    impedance: c(1.0, 0.0),
                    closed: false,
                },
            ],
            shunts: vec![],
            sources: vec![],
        };
        assert_eq!(islands(&model), vec![vec![0, 2], vec![1], vec![3]]);
    }
}
