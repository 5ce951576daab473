//! Continuous-time physics: two DC-motor-driven generator sets, buck-converter
//! field and armature drives, the three-bus network and switchable loads.
//!
//! [`Plant`] integrates both shafts jointly. Every Heun stage re-solves the
//! network at the stage's rotor angles and EMFs, so the electrical torque is
//! always consistent with the rotor state being differentiated.

pub mod buck;
pub mod config;
pub mod generator;
pub mod integrator;
pub mod loads;
pub mod network;
pub mod prime_mover;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use buck::{buck_output, BuckConverter};
pub use config::{PlantConfig, BREAKER_IDS};
pub use generator::{electrical_torque, step_generator, GeneratorState, GridTie};
pub use loads::{LoadBank, LoadElement, LoadKind};
pub use network::{solve_network, NetworkState, Topology, LOAD_BUS};
pub use prime_mover::{step_prime_mover, PrimeMoverState};

use crate::error::PlantError;
use generator::{airgap_power, swing_derivatives};
use integrator::heun;
use network::microgrid_model;
use prime_mover::{armature_derivative, check_finite, field_current};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MachineSet {
    pub prime_mover: PrimeMoverState,
    pub generator: GeneratorState,
}

/// Instantaneous power flows used for energy accounting, W.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerFlows {
    pub mechanical_in: f64,
    pub load: f64,
    pub line_loss: f64,
    pub stator_loss: f64,
    pub damping_loss: f64,
}

/// Time integrals of [`PowerFlows`] plus stored kinetic energy, J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub mechanical_in: f64,
    pub load: f64,
    pub line_loss: f64,
    pub stator_loss: f64,
    pub damping_loss: f64,
    pub kinetic_start: f64,
    pub kinetic_now: f64,
}

impl EnergyLedger {
    /// `in − (out + losses + Δkinetic)`.
    pub fn imbalance(&self) -> f64 {
        self.mechanical_in
            - (self.load
                + self.line_loss
                + self.stator_loss
                + self.damping_loss
                + (self.kinetic_now - self.kinetic_start))
    }

    pub fn relative_imbalance(&self) -> f64 {
        self.imbalance().abs() / self.mechanical_in.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub config: PlantConfig,
    pub sets: [MachineSet; 2],
    pub exciters: [BuckConverter; 2],
    pub armature_drives: [BuckConverter; 2],
    pub topology: Topology,
    network: NetworkState,
    flows: PowerFlows,
    pub energy: EnergyLedger,
}

impl Plant {
    /// Builds a plant near its operating point for the given switch states.
    ///
    /// Both shafts start at rated speed; EMFs are scaled until online terminals
    /// sit at nominal voltage, armature currents balance the electrical load and
    /// the converter duties reproduce those states.
    pub fn new(
        config: PlantConfig,
        topology: Topology,
        rotor_angles: [f64; 2],
    ) -> Result<Self, PlantError> {
        config.validate()?;
        if topology.loads.len() != config.loads.elements.len() {
            return Err(PlantError::InvalidParameter(
                "topology does not match load bank".into(),
            ));
        }
        let v_nom = config.nominal_voltage;
        let mut gens = [GeneratorState::default(); 2];
        for (g, (m, angle)) in gens.iter_mut().zip(config.machines.iter().zip(rotor_angles)) {
            g.rotor_speed = m.generator.rated_speed();
            g.rotor_angle = angle;
            g.internal_emf = v_nom;
        }
        for _ in 0..60 {
            let net = solve_network(&config, &gens, &topology)?;
            for (i, g) in gens.iter_mut().enumerate() {
                if topology.breakers[i] {
                    let vt = net.bus_voltages[i].norm();
                    if vt > 0.0 {
                        g.internal_emf *= v_nom / vt;
                    }
                }
            }
        }
        let net = solve_network(&config, &gens, &topology)?;
        let rail_f = config.rails.excitation_voltage;
        let rail_a = config.rails.armature_voltage;
        let mut sets = [MachineSet::default(); 2];
        let mut exciters = [BuckConverter::new(rail_f); 2];
        let mut drives = [BuckConverter::new(rail_a); 2];
        for i in 0..2 {
            let gc = &config.machines[i].generator;
            let pc = &config.machines[i].prime_mover;
            let g = &mut gens[i];
            let field = g.internal_emf / gc.emf_per_field_volt;
            exciters[i].duty_cycle = (field / rail_f).clamp(0.0, 1.0);
            g.field_voltage = exciters[i].output_voltage();
            g.internal_emf = generator::excitation_target(gc, g.field_voltage, g.rotor_speed);
            let i_f = field_current(pc, rail_f);
            let flux = pc.flux_per_field_amp * i_f;
            let t_elec = airgap_power(g.emf_phasor(), net.generator_currents[i]) / g.rotor_speed;
            let t_mech = t_elec + gc.damping * g.rotor_speed;
            let i_a = t_mech / flux;
            let v_a = pc.armature_resistance * i_a + flux * g.rotor_speed;
            drives[i].duty_cycle = (v_a / rail_a).clamp(0.0, 1.0);
            sets[i].prime_mover = PrimeMoverState {
                armature_voltage: drives[i].output_voltage(),
                armature_current: i_a,
                field_current: i_f,
                shaft_speed: g.rotor_speed,
                ..Default::default()
            };
            sets[i].prime_mover.refresh(pc);
            sets[i].generator = *g;
        }
        let mut plant = Self {
            network: NetworkState::dead(3, 2, topology.loads.len()),
            config,
            sets,
            exciters,
            armature_drives: drives,
            topology,
            flows: PowerFlows::default(),
            energy: EnergyLedger::default(),
        };
        plant.refresh()?;
        plant.energy.kinetic_start = plant.kinetic_energy();
        plant.energy.kinetic_now = plant.energy.kinetic_start;
        Ok(plant)
    }

    pub fn network(&self) -> &NetworkState {
        &self.network
    }

    pub fn flows(&self) -> &PowerFlows {
        &self.flows
    }

    pub fn generators(&self) -> [GeneratorState; 2] {
        [self.sets[0].generator, self.sets[1].generator]
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.sets
            .iter()
            .zip(&self.config.machines)
            .map(|(s, m)| 0.5 * m.generator.inertia * s.generator.rotor_speed.powi(2))
            .sum()
    }

    pub fn set_duties(&mut self, excitation: [f64; 2], armature: [f64; 2]) -> Result<(), PlantError> {
        for i in 0..2 {
            self.exciters[i].set_duty(excitation[i])?;
            self.armature_drives[i].set_duty(armature[i])?;
        }
        Ok(())
    }

    /// Applies new switch states and re-solves the network.
    pub fn set_topology(&mut self, topology: Topology) -> Result<(), PlantError> {
        if topology != self.topology {
            self.topology = topology;
            self.refresh()?;
        }
        Ok(())
    }

    pub fn set_load_impedance(&mut self, index: usize, impedance: Complex64) -> Result<(), PlantError> {
        let e = self
            .config
            .loads
            .elements
            .get_mut(index)
            .ok_or_else(|| PlantError::InvalidParameter(format!("load index {index}")))?;
        e.impedance = impedance;
        self.config.loads.validate()?;
        self.refresh()
    }

    /// Re-solves the network at the current rotor state and updates terminal quantities.
    pub fn refresh(&mut self) -> Result<(), PlantError> {
        let net = solve_network(&self.config, &self.generators(), &self.topology)?;
        for i in 0..2 {
            let gc = &self.config.machines[i].generator;
            let g = &mut self.sets[i].generator;
            g.field_voltage = self.exciters[i].output_voltage();
            g.set_stator_current(gc, net.generator_currents[i]);
            self.sets[i].prime_mover.armature_voltage = self.armature_drives[i].output_voltage();
        }
        self.network = net;
        self.flows = self.power_flows();
        Ok(())
    }

    fn power_flows(&self) -> PowerFlows {
        let mut f = PowerFlows::default();
        for (s, m) in self.sets.iter().zip(&self.config.machines) {
            f.mechanical_in += s.prime_mover.shaft_torque * s.generator.rotor_speed;
            f.stator_loss += m.generator.stator_resistance * s.generator.stator_current.norm_sqr();
            f.damping_loss += m.generator.damping * s.generator.rotor_speed.powi(2);
        }
        for (i, z) in self.config.line_impedance.iter().enumerate() {
            f.line_loss += z.re * self.network.line_currents[i].norm_sqr();
        }
        for (e, i) in self.config.loads.elements.iter().zip(&self.network.load_currents) {
            f.load += e.impedance.re * i.norm_sqr();
        }
        f
    }

    /// Derivative of the joint state `[i_a, ω, δ, E] × 2`.
    fn derivatives(&self, x: &[f64; 8]) -> Result<[f64; 8], PlantError> {
        let mut gens = self.generators();
        for (k, g) in gens.iter_mut().enumerate() {
            g.rotor_speed = x[4 * k + 1];
            g.rotor_angle = x[4 * k + 2];
            g.internal_emf = x[4 * k + 3];
        }
        let net = network::solve(&microgrid_model(&self.config, &gens, &self.topology))?;
        let mut dx = [0.0; 8];
        for k in 0..2 {
            let gc = &self.config.machines[k].generator;
            let pc = &self.config.machines[k].prime_mover;
            let i_f = field_current(pc, self.config.rails.excitation_voltage);
            let (i_a, w, delta, emf) = (x[4 * k], x[4 * k + 1], x[4 * k + 2], x[4 * k + 3]);
            let v_a = self.armature_drives[k].output_voltage();
            dx[4 * k] = armature_derivative(pc, v_a, i_f, i_a, w);
            let t_mech = pc.flux_per_field_amp * i_f * i_a;
            let v_f = self.exciters[k].output_voltage();
            let s = swing_derivatives(gc, delta, w, emf, t_mech, v_f, net.generator_currents[k])?;
            dx[4 * k + 1] = s[1];
            dx[4 * k + 2] = s[0];
            dx[4 * k + 3] = s[2];
        }
        Ok(dx)
    }

    /// Advances both sets by `dt` with the present duties and switch states.
    pub fn step(&mut self, dt: f64) -> Result<(), PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::InvalidParameter(format!("dt = {dt}")));
        }
        let mut x = [0.0; 8];
        for k in 0..2 {
            let s = &self.sets[k];
            x[4 * k] = s.prime_mover.armature_current;
            x[4 * k + 1] = s.generator.rotor_speed;
            x[4 * k + 2] = s.generator.rotor_angle;
            x[4 * k + 3] = s.generator.internal_emf;
        }
        let before = self.flows;
        let next = heun(&x, dt, |s| self.derivatives(s))?;
        for k in 0..2 {
            let pc = &self.config.machines[k].prime_mover;
            let speed = check_finite(next[4 * k + 1], "rotor_speed")?.max(0.0);
            let set = &mut self.sets[k];
            set.prime_mover.armature_current = check_finite(next[4 * k], "armature_current")?;
            set.prime_mover.field_current = field_current(pc, self.config.rails.excitation_voltage);
            set.prime_mover.shaft_speed = speed;
            set.prime_mover.refresh(pc);
            set.generator.rotor_speed = speed;
            set.generator.rotor_angle = check_finite(next[4 * k + 2], "rotor_angle")?;
            set.generator.internal_emf = check_finite(next[4 * k + 3], "internal_emf")?.max(0.0);
        }
        self.refresh()?;
        let after = self.flows;
        let trap = |a: f64, b: f64| 0.5 * dt * (a + b);
        self.energy.mechanical_in += trap(before.mechanical_in, after.mechanical_in);
        self.energy.load += trap(before.load, after.load);
        self.energy.line_loss += trap(before.line_loss, after.line_loss);
        self.energy.stator_loss += trap(before.stator_loss, after.stator_loss);
        self.energy.damping_loss += trap(before.damping_loss, after.damping_loss);
        self.energy.kinetic_now = self.kinetic_energy();
        Ok(())
    }

    /// Largest current-law mismatch over all buses for the present solution, A.
    pub fn kcl_residual(&self) -> f64 {
        let model = microgrid_model(&self.config, &self.generators(), &self.topology);
        network::kcl_residuals(&model, &self.network)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Restarts energy accounting from the present state.
    pub fn reset_energy(&mut self) {
        self.energy = EnergyLedger {
            kinetic_start: self.kinetic_energy(),
            kinetic_now: self.kinetic_energy(),
            ..Default::default()
        };
    }
}
