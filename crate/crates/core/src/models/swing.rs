//! Classical multi-machine swing DAE.
//!
//! Each machine is a constant EMF `E` behind its transient reactance with
//! rotor dynamics
//!
//! ```text
//! delta' = omega_base (omega - 1)
//! M omega' = Pm - Pe - D (omega - 1)
//! ```
//!
//! The network enters as a complex current balance at every bus with loads
//! folded into the bus admittance matrix. Differential variables are
//! `(delta_i, omega_i)` per machine, algebraic variables `(V_k, theta_k)` per
//! bus, both interleaved.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use num_complex::Complex64;

use super::fixture::{BusKind, Fixture};
use crate::error::{ConfigError, ModelError};
use crate::newton::{self, NewtonSettings};
use crate::system::{Dae, DaeState, DaeSystem};

/// Shunt admittance placed at a faulted bus (p.u.).
pub const DEFAULT_FAULT_ADMITTANCE: Complex64 = Complex64::new(0.0, -1e4);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    /// Bus id as written in the fixture.
    pub bus: usize,
    pub start: f64,
    pub duration: f64,
    pub admittance: Complex64,
}

impl FaultSpec {
    pub fn new(bus: usize, start: f64, duration: f64) -> Self {
        Self {
            bus,
            start,
            duration,
            admittance: DEFAULT_FAULT_ADMITTANCE,
        }
    }

    pub fn clear_time(&self) -> f64 {
        self.start + self.duration
    }
}

impl FromStr for FaultSpec {
    type Err = ConfigError;

    /// `bus,start,duration`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Invalid(format!("fault must be `bus,start,duration`, got `{s}`"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let bus = parts[0].parse().map_err(|_| bad())?;
        let start: f64 = parts[1].parse().map_err(|_| bad())?;
        let duration: f64 = parts[2].parse().map_err(|_| bad())?;
        if !(duration >= 0.0) || !start.is_finite() {
            return Err(bad());
        }
        Ok(Self::new(bus, start, duration))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultAction {
    /// Adds `admittance` to the diagonal entry of bus index `bus`.
    Apply { bus: usize, admittance: Complex64 },
    /// Restores the entry saved by the matching `Apply`.
    Clear { bus: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineParams {
    /// Index of the terminal bus.
    pub bus: usize,
    /// Mechanical starting time `2H` (s).
    pub m: f64,
    pub d: f64,
    pub pm: f64,
    /// Internal EMF magnitude.
    pub e: f64,
    pub xd_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwingModel {
    machines: Vec<MachineParams>,
    bus_ids: Vec<usize>,
    /// Row-major bus admittance matrix including loads.
    ybus: Vec<Complex64>,
    omega_base: f64,
    saved: Vec<(usize, Complex64)>,
}

impl SwingModel {
    pub fn n_bus(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn machines(&self) -> &[MachineParams] {
        &self.machines
    }

    pub fn omega_base(&self) -> f64 {
        self.omega_base
    }

    pub fn ybus(&self) -> &[Complex64] {
        &self.ybus
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    fn bus_voltage(y: &[f64], k: usize) -> Complex64 {
        Complex64::from_polar(y[2 * k], y[2 * k + 1])
    }

    /// Stator current injected by machine `i` into its terminal bus.
    fn machine_current(m: &MachineParams, delta: f64, v: Complex64) -> (Complex64, Complex64) {
        let e = Complex64::from_polar(m.e, delta);
        let i = (e - v) / Complex64::new(0.0, m.xd_prime);
        (e, i)
    }

    /// Electrical power delivered by each machine.
    pub fn electrical_power(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.machines
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (e, cur) = Self::machine_current(m, x[2 * i], Self::bus_voltage(y, m.bus));
                (e * cur.conj()).re
            })
            .collect()
    }

    /// Builds the model from a fixture and returns it with its steady state.
    pub fn from_fixture(fx: &Fixture) -> Result<(Self, DaeState), ModelError> {
        let n = fx.buses.len();
        let mut ybus = vec![Complex64::new(0.0, 0.0); n * n];
        for line in &fx.lines {
            let (a, b) = (fx.bus_index(line.from)?, fx.bus_index(line.to)?);
            let series = Complex64::new(line.r, line.x).inv();
            let shunt = Complex64::new(0.0, 0.5 * line.b_total);
            ybus[a * n + a] += series + shunt;
            ybus[b * n + b] += series + shunt;
            ybus[a * n + b] -= series;
            ybus[b * n + a] -= series;
        }

        let voltages = solve_power_flow(fx, &ybus)?;

        for load in &fx.loads {
            let k = fx.bus_index(load.bus)?;
            let vm = voltages[k].norm();
            ybus[k * n + k] += Complex64::new(load.p, -load.q) / (vm * vm);
        }

        let injection = |k: usize| -> Complex64 { (0..n).map(|j| ybus[k * n + j] * voltages[j]).sum() };

        let mut machines = Vec::with_capacity(fx.machines.len());
        let mut x = Vec::with_capacity(2 * fx.machines.len());
        for md in &fx.machines {
            let k = fx.bus_index(md.bus)?;
            let current = injection(k);
            let e = voltages[k] + Complex64::new(0.0, md.xd_prime) * current;
            let pm = (e * current.conj()).re;
            machines.push(MachineParams {
                bus: k,
                m: 2.0 * md.h_inertia,
                d: md.damping,
                pm,
                e: e.norm(),
                xd_prime: md.xd_prime,
            });
            x.extend([e.arg(), 1.0]);
        }
        let y = voltages.iter().flat_map(|v| [v.norm(), v.arg()]).collect();

        let model = Self {
            machines,
            bus_ids: fx.buses.iter().map(|b| b.id).collect(),
            ybus,
            omega_base: 2.0 * PI * fx.frequency,
            saved: Vec::new(),
        };
        Ok((model, DaeState::new(0.0, x, y)))
    }
}

/// Newton power flow with constant-power loads; returns complex bus voltages.
fn solve_power_flow(fx: &Fixture, ybus: &[Complex64]) -> Result<Vec<Complex64>, ModelError> {
    let n = fx.buses.len();
    let mut p_spec: Vec<f64> = fx.buses.iter().map(|b| b.p_gen).collect();
    let mut q_spec = vec![0.0; n];
    for load in &fx.loads {
        let k = fx.bus_index(load.bus)?;
        p_spec[k] -= load.p;
        q_spec[k] -= load.q;
    }
    let angle_buses: Vec<usize> = (0..n).filter(|&k| fx.buses[k].kind != BusKind::Slack).collect();
    let mag_buses: Vec<usize> = (0..n).filter(|&k| fx.buses[k].kind == BusKind::Pq).collect();

    let unpack = |z: &[f64]| -> Vec<Complex64> {
        let mut vm: Vec<f64> = fx.buses.iter().map(|b| b.v_set).collect();
        let mut va = vec![0.0; n];
        for (slot, &k) in angle_buses.iter().enumerate() {
            va[k] = z[slot];
        }
        for (slot, &k) in mag_buses.iter().enumerate() {
            vm[k] = z[angle_buses.len() + slot];
        }
        (0..n).map(|k| Complex64::from_polar(vm[k], va[k])).collect()
    };

    let mismatch = |z: &[f64]| -> Vec<f64> {
        let v = unpack(z);
        let s: Vec<Complex64> = (0..n)
            .map(|k| v[k] * (0..n).map(|j| ybus[k * n + j] * v[j]).sum::<Complex64>().conj())
            .collect();
        angle_buses
            .iter()
            .map(|&k| s[k].re - p_spec[k])
            .chain(mag_buses.iter().map(|&k| s[k].im - q_spec[k]))
            .collect()
    };

    let mut guess = vec![0.0; angle_buses.len()];
    guess.extend(mag_buses.iter().map(|&k| fx.buses[k].v_set));
    let settings = NewtonSettings {
        tolerance: 1e-11,
        max_iterations: 50,
        ..NewtonSettings::default()
    };
    let result = newton::solve(mismatch, &guess, &settings).map_err(ModelError::EquilibriumNotFound)?;
    Ok(unpack(&result.solution))
}

impl Dae for SwingModel {
    type Action = FaultAction;

    fn n_diff(&self) -> usize {
        2 * self.machines.len()
    }

    fn n_alg(&self) -> usize {
        2 * self.bus_ids.len()
    }

    fn f(&self, x: &[f64], y: &[f64], _t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        for (i, m) in self.machines.iter().enumerate() {
            let (delta, omega) = (x[2 * i], x[2 * i + 1]);
            let (e, cur) = Self::machine_current(m, delta, Self::bus_voltage(y, m.bus));
            let pe = (e * cur.conj()).re;
            let slip = omega - 1.0;
            out.push(self.omega_base * slip);
            out.push((m.pm - pe - m.d * slip) / m.m);
        }
        out
    }

    fn g(&self, x: &[f64], y: &[f64], _t: f64) -> Vec<f64> {
        let n = self.n_bus();
        let v: Vec<Complex64> = (0..n).map(|k| Self::bus_voltage(y, k)).collect();
        let mut balance: Vec<Complex64> = (0..n)
            .map(|k| (0..n).map(|j| self.ybus[k * n + j] * v[j]).sum())
            .collect();
        for (i, m) in self.machines.iter().enumerate() {
            let (_, cur) = Self::machine_current(m, x[2 * i], v[m.bus]);
            balance[m.bus] -= cur;
        }
        balance.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    fn apply(&mut self, action: &FaultAction) {
        let n = self.n_bus();
        match *action {
            FaultAction::Apply { bus, admittance } => {
                let entry = &mut self.ybus[bus * n + bus];
                self.saved.push((bus, *entry));
                *entry += admittance;
            }
            FaultAction::Clear { bus } => {
                if let Some(pos) = self.saved.iter().rposition(|(b, _)| *b == bus) {
                    let (_, original) = self.saved.remove(pos);
                    self.ybus[bus * n + bus] = original;
                }
            }
        }
    }

    /// Polar voltages have equivalent roots `(V, θ + 2πk)` and `(-V, θ + π)`;
    /// keep `V >= 0` and the angle on the branch nearest the previous value.
    fn reconcile_algebraic(&self, previous: &[f64], y: &mut [f64]) {
        for k in 0..self.n_bus() {
            if y[2 * k] < 0.0 {
                y[2 * k] = -y[2 * k];
                y[2 * k + 1] += PI;
            }
            let turns = ((previous[2 * k + 1] - y[2 * k + 1]) / TAU).round();
            y[2 * k + 1] += turns * TAU;
        }
    }

    fn variable_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_diff() + self.n_alg());
        for i in 1..=self.machines.len() {
            names.push(format!("delta_{i}"));
            names.push(format!("omega_{i}"));
        }
        for id in &self.bus_ids {
            names.push(format!("V_{id}"));
            names.push(format!("theta_{id}"));
        }
        names
    }
}

/// Swing system for `fixture` in its pre-fault steady state, with optional
/// fault-on and fault-clear events. A zero-duration fault adds no events.
pub fn swing_system(
    fixture: &Fixture,
    fault: Option<FaultSpec>,
) -> Result<DaeSystem<SwingModel>, ModelError> {
    let (model, initial) = SwingModel::from_fixture(fixture)?;
    let mut system = DaeSystem::new(model, initial);
    if let Some(fault) = fault {
        let bus = fixture.bus_index(fault.bus)?;
        if fault.duration > 0.0 {
            system = system
                .with_event(
                    fault.start,
                    FaultAction::Apply {
                        bus,
                        admittance: fault.admittance,
                    },
                )
                .with_event(fault.clear_time(), FaultAction::Clear { bus });
        }
    }
    Ok(system)
}
