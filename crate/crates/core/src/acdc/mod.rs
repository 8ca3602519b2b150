//! Hybrid AC/DC network model.
//!
//! All quantities are per unit on `base_mva`. AC branches are series
//! impedances `r + jx`; DC branches are resistances. Each converter couples
//! one AC bus to one DC bus at unity power factor and obeys
//! `P_ac + P_loss(P_ac) + P_dc = 0` with `P_loss = a + b|P_ac| + c·P_ac²`,
//! where `P_ac` and `P_dc` are the powers injected into the AC and DC grids.
//! Converters either follow a DC-side power setpoint or act as the DC slack
//! of their DC island, holding its voltage.

mod case5;
mod powerflow;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use case5::builtin_case5;
pub use powerflow::{
    constraint_labels, constraint_violations, newton_power_flow, newton_power_flow_with, pf_residuals, AcFlow, DcFlow,
    PfModel, PfOptions, PfState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AcBus {
    pub id: u32,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub p_load: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub q_load: f64,
}

#[cfg(feature = "serde")]
fn in_service_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AcBranch {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub s_max: f64,
    #[cfg_attr(feature = "serde", serde(default = "in_service_default"))]
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DcBus {
    pub id: u32,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DcBranch {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub limit: f64,
    #[cfg_attr(feature = "serde", serde(default = "in_service_default"))]
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Converter {
    pub id: u32,
    pub ac_bus: u32,
    pub dc_bus: u32,
    pub p_max: f64,
    pub loss_a: f64,
    pub loss_b: f64,
    pub loss_c: f64,
    /// Holds the DC voltage of its island at `v_dc_set` instead of following
    /// a power setpoint.
    #[cfg_attr(feature = "serde", serde(default))]
    pub dc_slack: bool,
    #[cfg_attr(feature = "serde", serde(default = "unit_voltage"))]
    pub v_dc_set: f64,
    /// Nominal DC-side power setpoint (ignored for the DC slack).
    #[cfg_attr(feature = "serde", serde(default))]
    pub p_dc_set: f64,
}

#[cfg(feature = "serde")]
fn unit_voltage() -> f64 {
    1.0
}

impl Converter {
    pub fn loss(&self, p_ac: f64) -> f64 {
        self.loss_a + self.loss_b * p_ac.abs() + self.loss_c * p_ac * p_ac
    }
}

/// Quadratic cost `c0 + c1·P + c2·P²` with `P` in per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Cost {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Cost {
    pub fn eval(&self, p: f64) -> f64 {
        self.c0 + self.c1 * p + self.c2 * p * p
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[cfg_attr(feature = "serde", serde(default = "unit_voltage"))]
    pub v_set: f64,
    /// Nominal active setpoint (the slack generator's is ignored).
    #[cfg_attr(feature = "serde", serde(default))]
    pub p_set: f64,
    pub cost: Cost,
}

/// Renewable injection `capacity × factor` at unity power factor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ResUnit {
    pub id: u32,
    pub bus: u32,
    pub capacity: f64,
    /// Current availability factor in `[0, 1]`.
    #[cfg_attr(feature = "serde", serde(default = "unit_voltage"))]
    pub factor: f64,
}

impl ResUnit {
    pub fn injection(&self) -> f64 {
        self.capacity * self.factor
    }
}

/// What one scenario dimension drives.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ScenarioTarget {
    /// Multiplies the base P and Q load of every listed AC bus.
    LoadFactor { buses: Vec<u32> },
    /// Sets the availability factor of a renewable unit (clamped to `[0, 1]`).
    ResFactor { unit: u32 },
    /// Values `>= 0.5` take the AC branch out of service.
    BranchOutage { branch: u32 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PowerSystem {
    pub name: String,
    pub base_mva: f64,
    pub ac_buses: Vec<AcBus>,
    pub ac_branches: Vec<AcBranch>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub dc_buses: Vec<DcBus>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub dc_branches: Vec<DcBranch>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub converters: Vec<Converter>,
    pub generators: Vec<Generator>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub res_units: Vec<ResUnit>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub scenario_map: Vec<ScenarioTarget>,
}

/// Controllable setpoints `u`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dispatch {
    /// Active output per generator; the slack generator's entry is an output
    /// of the power flow and ignored on input.
    pub pg: Vec<f64>,
    /// Voltage setpoint per generator (its slack or PV bus).
    pub v_set: Vec<f64>,
    /// DC-side power setpoint per converter; ignored for DC slacks.
    pub p_dc: Vec<f64>,
}

impl Dispatch {
    pub fn nominal(sys: &PowerSystem) -> Self {
        Self {
            pg: sys.generators.iter().map(|g| g.p_set).collect(),
            v_set: sys.generators.iter().map(|g| g.v_set).collect(),
            p_dc: sys.converters.iter().map(|c| c.p_dc_set).collect(),
        }
    }

    pub fn check(&self, sys: &PowerSystem) -> Result<()> {
        if self.pg.len() != sys.generators.len()
            || self.v_set.len() != sys.generators.len()
            || self.p_dc.len() != sys.converters.len()
        {
            return Err(crate::error::shape_err!(
                "dispatch has {}/{}/{} entries for {} generators and {} converters",
                self.pg.len(),
                self.v_set.len(),
                self.p_dc.len(),
                sys.generators.len(),
                sys.converters.len()
            ));
        }
        if self
            .pg
            .iter()
            .chain(&self.v_set)
            .chain(&self.p_dc)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain("dispatch contains non-finite values".into()));
        }
        Ok(())
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidSystem(msg)
}

fn unique_ids<'a>(kind: &str, ids: impl Iterator<Item = &'a u32>) -> Result<BTreeMap<u32, usize>> {
    let mut map = BTreeMap::new();
    for (i, &id) in ids.enumerate() {
        if map.insert(id, i).is_some() {
            return Err(invalid(alloc::format!("duplicate {kind} id {id}")));
        }
    }
    Ok(map)
}

/// Union-find-free connected components over `n` nodes.
fn components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            let m = label[a].min(label[b]);
            if label[a] != m || label[b] != m {
                label[a] = m;
                label[b] = m;
                changed = true;
            }
        }
        if !changed {
            return label;
        }
    }
}

/// Id → position lookups for every component table.
#[derive(Debug, Clone)]
pub(crate) struct Indices {
    pub ac: BTreeMap<u32, usize>,
    pub dc: BTreeMap<u32, usize>,
    pub slack: usize,
}

impl PowerSystem {
    pub(crate) fn indices(&self) -> Result<Indices> {
        let ac = unique_ids("AC bus", self.ac_buses.iter().map(|b| &b.id))?;
        let dc = unique_ids("DC bus", self.dc_buses.iter().map(|b| &b.id))?;
        let slacks: Vec<usize> = self
            .ac_buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(invalid(alloc::format!(
                "expected exactly one slack bus, found {}",
                slacks.len()
            )));
        }
        Ok(Indices {
            ac,
            dc,
            slack: slacks[0],
        })
    }

    /// Checks every structural and parameter invariant, including
    /// connectivity under the current outage flags.
    pub fn validate(&self) -> Result<()> {
        let idx = self.indices()?;
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return Err(invalid("base_mva must be positive".into()));
        }
        unique_ids("AC branch", self.ac_branches.iter().map(|b| &b.id))?;
        unique_ids("DC branch", self.dc_branches.iter().map(|b| &b.id))?;
        unique_ids("converter", self.converters.iter().map(|c| &c.id))?;
        unique_ids("generator", self.generators.iter().map(|g| &g.id))?;
        unique_ids("RES unit", self.res_units.iter().map(|r| &r.id))?;

        let finite = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(alloc::format!("{what} must be finite")))
            }
        };
        for b in &self.ac_buses {
            finite(b.p_load, "bus load")?;
            finite(b.q_load, "bus load")?;
            if !(b.v_min < b.v_max) || !b.v_min.is_finite() || !b.v_max.is_finite() {
                return Err(invalid(alloc::format!("AC bus {} needs v_min < v_max", b.id)));
            }
        }
        for b in &self.dc_buses {
            if !(b.v_min < b.v_max) || !b.v_min.is_finite() || !b.v_max.is_finite() {
                return Err(invalid(alloc::format!("DC bus {} needs v_min < v_max", b.id)));
            }
        }
        for br in &self.ac_branches {
            for end in [br.from, br.to] {
                if !idx.ac.contains_key(&end) {
                    return Err(invalid(alloc::format!(
                        "AC branch {} references unknown bus {end}",
                        br.id
                    )));
                }
            }
            if br.from == br.to {
                return Err(invalid(alloc::format!("AC branch {} is a self loop", br.id)));
            }
            if !(br.r >= 0.0 && br.x > 0.0 && br.s_max > 0.0) || !br.r.is_finite() || !br.x.is_finite() {
                return Err(invalid(alloc::format!(
                    "AC branch {} needs r >= 0, x > 0, s_max > 0",
                    br.id
                )));
            }
        }
        for br in &self.dc_branches {
            for end in [br.from, br.to] {
                if !idx.dc.contains_key(&end) {
                    return Err(invalid(alloc::format!(
                        "DC branch {} references unknown bus {end}",
                        br.id
                    )));
                }
            }
            if br.from == br.to {
                return Err(invalid(alloc::format!("DC branch {} is a self loop", br.id)));
            }
            if !(br.r > 0.0 && br.r.is_finite() && br.limit > 0.0) {
                return Err(invalid(alloc::format!("DC branch {} needs r > 0 and limit > 0", br.id)));
            }
        }
        for c in &self.converters {
            if !idx.ac.contains_key(&c.ac_bus) || !idx.dc.contains_key(&c.dc_bus) {
                return Err(invalid(alloc::format!("converter {} references unknown buses", c.id)));
            }
            let coeffs = [c.loss_a, c.loss_b, c.loss_c];
            if coeffs.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(invalid(alloc::format!(
                    "converter {} loss coefficients must be >= 0",
                    c.id
                )));
            }
            if !(c.p_max > 0.0) || !(c.v_dc_set > 0.0) {
                return Err(invalid(alloc::format!(
                    "converter {} needs p_max > 0 and v_dc_set > 0",
                    c.id
                )));
            }
            finite(c.p_dc_set, "converter setpoint")?;
        }
        let mut gen_buses = BTreeSet::new();
        for g in &self.generators {
            let Some(&bi) = idx.ac.get(&g.bus) else {
                return Err(invalid(alloc::format!(
                    "generator {} references unknown bus {}",
                    g.id,
                    g.bus
                )));
            };
            if self.ac_buses[bi].kind == BusKind::Pq {
                return Err(invalid(alloc::format!("generator {} sits on PQ bus {}", g.id, g.bus)));
            }
            if !gen_buses.insert(g.bus) {
                return Err(invalid(alloc::format!("bus {} has more than one generator", g.bus)));
            }
            if !(g.p_min <= g.p_max && g.q_min <= g.q_max && g.v_set > 0.0) {
                return Err(invalid(alloc::format!("generator {} has inconsistent limits", g.id)));
            }
            for v in [
                g.p_min, g.p_max, g.q_min, g.q_max, g.p_set, g.cost.c0, g.cost.c1, g.cost.c2,
            ] {
                finite(v, "generator parameter")?;
            }
        }
        for b in &self.ac_buses {
            if b.kind != BusKind::Pq && !gen_buses.contains(&b.id) {
                return Err(invalid(alloc::format!("{:?} bus {} has no generator", b.kind, b.id)));
            }
        }
        for r in &self.res_units {
            if !idx.ac.contains_key(&r.bus) {
                return Err(invalid(alloc::format!(
                    "RES unit {} references unknown bus {}",
                    r.id,
                    r.bus
                )));
            }
            if !(r.capacity >= 0.0 && r.capacity.is_finite() && (0.0..=1.0).contains(&r.factor)) {
                return Err(invalid(alloc::format!(
                    "RES unit {} needs capacity >= 0 and factor in [0,1]",
                    r.id
                )));
            }
        }
        for (d, t) in self.scenario_map.iter().enumerate() {
            let ok = match t {
                ScenarioTarget::LoadFactor { buses } => {
                    !buses.is_empty() && buses.iter().all(|b| idx.ac.contains_key(b))
                }
                ScenarioTarget::ResFactor { unit } => self.res_units.iter().any(|r| r.id == *unit),
                ScenarioTarget::BranchOutage { branch } => self.ac_branches.iter().any(|b| b.id == *branch),
            };
            if !ok {
                return Err(invalid(alloc::format!(
                    "scenario dimension {d} targets unknown elements"
                )));
            }
        }
        self.check_connectivity(&idx)
    }

    fn check_connectivity(&self, idx: &Indices) -> Result<()> {
        let n_ac = self.ac_buses.len();
        let n_dc = self.dc_buses.len();
        let ac_edges: Vec<(usize, usize)> = self
            .ac_branches
            .iter()
            .filter(|b| b.in_service)
            .map(|b| (idx.ac[&b.from], idx.ac[&b.to]))
            .collect();
        // Converters in power control carry no angle reference, so every AC
        // bus must reach the slack through AC branches alone.
        let ac_label = components(n_ac, &ac_edges);
        if let Some(b) = (0..n_ac).find(|&b| ac_label[b] != ac_label[idx.slack]) {
            return Err(Error::Disconnected(alloc::format!(
                "AC bus {} cannot reach the slack bus through in-service branches",
                self.ac_buses[b].id
            )));
        }
        let dc_edges: Vec<(usize, usize)> = self
            .dc_branches
            .iter()
            .filter(|b| b.in_service)
            .map(|b| (idx.dc[&b.from], idx.dc[&b.to]))
            .collect();
        let dc_label = components(n_dc, &dc_edges);
        let islands: BTreeSet<usize> = dc_label.iter().copied().collect();
        for island in islands {
            let slacks = self
                .converters
                .iter()
                .filter(|c| c.dc_slack && dc_label[idx.dc[&c.dc_bus]] == island)
                .count();
            if slacks != 1 {
                let bus = self.dc_buses[island].id;
                return Err(Error::Disconnected(alloc::format!(
                    "DC island containing bus {bus} has {slacks} DC-slack converters (needs exactly one)"
                )));
            }
        }
        Ok(())
    }

    pub fn total_load(&self) -> f64 {
        self.ac_buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum::<f64>()
            + self.res_units.iter().map(ResUnit::injection).sum::<f64>()
    }

    pub fn scenario_dim(&self) -> usize {
        self.scenario_map.len()
    }

    /// System under scenario `xi`: load factors scale base loads, RES
    /// factors set availability (clamped to `[0, 1]`), outage flags remove
    /// branches. Connectivity is re-checked.
    pub fn apply_scenario(&self, xi: &[f64]) -> Result<PowerSystem> {
        if xi.len() != self.scenario_map.len() {
            return Err(crate::error::shape_err!(
                "scenario has {} entries, system maps {}",
                xi.len(),
                self.scenario_map.len()
            ));
        }
        if let Some(v) = xi.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(alloc::format!("non-finite scenario entry {v}")));
        }
        let mut sys = self.clone();
        for (target, &value) in self.scenario_map.iter().zip(xi) {
            match target {
                ScenarioTarget::LoadFactor { buses } => {
                    for b in sys.ac_buses.iter_mut().filter(|b| buses.contains(&b.id)) {
                        b.p_load *= value;
                        b.q_load *= value;
                    }
                }
                ScenarioTarget::ResFactor { unit } => {
                    for r in sys.res_units.iter_mut().filter(|r| r.id == *unit) {
                        r.factor = value.clamp(0.0, 1.0);
                    }
                }
                ScenarioTarget::BranchOutage { branch } => {
                    if value >= 0.5 {
                        for b in sys.ac_branches.iter_mut().filter(|b| b.id == *branch) {
                            b.in_service = false;
                        }
                    }
                }
            }
        }
        sys.validate()?;
        Ok(sys)
    }
}

pub fn apply_scenario(sys: &PowerSystem, xi: &[f64]) -> Result<PowerSystem> {
    sys.apply_scenario(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn case5_is_valid() {
        let sys = builtin_case5();
        sys.validate().unwrap();
        assert_eq!(sys.ac_buses.len(), 5);
        assert_eq!(sys.dc_buses.len(), 3);
        assert_eq!(sys.converters.len(), 3);
        assert_eq!(sys.generators.len(), 2);
        assert_eq!(sys.res_units.len(), 1);
    }

    #[test]
    fn capacity_headroom_over_worst_load() {
        let sys = builtin_case5();
        // every load factor at its upper truncation bound, no solar
        let worst_load = 1.3 * sys.total_load();
        let conventional: f64 = sys.generators.iter().map(|g| g.p_max).sum();
        assert!(conventional > worst_load);
    }

    #[test]
    fn nominal_and_zero_scenarios() {
        let sys = builtin_case5();
        let nominal = sys.apply_scenario(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut expected = sys.clone();
        expected.res_units[0].factor = 1.0;
        assert_eq!(nominal, expected);
        let zero = sys.apply_scenario(&[0.0, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(zero.total_load(), 0.0);
        assert!(zero.ac_buses.iter().all(|b| b.q_load == 0.0));
        assert!(sys.apply_scenario(&[1.0]).is_err());
        let clamped = sys.apply_scenario(&[1.0, 1.0, 1.0, 1.7]).unwrap();
        assert_eq!(clamped.res_units[0].factor, 1.0);
    }

    #[test]
    fn outage_flags_remove_branches_and_recheck() {
        let mut sys = builtin_case5();
        sys.scenario_map.push(ScenarioTarget::BranchOutage { branch: 3 });
        let out = sys.apply_scenario(&[1.0, 1.0, 1.0, 0.5, 1.0]).unwrap();
        assert!(!out.ac_branches.iter().find(|b| b.id == 3).unwrap().in_service);
        let kept = sys.apply_scenario(&[1.0, 1.0, 1.0, 0.5, 0.0]).unwrap();
        assert!(kept.ac_branches.iter().all(|b| b.in_service));

        // isolating bus 1 (branches 1 and 2) must be rejected
        let mut island = builtin_case5();
        island.scenario_map = vec![
            ScenarioTarget::BranchOutage { branch: 1 },
            ScenarioTarget::BranchOutage { branch: 2 },
        ];
        assert!(matches!(
            island.apply_scenario(&[1.0, 1.0]),
            Err(Error::Disconnected(_))
        ));
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let base = builtin_case5();
        let mut dup = base.clone();
        dup.ac_buses[1].id = dup.ac_buses[0].id;
        assert!(dup.validate().is_err());
        let mut two_slack = base.clone();
        two_slack.ac_buses[1].kind = BusKind::Slack;
        assert!(two_slack.validate().is_err());
        let mut bad_x = base.clone();
        bad_x.ac_branches[0].x = 0.0;
        assert!(bad_x.validate().is_err());
        let mut bad_loss = base.clone();
        bad_loss.converters[0].loss_b = -0.1;
        assert!(bad_loss.validate().is_err());
        let mut bad_gen = base.clone();
        bad_gen.generators[0].p_min = 5.0;
        assert!(bad_gen.validate().is_err());
        let mut dangling = base.clone();
        dangling.ac_branches[0].to = 99;
        assert!(dangling.validate().is_err());
        let mut no_dc_slack = base;
        no_dc_slack.converters.iter_mut().for_each(|c| c.dc_slack = false);
        assert!(matches!(no_dc_slack.validate(), Err(Error::Disconnected(_))));
    }
}
