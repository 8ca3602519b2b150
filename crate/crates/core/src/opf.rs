//! Scenario-wise optimal power flow.
//!
//! Decision variables are the active outputs of non-slack generators and the
//! DC power setpoints of converters that do not hold a DC voltage. Voltage
//! setpoints stay at their case values. For each trial dispatch a Newton
//! power flow gives the operating point; cost is the sum of generator cost
//! curves and every limit enters through a PHR augmented Lagrangian whose
//! inner problems are solved by BFGS on central-difference gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::acdc::{constraint_labels, constraint_violations, Dispatch, PfModel, PfOptions, PfState, PowerSystem};
use crate::error::{Error, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OpfConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Initial penalty parameter (objective is normalised to order one).
    pub rho: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Largest admissible constraint value of a converged solution.
    pub feasibility_tol: f64,
    /// Infinity-norm tolerance on the inner gradient.
    pub stationarity_tol: f64,
    pub fd_step: f64,
    pub pf_tol: f64,
    pub pf_max_iter: usize,
}

impl Default for OpfConfig {
    fn default() -> Self {
        Self {
            max_outer: 60,
            max_inner: 300,
            rho: 100.0,
            rho_growth: 10.0,
            rho_max: 1e9,
            feasibility_tol: 1e-6,
            stationarity_tol: 1e-7,
            fd_step: 1e-6,
            pf_tol: 1e-8,
            pf_max_iter: 50,
        }
    }
}

impl OpfConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.rho,
            self.rho_max,
            self.feasibility_tol,
            self.stationarity_tol,
            self.fd_step,
            self.pf_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.rho_growth > 1.0) {
            return Err(Error::Config(
                "OPF tolerances and penalties must be positive, growth > 1".into(),
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.pf_max_iter == 0 {
            return Err(Error::Config("OPF iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpfSolution {
    pub dispatch: Dispatch,
    pub state: PfState,
    pub objective: f64,
    /// Constraint values `h`, ordered as `constraint_labels`.
    pub violations: Vec<f64>,
    pub max_violation: f64,
    /// One multiplier per entry of `constraint_labels`.
    pub multipliers: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Generation cost of a solved operating point.
pub fn generation_cost(sys: &PowerSystem, state: &PfState) -> f64 {
    sys.generators
        .iter()
        .zip(&state.gen_p)
        .map(|(g, &p)| g.cost.eval(p))
        .sum()
}

struct Problem<'a> {
    model: PfModel,
    base: Dispatch,
    gen_vars: Vec<usize>,
    conv_vars: Vec<usize>,
    cfg: &'a OpfConfig,
    pf: PfOptions,
    scale: f64,
}

#[derive(Clone)]
struct Point {
    u: Vec<f64>,
    state: PfState,
    cost: f64,
    h: Vec<f64>,
}

impl Problem<'_> {
    fn dispatch(&self, u: &[f64]) -> Dispatch {
        let mut d = self.base.clone();
        for (k, &g) in self.gen_vars.iter().enumerate() {
            d.pg[g] = u[k];
        }
        for (k, &c) in self.conv_vars.iter().enumerate() {
            d.p_dc[c] = u[self.gen_vars.len() + k];
        }
        d
    }

    fn evaluate(&self, u: &[f64], start: Option<&PfState>) -> Result<Point> {
        let state = self.model.solve(&self.dispatch(u), &self.pf, start)?;
        let sys = self.model.system();
        let cost = generation_cost(sys, &state);
        let h = constraint_violations(sys, &state)?;
        Ok(Point {
            u: u.to_vec(),
            state,
            cost,
            h,
        })
    }

    /// PHR augmented Lagrangian of a point, objective normalised.
    fn lagrangian(&self, p: &Point, lambda: &[f64], rho: f64) -> f64 {
        let penalty: f64 =
            p.h.iter()
                .zip(lambda)
                .map(|(&h, &l)| {
                    let s = (l + rho * h).max(0.0);
                    s * s - l * l
                })
                .sum();
        p.cost / self.scale + penalty / (2.0 * rho)
    }

    /// Lagrangian value at `u`, or infinity where the power flow fails.
    fn probe(&self, u: &[f64], start: &PfState, lambda: &[f64], rho: f64) -> (f64, Option<Point>) {
        match self.evaluate(u, Some(start)) {
            Ok(p) => (self.lagrangian(&p, lambda, rho), Some(p)),
            Err(_) => (f64::INFINITY, None),
        }
    }

    fn gradient(&self, at: &Point, lambda: &[f64], rho: f64) -> Vec<f64> {
        let h = self.cfg.fd_step;
        (0..at.u.len())
            .map(|i| {
                let mut up = at.u.clone();
                up[i] += h;
                let mut down = at.u.clone();
                down[i] -= h;
                let (fu, _) = self.probe(&up, &at.state, lambda, rho);
                let (fd, _) = self.probe(&down, &at.state, lambda, rho);
                (fu - fd) / (2.0 * h)
            })
            .collect()
    }

    /// BFGS with Armijo backtracking on the augmented Lagrangian. Stalling
    /// with a gradient near the finite-difference noise floor counts as
    /// stationary.
    fn minimize(&self, start: Point, lambda: &[f64], rho: f64, iterations: &mut usize) -> (Point, bool) {
        let n = start.u.len();
        let mut x = start;
        if n == 0 {
            return (x, true);
        }
        let tol = self.cfg.stationarity_tol;
        let noise_floor = 100.0 * tol;
        let mut fx = self.lagrangian(&x, lambda, rho);
        let mut g = self.gradient(&x, lambda, rho);
        let mut hinv = identity(n);
        let mut stalled = 0;
        for _ in 0..self.cfg.max_inner {
            let gnorm = inf_norm(&g);
            if gnorm <= tol || (stalled >= 3 && gnorm <= noise_floor) {
                return (x, true);
            }
            *iterations += 1;
            let mut dir: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
            let mut slope = dot(&g, &dir);
            if !(slope < 0.0) {
                hinv = identity(n);
                dir = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = x.u.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                let (ft, p) = self.probe(&trial, &x.state, lambda, rho);
                if ft <= fx + 1e-4 * step * slope {
                    accepted = p.map(|p| (ft, p));
                    break;
                }
                step *= 0.5;
            }
            let Some((f_new, p_new)) = accepted else {
                return (x, gnorm <= noise_floor);
            };
            if fx - f_new <= 1e-13 * fx.abs().max(1.0) {
                stalled += 1;
            } else {
                stalled = 0;
            }
            let g_new = self.gradient(&p_new, lambda, rho);
            let s: Vec<f64> = p_new.u.iter().zip(&x.u).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * sqrt(dot(&s, &s) * dot(&y, &y)) {
                bfgs_update(&mut hinv, &s, &y, sy);
            }
            x = p_new;
            fx = f_new;
            g = g_new;
        }
        let ok = inf_norm(&g) <= noise_floor;
        (x, ok)
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Inverse-Hessian update `H ← (I - ρsyᵀ) H (I - ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}

fn max_of(h: &[f64]) -> (f64, usize) {
    h.iter().enumerate().fold(
        (f64::NEG_INFINITY, 0),
        |(m, k), (i, &v)| if v > m { (v, i) } else { (m, k) },
    )
}

/// Solves the OPF of `sys` (already carrying its scenario).
pub fn solve_opf(sys: &PowerSystem, cfg: &OpfConfig) -> Result<OpfSolution> {
    cfg.validate()?;
    let model = PfModel::new(sys)?;
    let slack_bus = sys
        .ac_buses
        .iter()
        .find(|b| b.kind == crate::acdc::BusKind::Slack)
        .map(|b| b.id);
    let gen_vars: Vec<usize> = (0..sys.generators.len())
        .filter(|&g| Some(sys.generators[g].bus) != slack_bus)
        .collect();
    let conv_vars: Vec<usize> = (0..sys.converters.len())
        .filter(|&c| !sys.converters[c].dc_slack)
        .collect();
    let base = Dispatch::nominal(sys);
    let mut u0: Vec<f64> = gen_vars
        .iter()
        .map(|&g| {
            let gen = &sys.generators[g];
            gen.p_set.clamp(gen.p_min, gen.p_max)
        })
        .collect();
    u0.extend(conv_vars.iter().map(|&c| base.p_dc[c]));
    let pf = PfOptions {
        tol: cfg.pf_tol,
        max_iter: cfg.pf_max_iter,
    };
    let mut problem = Problem {
        model,
        base,
        gen_vars,
        conv_vars,
        cfg,
        pf,
        scale: 1.0,
    };
    let mut point = problem.evaluate(&u0, None)?;
    problem.scale = point.cost.abs().max(1.0);

    let labels_len = point.h.len();
    let mut lambda = vec![0.0; labels_len];
    let mut rho = cfg.rho;
    let mut inner_total = 0;
    let mut last_violation = f64::INFINITY;
    for outer in 1..=cfg.max_outer {
        let (next, stationary) = problem.minimize(point, &lambda, rho, &mut inner_total);
        point = next;
        let (violation, _) = max_of(&point.h);
        let violation = violation.max(0.0);
        // complementarity residual of the multiplier update
        let shift = point
            .h
            .iter()
            .zip(&lambda)
            .map(|(&h, &l)| ((l + rho * h).max(0.0) - l).abs() / rho)
            .fold(0.0, f64::max);
        for (l, &h) in lambda.iter_mut().zip(&point.h) {
            *l = (*l + rho * h).max(0.0);
        }
        if violation <= cfg.feasibility_tol && shift <= cfg.feasibility_tol && stationary {
            return Ok(finish(&problem, point, lambda, outer, inner_total, true));
        }
        if violation > 0.25 * last_violation && violation > cfg.feasibility_tol {
            rho = (rho * cfg.rho_growth).min(cfg.rho_max);
        }
        last_violation = violation;
    }
    let (worst, at) = max_of(&point.h);
    if worst > cfg.feasibility_tol {
        let labels = constraint_labels(sys);
        return Err(Error::Infeasible {
            worst,
            constraint: labels.get(at).cloned().unwrap_or_else(|| format!("constraint {at}")),
        });
    }
    Ok(finish(&problem, point, lambda, cfg.max_outer, inner_total, false))
}

fn finish(
    problem: &Problem<'_>,
    point: Point,
    lambda: Vec<f64>,
    outer: usize,
    inner: usize,
    converged: bool,
) -> OpfSolution {
    let (worst, _) = max_of(&point.h);
    let mut dispatch = problem.dispatch(&point.u);
    // report the slack generator's realised output as well
    dispatch.pg.clone_from(&point.state.gen_p);
    OpfSolution {
        dispatch,
        objective: point.cost,
        max_violation: worst.max(0.0),
        violations: point.h,
        multipliers: lambda.iter().map(|l| l * problem.scale).collect(),
        state: point.state,
        outer_iterations: outer,
        inner_iterations: inner,
        converged,
    }
}

/// One scalar extracted from an OPF solution.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Selector {
    Objective,
    GenP {
        gen: u32,
    },
    GenQ {
        gen: u32,
    },
    BusV {
        bus: u32,
    },
    BusAngle {
        bus: u32,
    },
    /// Active power entering the branch at its `from` end.
    BranchP {
        branch: u32,
    },
    /// Power the converter injects into the AC grid.
    ConverterP {
        converter: u32,
    },
    DcBusV {
        bus: u32,
    },
}

impl Selector {
    pub fn name(&self) -> String {
        match self {
            Selector::Objective => "objective".into(),
            Selector::GenP { gen } => format!("gen{gen}_p"),
            Selector::GenQ { gen } => format!("gen{gen}_q"),
            Selector::BusV { bus } => format!("bus{bus}_v"),
            Selector::BusAngle { bus } => format!("bus{bus}_angle"),
            Selector::BranchP { branch } => format!("branch{branch}_p"),
            Selector::ConverterP { converter } => format!("conv{converter}_p"),
            Selector::DcBusV { bus } => format!("dcbus{bus}_v"),
        }
    }
}

/// Ordered list of outputs recorded per scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutputSpec {
    pub outputs: Vec<Selector>,
}

impl OutputSpec {
    /// Objective, both generator outputs, the bus 4 voltage and the power
    /// of converter 2 of the bundled five-bus case.
    pub fn case5_default() -> Self {
        Self {
            outputs: vec![
                Selector::Objective,
                Selector::GenP { gen: 1 },
                Selector::GenP { gen: 2 },
                Selector::BusV { bus: 4 },
                Selector::ConverterP { converter: 2 },
            ],
        }
    }

    /// Hex SHA-256 of the output names, which pins both the selection and
    /// its order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in self.names() {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.outputs.iter().map(Selector::name).collect()
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Checks that the spec is non-empty and every selector resolves in `sys`.
    pub fn resolve(&self, sys: &PowerSystem) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Error::Selector("output specification is empty".into()));
        }
        for s in &self.outputs {
            position(sys, s)?;
        }
        Ok(())
    }
}

fn find<T>(items: &[T], id: u32, key: impl Fn(&T) -> u32, what: &str) -> Result<usize> {
    items
        .iter()
        .position(|t| key(t) == id)
        .ok_or_else(|| Error::Selector(format!("no {what} with id {id}")))
}

fn position(sys: &PowerSystem, s: &Selector) -> Result<usize> {
    match *s {
        Selector::Objective => Ok(0),
        Selector::GenP { gen } | Selector::GenQ { gen } => find(&sys.generators, gen, |g| g.id, "generator"),
        Selector::BusV { bus } | Selector::BusAngle { bus } => find(&sys.ac_buses, bus, |b| b.id, "AC bus"),
        Selector::BranchP { branch } => find(&sys.ac_branches, branch, |b| b.id, "AC branch"),
        Selector::ConverterP { converter } => find(&sys.converters, converter, |c| c.id, "converter"),
        Selector::DcBusV { bus } => find(&sys.dc_buses, bus, |b| b.id, "DC bus"),
    }
}

pub fn extract_outputs(sys: &PowerSystem, solution: &OpfSolution, spec: &OutputSpec) -> Result<Vec<f64>> {
    if !solution.converged {
        return Err(Error::NotConverged);
    }
    spec.resolve(sys)?;
    let st = &solution.state;
    spec.outputs
        .iter()
        .map(|s| {
            let i = position(sys, s)?;
            let value = match s {
                Selector::Objective => solution.objective,
                Selector::GenP { .. } => st.gen_p[i],
                Selector::GenQ { .. } => st.gen_q[i],
                Selector::BusV { .. } => st.v[i],
                Selector::BusAngle { .. } => st.theta[i],
                Selector::BranchP { .. } => st.ac_flows[i].p_from,
                Selector::ConverterP { .. } => st.p_ac[i],
                Selector::DcBusV { .. } => st.v_dc[i],
            };
            Ok(value)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acdc::{builtin_case5, AcBranch, AcBus, BusKind, Cost, Generator};

    fn toy() -> PowerSystem {
        let bus = |id, kind, p_load| AcBus {
            id,
            kind,
            v_min: 0.9,
            v_max: 1.1,
            p_load,
            q_load: 0.0,
        };
        let generator = |id, bus, p_max, c1| Generator {
            id,
            bus,
            p_min: 0.0,
            p_max,
            q_min: -5.0,
            q_max: 5.0,
            v_set: 1.0,
            p_set: 0.0,
            cost: Cost { c0: 0.0, c1, c2: 0.0 },
        };
        PowerSystem {
            name: "toy".into(),
            base_mva: 100.0,
            ac_buses: vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pv, 0.8)],
            ac_branches: vec![AcBranch {
                id: 1,
                from: 1,
                to: 2,
                r: 0.0,
                x: 0.1,
                s_max: 5.0,
                in_service: true,
            }],
            dc_buses: vec![],
            dc_branches: vec![],
            converters: vec![],
            generators: vec![generator(1, 1, 0.6, 10.0), generator(2, 2, 2.0, 30.0)],
            res_units: vec![],
            scenario_map: vec![],
        }
    }

    #[test]
    fn toy_dispatch_fills_cheap_unit_first() {
        let sol = solve_opf(&toy(), &OpfConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.max_violation <= 1e-6);
        assert!((sol.objective - 12.0).abs() / 12.0 <= 1e-3, "{}", sol.objective);
        assert!((sol.state.gen_p[0] - 0.6).abs() < 1e-4);
        assert!((sol.state.gen_p[1] - 0.2).abs() < 1e-4);
        // the binding capacity limit carries the price difference
        let labels = constraint_labels(&toy());
        let cap = labels.iter().position(|l| l == "gen 1 p_max").unwrap();
        assert!((sol.multipliers[cap] - 20.0).abs() < 0.5, "{}", sol.multipliers[cap]);
    }

    #[test]
    fn single_generator_takes_whole_load() {
        let mut sys = toy();
        sys.ac_buses[1].kind = BusKind::Pq;
        sys.generators.truncate(1);
        sys.generators[0].p_max = 2.0;
        let sol = solve_opf(&sys, &OpfConfig::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.inner_iterations, 0);
        // the series resistance is zero, so generation equals load
        assert!((sol.state.gen_p[0] - 0.8).abs() < 1e-9);
        assert!((sol.objective - 8.0).abs() < 1e-8);
    }

    #[test]
    fn load_beyond_capacity_is_infeasible() {
        let mut sys = toy();
        sys.generators[1].p_max = 0.1;
        let err = solve_opf(&sys, &OpfConfig::default()).unwrap_err();
        assert!(err.is_numeric(), "{err:?}");
    }

    #[test]
    fn case5_nominal_is_interior() {
        let sys = builtin_case5();
        let sol = solve_opf(&sys, &OpfConfig::default()).unwrap();
        assert!(sol.converged);
        let h = constraint_violations(&sys, &sol.state).unwrap();
        assert!(h.iter().all(|v| *v < -1e-3), "{h:?}");
    }
}
