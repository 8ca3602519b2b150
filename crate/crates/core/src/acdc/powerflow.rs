//! Newton-Raphson power flow for the coupled AC/DC system.
//!
//! Unknowns, in order: angles of non-slack AC buses, magnitudes of PQ buses,
//! DC voltages of buses not held by a DC-slack converter, `P_ac` of every
//! converter, and `P_dc` of every DC-slack converter. Equations: active
//! balance at non-slack buses, reactive balance at PQ buses, power balance at
//! every DC bus and the loss equation of every converter.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{BusKind, Dispatch, Indices, PowerSystem};
use crate::error::{shape_err, Error, Result};
use crate::math::{cos, sign0, sin, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    /// Infinity-norm tolerance on the power mismatch.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AcFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl AcFlow {
    pub fn s_max(&self) -> f64 {
        let from = sqrt(self.p_from * self.p_from + self.q_from * self.q_from);
        let to = sqrt(self.p_to * self.p_to + self.q_to * self.q_to);
        from.max(to)
    }

    pub fn loss(&self) -> f64 {
        self.p_from + self.p_to
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DcFlow {
    pub p_from: f64,
    pub p_to: f64,
}

/// Solved (or candidate) operating point. Vectors follow the component
/// tables of the system.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PfState {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub v_dc: Vec<f64>,
    /// Power injected into the AC grid by each converter.
    pub p_ac: Vec<f64>,
    /// Power injected into the DC grid by each converter.
    pub p_dc: Vec<f64>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub ac_flows: Vec<AcFlow>,
    pub dc_flows: Vec<DcFlow>,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Power flow model of one system, reusable across dispatches.
#[derive(Debug, Clone)]
pub struct PfModel {
    sys: PowerSystem,
    n: usize,
    m: usize,
    g: Vec<f64>,
    b: Vec<f64>,
    gdc: Vec<f64>,
    slack: usize,
    conv_ac: Vec<usize>,
    conv_dc: Vec<usize>,
    gen_bus: Vec<usize>,
    res_bus: Vec<usize>,
    branch_ends: Vec<(usize, usize)>,
    dc_branch_ends: Vec<(usize, usize)>,
    theta_col: Vec<Option<usize>>,
    vm_col: Vec<Option<usize>>,
    vdc_col: Vec<Option<usize>>,
    pac_col: Vec<usize>,
    pdc_col: Vec<Option<usize>>,
    p_rows: Vec<usize>,
    q_rows: Vec<usize>,
    unknowns: usize,
}

/// Full variable set used while iterating.
#[derive(Debug, Clone)]
struct Vars {
    v: Vec<f64>,
    theta: Vec<f64>,
    v_dc: Vec<f64>,
    p_ac: Vec<f64>,
    p_dc: Vec<f64>,
}

fn series_admittance(r: f64, x: f64) -> (f64, f64) {
    let d = r * r + x * x;
    (r / d, -x / d)
}

impl PfModel {
    pub fn new(sys: &PowerSystem) -> Result<Self> {
        sys.validate()?;
        let Indices { ac, dc, slack } = sys.indices()?;
        let n = sys.ac_buses.len();
        let m = sys.dc_buses.len();
        let mut g = vec![0.0; n * n];
        let mut b = vec![0.0; n * n];
        let branch_ends: Vec<(usize, usize)> = sys.ac_branches.iter().map(|br| (ac[&br.from], ac[&br.to])).collect();
        for (br, &(i, k)) in sys.ac_branches.iter().zip(&branch_ends) {
            if !br.in_service {
                continue;
            }
            let (gs, bs) = series_admittance(br.r, br.x);
            g[i * n + i] += gs;
            b[i * n + i] += bs;
            g[k * n + k] += gs;
            b[k * n + k] += bs;
            g[i * n + k] -= gs;
            b[i * n + k] -= bs;
            g[k * n + i] -= gs;
            b[k * n + i] -= bs;
        }
        let mut gdc = vec![0.0; m * m];
        let dc_branch_ends: Vec<(usize, usize)> = sys.dc_branches.iter().map(|br| (dc[&br.from], dc[&br.to])).collect();
        for (br, &(i, k)) in sys.dc_branches.iter().zip(&dc_branch_ends) {
            if !br.in_service {
                continue;
            }
            let gl = 1.0 / br.r;
            gdc[i * m + i] += gl;
            gdc[k * m + k] += gl;
            gdc[i * m + k] -= gl;
            gdc[k * m + i] -= gl;
        }
        let conv_ac: Vec<usize> = sys.converters.iter().map(|c| ac[&c.ac_bus]).collect();
        let conv_dc: Vec<usize> = sys.converters.iter().map(|c| dc[&c.dc_bus]).collect();
        let gen_bus: Vec<usize> = sys.generators.iter().map(|gen| ac[&gen.bus]).collect();
        let res_bus: Vec<usize> = sys.res_units.iter().map(|r| ac[&r.bus]).collect();

        let mut col = 0;
        let mut next = || {
            col += 1;
            col - 1
        };
        let theta_col: Vec<Option<usize>> = (0..n).map(|i| (i != slack).then(&mut next)).collect();
        let vm_col: Vec<Option<usize>> = sys
            .ac_buses
            .iter()
            .map(|bus| (bus.kind == BusKind::Pq).then(&mut next))
            .collect();
        let mut held = vec![false; m];
        for (c, conv) in sys.converters.iter().enumerate() {
            if conv.dc_slack {
                held[conv_dc[c]] = true;
            }
        }
        let vdc_col: Vec<Option<usize>> = (0..m).map(|d| (!held[d]).then(&mut next)).collect();
        let pac_col: Vec<usize> = (0..sys.converters.len()).map(|_| next()).collect();
        let pdc_col: Vec<Option<usize>> = sys.converters.iter().map(|c| c.dc_slack.then(&mut next)).collect();
        let unknowns = next();

        let p_rows: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
        let q_rows: Vec<usize> = (0..n).filter(|&i| sys.ac_buses[i].kind == BusKind::Pq).collect();
        let equations = p_rows.len() + q_rows.len() + m + sys.converters.len();
        debug_assert_eq!(equations, unknowns);

        Ok(Self {
            sys: sys.clone(),
            n,
            m,
            g,
            b,
            gdc,
            slack,
            conv_ac,
            conv_dc,
            gen_bus,
            res_bus,
            branch_ends,
            dc_branch_ends,
            theta_col,
            vm_col,
            vdc_col,
            pac_col,
            pdc_col,
            p_rows,
            q_rows,
            unknowns,
        })
    }

    pub fn system(&self) -> &PowerSystem {
        &self.sys
    }

    /// Specified net injection at each AC bus, excluding converters and the
    /// slack generator.
    fn specified(&self, dispatch: &Dispatch) -> (Vec<f64>, Vec<f64>) {
        let mut p: Vec<f64> = self.sys.ac_buses.iter().map(|b| -b.p_load).collect();
        let q: Vec<f64> = self.sys.ac_buses.iter().map(|b| -b.q_load).collect();
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            if bus != self.slack {
                p[bus] += dispatch.pg[k];
            }
        }
        for (r, &bus) in self.sys.res_units.iter().zip(&self.res_bus) {
            p[bus] += r.injection();
        }
        (p, q)
    }

    fn injections(&self, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                let (gik, bik) = (self.g[i * n + k], self.b[i * n + k]);
                if gik == 0.0 && bik == 0.0 {
                    continue;
                }
                let t = theta[i] - theta[k];
                let (s, c) = (sin(t), cos(t));
                p[i] += v[i] * v[k] * (gik * c + bik * s);
                q[i] += v[i] * v[k] * (gik * s - bik * c);
            }
        }
        (p, q)
    }

    fn dc_injections(&self, v_dc: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|d| v_dc[d] * (0..m).map(|e| self.gdc[d * m + e] * v_dc[e]).sum::<f64>())
            .collect()
    }

    fn flat_start(&self, dispatch: &Dispatch) -> Vars {
        let mut v = vec![1.0; self.n];
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            v[bus] = dispatch.v_set[k];
        }
        let mut v_dc = vec![1.0; self.m];
        let mut p_dc = dispatch.p_dc.clone();
        for (c, conv) in self.sys.converters.iter().enumerate() {
            if conv.dc_slack {
                v_dc[self.conv_dc[c]] = conv.v_dc_set;
                p_dc[c] = 0.0;
            }
        }
        let p_ac = p_dc.iter().map(|p| -p).collect();
        Vars {
            v,
            theta: vec![0.0; self.n],
            v_dc,
            p_ac,
            p_dc,
        }
    }

    /// Starting point from a previous state, with controlled quantities
    /// reset to the new setpoints.
    fn warm_start(&self, dispatch: &Dispatch, prev: &PfState) -> Vars {
        let mut vars = self.flat_start(dispatch);
        for i in 0..self.n {
            vars.theta[i] = prev.theta[i];
            if self.vm_col[i].is_some() {
                vars.v[i] = prev.v[i];
            }
        }
        for d in 0..self.m {
            if self.vdc_col[d].is_some() {
                vars.v_dc[d] = prev.v_dc[d];
            }
        }
        vars.p_ac.copy_from_slice(&prev.p_ac);
        for (c, col) in self.pdc_col.iter().enumerate() {
            if col.is_some() {
                vars.p_dc[c] = prev.p_dc[c];
            }
        }
        vars
    }

    fn mismatch(&self, spec: &(Vec<f64>, Vec<f64>), x: &Vars) -> Vec<f64> {
        let (p_calc, q_calc) = self.injections(&x.v, &x.theta);
        let mut p_net = spec.0.clone();
        for (c, &bus) in self.conv_ac.iter().enumerate() {
            p_net[bus] += x.p_ac[c];
        }
        let mut dc_net = vec![0.0; self.m];
        for (c, &d) in self.conv_dc.iter().enumerate() {
            dc_net[d] += x.p_dc[c];
        }
        let dc_calc = self.dc_injections(&x.v_dc);
        let mut f = Vec::with_capacity(self.unknowns);
        f.extend(self.p_rows.iter().map(|&i| p_net[i] - p_calc[i]));
        f.extend(self.q_rows.iter().map(|&i| spec.1[i] - q_calc[i]));
        f.extend((0..self.m).map(|d| dc_net[d] - dc_calc[d]));
        f.extend(
            self.sys
                .converters
                .iter()
                .enumerate()
                .map(|(c, conv)| x.p_ac[c] + conv.loss(x.p_ac[c]) + x.p_dc[c]),
        );
        f
    }

    fn jacobian(&self, x: &Vars) -> DMatrix<f64> {
        let (n, m) = (self.n, self.m);
        let (p_calc, q_calc) = self.injections(&x.v, &x.theta);
        let mut jac = DMatrix::<f64>::zeros(self.unknowns, self.unknowns);
        let v = &x.v;
        let th = &x.theta;
        let mut row = 0;
        // Mismatch rows are "specified - calculated", hence the negations.
        for &i in &self.p_rows {
            for k in 0..n {
                let (gik, bik) = (self.g[i * n + k], self.b[i * n + k]);
                let t = th[i] - th[k];
                let (s, c) = (sin(t), cos(t));
                let (d_theta, d_v) = if k == i {
                    (-q_calc[i] - bik * v[i] * v[i], p_calc[i] / v[i] + gik * v[i])
                } else {
                    (v[i] * v[k] * (gik * s - bik * c), v[i] * (gik * c + bik * s))
                };
                if let Some(col) = self.theta_col[k] {
                    jac[(row, col)] = -d_theta;
                }
                if let Some(col) = self.vm_col[k] {
                    jac[(row, col)] = -d_v;
                }
            }
            for (c, &bus) in self.conv_ac.iter().enumerate() {
                if bus == i {
                    jac[(row, self.pac_col[c])] += 1.0;
                }
            }
            row += 1;
        }
        for &i in &self.q_rows {
            for k in 0..n {
                let (gik, bik) = (self.g[i * n + k], self.b[i * n + k]);
                let t = th[i] - th[k];
                let (s, c) = (sin(t), cos(t));
                let (d_theta, d_v) = if k == i {
                    (p_calc[i] - gik * v[i] * v[i], q_calc[i] / v[i] - bik * v[i])
                } else {
                    (-v[i] * v[k] * (gik * c + bik * s), v[i] * (gik * s - bik * c))
                };
                if let Some(col) = self.theta_col[k] {
                    jac[(row, col)] = -d_theta;
                }
                if let Some(col) = self.vm_col[k] {
                    jac[(row, col)] = -d_v;
                }
            }
            row += 1;
        }
        for d in 0..m {
            let own: f64 = (0..m).map(|e| self.gdc[d * m + e] * x.v_dc[e]).sum();
            for e in 0..m {
                let Some(col) = self.vdc_col[e] else { continue };
                let deriv = if e == d {
                    own + self.gdc[d * m + d] * x.v_dc[d]
                } else {
                    x.v_dc[d] * self.gdc[d * m + e]
                };
                jac[(row, col)] = -deriv;
            }
            for (c, &bus) in self.conv_dc.iter().enumerate() {
                if let (true, Some(col)) = (bus == d, self.pdc_col[c]) {
                    jac[(row, col)] += 1.0;
                }
            }
            row += 1;
        }
        for (c, conv) in self.sys.converters.iter().enumerate() {
            let p = x.p_ac[c];
            jac[(row, self.pac_col[c])] = 1.0 + conv.loss_b * sign0(p) + 2.0 * conv.loss_c * p;
            if let Some(col) = self.pdc_col[c] {
                jac[(row, col)] = 1.0;
            }
            row += 1;
        }
        jac
    }

    fn apply_step(&self, x: &mut Vars, dz: &DVector<f64>) {
        for i in 0..self.n {
            if let Some(col) = self.theta_col[i] {
                x.theta[i] -= dz[col];
            }
            if let Some(col) = self.vm_col[i] {
                x.v[i] -= dz[col];
            }
        }
        for d in 0..self.m {
            if let Some(col) = self.vdc_col[d] {
                x.v_dc[d] -= dz[col];
            }
        }
        for c in 0..self.sys.converters.len() {
            x.p_ac[c] -= dz[self.pac_col[c]];
            if let Some(col) = self.pdc_col[c] {
                x.p_dc[c] -= dz[col];
            }
        }
    }

    /// Solves from a flat start, or from `start` when given.
    pub fn solve(&self, dispatch: &Dispatch, opts: &PfOptions, start: Option<&PfState>) -> Result<PfState> {
        dispatch.check(&self.sys)?;
        if let Some(s) = start {
            self.check_state(s)?;
        }
        let spec = self.specified(dispatch);
        let mut x = match start {
            Some(s) => self.warm_start(dispatch, s),
            None => self.flat_start(dispatch),
        };
        let norm = |f: &[f64]| {
            f.iter()
                .fold(0.0f64, |a, v| if v.is_nan() { f64::NAN } else { a.max(v.abs()) })
        };
        let mut f = self.mismatch(&spec, &x);
        let mut err = norm(&f);
        let mut iterations = 0;
        while !(err <= opts.tol) {
            if iterations >= opts.max_iter || !err.is_finite() {
                return Err(Error::PowerFlowDivergence {
                    iterations,
                    mismatch: err,
                });
            }
            let dz = self.newton_step(&x, &f, iterations)?;
            self.apply_step(&mut x, &dz);
            iterations += 1;
            f = self.mismatch(&spec, &x);
            err = norm(&f);
        }
        // One more step takes the quadratic convergence down to rounding
        // level, which keeps finite-difference sensitivities clean.
        if err > 1e-13 {
            if let Ok(dz) = self.newton_step(&x, &f, iterations) {
                let mut polished = x.clone();
                self.apply_step(&mut polished, &dz);
                let f2 = self.mismatch(&spec, &polished);
                let err2 = norm(&f2);
                if err2 < err {
                    x = polished;
                    err = err2;
                    iterations += 1;
                }
            }
        }
        Ok(self.finish(x, iterations, err))
    }

    fn newton_step(&self, x: &Vars, f: &[f64], iteration: usize) -> Result<DVector<f64>> {
        let jac = self.jacobian(x);
        let scale = jac.amax().max(1.0);
        let lu = jac.lu();
        let tiny = lu.u().diagonal().iter().any(|u| u.abs() <= 1e-13 * scale);
        let dz = if tiny {
            None
        } else {
            lu.solve(&DVector::from_column_slice(f))
        };
        match dz {
            Some(dz) if dz.iter().all(|v| v.is_finite()) => Ok(dz),
            _ => Err(Error::SingularJacobian { iteration }),
        }
    }

    fn check_state(&self, s: &PfState) -> Result<()> {
        let (n, m, nc) = (self.n, self.m, self.sys.converters.len());
        let ok = s.v.len() == n
            && s.theta.len() == n
            && s.v_dc.len() == m
            && s.p_ac.len() == nc
            && s.p_dc.len() == nc
            && s.gen_p.len() == self.sys.generators.len()
            && s.gen_q.len() == self.sys.generators.len()
            && s.ac_flows.len() == self.sys.ac_branches.len()
            && s.dc_flows.len() == self.sys.dc_branches.len();
        if ok {
            Ok(())
        } else {
            Err(shape_err!("state does not match the system's component tables"))
        }
    }

    fn ac_flow(&self, br: usize, v: &[f64], theta: &[f64]) -> AcFlow {
        let branch = &self.sys.ac_branches[br];
        if !branch.in_service {
            return AcFlow::default();
        }
        let (i, k) = self.branch_ends[br];
        let (gs, bs) = series_admittance(branch.r, branch.x);
        let end = |a: usize, o: usize| {
            let t = theta[a] - theta[o];
            let (s, c) = (sin(t), cos(t));
            let p = v[a] * v[a] * gs - v[a] * v[o] * (gs * c + bs * s);
            let q = -v[a] * v[a] * bs - v[a] * v[o] * (gs * s - bs * c);
            (p, q)
        };
        let (p_from, q_from) = end(i, k);
        let (p_to, q_to) = end(k, i);
        AcFlow {
            p_from,
            q_from,
            p_to,
            q_to,
        }
    }

    fn dc_flow(&self, br: usize, v_dc: &[f64]) -> DcFlow {
        let branch = &self.sys.dc_branches[br];
        if !branch.in_service {
            return DcFlow::default();
        }
        let (i, k) = self.dc_branch_ends[br];
        let gl = 1.0 / branch.r;
        DcFlow {
            p_from: v_dc[i] * (v_dc[i] - v_dc[k]) * gl,
            p_to: v_dc[k] * (v_dc[k] - v_dc[i]) * gl,
        }
    }

    /// Generator outputs implied by bus balances at a given operating point.
    fn generator_outputs(&self, v: &[f64], theta: &[f64], p_ac: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (p_calc, q_calc) = self.injections(v, theta);
        let mut p_other: Vec<f64> = self.sys.ac_buses.iter().map(|b| -b.p_load).collect();
        for (r, &bus) in self.sys.res_units.iter().zip(&self.res_bus) {
            p_other[bus] += r.injection();
        }
        for (c, &bus) in self.conv_ac.iter().enumerate() {
            p_other[bus] += p_ac[c];
        }
        let gen_p = self.gen_bus.iter().map(|&b| p_calc[b] - p_other[b]).collect();
        let gen_q = self
            .gen_bus
            .iter()
            .map(|&b| q_calc[b] + self.sys.ac_buses[b].q_load)
            .collect();
        (gen_p, gen_q)
    }

    fn finish(&self, x: Vars, iterations: usize, mismatch: f64) -> PfState {
        let (gen_p, gen_q) = self.generator_outputs(&x.v, &x.theta, &x.p_ac);
        let ac_flows = (0..self.sys.ac_branches.len())
            .map(|b| self.ac_flow(b, &x.v, &x.theta))
            .collect();
        let dc_flows = (0..self.sys.dc_branches.len())
            .map(|b| self.dc_flow(b, &x.v_dc))
            .collect();
        PfState {
            v: x.v,
            theta: x.theta,
            v_dc: x.v_dc,
            p_ac: x.p_ac,
            p_dc: x.p_dc,
            gen_p,
            gen_q,
            ac_flows,
            dc_flows,
            iterations,
            mismatch,
        }
    }

    /// Full residual vector: power balances, setpoint mismatches, and
    /// consistency of the stored flows and generator outputs. Zero exactly
    /// when `state` solves the power flow for `dispatch`.
    pub fn residuals(&self, dispatch: &Dispatch, state: &PfState) -> Result<Vec<f64>> {
        dispatch.check(&self.sys)?;
        self.check_state(state)?;
        let x = Vars {
            v: state.v.clone(),
            theta: state.theta.clone(),
            v_dc: state.v_dc.clone(),
            p_ac: state.p_ac.clone(),
            p_dc: state.p_dc.clone(),
        };
        let spec = self.specified(dispatch);
        let mut r = self.mismatch(&spec, &x);
        r.push(state.theta[self.slack]);
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            r.push(state.v[bus] - dispatch.v_set[k]);
        }
        for (c, conv) in self.sys.converters.iter().enumerate() {
            if conv.dc_slack {
                r.push(state.v_dc[self.conv_dc[c]] - conv.v_dc_set);
            } else {
                r.push(state.p_dc[c] - dispatch.p_dc[c]);
            }
        }
        let (gen_p, gen_q) = self.generator_outputs(&x.v, &x.theta, &x.p_ac);
        r.extend(state.gen_p.iter().zip(&gen_p).map(|(a, b)| a - b));
        r.extend(state.gen_q.iter().zip(&gen_q).map(|(a, b)| a - b));
        for (br, stored) in state.ac_flows.iter().enumerate() {
            let f = self.ac_flow(br, &x.v, &x.theta);
            r.extend([
                stored.p_from - f.p_from,
                stored.q_from - f.q_from,
                stored.p_to - f.p_to,
                stored.q_to - f.q_to,
            ]);
        }
        for (br, stored) in state.dc_flows.iter().enumerate() {
            let f = self.dc_flow(br, &x.v_dc);
            r.extend([stored.p_from - f.p_from, stored.p_to - f.p_to]);
        }
        Ok(r)
    }
}

pub fn newton_power_flow(sys: &PowerSystem, dispatch: &Dispatch) -> Result<PfState> {
    newton_power_flow_with(sys, dispatch, &PfOptions::default())
}

pub fn newton_power_flow_with(sys: &PowerSystem, dispatch: &Dispatch, opts: &PfOptions) -> Result<PfState> {
    PfModel::new(sys)?.solve(dispatch, opts, None)
}

pub fn pf_residuals(sys: &PowerSystem, dispatch: &Dispatch, state: &PfState) -> Result<Vec<f64>> {
    PfModel::new(sys)?.residuals(dispatch, state)
}

/// Names of the entries returned by [`constraint_violations`], in order.
pub fn constraint_labels(sys: &PowerSystem) -> Vec<String> {
    use alloc::format;
    let mut out = Vec::new();
    for b in &sys.ac_buses {
        out.push(format!("bus {} v_max", b.id));
        out.push(format!("bus {} v_min", b.id));
    }
    for br in &sys.ac_branches {
        out.push(format!("branch {} s_max", br.id));
    }
    for g in &sys.generators {
        out.push(format!("gen {} p_max", g.id));
        out.push(format!("gen {} p_min", g.id));
        out.push(format!("gen {} q_max", g.id));
        out.push(format!("gen {} q_min", g.id));
    }
    for c in &sys.converters {
        out.push(format!("converter {} p_max", c.id));
    }
    for b in &sys.dc_buses {
        out.push(format!("dc bus {} v_max", b.id));
        out.push(format!("dc bus {} v_min", b.id));
    }
    for br in &sys.dc_branches {
        out.push(format!("dc branch {} limit", br.id));
    }
    out
}

/// Inequality values `h(x) <= 0`; positive entries are violations in per
/// unit. Out-of-service branches report `-limit`.
pub fn constraint_violations(sys: &PowerSystem, state: &PfState) -> Result<Vec<f64>> {
    let consistent = state.v.len() == sys.ac_buses.len()
        && state.ac_flows.len() == sys.ac_branches.len()
        && state.gen_p.len() == sys.generators.len()
        && state.gen_q.len() == sys.generators.len()
        && state.p_ac.len() == sys.converters.len()
        && state.p_dc.len() == sys.converters.len()
        && state.v_dc.len() == sys.dc_buses.len()
        && state.dc_flows.len() == sys.dc_branches.len();
    if !consistent {
        return Err(shape_err!("state does not match the system's component tables"));
    }
    let mut h = Vec::new();
    for (b, &v) in sys.ac_buses.iter().zip(&state.v) {
        h.push(v - b.v_max);
        h.push(b.v_min - v);
    }
    for (br, f) in sys.ac_branches.iter().zip(&state.ac_flows) {
        h.push(if br.in_service { f.s_max() } else { 0.0 } - br.s_max);
    }
    for (k, g) in sys.generators.iter().enumerate() {
        h.push(state.gen_p[k] - g.p_max);
        h.push(g.p_min - state.gen_p[k]);
        h.push(state.gen_q[k] - g.q_max);
        h.push(g.q_min - state.gen_q[k]);
    }
    for (c, conv) in sys.converters.iter().enumerate() {
        h.push(state.p_ac[c].abs().max(state.p_dc[c].abs()) - conv.p_max);
    }
    for (b, &v) in sys.dc_buses.iter().zip(&state.v_dc) {
        h.push(v - b.v_max);
        h.push(b.v_min - v);
    }
    for (br, f) in sys.dc_branches.iter().zip(&state.dc_flows) {
        let flow = if br.in_service {
            f.p_from.abs().max(f.p_to.abs())
        } else {
            0.0
        };
        h.push(flow - br.limit);
    }
    Ok(h)
}
