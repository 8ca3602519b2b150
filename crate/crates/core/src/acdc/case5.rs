use alloc::vec;

use super::{
    AcBranch, AcBus, BusKind, Converter, Cost, DcBranch, DcBus, Generator, PowerSystem, ResUnit, ScenarioTarget,
};

/// Five-bus AC grid overlaid with a three-terminal meshed DC grid.
///
/// Bus 1 is the slack, bus 2 a PV bus, buses 3 to 5 are PQ. Converters sit
/// at AC buses 1, 3 and 5; the one at bus 1 holds the DC voltage, so the DC
/// grid always exports cheap slack power towards buses 3 and 5 and converter
/// flows stay clear of the `|P|` kink of the loss curve. A solar unit of
/// 0.4 p.u. feeds bus 2. Limits are loose enough that no inequality binds
/// for load factors in `[0.7, 1.3]`, so the optimal dispatch is a smooth
/// function of the scenario.
///
/// Scenario dimensions: load factor at bus 2, at bus 3, at buses 4 and 5,
/// and the solar availability factor.
pub fn builtin_case5() -> PowerSystem {
    let ac_bus = |id, kind, p_load, q_load| AcBus {
        id,
        kind,
        v_min: 0.9,
        v_max: 1.1,
        p_load,
        q_load,
    };
    let branch = |id, from, to, r, x| AcBranch {
        id,
        from,
        to,
        r,
        x,
        s_max: 3.0,
        in_service: true,
    };
    let dc_bus = |id| DcBus {
        id,
        v_min: 0.9,
        v_max: 1.1,
    };
    let dc_branch = |id, from, to| DcBranch {
        id,
        from,
        to,
        r: 0.052,
        limit: 2.0,
        in_service: true,
    };
    let converter = |id, ac_bus, dc_bus, dc_slack, p_dc_set| Converter {
        id,
        ac_bus,
        dc_bus,
        p_max: 1.5,
        loss_a: 0.011,
        loss_b: 0.005,
        loss_c: 0.015,
        dc_slack,
        v_dc_set: 1.0,
        p_dc_set,
    };
    PowerSystem {
        name: "case5-acdc".into(),
        base_mva: 100.0,
        ac_buses: vec![
            ac_bus(1, BusKind::Slack, 0.0, 0.0),
            ac_bus(2, BusKind::Pv, 0.20, 0.10),
            ac_bus(3, BusKind::Pq, 0.45, 0.15),
            ac_bus(4, BusKind::Pq, 0.40, 0.05),
            ac_bus(5, BusKind::Pq, 0.60, 0.10),
        ],
        ac_branches: vec![
            branch(1, 1, 2, 0.02, 0.06),
            branch(2, 1, 3, 0.08, 0.24),
            branch(3, 2, 3, 0.06, 0.18),
            branch(4, 2, 4, 0.06, 0.18),
            branch(5, 2, 5, 0.04, 0.12),
            branch(6, 3, 4, 0.01, 0.03),
            branch(7, 4, 5, 0.08, 0.24),
        ],
        dc_buses: vec![dc_bus(1), dc_bus(2), dc_bus(3)],
        dc_branches: vec![dc_branch(1, 1, 2), dc_branch(2, 2, 3), dc_branch(3, 1, 3)],
        converters: vec![
            converter(1, 1, 1, true, 0.0),
            converter(2, 3, 2, false, -0.3),
            converter(3, 5, 3, false, -0.3),
        ],
        generators: vec![
            Generator {
                id: 1,
                bus: 1,
                p_min: 0.0,
                p_max: 2.5,
                q_min: -3.0,
                q_max: 3.0,
                v_set: 1.06,
                p_set: 0.0,
                cost: Cost {
                    c0: 0.0,
                    c1: 1500.0,
                    c2: 800.0,
                },
            },
            Generator {
                id: 2,
                bus: 2,
                p_min: 0.1,
                p_max: 1.5,
                q_min: -3.0,
                q_max: 3.0,
                v_set: 1.0,
                p_set: 0.4,
                cost: Cost {
                    c0: 0.0,
                    c1: 2000.0,
                    c2: 1000.0,
                },
            },
        ],
        res_units: vec![ResUnit {
            id: 1,
            bus: 2,
            capacity: 0.4,
            factor: 0.5,
        }],
        scenario_map: vec![
            ScenarioTarget::LoadFactor { buses: vec![2] },
            ScenarioTarget::LoadFactor { buses: vec![3] },
            ScenarioTarget::LoadFactor { buses: vec![4, 5] },
            ScenarioTarget::ResFactor { unit: 1 },
        ],
    }
}
