//! Continuous allocation for a fixed status plan: electrolyzer powers,
//! battery charge/discharge, SOC path, and curtailment.
//!
//! With statuses fixed the remaining problem is linear except for the
//! charge/discharge exclusivity, which the relaxation can abuse to burn
//! surplus (charging and discharging simultaneously wastes energy through
//! the round-trip loss and dodges the curtailment penalty). A small
//! branch over per-period battery directions restores exactness.

use crate::lp::{self, LinearProgram, LpStatus, RowKind};
use crate::plant::AeStatus;

use super::{ScheduleProblem, ScheduleSolution};

/// Transition flags and their fixed cost for a status plan.
pub(crate) struct Flags {
    pub up_hot: Vec<Vec<bool>>,
    pub up_cold: Vec<Vec<bool>>,
    pub down: Vec<Vec<bool>>,
    pub cost: f64,
}

pub(crate) fn derive_flags(problem: &ScheduleProblem, statuses: &[Vec<AeStatus>]) -> Flags {
    let n = problem.aes.len();
    let periods = problem.periods;
    let mut up_hot = vec![vec![false; periods]; n];
    let mut up_cold = vec![vec![false; periods]; n];
    let mut down = vec![vec![false; periods]; n];
    let mut cost = 0.0;
    for i in 0..n {
        let mut prev = problem.aes[i].init_status;
        for t in 0..periods {
            let cur = statuses[i][t];
            match (prev, cur) {
                (AeStatus::Standby, AeStatus::Started) => {
                    up_hot[i][t] = true;
                    cost += problem.prices.ae_up_hot;
                }
                (AeStatus::Shutdown, AeStatus::Started) => {
                    up_cold[i][t] = true;
                    cost += problem.prices.ae_up_cold;
                }
                (AeStatus::Started, AeStatus::Shutdown) => {
                    down[i][t] = true;
                    cost += problem.prices.ae_down;
                }
                _ => {}
            }
            prev = cur;
        }
    }
    Flags {
        up_hot,
        up_cold,
        down,
        cost,
    }
}

/// Whether a status plan satisfies the combinatorial scheduling rules:
/// forced initial downtime, the minimum-downtime windows that fit inside
/// the horizon, and the shutdown -> standby ban.
pub(crate) fn is_legal(problem: &ScheduleProblem, statuses: &[Vec<AeStatus>]) -> bool {
    let periods = problem.periods;
    for (i, ae) in problem.aes.iter().enumerate() {
        for t in 0..ae.init_down_remaining.min(periods) {
            if statuses[i][t] != AeStatus::Shutdown {
                return false;
            }
        }
        let mut prev = ae.init_status;
        for t in 0..periods {
            let cur = statuses[i][t];
            if prev == AeStatus::Shutdown && cur == AeStatus::Standby {
                return false;
            }
            let d = ae.min_down_periods;
            if prev == AeStatus::Started && cur == AeStatus::Shutdown && d > 0 && t + d <= periods
            {
                if (t..t + d).any(|h| statuses[i][h] != AeStatus::Shutdown) {
                    return false;
                }
            }
            prev = cur;
        }
    }
    true
}

/// Exact continuous optimum for a fixed status plan, or `None` when no
/// feasible allocation exists (for example started units whose minimum
/// load exceeds what renewables plus the battery can supply).
pub(crate) fn solve_fixed_status(
    problem: &ScheduleProblem,
    statuses: &[Vec<AeStatus>],
    direction_node_limit: usize,
) -> Option<ScheduleSolution> {
    let flags = derive_flags(problem, statuses);
    let lp = FixedLp::build(problem, statuses);

    // Branch over battery directions when the relaxation charges and
    // discharges in the same period. `fixed[t]`: None free, Some(true)
    // charge-only, Some(false) discharge-only.
    let periods = problem.periods;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stack: Vec<Vec<Option<bool>>> = vec![vec![None; periods]];
    let mut nodes = 0usize;

    while let Some(fixed) = stack.pop() {
        nodes += 1;
        if nodes > direction_node_limit {
            break;
        }
        let Some((obj, x)) = lp.solve(&fixed) else {
            continue;
        };
        if let Some((best_obj, _)) = &best {
            if obj >= *best_obj - 1e-12 {
                continue;
            }
        }
        match lp.first_violation(&x) {
            None => best = Some((obj, x)),
            Some(t) => {
                let mut a = fixed.clone();
                a[t] = Some(true);
                let mut b = fixed;
                b[t] = Some(false);
                // LIFO: explore charge-only first.
                stack.push(b);
                stack.push(a);
            }
        }
    }

    // Node cap exhausted without an incumbent: force directions from the
    // root relaxation (keep the larger side per period) and accept the
    // resulting feasible allocation if one exists.
    if best.is_none() {
        let root = lp.solve(&vec![None; periods])?;
        let mut fixed = vec![None; periods];
        for t in 0..periods {
            let chg = root.1[lp.chg(t)];
            let dis = root.1[lp.dis(t)];
            if chg > 1e-9 && dis > 1e-9 {
                fixed[t] = Some(chg >= dis);
            }
        }
        best = lp.solve(&fixed);
        if let Some((_, x)) = &best {
            if lp.first_violation(x).is_some() {
                return None;
            }
        }
    }

    let (cont_obj, x) = best?;
    Some(lp.extract(problem, statuses, flags, cont_obj, &x))
}

/// The fixed-status LP: variables are started-unit powers, battery charge
/// and discharge, and one aggregate curtailment per period; SOC is kept as
/// explicit variables tied by recursion rows.
pub(crate) struct FixedLp {
    lp: LinearProgram,
    periods: usize,
    /// (ae index, var index) pairs per period for started units.
    started: Vec<Vec<(usize, usize)>>,
    chg0: usize,
    dis0: usize,
    cut0: usize,
    soc0_var: usize,
    has_battery: bool,
}

impl FixedLp {
    pub(crate) fn chg(&self, t: usize) -> usize {
        self.chg0 + t
    }
    pub(crate) fn dis(&self, t: usize) -> usize {
        self.dis0 + t
    }
    fn cut(&self, t: usize) -> usize {
        self.cut0 + t
    }
    fn soc(&self, t: usize) -> usize {
        self.soc0_var + t
    }

    pub(crate) fn build(problem: &ScheduleProblem, statuses: &[Vec<AeStatus>]) -> FixedLp {
        let periods = problem.periods;
        let b = &problem.battery;
        let has_battery = b.capacity_mwh > 0.0;
        let dt_h = problem.dt_h();

        let mut started: Vec<Vec<(usize, usize)>> = vec![Vec::new(); periods];
        let mut next = 0usize;
        for t in 0..periods {
            for i in 0..problem.aes.len() {
                if statuses[i][t] == AeStatus::Started {
                    started[t].push((i, next));
                    next += 1;
                }
            }
        }
        let chg0 = next;
        let dis0 = chg0 + periods;
        let cut0 = dis0 + periods;
        let soc0_var = cut0 + periods;
        let num_vars = soc0_var + if has_battery { periods } else { 0 };

        let mut lp = LinearProgram::new(num_vars);

        for t in 0..periods {
            for &(i, v) in &started[t] {
                let ae = &problem.aes[i];
                lp.lower[v] = ae.min_load_mw();
                lp.upper[v] = ae.max_load_mw();
                // Revenue of a started MW through the fixed coefficient.
                lp.objective[v] = -problem.prices.h2_per_kg * 1000.0 / ae.k_h2_kwh_per_kg * dt_h;
            }
            lp.lower[chg0 + t] = 0.0;
            lp.upper[chg0 + t] = if has_battery { b.charge_max_mw } else { 0.0 };
            lp.lower[dis0 + t] = 0.0;
            lp.upper[dis0 + t] = if has_battery { b.discharge_max_mw } else { 0.0 };
            let renewable = problem.renewable_total(t);
            lp.lower[cut0 + t] = 0.0;
            lp.upper[cut0 + t] = renewable;
            lp.objective[cut0 + t] = problem.prices.curtail_per_mw;

            if has_battery {
                let s = soc0_var + t;
                lp.lower[s] = b.soc_min;
                lp.upper[s] = b.soc_max;
                if t == periods - 1 {
                    lp.lower[s] = lp.lower[s].max(b.soc0 - b.cycle_tolerance);
                    lp.upper[s] = lp.upper[s].min(b.soc0 + b.cycle_tolerance);
                }
            }

            // Power balance: sum(P_started) + standby draw + chg - dis + cut = renewable.
            let standby_draw: f64 = problem
                .aes
                .iter()
                .enumerate()
                .filter(|(i, _)| statuses[*i][t] == AeStatus::Standby)
                .map(|(_, ae)| ae.standby_power_mw)
                .sum();
            let mut coeffs: Vec<(usize, f64)> = started[t].iter().map(|&(_, v)| (v, 1.0)).collect();
            coeffs.push((chg0 + t, 1.0));
            coeffs.push((dis0 + t, -1.0));
            coeffs.push((cut0 + t, 1.0));
            lp.push_row(RowKind::Eq, renewable - standby_draw, coeffs);

            if has_battery {
                // soc_t - soc_{t-1} - eta*dt/cap * chg + dt/(eta*cap) * dis = 0
                let kc = b.efficiency * dt_h / b.capacity_mwh;
                let kd = dt_h / (b.efficiency * b.capacity_mwh);
                let mut coeffs = vec![(soc0_var + t, 1.0), (chg0 + t, -kc), (dis0 + t, kd)];
                let rhs = if t == 0 {
                    b.soc0
                } else {
                    coeffs.push((soc0_var + t - 1, -1.0));
                    0.0
                };
                lp.push_row(RowKind::Eq, rhs, coeffs);
            }
        }

        FixedLp {
            lp,
            periods,
            started,
            chg0,
            dis0,
            cut0,
            soc0_var,
            has_battery,
        }
    }

    /// Solve with optional per-period direction fixings.
    pub(crate) fn solve(&self, fixed: &[Option<bool>]) -> Option<(f64, Vec<f64>)> {
        let mut upper = self.lp.upper.clone();
        for (t, f) in fixed.iter().enumerate() {
            match f {
                Some(true) => upper[self.dis(t)] = 0.0,
                Some(false) => upper[self.chg(t)] = 0.0,
                None => {}
            }
        }
        let sol = lp::solve_with_bounds(&self.lp, &self.lp.lower, &upper);
        (sol.status == LpStatus::Optimal).then_some((sol.objective, sol.x))
    }

    /// First period that charges and discharges simultaneously.
    pub(crate) fn first_violation(&self, x: &[f64]) -> Option<usize> {
        (0..self.periods).find(|&t| x[self.chg(t)] > 1e-9 && x[self.dis(t)] > 1e-9)
    }

    fn extract(
        &self,
        problem: &ScheduleProblem,
        statuses: &[Vec<AeStatus>],
        flags: Flags,
        cont_obj: f64,
        x: &[f64],
    ) -> ScheduleSolution {
        let n = problem.aes.len();
        let periods = self.periods;
        let b = &problem.battery;
        let dt_h = problem.dt_h();

        let mut ae_power = vec![vec![0.0; periods]; n];
        let mut h2_rate = vec![vec![0.0; periods]; n];
        for t in 0..periods {
            for (i, ae) in problem.aes.iter().enumerate() {
                match statuses[i][t] {
                    AeStatus::Standby => ae_power[i][t] = ae.standby_power_mw,
                    AeStatus::Shutdown => ae_power[i][t] = 0.0,
                    AeStatus::Started => {}
                }
            }
            for &(i, v) in &self.started[t] {
                let ae = &problem.aes[i];
                ae_power[i][t] = x[v];
                h2_rate[i][t] = 1000.0 * x[v] / ae.k_h2_kwh_per_kg;
            }
        }

        let mut charge = vec![0.0; periods];
        let mut discharge = vec![0.0; periods];
        let mut soc = vec![b.soc0; periods];
        let mut soc_prev = b.soc0;
        for t in 0..periods {
            charge[t] = x[self.chg(t)];
            discharge[t] = x[self.dis(t)];
            if self.has_battery {
                soc_prev += (b.efficiency * charge[t] - discharge[t] / b.efficiency) * dt_h
                    / b.capacity_mwh;
            }
            soc[t] = soc_prev;
        }

        // Split the aggregate curtailment across sources in proportion to
        // their forecasts so the per-unit bounds hold by construction.
        let m_wt = problem.wt_forecast.len();
        let mut wt_curtail = vec![vec![0.0; periods]; m_wt];
        let mut pv_curtail = vec![0.0; periods];
        for t in 0..periods {
            let total = x[self.cut(t)];
            let renewable = problem.renewable_total(t);
            if total > 0.0 && renewable > 0.0 {
                let frac = total / renewable;
                for (l, w) in problem.wt_forecast.iter().enumerate() {
                    wt_curtail[l][t] = frac * w[t];
                }
                pv_curtail[t] = frac * problem.pv_forecast[t];
            }
        }

        ScheduleSolution {
            statuses: statuses.to_vec(),
            up_hot: flags.up_hot,
            up_cold: flags.up_cold,
            down: flags.down,
            ae_power_mw: ae_power,
            h2_rate_kg_h: h2_rate,
            charge_mw: charge,
            discharge_mw: discharge,
            soc,
            wt_curtail_mw: wt_curtail,
            pv_curtail_mw: pv_curtail,
            objective: flags.cost + cont_obj,
            gap: None,
        }
    }
}
