//! Rolling optimal scheduling of electrolyzers.
//!
//! Builds the mixed-integer scheduling problem for the next horizon —
//! hydrogen revenue against start/stop costs and curtailment penalties,
//! subject to electrolyzer status logic, minimum downtime, battery SOC
//! dynamics with cycle equilibrium, and per-period power balance — and
//! solves it with a bundled exact branch-and-bound, an enumeration oracle,
//! or a warm-started candidate search for production-scale rolling use.

mod branch;
mod continuous;
mod enumerate;
mod heuristic;
mod lpfile;
mod milp;

pub use enumerate::enumerate_solve;
pub use lpfile::{read_solution_values, write_lp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PowerSeries;
use crate::plant::{AeStatus, PlantConfig, Prices};

#[derive(Debug, Error)]
pub enum RoseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("schedule infeasible: {hint}")]
    Infeasible { hint: String },
    #[error("solver gave up: {0}")]
    Timeout(String),
    #[error("instance too large to enumerate: {combinations:.3e} status combinations")]
    TooLarge { combinations: f64 },
    #[error("solution import: {0}")]
    BadSolutionFile(String),
}

/// Per-electrolyzer scheduling data, in period units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeScheduleParams {
    pub capacity_mw: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub standby_power_mw: f64,
    pub k_h2_kwh_per_kg: f64,
    /// Minimum downtime after a shutdown action, in scheduling periods.
    pub min_down_periods: usize,
    pub init_status: AeStatus,
    /// Periods the unit must still stay shut down at the window start.
    pub init_down_remaining: usize,
}

impl AeScheduleParams {
    pub fn min_load_mw(&self) -> f64 {
        self.r_min * self.capacity_mw
    }

    pub fn max_load_mw(&self) -> f64 {
        self.r_max * self.capacity_mw
    }

    /// Maximum hydrogen rate, kg/h.
    pub fn q_max_kg_h(&self) -> f64 {
        1000.0 * self.max_load_mw() / self.k_h2_kwh_per_kg
    }
}

/// Battery data as seen by the scheduler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryScheduleParams {
    pub capacity_mwh: f64,
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub charge_max_mw: f64,
    pub discharge_max_mw: f64,
    pub soc0: f64,
    /// Cycle equilibrium band on |SOC_T - SOC_0|.
    pub cycle_tolerance: f64,
}

/// Initial electrolyzer state handed to [`build_schedule_problem`].
#[derive(Debug, Clone, Copy)]
pub struct AeInitState {
    pub status: AeStatus,
    pub downtime_s: f64,
}

/// One rolling-horizon scheduling instance.
#[derive(Debug, Clone)]
pub struct ScheduleProblem {
    pub periods: usize,
    pub dt_s: f64,
    /// Forecast per turbine per period, MW.
    pub wt_forecast: Vec<Vec<f64>>,
    pub pv_forecast: Vec<f64>,
    pub aes: Vec<AeScheduleParams>,
    pub battery: BatteryScheduleParams,
    pub prices: Prices,
}

impl ScheduleProblem {
    pub fn dt_h(&self) -> f64 {
        self.dt_s / 3600.0
    }

    pub fn renewable_total(&self, t: usize) -> f64 {
        self.wt_forecast.iter().map(|w| w[t]).sum::<f64>() + self.pv_forecast[t]
    }

    /// Number of binary decision variables in the registry.
    pub fn num_binaries(&self) -> usize {
        milp::Layout::new(self).num_binaries()
    }
}

/// Schedule for the horizon: statuses, transition flags, baseline powers,
/// hydrogen rates, battery plan, SOC path, and curtailment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSolution {
    pub statuses: Vec<Vec<AeStatus>>, // [ae][t]
    pub up_hot: Vec<Vec<bool>>,
    pub up_cold: Vec<Vec<bool>>,
    pub down: Vec<Vec<bool>>,
    pub ae_power_mw: Vec<Vec<f64>>,
    pub h2_rate_kg_h: Vec<Vec<f64>>,
    pub charge_mw: Vec<f64>,
    pub discharge_mw: Vec<f64>,
    /// SOC after each period.
    pub soc: Vec<f64>,
    pub wt_curtail_mw: Vec<Vec<f64>>, // [wt][t]
    pub pv_curtail_mw: Vec<f64>,
    pub objective: f64,
    /// `None` when proven optimal; otherwise an upper bound on the distance
    /// to the optimum.
    pub gap: Option<f64>,
}

impl ScheduleSolution {
    pub fn transition_count(&self) -> usize {
        let count = |m: &Vec<Vec<bool>>| m.iter().flatten().filter(|&&b| b).count();
        count(&self.up_hot) + count(&self.up_cold) + count(&self.down)
    }

    /// Deterministic preference key among equal-objective schedules: fewer
    /// transitions first, then started units packed onto low indices.
    pub(crate) fn tie_rank(&self) -> (usize, Vec<u8>) {
        let periods = self.statuses.first().map_or(0, |s| s.len());
        let mut lex = Vec::with_capacity(periods * self.statuses.len());
        for t in 0..periods {
            for ae in &self.statuses {
                lex.push(match ae[t] {
                    AeStatus::Started => 0u8,
                    AeStatus::Standby => 1,
                    AeStatus::Shutdown => 2,
                });
            }
        }
        (self.transition_count(), lex)
    }

    pub fn total_curtail_mw(&self, t: usize) -> f64 {
        self.wt_curtail_mw.iter().map(|w| w[t]).sum::<f64>() + self.pv_curtail_mw[t]
    }
}

/// Solver selection for [`solve_schedule`].
#[derive(Debug, Clone)]
pub enum SolveMode {
    /// Branch-and-bound to proven optimality (optionally node-capped).
    Exact { node_limit: Option<usize> },
    /// Exact when the binary count is at most `exact_binary_limit`,
    /// otherwise the warm-started candidate search with a reported gap.
    Auto {
        exact_binary_limit: usize,
        node_limit: usize,
    },
    /// Candidate search only.
    Heuristic,
}

impl Default for SolveMode {
    fn default() -> Self {
        SolveMode::Auto {
            exact_binary_limit: 64,
            node_limit: 20_000,
        }
    }
}

/// Solve options: the mode plus an optional warm-start status plan
/// (typically the previous rolling solution shifted by one period).
#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub mode: SolveMode,
    pub warm_start: Option<Vec<Vec<AeStatus>>>,
}

/// Build the scheduling problem from a forecast window and the plant
/// description. The forecast's step is the scheduling step and its length
/// the horizon.
pub fn build_schedule_problem(
    forecast: &PowerSeries,
    plant: &PlantConfig,
    soc0: f64,
    init_states: &[AeInitState],
) -> Result<ScheduleProblem, RoseError> {
    if forecast.is_empty() {
        return Err(RoseError::DimensionMismatch(
            "empty forecast horizon".into(),
        ));
    }
    if forecast.per_wt.len() != plant.wts.len() {
        return Err(RoseError::DimensionMismatch(format!(
            "forecast has {} turbine columns, plant has {}",
            forecast.per_wt.len(),
            plant.wts.len()
        )));
    }
    if init_states.len() != plant.aes.len() {
        return Err(RoseError::DimensionMismatch(format!(
            "{} init states for {} electrolyzers",
            init_states.len(),
            plant.aes.len()
        )));
    }
    let periods = forecast.len();
    let dt_s = forecast.step as f64;

    let aes = plant
        .aes
        .iter()
        .zip(init_states)
        .map(|(ae, init)| {
            let min_down_periods = (ae.min_down_s / dt_s).ceil() as usize;
            let init_down_remaining = if init.status == AeStatus::Shutdown {
                let remaining_s = (ae.min_down_s - init.downtime_s).max(0.0);
                (remaining_s / dt_s).ceil() as usize
            } else {
                0
            };
            AeScheduleParams {
                capacity_mw: ae.capacity_mw,
                r_min: ae.r_min,
                r_max: ae.r_max,
                standby_power_mw: ae.standby_power_mw,
                k_h2_kwh_per_kg: ae.k_h2_kwh_per_kg,
                min_down_periods,
                init_status: init.status,
                init_down_remaining,
            }
        })
        .collect();

    let spec = &plant.battery;
    let battery = BatteryScheduleParams {
        capacity_mwh: spec.capacity_mwh,
        efficiency: spec.efficiency,
        soc_min: spec.soc_min,
        soc_max: spec.soc_max,
        charge_max_mw: spec.p_max_mw(),
        discharge_max_mw: spec.p_max_mw(),
        soc0,
        cycle_tolerance: 0.05,
    };

    Ok(ScheduleProblem {
        periods,
        dt_s,
        wt_forecast: forecast.per_wt.clone(),
        pv_forecast: forecast.pv.clone(),
        aes,
        battery,
        prices: plant.prices.clone(),
    })
}

/// Solve a scheduling instance. Returns a proven optimum, or a feasible
/// schedule with a reported optimality gap when the mode allows it.
pub fn solve_schedule(
    problem: &ScheduleProblem,
    options: &SolveOptions,
) -> Result<ScheduleSolution, RoseError> {
    preflight(problem)?;
    match &options.mode {
        SolveMode::Exact { node_limit } => {
            branch::solve(problem, *node_limit, options.warm_start.as_deref())
        }
        SolveMode::Auto {
            exact_binary_limit,
            node_limit,
        } => {
            if problem.num_binaries() <= *exact_binary_limit {
                branch::solve(problem, Some(*node_limit), options.warm_start.as_deref())
            } else {
                heuristic::solve(problem, options.warm_start.as_deref())
            }
        }
        SolveMode::Heuristic => heuristic::solve(problem, options.warm_start.as_deref()),
    }
}

fn preflight(problem: &ScheduleProblem) -> Result<(), RoseError> {
    if problem.periods == 0 {
        return Err(RoseError::DimensionMismatch("zero periods".into()));
    }
    for w in &problem.wt_forecast {
        if w.len() != problem.periods {
            return Err(RoseError::DimensionMismatch(
                "turbine forecast length != periods".into(),
            ));
        }
    }
    if problem.pv_forecast.len() != problem.periods {
        return Err(RoseError::DimensionMismatch(
            "pv forecast length != periods".into(),
        ));
    }
    let b = &problem.battery;
    if b.capacity_mwh > 0.0 && (b.soc0 < b.soc_min - 1e-9 || b.soc0 > b.soc_max + 1e-9) {
        return Err(RoseError::Infeasible {
            hint: format!(
                "initial SOC {:.4} outside [{:.2}, {:.2}]",
                b.soc0, b.soc_min, b.soc_max
            ),
        });
    }
    Ok(())
}

/// Per-constraint-family maximum residuals of a solution against a problem.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub entries: Vec<(String, f64)>,
}

impl ResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn pass(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.entries
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }
}

/// Check every scheduling constraint family against a candidate solution
/// and report the maximum residual per family.
pub fn validate_solution(problem: &ScheduleProblem, sol: &ScheduleSolution) -> ResidualReport {
    let n = problem.aes.len();
    let periods = problem.periods;
    let dt_h = problem.dt_h();
    let mut entries: Vec<(String, f64)> = Vec::new();
    let mut push_max = |name: &str, value: f64| match entries.iter_mut().find(|(k, _)| k == name) {
        Some(e) => e.1 = e.1.max(value),
        None => entries.push((name.to_string(), value)),
    };

    let stv = |s: AeStatus, wanted: AeStatus| if s == wanted { 1.0 } else { 0.0 };
    for i in 0..n {
        let ae = &problem.aes[i];
        for t in 0..periods {
            let st = stv(sol.statuses[i][t], AeStatus::Started);
            let sb = stv(sol.statuses[i][t], AeStatus::Standby);
            let sp = stv(sol.statuses[i][t], AeStatus::Shutdown);
            // Status exclusivity holds by type; residual kept for imported
            // solutions whose binaries may disagree.
            push_max("eq2_exclusivity", (st + sb + sp - 1.0).abs());

            let prev = if t == 0 {
                ae.init_status
            } else {
                sol.statuses[i][t - 1]
            };
            let p_st = stv(prev, AeStatus::Started);
            let p_sb = stv(prev, AeStatus::Standby);
            let p_sp = stv(prev, AeStatus::Shutdown);
            let dn = if sol.down[i][t] { 1.0 } else { 0.0 };
            let uh = if sol.up_hot[i][t] { 1.0 } else { 0.0 };
            let uc = if sol.up_cold[i][t] { 1.0 } else { 0.0 };
            push_max("eq3_down_flag", (dn - p_st * sp).abs());
            push_max("eq4_hot_start_flag", (uh - p_sb * st).abs());
            push_max("eq5_cold_start_flag", (uc - p_sp * st).abs());

            // Eq (8) load band, with the standby/shutdown levels folded in.
            let p = sol.ae_power_mw[i][t];
            let lo = sb * ae.standby_power_mw + st * ae.min_load_mw();
            let hi = st * ae.max_load_mw() + sb * ae.standby_power_mw;
            push_max("eq8_power_band", (lo - p).max(p - hi).max(0.0));

            // Eq (7) hydrogen linkage.
            let q = sol.h2_rate_kg_h[i][t];
            let residual = (1.0 - sb) * p - ae.k_h2_kwh_per_kg * q / 1000.0;
            push_max("eq7_hydrogen_link", residual.abs());
            push_max("eq7_hydrogen_nonneg", (-q).max(0.0));
        }

        // Eq (6) minimum downtime over full windows inside the horizon.
        let d = ae.min_down_periods;
        if d > 0 {
            for t in 0..periods.saturating_sub(d.saturating_sub(1)) {
                if sol.down[i][t] {
                    let run = (t..t + d)
                        .filter(|&h| sol.statuses[i][h] == AeStatus::Shutdown)
                        .count();
                    push_max("eq6_min_down", (d - run) as f64);
                }
            }
        }
        for t in 0..ae.init_down_remaining.min(periods) {
            let sp = stv(sol.statuses[i][t], AeStatus::Shutdown);
            push_max("init_down_forced", 1.0 - sp);
        }
    }

    let b = &problem.battery;
    let mut soc_prev = b.soc0;
    for t in 0..periods {
        let chg = sol.charge_mw[t];
        let dis = sol.discharge_mw[t];
        push_max("eq12_charge_limit", (chg - b.charge_max_mw).max(-chg).max(0.0));
        push_max(
            "eq13_discharge_limit",
            (dis - b.discharge_max_mw).max(-dis).max(0.0),
        );
        // Eq (14): no simultaneous charge and discharge.
        push_max("eq14_exclusive", if chg > 1e-9 && dis > 1e-9 { chg.min(dis) } else { 0.0 });

        if b.capacity_mwh > 0.0 {
            let soc_next =
                soc_prev + (b.efficiency * chg - dis / b.efficiency) * dt_h / b.capacity_mwh;
            push_max("eq9_soc_recursion", (sol.soc[t] - soc_next).abs());
            push_max(
                "eq11_soc_bounds",
                (b.soc_min - sol.soc[t]).max(sol.soc[t] - b.soc_max).max(0.0),
            );
            soc_prev = sol.soc[t];
        } else {
            push_max("eq12_charge_limit", chg.abs());
            push_max("eq13_discharge_limit", dis.abs());
        }

        // Eq (15) power balance.
        let gen: f64 = problem.renewable_total(t);
        let cut: f64 = sol.total_curtail_mw(t);
        let ae_total: f64 = (0..n).map(|i| sol.ae_power_mw[i][t]).sum();
        push_max(
            "eq15_power_balance",
            (gen - cut + dis - chg - ae_total).abs(),
        );

        for (l, w) in problem.wt_forecast.iter().enumerate() {
            let c = sol.wt_curtail_mw[l][t];
            push_max("eq16_wt_curtail", (c - w[t]).max(-c).max(0.0));
        }
        let cpv = sol.pv_curtail_mw[t];
        push_max("eq17_pv_curtail", (cpv - problem.pv_forecast[t]).max(-cpv).max(0.0));
    }

    if b.capacity_mwh > 0.0 && periods > 0 {
        let drift = (sol.soc[periods - 1] - b.soc0).abs();
        push_max("eq10_cycle_equilibrium", (drift - b.cycle_tolerance).max(0.0));
    }

    ResidualReport { entries }
}

/// Objective value of a solution under Eq-(1) pricing; used by tests and by
/// import paths that must re-derive the objective.
pub fn objective_of(problem: &ScheduleProblem, sol: &ScheduleSolution) -> f64 {
    let dt_h = problem.dt_h();
    let prices = &problem.prices;
    let mut obj = 0.0;
    for i in 0..problem.aes.len() {
        for t in 0..problem.periods {
            obj += -prices.h2_per_kg * sol.h2_rate_kg_h[i][t] * dt_h;
            if sol.up_hot[i][t] {
                obj += prices.ae_up_hot;
            }
            if sol.up_cold[i][t] {
                obj += prices.ae_up_cold;
            }
            if sol.down[i][t] {
                obj += prices.ae_down;
            }
        }
    }
    for t in 0..problem.periods {
        obj += prices.curtail_per_mw * sol.total_curtail_mw(t);
    }
    obj
}

#[cfg(test)]
mod tests;
