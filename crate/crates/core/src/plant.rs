//! Device-level models: alkaline electrolyzer state machine with ramp limits
//! and an efficiency curve, battery SOC dynamics, and the algebraic droop
//! proxy for frequency and voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{PvParams, WtParams};
use crate::slf::SlfParams;

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: AeStatus, to: AeStatus },
    #[error("minimum downtime violated: {elapsed_s:.0} s elapsed of {required_s:.0} s")]
    MinDownViolation { elapsed_s: f64, required_s: f64 },
}

/// Electrolyzer operating status. Standby keeps auxiliaries powered but
/// stops hydrogen production; shutdown consumes nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeStatus {
    Started,
    Standby,
    Shutdown,
}

/// Commanded status change applied at the start of an [`ae_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeCommand {
    Start,
    Standby,
    Stop,
}

/// Status transition realized by a step. Starts from standby are hot,
/// starts from shutdown are cold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeTransition {
    HotStart,
    ColdStart,
    Shutdown,
    EnterStandby,
}

/// Specific energy consumption of an electrolyzer.
///
/// Either a fixed coefficient in kWh/kg, or a piecewise-linear map from
/// load fraction to specific consumption. Breakpoints must be strictly
/// increasing in load fraction; evaluation clamps outside the covered range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EfficiencyCurve {
    Fixed { kwh_per_kg: f64 },
    Piecewise { points: Vec<(f64, f64)> },
}

impl EfficiencyCurve {
    /// Specific consumption in kWh/kg at a load fraction of rating.
    pub fn specific_consumption(&self, load_fraction: f64) -> f64 {
        match self {
            EfficiencyCurve::Fixed { kwh_per_kg } => *kwh_per_kg,
            EfficiencyCurve::Piecewise { points } => {
                debug_assert!(points.len() >= 2);
                let x = load_fraction;
                if x <= points[0].0 {
                    return points[0].1;
                }
                for pair in points.windows(2) {
                    let (x0, y0) = pair[0];
                    let (x1, y1) = pair[1];
                    if x <= x1 {
                        return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            EfficiencyCurve::Fixed { kwh_per_kg } => {
                if *kwh_per_kg <= 0.0 {
                    return Err("specific consumption must be positive".into());
                }
            }
            EfficiencyCurve::Piecewise { points } => {
                if points.len() < 2 {
                    return Err("piecewise curve needs at least two points".into());
                }
                for pair in points.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err("breakpoints must be strictly increasing".into());
                    }
                }
                if points.iter().any(|&(_, y)| y <= 0.0) {
                    return Err("specific consumption must be positive".into());
                }
            }
        }
        Ok(())
    }
}

/// Static electrolyzer parameters.
///
/// `k_h2_kwh_per_kg` is the fixed coefficient the scheduler uses; `curve` is
/// the physical conversion applied in simulation and costing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeParams {
    pub capacity_mw: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub standby_power_mw: f64,
    pub ramp_mw_per_s: f64,
    pub min_down_s: f64,
    pub k_h2_kwh_per_kg: f64,
    pub curve: EfficiencyCurve,
}

impl AeParams {
    pub fn min_load_mw(&self) -> f64 {
        self.r_min * self.capacity_mw
    }

    pub fn max_load_mw(&self) -> f64 {
        self.r_max * self.capacity_mw
    }
}

/// Live electrolyzer state.
#[derive(Debug, Clone)]
pub struct AeUnit {
    pub params: AeParams,
    pub status: AeStatus,
    pub power_mw: f64,
    pub downtime_s: f64,
}

impl AeUnit {
    pub fn new(params: AeParams, status: AeStatus) -> Self {
        let power_mw = match status {
            AeStatus::Started => params.min_load_mw(),
            AeStatus::Standby => params.standby_power_mw,
            AeStatus::Shutdown => 0.0,
        };
        // A unit created shut down is treated as cold and startable.
        let downtime_s = if status == AeStatus::Shutdown {
            params.min_down_s
        } else {
            0.0
        };
        Self {
            params,
            status,
            power_mw,
            downtime_s,
        }
    }

    pub fn hydrogen_rate_kg_h(&self) -> f64 {
        ae_hydrogen_rate(
            self.power_mw,
            self.status,
            &self.params.curve,
            self.params.capacity_mw,
        )
    }
}

/// Hydrogen production rate in kg/h. Only a started unit produces;
/// standby and shutdown return zero.
pub fn ae_hydrogen_rate(
    power_mw: f64,
    status: AeStatus,
    curve: &EfficiencyCurve,
    capacity_mw: f64,
) -> f64 {
    match status {
        AeStatus::Started => {
            if power_mw <= 0.0 {
                0.0
            } else {
                let sc = curve.specific_consumption(power_mw / capacity_mw);
                1000.0 * power_mw / sc
            }
        }
        AeStatus::Standby | AeStatus::Shutdown => 0.0,
    }
}

/// Outcome of one electrolyzer step.
#[derive(Debug, Clone)]
pub struct AeStepOutcome {
    pub unit: AeUnit,
    pub achieved_mw: f64,
    pub h2_kg: f64,
    pub transition: Option<AeTransition>,
}

/// Advance an electrolyzer by `dt` seconds.
///
/// Any status command is applied first; a start from shutdown is refused
/// until the minimum downtime has elapsed, and shutdown -> standby is
/// illegal. Power then moves from the current value toward `power_ref` at
/// the ramp limit. For a started unit the tracking target is clamped to
/// `[r_min*S, r_max*S]`; the ramp-in after a start passes below the band
/// without jumping. A stop drops power to zero within the step (breaker
/// semantics, not a ramp). Hydrogen integrates trapezoidally over the step.
pub fn ae_step(
    unit: &AeUnit,
    power_ref_mw: f64,
    command: Option<AeCommand>,
    dt_s: f64,
) -> Result<AeStepOutcome, PlantError> {
    debug_assert!(dt_s > 0.0);
    let mut next = unit.clone();
    let mut transition = None;

    if let Some(cmd) = command {
        match (unit.status, cmd) {
            (AeStatus::Started, AeCommand::Start)
            | (AeStatus::Standby, AeCommand::Standby)
            | (AeStatus::Shutdown, AeCommand::Stop) => {}
            (AeStatus::Standby, AeCommand::Start) => {
                next.status = AeStatus::Started;
                transition = Some(AeTransition::HotStart);
            }
            (AeStatus::Shutdown, AeCommand::Start) => {
                if unit.downtime_s + 1e-9 < unit.params.min_down_s {
                    return Err(PlantError::MinDownViolation {
                        elapsed_s: unit.downtime_s,
                        required_s: unit.params.min_down_s,
                    });
                }
                next.status = AeStatus::Started;
                transition = Some(AeTransition::ColdStart);
            }
            (AeStatus::Started, AeCommand::Standby) => {
                next.status = AeStatus::Standby;
                transition = Some(AeTransition::EnterStandby);
            }
            (AeStatus::Started, AeCommand::Stop) | (AeStatus::Standby, AeCommand::Stop) => {
                next.status = AeStatus::Shutdown;
                transition = Some(AeTransition::Shutdown);
            }
            (AeStatus::Shutdown, AeCommand::Standby) => {
                return Err(PlantError::IllegalTransition {
                    from: AeStatus::Shutdown,
                    to: AeStatus::Standby,
                });
            }
        }
    }

    let p = &next.params;
    let start_power = next.power_mw;
    let rate_before = ae_hydrogen_rate(start_power, next.status, &p.curve, p.capacity_mw);

    let achieved = match next.status {
        AeStatus::Shutdown => 0.0,
        AeStatus::Standby => {
            let target = p.standby_power_mw;
            move_toward(start_power, target, p.ramp_mw_per_s * dt_s)
        }
        AeStatus::Started => {
            let target = power_ref_mw.clamp(p.min_load_mw(), p.max_load_mw());
            move_toward(start_power, target, p.ramp_mw_per_s * dt_s)
        }
    };
    next.power_mw = achieved;

    next.downtime_s = if next.status == AeStatus::Shutdown {
        unit.downtime_s + dt_s
    } else {
        0.0
    };

    let rate_after = ae_hydrogen_rate(achieved, next.status, &p.curve, p.capacity_mw);
    let h2_kg = 0.5 * (rate_before + rate_after) * dt_s / 3600.0;

    Ok(AeStepOutcome {
        unit: next,
        achieved_mw: achieved,
        h2_kg,
        transition,
    })
}

fn move_toward(from: f64, to: f64, max_delta: f64) -> f64 {
    if (to - from).abs() <= max_delta {
        to
    } else if to > from {
        from + max_delta
    } else {
        from - max_delta
    }
}

/// Grid-forming battery parameters.
///
/// Droop gains are absolute: Hz per MW and kV per MVAr. [`BatterySpec::with_default_droop`]
/// calibrates them so rated output moves frequency by 0.25 Hz and voltage
/// by 1.0 kV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatterySpec {
    pub capacity_mwh: f64,
    pub c_rate: f64,
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub droop_gain_f_hz_per_mw: f64,
    pub droop_gain_v_kv_per_mvar: f64,
    pub nominal_f_hz: f64,
    pub nominal_v_kv: f64,
}

impl BatterySpec {
    /// Maximum charge/discharge power, MW.
    pub fn p_max_mw(&self) -> f64 {
        self.c_rate * self.capacity_mwh
    }

    /// Rescale the droop gains for a rated deviation of 0.25 Hz / 1.0 kV.
    pub fn with_default_droop(mut self) -> Self {
        let p_max = self.p_max_mw();
        if p_max > 0.0 {
            self.droop_gain_f_hz_per_mw = 0.25 / p_max;
            self.droop_gain_v_kv_per_mvar = 1.0 / p_max;
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.capacity_mwh < 0.0 {
            return Err("battery capacity must be non-negative".into());
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err("battery efficiency must be in (0, 1]".into());
        }
        if !(0.0 < self.soc_min && self.soc_min < self.soc_max && self.soc_max < 1.0) {
            return Err("require 0 < soc_min < soc_max < 1".into());
        }
        Ok(())
    }
}

/// Live battery state. Power is signed with discharge positive.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryState {
    pub soc: f64,
    pub power_mw: f64,
    pub reactive_mvar: f64,
    pub cumulative_throughput_mwh: f64,
}

impl BatteryState {
    pub fn at_soc(soc: f64) -> Self {
        Self {
            soc,
            power_mw: 0.0,
            reactive_mvar: 0.0,
            cumulative_throughput_mwh: 0.0,
        }
    }
}

/// Outcome of one battery step. `achieved_mw` is signed with discharge
/// positive; `clipped` is set whenever the request could not be met.
#[derive(Debug, Clone)]
pub struct BatteryStepOutcome {
    pub state: BatteryState,
    pub achieved_mw: f64,
    pub clipped: bool,
}

/// Advance the battery by `dt` seconds against a signed power request
/// (discharge positive). Power is clipped to the rate limit and to whatever
/// keeps SOC within `[soc_min, soc_max]`; clipping is the contract, not an
/// error.
pub fn battery_step(
    spec: &BatterySpec,
    state: &BatteryState,
    request_mw: f64,
    dt_s: f64,
) -> BatteryStepOutcome {
    debug_assert!(dt_s > 0.0);
    let dt_h = dt_s / 3600.0;
    let p_max = spec.p_max_mw();
    let eta = spec.efficiency;

    let achieved = if request_mw >= 0.0 {
        // discharge: dSOC = -P * dt_h / (eta * cap)
        let headroom_mw = if spec.capacity_mwh > 0.0 {
            (state.soc - spec.soc_min).max(0.0) * spec.capacity_mwh * eta / dt_h
        } else {
            0.0
        };
        request_mw.min(p_max).min(headroom_mw)
    } else {
        // charge: dSOC = eta * P * dt_h / cap
        let headroom_mw = if spec.capacity_mwh > 0.0 {
            (spec.soc_max - state.soc).max(0.0) * spec.capacity_mwh / (eta * dt_h)
        } else {
            0.0
        };
        -((-request_mw).min(p_max).min(headroom_mw))
    };

    let d_soc = if spec.capacity_mwh > 0.0 {
        if achieved >= 0.0 {
            -achieved * dt_h / (eta * spec.capacity_mwh)
        } else {
            -achieved * eta * dt_h / spec.capacity_mwh
        }
    } else {
        0.0
    };

    let clipped = (achieved - request_mw).abs() > 1e-9;
    let state = BatteryState {
        soc: (state.soc + d_soc).clamp(0.0, 1.0),
        power_mw: achieved,
        reactive_mvar: state.reactive_mvar,
        cumulative_throughput_mwh: state.cumulative_throughput_mwh + achieved.abs() * dt_h,
    };
    BatteryStepOutcome {
        state,
        achieved_mw: achieved,
        clipped,
    }
}

/// Algebraic P-f / Q-V droop map. Discharge-positive active power lowers
/// frequency below nominal; positive reactive injection lowers voltage.
pub fn droop_point(spec: &BatterySpec, p_mw: f64, q_mvar: f64) -> (f64, f64) {
    (
        spec.nominal_f_hz - spec.droop_gain_f_hz_per_mw * p_mw,
        spec.nominal_v_kv - spec.droop_gain_v_kv_per_mvar * q_mvar,
    )
}

/// Scheduling prices used by the rolling optimizer, CYN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prices {
    /// Hydrogen selling price, CYN/kg.
    pub h2_per_kg: f64,
    /// Hot start-up cost, CYN per action.
    pub ae_up_hot: f64,
    /// Cold start-up cost, CYN per action.
    pub ae_up_cold: f64,
    /// Shut-down cost, CYN per action.
    pub ae_down: f64,
    /// Curtailment penalty, CYN per MW per period.
    pub curtail_per_mw: f64,
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            h2_per_kg: 30.0,
            ae_up_hot: 2.0,
            ae_up_cold: 10.0,
            ae_down: 5.0,
            curtail_per_mw: 1000.0,
        }
    }
}

/// Full plant description: renewable fleet, electrolyzers, battery,
/// controller gains, and operating prices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    pub wts: Vec<WtParams>,
    pub pv: PvParams,
    pub aes: Vec<AeParams>,
    pub battery: BatterySpec,
    /// Fixed power factor of the electrolyzer rectifiers (lagging).
    pub ae_power_factor: f64,
    pub slf: SlfParams,
    pub prices: Prices,
}

impl PlantConfig {
    pub fn total_source_capacity_mw(&self) -> f64 {
        self.wts.iter().map(|w| w.rating_mw).sum::<f64>() + self.pv.rating_mw
    }

    /// Reactive draw of the electrolyzer fleet at a given total load, MVAr.
    pub fn ae_reactive_mvar(&self, total_ae_mw: f64) -> f64 {
        let pf = self.ae_power_factor.clamp(0.01, 1.0);
        total_ae_mw * (1.0 / (pf * pf) - 1.0).sqrt()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.wts.is_empty() && self.pv.rating_mw <= 0.0 {
            return Err("plant has no renewable sources".into());
        }
        for (l, wt) in self.wts.iter().enumerate() {
            if !(wt.cut_in_ms < wt.rated_speed_ms && wt.rated_speed_ms < wt.cut_out_ms) {
                return Err(format!("wt {l}: require cut_in < rated_speed < cut_out"));
            }
            if wt.rating_mw <= 0.0 {
                return Err(format!("wt {l}: rating must be positive"));
            }
        }
        if self.aes.is_empty() {
            return Err("plant has no electrolyzers".into());
        }
        for (i, ae) in self.aes.iter().enumerate() {
            if ae.capacity_mw <= 0.0 {
                return Err(format!("ae {i}: capacity must be positive"));
            }
            if !(0.0 < ae.r_min && ae.r_min < ae.r_max) {
                return Err(format!("ae {i}: require 0 < r_min < r_max"));
            }
            if ae.standby_power_mw < 0.0 || ae.standby_power_mw > ae.min_load_mw() {
                return Err(format!("ae {i}: standby power must lie in [0, r_min*S]"));
            }
            if ae.ramp_mw_per_s <= 0.0 {
                return Err(format!("ae {i}: ramp rate must be positive"));
            }
            if ae.k_h2_kwh_per_kg <= 0.0 {
                return Err(format!("ae {i}: k_h2 must be positive"));
            }
            ae.curve.validate().map_err(|e| format!("ae {i}: {e}"))?;
        }
        self.battery.validate()?;
        if !(self.ae_power_factor > 0.0 && self.ae_power_factor <= 1.0) {
            return Err("ae power factor must be in (0, 1]".into());
        }
        self.slf.validate()?;
        Ok(())
    }
}
