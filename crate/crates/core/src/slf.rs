//! Self-driven load following: seconds-scale renewable forecast by moving
//! average, PI-tracked load correction with linear rectification, and
//! adjustable-capacity allocation across the electrolyzer fleet.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{AeStatus, AeUnit};

#[derive(Debug, Error, PartialEq)]
pub enum SlfError {
    #[error("forecast warm-up: {have} of {need} observations")]
    WarmUp { have: usize, need: usize },
    #[error("no adjustable unit for a {direction} correction")]
    NoAdjustableUnit { direction: &'static str },
}

/// Load-following gains and steps.
///
/// `k_soc` and `beta_mw` are the coefficients of the linear rectification
/// stage applied after the PI tracker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlfParams {
    /// Moving-average blend weight in [0, 1].
    pub alpha: f64,
    /// Moving-average order.
    pub q_slf: usize,
    /// Controller step, seconds.
    pub dt_s: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub k_soc: f64,
    pub beta_mw: f64,
}

impl Default for SlfParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            q_slf: 4,
            dt_s: 5.0,
            k_p: 2.0,
            k_i: 4.0,
            k_soc: 0.0142,
            beta_mw: 0.0286,
        }
    }
}

impl SlfParams {
    /// Rectification slope at a given SOC. The printed control law is a
    /// constant affine map; an SOC-dependent slope plugs in here.
    pub fn k_soc_at(&self, _soc: f64) -> f64 {
        self.k_soc
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err("slf alpha must lie in [0, 1]".into());
        }
        if self.q_slf < 1 {
            return Err("slf moving-average order must be >= 1".into());
        }
        if self.dt_s <= 0.0 {
            return Err("slf step must be positive".into());
        }
        Ok(())
    }
}

/// Controller state owned by a single simulation run.
#[derive(Debug, Clone)]
pub struct SlfState {
    prev_forecast: Option<f64>,
    integral_mw_s: f64,
    history: VecDeque<f64>,
    /// Anti-windup bound on the integral contribution, MW. The owner keeps
    /// it at the fleet's total adjustable range.
    pub windup_limit_mw: f64,
}

impl SlfState {
    pub fn new() -> Self {
        Self {
            prev_forecast: None,
            integral_mw_s: 0.0,
            history: VecDeque::new(),
            windup_limit_mw: f64::INFINITY,
        }
    }

    /// Record an observed total renewable power sample, MW.
    pub fn observe(&mut self, total_renewable_mw: f64, params: &SlfParams) {
        self.history.push_back(total_renewable_mw);
        while self.history.len() > params.q_slf {
            self.history.pop_front();
        }
    }

    pub fn warmed_up(&self, params: &SlfParams) -> bool {
        self.history.len() >= params.q_slf
    }

    pub fn integral_mw_s(&self) -> f64 {
        self.integral_mw_s
    }

    pub fn reset_integral(&mut self) {
        self.integral_mw_s = 0.0;
    }
}

impl Default for SlfState {
    fn default() -> Self {
        Self::new()
    }
}

/// Fast renewable power forecast: blend of the previous forecast and the
/// moving average of the last `q_slf` observed totals.
pub fn fast_forecast(state: &mut SlfState, params: &SlfParams) -> Result<f64, SlfError> {
    if !state.warmed_up(params) {
        return Err(SlfError::WarmUp {
            have: state.history.len(),
            need: params.q_slf,
        });
    }
    let mean = state.history.iter().sum::<f64>() / state.history.len() as f64;
    let prev = state.prev_forecast.unwrap_or(mean);
    let forecast = params.alpha * prev + (1.0 - params.alpha) * mean;
    state.prev_forecast = Some(forecast);
    Ok(forecast)
}

/// Correction command from the tracking error, after PI control and linear
/// rectification. The integral accumulates the raw error with an
/// anti-windup clamp at the fleet's adjustable range.
pub fn rectified_correction(
    forecast_mw: f64,
    prev_ae_total_mw: f64,
    soc: f64,
    state: &mut SlfState,
    params: &SlfParams,
) -> f64 {
    let error = forecast_mw - prev_ae_total_mw;
    state.integral_mw_s += error * params.dt_s;

    let k_soc = params.k_soc_at(soc);
    let gain = k_soc * params.k_i;
    if gain.abs() > 0.0 && state.windup_limit_mw.is_finite() {
        let bound = (state.windup_limit_mw / gain).abs();
        state.integral_mw_s = state.integral_mw_s.clamp(-bound, bound);
    }

    k_soc * (params.k_p * error + params.k_i * state.integral_mw_s) + params.beta_mw
}

/// Split a total correction across started units by adjustable capacity:
/// headroom `(S_i - P_i)` for upward moves, current load `P_i` for
/// downward. Units not started receive zero.
pub fn allocate(correction_mw: f64, fleet: &[AeUnit]) -> Result<Vec<f64>, SlfError> {
    let mut shares = vec![0.0; fleet.len()];
    if correction_mw == 0.0 {
        return Ok(shares);
    }
    let upward = correction_mw > 0.0;
    let weight = |u: &AeUnit| -> f64 {
        if u.status != AeStatus::Started {
            return 0.0;
        }
        if upward {
            (u.params.capacity_mw - u.power_mw).max(0.0)
        } else {
            u.power_mw.max(0.0)
        }
    };
    let total: f64 = fleet.iter().map(weight).sum();
    if total <= 0.0 {
        return Err(SlfError::NoAdjustableUnit {
            direction: if upward { "upward" } else { "downward" },
        });
    }
    for (share, unit) in shares.iter_mut().zip(fleet) {
        *share = weight(unit) / total * correction_mw;
    }
    Ok(shares)
}

/// Per-unit composed reference and the total clamp residual, MW.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedReference {
    pub per_ae_mw: Vec<f64>,
    pub clamp_residual_mw: f64,
}

/// Sum baseline and correction per unit, clamped to the started load band.
/// Standby and shutdown units keep their state-determined power regardless
/// of correction; the clamped-away remainder is reported.
pub fn compose_reference(
    base_mw: &[f64],
    correction_mw: &[f64],
    fleet: &[AeUnit],
) -> ComposedReference {
    debug_assert_eq!(base_mw.len(), fleet.len());
    debug_assert_eq!(correction_mw.len(), fleet.len());
    let mut per_ae = Vec::with_capacity(fleet.len());
    let mut residual = 0.0;
    for ((&base, &corr), unit) in base_mw.iter().zip(correction_mw).zip(fleet) {
        let p = &unit.params;
        let reference = match unit.status {
            AeStatus::Started => {
                let raw = base + corr;
                let clamped = raw.clamp(p.min_load_mw(), p.max_load_mw());
                residual += raw - clamped;
                clamped
            }
            AeStatus::Standby => p.standby_power_mw,
            AeStatus::Shutdown => 0.0,
        };
        per_ae.push(reference);
    }
    ComposedReference {
        per_ae_mw: per_ae,
        clamp_residual_mw: residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{AeParams, EfficiencyCurve};

    fn params() -> SlfParams {
        SlfParams::default()
    }

    fn unit(power: f64, status: AeStatus) -> AeUnit {
        let mut u = AeUnit::new(
            AeParams {
                capacity_mw: 5.0,
                r_min: 0.10,
                r_max: 1.20,
                standby_power_mw: 0.25,
                ramp_mw_per_s: 0.05,
                min_down_s: 3600.0,
                k_h2_kwh_per_kg: 55.62,
                curve: EfficiencyCurve::Fixed { kwh_per_kg: 55.62 },
            },
            status,
        );
        if status == AeStatus::Started {
            u.power_mw = power;
        }
        u
    }

    #[test]
    fn forecast_warm_up_guard() {
        let mut state = SlfState::new();
        let p = params();
        state.observe(10.0, &p);
        assert_eq!(
            fast_forecast(&mut state, &p),
            Err(SlfError::WarmUp { have: 1, need: 4 })
        );
    }

    #[test]
    fn forecast_fixed_point() {
        let mut state = SlfState::new();
        let p = params();
        for _ in 0..4 {
            state.observe(10.0, &p);
        }
        let f1 = fast_forecast(&mut state, &p).unwrap();
        let f2 = fast_forecast(&mut state, &p).unwrap();
        assert_eq!(f1, 10.0);
        assert_eq!(f2, 10.0);
    }

    #[test]
    fn forecast_pure_moving_average() {
        let mut state = SlfState::new();
        let p = SlfParams {
            alpha: 0.0,
            ..params()
        };
        for v in [8.0, 10.0, 12.0, 14.0] {
            state.observe(v, &p);
        }
        assert_eq!(fast_forecast(&mut state, &p).unwrap(), 11.0);
    }

    #[test]
    fn forecast_alpha_one_holds_previous() {
        let mut state = SlfState::new();
        let p = SlfParams {
            alpha: 1.0,
            ..params()
        };
        for v in [8.0, 10.0, 12.0, 14.0] {
            state.observe(v, &p);
        }
        let first = fast_forecast(&mut state, &p).unwrap();
        state.observe(100.0, &p);
        let second = fast_forecast(&mut state, &p).unwrap();
        assert_eq!(first, 11.0); // seeded from the mean
        assert_eq!(second, first);
    }

    #[test]
    fn forecast_translation_equivariant() {
        let p = SlfParams {
            alpha: 0.3,
            ..params()
        };
        let samples = [8.0, 10.0, 12.0, 14.0];
        let c = 3.7;

        let mut a = SlfState::new();
        let mut b = SlfState::new();
        for &v in &samples {
            a.observe(v, &p);
            b.observe(v + c, &p);
        }
        let fa = fast_forecast(&mut a, &p).unwrap();
        let fb = fast_forecast(&mut b, &p).unwrap();
        assert!((fb - fa - c).abs() < 1e-12);
    }

    #[test]
    fn last_observation_when_alpha_zero_order_one() {
        let mut state = SlfState::new();
        let p = SlfParams {
            alpha: 0.0,
            q_slf: 1,
            ..params()
        };
        for v in [5.0, 9.0, 2.5] {
            state.observe(v, &p);
            assert_eq!(fast_forecast(&mut state, &p).unwrap(), v);
        }
    }

    #[test]
    fn correction_at_zero_error_is_beta() {
        let mut state = SlfState::new();
        let p = params();
        let out = rectified_correction(10.0, 10.0, 0.5, &mut state, &p);
        assert!((out - p.beta_mw).abs() < 1e-12);
    }

    #[test]
    fn correction_proportional_only() {
        let mut state = SlfState::new();
        let p = SlfParams {
            k_p: 1.0,
            k_i: 0.0,
            k_soc: 1.0,
            beta_mw: 0.0,
            ..params()
        };
        let out = rectified_correction(12.0, 10.0, 0.5, &mut state, &p);
        assert!((out - 2.0).abs() < 1e-12);
    }

    #[test]
    fn correction_integral_accumulates() {
        let mut state = SlfState::new();
        let p = SlfParams {
            k_p: 0.0,
            k_i: 0.1,
            k_soc: 1.0,
            beta_mw: 0.0,
            dt_s: 5.0,
            ..params()
        };
        rectified_correction(11.0, 10.0, 0.5, &mut state, &p);
        let out = rectified_correction(11.0, 10.0, 0.5, &mut state, &p);
        // two steps of error 1 MW at 5 s: integral 10 MW*s, contribution 1.0
        assert!((out - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correction_anti_windup_clamps() {
        let mut state = SlfState::new();
        state.windup_limit_mw = 3.0;
        let p = SlfParams {
            k_p: 0.0,
            k_i: 1.0,
            k_soc: 1.0,
            beta_mw: 0.0,
            dt_s: 5.0,
            ..params()
        };
        for _ in 0..100 {
            rectified_correction(20.0, 10.0, 0.5, &mut state, &p);
        }
        let out = rectified_correction(10.0, 10.0, 0.5, &mut state, &p);
        assert!(out <= 3.0 + 1e-12);
    }

    #[test]
    fn allocate_upward_by_headroom() {
        let fleet = vec![unit(2.0, AeStatus::Started), unit(3.0, AeStatus::Started)];
        let shares = allocate(1.0, &fleet).unwrap();
        assert!((shares[0] - 0.6).abs() < 1e-12);
        assert!((shares[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn allocate_downward_by_load() {
        let fleet = vec![unit(2.0, AeStatus::Started), unit(3.0, AeStatus::Started)];
        let shares = allocate(-1.0, &fleet).unwrap();
        assert!((shares[0] + 0.4).abs() < 1e-12);
        assert!((shares[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn allocate_singleton_takes_all() {
        let fleet = vec![unit(2.0, AeStatus::Started), unit(0.0, AeStatus::Shutdown)];
        let shares = allocate(0.7, &fleet).unwrap();
        assert!((shares[0] - 0.7).abs() < 1e-12);
        assert_eq!(shares[1], 0.0);
    }

    #[test]
    fn allocate_no_adjustable_unit() {
        let fleet = vec![unit(0.0, AeStatus::Shutdown)];
        assert!(matches!(
            allocate(1.0, &fleet),
            Err(SlfError::NoAdjustableUnit { .. })
        ));
    }

    #[test]
    fn allocate_shares_sum_to_correction() {
        let fleet = vec![
            unit(1.0, AeStatus::Started),
            unit(4.5, AeStatus::Started),
            unit(3.0, AeStatus::Started),
        ];
        for &c in &[2.5, -2.5, 0.4] {
            let shares = allocate(c, &fleet).unwrap();
            let sum: f64 = shares.iter().sum();
            assert!((sum - c).abs() < 1e-12);
            if c > 0.0 {
                assert!(shares.iter().all(|&s| s >= 0.0));
            }
        }
    }

    #[test]
    fn compose_identity_with_zero_correction() {
        let fleet = vec![unit(3.0, AeStatus::Started)];
        let out = compose_reference(&[3.0], &[0.0], &fleet);
        assert_eq!(out.per_ae_mw, vec![3.0]);
        assert_eq!(out.clamp_residual_mw, 0.0);
    }

    #[test]
    fn compose_clamps_and_reports_residual() {
        let fleet = vec![unit(5.0, AeStatus::Started)];
        let out = compose_reference(&[5.0], &[1.5], &fleet);
        assert_eq!(out.per_ae_mw, vec![6.0]);
        assert!((out.clamp_residual_mw - 0.5).abs() < 1e-12);
    }

    #[test]
    fn compose_standby_pinned_to_standby_power() {
        let fleet = vec![unit(0.0, AeStatus::Standby)];
        let out = compose_reference(&[5.0], &[2.0], &fleet);
        assert_eq!(out.per_ae_mw, vec![0.25]);
    }
}
