//! Meteorological time-series ingest, resampling, and renewable power
//! conversion.
//!
//! Input CSV layout: a header row with columns `epoch_s, wind_ms[_k],
//! ghi_wm2, temp_c` (names remappable through [`MeteoSchema`]), UTF-8,
//! decimal point. Timestamps must be strictly increasing with a constant
//! step; gaps are rejected rather than filled.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("missing column `{name}`")]
    MissingColumn { name: String },
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotonicTime { row: usize },
    #[error("irregular time step at row {row}: expected {expected} s, got {got} s")]
    IrregularStep { row: usize, expected: i64, got: i64 },
    #[error("negative value in column `{column}` at row {row}")]
    NegativeValue { row: usize, column: String },
    #[error("empty series")]
    Empty,
    #[error("target step {target} s is neither a multiple nor a divisor of {step} s")]
    IncompatibleStep { step: u32, target: u32 },
    #[error("forecast horizon {horizon} s exceeds available data")]
    HorizonExceedsData { horizon: u32 },
}

/// Column-name map for [`load_meteo_series`]. `wind` lists one column per
/// turbine, or a single shared column applied to every turbine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeteoSchema {
    pub epoch: String,
    pub wind: Vec<String>,
    pub ghi: String,
    pub temp: String,
}

impl Default for MeteoSchema {
    fn default() -> Self {
        Self {
            epoch: "epoch_s".into(),
            wind: vec!["wind_ms".into()],
            ghi: "ghi_wm2".into(),
            temp: "temp_c".into(),
        }
    }
}

/// Validated meteorological series at a fixed step.
///
/// `wind_speed` is indexed `[column][sample]` in m/s; `ghi` in W/m²;
/// `ambient_temp` in °C. All sequences have equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MeteoSeries {
    pub start_epoch: i64,
    pub step: u32,
    pub wind_speed: Vec<Vec<f64>>,
    pub ghi: Vec<f64>,
    pub ambient_temp: Vec<f64>,
}

impl MeteoSeries {
    pub fn len(&self) -> usize {
        self.ghi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ghi.is_empty()
    }

    /// Duration covered by the series in seconds.
    pub fn span_s(&self) -> u64 {
        self.len() as u64 * self.step as u64
    }
}

/// Renewable power series derived from meteorology, MW per unit.
///
/// Unit ratings are carried along so downstream consumers can clamp and
/// normalize without re-reading the plant description.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub start_epoch: i64,
    pub step: u32,
    pub per_wt: Vec<Vec<f64>>,
    pub pv: Vec<f64>,
    pub wt_ratings: Vec<f64>,
    pub pv_rating: f64,
}

impl PowerSeries {
    pub fn len(&self) -> usize {
        self.pv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pv.is_empty()
    }

    /// Total renewable power at a sample index, MW.
    pub fn total_at(&self, idx: usize) -> f64 {
        let wt: f64 = self.per_wt.iter().map(|w| w[idx]).sum();
        wt + self.pv[idx]
    }
}

/// Wind turbine power-curve parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WtParams {
    pub rating_mw: f64,
    pub cut_in_ms: f64,
    pub rated_speed_ms: f64,
    pub cut_out_ms: f64,
}

/// PV array parameters: linear temperature derating with a NOCT cell
/// temperature model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvParams {
    pub rating_mw: f64,
    pub temp_coeff_per_c: f64,
    pub noct_c: f64,
}

/// Forecast synthesis mode for [`make_forecast`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ForecastMode {
    /// Forecast equals the actuals over the window.
    Perfect,
    /// Every sample in the window repeats the last observed value.
    Persistence,
    /// Perfect forecast with seeded zero-mean multiplicative noise,
    /// clamped to `[0, rating]`.
    Noisy { seed: u64, sigma: f64 },
}

/// Resampling mode: `Mean` averages full windows when downsampling;
/// `Hold` repeats the last known sample when upsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    Mean,
    Hold,
}

/// Load and validate a meteorological CSV.
///
/// Rejects missing columns, non-monotonic or gapped timestamps, and
/// negative wind speed or irradiance, naming the offending row (1-based,
/// counting the header as row 1).
pub fn load_meteo_series(path: &Path, schema: &MeteoSchema) -> Result<MeteoSeries, IngestError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => IngestError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        },
        _ => IngestError::Parse {
            row: 1,
            msg: e.to_string(),
        },
    })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse {
            row: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn { name: name.into() })
    };

    let epoch_col = col(&schema.epoch)?;
    let wind_cols = schema
        .wind
        .iter()
        .map(|w| col(w))
        .collect::<Result<Vec<_>, _>>()?;
    let ghi_col = col(&schema.ghi)?;
    let temp_col = col(&schema.temp)?;

    let mut epochs: Vec<i64> = Vec::new();
    let mut wind: Vec<Vec<f64>> = vec![Vec::new(); wind_cols.len()];
    let mut ghi: Vec<f64> = Vec::new();
    let mut temp: Vec<f64> = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is row 1
        let record = record.map_err(|e| IngestError::Parse {
            row,
            msg: e.to_string(),
        })?;
        let field = |idx: usize, name: &str| -> Result<f64, IngestError> {
            record
                .get(idx)
                .ok_or_else(|| IngestError::MissingColumn { name: name.into() })?
                .trim()
                .parse::<f64>()
                .map_err(|e| IngestError::Parse {
                    row,
                    msg: format!("column `{name}`: {e}"),
                })
        };

        let epoch = field(epoch_col, &schema.epoch)? as i64;
        epochs.push(epoch);
        for (k, &c) in wind_cols.iter().enumerate() {
            let v = field(c, &schema.wind[k])?;
            if v < 0.0 {
                return Err(IngestError::NegativeValue {
                    row,
                    column: schema.wind[k].clone(),
                });
            }
            wind[k].push(v);
        }
        let g = field(ghi_col, &schema.ghi)?;
        if g < 0.0 {
            return Err(IngestError::NegativeValue {
                row,
                column: schema.ghi.clone(),
            });
        }
        ghi.push(g);
        temp.push(field(temp_col, &schema.temp)?);
    }

    if epochs.is_empty() {
        return Err(IngestError::Empty);
    }

    let step = if epochs.len() >= 2 {
        let d = epochs[1] - epochs[0];
        if d <= 0 {
            return Err(IngestError::NonMonotonicTime { row: 3 });
        }
        d
    } else {
        60
    };
    for i in 1..epochs.len() {
        let row = i + 2;
        let d = epochs[i] - epochs[i - 1];
        if d <= 0 {
            return Err(IngestError::NonMonotonicTime { row });
        }
        if d != step {
            return Err(IngestError::IrregularStep {
                row,
                expected: step,
                got: d,
            });
        }
    }

    Ok(MeteoSeries {
        start_epoch: epochs[0],
        step: step as u32,
        wind_speed: wind,
        ghi,
        ambient_temp: temp,
    })
}

/// Resample a series to `target_step`.
///
/// Downsampling (target a multiple of the step) aggregates full windows and
/// drops a trailing partial window; upsampling (target a divisor) expands
/// each sample. In `Mean` mode windows are averaged; in `Hold` mode the
/// sample in effect at the window start is used.
pub fn resample(
    series: &MeteoSeries,
    target_step: u32,
    mode: ResampleMode,
) -> Result<MeteoSeries, IngestError> {
    if target_step == 0 {
        return Err(IngestError::IncompatibleStep {
            step: series.step,
            target: target_step,
        });
    }
    if target_step == series.step {
        return Ok(series.clone());
    }

    let columns = |f: &dyn Fn(&[f64]) -> Vec<f64>| MeteoSeries {
        start_epoch: series.start_epoch,
        step: target_step,
        wind_speed: series.wind_speed.iter().map(|c| f(c)).collect(),
        ghi: f(&series.ghi),
        ambient_temp: f(&series.ambient_temp),
    };

    if target_step % series.step == 0 {
        let k = (target_step / series.step) as usize;
        let down = |c: &[f64]| -> Vec<f64> {
            c.chunks_exact(k)
                .map(|w| match mode {
                    ResampleMode::Mean => w.iter().sum::<f64>() / k as f64,
                    ResampleMode::Hold => w[0],
                })
                .collect()
        };
        Ok(columns(&down))
    } else if series.step % target_step == 0 {
        let k = (series.step / target_step) as usize;
        let up = |c: &[f64]| -> Vec<f64> {
            c.iter().flat_map(|&v| std::iter::repeat(v).take(k)).collect()
        };
        Ok(columns(&up))
    } else {
        Err(IngestError::IncompatibleStep {
            step: series.step,
            target: target_step,
        })
    }
}

/// Cubic wind power curve: zero below cut-in and at or above cut-out,
/// rated on `[rated_speed, cut_out)`, and
/// `rating * (v^3 - v_ci^3) / (v_r^3 - v_ci^3)` between. Total over all
/// inputs.
pub fn wind_power(speed_ms: f64, wt: &WtParams) -> f64 {
    if !speed_ms.is_finite() || speed_ms < wt.cut_in_ms || speed_ms >= wt.cut_out_ms {
        return 0.0;
    }
    if speed_ms >= wt.rated_speed_ms {
        return wt.rating_mw;
    }
    let v3 = speed_ms.powi(3);
    let ci3 = wt.cut_in_ms.powi(3);
    let r3 = wt.rated_speed_ms.powi(3);
    (wt.rating_mw * (v3 - ci3) / (r3 - ci3)).clamp(0.0, wt.rating_mw)
}

/// PV output with linear temperature derating. Cell temperature follows the
/// NOCT relation `cell = ambient + ghi * (NOCT - 20) / 800`; output is
/// `rating * (ghi/1000) * (1 + coeff * (cell - 25))` clamped to
/// `[0, rating]`.
pub fn pv_power(ghi_wm2: f64, ambient_temp_c: f64, pv: &PvParams) -> f64 {
    if ghi_wm2 <= 0.0 {
        return 0.0;
    }
    let cell_temp = ambient_temp_c + ghi_wm2 * (pv.noct_c - 20.0) / 800.0;
    let raw = pv.rating_mw * (ghi_wm2 / 1000.0) * (1.0 + pv.temp_coeff_per_c * (cell_temp - 25.0));
    raw.clamp(0.0, pv.rating_mw)
}

/// Convert meteorology to per-unit renewable power. When the series holds a
/// single shared wind column it is applied to every turbine; otherwise the
/// column count must match the turbine count.
pub fn to_power_series(
    meteo: &MeteoSeries,
    wts: &[WtParams],
    pv: &PvParams,
) -> Result<PowerSeries, IngestError> {
    let shared = meteo.wind_speed.len() == 1;
    if !shared && meteo.wind_speed.len() != wts.len() {
        return Err(IngestError::MissingColumn {
            name: format!(
                "expected 1 or {} wind columns, found {}",
                wts.len(),
                meteo.wind_speed.len()
            ),
        });
    }
    let per_wt = wts
        .iter()
        .enumerate()
        .map(|(l, wt)| {
            let col = if shared { &meteo.wind_speed[0] } else { &meteo.wind_speed[l] };
            col.iter().map(|&v| wind_power(v, wt)).collect()
        })
        .collect();
    let pv_series = meteo
        .ghi
        .iter()
        .zip(&meteo.ambient_temp)
        .map(|(&g, &t)| pv_power(g, t, pv))
        .collect();
    Ok(PowerSeries {
        start_epoch: meteo.start_epoch,
        step: meteo.step,
        per_wt,
        pv: pv_series,
        wt_ratings: wts.iter().map(|w| w.rating_mw).collect(),
        pv_rating: pv.rating_mw,
    })
}

/// Synthesize the forecast window used by the scheduler.
///
/// `from` is the sample index of "now"; the window covers
/// `[from, from + horizon)`. Persistence repeats the most recent completed
/// observation; noisy mode applies seeded zero-mean multiplicative noise and
/// is deterministic for a fixed seed.
pub fn make_forecast(
    actual: &PowerSeries,
    from: usize,
    horizon_s: u32,
    mode: ForecastMode,
) -> Result<PowerSeries, IngestError> {
    if actual.step == 0 || horizon_s % actual.step != 0 {
        return Err(IngestError::IncompatibleStep {
            step: actual.step,
            target: horizon_s,
        });
    }
    let n = (horizon_s / actual.step) as usize;
    if from + n > actual.len() {
        return Err(IngestError::HorizonExceedsData { horizon: horizon_s });
    }

    let window = |col: &[f64]| col[from..from + n].to_vec();
    let (per_wt, pv): (Vec<Vec<f64>>, Vec<f64>) = match mode {
        ForecastMode::Perfect => (
            actual.per_wt.iter().map(|c| window(c)).collect(),
            window(&actual.pv),
        ),
        ForecastMode::Persistence => {
            let last = from.saturating_sub(1);
            (
                actual.per_wt.iter().map(|c| vec![c[last]; n]).collect(),
                vec![actual.pv[last]; n],
            )
        }
        ForecastMode::Noisy { seed, sigma } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ from as u64);
            let mut noisy = |col: &[f64], rating: f64| -> Vec<f64> {
                col[from..from + n]
                    .iter()
                    .map(|&v| {
                        let eps: f64 = rng.sample(rand_distr_standard_normal());
                        (v * (1.0 + sigma * eps)).clamp(0.0, rating)
                    })
                    .collect()
            };
            let per_wt = actual
                .per_wt
                .iter()
                .zip(&actual.wt_ratings)
                .map(|(c, &r)| noisy(c, r))
                .collect();
            let pv = noisy(&actual.pv, actual.pv_rating);
            (per_wt, pv)
        }
    };

    Ok(PowerSeries {
        start_epoch: actual.start_epoch + (from as i64) * actual.step as i64,
        step: actual.step,
        per_wt,
        pv,
        wt_ratings: actual.wt_ratings.clone(),
        pv_rating: actual.pv_rating,
    })
}

// Box-Muller standard normal as a rand::Distribution, keeping the noise
// model independent of distribution-crate version jitter.
fn rand_distr_standard_normal() -> StandardNormal {
    StandardNormal
}

struct StandardNormal;

impl rand::distributions::Distribution<f64> for StandardNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u1: f64 = rng.gen();
            let u2: f64 = rng.gen();
            if u1 > f64::EPSILON {
                return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn meteo(step: u32, ghi: Vec<f64>) -> MeteoSeries {
        let n = ghi.len();
        MeteoSeries {
            start_epoch: 0,
            step,
            wind_speed: vec![ghi.clone()],
            ghi,
            ambient_temp: vec![20.0; n],
        }
    }

    #[test]
    fn load_three_rows() {
        let f = write_csv("epoch_s,wind_ms,ghi_wm2,temp_c\n0,5,100,10\n60,6,110,11\n120,7,120,12\n");
        let s = load_meteo_series(f.path(), &MeteoSchema::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.step, 60);
        assert_eq!(s.wind_speed[0], vec![5.0, 6.0, 7.0]);
    }

    #[test]
    fn load_rejects_gap() {
        let f = write_csv("epoch_s,wind_ms,ghi_wm2,temp_c\n0,5,100,10\n60,6,110,11\n180,7,120,12\n");
        match load_meteo_series(f.path(), &MeteoSchema::default()) {
            Err(IngestError::IrregularStep { row, .. }) => assert_eq!(row, 4),
            other => panic!("expected IrregularStep, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_negative_irradiance() {
        let f = write_csv("epoch_s,wind_ms,ghi_wm2,temp_c\n0,5,-5,10\n");
        match load_meteo_series(f.path(), &MeteoSchema::default()) {
            Err(IngestError::NegativeValue { row, column }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "ghi_wm2");
            }
            other => panic!("expected NegativeValue, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_missing_column() {
        let f = write_csv("epoch_s,wind_ms,temp_c\n0,5,10\n");
        match load_meteo_series(f.path(), &MeteoSchema::default()) {
            Err(IngestError::MissingColumn { name }) => assert_eq!(name, "ghi_wm2"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn resample_mean_downsample() {
        let s = meteo(60, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let r = resample(&s, 300, ResampleMode::Mean).unwrap();
        assert_eq!(r.ghi, vec![3.0]);
        assert_eq!(r.step, 300);
    }

    #[test]
    fn resample_identity() {
        let s = meteo(60, vec![1.0, 2.0]);
        let r = resample(&s, 60, ResampleMode::Mean).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn resample_hold_upsample() {
        let s = meteo(60, vec![4.0]);
        let r = resample(&s, 20, ResampleMode::Hold).unwrap();
        assert_eq!(r.ghi, vec![4.0, 4.0, 4.0]);
    }

    #[test]
    fn resample_incompatible_step() {
        let s = meteo(60, vec![1.0, 2.0]);
        assert!(matches!(
            resample(&s, 90, ResampleMode::Mean),
            Err(IngestError::IncompatibleStep { .. })
        ));
    }

    fn wt() -> WtParams {
        WtParams {
            rating_mw: 6.25,
            cut_in_ms: 3.0,
            rated_speed_ms: 12.0,
            cut_out_ms: 25.0,
        }
    }

    #[test]
    fn wind_power_below_cut_in() {
        assert_eq!(wind_power(2.0, &wt()), 0.0);
    }

    #[test]
    fn wind_power_rated_plateau() {
        assert_eq!(wind_power(12.0, &wt()), 6.25);
        assert_eq!(wind_power(20.0, &wt()), 6.25);
        assert_eq!(wind_power(25.0, &wt()), 0.0);
    }

    #[test]
    fn wind_power_cubic_region() {
        // 6.25 * (9^3 - 3^3) / (12^3 - 3^3) = 6.25 * 702 / 1701
        let expect = 6.25 * 702.0 / 1701.0;
        assert!((wind_power(9.0, &wt()) - expect).abs() < 1e-12);
        assert!((expect - 2.579).abs() < 1e-3);
    }

    fn pv() -> PvParams {
        PvParams {
            rating_mw: 5.0,
            temp_coeff_per_c: -0.004,
            noct_c: 45.0,
        }
    }

    #[test]
    fn pv_power_dark() {
        assert_eq!(pv_power(0.0, 30.0, &pv()), 0.0);
    }

    #[test]
    fn pv_power_standard_conditions() {
        // cell temp 25 requires ambient = 25 - 1000*25/800
        let ambient = 25.0 - 1000.0 * (45.0 - 20.0) / 800.0;
        assert!((pv_power(1000.0, ambient, &pv()) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pv_power_derated() {
        // ghi 800, cell temp 35 => 5 * 0.8 * (1 - 0.004*10) = 3.84
        let ambient = 35.0 - 800.0 * (45.0 - 20.0) / 800.0;
        assert!((pv_power(800.0, ambient, &pv()) - 3.84).abs() < 1e-12);
    }

    fn power(step: u32, pv: Vec<f64>) -> PowerSeries {
        PowerSeries {
            start_epoch: 0,
            step,
            per_wt: vec![pv.clone()],
            pv,
            wt_ratings: vec![6.25],
            pv_rating: 5.0,
        }
    }

    #[test]
    fn forecast_perfect_is_identity() {
        let p = power(300, vec![1.0, 2.0, 3.0, 4.0]);
        let f = make_forecast(&p, 1, 900, ForecastMode::Perfect).unwrap();
        assert_eq!(f.pv, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn forecast_persistence_repeats_last() {
        let p = power(300, vec![1.0, 4.0, 3.0, 2.0]);
        let f = make_forecast(&p, 2, 600, ForecastMode::Persistence).unwrap();
        assert_eq!(f.pv, vec![4.0, 4.0]);
    }

    #[test]
    fn forecast_noisy_deterministic() {
        let p = power(300, vec![1.0, 2.0, 3.0, 4.0]);
        let mode = ForecastMode::Noisy { seed: 7, sigma: 0.1 };
        let a = make_forecast(&p, 0, 1200, mode).unwrap();
        let b = make_forecast(&p, 0, 1200, mode).unwrap();
        assert_eq!(a.pv, b.pv);
        assert_eq!(a.per_wt, b.per_wt);
        for (&v, &r) in a.pv.iter().zip(p.pv.iter()) {
            assert!(v >= 0.0 && v <= 5.0);
            assert!((v - r).abs() <= r); // zero-mean multiplicative, clamped
        }
    }

    #[test]
    fn forecast_horizon_guard() {
        let p = power(300, vec![1.0, 2.0]);
        assert!(matches!(
            make_forecast(&p, 1, 600, ForecastMode::Perfect),
            Err(IngestError::HorizonExceedsData { .. })
        ));
    }

    #[test]
    fn resample_mean_preserves_energy() {
        let s = meteo(60, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = resample(&s, 180, ResampleMode::Mean).unwrap();
        let before: f64 = s.ghi.iter().map(|v| v * s.step as f64).sum();
        let after: f64 = r.ghi.iter().map(|v| v * r.step as f64).sum();
        assert!((before - after).abs() / before.abs() < 1e-9);
    }

    #[test]
    fn resample_round_trip_length() {
        let s = meteo(60, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let down = resample(&s, 180, ResampleMode::Mean).unwrap();
        let up = resample(&down, 60, ResampleMode::Hold).unwrap();
        assert_eq!(up.len(), s.len());
    }
}
