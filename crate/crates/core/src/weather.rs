//! Five-minute weather series: CSV loading and a synthetic seasonal generator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{STEPS_PER_DAY, TIMESTEP_MINUTES};

pub const CSV_HEADER: &str = "timestamp,ghi_w_m2,air_temp_c,wind_speed_m_s";
pub const GHI_MAX: f64 = 1500.0;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header {found:?}, expected {CSV_HEADER:?}")]
    Header { found: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: timestamp not after previous row")]
    NonMonotone { row: usize },
    #[error("row {row}: gap of {minutes} min exceeds one missing step")]
    Gap { row: usize, minutes: i64 },
    #[error("row {row}: negative GHI {value}")]
    NegativeGhi { row: usize, value: f64 },
    #[error("row {row}: GHI {value} above {GHI_MAX}")]
    GhiTooLarge { row: usize, value: f64 },
    #[error("weather series is empty")]
    Empty,
    #[error("unknown weather reference {0:?}")]
    UnknownRef(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: NaiveDateTime,
    pub ghi: f64,
    pub air_temp: f64,
    /// Wind speed at the measurement height, m/s.
    pub wind_speed_ref: f64,
}

/// Uniform 5-minute weather series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub records: Vec<WeatherRecord>,
    /// Set when the series was repeated to cover a longer horizon.
    pub cyclic_extended: bool,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record for an absolute step index, wrapping around the series.
    pub fn at(&self, step: usize) -> &WeatherRecord {
        &self.records[step % self.records.len()]
    }

    /// Repeats the series until it covers `days` full days.
    pub fn extended_to_days(&self, days: usize) -> WeatherSeries {
        let want = days * STEPS_PER_DAY;
        if self.records.len() >= want {
            return WeatherSeries { records: self.records[..want].to_vec(), cyclic_extended: self.cyclic_extended };
        }
        let start = self.records[0].timestamp;
        let records = (0..want)
            .map(|i| {
                let src = &self.records[i % self.records.len()];
                WeatherRecord {
                    timestamp: start + Duration::minutes(i as i64 * i64::from(TIMESTEP_MINUTES)),
                    ..src.clone()
                }
            })
            .collect();
        WeatherSeries { records, cyclic_extended: true }
    }

    /// Sum of GHI over each full day, in Wh/m².
    pub fn daily_ghi_wh(&self) -> Vec<f64> {
        self.records
            .chunks(STEPS_PER_DAY)
            .map(|day| day.iter().map(|r| r.ghi).sum::<f64>() * f64::from(TIMESTEP_MINUTES) / 60.0)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{:.3}",
                r.timestamp.format("%Y-%m-%dT%H:%M:%S"),
                r.ghi,
                r.air_temp,
                r.wind_speed_ref
            );
        }
        out
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Parses weather CSV text. Single missing steps are filled by linear
/// interpolation; longer gaps are rejected.
pub fn parse_weather_csv(text: &str) -> Result<WeatherSeries, WeatherError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != CSV_HEADER {
        return Err(WeatherError::Header { found: header.to_string() });
    }
    let step = Duration::minutes(i64::from(TIMESTEP_MINUTES));
    let mut records: Vec<WeatherRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(WeatherError::Row { row, message: format!("expected 4 fields, got {}", fields.len()) });
        }
        let timestamp = parse_timestamp(fields[0])
            .ok_or_else(|| WeatherError::Row { row, message: format!("bad timestamp {:?}", fields[0]) })?;
        let num = |idx: usize, name: &str| -> Result<f64, WeatherError> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| WeatherError::Row { row, message: format!("bad {name} {:?}", fields[idx]) })
        };
        let ghi = num(1, "ghi")?;
        let air_temp = num(2, "air temperature")?;
        let wind = num(3, "wind speed")?;
        if ghi < 0.0 {
            return Err(WeatherError::NegativeGhi { row, value: ghi });
        }
        if ghi > GHI_MAX {
            return Err(WeatherError::GhiTooLarge { row, value: ghi });
        }
        if wind < 0.0 {
            return Err(WeatherError::Row { row, message: format!("negative wind speed {wind}") });
        }
        let rec = WeatherRecord { timestamp, ghi, air_temp, wind_speed_ref: wind };
        if let Some(prev) = records.last() {
            let delta = timestamp - prev.timestamp;
            if delta <= Duration::zero() {
                return Err(WeatherError::NonMonotone { row });
            }
            if delta == step * 2 {
                let mid = WeatherRecord {
                    timestamp: prev.timestamp + step,
                    ghi: 0.5 * (prev.ghi + rec.ghi),
                    air_temp: 0.5 * (prev.air_temp + rec.air_temp),
                    wind_speed_ref: 0.5 * (prev.wind_speed_ref + rec.wind_speed_ref),
                };
                records.push(mid);
            } else if delta != step {
                return Err(WeatherError::Gap { row, minutes: delta.num_minutes() });
            }
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(WeatherError::Empty);
    }
    Ok(WeatherSeries { records, cyclic_extended: false })
}

pub fn load_weather(path: impl AsRef<Path>) -> Result<WeatherSeries, WeatherError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| WeatherError::Io { path: path.display().to_string(), source })?;
    parse_weather_csv(&text)
}

/// Seasonal profile for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherProfile {
    /// Calendar quarter, 1..=4.
    Quarter(u8),
    /// Year-round average conditions.
    Annual,
}

struct ProfileShape {
    start: NaiveDate,
    sunrise_h: f64,
    sunset_h: f64,
    peak_ghi: f64,
    temp_mean: f64,
    temp_amp: f64,
    wind_mean: f64,
}

impl WeatherProfile {
    fn shape(self) -> ProfileShape {
        let date = |m| NaiveDate::from_ymd_opt(2024, m, 1).expect("valid date");
        match self {
            WeatherProfile::Quarter(1) => ProfileShape {
                start: date(1),
                sunrise_h: 6.3,
                sunset_h: 17.7,
                peak_ghi: 700.0,
                temp_mean: 18.0,
                temp_amp: 4.0,
                wind_mean: 2.6,
            },
            WeatherProfile::Quarter(2) => ProfileShape {
                start: date(4),
                sunrise_h: 5.4,
                sunset_h: 18.4,
                peak_ghi: 820.0,
                temp_mean: 28.0,
                temp_amp: 4.5,
                wind_mean: 2.4,
            },
            WeatherProfile::Quarter(3) => ProfileShape {
                start: date(7),
                sunrise_h: 5.4,
                sunset_h: 18.5,
                peak_ghi: 800.0,
                temp_mean: 30.0,
                temp_amp: 4.0,
                wind_mean: 2.2,
            },
            WeatherProfile::Quarter(_) => ProfileShape {
                start: date(10),
                sunrise_h: 5.9,
                sunset_h: 17.5,
                peak_ghi: 720.0,
                temp_mean: 24.0,
                temp_amp: 4.5,
                wind_mean: 2.7,
            },
            WeatherProfile::Annual => ProfileShape {
                start: date(1),
                sunrise_h: 5.8,
                sunset_h: 18.0,
                peak_ghi: 760.0,
                temp_mean: 25.0,
                temp_amp: 4.2,
                wind_mean: 2.5,
            },
        }
    }
}

/// Deterministic synthetic weather: a clear-sky irradiance bell scaled by a
/// daily cloudiness draw and smooth intra-day cloud noise, a temperature
/// sinusoid peaking mid-afternoon, and a reference-height wind process that is
/// strongest at night.
pub fn synth_weather(profile: WeatherProfile, seed: u64, days: usize) -> WeatherSeries {
    let shape = profile.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = shape.start.and_hms_opt(0, 0, 0).expect("midnight");
    let step_h = f64::from(TIMESTEP_MINUTES) / 60.0;
    let mut records = Vec::with_capacity(days * STEPS_PER_DAY);
    let mut cloud = 0.0_f64;
    let mut gust = 0.0_f64;
    for day in 0..days {
        let clearness: f64 = rng.random_range(0.75..1.0);
        let day_temp_shift: f64 = rng.random_range(-1.5..1.5);
        for s in 0..STEPS_PER_DAY {
            let hour = s as f64 * step_h;
            // AR(1) processes for cloud attenuation and gusts.
            cloud = 0.9 * cloud + 0.1 * rng.random_range(-1.0..1.0);
            gust = 0.95 * gust + 0.05 * rng.random_range(-1.0..1.0);

            let ghi = if hour > shape.sunrise_h && hour < shape.sunset_h {
                let x = (hour - shape.sunrise_h) / (shape.sunset_h - shape.sunrise_h);
                let bell = (std::f64::consts::PI * x).sin().powf(1.3);
                (shape.peak_ghi * bell * clearness * (1.0 + 0.5 * cloud).clamp(0.4, 1.2)).max(0.0)
            } else {
                0.0
            };
            let phase = 2.0 * std::f64::consts::PI * (hour - 14.0) / 24.0;
            let air_temp = shape.temp_mean + day_temp_shift + shape.temp_amp * phase.cos();
            let night = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * (hour - 2.0) / 24.0).cos());
            let wind = (shape.wind_mean * (0.6 + 0.8 * night) * (1.0 + 2.0 * gust)).max(0.0);

            records.push(WeatherRecord {
                timestamp: start + Duration::minutes(((day * STEPS_PER_DAY + s) as i64) * i64::from(TIMESTEP_MINUTES)),
                ghi,
                air_temp,
                wind_speed_ref: wind,
            });
        }
    }
    WeatherSeries { records, cyclic_extended: false }
}

/// Parses `synthetic:q3`, `synthetic:annual@7`, etc.
pub fn parse_synthetic_ref(reference: &str) -> Option<(WeatherProfile, u64)> {
    let rest = reference.strip_prefix("synthetic:")?;
    let (name, seed) = match rest.split_once('@') {
        Some((n, s)) => (n, s.parse().ok()?),
        None => (rest, 1),
    };
    let profile = match name {
        "q1" => WeatherProfile::Quarter(1),
        "q2" => WeatherProfile::Quarter(2),
        "q3" => WeatherProfile::Quarter(3),
        "q4" => WeatherProfile::Quarter(4),
        "annual" => WeatherProfile::Annual,
        _ => return None,
    };
    Some((profile, seed))
}

/// Resolves a scenario's weather reference into a series covering `days`.
pub fn resolve_weather(reference: &str, base_dir: Option<&Path>, days: usize) -> Result<WeatherSeries, WeatherError> {
    if reference.starts_with("synthetic:") {
        let (profile, seed) =
            parse_synthetic_ref(reference).ok_or_else(|| WeatherError::UnknownRef(reference.to_string()))?;
        return Ok(synth_weather(profile, seed, days.max(1)));
    }
    let path = match base_dir {
        Some(dir) => dir.join(reference),
        None => Path::new(reference).to_path_buf(),
    };
    Ok(load_weather(path)?.extended_to_days(days.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_for(rows: &[(&str, f64)]) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for (t, g) in rows {
            s.push_str(&format!("{t},{g},25.0,2.0\n"));
        }
        s
    }

    #[test]
    fn full_day_roundtrips_through_csv() {
        let w = synth_weather(WeatherProfile::Quarter(2), 3, 1);
        assert_eq!(w.len(), 288);
        let back = parse_weather_csv(&w.to_csv()).unwrap();
        assert_eq!(back.len(), 288);
        assert_eq!(back.records[0].timestamp, w.records[0].timestamp);
    }

    #[test]
    fn duplicate_timestamp_names_row() {
        let text = csv_for(&[("2024-01-01T00:00:00", 0.0), ("2024-01-01T00:05:00", 0.0), ("2024-01-01T00:05:00", 0.0)]);
        match parse_weather_csv(&text) {
            Err(WeatherError::NonMonotone { row }) => assert_eq!(row, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_gap_is_interpolated() {
        let text = csv_for(&[("2024-01-01T10:00:00", 100.0), ("2024-01-01T10:10:00", 300.0)]);
        let w = parse_weather_csv(&text).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.records[1].ghi, 200.0);
        assert_eq!(w.records[1].timestamp, parse_timestamp("2024-01-01T10:05:00").unwrap());
    }

    #[test]
    fn long_gap_is_rejected() {
        let text = csv_for(&[("2024-01-01T10:00:00", 100.0), ("2024-01-01T10:15:00", 300.0)]);
        assert!(matches!(parse_weather_csv(&text), Err(WeatherError::Gap { row: 3, minutes: 15 })));
    }

    #[test]
    fn negative_ghi_is_rejected() {
        let text = csv_for(&[("2024-01-01T10:00:00", -1.0)]);
        assert!(matches!(parse_weather_csv(&text), Err(WeatherError::NegativeGhi { row: 2, .. })));
    }

    #[test]
    fn header_must_match() {
        assert!(matches!(parse_weather_csv("time,ghi\n"), Err(WeatherError::Header { .. })));
    }

    #[test]
    fn rfc3339_timestamps_accepted() {
        let text = csv_for(&[("2024-01-01T10:00:00Z", 1.0), ("2024-01-01T10:05:00+00:00", 2.0)]);
        assert_eq!(parse_weather_csv(&text).unwrap().len(), 2);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synth_weather(WeatherProfile::Quarter(3), 1, 2);
        let b = synth_weather(WeatherProfile::Quarter(3), 1, 2);
        assert_eq!(a, b);
        assert_ne!(a, synth_weather(WeatherProfile::Quarter(3), 2, 2));
    }

    #[test]
    fn synthetic_nights_are_dark() {
        for q in 1..=4 {
            let w = synth_weather(WeatherProfile::Quarter(q), 5, 3);
            for r in &w.records {
                let h = r.timestamp.time().format("%H").to_string().parse::<u32>().unwrap();
                if !(4..20).contains(&h) {
                    assert_eq!(r.ghi, 0.0, "q{q} {}", r.timestamp);
                }
            }
        }
    }

    #[test]
    fn summer_quarter_outshines_winter() {
        for seed in [1, 2, 3, 99] {
            let q1: f64 = synth_weather(WeatherProfile::Quarter(1), seed, 30).daily_ghi_wh().iter().sum();
            let q3: f64 = synth_weather(WeatherProfile::Quarter(3), seed, 30).daily_ghi_wh().iter().sum();
            assert!(q3 / q1 >= 1.2, "seed {seed}: ratio {}", q3 / q1);
        }
    }

    #[test]
    fn cyclic_extension_is_flagged() {
        let w = synth_weather(WeatherProfile::Annual, 1, 1).extended_to_days(3);
        assert_eq!(w.len(), 3 * 288);
        assert!(w.cyclic_extended);
        assert_eq!(w.records[288].ghi, w.records[0].ghi);
        assert!(w.records[288].timestamp > w.records[287].timestamp);
    }

    #[test]
    fn synthetic_refs() {
        assert_eq!(parse_synthetic_ref("synthetic:q3"), Some((WeatherProfile::Quarter(3), 1)));
        assert_eq!(parse_synthetic_ref("synthetic:annual@7"), Some((WeatherProfile::Annual, 7)));
        assert_eq!(parse_synthetic_ref("synthetic:q9"), None);
        assert!(matches!(resolve_weather("synthetic:nope", None, 1), Err(WeatherError::UnknownRef(_))));
    }
}
