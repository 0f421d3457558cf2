//! Synthetic carbon-intensity windows shaped like the three grids studied:
//! a variable wind/solar grid (DE-like), a low, flat nuclear/hydro grid
//! (FR-like) and a high, flat coal grid (PL-like).
//!
//! These are NOT measured data. They only reproduce the qualitative
//! profile (level and variability) of each grid so the bundled experiment
//! runs without external downloads. See `data/README.md` for fetching real
//! hourly exports.

use std::f64::consts::TAU;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::carbon_trace::{CarbonIntensityTrace, ColumnMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridShape {
    /// High variability: multi-day wind swings plus a midday solar dip.
    Variable,
    /// Low intensity, low variability.
    LowFlat,
    /// High intensity, low-to-moderate variability.
    HighFlat,
}

/// A bundled week: label, first day (UTC), shape and the level parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleWindow {
    pub label: &'static str,
    pub file: &'static str,
    pub first_day: (i32, u32, u32),
    pub shape: GridShape,
    pub mean: f64,
    pub swing: f64,
    pub seed: u64,
}

/// The six evaluation weeks of 2024, two per grid.
pub const EVALUATION_WINDOWS: [SampleWindow; 6] = [
    SampleWindow { label: "DE1", file: "de1_synthetic.csv", first_day: (2024, 1, 1), shape: GridShape::Variable, mean: 250.0, swing: 170.0, seed: 11 },
    SampleWindow { label: "DE2", file: "de2_synthetic.csv", first_day: (2024, 4, 22), shape: GridShape::Variable, mean: 270.0, swing: 150.0, seed: 12 },
    SampleWindow { label: "FR1", file: "fr1_synthetic.csv", first_day: (2024, 6, 10), shape: GridShape::LowFlat, mean: 7.0, swing: 2.0, seed: 21 },
    SampleWindow { label: "FR2", file: "fr2_synthetic.csv", first_day: (2024, 12, 23), shape: GridShape::LowFlat, mean: 21.0, swing: 6.0, seed: 22 },
    SampleWindow { label: "PL1", file: "pl1_synthetic.csv", first_day: (2024, 1, 2), shape: GridShape::HighFlat, mean: 720.0, swing: 50.0, seed: 31 },
    SampleWindow { label: "PL2", file: "pl2_synthetic.csv", first_day: (2024, 1, 20), shape: GridShape::HighFlat, mean: 570.0, swing: 70.0, seed: 32 },
];

impl SampleWindow {
    pub fn start_epoch(&self) -> i64 {
        let (y, m, d) = self.first_day;
        NaiveDate::from_ymd_opt(y, m, d)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .expect("valid calendar date")
            .and_utc()
            .timestamp()
    }

    /// Hourly values for `hours` hours.
    pub fn values(&self, hours: usize) -> Vec<f64> {
        synthetic_intensity(self.shape, self.mean, self.swing, hours, self.seed)
    }

    pub fn trace(&self, hours: usize) -> CarbonIntensityTrace {
        CarbonIntensityTrace::new(self.label, self.start_epoch(), 3600, self.values(hours))
            .expect("synthetic values are non-negative")
    }

    pub fn csv(&self) -> String {
        self.trace(168).to_csv(&ColumnMap::default())
    }
}

/// Hourly synthetic intensities in g/kWh. Deterministic for a given seed.
pub fn synthetic_intensity(shape: GridShape, mean: f64, swing: f64, hours: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.gen::<f64>() * TAU;
    (0..hours)
        .map(|h| {
            let h = h as f64;
            let hour_of_day = h % 24.0;
            let noise: f64 = rng.gen_range(-1.0..1.0);
            let v = match shape {
                GridShape::Variable => {
                    // Weather fronts on a ~2.5 day cycle, solar trough at 13:00.
                    let wind = (TAU * h / 60.0 + phase).sin();
                    let solar = (-(hour_of_day - 13.0).powi(2) / 18.0).exp();
                    let evening = (-(hour_of_day - 19.0).powi(2) / 8.0).exp();
                    mean + swing * wind - 0.45 * swing * solar + 0.3 * swing * evening + 0.08 * swing * noise
                }
                GridShape::LowFlat | GridShape::HighFlat => {
                    let daily = (TAU * (hour_of_day - 8.0) / 24.0).sin();
                    let drift = (TAU * h / 168.0 + phase).sin();
                    mean + 0.5 * swing * daily + 0.35 * swing * drift + 0.15 * swing * noise
                }
            };
            (v.max(0.05 * mean) * 100.0).round() / 100.0
        })
        .collect()
}
