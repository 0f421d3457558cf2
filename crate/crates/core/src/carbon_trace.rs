//! Grid carbon-intensity traces.
//!
//! A trace is an evenly stepped series of intensities in g CO2eq/kWh. Values
//! are held constant across their step (zero-order hold); there is no
//! interpolation and no extrapolation past either end.

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Watt-seconds per kilowatt-hour.
pub const WS_PER_KWH: f64 = 3_600_000.0;

/// Step assumed when a trace has a single row and nothing to infer from.
pub const DEFAULT_STEP_S: u64 = 3600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("row {row}: cannot parse timestamp `{value}`")]
    Timestamp { row: usize, value: String },
    #[error("row {row}: cannot parse intensity `{value}`")]
    Number { row: usize, value: String },
    #[error("row {row}: negative intensity {value}")]
    NegativeIntensity { row: usize, value: f64 },
    #[error("row {row}: expected timestamp {expected}, found {found} (gaps and reordering are not filled)")]
    Gap { row: usize, expected: i64, found: i64 },
    #[error("trace has no rows")]
    Empty,
    #[error("offset {t}s is outside the trace span of {span}s")]
    OutOfRange { t: u64, span: u64 },
    #[error("window [{start}, {end}) is empty")]
    EmptyWindow { start: i64, end: i64 },
    #[error("window [{start}, {end}) is not aligned to the {step}s trace step")]
    MisalignedWindow { start: i64, end: i64, step: u64 },
    #[error("window [{start}, {end}) is not inside trace [{trace_start}, {trace_end})")]
    WindowOutOfRange { start: i64, end: i64, trace_start: i64, trace_end: i64 },
    #[error("negative intensity {0} cannot be converted")]
    NegativeValue(f64),
    #[error("coefficient of variation needs at least one value")]
    NoValues,
    #[error("coefficient of variation is undefined for zero mean")]
    ZeroMean,
}

/// Which CSV columns carry the timestamp and the intensity, plus the row
/// spacing the file must have.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub intensity: String,
    /// Required row spacing in seconds; `None` accepts whatever the first
    /// two rows imply.
    #[serde(default = "hourly_step")]
    pub expected_step: Option<u64>,
}

fn hourly_step() -> Option<u64> {
    Some(DEFAULT_STEP_S)
}

impl ColumnMap {
    /// Column map for an hourly file.
    pub fn new(timestamp: impl Into<String>, intensity: impl Into<String>) -> Self {
        Self { timestamp: timestamp.into(), intensity: intensity.into(), expected_step: hourly_step() }
    }

    pub fn with_expected_step(mut self, step: Option<u64>) -> Self {
        self.expected_step = step;
        self
    }
}

impl Default for ColumnMap {
    /// Column names of the bundled sample traces.
    fn default() -> Self {
        Self::new("datetime", "carbon_intensity")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensityTrace {
    zone_label: String,
    start_epoch: i64,
    step: u64,
    values: Vec<f64>,
}

/// Carbon intensity in g CO2eq per watt-second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct IntensityPerWattSecond(f64);

impl IntensityPerWattSecond {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Grams emitted by drawing `watts` for one second.
    pub fn emission_for(self, watts: f64) -> f64 {
        watts * self.0
    }
}

/// Converts g/kWh into g/Ws with a single division.
pub fn to_g_per_watt_second(ci_kwh: f64) -> Result<IntensityPerWattSecond, TraceError> {
    if !(ci_kwh >= 0.0) {
        return Err(TraceError::NegativeValue(ci_kwh));
    }
    Ok(IntensityPerWattSecond(ci_kwh / WS_PER_KWH))
}

/// Population standard deviation over the arithmetic mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, TraceError> {
    if values.is_empty() {
        return Err(TraceError::NoValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(TraceError::ZeroMean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

impl CarbonIntensityTrace {
    pub fn new(
        zone_label: impl Into<String>,
        start_epoch: i64,
        step: u64,
        values: Vec<f64>,
    ) -> Result<Self, TraceError> {
        if values.is_empty() {
            return Err(TraceError::Empty);
        }
        if step == 0 {
            return Err(TraceError::Csv("step must be positive".into()));
        }
        if let Some((row, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(TraceError::NegativeIntensity { row: row + 1, value });
        }
        Ok(Self { zone_label: zone_label.into(), start_epoch, step, values })
    }

    /// Hourly trace starting at epoch 0, handy for synthetic setups.
    pub fn hourly(zone_label: impl Into<String>, values: Vec<f64>) -> Result<Self, TraceError> {
        Self::new(zone_label, 0, 3600, values)
    }

    pub fn zone_label(&self) -> &str {
        &self.zone_label
    }

    pub fn with_zone_label(mut self, label: impl Into<String>) -> Self {
        self.zone_label = label.into();
        self
    }

    pub fn start_epoch(&self) -> i64 {
        self.start_epoch
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Covered duration in seconds.
    pub fn span(&self) -> u64 {
        self.step * self.values.len() as u64
    }

    pub fn end_epoch(&self) -> i64 {
        self.start_epoch + self.span() as i64
    }

    /// Intensity (g/kWh) at `t` seconds after the trace start.
    pub fn intensity_at(&self, t: u64) -> Result<f64, TraceError> {
        let idx = (t / self.step) as usize;
        self.values
            .get(idx)
            .copied()
            .ok_or(TraceError::OutOfRange { t, span: self.span() })
    }

    /// Sub-trace covering exactly `[start_epoch, end_epoch)`.
    pub fn slice_window(&self, start_epoch: i64, end_epoch: i64) -> Result<Self, TraceError> {
        if end_epoch <= start_epoch {
            return Err(TraceError::EmptyWindow { start: start_epoch, end: end_epoch });
        }
        if start_epoch < self.start_epoch || end_epoch > self.end_epoch() {
            return Err(TraceError::WindowOutOfRange {
                start: start_epoch,
                end: end_epoch,
                trace_start: self.start_epoch,
                trace_end: self.end_epoch(),
            });
        }
        let step = self.step as i64;
        let (from, to) = (start_epoch - self.start_epoch, end_epoch - self.start_epoch);
        if from % step != 0 || to % step != 0 {
            return Err(TraceError::MisalignedWindow {
                start: start_epoch,
                end: end_epoch,
                step: self.step,
            });
        }
        Ok(Self {
            zone_label: self.zone_label.clone(),
            start_epoch,
            step: self.step,
            values: self.values[(from / step) as usize..(to / step) as usize].to_vec(),
        })
    }

    pub fn coefficient_of_variation(&self) -> Result<f64, TraceError> {
        coefficient_of_variation(&self.values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Writes the trace back out as `timestamp,intensity` CSV (RFC 3339 UTC).
    pub fn to_csv(&self, columns: &ColumnMap) -> String {
        let mut out = format!("{},{}\n", columns.timestamp, columns.intensity);
        for (i, v) in self.values.iter().enumerate() {
            let ts = self.start_epoch + (i as u64 * self.step) as i64;
            let dt = DateTime::from_timestamp(ts, 0).expect("epoch in chrono range");
            out.push_str(&format!("{},{}\n", dt.format("%Y-%m-%dT%H:%M:%SZ"), v));
        }
        out
    }
}

/// Parses a header-led CSV into a trace.
///
/// Rows must be in ascending timestamp order with a constant step, which is
/// inferred from the first two rows.
pub fn parse_trace(csv_text: &str, columns: &ColumnMap) -> Result<CarbonIntensityTrace, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| TraceError::Csv(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TraceError::MissingColumn(name.to_string()))
    };
    let ts_col = column(&columns.timestamp)?;
    let ci_col = column(&columns.intensity)?;

    let mut stamps: Vec<i64> = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| TraceError::Csv(e.to_string()))?;
        let raw_ts = record.get(ts_col).unwrap_or_default();
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| TraceError::Timestamp { row, value: raw_ts.to_string() })?;
        let raw_ci = record.get(ci_col).unwrap_or_default();
        let ci: f64 = raw_ci
            .parse()
            .map_err(|_| TraceError::Number { row, value: raw_ci.to_string() })?;
        if !ci.is_finite() {
            return Err(TraceError::Number { row, value: raw_ci.to_string() });
        }
        if ci < 0.0 {
            return Err(TraceError::NegativeIntensity { row, value: ci });
        }
        stamps.push(ts);
        values.push(ci);
    }

    let Some(&start) = stamps.first() else {
        return Err(TraceError::Empty);
    };
    let step = match stamps.get(1) {
        Some(&second) if second > start => (second - start) as u64,
        Some(&second) => return Err(TraceError::Gap { row: 2, expected: start + 1, found: second }),
        None => columns.expected_step.unwrap_or(DEFAULT_STEP_S),
    };
    if let Some(expected) = columns.expected_step {
        if step != expected {
            return Err(TraceError::Gap { row: 2, expected: start + expected as i64, found: stamps[1] });
        }
    }
    for (i, &ts) in stamps.iter().enumerate() {
        let expected = start + (i as u64 * step) as i64;
        if ts != expected {
            return Err(TraceError::Gap { row: i + 1, expected, found: ts });
        }
    }
    CarbonIntensityTrace::new("", start, step, values)
}

/// Parses ISO-8601 / RFC 3339 timestamps (with or without seconds, `Z` or a
/// numeric offset; naive values are taken as UTC) or raw epoch seconds.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(epoch) = s.parse::<i64>() {
        return Some(epoch);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    const NAIVE: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"];
    let naive = s.strip_suffix(['Z', 'z']).unwrap_or(s);
    for fmt in NAIVE {
        if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    const OFFSET: [&str; 3] = ["%Y-%m-%dT%H:%M%:z", "%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M%:z"];
    for fmt in OFFSET {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some(dt.timestamp());
        }
    }
    if let Ok(date) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(date.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_rows() -> CarbonIntensityTrace {
        parse_trace("ts,ci\n2024-01-01T00:00Z,380\n2024-01-01T01:00Z,350", &ColumnMap::new("ts", "ci"))
            .unwrap()
    }

    #[test]
    fn parses_two_hourly_rows() {
        let trace = two_rows();
        assert_eq!(trace.step(), 3600);
        assert_eq!(trace.values(), &[380.0, 350.0]);
        assert_eq!(trace.start_epoch(), 1_704_067_200);
    }

    #[test]
    fn gap_is_rejected() {
        let cols = ColumnMap::new("ts", "ci");
        let err = parse_trace("ts,ci\n2024-01-01T00:00Z,380\n2024-01-01T03:00Z,350", &cols).unwrap_err();
        assert!(matches!(err, TraceError::Gap { row: 2, .. }), "{err:?}");
        // Without a required step the first two rows define it.
        let free = cols.clone().with_expected_step(None);
        let trace = parse_trace("ts,ci\n2024-01-01T00:00Z,380\n2024-01-01T03:00Z,350", &free).unwrap();
        assert_eq!(trace.step(), 10_800);
        let err = parse_trace(
            "ts,ci\n2024-01-01T00:00Z,380\n2024-01-01T01:00Z,350\n2024-01-01T03:00Z,350",
            &ColumnMap::new("ts", "ci"),
        )
        .unwrap_err();
        assert!(matches!(err, TraceError::Gap { row: 3, .. }));
    }

    #[test]
    fn non_monotonic_is_rejected() {
        let err = parse_trace("ts,ci\n2024-01-01T01:00Z,380\n2024-01-01T00:00Z,350", &ColumnMap::new("ts", "ci"))
            .unwrap_err();
        assert!(matches!(err, TraceError::Gap { row: 2, .. }));
    }

    #[test]
    fn schema_and_value_errors() {
        let cols = ColumnMap::new("ts", "carbon");
        assert_eq!(
            parse_trace("ts,ci\n2024-01-01T00:00Z,380", &cols).unwrap_err(),
            TraceError::MissingColumn("carbon".into())
        );
        let err = parse_trace("ts,ci\n2024-01-01T00:00Z,-1", &ColumnMap::new("ts", "ci")).unwrap_err();
        assert!(matches!(err, TraceError::NegativeIntensity { row: 1, .. }));
        assert_eq!(parse_trace("ts,ci\n", &ColumnMap::new("ts", "ci")).unwrap_err(), TraceError::Empty);
    }

    #[test]
    fn week_of_rows() {
        let mut csv = String::from("datetime,carbon_intensity\n");
        for h in 0..168 {
            csv.push_str(&format!("{},{}\n", 1_704_067_200 + h * 3600, 300 + h));
        }
        let trace = parse_trace(&csv, &ColumnMap::default()).unwrap();
        assert_eq!(trace.len(), 168);
        assert_eq!(trace.span(), 604_800);
    }

    #[test]
    fn timestamp_flavours() {
        let want = Some(1_704_067_200);
        for s in [
            "2024-01-01T00:00:00Z",
            "2024-01-01T00:00Z",
            "2024-01-01 00:00:00",
            "2024-01-01T01:00:00+01:00",
            "2024-01-01T01:00+01:00",
            "2024-01-01 00:00:00.000",
            "2024-01-01",
            "1704067200",
        ] {
            assert_eq!(parse_timestamp(s), want, "{s}");
        }
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn zero_order_hold_lookup() {
        let trace = two_rows();
        assert_eq!(trace.intensity_at(0).unwrap(), 380.0);
        assert_eq!(trace.intensity_at(3599).unwrap(), 380.0);
        assert_eq!(trace.intensity_at(3600).unwrap(), 350.0);
        assert_eq!(trace.intensity_at(7200).unwrap_err(), TraceError::OutOfRange { t: 7200, span: 7200 });
    }

    #[test]
    fn watt_second_conversion() {
        assert_eq!(to_g_per_watt_second(3_600_000.0).unwrap().value(), 1.0);
        assert_eq!(to_g_per_watt_second(0.0).unwrap().value(), 0.0);
        let v = to_g_per_watt_second(400.0).unwrap().value();
        assert!(((v - 1.111_111_111e-4) / 1.111_111_111e-4).abs() < 1e-9);
        assert!(to_g_per_watt_second(-1.0).is_err());
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[500.0, 500.0, 500.0]).unwrap(), 0.0);
        assert!((coefficient_of_variation(&[400.0, 600.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(coefficient_of_variation(&[1.0]).unwrap(), 0.0);
        assert_eq!(coefficient_of_variation(&[]).unwrap_err(), TraceError::NoValues);
        assert_eq!(coefficient_of_variation(&[0.0, 0.0]).unwrap_err(), TraceError::ZeroMean);
    }

    #[test]
    fn window_slicing() {
        let year = CarbonIntensityTrace::hourly("x", (0..8784).map(f64::from).collect()).unwrap();
        let week = year.slice_window(3600 * 24, 3600 * 24 + 604_800).unwrap();
        assert_eq!(week.len(), 168);
        assert_eq!(week.values()[0], 24.0);
        assert_eq!(week.slice_window(week.start_epoch(), week.end_epoch()).unwrap(), week);
        assert!(matches!(year.slice_window(7200, 7200), Err(TraceError::EmptyWindow { .. })));
        assert!(matches!(year.slice_window(1800, 7200), Err(TraceError::MisalignedWindow { .. })));
        assert!(matches!(year.slice_window(-3600, 7200), Err(TraceError::WindowOutOfRange { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let trace = two_rows();
        let text = trace.to_csv(&ColumnMap::default());
        assert_eq!(parse_trace(&text, &ColumnMap::default()).unwrap(), trace);
    }

    proptest! {
        #[test]
        fn hold_is_constant_within_a_bucket(values in prop::collection::vec(0.0f64..2000.0, 1..48), t in 0u64..(48 * 3600)) {
            let trace = CarbonIntensityTrace::hourly("p", values.clone()).unwrap();
            prop_assume!(t < trace.span());
            let bucket_start = t - t % 3600;
            prop_assert_eq!(trace.intensity_at(t).unwrap(), trace.intensity_at(bucket_start).unwrap());
            prop_assert_eq!(trace.intensity_at(t).unwrap(), values[(t / 3600) as usize]);
        }

        #[test]
        fn conversion_round_trips(x in 0.0f64..1e7) {
            let back = to_g_per_watt_second(x).unwrap().value() * WS_PER_KWH;
            prop_assert!((back - x).abs() <= x * 4.0 * f64::EPSILON);
        }

        #[test]
        fn cv_is_scale_invariant(values in prop::collection::vec(1.0f64..1000.0, 1..64), k in 0.01f64..100.0) {
            let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
            let a = coefficient_of_variation(&values).unwrap();
            let b = coefficient_of_variation(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn slices_preserve_values(values in prop::collection::vec(0.0f64..2000.0, 2..64), a in 0usize..64, b in 0usize..64) {
            let n = values.len();
            let (lo, hi) = (a.min(b) % n, (a.max(b) % n) + 1);
            prop_assume!(lo < hi);
            let trace = CarbonIntensityTrace::hourly("p", values.clone()).unwrap();
            let s = trace.slice_window(lo as i64 * 3600, hi as i64 * 3600).unwrap();
            prop_assert_eq!(s.values(), &values[lo..hi]);
        }
    }
}
