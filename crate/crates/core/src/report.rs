//! Summary statistics, emission costs and time-bucketed series.

use std::fmt::Write as _;

use thiserror::Error;

use crate::carbon_trace::{coefficient_of_variation, TraceError, WS_PER_KWH};
use crate::engine::StepRecord;
use crate::sum::CompensatedSum;

/// Carbon prices (EUR per tonne CO2eq) reported by default.
pub const DEFAULT_PRICES: [f64; 3] = [80.0, 150.0, 700.0];

/// Six hours, the bucket used for the time-series plots.
pub const SIX_HOURS_S: u64 = 21_600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("report has no steps")]
    Empty,
    #[error("bucket size must be positive")]
    Bucket,
    #[error("carbon price must be non-negative, got {0}")]
    Price(f64),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub label: String,
    pub dataset: String,
    pub policy: String,
    pub node_names: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub finished_tasks: u64,
    pub dropped_tasks: u64,
    pub pending_tasks: u64,
    pub admitted_tasks: u64,
    pub budget_total: Option<f64>,
    /// Carbon intensities of the trace buckets the horizon touched.
    pub trace_values: Vec<f64>,
    pub trace_step: u64,
}

impl SimulationReport {
    pub fn node_name(&self, step: &StepRecord) -> Option<&str> {
        step.node.map(|i| self.node_names[usize::from(i)].as_str())
    }

    pub fn total_emissions_g(&self) -> f64 {
        self.steps.iter().map(|s| s.emission).collect::<CompensatedSum>().value()
    }

    pub fn energy_kwh(&self) -> f64 {
        self.steps.iter().map(|s| s.power).collect::<CompensatedSum>().value() / WS_PER_KWH
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub policy: String,
    pub dataset: String,
    pub power_mean_w: f64,
    pub power_median_w: f64,
    pub energy_kwh: f64,
    pub emissions_mean_mg: f64,
    pub emissions_median_mg: f64,
    pub emissions_total_kg: f64,
    /// `(price, cost)` pairs in EUR, ascending by price.
    pub costs_eur: Vec<(f64, f64)>,
    pub finished_tasks: u64,
}

/// Cost in EUR of `total_kg` at `price` EUR per tonne.
pub fn emission_cost(total_kg: f64, price_per_tonne: f64) -> f64 {
    total_kg / 1000.0 * price_per_tonne
}

/// Half-up rounding to cents, for display only.
pub fn round_cents(eur: f64) -> f64 {
    (eur * 100.0).round() / 100.0
}

fn mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Table statistics over every step of the horizon, suspended steps included.
pub fn summarize(report: &SimulationReport, prices: &[f64]) -> Result<SummaryRow, ReportError> {
    if report.steps.is_empty() {
        return Err(ReportError::Empty);
    }
    if let Some(&p) = prices.iter().find(|p| !(**p >= 0.0)) {
        return Err(ReportError::Price(p));
    }
    let power: Vec<f64> = report.steps.iter().map(|s| s.power).collect();
    let emission_mg: Vec<f64> = report.steps.iter().map(|s| s.emission * 1000.0).collect();
    let total_kg = report.total_emissions_g() / 1000.0;

    let mut sorted_prices = prices.to_vec();
    sorted_prices.sort_by(f64::total_cmp);
    Ok(SummaryRow {
        label: report.label.clone(),
        policy: report.policy.clone(),
        dataset: report.dataset.clone(),
        power_mean_w: mean(&power),
        power_median_w: median(&power),
        energy_kwh: report.energy_kwh(),
        emissions_mean_mg: mean(&emission_mg),
        emissions_median_mg: median(&emission_mg),
        emissions_total_kg: total_kg,
        costs_eur: sorted_prices.iter().map(|&p| (p, emission_cost(total_kg, p))).collect(),
        finished_tasks: report.finished_tasks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    Sum,
    Mean,
}

/// Buckets a per-second series; bucket `i` covers `[i*bucket, (i+1)*bucket)`
/// and the last one may be partial (its mean uses its own length).
pub fn aggregate(series: &[f64], bucket: u64, mode: AggregateMode) -> Result<Vec<f64>, ReportError> {
    if bucket == 0 {
        return Err(ReportError::Bucket);
    }
    Ok(series
        .chunks(bucket as usize)
        .map(|chunk| {
            let s = chunk.iter().copied().collect::<CompensatedSum>().value();
            match mode {
                AggregateMode::Sum => s,
                AggregateMode::Mean => s / chunk.len() as f64,
            }
        })
        .collect())
}

/// Coefficient of variation of the scenario's carbon-intensity window.
pub fn trace_cv(report: &SimulationReport) -> Result<f64, ReportError> {
    Ok(coefficient_of_variation(&report.trace_values)?)
}

fn fmt_num(out: &mut String, v: f64, decimals: usize) {
    let _ = write!(out, ",{v:.decimals$}");
}

/// Header of the summary CSV for the given prices.
pub fn summary_csv_header(prices: &[f64]) -> String {
    let mut sorted = prices.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut h = String::from(
        "scenario,dataset,power_mean_w,power_median_w,energy_kwh,emissions_mean_mg,emissions_median_mg,emissions_total_kg",
    );
    for p in sorted {
        let _ = write!(h, ",cost_eur_{p}");
    }
    h.push_str(",finished_tasks");
    h
}

/// Results table as CSV, one row per scenario, in the order given.
pub fn summary_csv(rows: &[SummaryRow], prices: &[f64]) -> String {
    let mut out = summary_csv_header(prices);
    out.push('\n');
    for r in rows {
        out.push_str(&r.policy);
        out.push(',');
        out.push_str(&r.dataset);
        fmt_num(&mut out, r.power_mean_w, 4);
        fmt_num(&mut out, r.power_median_w, 4);
        fmt_num(&mut out, r.energy_kwh, 4);
        fmt_num(&mut out, r.emissions_mean_mg, 4);
        fmt_num(&mut out, r.emissions_median_mg, 4);
        fmt_num(&mut out, r.emissions_total_kg, 6);
        for &(_, cost) in &r.costs_eur {
            fmt_num(&mut out, round_cents(cost), 2);
        }
        let _ = writeln!(out, ",{}", r.finished_tasks);
    }
    out
}

/// Per-second CSV: `t,action,node,power_w,emission_g,allowance_g,completions,drops,utilization`.
pub fn steps_csv(report: &SimulationReport) -> String {
    let mut out = String::with_capacity(report.steps.len() * 64);
    out.push_str("t,action,node,power_w,emission_g,allowance_g,completions,drops,utilization\n");
    for s in &report.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.t,
            s.action.as_str(),
            report.node_name(s).unwrap_or(""),
            s.power,
            s.emission,
            s.allowance,
            s.completions,
            s.drops,
            s.utilization
        );
    }
    out
}

/// Bucketed series for plotting: mean power, summed and mean emissions,
/// finished and dropped tasks per bucket.
pub fn buckets_csv(report: &SimulationReport, bucket: u64) -> Result<String, ReportError> {
    let col = |f: fn(&StepRecord) -> f64| report.steps.iter().map(f).collect::<Vec<_>>();
    let power = aggregate(&col(|s| s.power), bucket, AggregateMode::Mean)?;
    let em_sum = aggregate(&col(|s| s.emission), bucket, AggregateMode::Sum)?;
    let em_mean = aggregate(&col(|s| s.emission * 1000.0), bucket, AggregateMode::Mean)?;
    let done = aggregate(&col(|s| f64::from(s.completions)), bucket, AggregateMode::Sum)?;
    let dropped = aggregate(&col(|s| f64::from(s.drops)), bucket, AggregateMode::Sum)?;
    let mut out = String::from("bucket,start_s,power_mean_w,emissions_sum_g,emissions_mean_mg,finished_tasks,dropped_tasks\n");
    for i in 0..power.len() {
        let _ = writeln!(
            out,
            "{i},{},{:.6},{:.9},{:.6},{},{}",
            i as u64 * bucket,
            power[i],
            em_sum[i],
            em_mean[i],
            done[i],
            dropped[i]
        );
    }
    Ok(out)
}

/// Running ledger: emission, cumulative spend and, for budget runs, the
/// remaining amount and surplus after each second.
pub fn ledger_csv(report: &SimulationReport) -> String {
    let mut out = String::from("t,emission_g,spent_g,remaining_g,surplus_g\n");
    let mut spent = CompensatedSum::new();
    let horizon = report.steps.len() as f64;
    for s in &report.steps {
        spent.add(s.emission);
        match report.budget_total {
            Some(total) => {
                let accrued = total / horizon * (s.t + 1) as f64;
                let _ = writeln!(out, "{},{},{},{},{}", s.t, s.emission, spent.value(), spent.headroom(total), spent.headroom(accrued));
            }
            None => {
                let _ = writeln!(out, "{},{},{},,", s.t, s.emission, spent.value());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ActionKind;
    use proptest::prelude::*;

    fn report_with_power(power: &[f64], ci_ws: f64) -> SimulationReport {
        SimulationReport {
            label: "t".into(),
            dataset: "d".into(),
            policy: "p".into(),
            node_names: vec!["medium".into()],
            steps: power
                .iter()
                .enumerate()
                .map(|(t, &p)| StepRecord {
                    t: t as u64,
                    action: ActionKind::NoAction,
                    node: Some(0),
                    utilization: 0.0,
                    power: p,
                    emission: p * ci_ws,
                    allowance: f64::INFINITY,
                    completions: 1,
                    drops: 0,
                })
                .collect(),
            finished_tasks: power.len() as u64,
            dropped_tasks: 0,
            pending_tasks: 0,
            admitted_tasks: power.len() as u64,
            budget_total: None,
            trace_values: vec![400.0, 600.0],
            trace_step: 3600,
        }
    }

    #[test]
    fn cost_examples() {
        assert!((emission_cost(14.02, 700.0) - 9.82).abs() <= 0.01);
        assert!((emission_cost(40.95, 80.0) - 3.28).abs() <= 0.01);
        assert!((emission_cost(10.05, 150.0) - 1.51).abs() <= 0.01);
        for p in DEFAULT_PRICES {
            assert_eq!(emission_cost(0.0, p), 0.0);
        }
        assert_eq!(round_cents(9.814), 9.81);
        assert_eq!(round_cents(3.276), 3.28);
    }

    #[test]
    fn constant_power_week_energy() {
        let r = report_with_power(&vec![338.93; 604_800], 0.0);
        let row = summarize(&r, &DEFAULT_PRICES).unwrap();
        assert!((row.energy_kwh - 56.94).abs() <= 0.01, "{}", row.energy_kwh);
        assert_eq!(row.power_median_w, 338.93);
        assert!((row.power_mean_w - 338.93).abs() < 1e-9);
    }

    #[test]
    fn summary_statistics() {
        let r = report_with_power(&[0.0, 100.0, 200.0, 500.0], 1e-4);
        let row = summarize(&r, &[700.0, 80.0]).unwrap();
        assert_eq!(row.power_mean_w, 200.0);
        assert_eq!(row.power_median_w, 150.0);
        assert!((row.emissions_mean_mg - 20.0).abs() < 1e-12);
        assert!((row.emissions_total_kg - 8e-5).abs() < 1e-15);
        assert_eq!(row.costs_eur.iter().map(|c| c.0).collect::<Vec<_>>(), [80.0, 700.0]);
        assert_eq!(row.finished_tasks, 4);

        let empty = report_with_power(&[], 0.0);
        assert_eq!(summarize(&empty, &DEFAULT_PRICES).unwrap_err(), ReportError::Empty);
        assert_eq!(summarize(&r, &[-1.0]).unwrap_err(), ReportError::Price(-1.0));
    }

    #[test]
    fn aggregate_examples() {
        let series = vec![2.5; 604_800];
        let means = aggregate(&series, SIX_HOURS_S, AggregateMode::Mean).unwrap();
        assert_eq!(means.len(), 28);
        assert!(means.iter().all(|&m| m == 2.5));
        let ones = vec![1.0; 1000];
        assert_eq!(aggregate(&ones, 1000, AggregateMode::Sum).unwrap(), [1000.0]);
        assert_eq!(aggregate(&ones, 0, AggregateMode::Sum).unwrap_err(), ReportError::Bucket);
        let partial = aggregate(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, AggregateMode::Mean).unwrap();
        assert_eq!(partial, [1.5, 3.5, 5.0]);
    }

    #[test]
    fn cv_of_report_window() {
        let mut r = report_with_power(&[1.0], 0.0);
        assert!((trace_cv(&r).unwrap() - 0.2).abs() < 1e-15);
        r.trace_values = vec![300.0; 5];
        assert_eq!(trace_cv(&r).unwrap(), 0.0);
    }

    #[test]
    fn csv_shapes() {
        let r = report_with_power(&[100.0, 200.0, 300.0], 1e-4);
        let row = summarize(&r, &DEFAULT_PRICES).unwrap();
        let csv = summary_csv(&[row], &DEFAULT_PRICES);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scenario,dataset,power_mean_w,power_median_w,energy_kwh,emissions_mean_mg,emissions_median_mg,emissions_total_kg,cost_eur_80,cost_eur_150,cost_eur_700,finished_tasks");
        assert_eq!(lines[1].split(',').count(), 12);
        assert_eq!(steps_csv(&r).lines().count(), 4);
        assert_eq!(buckets_csv(&r, 2).unwrap().lines().count(), 3);
        assert_eq!(ledger_csv(&r).lines().count(), 4);
    }

    proptest! {
        #[test]
        fn cost_is_linear(kg in 0.0f64..100.0, a in 0.0f64..1000.0, b in 0.0f64..1000.0, k in 0.0f64..10.0) {
            let lhs = emission_cost(kg, a + b);
            prop_assert!((lhs - (emission_cost(kg, a) + emission_cost(kg, b))).abs() <= 1e-12 * lhs.max(1.0));
            prop_assert!((emission_cost(kg * k, a) - k * emission_cost(kg, a)).abs() <= 1e-12 * (k * emission_cost(kg, a)).max(1.0));
        }

        #[test]
        fn sum_buckets_conserve_total(values in prop::collection::vec(0.0f64..1000.0, 1..500), bucket in 1u64..100) {
            let buckets = aggregate(&values, bucket, AggregateMode::Sum).unwrap();
            prop_assert_eq!(buckets.len() as u64, (values.len() as u64).div_ceil(bucket));
            let total: CompensatedSum = values.iter().copied().collect();
            let bucket_total: CompensatedSum = buckets.iter().copied().collect();
            prop_assert!((total.value() - bucket_total.value()).abs() <= 1e-9 * total.value().max(1.0));
        }

        #[test]
        fn median_of_equal_values(v in 0.0f64..1e4, n in 1usize..200) {
            let r = report_with_power(&vec![v; n], 1e-4);
            let row = summarize(&r, &DEFAULT_PRICES).unwrap();
            prop_assert_eq!(row.power_median_w, v);
            prop_assert!(row.power_mean_w >= 0.0);
        }
    }
}
