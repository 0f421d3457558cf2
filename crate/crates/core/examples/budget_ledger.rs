//! Greedy allowances on a cumulative budget: a quiet hour builds surplus
//! that a busy hour then spends, and spending never runs ahead of accrual.
//!
//! ```bash
//! cargo run --example budget_ledger
//! ```

use ebsim::EmissionsBudget;

fn main() {
    let mut budget = EmissionsBudget::new(120.0, 7200).unwrap();
    let base = budget.base_rate();
    println!("base rate {base:.6} g/s");
    for t in 0..7200u64 {
        let allowance = budget.greedy_allowance(t).unwrap();
        // Quiet first hour at a fifth of the base rate, then a workload that
        // would like three times the base rate.
        let wanted = if t < 3600 { 0.2 * base } else { 3.0 * base };
        budget.record_emission(wanted.min(allowance)).unwrap();
        if t % 600 == 0 || t == 7199 {
            let s = budget.state(t + 1);
            let tidy = |g: f64| (g * 1000.0).round() / 1000.0 + 0.0;
            println!(
                "t={t:>5}s allowance {allowance:>7.3} g  spent {:>7.3} g  surplus {:>6.3} g  remaining {:>7.3} g",
                tidy(budget.spent()),
                tidy(s.surplus),
                tidy(s.remaining)
            );
        }
    }
    assert!(budget.spent() <= budget.total() + 1e-9);
}
