//! Compensated floating-point accumulation.

/// Neumaier-compensated running sum.
///
/// Week-long runs add ~600k terms around 1e-2 g; plain `+=` drifts by more
/// than the 1e-9 g tolerances the ledger promises.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    hi: f64,
    lo: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { hi: 0.0, lo: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }

    /// `limit - self`, evaluated without rounding the sum to a single f64
    /// first. Accurate even when `limit` and the sum are large and close.
    pub fn headroom(&self, limit: f64) -> f64 {
        (limit - self.hi) - self.lo
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beats_naive_on_many_small_terms() {
        let term = 10080.0 / 604800.0;
        let compensated: CompensatedSum = std::iter::repeat_n(term, 604_800).collect();
        assert!((compensated.value() - 10080.0).abs() < 1e-9);
    }

    #[test]
    fn headroom_is_exact_near_the_limit() {
        let mut s = CompensatedSum::new();
        s.add(10_000.0);
        s.add(1e-13);
        let room = s.headroom(10_000.0);
        assert!((room + 1e-13).abs() < 1e-20);
    }
}
