//! Small numerical helpers shared across modules.

use num_complex::Complex64 as C64;

/// Neumaier-compensated accumulator for `f64` sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Sum that does not depend on the order of its terms: the terms are sorted
/// before a compensated summation, so any relabeling of the summands gives a
/// bit-identical result.
pub fn order_independent_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    compensated_sum(values)
}

/// Relative deviation `|a - b| / scale`, with `scale` floored at the smallest
/// positive normal so that two zeros compare equal.
pub fn relative_deviation(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(f64::MIN_POSITIVE)
}

pub fn norm_sq(values: &[C64]) -> f64 {
    compensated_sum(values.iter().map(|z| z.norm_sqr()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_lost_low_bits() {
        let naive: f64 = [1.0, 1e100, 1.0, -1e100].iter().sum();
        assert_eq!(naive, 0.0);
        assert_eq!(compensated_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }

    #[test]
    fn order_independent_sum_is_permutation_invariant() {
        let a = vec![0.1, 0.7, 1e-9, 3.3, -2.2];
        let mut b = a.clone();
        b.reverse();
        b.swap(0, 2);
        assert_eq!(order_independent_sum(a).to_bits(), order_independent_sum(b).to_bits());
    }
}
