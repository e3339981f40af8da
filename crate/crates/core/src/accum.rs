//! Compensated summation.
//!
//! The doubly-cumulative sums in the optimality checks subtract quantities of
//! similar magnitude, so plain left-to-right summation loses the digits the
//! checks care about. [`Neumaier`] carries a running compensation term.

#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a sequence.
pub fn sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = Neumaier::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Running sums `out[i] = xs[0] + ... + xs[i]`.
pub fn cumsum(xs: &[f64]) -> Vec<f64> {
    let mut acc = Neumaier::new();
    xs.iter()
        .map(|&x| {
            acc.add(x);
            acc.value()
        })
        .collect()
}

/// `out[i] = sum_{y < i} sum_{z <= y} xs[z]`, for `i = 0..=xs.len()`.
///
/// With `xs` indexed from the window start `r`, `out[i]` is the doubly-cumulative
/// sum evaluated at `x = r + i`; `out[0]` is the empty sum.
pub fn double_cumsum(xs: &[f64]) -> Vec<f64> {
    let mut inner = Neumaier::new();
    let mut outer = Neumaier::new();
    let mut out = Vec::with_capacity(xs.len() + 1);
    out.push(0.0);
    for &x in xs {
        inner.add(x);
        outer.add(inner.value());
        out.push(outer.value());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensates_cancellation() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(xs), 2.0);
    }

    #[test]
    fn double_cumsum_small() {
        // x = r: 0; x = r+1: 1; x = r+2: 1 + 3; x = r+3: 1 + 3 + 6
        assert_eq!(double_cumsum(&[1.0, 2.0, 3.0]), vec![0.0, 1.0, 4.0, 10.0]);
    }
}
