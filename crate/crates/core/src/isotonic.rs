//! Decreasing isotonic regression (pool adjacent violators) and the
//! lower-bounded isotonic MLE of a decreasing multinomial pmf.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pmf::OrderedPmf;

/// A level set `[start, end)` of an isotonic fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub fitted: Vec<f64>,
    pub blocks: Vec<Block>,
}

/// Result of [`isobound`]. The last `pinned` coordinates sit exactly at the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedFit {
    pub fitted: Vec<f64>,
    pub bound: f64,
    pub pinned: usize,
}

/// Weighted least-squares projection onto non-increasing sequences.
pub fn isoreg_decreasing(y: &[f64], w: &[f64]) -> Result<IsotonicFit> {
    if y.len() != w.len() {
        return invalid(format!("{} values but {} weights", y.len(), w.len()));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return invalid(format!("non-finite value {bad}"));
    }
    if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return invalid(format!("weights must be positive and finite, got {bad}"));
    }
    Ok(pava(y, w))
}

/// Unit-weight decreasing regression.
pub fn isoreg_decreasing_unit(y: &[f64]) -> Result<IsotonicFit> {
    isoreg_decreasing(y, &vec![1.0; y.len()])
}

struct Pool {
    start: usize,
    weighted_sum: f64,
    weight: f64,
}

impl Pool {
    fn mean(&self) -> f64 {
        self.weighted_sum / self.weight
    }
}

fn pava(y: &[f64], w: &[f64]) -> IsotonicFit {
    let mut stack: Vec<Pool> = Vec::with_capacity(y.len());
    for (i, (&yi, &wi)) in y.iter().zip(w).enumerate() {
        let mut cur = Pool {
            start: i,
            weighted_sum: wi * yi,
            weight: wi,
        };
        // A decreasing fit is violated when an earlier block sits below a later one.
        while let Some(prev) = stack.last() {
            if prev.mean() < cur.mean() {
                let prev = stack.pop().unwrap();
                cur = Pool {
                    start: prev.start,
                    weighted_sum: prev.weighted_sum + cur.weighted_sum,
                    weight: prev.weight + cur.weight,
                };
            } else {
                break;
            }
        }
        stack.push(cur);
    }

    let mut fitted = vec![0.0; y.len()];
    let mut blocks = Vec::with_capacity(stack.len());
    for (b, pool) in stack.iter().enumerate() {
        let end = stack.get(b + 1).map_or(y.len(), |next| next.start);
        let value = pool.mean();
        fitted[pool.start..end].fill(value);
        blocks.push(Block {
            start: pool.start,
            end,
            value,
        });
    }
    IsotonicFit { fitted, blocks }
}

/// Maximizes `sum_i y_i log q_i` over non-increasing `q` with `q_k >= c` and
/// `sum q = sum y`.
///
/// Starts from the unrestricted decreasing fit. While the last free
/// coordinate falls below `c` it is pinned at `c`, the free prefix shrinks by
/// one, and the prefix is refitted and rescaled so that the prefix carries the
/// mass left after the pinned coordinates. At most `y.len()` pins happen.
pub fn isobound(y: &[f64], c: f64) -> Result<BoundedFit> {
    if y.is_empty() {
        return invalid("isobound needs at least one value");
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return invalid(format!(
            "isobound needs non-negative finite values, got {bad}"
        ));
    }
    if !c.is_finite() || c < 0.0 {
        return invalid(format!(
            "lower bound must be a non-negative number, got {c}"
        ));
    }
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return invalid("isobound needs at least one positive value");
    }
    let limit = total / y.len() as f64;
    if c >= limit {
        return Err(Error::InfeasibleBound { c, limit });
    }

    let below = |v: f64| v < c - 1e-12 * c;
    let mut fitted = pava(y, &vec![1.0; y.len()]).fitted;
    let mut free = y.len();
    let mut input_mass = total;
    let mut target_mass = total;
    while free > 0 && below(fitted[free - 1]) {
        input_mass -= y[free - 1];
        target_mass -= c;
        fitted[free - 1] = c;
        free -= 1;
        if free == 0 {
            break;
        }
        let prefix = &y[..free];
        if input_mass > 0.0 {
            let refit = pava(prefix, &vec![1.0; free]).fitted;
            let scale = target_mass / input_mass;
            for (f, r) in fitted.iter_mut().zip(refit) {
                *f = r * scale;
            }
        } else {
            // No observed mass left in the prefix: any ordered split is optimal.
            fitted[..free].fill(target_mass / free as f64);
        }
    }
    // Coordinates left free only within the comparison tolerance of c.
    for f in &mut fitted[..free] {
        *f = f.max(c);
    }
    Ok(BoundedFit {
        pinned: y.len() - free,
        fitted,
        bound: c,
    })
}

/// Decreasing multinomial MLE with every probability at least `c`.
pub fn bounded_multinomial_mle(x: &[u64], c: f64) -> Result<OrderedPmf> {
    let n: u64 = x.iter().sum();
    if n == 0 {
        return invalid("bounded multinomial MLE needs at least one observation");
    }
    let freq: Vec<f64> = x.iter().map(|&v| v as f64 / n as f64).collect();
    let fit = isobound(&freq, c)?;
    OrderedPmf::proper(fit.fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn pava_examples() {
        let f = isoreg_decreasing_unit(&[1.0, 2.0]).unwrap();
        assert_eq!(f.fitted, vec![1.5, 1.5]);
        assert_eq!(f.blocks.len(), 1);

        let f = isoreg_decreasing_unit(&[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(f.fitted, vec![3.0, 2.0, 1.0]);

        let f = isoreg_decreasing_unit(&[0.5, 0.3, 0.05, 0.15]).unwrap();
        assert_abs_diff_eq!(f.fitted[2], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(f.fitted[3], 0.1, epsilon = 1e-15);
        assert_eq!(&f.fitted[..2], &[0.5, 0.3]);
    }

    #[test]
    fn pava_rejects_bad_input() {
        assert!(isoreg_decreasing(&[1.0], &[1.0, 2.0]).is_err());
        assert!(isoreg_decreasing(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(isoreg_decreasing(&[f64::NAN], &[1.0]).is_err());
        assert!(isoreg_decreasing(&[], &[]).unwrap().fitted.is_empty());
    }

    #[test]
    fn pava_weighted_block() {
        let f = isoreg_decreasing(&[1.0, 4.0], &[3.0, 1.0]).unwrap();
        assert_abs_diff_eq!(f.fitted[0], 1.75);
        assert_eq!(
            f.blocks,
            vec![Block {
                start: 0,
                end: 2,
                value: 1.75
            }]
        );
    }

    #[test]
    fn isobound_bound_inactive() {
        let fit = isobound(&[0.5, 0.3, 0.05, 0.15], 0.1).unwrap();
        assert_eq!(fit.pinned, 0);
        for (a, b) in fit.fitted.iter().zip([0.5, 0.3, 0.1, 0.1]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn isobound_two_pins() {
        let fit = isobound(&[0.6, 0.3, 0.1, 0.0], 0.1).unwrap();
        assert_eq!(fit.pinned, 2);
        for (a, b) in fit.fitted.iter().zip([8.0 / 15.0, 4.0 / 15.0, 0.1, 0.1]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn isobound_identity_when_feasible() {
        let y = [0.4, 0.3, 0.2, 0.1];
        let fit = isobound(&y, 0.05).unwrap();
        assert_eq!(fit.fitted, y.to_vec());
        assert_eq!(fit.pinned, 0);
    }

    #[test]
    fn isobound_errors() {
        assert!(matches!(
            isobound(&[0.5, 0.5], 0.5),
            Err(Error::InfeasibleBound { .. })
        ));
        assert!(matches!(
            isobound(&[0.5, -0.1], 0.1),
            Err(Error::InvalidInput(_))
        ));
        assert!(isobound(&[0.0, 0.0], 0.0).is_err());
        assert!(isobound(&[], 0.1).is_err());
    }

    #[test]
    fn isobound_all_mass_on_first() {
        let fit = isobound(&[1.0, 0.0, 0.0, 0.0], 0.2).unwrap();
        assert_eq!(fit.pinned, 3);
        assert_abs_diff_eq!(fit.fitted[0], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn bounded_mle_examples() {
        let p = bounded_multinomial_mle(&[3, 1, 1, 1], 0.05).unwrap();
        for (a, b) in p.mass().iter().zip([0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }

        let p = bounded_multinomial_mle(&[4, 0], 0.1).unwrap();
        assert_abs_diff_eq!(p.mass()[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mass()[1], 0.1, epsilon = 1e-12);
        // 1-D line search over q2 in [0.1, 0.5] of 4 log(1 - q2).
        let best = (0..=4000)
            .map(|i| 0.1 + 0.4 * i as f64 / 4000.0)
            .max_by(|a, b| (4.0 * (1.0 - a).ln()).total_cmp(&(4.0 * (1.0 - b).ln())))
            .unwrap();
        assert_abs_diff_eq!(best, p.mass()[1], epsilon = 1e-12);

        let x = [5u64, 1, 3, 0, 2];
        let tiny = bounded_multinomial_mle(&x, 1e-12).unwrap();
        let freq: Vec<f64> = x.iter().map(|&v| v as f64 / 11.0).collect();
        let free = isoreg_decreasing_unit(&freq).unwrap();
        for (a, b) in tiny.mass().iter().zip(&free.fitted) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-11);
        }
        assert!(bounded_multinomial_mle(&[0, 0], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn pava_is_idempotent_and_sum_preserving(y in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let f = isoreg_decreasing_unit(&y).unwrap();
            prop_assert!(f.fitted.windows(2).all(|w| w[0] >= w[1]));
            let again = isoreg_decreasing_unit(&f.fitted).unwrap();
            prop_assert_eq!(&again.fitted, &f.fitted);
            let s0: f64 = y.iter().sum();
            let s1: f64 = f.fitted.iter().sum();
            prop_assert!((s0 - s1).abs() < 1e-10);
            for b in &f.blocks {
                let mean = y[b.start..b.end].iter().sum::<f64>() / (b.end - b.start) as f64;
                prop_assert!((mean - b.value).abs() < 1e-12);
            }
        }

        #[test]
        fn isobound_feasible_and_monotone_in_bound(
            y in prop::collection::vec(0.0f64..1.0, 2..10),
            frac_lo in 0.01f64..0.99,
            frac_hi in 0.01f64..0.99,
        ) {
            let total: f64 = y.iter().sum();
            prop_assume!(total > 1e-6);
            let limit = total / y.len() as f64;
            let (lo, hi) = if frac_lo <= frac_hi { (frac_lo, frac_hi) } else { (frac_hi, frac_lo) };
            let a = isobound(&y, lo * limit).unwrap();
            let b = isobound(&y, hi * limit).unwrap();
            for fit in [&a, &b] {
                prop_assert!(fit.fitted.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(*fit.fitted.last().unwrap() >= fit.bound - 1e-12);
                prop_assert!((fit.fitted.iter().sum::<f64>() - total).abs() < 1e-10);
                prop_assert!(fit.pinned <= y.len());
            }
            prop_assert!(b.pinned >= a.pinned);
        }
    }
}
