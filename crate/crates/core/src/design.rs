use crate::error::{Error, Result};

/// Observed data for one fit: strictly increasing abscissae in `[0, 1]`,
/// responses, and positive case weights (`w_i = σ^{-2}(t_i)` up to scale).
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    t: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Design {
    /// Builds a design, sorting rows by `t` and validating.
    ///
    /// * `t` values must be finite, inside `[0, 1]`, and pairwise distinct;
    ///   duplicates are reported with their (post-sort) row indices so the
    ///   caller can pre-bin ties.
    /// * `w` defaults to all ones; weights must be finite and positive.
    pub fn new(t: Vec<f64>, y: Vec<f64>, w: Option<Vec<f64>>) -> Result<Self> {
        let n = t.len();
        if n == 0 {
            return Err(Error::invalid("design needs at least one observation"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!(
                "t has {n} rows but y has {}",
                y.len()
            )));
        }
        let w = w.unwrap_or_else(|| vec![1.0; n]);
        if w.len() != n {
            return Err(Error::invalid(format!(
                "t has {n} rows but w has {}",
                w.len()
            )));
        }
        for (i, &ti) in t.iter().enumerate() {
            if !ti.is_finite() || !(0.0..=1.0).contains(&ti) {
                return Err(Error::invalid(format!(
                    "t[{i}] = {ti} is outside [0, 1]; rescale the abscissae first"
                )));
            }
            if !y[i].is_finite() {
                return Err(Error::invalid(format!("y[{i}] = {} is not finite", y[i])));
            }
            if !w[i].is_finite() || w[i] <= 0.0 {
                return Err(Error::invalid(format!(
                    "w[{i}] = {} must be finite and positive",
                    w[i]
                )));
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| t[a].partial_cmp(&t[b]).unwrap());
        let t_sorted: Vec<f64> = order.iter().map(|&i| t[i]).collect();
        let y_sorted: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let w_sorted: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        for i in 1..n {
            if t_sorted[i] == t_sorted[i - 1] {
                return Err(Error::DuplicateAbscissae {
                    t: t_sorted[i],
                    first: i - 1,
                    second: i,
                });
            }
        }
        Ok(Design {
            t: t_sorted,
            y: y_sorted,
            w: w_sorted,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Same abscissae and responses, different weights.
    pub fn reweighted(&self, w: Vec<f64>) -> Result<Self> {
        Design::new(self.t.clone(), self.y.clone(), Some(w))
    }

    /// Order-insensitive content hash over the exact bit patterns, used to
    /// assert that competing methods see identical data.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for i in 0..self.t.len() {
            eat(self.t[i]);
            eat(self.y[i]);
            eat(self.w[i]);
        }
        h
    }

    /// True when the abscissae are equispaced up to a 10% relative gap
    /// deviation, in which case the design density is taken as exactly 1.
    pub fn is_equispaced(&self) -> bool {
        let n = self.t.len();
        if n < 3 {
            return true;
        }
        let mean_gap = (self.t[n - 1] - self.t[0]) / (n - 1) as f64;
        if mean_gap <= 0.0 {
            return false;
        }
        self.t
            .windows(2)
            .all(|p| ((p[1] - p[0]) - mean_gap).abs() < 0.1 * mean_gap)
    }
}
