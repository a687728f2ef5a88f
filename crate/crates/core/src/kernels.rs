//! Closed-form equivalent kernels of the spline estimator.
//!
//! For the uniform penalty, the order-`m` smoothing spline acts
//! asymptotically as a convolution against a symmetric kernel `L` whose
//! Fourier transform is `1 / (1 + ω^{2m})`. `L` integrates to one, its
//! moments of order `1..=2m-1` vanish, and it decays exponentially at a
//! rate equal to the smallest real part among the roots of `z^{2m} = -1`
//! in the right half plane (rate 1 for m=1 down to sin(π/8) ≈ 0.38 for
//! m=4).
//!
//! For a spatially varying penalty `ρ(t)`, design density `q(t)`, and
//! noise-to-density ratio `r(t) = σ²(t)/q(t)`, the same kernel applies
//! after warping time by
//!
//! ```text
//! Q(t) = ∫_0^t { r(s) ρ(s) }^{-1/(2m)} ds ,
//! ```
//!
//! giving the leading-order weight function
//! `J(t, s) = β Q'(s) L( β |Q(t) − Q(s)| )` with `β = λ^{-1/(2m)}`.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quad;
use crate::rkhs::PiecewisePenalty;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn check_order(m: usize) -> Result<()> {
    if (1..=4).contains(&m) {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder { m })
    }
}

/// Evaluates the equivalent kernel `L` for penalty order `m` at `t`.
///
/// The kernel is even; only `|t|` matters. Supported orders are 1..=4.
pub fn eval_l(m: usize, t: f64) -> Result<f64> {
    check_order(m)?;
    let t = t.abs();
    let value = match m {
        1 => 0.5 * (-t).exp(),
        2 => {
            let x = t / SQRT_2;
            0.5 / SQRT_2 * (-x).exp() * (x.cos() + x.sin())
        }
        3 => {
            let x = 3f64.sqrt() * t / 2.0;
            (-t).exp() / 6.0 + (-t / 2.0).exp() * (x.cos() / 6.0 + 3f64.sqrt() / 6.0 * x.sin())
        }
        4 => {
            // cos(π/8) and sin(π/8); the four decaying characteristic roots
            // of z^8 = -1 are -a ± ib and -b ± ia.
            let a = (std::f64::consts::PI / 8.0).cos();
            let b = (std::f64::consts::PI / 8.0).sin();
            0.25 * (-a * t).exp() * (a * (b * t).cos() + b * (b * t).sin())
                + 0.25 * (-b * t).exp() * (b * (a * t).cos() + a * (a * t).sin())
        }
        _ => unreachable!(),
    };
    Ok(value)
}

/// Exponential decay rate of `L` for order `m`: `L(t) = O(e^{-rate·|t|})`.
///
/// Truncation half-widths for moment quadrature must grow as the rate
/// falls; see [`moment`].
pub fn decay_rate(m: usize) -> Result<f64> {
    check_order(m)?;
    Ok(match m {
        1 => 1.0,
        2 => 1.0 / SQRT_2,
        3 => 0.5,
        4 => (std::f64::consts::PI / 8.0).sin(),
        _ => unreachable!(),
    })
}

/// `L0 = ∫ L²(t) dt`, the variance constant of the kernel.
///
/// Computed once per order by adaptive quadrature and cached.
pub fn l0(m: usize) -> Result<f64> {
    check_order(m)?;
    static CACHE: [OnceLock<f64>; 4] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    Ok(*CACHE[m - 1].get_or_init(|| {
        let rate = decay_rate(m).expect("order validated");
        // L² decays at 2·rate; e^{-48} leaves the tail far below 1e-14.
        let upper = 24.0 / rate;
        let f = |t: f64| {
            let v = eval_l(m, t).expect("order validated");
            v * v
        };
        2.0 * quad::adaptive_simpson(&f, 0.0, upper, 1e-14)
    }))
}

/// `∫_{-hw}^{hw} t^k L(t) dt` by composite Simpson with spacing ≈ 0.04.
///
/// `half_width` must be large enough that the neglected tail
/// `∫_{hw}^∞ t^k e^{-rate·t} dt` is below the accuracy you need; the decay
/// rate falls with `m` (see [`decay_rate`]), so higher orders need wider
/// windows (hw = 40 suffices only for m ≤ 2; use ≥ 80 for m = 3 and
/// ≥ 120 for m = 4 when k approaches 2m−1).
///
/// The rule pairs the nodes `±t` so odd-`k` moments cancel exactly.
pub fn moment(m: usize, k: usize, half_width: f64) -> Result<f64> {
    check_order(m)?;
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::invalid(format!(
            "half_width = {half_width} must be positive and finite"
        )));
    }
    let half_panels = (12.5 * half_width).ceil() as usize; // h ≈ 0.04
    let h = half_width / (2 * half_panels) as f64;
    let n = 4 * half_panels + 1; // total odd node count on [-hw, hw]
    let f = |t: f64| t.powi(k as i32) * eval_l(m, t).expect("order validated");
    // Simpson weights indexed from the centre: node 0 sits at t = 0 and has
    // an even index (2·half_panels), hence weight 2 unless it is a boundary.
    let mut acc = f(0.0) * 2.0;
    for j in 1..=(n - 1) / 2 {
        let w = if j == (n - 1) / 2 {
            1.0
        } else if (2 * half_panels + j) % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let t = j as f64 * h;
        acc += w * (f(t) + f(-t));
    }
    Ok(acc * h / 3.0)
}

/// The equivalent kernel together with its cached variance constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    m: usize,
    l0: f64,
}

impl KernelSpec {
    pub fn new(m: usize) -> Result<Self> {
        Ok(KernelSpec { m, l0: l0(m)? })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_l(self.m, t).expect("order validated at construction")
    }
}

/// Tabulated warp `Q(t) = ∫_0^t {r(s) ρ(s)}^{-1/(2m)} ds` on a grid.
///
/// Values are piecewise linear between grid nodes; the derivative on each
/// interval is the interval's exact average integrand, so `eval` and
/// `deriv` are mutually consistent.
#[derive(Debug, Clone)]
pub struct WarpFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>, // one per interval
}

impl WarpFunction {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Q(t)`, linearly interpolated; clamps outside the grid range.
    pub fn eval(&self, t: f64) -> f64 {
        quad::interp_linear(&self.grid, &self.values, t)
    }

    /// `Q'(s)` as the average slope of the interval containing `s`.
    pub fn deriv(&self, s: f64) -> f64 {
        let n = self.grid.len();
        if s <= self.grid[0] {
            return self.slopes[0];
        }
        if s >= self.grid[n - 1] {
            return self.slopes[n - 2];
        }
        let j = self
            .grid
            .partition_point(|&g| g <= s)
            .clamp(1, n - 1);
        self.slopes[j - 1]
    }
}

/// Builds the warp for penalty `rho`, ratio function `r`, and order `m`,
/// tabulated on `grid` (strictly increasing abscissae in `[0, 1]`).
///
/// Within each grid interval the integrand factors as
/// `ρ_j^{-1/(2m)} · r(s)^{-1/(2m)}` between penalty knots, so the knots are
/// split out exactly and only the smooth `r` part is integrated numerically
/// (Simpson per piece). For constant `r` the result is exactly piecewise
/// linear with slope `{r ρ_j}^{-1/(2m)}`.
pub fn warp(
    rho: &PiecewisePenalty,
    r: impl Fn(f64) -> f64,
    m: usize,
    grid: &[f64],
) -> Result<WarpFunction> {
    if m == 0 {
        return Err(Error::UnsupportedOrder { m });
    }
    if grid.len() < 2 {
        return Err(Error::invalid("warp grid needs at least two points"));
    }
    for p in grid.windows(2) {
        if p[1] <= p[0] {
            return Err(Error::invalid("warp grid must be strictly increasing"));
        }
    }
    if grid[0] < 0.0 || *grid.last().unwrap() > 1.0 {
        return Err(Error::invalid("warp grid must lie inside [0, 1]"));
    }

    let expo = -1.0 / (2.0 * m as f64);
    let r_part = |s: f64| -> Result<f64> {
        let v = r(s);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("r({s}) = {v} must be positive")));
        }
        Ok(v.powf(expo))
    };

    let mut values = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len() - 1);
    values.push(0.0);
    let mut total = 0.0;
    for win in grid.windows(2) {
        let (a, b) = (win[0], win[1]);
        let mut cuts = vec![a];
        for &tau in rho.knots() {
            if tau > a && tau < b {
                cuts.push(tau);
            }
        }
        cuts.push(b);
        let mut inc = 0.0;
        for piece in cuts.windows(2) {
            let mid = 0.5 * (piece[0] + piece[1]);
            let rho_factor = rho.value_at(mid).powf(expo);
            // 5-point Simpson; exact for constant r, ample for smooth r on
            // sub-millimetre pieces.
            let mut piece_val = 0.0;
            let h = (piece[1] - piece[0]) / 4.0;
            for (i, w) in [1.0, 4.0, 2.0, 4.0, 1.0].iter().enumerate() {
                piece_val += w * r_part(piece[0] + h * i as f64)?;
            }
            inc += rho_factor * piece_val * h / 3.0;
        }
        slopes.push(inc / (b - a));
        total += inc;
        values.push(total);
    }
    Ok(WarpFunction {
        grid: grid.to_vec(),
        values,
        slopes,
    })
}

/// Spatially varying equivalent kernel
/// `J(t, s) = β Q'(s) L( β |Q(t) − Q(s)| )` with `β = λ^{-1/(2m)}`.
pub fn eval_j(t: f64, s: f64, beta: f64, warp: &WarpFunction, m: usize) -> Result<f64> {
    check_order(m)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta = {beta} must be positive")));
    }
    let arg = beta * (warp.eval(t) - warp.eval(s)).abs();
    Ok(beta * warp.deriv(s) * eval_l(m, arg)?)
}

// =====================================================================
// Tests
// =====================================================================
