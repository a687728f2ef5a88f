//! Reproducing kernel of the weighted roughness penalty.
//!
//! The penalty `∫ ρ(t) {f^{(m)}(t)}² dt` with piecewise-constant `ρ > 0`
//! induces, on functions with vanishing derivatives of order `< m` at 0,
//! the reproducing kernel
//!
//! ```text
//! K_ρ(s, t) = ∫_0^1 ρ(u)^{-1} G_m(s, u) G_m(t, u) du ,
//! G_m(x, u) = (x − u)_+^{m-1} / (m−1)! ,
//! ```
//!
//! and the estimator's null space is spanned by `φ_j(t) = t^j / j!`,
//! `j = 0..m-1`. Because `ρ` is a step function, the integrand is a
//! polynomial between penalty knots and every kernel entry has an exact
//! antiderivative — no quadrature enters the Gram matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};

/// Highest supported penalty order for the RKHS machinery. The pipeline
/// differentiates order-`2m` pilot fits, so this is twice the kernel cap.
pub const MAX_RKHS_ORDER: usize = 8;

// =====================================================================
// Piecewise-constant penalty
// =====================================================================

/// Piecewise-constant penalty weight `ρ(t)` on `[0, 1]`.
///
/// `values[j]` applies on the segment `(τ_j, τ_{j+1}]` with `τ_0 = 0` and
/// `τ_{S+1} = 1` (left-closed at 0). `gamma` records the power-up exponent
/// that produced the values; it does not affect evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewisePenalty {
    tau: Vec<f64>,
    values: Vec<f64>,
    gamma: f64,
}

impl PiecewisePenalty {
    /// `ρ ≡ 1`: the classical uniform-penalty smoothing spline.
    pub fn uniform() -> Self {
        PiecewisePenalty {
            tau: Vec::new(),
            values: vec![1.0],
            gamma: 1.0,
        }
    }

    /// Builds a penalty with interior knots `tau` (strictly increasing,
    /// inside the open interval), `tau.len() + 1` positive segment values,
    /// and exponent `gamma >= 1`.
    pub fn new(tau: Vec<f64>, values: Vec<f64>, gamma: f64) -> Result<Self> {
        if values.len() != tau.len() + 1 {
            return Err(Error::invalid(format!(
                "{} knots require {} segment values, got {}",
                tau.len(),
                tau.len() + 1,
                values.len()
            )));
        }
        for pair in tau.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::invalid("penalty knots must be strictly increasing"));
            }
        }
        if let (Some(&first), Some(&last)) = (tau.first(), tau.last()) {
            if first <= 0.0 || last >= 1.0 {
                return Err(Error::invalid("penalty knots must lie strictly inside (0, 1)"));
            }
        }
        for &v in &values {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("penalty value {v} must be positive")));
            }
        }
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(Error::invalid(format!("gamma = {gamma} must be >= 1")));
        }
        Ok(PiecewisePenalty { tau, values, gamma })
    }

    pub fn knots(&self) -> &[f64] {
        &self.tau
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    /// Segment boundaries including the endpoints: `[0, τ_1, …, τ_S, 1]`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.tau.len() + 2);
        b.push(0.0);
        b.extend_from_slice(&self.tau);
        b.push(1.0);
        b
    }

    /// `ρ(t)`; segments are `(τ_j, τ_{j+1}]`, with `ρ(0) = values[0]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let j = self.tau.partition_point(|&tau| tau < t);
        self.values[j]
    }

    /// All segment values multiplied by `c > 0` (λρ reparameterization).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        PiecewisePenalty::new(
            self.tau.clone(),
            self.values.iter().map(|v| v * c).collect(),
            self.gamma,
        )
    }
}

// =====================================================================
// Kernel evaluation
// =====================================================================

const FACTORIALS: [f64; 17] = {
    let mut f = [1.0f64; 17];
    let mut i = 1;
    while i < 17 {
        f[i] = f[i - 1] * i as f64;
        i += 1;
    }
    f
};

fn check_rkhs_order(m: usize) -> Result<()> {
    if m == 0 || m > MAX_RKHS_ORDER {
        return Err(Error::UnsupportedOrder { m });
    }
    Ok(())
}

/// Coefficients of `(x − u)^e` as a polynomial in `u`.
fn binomial_coeffs(x: f64, e: usize, out: &mut [f64]) {
    // C(e, i) x^{e-i} (-1)^i
    let mut binom = 1.0;
    let mut xpow = x.powi(e as i32);
    for i in 0..=e {
        out[i] = if i % 2 == 0 { binom * xpow } else { -binom * xpow };
        binom *= (e - i) as f64 / (i + 1) as f64;
        if x != 0.0 {
            xpow /= x;
        } else {
            xpow = if i + 1 == e { 1.0 } else { 0.0 };
        }
    }
}

/// Polynomial-in-`u` coefficients of `(s − u)^{e1} (t − u)^{e2}`.
fn product_coeffs(s: f64, e1: usize, t: f64, e2: usize) -> Vec<f64> {
    let mut c1 = vec![0.0; e1 + 1];
    let mut c2 = vec![0.0; e2 + 1];
    binomial_coeffs(s, e1, &mut c1);
    binomial_coeffs(t, e2, &mut c2);
    let mut c = vec![0.0; e1 + e2 + 1];
    for (i, &a) in c1.iter().enumerate() {
        for (j, &b) in c2.iter().enumerate() {
            c[i + j] += a * b;
        }
    }
    c
}

/// `∫_a^b Σ c_k u^k du` via the exact antiderivative.
fn poly_integral(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    let mut bp = b;
    let mut ap = a;
    for (k, &c) in coeffs.iter().enumerate() {
        acc += c * (bp - ap) / (k + 1) as f64;
        bp *= b;
        ap *= a;
    }
    acc
}

/// Integrates `ρ(u)^{-1} · Σ c_k u^k` over `[0, top]`, splitting exactly at
/// the penalty knots.
fn integrate_with_penalty(coeffs: &[f64], top: f64, penalty: &PiecewisePenalty) -> f64 {
    let mut acc = 0.0;
    let mut lo = 0.0;
    for (j, &tau) in penalty.tau.iter().enumerate() {
        if tau >= top {
            break;
        }
        acc += poly_integral(coeffs, lo, tau) / penalty.values[j];
        lo = tau;
    }
    let last = penalty.tau.partition_point(|&tau| tau < top);
    acc + poly_integral(coeffs, lo, top) / penalty.values[last]
}

/// Reproducing kernel `K_ρ(s, t)` for penalty order `m`.
///
/// Exact segment-wise antiderivatives; no quadrature. Callers must pass
/// `s, t ∈ [0, 1]` and a supported order (debug-asserted).
pub fn k_rho(s: f64, t: f64, penalty: &PiecewisePenalty, m: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t));
    debug_assert!(m >= 1 && m <= MAX_RKHS_ORDER);
    let top = s.min(t);
    if top <= 0.0 {
        return 0.0;
    }
    let coeffs = product_coeffs(s, m - 1, t, m - 1);
    let scale = 1.0 / (FACTORIALS[m - 1] * FACTORIALS[m - 1]);
    scale * integrate_with_penalty(&coeffs, top, penalty)
}

/// `∂^order_t K_ρ(s, t)`.
///
/// * `order <= m-1`: differentiation under the integral sign, again exact.
/// * `m <= order <= 2m-1`: the kernel is `ρ(t)^{-1} (s−t)_+^{m-1}/(m−1)!`
///   after `m` derivatives; at `t = s` and at penalty knots the one-sided
///   (left) limit is returned.
/// * `order >= 2m`: no pointwise derivative exists (the next one is a jump);
///   returns [`Error::DerivativeOrder`].
pub fn k_rho_deriv(
    s: f64,
    t: f64,
    penalty: &PiecewisePenalty,
    m: usize,
    order: usize,
) -> Result<f64> {
    check_rkhs_order(m)?;
    if order >= 2 * m {
        return Err(Error::DerivativeOrder {
            order,
            m,
            max: 2 * m - 1,
        });
    }
    if order == 0 {
        return Ok(k_rho(s, t, penalty, m));
    }
    if order <= m - 1 {
        let top = s.min(t);
        if top <= 0.0 {
            return Ok(0.0);
        }
        let coeffs = product_coeffs(s, m - 1, t, m - 1 - order);
        let scale = 1.0 / (FACTORIALS[m - 1] * FACTORIALS[m - 1 - order]);
        return Ok(scale * integrate_with_penalty(&coeffs, top, penalty));
    }
    // m <= order <= 2m-1
    if t > s {
        return Ok(0.0);
    }
    let j = order - m;
    let expo = m - 1 - j; // = 2m - 1 - order
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * (s - t).powi(expo as i32) / (FACTORIALS[expo] * penalty.value_at(t)))
}

/// Null-space basis `φ_j(t) = t^j / j!`, `j = 0..m-1`.
pub fn null_basis(m: usize, t: f64) -> Vec<f64> {
    let mut phi = Vec::with_capacity(m);
    let mut p = 1.0;
    for j in 0..m {
        phi.push(p / FACTORIALS[j]);
        p *= t;
    }
    phi
}

// =====================================================================
// Gram context
// =====================================================================

/// Gram matrix `K[i][j] = K_ρ(t_i, t_j)` and null-space matrix
/// `T[i][j] = φ_j(t_i)` for a fixed design, penalty, and order.
#[derive(Debug, Clone)]
pub struct GramContext {
    t: Vec<f64>,
    penalty: PiecewisePenalty,
    m: usize,
    gram: DMatrix<f64>,
    null_basis: DMatrix<f64>,
}

impl GramContext {
    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn penalty(&self) -> &PiecewisePenalty {
        &self.penalty
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn null_basis_matrix(&self) -> &DMatrix<f64> {
        &self.null_basis
    }
}

/// Builds the Gram context for a design (distinct abscissae are enforced by
/// [`Design`] itself; pre-bin ties before constructing one).
pub fn gram_matrix(design: &Design, penalty: &PiecewisePenalty, m: usize) -> Result<GramContext> {
    check_rkhs_order(m)?;
    let t = design.t();
    let n = t.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = k_rho(t[i], t[j], penalty, m);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let mut null = DMatrix::zeros(n, m);
    for i in 0..n {
        for (j, phi) in null_basis(m, t[i]).into_iter().enumerate() {
            null[(i, j)] = phi;
        }
    }
    Ok(GramContext {
        t: t.to_vec(),
        penalty: penalty.clone(),
        m,
        gram,
        null_basis: null,
    })
}

// =====================================================================
// Tests
// =====================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use crate::rng;
    use proptest::prelude::*;

    fn random_penalty(seed: u64) -> PiecewisePenalty {
        let s = (seed % 4) as usize;
        let mut tau: Vec<f64> = (0..s)
            .map(|i| 0.05 + 0.9 * rng::uniform(seed, 1, i as u64, 0))
            .collect();
        tau.sort_by(|a, b| a.partial_cmp(b).unwrap());
        tau.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let values = (0..tau.len() + 1)
            .map(|i| 0.1 + 9.9 * rng::uniform(seed, 2, i as u64, 0))
            .collect();
        PiecewisePenalty::new(tau, values, 1.0).unwrap()
    }

    /// Brute-force oracle: adaptive quadrature of the defining integral,
    /// split at penalty knots and at min(s, t).
    fn k_rho_quadrature(s: f64, t: f64, penalty: &PiecewisePenalty, m: usize) -> f64 {
        let top = s.min(t);
        if top <= 0.0 {
            return 0.0;
        }
        let fact = (1..m).product::<usize>() as f64;
        let g = |x: f64, u: f64| (x - u).max(0.0).powi(m as i32 - 1) / fact;
        let f = |u: f64| g(s, u) * g(t, u) / penalty.value_at(u);
        let mut cuts = vec![0.0];
        for &tau in penalty.knots() {
            if tau < top {
                cuts.push(tau);
            }
        }
        cuts.push(top);
        cuts.windows(2)
            .map(|w| quad::adaptive_simpson(&f, w[0], w[1], 1e-13))
            .sum()
    }

    #[test]
    fn segment_lookup_conventions() {
        let p = PiecewisePenalty::new(vec![0.3, 0.7], vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(p.value_at(0.0), 1.0);
        assert_eq!(p.value_at(0.3), 1.0); // left-closed at the knot
        assert_eq!(p.value_at(0.30001), 2.0);
        assert_eq!(p.value_at(0.7), 2.0);
        assert_eq!(p.value_at(1.0), 3.0);
        assert_eq!(p.boundaries(), vec![0.0, 0.3, 0.7, 1.0]);
    }

    #[test]
    fn penalty_validation() {
        assert!(PiecewisePenalty::new(vec![0.5], vec![1.0], 1.0).is_err());
        assert!(PiecewisePenalty::new(vec![0.5, 0.4], vec![1.0; 3], 1.0).is_err());
        assert!(PiecewisePenalty::new(vec![0.0], vec![1.0; 2], 1.0).is_err());
        assert!(PiecewisePenalty::new(vec![1.0], vec![1.0; 2], 1.0).is_err());
        assert!(PiecewisePenalty::new(vec![0.5], vec![1.0, 0.0], 1.0).is_err());
        assert!(PiecewisePenalty::new(vec![0.5], vec![1.0, -2.0], 1.0).is_err());
        assert!(PiecewisePenalty::new(vec![0.5], vec![1.0, 2.0], 0.5).is_err());
        assert!(PiecewisePenalty::new(vec![0.5], vec![1.0, 2.0], 2.0).is_ok());
    }

    #[test]
    fn penalty_serde_round_trip_rejects_unknown_keys() {
        let p = PiecewisePenalty::new(vec![0.4], vec![2.0, 0.5], 2.0).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: PiecewisePenalty = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"tau":[],"values":[1.0],"gamma":1.0,"extra":7}"#;
        assert!(serde_json::from_str::<PiecewisePenalty>(bad).is_err());
    }

    #[test]
    fn m1_uniform_kernel_is_min() {
        let p = PiecewisePenalty::uniform();
        for &(s, t) in &[(0.2, 0.9), (0.9, 0.2), (0.5, 0.5), (0.0, 0.7), (1.0, 1.0)] {
            assert!((k_rho(s, t, &p, 1) - s.min(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn m2_uniform_kernel_closed_form() {
        let p = PiecewisePenalty::uniform();
        // K(s,t) = t²(3s − t)/6 for t <= s.
        for &(s, t) in &[(1.0, 1.0), (1.0, 0.5), (0.8, 0.3), (0.33, 0.33)] {
            let want = t * t * (3.0 * s - t) / 6.0;
            assert!((k_rho(s, t, &p, 2) - want).abs() < 1e-14);
        }
        assert!((k_rho(1.0, 1.0, &p, 2) - 1.0 / 3.0).abs() < 1e-15);
        // ∫_0^{1/2} (1/2 − u)(1 − u) du = 47/600 + 1/150·… = 5/48.
        assert!((k_rho(0.5, 1.0, &p, 2) - 5.0 / 48.0).abs() < 1e-15);
    }

    #[test]
    fn piecewise_kernel_reference_value() {
        // ρ = 2 on (0, 1/2], 1/2 on (1/2, 1]; m = 2:
        // K(0.7, 0.9) = (1/2)·∫_0^{1/2} + 2·∫_{1/2}^{0.7} = 11/120.
        let p = PiecewisePenalty::new(vec![0.5], vec![2.0, 0.5], 1.0).unwrap();
        let got = k_rho(0.7, 0.9, &p, 2);
        assert!((got - 11.0 / 120.0).abs() < 1e-14, "got {got}");
        let oracle = k_rho_quadrature(0.7, 0.9, &p, 2);
        assert!((got - oracle).abs() < 1e-10);
    }

    #[test]
    fn closed_form_matches_quadrature_oracle() {
        for i in 0..100u64 {
            let m = 1 + (i % 4) as usize;
            let penalty = random_penalty(i * 13 + 1);
            let s = rng::uniform(99, i, 0, 0);
            let t = rng::uniform(99, i, 1, 0);
            let got = k_rho(s, t, &penalty, m);
            let want = k_rho_quadrature(s, t, &penalty, m);
            assert!(
                (got - want).abs() < 1e-10,
                "m={m} s={s} t={t}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn scaling_penalty_scales_kernel_exactly() {
        // Power-of-two scale: bitwise equality.
        let base = PiecewisePenalty::new(vec![0.4, 0.8], vec![1.0, 3.0, 0.5], 1.0).unwrap();
        let scaled = base.scaled(4.0).unwrap();
        for &(s, t) in &[(0.3, 0.9), (0.85, 0.2), (1.0, 1.0)] {
            for m in 1..=4 {
                assert_eq!(k_rho(s, t, &scaled, m), 0.25 * k_rho(s, t, &base, m));
            }
        }
        // Arbitrary scale: near machine precision.
        let scaled = base.scaled(7.3).unwrap();
        let a = k_rho(0.6, 0.7, &scaled, 2);
        let b = k_rho(0.6, 0.7, &base, 2) / 7.3;
        assert!((a - b).abs() <= 1e-15 * b.abs());
    }

    #[test]
    fn kernel_symmetry() {
        let p = random_penalty(5);
        for m in 1..=4 {
            let a = k_rho(0.37, 0.81, &p, m);
            let b = k_rho(0.81, 0.37, &p, m);
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn deriv_order_zero_is_kernel() {
        let p = random_penalty(11);
        assert_eq!(
            k_rho_deriv(0.6, 0.3, &p, 3, 0).unwrap(),
            k_rho(0.6, 0.3, &p, 3)
        );
    }

    #[test]
    fn m1_first_derivative_is_step() {
        let p = PiecewisePenalty::new(vec![0.5], vec![2.0, 4.0], 1.0).unwrap();
        // ∂_t min-type kernel: ρ(t)^{-1} for t < s, 0 for t > s.
        assert_eq!(k_rho_deriv(0.8, 0.3, &p, 1, 1).unwrap(), 0.5);
        assert_eq!(k_rho_deriv(0.8, 0.6, &p, 1, 1).unwrap(), 0.25);
        assert_eq!(k_rho_deriv(0.3, 0.8, &p, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = PiecewisePenalty::new(vec![0.45], vec![1.5, 0.7], 1.0).unwrap();
        let m = 2;
        let h = 1e-5;
        for &(s, t) in &[(0.9, 0.2), (0.3, 0.7), (0.8, 0.6)] {
            let f = |x: f64| k_rho(s, x, &p, m);
            let d1 = k_rho_deriv(s, t, &p, m, 1).unwrap();
            let fd1 = (f(t + h) - f(t - h)) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-7, "d1 {d1} fd {fd1}");
            let d2 = k_rho_deriv(s, t, &p, m, 2).unwrap();
            let fd2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
            assert!((d2 - fd2).abs() < 1e-4, "d2 {d2} fd {fd2}");
        }
    }

    #[test]
    fn derivative_order_cap() {
        let p = PiecewisePenalty::uniform();
        assert!(matches!(
            k_rho_deriv(0.5, 0.2, &p, 2, 4),
            Err(Error::DerivativeOrder { order: 4, m: 2, max: 3 })
        ));
        assert!(k_rho_deriv(0.5, 0.2, &p, 2, 3).is_ok());
    }

    #[test]
    fn reproducing_property_for_monomials() {
        // ⟨K(s,·), f⟩_ρ = ∫ ρ(u) ∂^m_u K(s,u) f^{(m)}(u) du = f(s)
        // for f(t) = t^m/m! (f^{(m)} ≡ 1) and f(t) = t^{m+1} (f^{(m)} = (m+1)!·t).
        for seed in 0..6u64 {
            let penalty = random_penalty(seed * 7 + 3);
            for m in 1..=2usize {
                for &s in &[0.35, 0.8] {
                    let inner = |fm: &dyn Fn(f64) -> f64| {
                        let integrand = |u: f64| {
                            penalty.value_at(u)
                                * k_rho_deriv(s, u, &penalty, m, m).unwrap()
                                * fm(u)
                        };
                        let mut cuts = vec![0.0];
                        for &tau in penalty.knots() {
                            if tau < s {
                                cuts.push(tau);
                            }
                        }
                        cuts.push(s);
                        cuts.windows(2)
                            .map(|w| quad::simpson(integrand, w[0], w[1], 201))
                            .sum::<f64>()
                    };
                    let fact_m = (1..=m).product::<usize>() as f64;
                    let got = inner(&|_| 1.0);
                    let want = s.powi(m as i32) / fact_m;
                    assert!((got - want).abs() < 1e-10, "m={m} s={s}: {got} vs {want}");

                    let fact_m1 = (1..=m + 1).product::<usize>() as f64;
                    let got = inner(&|u| fact_m1 * u);
                    let want = s.powi(m as i32 + 1);
                    assert!((got - want).abs() < 1e-9, "m={m} s={s}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn null_basis_values() {
        assert_eq!(null_basis(1, 0.3), vec![1.0]);
        let phi = null_basis(4, 2.0);
        assert_eq!(phi, vec![1.0, 2.0, 2.0, 8.0 / 6.0]);
    }

    #[test]
    fn gram_is_symmetric_and_psd() {
        let t: Vec<f64> = (0..30).map(|i| (i as f64 + 0.5) / 30.0).collect();
        let design = Design::new(t, vec![0.0; 30], None).unwrap();
        for seed in [2u64, 9, 17] {
            let penalty = random_penalty(seed);
            for m in 1..=3usize {
                let ctx = gram_matrix(&design, &penalty, m).unwrap();
                assert_eq!(ctx.gram(), &ctx.gram().transpose());
                let eig = ctx.gram().clone().symmetric_eigenvalues();
                let max = eig.iter().cloned().fold(f64::MIN, f64::max);
                let min = eig.iter().cloned().fold(f64::MAX, f64::min);
                assert!(min >= -1e-8 * max.max(1e-300), "min {min} max {max}");
            }
        }
    }

    #[test]
    fn gram_rejects_order_out_of_range() {
        let design = Design::new(vec![0.2, 0.8], vec![0.0; 2], None).unwrap();
        assert!(gram_matrix(&design, &PiecewisePenalty::uniform(), 0).is_err());
        assert!(gram_matrix(&design, &PiecewisePenalty::uniform(), 9).is_err());
        assert!(gram_matrix(&design, &PiecewisePenalty::uniform(), 8).is_ok());
    }

    proptest! {
        #[test]
        fn kernel_nonnegative_on_diagonal(s in 0.0f64..=1.0, seed in 0u64..50, m in 1usize..=4) {
            let p = random_penalty(seed);
            prop_assert!(k_rho(s, s, &p, m) >= 0.0);
        }

        #[test]
        fn kernel_vanishes_at_origin(t in 0.0f64..=1.0, m in 1usize..=4) {
            let p = PiecewisePenalty::uniform();
            prop_assert_eq!(k_rho(0.0, t, &p, m), 0.0);
        }
    }
}
