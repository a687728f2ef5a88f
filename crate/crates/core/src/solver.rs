//! Penalized least-squares solver and smoothing-parameter selection.
//!
//! For a design `(t_i, y_i, w_i)` the estimator minimizes
//!
//! ```text
//! (1/n) Σ_i w_i {y_i − f(t_i)}² + λ ∫ ρ(t) {f^{(m)}(t)}² dt
//! ```
//!
//! over the RKHS from [`crate::rkhs`]. The representer theorem reduces this
//! to the linear system
//!
//! ```text
//! (K + nλ W^{-1}) c + T d = y ,    T' c = 0 ,
//! f̂ = K c + T d = y − nλ W^{-1} c ,
//! ```
//!
//! solved by a Cholesky factorization. For smoothing-parameter search the
//! system is reduced once per penalty: with `z = W^{1/2} y`,
//! `K̃ = W^{1/2} K W^{1/2}`, `T̃ = W^{1/2} T`, and `Q` an orthonormal basis
//! of the complement of `range(T̃)`, a single symmetric eigendecomposition
//! of `P = Q' K̃ Q` yields GCV, GML, and the effective degrees of freedom
//! in `O(n)` per λ, because
//!
//! ```text
//! I − A(λ) ~ nλ Q (P + nλ I)^{-1} Q'   (in the W^{1/2} similarity).
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::rkhs::{self, GramContext, PiecewisePenalty};

// =====================================================================
// Public configuration types
// =====================================================================

/// Data-driven criterion for choosing λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionCriterion {
    /// Generalized cross-validation.
    Gcv,
    /// Generalized maximum likelihood.
    Gml,
}

impl std::fmt::Display for SelectionCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectionCriterion::Gcv => write!(f, "gcv"),
            SelectionCriterion::Gml => write!(f, "gml"),
        }
    }
}

/// Search grid for λ: `count` log-spaced points on `[min, max]` followed by
/// `golden_iters` golden-section refinement steps around the grid minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub golden_iters: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            min: 1e-8,
            max: 1.0,
            count: 40,
            golden_iters: 20,
        }
    }
}

impl LambdaGrid {
    fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.min > 0.0) || !(self.max.is_finite()) {
            return Err(Error::invalid("lambda grid bounds must be positive and finite"));
        }
        if self.max <= self.min {
            return Err(Error::invalid("lambda grid needs max > min"));
        }
        if self.count < 2 {
            return Err(Error::invalid("lambda grid needs at least two points"));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid(format!(
            "smoothing parameter lambda = {lambda} must be positive and finite"
        )));
    }
    Ok(())
}

// =====================================================================
// Fit result
// =====================================================================

/// A fitted spline: coefficients, fitted values, and diagnostics.
#[derive(Debug, Clone)]
pub struct SplineFit {
    t: Vec<f64>,
    penalty: PiecewisePenalty,
    m: usize,
    lambda: f64,
    c: DVector<f64>,
    d: DVector<f64>,
    fitted: Vec<f64>,
    weighted_rss: f64,
    roughness: f64,
    edf: Option<f64>,
    criterion: Option<SelectionCriterion>,
    criterion_value: Option<f64>,
    gcv_value: Option<f64>,
    gml_value: Option<f64>,
}

impl SplineFit {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn penalty(&self) -> &PiecewisePenalty {
        &self.penalty
    }

    /// Design abscissae the fit was computed on (sorted).
    pub fn abscissae(&self) -> &[f64] {
        &self.t
    }

    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    /// Kernel coefficients `c` (one per design point).
    pub fn kernel_coefficients(&self) -> &[f64] {
        self.c.as_slice()
    }

    /// Null-space coefficients `d` (`m` of them).
    pub fn null_coefficients(&self) -> &[f64] {
        self.d.as_slice()
    }

    /// `Σ w_i (y_i − f̂_i)²`.
    pub fn weighted_rss(&self) -> f64 {
        self.weighted_rss
    }

    /// Penalty functional `c' K c = ∫ ρ {f̂^{(m)}}²`.
    pub fn roughness(&self) -> f64 {
        self.roughness
    }

    /// Objective value `(1/n)·RSS_w + λ·roughness`.
    pub fn objective(&self) -> f64 {
        self.weighted_rss / self.t.len() as f64 + self.lambda * self.roughness
    }

    /// Effective degrees of freedom `tr A(λ)`, when computed.
    pub fn edf(&self) -> Option<f64> {
        self.edf
    }

    pub fn criterion(&self) -> Option<SelectionCriterion> {
        self.criterion
    }

    pub fn criterion_value(&self) -> Option<f64> {
        self.criterion_value
    }

    /// GCV score at the fitted λ (set by criterion-aware constructors).
    pub fn gcv_value(&self) -> Option<f64> {
        self.gcv_value
    }

    /// GML score at the fitted λ (set by criterion-aware constructors).
    pub fn gml_value(&self) -> Option<f64> {
        self.gml_value
    }

    /// Evaluates the fitted function at `x ∈ [0, 1]`.
    pub fn predict(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { t: x });
        }
        let mut acc = 0.0;
        for (i, &ti) in self.t.iter().enumerate() {
            acc += self.c[i] * rkhs::k_rho(x, ti, &self.penalty, self.m);
        }
        for (j, phi) in rkhs::null_basis(self.m, x).into_iter().enumerate() {
            acc += self.d[j] * phi;
        }
        Ok(acc)
    }

    /// Evaluates `f̂^{(order)}(x)`; orders up to `2m − 1` are defined.
    pub fn predict_deriv(&self, x: f64, order: usize) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { t: x });
        }
        if order == 0 {
            return self.predict(x);
        }
        let mut acc = 0.0;
        for (i, &ti) in self.t.iter().enumerate() {
            // f(x) = Σ c_i K(x, t_i); K is symmetric, so differentiate the
            // second argument of K(t_i, ·).
            acc += self.c[i] * rkhs::k_rho_deriv(ti, x, &self.penalty, self.m, order)?;
        }
        let mut fact = 1.0;
        let mut xpow = 1.0;
        for j in order..self.m {
            acc += self.d[j] * xpow / fact;
            fact *= (j - order + 1) as f64;
            xpow *= x;
        }
        Ok(acc)
    }
}

// =====================================================================
// Direct fit at fixed λ
// =====================================================================

fn check_design_matches(design: &Design, ctx: &GramContext) -> Result<()> {
    if design.t() != ctx.t() {
        return Err(Error::invalid(
            "design abscissae do not match the Gram context they are paired with",
        ));
    }
    Ok(())
}

/// Fits the penalized spline at a fixed λ (builds the Gram matrix).
pub fn fit(
    design: &Design,
    penalty: &PiecewisePenalty,
    m: usize,
    lambda: f64,
) -> Result<SplineFit> {
    let ctx = rkhs::gram_matrix(design, penalty, m)?;
    fit_with_gram(design, &ctx, lambda)
}

/// Fits at fixed λ reusing a prebuilt [`GramContext`].
pub fn fit_with_gram(design: &Design, ctx: &GramContext, lambda: f64) -> Result<SplineFit> {
    check_lambda(lambda)?;
    check_design_matches(design, ctx)?;
    let n = design.len();
    let m = ctx.order();
    if n < m {
        return Err(Error::Degenerate(format!(
            "need at least m = {m} observations, got {n}"
        )));
    }
    let k = ctx.gram();
    let t_mat = ctx.null_basis_matrix();
    let w = design.w();
    let y = DVector::from_column_slice(design.y());
    let nl = n as f64 * lambda;

    let mut mmat = k.clone();
    for i in 0..n {
        mmat[(i, i)] += nl / w[i];
    }
    let jitter = 1e-10 * mmat.trace() / n as f64;
    for i in 0..n {
        mmat[(i, i)] += jitter;
    }

    let chol = match Cholesky::new(mmat.clone()) {
        Some(c) => c,
        None => {
            let min_pivot = mmat
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::MAX, f64::min);
            return Err(Error::IllConditioned { min_pivot });
        }
    };

    let c_free = chol.solve(&y); // M^{-1} y
    let b = chol.solve(t_mat); // M^{-1} T
    let s = t_mat.transpose() * &b; // T' M^{-1} T
    let rhs = t_mat.transpose() * &c_free;
    let d = match Cholesky::new(s) {
        Some(sc) => sc.solve(&rhs),
        None => {
            return Err(Error::Degenerate(
                "null-space basis is rank deficient on this design".into(),
            ))
        }
    };
    let c = &c_free - &b * &d;

    // Evaluate f̂ = Kc + Td directly so fitted values agree with predict()
    // to round-off (the identity f̂ = y − nλW^{-1}c drags in the jitter).
    let fvec = k * &c + t_mat * &d;
    let mut fitted = Vec::with_capacity(n);
    let mut weighted_rss = 0.0;
    for i in 0..n {
        let r = design.y()[i] - fvec[i];
        weighted_rss += w[i] * r * r;
        fitted.push(fvec[i]);
    }
    let roughness = c.dot(&(k * &c));

    Ok(SplineFit {
        t: design.t().to_vec(),
        penalty: ctx.penalty().clone(),
        m,
        lambda,
        c,
        d,
        fitted,
        weighted_rss,
        roughness,
        edf: None,
        criterion: None,
        criterion_value: None,
        gcv_value: None,
        gml_value: None,
    })
}

// =====================================================================
// Reduced penalized system (fast per-λ criteria)
// =====================================================================

/// Eigen-reduced penalized system for one `(design, penalty, m)` triple.
///
/// Construction costs one `O(n³)` factorization; every λ-dependent quantity
/// afterwards (GCV, GML, trace, smoother application) is `O(n)`–`O(n²)`.
#[derive(Debug, Clone)]
pub struct PenaltySystem {
    sqrt_w: Vec<f64>,
    m: usize,
    n: usize,
    /// Eigenvalues of `Q' K̃ Q`, ascending order not guaranteed; all ≥ 0.
    mu: Vec<f64>,
    /// `Q V` — maps reduced coordinates back to `W^{1/2}`-space (n × (n−m)).
    qv: DMatrix<f64>,
    /// `(QV)' W^{1/2} y` — reduced data.
    g: Vec<f64>,
}

/// Householder QR of `a` (n × m, overwritten); returns an orthonormal basis
/// of the orthogonal complement of its column span (n × (n−m)).
fn orthonormal_complement(mut a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = a.ncols();
    let scale = a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let mut v = DVector::zeros(n);
        for i in k..n {
            v[i] = a[(i, k)];
        }
        let norm = v.norm();
        if norm <= 1e-12 * scale.max(1.0) * (n as f64).sqrt() {
            return Err(Error::Degenerate(
                "null-space basis is rank deficient on this design".into(),
            ));
        }
        let alpha = if v[k] >= 0.0 { -norm } else { norm };
        v[k] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
        }
        // Apply H = I − 2vv' to the remaining columns.
        for j in k..m {
            let col = a.column(j).into_owned();
            let proj = 2.0 * v.dot(&col);
            for i in 0..n {
                a[(i, j)] -= proj * v[i];
            }
        }
        vs.push(v);
    }
    let mut q2 = DMatrix::zeros(n, n - m);
    for (jj, j) in (m..n).enumerate() {
        let mut q = DVector::zeros(n);
        q[j] = 1.0;
        for v in vs.iter().rev() {
            let proj = 2.0 * v.dot(&q);
            q -= v * proj;
        }
        q2.set_column(jj, &q);
    }
    Ok(q2)
}

impl PenaltySystem {
    /// Reduces the system. Requires `n > m` so the criteria are defined.
    pub fn new(design: &Design, ctx: &GramContext) -> Result<Self> {
        check_design_matches(design, ctx)?;
        let n = design.len();
        let m = ctx.order();
        if n <= m {
            return Err(Error::Degenerate(format!(
                "criterion-based selection needs n > m, got n = {n}, m = {m}"
            )));
        }
        let sqrt_w: Vec<f64> = design.w().iter().map(|&w| w.sqrt()).collect();
        let z = DVector::from_iterator(
            n,
            design.y().iter().zip(&sqrt_w).map(|(&y, &sw)| y * sw),
        );
        let mut kt = ctx.gram().clone();
        for i in 0..n {
            for j in 0..n {
                kt[(i, j)] *= sqrt_w[i] * sqrt_w[j];
            }
        }
        let mut tt = ctx.null_basis_matrix().clone();
        for i in 0..n {
            for j in 0..m {
                tt[(i, j)] *= sqrt_w[i];
            }
        }
        let q2 = orthonormal_complement(tt)?;
        let mut p = q2.transpose() * &kt * &q2;
        // Symmetrize against round-off before the eigendecomposition.
        let pt = p.transpose();
        p = (&p + &pt) * 0.5;
        let eig = SymmetricEigen::new(p);
        let mu: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.max(0.0)).collect();
        let qv = &q2 * &eig.eigenvectors;
        let g: Vec<f64> = (qv.transpose() * &z).iter().cloned().collect();
        Ok(PenaltySystem {
            sqrt_w,
            m,
            n,
            mu,
            qv,
            g,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// `tr{I − A(λ)} = Σ_i nλ / (μ_i + nλ)`.
    pub fn trace_complement(&self, lambda: f64) -> f64 {
        let nl = self.n as f64 * lambda;
        self.mu.iter().map(|&mu| nl / (mu + nl)).sum()
    }

    /// Effective degrees of freedom `tr A(λ) = m + Σ μ_i/(μ_i + nλ)`.
    pub fn edf(&self, lambda: f64) -> f64 {
        self.n as f64 - self.trace_complement(lambda)
    }

    /// Criterion value at λ (lower is better for both).
    pub fn criterion(&self, lambda: f64, which: SelectionCriterion) -> f64 {
        let nl = self.n as f64 * lambda;
        match which {
            SelectionCriterion::Gcv => {
                let mut rss = 0.0;
                let mut tr = 0.0;
                for (&mu, &g) in self.mu.iter().zip(&self.g) {
                    let shrink = nl / (mu + nl);
                    rss += (shrink * g) * (shrink * g);
                    tr += shrink;
                }
                self.n as f64 * rss / (tr * tr)
            }
            SelectionCriterion::Gml => {
                let mut quad = 0.0;
                let mut logdet = 0.0;
                for (&mu, &g) in self.mu.iter().zip(&self.g) {
                    let shrink = nl / (mu + nl);
                    quad += shrink * g * g;
                    logdet += shrink.ln();
                }
                quad / (logdet / (self.n - self.m) as f64).exp()
            }
        }
    }

    /// Applies the smoother `A(λ)` to a response vector on the same design.
    pub fn apply_smoother(&self, lambda: f64, y: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        if y.len() != self.n {
            return Err(Error::invalid(format!(
                "response length {} does not match design size {}",
                y.len(),
                self.n
            )));
        }
        let nl = self.n as f64 * lambda;
        let z = DVector::from_iterator(
            self.n,
            y.iter().zip(&self.sqrt_w).map(|(&yi, &sw)| yi * sw),
        );
        let mut u = self.qv.transpose() * &z;
        for (ui, &mu) in u.iter_mut().zip(&self.mu) {
            *ui *= nl / (mu + nl);
        }
        let resid = &self.qv * u;
        Ok((0..self.n)
            .map(|i| (z[i] - resid[i]) / self.sqrt_w[i])
            .collect())
    }

    /// Dense hat matrix `A(λ)` with `f̂ = A y` in the original coordinates.
    pub fn hat_matrix(&self, lambda: f64) -> Result<DMatrix<f64>> {
        check_lambda(lambda)?;
        let nl = self.n as f64 * lambda;
        let mut scaled = self.qv.clone();
        for (j, &mu) in self.mu.iter().enumerate() {
            let shrink = nl / (mu + nl);
            for i in 0..self.n {
                scaled[(i, j)] *= shrink;
            }
        }
        let mut a = DMatrix::identity(self.n, self.n) - scaled * self.qv.transpose();
        for i in 0..self.n {
            for j in 0..self.n {
                a[(i, j)] *= self.sqrt_w[j] / self.sqrt_w[i];
            }
        }
        Ok(a)
    }

    /// Eigenvalues of the symmetric similarity `W^{1/2} A W^{-1/2}`:
    /// `m` exact ones and `μ_i/(μ_i + nλ)`.
    pub fn smoother_eigenvalues(&self, lambda: f64) -> Vec<f64> {
        let nl = self.n as f64 * lambda;
        let mut ev: Vec<f64> = vec![1.0; self.m];
        ev.extend(self.mu.iter().map(|&mu| mu / (mu + nl)));
        ev
    }
}

// =====================================================================
// λ selection
// =====================================================================

/// Minimizes the criterion over the λ grid plus golden-section refinement.
///
/// Every evaluation is tracked; exact ties go to the smaller λ.
pub fn select_lambda(
    system: &PenaltySystem,
    criterion: SelectionCriterion,
    grid: &LambdaGrid,
) -> Result<f64> {
    grid.validate()?;
    let mut best_lambda = f64::NAN;
    let mut best_value = f64::INFINITY;
    let mut eval = |lambda: f64| -> f64 {
        let raw = system.criterion(lambda, criterion);
        let v = if raw.is_finite() { raw } else { f64::INFINITY };
        if v < best_value || (v == best_value && lambda < best_lambda) {
            best_value = v;
            best_lambda = lambda;
        }
        v
    };

    let ln_lo = grid.min.ln();
    let ln_hi = grid.max.ln();
    let step = (ln_hi - ln_lo) / (grid.count - 1) as f64;
    let mut grid_vals = Vec::with_capacity(grid.count);
    for i in 0..grid.count {
        // Hit the stated bounds exactly; exp/ln round-trips drift an ulp.
        let lambda = if i == 0 {
            grid.min
        } else if i == grid.count - 1 {
            grid.max
        } else {
            (ln_lo + step * i as f64).exp()
        };
        grid_vals.push(eval(lambda));
    }
    // First minimal index → ties already favor smaller λ.
    let mut k = 0;
    for (i, &v) in grid_vals.iter().enumerate() {
        if v < grid_vals[k] {
            k = i;
        }
    }
    let a0 = ln_lo + step * k.saturating_sub(1) as f64;
    let b0 = ln_lo + step * (k + 1).min(grid.count - 1) as f64;

    if grid.golden_iters > 0 && b0 > a0 {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (a0, b0);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = eval(x1.exp());
        let mut f2 = eval(x2.exp());
        for _ in 0..grid.golden_iters {
            if f1 <= f2 {
                // Minimum in [a, x2]; shrinking the right edge biases ties
                // toward smaller λ.
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = eval(x1.exp());
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = eval(x2.exp());
            }
        }
    }

    if !best_lambda.is_finite() {
        return Err(Error::Degenerate(
            "selection criterion was non-finite over the entire grid".into(),
        ));
    }
    Ok(best_lambda)
}

/// Builds the Gram context and reduced system, selects λ, and fits.
pub fn fit_auto(
    design: &Design,
    penalty: &PiecewisePenalty,
    m: usize,
    criterion: SelectionCriterion,
    grid: &LambdaGrid,
) -> Result<SplineFit> {
    let ctx = rkhs::gram_matrix(design, penalty, m)?;
    let system = PenaltySystem::new(design, &ctx)?;
    fit_auto_with(design, &ctx, &system, criterion, grid)
}

/// Like [`fit_auto`] but reuses prebuilt context and system.
pub fn fit_auto_with(
    design: &Design,
    ctx: &GramContext,
    system: &PenaltySystem,
    criterion: SelectionCriterion,
    grid: &LambdaGrid,
) -> Result<SplineFit> {
    let lambda = select_lambda(system, criterion, grid)?;
    let mut fit = fit_with_gram(design, ctx, lambda)?;
    fit.edf = Some(system.edf(lambda));
    fit.criterion = Some(criterion);
    fit.criterion_value = Some(system.criterion(lambda, criterion));
    fit.gcv_value = Some(system.criterion(lambda, SelectionCriterion::Gcv));
    fit.gml_value = Some(system.criterion(lambda, SelectionCriterion::Gml));
    Ok(fit)
}

// =====================================================================
// First-order optimality check
// =====================================================================

/// Weighted residual moments `M_k = (1/n) Σ_i w_i (f̂_i − y_i) t_i^k`,
/// `k = 0..m-1`. At an exact solution these vanish, since the weighted
/// residual is orthogonal to the null space of the penalty.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    pub moments: Vec<f64>,
    pub threshold: f64,
    pub passed: bool,
}

impl OptimalityReport {
    pub fn max_abs_moment(&self) -> f64 {
        self.moments.iter().fold(0.0f64, |a, &m| a.max(m.abs()))
    }
}

/// Checks first-order optimality of a fit against its design.
pub fn check_optimality(design: &Design, fit: &SplineFit) -> Result<OptimalityReport> {
    if design.t() != fit.abscissae() {
        return Err(Error::invalid(
            "fit was produced on a different design than the one supplied",
        ));
    }
    let n = design.len();
    let mut moments = vec![0.0; fit.order()];
    for i in 0..n {
        let r = fit.fitted()[i] - design.y()[i];
        let mut tp = 1.0;
        for mk in moments.iter_mut() {
            *mk += design.w()[i] * r * tp;
            tp *= design.t()[i];
        }
    }
    for mk in moments.iter_mut() {
        *mk /= n as f64;
    }
    let scale = design
        .y()
        .iter()
        .fold(0.0f64, |a, &y| a.max(y.abs()))
        .max(1e-12);
    let threshold = 1e-6 * scale;
    let passed = moments.iter().all(|mk| mk.abs() <= threshold);
    Ok(OptimalityReport {
        moments,
        threshold,
        passed,
    })
}

// =====================================================================
// Tests
// =====================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn noisy_design(n: usize, seed: u64) -> Design {
        let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &ti)| (2.0 * std::f64::consts::PI * ti).sin()
                + 0.3 * rng::standard_normal(seed, 0, i as u64))
            .collect();
        Design::new(t, y, None).unwrap()
    }

    fn weighted_design(n: usize, seed: u64) -> Design {
        let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &ti)| ti * ti + 0.1 * rng::standard_normal(seed, 1, i as u64))
            .collect();
        let w: Vec<f64> = (0..n).map(|i| 0.5 + (i % 4) as f64).collect();
        Design::new(t, y, Some(w)).unwrap()
    }

    #[test]
    fn single_point_fit_reproduces_datum() {
        let design = Design::new(vec![0.4], vec![2.5], None).unwrap();
        let fit = fit(&design, &PiecewisePenalty::uniform(), 1, 0.37).unwrap();
        assert!((fit.fitted()[0] - 2.5).abs() < 1e-12);
        assert!((fit.predict(0.4).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn tiny_lambda_approaches_interpolation() {
        // Small designs keep the Gram matrix comfortably away from the
        // float floor, so the interpolation limit is numerically clean.
        let design = noisy_design(40, 7);
        let fit2 = fit(&design, &PiecewisePenalty::uniform(), 2, 1e-12).unwrap();
        let scale = design.y().iter().fold(0.0f64, |a, &y| a.max(y.abs()));
        let err = design
            .y()
            .iter()
            .zip(fit2.fitted())
            .fold(0.0f64, |a, (&y, &f)| a.max((y - f).abs()));
        assert!(err <= 1e-3 * scale, "m=2 interpolation gap {err}");

        let design = noisy_design(100, 8);
        let fit1 = fit(&design, &PiecewisePenalty::uniform(), 1, 1e-12).unwrap();
        let err = design
            .y()
            .iter()
            .zip(fit1.fitted())
            .fold(0.0f64, |a, (&y, &f)| a.max((y - f).abs()));
        assert!(err <= 1e-4 * scale, "m=1 interpolation gap {err}");
    }

    #[test]
    fn huge_lambda_approaches_weighted_polynomial_regression() {
        let design = weighted_design(50, 3);
        let fit = fit(&design, &PiecewisePenalty::uniform(), 2, 1e9).unwrap();
        // Weighted linear least squares oracle via 2×2 normal equations.
        let (mut s0, mut s1, mut s2, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..design.len() {
            let (t, y, w) = (design.t()[i], design.y()[i], design.w()[i]);
            s0 += w;
            s1 += w * t;
            s2 += w * t * t;
            sy += w * y;
            sty += w * t * y;
        }
        let det = s0 * s2 - s1 * s1;
        let a = (s2 * sy - s1 * sty) / det;
        let b = (s0 * sty - s1 * sy) / det;
        for i in 0..design.len() {
            let line = a + b * design.t()[i];
            assert!(
                (fit.fitted()[i] - line).abs() < 1e-5,
                "fitted {} vs line {line}",
                fit.fitted()[i]
            );
        }
    }

    #[test]
    fn matches_block_system_oracle() {
        // Independent solve of the full KKT system by dense LU.
        let design = weighted_design(12, 11);
        let penalty = PiecewisePenalty::new(vec![0.5], vec![1.0, 3.0], 1.0).unwrap();
        let m = 2;
        let lambda = 0.01;
        let ctx = rkhs::gram_matrix(&design, &penalty, m).unwrap();
        let n = design.len();
        let nl = n as f64 * lambda;
        let mut block = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..n {
                block[(i, j)] = ctx.gram()[(i, j)];
            }
            block[(i, i)] += nl / design.w()[i];
            for j in 0..m {
                block[(i, n + j)] = ctx.null_basis_matrix()[(i, j)];
                block[(n + j, i)] = ctx.null_basis_matrix()[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(n + m);
        for i in 0..n {
            rhs[i] = design.y()[i];
        }
        let sol = block.lu().solve(&rhs).unwrap();

        let fit = fit_with_gram(&design, &ctx, lambda).unwrap();
        for i in 0..n {
            assert!((fit.kernel_coefficients()[i] - sol[i]).abs() < 1e-8);
        }
        for j in 0..m {
            assert!((fit.null_coefficients()[j] - sol[n + j]).abs() < 1e-8);
        }
    }

    #[test]
    fn fitted_values_invariant_under_penalty_rescaling() {
        // (λ, ρ) and (λ/c, cρ) define the same objective.
        let design = noisy_design(60, 21);
        let penalty = PiecewisePenalty::new(vec![0.3, 0.6], vec![1.0, 5.0, 0.5], 1.0).unwrap();
        let c = 7.3;
        let scaled = penalty.scaled(c).unwrap();
        let lambda = 1e-3;
        let f1 = fit(&design, &penalty, 2, lambda).unwrap();
        let f2 = fit(&design, &scaled, 2, lambda / c).unwrap();
        for (a, b) in f1.fitted().iter().zip(f2.fitted()) {
            assert!((a - b).abs() < 1e-9);
        }
        // Criterion values share the invariance.
        let ctx1 = rkhs::gram_matrix(&design, &penalty, 2).unwrap();
        let ctx2 = rkhs::gram_matrix(&design, &scaled, 2).unwrap();
        let s1 = PenaltySystem::new(&design, &ctx1).unwrap();
        let s2 = PenaltySystem::new(&design, &ctx2).unwrap();
        for crit in [SelectionCriterion::Gcv, SelectionCriterion::Gml] {
            let v1 = s1.criterion(lambda, crit);
            let v2 = s2.criterion(lambda / c, crit);
            assert!((v1 - v2).abs() <= 1e-9 * v1.abs(), "{crit}: {v1} vs {v2}");
        }
        assert!((s1.edf(lambda) - s2.edf(lambda / c)).abs() < 1e-8);
    }

    #[test]
    fn hat_matrix_reproduces_fit_and_is_contractive() {
        let design = weighted_design(35, 5);
        let penalty = PiecewisePenalty::uniform();
        let ctx = rkhs::gram_matrix(&design, &penalty, 2).unwrap();
        let system = PenaltySystem::new(&design, &ctx).unwrap();
        let lambda = 3e-4;
        let fit = fit_with_gram(&design, &ctx, lambda).unwrap();

        let a = system.hat_matrix(lambda).unwrap();
        let ay = &a * DVector::from_column_slice(design.y());
        for i in 0..design.len() {
            assert!((ay[i] - fit.fitted()[i]).abs() < 1e-9);
        }
        let smoothed = system.apply_smoother(lambda, design.y()).unwrap();
        for i in 0..design.len() {
            assert!((smoothed[i] - fit.fitted()[i]).abs() < 1e-9);
        }

        for ev in system.smoother_eigenvalues(lambda) {
            assert!((-1e-8..=1.0 + 1e-8).contains(&ev), "eigenvalue {ev}");
        }
        let tr_direct = a.trace();
        assert!((system.edf(lambda) - tr_direct).abs() < 1e-8);
        assert!(
            (system.trace_complement(lambda) - (design.len() as f64 - tr_direct)).abs() < 1e-8
        );
    }

    #[test]
    fn criteria_are_positive_and_selection_is_interior() {
        let design = noisy_design(80, 33);
        let penalty = PiecewisePenalty::uniform();
        let ctx = rkhs::gram_matrix(&design, &penalty, 2).unwrap();
        let system = PenaltySystem::new(&design, &ctx).unwrap();
        let grid = LambdaGrid::default();
        for crit in [SelectionCriterion::Gcv, SelectionCriterion::Gml] {
            let lambda = select_lambda(&system, crit, &grid).unwrap();
            assert!(lambda > grid.min && lambda < grid.max, "{crit} λ = {lambda}");
            let v = system.criterion(lambda, crit);
            assert!(v.is_finite() && v > 0.0);
            assert!(v <= system.criterion(grid.min, crit));
            assert!(v <= system.criterion(grid.max, crit));
        }
    }

    #[test]
    fn flat_criterion_ties_break_to_smallest_lambda() {
        // y ≡ 0 ⇒ reduced data g ≡ 0 exactly ⇒ GCV ≡ 0 on the whole grid.
        let n = 25;
        let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let design = Design::new(t, vec![0.0; n], None).unwrap();
        let ctx = rkhs::gram_matrix(&design, &PiecewisePenalty::uniform(), 2).unwrap();
        let system = PenaltySystem::new(&design, &ctx).unwrap();
        let grid = LambdaGrid::default();
        let lambda = select_lambda(&system, SelectionCriterion::Gcv, &grid).unwrap();
        assert_eq!(lambda, grid.min);
    }

    #[test]
    fn selection_is_deterministic() {
        let design = noisy_design(50, 9);
        let ctx = rkhs::gram_matrix(&design, &PiecewisePenalty::uniform(), 2).unwrap();
        let system = PenaltySystem::new(&design, &ctx).unwrap();
        let grid = LambdaGrid::default();
        let l1 = select_lambda(&system, SelectionCriterion::Gcv, &grid).unwrap();
        let l2 = select_lambda(&system, SelectionCriterion::Gcv, &grid).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn fit_auto_attaches_diagnostics() {
        let design = noisy_design(40, 2);
        let fit = fit_auto(
            &design,
            &PiecewisePenalty::uniform(),
            2,
            SelectionCriterion::Gcv,
            &LambdaGrid::default(),
        )
        .unwrap();
        let edf = fit.edf().unwrap();
        assert!(edf > 2.0 && edf < 40.0, "edf {edf}");
        assert_eq!(fit.criterion(), Some(SelectionCriterion::Gcv));
        assert!(fit.criterion_value().unwrap() > 0.0);
    }

    #[test]
    fn optimality_holds_for_weighted_fits() {
        let design = weighted_design(45, 17);
        let penalty = PiecewisePenalty::new(vec![0.4], vec![1.0, 6.0], 1.0).unwrap();
        for m in 1..=3usize {
            let f = fit(&design, &penalty, m, 2e-4).unwrap();
            let report = check_optimality(&design, &f).unwrap();
            assert!(
                report.passed,
                "m={m} moments {:?} vs {}",
                report.moments, report.threshold
            );
            assert_eq!(report.moments.len(), m);
        }
    }

    #[test]
    fn rejects_bad_lambda_and_degenerate_sizes() {
        let design = noisy_design(10, 1);
        let p = PiecewisePenalty::uniform();
        assert!(fit(&design, &p, 2, 0.0).is_err());
        assert!(fit(&design, &p, 2, f64::NAN).is_err());
        assert!(fit(&design, &p, 2, -1.0).is_err());

        let tiny = Design::new(vec![0.3, 0.7], vec![1.0, 2.0], None).unwrap();
        // n = m: direct fit OK (pure null-space regression), system refused.
        let f = fit(&tiny, &p, 2, 0.1).unwrap();
        assert!((f.fitted()[0] - 1.0).abs() < 1e-9);
        let ctx = rkhs::gram_matrix(&tiny, &p, 2).unwrap();
        assert!(PenaltySystem::new(&tiny, &ctx).is_err());
    }

    #[test]
    fn predict_matches_fitted_at_design_points() {
        let design = weighted_design(30, 29);
        let penalty = PiecewisePenalty::new(vec![0.55], vec![2.0, 0.4], 1.0).unwrap();
        let f = fit(&design, &penalty, 2, 1e-3).unwrap();
        for (i, &ti) in design.t().iter().enumerate() {
            assert!((f.predict(ti).unwrap() - f.fitted()[i]).abs() < 1e-10);
        }
        assert!(f.predict(1.5).is_err());
        assert!(f.predict(-0.1).is_err());
    }

    #[test]
    fn predict_deriv_consistency() {
        let design = noisy_design(40, 41);
        let f = fit(&design, &PiecewisePenalty::uniform(), 2, 1e-3).unwrap();
        let x = 0.43;
        assert_eq!(
            f.predict_deriv(x, 0).unwrap().to_bits(),
            f.predict(x).unwrap().to_bits()
        );
        let h = 1e-6;
        let fd = (f.predict(x + h).unwrap() - f.predict(x - h).unwrap()) / (2.0 * h);
        let d1 = f.predict_deriv(x, 1).unwrap();
        assert!((d1 - fd).abs() < 1e-5, "{d1} vs {fd}");
        assert!(f.predict_deriv(x, 4).is_err()); // 2m = 4 is out of range
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn gcv_nonnegative_and_edf_in_range(seed in 0u64..200, loglam in -8.0f64..0.0) {
            let design = noisy_design(15, seed);
            let ctx = rkhs::gram_matrix(&design, &PiecewisePenalty::uniform(), 2).unwrap();
            let system = PenaltySystem::new(&design, &ctx).unwrap();
            let lambda = 10f64.powf(loglam);
            prop_assert!(system.criterion(lambda, SelectionCriterion::Gcv) >= 0.0);
            let edf = system.edf(lambda);
            prop_assert!(edf >= 2.0 - 1e-8 && edf <= 15.0 + 1e-8);
        }
    }
}
