//! Multiplicative-update unmixing solvers.
//!
//! Four objective variants over the factorization `X ~ A*S`:
//!
//! * `NMF`:        `||X - AS||_F^2`
//! * `SparseNMF`:  adds the L1/2 abundance penalty `lambda * sum_ij S_ij^(1/2)`
//! * `GNMF`:       adds the graph penalty `mu * Tr(S * Lap * S^T)`
//! * `SparseGNMF`: both penalties
//!
//! The sparsity weight is annealed as `lambda(t) = lambda0 * exp(-t/tau)`.
//! Each iteration updates the endmembers on the plain system, then the
//! abundances on the delta-augmented system that softly enforces the
//! abundance sum-to-one constraint:
//!
//! * `A <- A .* (X S^T) ./ (A S S^T + eps)`
//! * `S <- S .* (A^T X + mu S W) ./ (A^T A S + (lambda/2) S^(-1/2) + mu S D + eps)`
//!
//! where the `S^(-1/2)` power is entrywise with entries floored at `eps`,
//! and `W`, `D` are the affinity weights and degrees. Both rules preserve
//! nonnegativity. The stopping residual `||X - AS||_F` is always measured
//! on the unaugmented system.

use std::fmt;

use ndarray::{Array2, Zip};

use crate::error::{Result, UnmixError};
use crate::graph::{build_knn_graph, AffinityGraph, SigmaPolicy};
use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

/// Objective variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Nmf,
    SparseNmf,
    Gnmf,
    SparseGnmf,
}

impl Variant {
    pub fn has_sparsity(self) -> bool {
        matches!(self, Variant::SparseNmf | Variant::SparseGnmf)
    }

    pub fn has_graph(self) -> bool {
        matches!(self, Variant::Gnmf | Variant::SparseGnmf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::Nmf => "NMF",
            Variant::SparseNmf => "SparseNMF",
            Variant::Gnmf => "GNMF",
            Variant::SparseGnmf => "SparseGNMF",
        };
        f.write_str(name)
    }
}

/// All solver hyperparameters. Defaults carry the reference values
/// lambda0 = 0.05, tau = 25, mu = 0.1, delta = 15, threshold = 0.5e-3,
/// max_iter = 3000.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Initial sparsity weight; annealed by [`lambda_schedule`].
    pub lambda0: f64,
    /// Annealing time constant in iterations.
    pub tau: f64,
    /// Graph regularization weight.
    pub mu: f64,
    /// Sum-to-one augmentation weight.
    pub delta: f64,
    /// Residual stopping value.
    pub threshold: f64,
    /// Interpret `threshold` against `||X - AS||_F / ||X||_F` instead of
    /// the absolute residual. Off by default.
    pub relative_threshold: bool,
    pub max_iter: usize,
    pub knn_k: usize,
    pub sigma_policy: SigmaPolicy,
    /// Numerical floor for denominators and the inverse square root.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SparseGnmf,
            lambda0: 0.05,
            tau: 25.0,
            mu: 0.1,
            delta: 15.0,
            threshold: 0.5e-3,
            relative_threshold: false,
            max_iter: 3000,
            knn_k: 5,
            sigma_policy: SigmaPolicy::MedianHeuristic,
            epsilon: 1e-12,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 >= 0.0) {
            return Err(UnmixError::Parameter("lambda0 must be >= 0".into()));
        }
        if !(self.tau > 0.0) {
            return Err(UnmixError::Parameter("tau must be > 0".into()));
        }
        if !(self.mu >= 0.0) {
            return Err(UnmixError::Parameter("mu must be >= 0".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(UnmixError::Parameter("delta must be >= 0".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(UnmixError::Parameter("threshold must be >= 0".into()));
        }
        if self.max_iter == 0 {
            return Err(UnmixError::Parameter("max_iter must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(UnmixError::Parameter("epsilon must be > 0".into()));
        }
        Ok(())
    }

    /// Sparsity weight after variant gating: NMF and GNMF run with zero.
    pub fn effective_lambda0(&self) -> f64 {
        if self.variant.has_sparsity() {
            self.lambda0
        } else {
            0.0
        }
    }

    /// Graph weight after variant gating: NMF and SparseNMF run with zero.
    pub fn effective_mu(&self) -> f64 {
        if self.variant.has_graph() {
            self.mu
        } else {
            0.0
        }
    }
}

/// One per-iteration record of the objective decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Sparsity weight used this iteration.
    pub lambda: f64,
    /// `||X - AS||_F` on the unaugmented system.
    pub residual_fro: f64,
    /// `||X - AS||_F^2`.
    pub fit: f64,
    /// `lambda * sum_ij S_ij^(1/2)`.
    pub sparsity: f64,
    /// `mu * Tr(S * Lap * S^T)`.
    pub graph_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Threshold,
    MaxIter,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Threshold => f.write_str("threshold"),
            StopReason::MaxIter => f.write_str("max_iter"),
        }
    }
}

/// Output of [`run_unmix`].
#[derive(Debug, Clone)]
pub struct UnmixResult {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    pub trace: Vec<TraceRecord>,
    pub stop_reason: StopReason,
}

impl UnmixResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.trace.last().map(|r| r.residual_fro).unwrap_or(0.0)
    }
}

/// Annealed sparsity weight `lambda0 * exp(-t / tau)`; strictly
/// decreasing in `t` for positive `lambda0`.
pub fn lambda_schedule(t: usize, lambda0: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(UnmixError::Parameter(format!("tau must be > 0, got {tau}")));
    }
    Ok(schedule_value(t, lambda0, tau))
}

#[inline]
fn schedule_value(t: usize, lambda0: f64, tau: f64) -> f64 {
    lambda0 * (-(t as f64) / tau).exp()
}

/// Objective value split into its three components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub total: f64,
    pub fit: f64,
    pub sparsity: f64,
    pub graph_term: f64,
}

/// Evaluates the variant objective
/// `||X - AS||_F^2 + lambda ||S||_{1/2} + mu Tr(S Lap S^T)`.
pub fn objective(
    x: &Array2<f64>,
    a: &Array2<f64>,
    s: &Array2<f64>,
    lambda: f64,
    mu: f64,
    graph: Option<&AffinityGraph>,
) -> Result<ObjectiveParts> {
    check_factor_shapes(x, a, s)?;
    if mu > 0.0 && graph.is_none() {
        return Err(UnmixError::Parameter(
            "graph regularization requested (mu > 0) but no affinity graph given".into(),
        ));
    }
    let diff = x - &a.dot(s);
    let fit = diff.iter().map(|v| v * v).sum::<f64>();
    let sparsity = if lambda != 0.0 {
        lambda * s.iter().map(|v| v.sqrt()).sum::<f64>()
    } else {
        0.0
    };
    let graph_term = if mu > 0.0 {
        mu * graph.unwrap().quadratic_raw(s.view())
    } else {
        0.0
    };
    Ok(ObjectiveParts {
        total: fit + sparsity + graph_term,
        fit,
        sparsity,
        graph_term,
    })
}

/// Endmember update `A .* (X S^T) ./ (A S S^T + eps)`.
pub fn update_endmembers(
    a: &Array2<f64>,
    x: &Array2<f64>,
    s: &Array2<f64>,
    epsilon: f64,
) -> Result<Array2<f64>> {
    check_factor_shapes(x, a, s)?;
    let numer = x.dot(&s.t());
    let denom = a.dot(&s.dot(&s.t()));
    let mut out = a.clone();
    Zip::from(&mut out)
        .and(&numer)
        .and(&denom)
        .for_each(|o, &n, &d| *o *= n / (d + epsilon));
    Ok(out)
}

/// Abundance update
/// `S .* (A^T X + mu S W) ./ (A^T A S + (lambda/2) S^(-1/2) + mu S D + eps)`
/// with the inverse square root floored at `epsilon`.
///
/// Callers enforcing the sum-to-one constraint pass the delta-augmented
/// `A` and `X` from [`augment_asc`].
pub fn update_abundances(
    s: &Array2<f64>,
    a: &Array2<f64>,
    x: &Array2<f64>,
    lambda: f64,
    mu: f64,
    graph: Option<&AffinityGraph>,
    epsilon: f64,
) -> Result<Array2<f64>> {
    check_factor_shapes(x, a, s)?;
    if mu > 0.0 && graph.is_none() {
        return Err(UnmixError::Parameter(
            "graph regularization requested (mu > 0) but no affinity graph given".into(),
        ));
    }
    let mut numer = a.t().dot(x);
    let mut denom = a.t().dot(a).dot(s);
    if mu > 0.0 {
        let graph = graph.unwrap();
        if graph.num_pixels() != s.ncols() {
            return Err(UnmixError::Shape(format!(
                "graph covers {} pixels, abundances have {}",
                graph.num_pixels(),
                s.ncols()
            )));
        }
        let sw = graph.right_multiply(s.view());
        numer.scaled_add(mu, &sw);
        let degrees = graph.degrees();
        for (mut den_col, (s_col, &deg)) in denom
            .columns_mut()
            .into_iter()
            .zip(s.columns().into_iter().zip(degrees.iter()))
        {
            den_col.scaled_add(mu * deg, &s_col);
        }
    }
    if lambda != 0.0 {
        let half_lambda = 0.5 * lambda;
        Zip::from(&mut denom)
            .and(s)
            .for_each(|d, &v| *d += half_lambda / v.max(epsilon).sqrt());
    }
    let mut out = s.clone();
    Zip::from(&mut out)
        .and(&numer)
        .and(&denom)
        .for_each(|o, &n, &d| *o *= n / (d + epsilon));
    Ok(out)
}

/// Appends the sum-to-one rows: `X_aug` gains a last row of `delta`,
/// `A_aug` gains a last row of `delta`. Inputs are left unmodified.
pub fn augment_asc(
    x: &Array2<f64>,
    a: &Array2<f64>,
    delta: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(delta >= 0.0) {
        return Err(UnmixError::Parameter(format!(
            "delta must be >= 0, got {delta}"
        )));
    }
    Ok((append_constant_row(x, delta), append_constant_row(a, delta)))
}

fn append_constant_row(m: &Array2<f64>, value: f64) -> Array2<f64> {
    let (rows, cols) = m.dim();
    let mut out = Array2::zeros((rows + 1, cols));
    out.slice_mut(ndarray::s![..rows, ..]).assign(m);
    out.row_mut(rows).fill(value);
    out
}

fn check_factor_shapes(x: &Array2<f64>, a: &Array2<f64>, s: &Array2<f64>) -> Result<()> {
    if x.nrows() != a.nrows() || a.ncols() != s.nrows() || x.ncols() != s.ncols() {
        return Err(UnmixError::Shape(format!(
            "X {}x{}, A {}x{}, S {}x{} do not conform",
            x.nrows(),
            x.ncols(),
            a.nrows(),
            a.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(())
}

/// Runs the outer iteration until the residual drops below the
/// threshold or the iteration cap is reached.
///
/// Per iteration: anneal lambda, update `A` on the plain system, form
/// the delta-augmented system, update `S` on it, then record the
/// residual of the unaugmented system. When the variant carries the
/// graph term, the affinity graph is built once from `x` up front and
/// held fixed (the observed data never changes).
pub fn run_unmix(
    x: &ObservationMatrix,
    cfg: &SolverConfig,
    init: (EndmemberMatrix, AbundanceMatrix),
) -> Result<UnmixResult> {
    cfg.validate()?;
    let (a0, s0) = init;
    let mut a = a0.data().clone();
    let mut s = s0.data().clone();
    let x_raw = x.data();
    check_factor_shapes(x_raw, &a, &s)?;

    let lambda0 = cfg.effective_lambda0();
    let mu = cfg.effective_mu();
    let graph = if mu > 0.0 {
        Some(build_knn_graph(x, cfg.knn_k, cfg.sigma_policy)?)
    } else {
        None
    };

    let x_norm = x_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let x_aug = append_constant_row(x_raw, cfg.delta);

    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for t in 1..=cfg.max_iter {
        let lambda_t = schedule_value(t, lambda0, cfg.tau);

        a = update_endmembers(&a, x_raw, &s, cfg.epsilon)?;
        let a_aug = append_constant_row(&a, cfg.delta);
        s = update_abundances(&s, &a_aug, &x_aug, lambda_t, mu, graph.as_ref(), cfg.epsilon)?;

        if !a.iter().all(|v| v.is_finite()) || !s.iter().all(|v| v.is_finite()) {
            return Err(UnmixError::Diverged {
                iteration: t,
                trace,
            });
        }

        let diff = x_raw - &a.dot(&s);
        let fit = diff.iter().map(|v| v * v).sum::<f64>();
        let residual = fit.sqrt();
        let sparsity = if lambda_t != 0.0 {
            lambda_t * s.iter().map(|v| v.sqrt()).sum::<f64>()
        } else {
            0.0
        };
        let graph_term = match &graph {
            Some(g) => mu * g.quadratic_raw(s.view()),
            None => 0.0,
        };
        trace.push(TraceRecord {
            iteration: t,
            lambda: lambda_t,
            residual_fro: residual,
            fit,
            sparsity,
            graph_term,
        });

        let stop_metric = if cfg.relative_threshold {
            if x_norm > 0.0 {
                residual / x_norm
            } else {
                residual
            }
        } else {
            residual
        };
        if stop_metric < cfg.threshold {
            stop_reason = StopReason::Threshold;
            break;
        }
    }

    let endmembers = EndmemberMatrix::new(a).map_err(|e| {
        UnmixError::DegenerateData(format!("solver produced a degenerate endmember matrix: {e}"))
    })?;
    let abundances = AbundanceMatrix::new(s)?;
    Ok(UnmixResult {
        endmembers,
        abundances,
        trace,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() + 1e-3)
    }

    #[test]
    fn schedule_at_zero_is_lambda0() {
        assert_eq!(lambda_schedule(0, 0.05, 25.0).unwrap(), 0.05);
    }

    #[test]
    fn schedule_at_tau_divides_by_e() {
        let v = lambda_schedule(25, 0.05, 25.0).unwrap();
        assert!((v - 0.05 / std::f64::consts::E).abs() < 1e-15);
        assert!((v - 0.018394).abs() < 1e-6);
    }

    #[test]
    fn schedule_vanishes_for_large_t() {
        let v = lambda_schedule(2500, 0.05, 25.0).unwrap();
        assert!(v <= 0.05 * (-100.0f64).exp());
    }

    #[test]
    fn schedule_rejects_nonpositive_tau() {
        assert!(lambda_schedule(1, 0.05, 0.0).is_err());
        assert!(lambda_schedule(1, 0.05, -1.0).is_err());
    }

    #[test]
    fn objective_zero_at_exact_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 2);
        let s = random_matrix(&mut rng, 2, 5);
        let x = a.dot(&s);
        let parts = objective(&x, &a, &s, 0.0, 0.0, None).unwrap();
        assert_eq!(parts.total, 0.0);
        assert_eq!(parts.fit, 0.0);
        assert_eq!(parts.sparsity, 0.0);
        assert_eq!(parts.graph_term, 0.0);
    }

    #[test]
    fn objective_unit_entries_sparsity() {
        let p = 3;
        let n = 4;
        let s = Array2::ones((p, n));
        let a = Array2::ones((2, p));
        let x = a.dot(&s);
        let parts = objective(&x, &a, &s, 1.0, 0.0, None).unwrap();
        assert!((parts.sparsity - (p * n) as f64).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_componentwise_oracle() {
        use crate::graph::{build_knn_graph, SigmaPolicy};
        use crate::model::ObservationMatrix;

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (l, p, n) = (3, 4, 5);
        let x = random_matrix(&mut rng, l, n);
        let a = random_matrix(&mut rng, l, p);
        let s = random_matrix(&mut rng, p, n);
        let obs = ObservationMatrix::from_data(x.clone()).unwrap();
        let graph = build_knn_graph(&obs, 2, SigmaPolicy::MedianHeuristic).unwrap();
        let (lambda, mu) = (0.05, 0.1);

        // Three independent scalar loops.
        let mut fit = 0.0;
        for i in 0..l {
            for j in 0..n {
                let mut acc = 0.0;
                for q in 0..p {
                    acc += a[[i, q]] * s[[q, j]];
                }
                let d = x[[i, j]] - acc;
                fit += d * d;
            }
        }
        let mut sp = 0.0;
        for q in 0..p {
            for j in 0..n {
                sp += s[[q, j]].sqrt();
            }
        }
        sp *= lambda;
        let mut quad = 0.0;
        for (j, lidx, w) in graph.iter_edges() {
            for q in 0..p {
                let d = s[[q, j]] - s[[q, lidx]];
                quad += w * d * d;
            }
        }
        let gt = mu * 0.5 * quad;

        let parts = objective(&x, &a, &s, lambda, mu, Some(&graph)).unwrap();
        assert!((parts.fit - fit).abs() < 1e-10);
        assert!((parts.sparsity - sp).abs() < 1e-10);
        assert!((parts.graph_term - gt).abs() < 1e-10);
        assert!((parts.total - (fit + sp + gt)).abs() < 1e-10);
    }

    #[test]
    fn objective_requires_graph_when_mu_positive() {
        let a = Array2::ones((2, 2));
        let s = Array2::ones((2, 2));
        let x = a.dot(&s);
        assert!(matches!(
            objective(&x, &a, &s, 0.0, 0.1, None),
            Err(UnmixError::Parameter(_))
        ));
    }

    #[test]
    fn endmember_update_fixed_point_at_exact_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 5, 3);
        let s = random_matrix(&mut rng, 3, 6);
        let x = a.dot(&s);
        let a2 = update_endmembers(&a, &x, &s, 1e-12).unwrap();
        for (v0, v1) in a.iter().zip(a2.iter()) {
            assert!((v1 - v0).abs() <= 1e-9 * v0.abs().max(1.0));
        }
    }

    #[test]
    fn endmember_update_scalar_case() {
        let a = arr2(&[[1.0]]);
        let s = arr2(&[[1.0]]);
        let x = arr2(&[[2.0]]);
        let a2 = update_endmembers(&a, &x, &s, 1e-12).unwrap();
        assert!((a2[[0, 0]] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn endmember_update_preserves_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 4, 2);
            let s = random_matrix(&mut rng, 2, 5);
            let x = random_matrix(&mut rng, 4, 5);
            let a2 = update_endmembers(&a, &x, &s, 1e-12).unwrap();
            assert!(a2.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn abundance_update_fixed_point_without_regularizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 5, 3);
        let s = random_matrix(&mut rng, 3, 6);
        let x = a.dot(&s);
        let s2 = update_abundances(&s, &a, &x, 0.0, 0.0, None, 1e-12).unwrap();
        for (v0, v1) in s.iter().zip(s2.iter()) {
            assert!((v1 - v0).abs() <= 1e-9 * v0.abs().max(1.0));
        }
    }

    #[test]
    fn abundance_update_scalar_sparsity_case() {
        // s' = 1 * 1 / (1 + 0.5) = 2/3: sparsity pushes the entry down.
        let s = arr2(&[[1.0]]);
        let a = arr2(&[[1.0]]);
        let x = arr2(&[[1.0]]);
        let s2 = update_abundances(&s, &a, &x, 1.0, 0.0, None, 1e-12).unwrap();
        assert!((s2[[0, 0]] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn abundance_update_graph_fixed_point_for_constant_columns() {
        use crate::graph::{build_knn_graph, SigmaPolicy};
        use crate::model::ObservationMatrix;

        // Three pixels with identical columns: S W = S D exactly.
        let a = arr2(&[[0.6, 0.1], [0.2, 0.7]]);
        let s = arr2(&[[0.4, 0.4, 0.4], [0.6, 0.6, 0.6]]);
        let x = a.dot(&s);
        let obs = ObservationMatrix::from_data(x.clone()).unwrap();
        let graph = build_knn_graph(&obs, 1, SigmaPolicy::MedianHeuristic).unwrap();

        let sw = graph.right_multiply(s.view());
        for j in 0..3 {
            for q in 0..2 {
                let sd = s[[q, j]] * graph.degrees()[j];
                assert!((sw[[q, j]] - sd).abs() < 1e-12, "S W must equal S D here");
            }
        }

        let s2 = update_abundances(&s, &a, &x, 0.0, 0.5, Some(&graph), 1e-12).unwrap();
        for (v0, v1) in s.iter().zip(s2.iter()) {
            assert!((v1 - v0).abs() <= 1e-9);
        }
    }

    #[test]
    fn augment_appends_delta_rows() {
        let x = Array2::from_elem((3, 4), 0.2);
        let a = Array2::from_elem((3, 2), 0.5);
        let (xa, aa) = augment_asc(&x, &a, 15.0).unwrap();
        assert_eq!(xa.dim(), (4, 4));
        assert_eq!(aa.dim(), (4, 2));
        assert!(xa.row(3).iter().all(|&v| v == 15.0));
        assert!(aa.row(3).iter().all(|&v| v == 15.0));
        // Originals untouched.
        assert_eq!(x.dim(), (3, 4));

        let (x0, a0) = augment_asc(&x, &a, 0.0).unwrap();
        assert!(x0.row(3).iter().all(|&v| v == 0.0));
        assert!(a0.row(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn run_stops_immediately_at_exact_solution() {
        use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a_true = random_matrix(&mut rng, 3, 2);
        // Columns on the simplex so the augmented system is consistent.
        let mut s_true = random_matrix(&mut rng, 2, 16);
        for mut col in s_true.columns_mut() {
            let sum = col.sum();
            col.mapv_inplace(|v| v / sum);
        }
        let x_raw = a_true.dot(&s_true);
        let x = ObservationMatrix::from_data(x_raw).unwrap();
        let cfg = SolverConfig {
            variant: Variant::Nmf,
            max_iter: 100,
            ..Default::default()
        };
        let init = (
            EndmemberMatrix::new(a_true).unwrap(),
            AbundanceMatrix::new(s_true).unwrap(),
        );
        let result = run_unmix(&x, &cfg, init).unwrap();
        assert_eq!(result.iterations(), 1);
        assert_eq!(result.stop_reason, StopReason::Threshold);
        assert!(result.final_residual() < 1e-8);
    }

    #[test]
    fn run_honors_iteration_cap() {
        use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = ObservationMatrix::from_data(random_matrix(&mut rng, 4, 6)).unwrap();
        let cfg = SolverConfig {
            variant: Variant::Nmf,
            threshold: 0.0,
            max_iter: 10,
            ..Default::default()
        };
        let init = (
            EndmemberMatrix::new(random_matrix(&mut rng, 4, 2)).unwrap(),
            AbundanceMatrix::new(random_matrix(&mut rng, 2, 6)).unwrap(),
        );
        let result = run_unmix(&x, &cfg, init).unwrap();
        assert_eq!(result.iterations(), 10);
        assert_eq!(result.stop_reason, StopReason::MaxIter);
        for (i, rec) in result.trace.iter().enumerate() {
            assert_eq!(rec.iteration, i + 1);
        }
    }

    #[test]
    fn run_records_exact_lambda_schedule() {
        use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = ObservationMatrix::from_data(random_matrix(&mut rng, 4, 6)).unwrap();
        let cfg = SolverConfig {
            variant: Variant::SparseNmf,
            threshold: 0.0,
            max_iter: 40,
            ..Default::default()
        };
        let init = (
            EndmemberMatrix::new(random_matrix(&mut rng, 4, 2)).unwrap(),
            AbundanceMatrix::new(random_matrix(&mut rng, 2, 6)).unwrap(),
        );
        let result = run_unmix(&x, &cfg, init).unwrap();
        let mut prev = f64::INFINITY;
        for rec in &result.trace {
            let expected = lambda_schedule(rec.iteration, cfg.lambda0, cfg.tau).unwrap();
            assert_eq!(rec.lambda, expected, "lambda trace must match the schedule exactly");
            assert!(rec.lambda < prev);
            prev = rec.lambda;
        }
    }

    #[test]
    fn update_rejects_shape_mismatch() {
        let a = Array2::ones((3, 2));
        let s = Array2::ones((2, 4));
        let x_bad = Array2::ones((3, 5));
        assert!(update_endmembers(&a, &x_bad, &s, 1e-12).is_err());
        assert!(update_abundances(&s, &a, &x_bad, 0.0, 0.0, None, 1e-12).is_err());
    }
}
