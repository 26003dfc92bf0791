//! Initial factor pairs for the solver.
//!
//! Three entry points: seeded random factors, geometric endmember
//! extraction by iterative orthogonal-subspace projection over actual
//! pixels (VCA-style), and per-pixel fully constrained least squares
//! abundances realized as nonnegative least squares on the
//! delta-augmented system.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, UnmixError};
use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

/// How to produce the initial `(A, S)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Random,
    /// Endmembers by projection-based extraction, abundances by FCLS.
    VcaFcls,
}

/// Initialization request; the seed fully determines the output for a
/// fixed input.
#[derive(Debug, Clone, Copy)]
pub struct InitSpec {
    pub method: InitMethod,
    pub seed: u64,
    /// Sum-to-one weight passed to FCLS.
    pub delta: f64,
}

/// Dispatches on [`InitSpec::method`].
pub fn initialize(
    x: &ObservationMatrix,
    num_endmembers: usize,
    spec: &InitSpec,
) -> Result<(EndmemberMatrix, AbundanceMatrix)> {
    match spec.method {
        InitMethod::Random => init_random(
            x.num_bands(),
            num_endmembers,
            x.num_pixels(),
            spec.seed,
        ),
        InitMethod::VcaFcls => {
            let a = init_vca(x, num_endmembers, spec.seed)?;
            let s = init_fcls(x, &a, spec.delta)?;
            Ok((a, s))
        }
    }
}

/// Random factors: `A` i.i.d. uniform on `(0, 1]`, `S` columns uniform
/// then normalized to sum one.
pub fn init_random(
    num_bands: usize,
    num_endmembers: usize,
    num_pixels: usize,
    seed: u64,
) -> Result<(EndmemberMatrix, AbundanceMatrix)> {
    if num_bands == 0 || num_endmembers == 0 || num_pixels == 0 {
        return Err(UnmixError::Parameter(
            "init_random dimensions must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 1 - [0,1) lands on (0,1]; multiplicative updates cannot revive
    // exact zeros, so the initializer avoids them.
    let a = Array2::from_shape_fn((num_bands, num_endmembers), |_| 1.0 - rng.gen::<f64>());
    let mut s = Array2::from_shape_fn((num_endmembers, num_pixels), |_| 1.0 - rng.gen::<f64>());
    for mut col in s.columns_mut() {
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
    Ok((EndmemberMatrix::new(a)?, AbundanceMatrix::new(s)?))
}

/// Pixel indices selected by [`init_vca`], in selection order.
pub fn init_vca_indices(x: &ObservationMatrix, num_endmembers: usize, seed: u64) -> Result<Vec<usize>> {
    let l = x.num_bands();
    let n = x.num_pixels();
    let p = num_endmembers;
    if p < 1 || p > l.min(n) {
        return Err(UnmixError::Parameter(format!(
            "endmember count {p} must be in 1..=min(bands {l}, pixels {n})"
        )));
    }
    let data = x.data();
    let norms: Vec<f64> = data
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max).sqrt();
    let floor = 1e-12 * scale.max(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction: Array1<f64> = {
        let mut d = Array1::from_shape_fn(l, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            d.mapv_inplace(|v| v / norm);
        }
        d
    };

    let mut selected: Vec<usize> = Vec::with_capacity(p);
    // Orthonormal basis of the span of the selected signatures.
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(p);

    for step in 0..p {
        let mut best_idx = None;
        let mut best_score = floor;
        for i in 0..n {
            if selected.contains(&i) {
                continue;
            }
            let score = if step == 0 {
                direction.dot(&data.column(i)).abs()
            } else {
                // Residual norm after removing the selected span;
                // the basis is orthonormal, so the norm identity applies.
                let mut removed = 0.0;
                for q in &basis {
                    let c = q.dot(&data.column(i));
                    removed += c * c;
                }
                (norms[i] - removed).max(0.0).sqrt()
            };
            if score > best_score {
                best_score = score;
                best_idx = Some(i);
            }
        }
        let idx = best_idx.ok_or_else(|| {
            UnmixError::DegenerateData(format!(
                "rank-deficient data: no pixel has projection above {floor:.3e} at step {step}"
            ))
        })?;
        selected.push(idx);

        let mut q = data.column(idx).to_owned();
        for b in &basis {
            let c = b.dot(&q);
            q.scaled_add(-c, b);
        }
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if qn <= floor {
            return Err(UnmixError::DegenerateData(format!(
                "selected pixel {idx} lies in the span of earlier selections"
            )));
        }
        q.mapv_inplace(|v| v / qn);
        basis.push(q);
    }
    Ok(selected)
}

/// Projection-based endmember extraction over actual pixels.
///
/// The first pick maximizes `|d . x_i|` for a seeded random direction
/// `d`; each later pick maximizes the residual norm after projecting
/// the data onto the orthogonal complement of the selected span. The
/// returned signatures are columns of `x`.
pub fn init_vca(x: &ObservationMatrix, num_endmembers: usize, seed: u64) -> Result<EndmemberMatrix> {
    let selected = init_vca_indices(x, num_endmembers, seed)?;
    let l = x.num_bands();
    let mut a = Array2::zeros((l, selected.len()));
    for (col, &idx) in selected.iter().enumerate() {
        a.column_mut(col).assign(&x.data().column(idx));
    }
    EndmemberMatrix::new(a)
}

/// Per-pixel fully constrained least squares on the delta-augmented
/// system. The output satisfies nonnegativity exactly; sum-to-one holds
/// within `O(1/delta)`.
pub fn init_fcls(
    x: &ObservationMatrix,
    endmembers: &EndmemberMatrix,
    delta: f64,
) -> Result<AbundanceMatrix> {
    if x.num_bands() != endmembers.num_bands() {
        return Err(UnmixError::Shape(format!(
            "observation has {} bands, endmembers have {}",
            x.num_bands(),
            endmembers.num_bands()
        )));
    }
    if !(delta > 0.0) {
        return Err(UnmixError::Parameter(format!(
            "fcls delta must be > 0, got {delta}"
        )));
    }
    let p = endmembers.num_endmembers();
    let n = x.num_pixels();
    let a = endmembers.data();

    // Normal-equation pieces of the augmented system: the delta row adds
    // delta^2 to every entry of both A^T A and A^T x.
    let d2 = delta * delta;
    let gram = a.t().dot(a) + d2;
    let rhs = a.t().dot(x.data()) + d2;

    let mut s = Array2::zeros((p, n));
    let mut stalled = 0usize;
    let mut solver = NnlsWorkspace::new(p);
    for i in 0..n {
        let b: Vec<f64> = rhs.column(i).to_vec();
        let (sol, converged) = solver.solve(&gram, &b);
        if !converged {
            stalled += 1;
            log::debug!("fcls pixel {i}: NNLS iteration cap reached, best iterate kept");
        }
        for q in 0..p {
            s[[q, i]] = sol[q];
        }
    }
    if stalled > 0 {
        log::warn!("fcls: NNLS hit the iteration cap on {stalled} of {n} pixels");
    }
    AbundanceMatrix::new(s)
}

/// Active-set nonnegative least squares in normal-equation form:
/// minimizes `0.5 x^T G x - b^T x` subject to `x >= 0`.
struct NnlsWorkspace {
    p: usize,
    x: Vec<f64>,
    passive: Vec<bool>,
    grad: Vec<f64>,
}

const NNLS_TOL: f64 = 1e-8;

impl NnlsWorkspace {
    fn new(p: usize) -> Self {
        Self {
            p,
            x: vec![0.0; p],
            passive: vec![false; p],
            grad: vec![0.0; p],
        }
    }

    fn solve(&mut self, gram: &Array2<f64>, b: &[f64]) -> (Vec<f64>, bool) {
        let p = self.p;
        self.x.iter_mut().for_each(|v| *v = 0.0);
        self.passive.iter_mut().for_each(|v| *v = false);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tol = NNLS_TOL * scale;

        let max_outer = 3 * p + 30;
        let mut converged = false;
        for _ in 0..max_outer {
            // grad = b - G x
            for i in 0..p {
                let mut g = b[i];
                for j in 0..p {
                    g -= gram[[i, j]] * self.x[j];
                }
                self.grad[i] = g;
            }
            let mut best = None;
            let mut best_val = tol;
            for i in 0..p {
                if !self.passive[i] && self.grad[i] > best_val {
                    best_val = self.grad[i];
                    best = Some(i);
                }
            }
            let Some(enter) = best else {
                converged = true;
                break;
            };
            self.passive[enter] = true;

            for _ in 0..(p + 1) {
                let active: Vec<usize> = (0..p).filter(|&i| self.passive[i]).collect();
                let z = solve_subsystem(gram, b, &active);
                if z.iter().all(|&v| v > 0.0) {
                    self.x.iter_mut().for_each(|v| *v = 0.0);
                    for (k, &i) in active.iter().enumerate() {
                        self.x[i] = z[k];
                    }
                    break;
                }
                // Step back to the feasible boundary.
                let mut alpha = f64::INFINITY;
                for (k, &i) in active.iter().enumerate() {
                    if z[k] <= 0.0 {
                        let denom = self.x[i] - z[k];
                        if denom > 0.0 {
                            alpha = alpha.min(self.x[i] / denom);
                        }
                    }
                }
                if !alpha.is_finite() {
                    break;
                }
                for (k, &i) in active.iter().enumerate() {
                    self.x[i] += alpha * (z[k] - self.x[i]);
                }
                for i in 0..p {
                    if self.passive[i] && self.x[i] <= 1e-14 * scale {
                        self.x[i] = 0.0;
                        self.passive[i] = false;
                    }
                }
            }
        }
        (self.x.clone(), converged)
    }
}

/// Solves `G[active][active] z = b[active]` by Gaussian elimination with
/// partial pivoting; falls back to a tiny ridge on near-singular pivots.
fn solve_subsystem(gram: &Array2<f64>, b: &[f64], active: &[usize]) -> Vec<f64> {
    let m = active.len();
    let mut aug = vec![0.0f64; m * (m + 1)];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            aug[r * (m + 1) + c] = gram[[i, j]];
        }
        aug[r * (m + 1) + m] = b[i];
    }
    let pivot_floor = 1e-12
        * active
            .iter()
            .map(|&i| gram[[i, i]].abs())
            .fold(1.0f64, f64::max);
    for col in 0..m {
        let mut piv = col;
        let mut piv_val = aug[col * (m + 1) + col].abs();
        for r in (col + 1)..m {
            let v = aug[r * (m + 1) + col].abs();
            if v > piv_val {
                piv_val = v;
                piv = r;
            }
        }
        if piv_val < pivot_floor {
            aug[col * (m + 1) + col] += pivot_floor.max(1e-12);
        } else if piv != col {
            for c in 0..=m {
                aug.swap(col * (m + 1) + c, piv * (m + 1) + c);
            }
        }
        let inv = 1.0 / aug[col * (m + 1) + col];
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = aug[r * (m + 1) + col] * inv;
            if f != 0.0 {
                for c in col..=m {
                    aug[r * (m + 1) + c] -= f * aug[col * (m + 1) + c];
                }
            }
        }
    }
    (0..m)
        .map(|r| aug[r * (m + 1) + m] / aug[r * (m + 1) + r])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn obs(data: Array2<f64>) -> ObservationMatrix {
        ObservationMatrix::from_data(data).unwrap()
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let (a1, s1) = init_random(5, 3, 7, 42).unwrap();
        let (a2, s2) = init_random(5, 3, 7, 42).unwrap();
        assert_eq!(a1.data(), a2.data());
        assert_eq!(s1.data(), s2.data());
        let (a3, _) = init_random(5, 3, 7, 43).unwrap();
        assert_ne!(a1.data(), a3.data());
    }

    #[test]
    fn random_entries_positive_and_columns_normalized() {
        let (a, s) = init_random(6, 4, 11, 0).unwrap();
        assert!(a.data().iter().all(|&v| v > 0.0));
        assert!(s.data().iter().all(|&v| v > 0.0));
        for col in s.data().columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }

    /// Independent residual-norm scorer used to cross-check the
    /// selection sequence step by step.
    fn residual_norm_after(selected: &[usize], data: &Array2<f64>, candidate: usize) -> f64 {
        let mut basis: Vec<Array1<f64>> = Vec::new();
        for &idx in selected {
            let mut v = data.column(idx).to_owned();
            for b in &basis {
                let c = b.dot(&v);
                v.scaled_add(-c, b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-14 {
                v.mapv_inplace(|x| x / n);
                basis.push(v);
            }
        }
        let mut r = data.column(candidate).to_owned();
        for b in &basis {
            let c = b.dot(&r);
            r.scaled_add(-c, b);
        }
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn vca_recovers_unit_vector_pixels() {
        // Columns: the 3 unit vectors plus interior mixtures.
        let data = arr2(&[
            [1.0, 0.0, 0.0, 0.4, 0.3, 0.2],
            [0.0, 1.0, 0.0, 0.3, 0.4, 0.3],
            [0.0, 0.0, 1.0, 0.3, 0.3, 0.5],
        ]);
        let x = obs(data.clone());
        let picked = init_vca_indices(&x, 3, 5).unwrap();
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2], "must select the unit-vector pixels");

        // Brute-force: at each later step no other column scores higher.
        for step in 1..picked.len() {
            let chosen = picked[step];
            let chosen_score = residual_norm_after(&picked[..step], &data, chosen);
            for cand in 0..data.ncols() {
                if picked[..step].contains(&cand) {
                    continue;
                }
                let sc = residual_norm_after(&picked[..step], &data, cand);
                assert!(
                    sc <= chosen_score + 1e-12,
                    "step {step}: column {cand} scores {sc} > chosen {chosen_score}"
                );
            }
        }
    }

    #[test]
    fn vca_single_endmember_maximizes_seed_direction() {
        let data = arr2(&[[0.1, 0.9, 0.4], [0.2, 0.8, 0.1]]);
        let x = obs(data);
        let picked = init_vca_indices(&x, 1, 9).unwrap();
        assert_eq!(picked.len(), 1);
        // Deterministic under the same seed.
        assert_eq!(picked, init_vca_indices(&x, 1, 9).unwrap());
    }

    #[test]
    fn vca_signatures_are_source_pixels() {
        let data = arr2(&[
            [0.9, 0.1, 0.5, 0.2],
            [0.1, 0.8, 0.4, 0.3],
            [0.2, 0.2, 0.9, 0.1],
        ]);
        let x = obs(data.clone());
        let a = init_vca(&x, 2, 3).unwrap();
        let idx = init_vca_indices(&x, 2, 3).unwrap();
        for (col, &i) in idx.iter().enumerate() {
            for b in 0..3 {
                assert_eq!(a.data()[[b, col]], data[[b, i]]);
            }
        }
    }

    #[test]
    fn vca_errors_on_rank_deficient_data() {
        // All columns proportional: rank 1 < p = 2.
        let data = arr2(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]);
        let x = obs(data);
        assert!(matches!(
            init_vca_indices(&x, 2, 1),
            Err(UnmixError::DegenerateData(_))
        ));
    }

    #[test]
    fn fcls_recovers_identity_on_pure_pixels() {
        let a_data = arr2(&[
            [0.9, 0.1, 0.3],
            [0.1, 0.8, 0.2],
            [0.2, 0.3, 0.9],
            [0.4, 0.2, 0.1],
        ]);
        let a = EndmemberMatrix::new(a_data.clone()).unwrap();
        let x = obs(a_data);
        let s = init_fcls(&x, &a, 15.0).unwrap();
        for i in 0..3 {
            for q in 0..3 {
                let want = if q == i { 1.0 } else { 0.0 };
                assert!(
                    (s.data()[[q, i]] - want).abs() < 1e-3,
                    "pixel {i} endmember {q}: {}",
                    s.data()[[q, i]]
                );
            }
        }
    }

    #[test]
    fn fcls_matches_simplex_grid_search() {
        let a_data = arr2(&[[0.8, 0.2], [0.1, 0.7], [0.3, 0.4]]);
        let a = EndmemberMatrix::new(a_data.clone()).unwrap();
        let delta = 15.0;
        let mix = arr2(&[[0.5 * (0.8 + 0.2)], [0.5 * (0.1 + 0.7)], [0.5 * (0.3 + 0.4)]]);
        let x = obs(mix.clone());
        let s = init_fcls(&x, &a, delta).unwrap();

        // Grid search over the 2-simplex at step 1e-4 on the augmented system.
        let mut best = (f64::INFINITY, 0.0);
        let mut alpha = 0.0;
        while alpha <= 1.0 + 1e-12 {
            let mut cost = 0.0;
            for b in 0..3 {
                let r = mix[[b, 0]] - (alpha * a_data[[b, 0]] + (1.0 - alpha) * a_data[[b, 1]]);
                cost += r * r;
            }
            let asc = delta - delta * (alpha + (1.0 - alpha));
            cost += asc * asc;
            if cost < best.0 {
                best = (cost, alpha);
            }
            alpha += 1e-4;
        }
        assert!((s.data()[[0, 0]] - best.1).abs() < 1e-3);
        assert!((s.data()[[1, 0]] - (1.0 - best.1)).abs() < 1e-3);
        assert!((s.data()[[0, 0]] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn fcls_output_nonnegative_and_asc_tightens_with_delta() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a_data = Array2::from_shape_fn((8, 3), |_| rng.gen::<f64>());
        let s_true = {
            let mut s = Array2::from_shape_fn((3, 20), |_| rng.gen::<f64>());
            for mut col in s.columns_mut() {
                let sum = col.sum();
                col.mapv_inplace(|v| v / sum);
            }
            s
        };
        let noise = Array2::from_shape_fn((8, 20), |_| 0.02 * rng.gen::<f64>());
        let x = obs(a_data.dot(&s_true) + &noise);
        let a = EndmemberMatrix::new(a_data).unwrap();

        let mut prev_dev = f64::INFINITY;
        for delta in [1.0, 15.0, 100.0] {
            let s = init_fcls(&x, &a, delta).unwrap();
            assert!(s.data().iter().all(|&v| v >= 0.0));
            let dev: f64 = s
                .data()
                .columns()
                .into_iter()
                .map(|c| (c.sum() - 1.0).abs())
                .sum::<f64>()
                / 20.0;
            assert!(
                dev < prev_dev + 1e-12,
                "mean ASC deviation should shrink with delta: {dev} vs {prev_dev}"
            );
            prev_dev = dev;
        }
    }

    #[test]
    fn initialize_dispatches_both_methods() {
        let data = arr2(&[
            [0.9, 0.1, 0.5, 0.2, 0.3],
            [0.1, 0.8, 0.4, 0.3, 0.6],
            [0.2, 0.2, 0.9, 0.1, 0.4],
        ]);
        let x = obs(data);
        for method in [InitMethod::Random, InitMethod::VcaFcls] {
            let spec = InitSpec {
                method,
                seed: 1,
                delta: 15.0,
            };
            let (a, s) = initialize(&x, 2, &spec).unwrap();
            assert_eq!(a.num_endmembers(), 2);
            assert_eq!(s.num_pixels(), 5);
        }
    }
}
