//! Linear mixing model types and constraint checks.
//!
//! An observed scene `X` (bands x pixels) is modeled as `X = A*S + E`
//! where `A` holds endmember signatures in its columns, `S` holds
//! per-pixel abundance fractions in its columns, and `E` is sensor
//! noise. Abundances are subject to nonnegativity (ANC) and, softly,
//! to the sum-to-one constraint (ASC).

use ndarray::Array2;

use crate::error::{Result, UnmixError};

/// Default tolerance for post-solver ASC validation. The delta-weighted
/// augmentation enforces sum-to-one only softly, so exact unit sums are
/// not expected.
pub const DEFAULT_ASC_TOL: f64 = 0.05;

/// Observed hyperspectral data, one column per pixel.
///
/// Pixel ordering is row-major over the spatial grid: pixel index
/// `= row * cols + col`. Negative entries are clamped to zero at
/// construction and the clamp count is retained.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    data: Array2<f64>,
    spatial_dims: Option<(usize, usize)>,
    clamp_count: usize,
}

impl ObservationMatrix {
    /// Builds an observation from raw band-by-pixel data, clamping
    /// negative entries to zero.
    pub fn from_data(mut data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::Shape(format!(
                "observation must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(UnmixError::DegenerateData(
                "observation contains non-finite entries".into(),
            ));
        }
        let mut clamp_count = 0usize;
        data.mapv_inplace(|v| {
            if v < 0.0 {
                clamp_count += 1;
                0.0
            } else {
                v
            }
        });
        Ok(Self {
            data,
            spatial_dims: None,
            clamp_count,
        })
    }

    /// Attaches spatial dimensions; `rows * cols` must equal the pixel count.
    pub fn with_spatial_dims(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.num_pixels() {
            return Err(UnmixError::Shape(format!(
                "spatial dims {}x{} do not cover {} pixels",
                rows,
                cols,
                self.num_pixels()
            )));
        }
        self.spatial_dims = Some((rows, cols));
        Ok(self)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn num_bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn spatial_dims(&self) -> Option<(usize, usize)> {
        self.spatial_dims
    }

    /// Number of entries clamped to zero at construction.
    pub fn clamp_count(&self) -> usize {
        self.clamp_count
    }
}

/// Endmember spectral signatures, one column per material.
#[derive(Debug, Clone)]
pub struct EndmemberMatrix {
    data: Array2<f64>,
    labels: Option<Vec<String>>,
}

impl EndmemberMatrix {
    /// Validates nonnegativity and rejects all-zero columns (a zero
    /// signature is degenerate).
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::Shape("endmember matrix must be at least 1x1".into()));
        }
        if data.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(UnmixError::DegenerateData(
                "endmember matrix must be finite and nonnegative".into(),
            ));
        }
        for (p, col) in data.columns().into_iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                return Err(UnmixError::DegenerateData(format!(
                    "endmember column {p} is all zero"
                )));
            }
        }
        Ok(Self { data, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.num_endmembers() {
            return Err(UnmixError::Shape(format!(
                "{} labels for {} endmembers",
                labels.len(),
                self.num_endmembers()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn num_bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_endmembers(&self) -> usize {
        self.data.ncols()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// Abundance fractions, one column per pixel.
#[derive(Debug, Clone)]
pub struct AbundanceMatrix {
    data: Array2<f64>,
}

impl AbundanceMatrix {
    /// Validates the nonnegativity constraint at construction.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::Shape("abundance matrix must be at least 1x1".into()));
        }
        if data.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(UnmixError::DegenerateData(
                "abundance matrix must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { data })
    }

    /// Wraps externally loaded data without the ANC check, so that
    /// constraint status can be inspected with [`validate_abundances`].
    pub fn from_raw(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::Shape("abundance matrix must be at least 1x1".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn num_endmembers(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_pixels(&self) -> usize {
        self.data.ncols()
    }
}

/// Additive sensor noise; entries may be negative.
#[derive(Debug, Clone)]
pub struct NoiseMatrix {
    data: Array2<f64>,
}

impl NoiseMatrix {
    pub fn new(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

/// Constraint violations found by [`validate_abundances`].
#[derive(Debug, Clone, Default)]
pub struct ConstraintReport {
    /// `(endmember, pixel)` indices of negative entries.
    pub anc_violations: Vec<(usize, usize)>,
    /// `(pixel, column_sum)` for pixels with `|sum - 1| > asc_tol`.
    pub asc_violations: Vec<(usize, f64)>,
}

impl ConstraintReport {
    pub fn is_empty(&self) -> bool {
        self.anc_violations.is_empty() && self.asc_violations.is_empty()
    }
}

/// Forward model `X = A*S + E`. Negative entries produced by noise are
/// clamped to zero; the clamp count is available on the result.
pub fn synthesize_lmm(
    endmembers: &EndmemberMatrix,
    abundances: &AbundanceMatrix,
    noise: Option<&NoiseMatrix>,
) -> Result<ObservationMatrix> {
    if endmembers.num_endmembers() != abundances.num_endmembers() {
        return Err(UnmixError::Shape(format!(
            "endmember count {} != abundance rows {}",
            endmembers.num_endmembers(),
            abundances.num_endmembers()
        )));
    }
    let mut observed = endmembers.data().dot(abundances.data());
    if let Some(e) = noise {
        if e.data().dim() != observed.dim() {
            return Err(UnmixError::Shape(format!(
                "noise is {:?}, observation is {:?}",
                e.data().dim(),
                observed.dim()
            )));
        }
        observed += e.data();
    }
    ObservationMatrix::from_data(observed)
}

/// Reports ANC and ASC violations without modifying the input.
pub fn validate_abundances(abundances: &AbundanceMatrix, asc_tol: f64) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    let data = abundances.data();
    for ((p, i), &v) in data.indexed_iter() {
        if v < 0.0 {
            report.anc_violations.push((p, i));
        }
    }
    for (i, col) in data.columns().into_iter().enumerate() {
        let sum: f64 = col.sum();
        if (sum - 1.0).abs() > asc_tol {
            report.asc_violations.push((i, sum));
        }
    }
    report
}

/// Frobenius norm of the reconstruction error `||X - A*S||_F` (not squared).
pub fn residual_fro(
    observed: &ObservationMatrix,
    endmembers: &EndmemberMatrix,
    abundances: &AbundanceMatrix,
) -> Result<f64> {
    if observed.num_bands() != endmembers.num_bands()
        || endmembers.num_endmembers() != abundances.num_endmembers()
        || observed.num_pixels() != abundances.num_pixels()
    {
        return Err(UnmixError::Shape(format!(
            "X {}x{}, A {}x{}, S {}x{} do not conform",
            observed.num_bands(),
            observed.num_pixels(),
            endmembers.num_bands(),
            endmembers.num_endmembers(),
            abundances.num_endmembers(),
            abundances.num_pixels()
        )));
    }
    Ok(residual_fro_raw(
        observed.data(),
        endmembers.data(),
        abundances.data(),
    ))
}

/// `||X - A*S||_F` on raw arrays; shapes must already conform.
pub(crate) fn residual_fro_raw(x: &Array2<f64>, a: &Array2<f64>, s: &Array2<f64>) -> f64 {
    let diff = x - &a.dot(s);
    diff.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent triple-loop matmul-and-add oracle.
    fn lmm_oracle(a: &Array2<f64>, s: &Array2<f64>, e: Option<&Array2<f64>>) -> Array2<f64> {
        let (l, p) = a.dim();
        let n = s.ncols();
        let mut out = Array2::zeros((l, n));
        for i in 0..l {
            for j in 0..n {
                let mut acc = 0.0;
                for q in 0..p {
                    acc += a[[i, q]] * s[[q, j]];
                }
                if let Some(e) = e {
                    acc += e[[i, j]];
                }
                out[[i, j]] = acc;
            }
        }
        out
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>())
    }

    #[test]
    fn synthesize_identity_case() {
        let a = EndmemberMatrix::new(Array2::eye(2)).unwrap();
        let s = AbundanceMatrix::new(Array2::eye(2)).unwrap();
        let x = synthesize_lmm(&a, &s, None).unwrap();
        assert_eq!(x.data(), &Array2::eye(2));
        assert_eq!(x.clamp_count(), 0);
    }

    #[test]
    fn synthesize_convex_combination() {
        let a = EndmemberMatrix::new(arr2(&[[1.0, 3.0], [2.0, 4.0], [0.5, 0.0]])).unwrap();
        let s = AbundanceMatrix::new(arr2(&[[0.5], [0.5]])).unwrap();
        let x = synthesize_lmm(&a, &s, None).unwrap();
        for l in 0..3 {
            let expected = (a.data()[[l, 0]] + a.data()[[l, 1]]) / 2.0;
            assert!((x.data()[[l, 0]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn synthesize_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = random_matrix(&mut rng, 4, 3);
        let s = random_matrix(&mut rng, 3, 5);
        // Small positive noise so clamping stays out of the comparison.
        let e = random_matrix(&mut rng, 4, 5) * 0.01;
        let expected = lmm_oracle(&a, &s, Some(&e));
        let x = synthesize_lmm(
            &EndmemberMatrix::new(a).unwrap(),
            &AbundanceMatrix::new(s).unwrap(),
            Some(&NoiseMatrix::new(e)),
        )
        .unwrap();
        for (got, want) in x.data().iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesize_clamps_negative_noise() {
        let a = EndmemberMatrix::new(arr2(&[[0.1]])).unwrap();
        let s = AbundanceMatrix::new(arr2(&[[1.0]])).unwrap();
        let e = NoiseMatrix::new(arr2(&[[-0.5]]));
        let x = synthesize_lmm(&a, &s, Some(&e)).unwrap();
        assert_eq!(x.data()[[0, 0]], 0.0);
        assert_eq!(x.clamp_count(), 1);
    }

    #[test]
    fn synthesize_rejects_shape_mismatch() {
        let a = EndmemberMatrix::new(arr2(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        let s = AbundanceMatrix::new(arr2(&[[1.0], [1.0], [1.0]])).unwrap();
        assert!(matches!(
            synthesize_lmm(&a, &s, None),
            Err(UnmixError::Shape(_))
        ));
    }

    #[test]
    fn validate_flags_negative_entry() {
        let s = AbundanceMatrix::from_raw(arr2(&[[0.5, 1.0], [-0.01, 0.0]])).unwrap();
        let report = validate_abundances(&s, 1.0);
        assert_eq!(report.anc_violations, vec![(1, 0)]);
    }

    #[test]
    fn validate_accepts_exact_sums() {
        let s = AbundanceMatrix::new(arr2(&[[0.3, 1.0], [0.7, 0.0]])).unwrap();
        let report = validate_abundances(&s, 1e-9);
        assert!(report.is_empty());
    }

    #[test]
    fn validate_flags_asc_deviation() {
        let s = AbundanceMatrix::new(arr2(&[[0.4], [0.5]])).unwrap();
        let report = validate_abundances(&s, 0.05);
        assert_eq!(report.asc_violations.len(), 1);
        assert_eq!(report.asc_violations[0].0, 0);
        assert!((report.asc_violations[0].1 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn validate_empty_on_one_hot_columns() {
        let s = AbundanceMatrix::new(arr2(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])).unwrap();
        assert!(validate_abundances(&s, 1e-12).is_empty());
    }

    #[test]
    fn residual_zero_at_exact_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 5, 2);
        let s = random_matrix(&mut rng, 2, 6);
        let am = EndmemberMatrix::new(a).unwrap();
        let sm = AbundanceMatrix::new(s).unwrap();
        let x = synthesize_lmm(&am, &sm, None).unwrap();
        let scale = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(residual_fro(&x, &am, &sm).unwrap() <= f64::EPSILON * scale * 16.0);
    }

    #[test]
    fn residual_equals_noise_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 3, 2);
        let s = random_matrix(&mut rng, 2, 4);
        let e = random_matrix(&mut rng, 3, 4) * 0.1; // positive, no clamping
        let am = EndmemberMatrix::new(a).unwrap();
        let sm = AbundanceMatrix::new(s).unwrap();
        let x = synthesize_lmm(&am, &sm, Some(&NoiseMatrix::new(e.clone()))).unwrap();
        let e_norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((residual_fro(&x, &am, &sm).unwrap() - e_norm).abs() < 1e-12);
    }

    #[test]
    fn residual_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x_raw = random_matrix(&mut rng, 3, 3);
        let a_raw = random_matrix(&mut rng, 3, 3);
        let s_raw = random_matrix(&mut rng, 3, 3);
        let prod = lmm_oracle(&a_raw, &s_raw, None);
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = x_raw[[i, j]] - prod[[i, j]];
                acc += d * d;
            }
        }
        let expected = acc.sqrt();
        let x = ObservationMatrix::from_data(x_raw).unwrap();
        let a = EndmemberMatrix::new(a_raw).unwrap();
        let s = AbundanceMatrix::new(s_raw).unwrap();
        assert!((residual_fro(&x, &a, &s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn spatial_dims_must_cover_pixels() {
        let x = ObservationMatrix::from_data(Array2::ones((2, 6))).unwrap();
        assert!(x.clone().with_spatial_dims(2, 3).is_ok());
        assert!(x.with_spatial_dims(2, 2).is_err());
    }

    #[test]
    fn endmember_rejects_zero_column() {
        assert!(EndmemberMatrix::new(arr2(&[[1.0, 0.0], [1.0, 0.0]])).is_err());
    }
}
