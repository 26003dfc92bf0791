//! Angle-based evaluation of unmixing results.
//!
//! Spectral angle distance (SAD) compares estimated endmember
//! signatures with references; abundance angle distance (AAD) compares
//! per-pixel abundance columns. Factorizations recover endmembers in
//! arbitrary column order, so scoring first aligns the estimate to the
//! truth by the assignment minimizing total SAD.

use ndarray::{Array2, ArrayView1};

use crate::error::{Result, UnmixError};
use crate::model::{AbundanceMatrix, EndmemberMatrix};

/// Alignment and angle summary of an estimate against ground truth.
///
/// `permutation[j]` is the true endmember index matched to estimated
/// column `j`. `per_endmember_sad` is indexed by true endmember.
/// Pixels whose true abundance column is all zero are excluded from
/// `rms_aad` (their `per_pixel_aad` entry is NaN) and counted in
/// `excluded_pixels`.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub permutation: Vec<usize>,
    pub per_endmember_sad: Vec<f64>,
    pub per_pixel_aad: Vec<f64>,
    pub rms_sad: f64,
    pub rms_aad: f64,
    pub excluded_pixels: usize,
}

/// Endmember-only summary used when no abundance truth exists.
#[derive(Debug, Clone)]
pub struct EndmemberScore {
    pub permutation: Vec<usize>,
    pub per_endmember_sad: Vec<f64>,
    pub rms_sad: f64,
}

fn angle_between(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(UnmixError::Shape(format!(
            "angle between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(UnmixError::UndefinedAngle);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// Spectral angle distance `arccos(m . m_hat / (||m|| ||m_hat||))` in
/// radians; invariant to positive scaling of either argument.
pub fn sad(m: ArrayView1<'_, f64>, m_hat: ArrayView1<'_, f64>) -> Result<f64> {
    angle_between(m, m_hat)
}

/// Abundance angle distance; same contract as [`sad`] on length-P
/// abundance columns.
pub fn aad(a: ArrayView1<'_, f64>, a_hat: ArrayView1<'_, f64>) -> Result<f64> {
    angle_between(a, a_hat)
}

/// Root mean square of a list of angles.
fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Minimum-total-SAD alignment: `permutation[j]` is the true column
/// matched to estimated column `j`, computed by optimal assignment on
/// the P x P SAD cost matrix.
pub fn match_endmembers(a_true: &EndmemberMatrix, a_est: &EndmemberMatrix) -> Result<Vec<usize>> {
    if a_true.num_bands() != a_est.num_bands()
        || a_true.num_endmembers() != a_est.num_endmembers()
    {
        return Err(UnmixError::Shape(format!(
            "true {}x{} vs estimated {}x{}",
            a_true.num_bands(),
            a_true.num_endmembers(),
            a_est.num_bands(),
            a_est.num_endmembers()
        )));
    }
    let p = a_true.num_endmembers();
    let mut cost = Array2::zeros((p, p));
    for j in 0..p {
        for t in 0..p {
            cost[[j, t]] = sad(a_true.data().column(t), a_est.data().column(j))?;
        }
    }
    Ok(hungarian_min(&cost))
}

/// Aligns the estimate to the truth and computes SAD/AAD aggregates.
///
/// A zero estimated column facing a nonzero truth scores the maximal
/// nonnegative angle pi/2 rather than erroring out the whole report.
pub fn score(
    a_true: &EndmemberMatrix,
    a_est: &EndmemberMatrix,
    s_true: &AbundanceMatrix,
    s_est: &AbundanceMatrix,
) -> Result<EvaluationReport> {
    if s_true.num_pixels() != s_est.num_pixels()
        || s_true.num_endmembers() != s_est.num_endmembers()
        || s_true.num_endmembers() != a_true.num_endmembers()
    {
        return Err(UnmixError::Shape(format!(
            "abundances {}x{} vs {}x{} with {} endmembers",
            s_true.num_endmembers(),
            s_true.num_pixels(),
            s_est.num_endmembers(),
            s_est.num_pixels(),
            a_true.num_endmembers()
        )));
    }
    let permutation = match_endmembers(a_true, a_est)?;
    let p = permutation.len();
    let n = s_true.num_pixels();

    let mut per_endmember_sad = vec![0.0; p];
    for j in 0..p {
        let t = permutation[j];
        per_endmember_sad[t] = sad(a_true.data().column(t), a_est.data().column(j))?;
    }
    let rms_sad = rms(&per_endmember_sad);

    // Estimated abundance rows reordered to true endmember positions.
    let mut aligned = Array2::zeros((p, n));
    for j in 0..p {
        aligned
            .row_mut(permutation[j])
            .assign(&s_est.data().row(j));
    }

    let mut per_pixel_aad = vec![f64::NAN; n];
    let mut included: Vec<f64> = Vec::with_capacity(n);
    let mut excluded_pixels = 0usize;
    for i in 0..n {
        let truth = s_true.data().column(i);
        if truth.iter().all(|&v| v == 0.0) {
            excluded_pixels += 1;
            continue;
        }
        let est = aligned.column(i);
        let angle = if est.iter().all(|&v| v == 0.0) {
            std::f64::consts::FRAC_PI_2
        } else {
            aad(truth, est)?
        };
        per_pixel_aad[i] = angle;
        included.push(angle);
    }
    let rms_aad = rms(&included);

    Ok(EvaluationReport {
        permutation,
        per_endmember_sad,
        per_pixel_aad,
        rms_sad,
        rms_aad,
        excluded_pixels,
    })
}

/// SAD-only scoring against reference signatures.
pub fn score_endmembers(
    a_true: &EndmemberMatrix,
    a_est: &EndmemberMatrix,
) -> Result<EndmemberScore> {
    let permutation = match_endmembers(a_true, a_est)?;
    let p = permutation.len();
    let mut per_endmember_sad = vec![0.0; p];
    for j in 0..p {
        let t = permutation[j];
        per_endmember_sad[t] = sad(a_true.data().column(t), a_est.data().column(j))?;
    }
    let rms_sad = rms(&per_endmember_sad);
    Ok(EndmemberScore {
        permutation,
        per_endmember_sad,
        rms_sad,
    })
}

/// Minimum-cost perfect assignment (Hungarian algorithm with row and
/// column potentials, O(n^3)). Returns `assign[row] = column`.
fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if assigned_row[j] != 0 {
            assign[assigned_row[j] - 1] = j - 1;
        }
    }
    assign
}
