//! Recovery and clustering scores.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grassmann::{principal_angle, Subspace};

/// Minimum-cost assignment of rows to columns (Hungarian / Kuhn–Munkres with
/// potentials). Requires `rows <= cols`; returns the column for each row.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = (cost.nrows(), cost.ncols());
    assert!(n <= m, "assignment needs rows <= cols");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    /// Angle of true subspace `i` to its matched recovered subspace.
    pub angles: Vec<f64>,
    /// `matching[i]` is the recovered subspace paired with true subspace `i`.
    pub matching: Vec<usize>,
    pub worst: f64,
    pub median: f64,
    pub mean: f64,
}

impl AngleReport {
    pub fn from_angles(angles: Vec<f64>, matching: Vec<usize>) -> Self {
        let mut sorted = angles.clone();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k == 0 {
            f64::NAN
        } else if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        let worst = sorted.last().copied().unwrap_or(f64::NAN);
        let mean = angles.iter().sum::<f64>() / k as f64;
        AngleReport { angles, matching, worst, median, mean }
    }

    /// `theta_worst=… theta_median=… theta_mean=…`, the line printed by the CLI.
    pub fn summary_line(&self) -> String {
        format!("theta_worst={:.6e} theta_median={:.6e} theta_mean={:.6e}", self.worst, self.median, self.mean)
    }
}

/// `K x K` matrix of largest principal angles, `[i][j]` = true `i` vs recovered `j`.
pub fn angle_matrix(truth: &[Subspace], recovered: &[Subspace]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(truth.len(), recovered.len());
    for (i, t) in truth.iter().enumerate() {
        for (j, r) in recovered.iter().enumerate() {
            out[(i, j)] = principal_angle(t, r)?;
        }
    }
    Ok(out)
}

/// Pairs recovered with true subspaces to minimize the total angle and
/// reports the matched angles.
pub fn match_and_angles(truth: &[Subspace], recovered: &[Subspace]) -> Result<AngleReport> {
    if truth.len() != recovered.len() || truth.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} true vs {} recovered subspaces",
            truth.len(),
            recovered.len()
        )));
    }
    let cost = angle_matrix(truth, recovered)?;
    let matching = min_cost_assignment(&cost);
    let angles = matching.iter().enumerate().map(|(i, &j)| cost[(i, j)]).collect();
    Ok(AngleReport::from_angles(angles, matching))
}

/// `‖A − B‖_F / ‖A‖_F`.
pub fn relative_residual(original: &DMatrix<f64>, recovered: &DMatrix<f64>) -> Result<f64> {
    if original.shape() != recovered.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", original.shape(), recovered.shape())));
    }
    let denom = original.norm();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((original - recovered).norm() / denom)
}

/// Orthogonal projection `U Uᵀ X` of fully observed columns.
pub fn project_columns(u: &Subspace, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != u.ambient_dim() {
        return Err(Error::ShapeMismatch(format!("{} rows vs ambient dimension {}", x.nrows(), u.ambient_dim())));
    }
    Ok(u.basis() * u.basis().tr_mul(x))
}

/// Percentage of inliers misclassified under the best one-to-one matching
/// of predicted to true labels. `None` predictions always count as errors;
/// columns with `outlier_mask[j]` are ignored.
pub fn segmentation_error(
    true_labels: &[usize],
    predicted: &[Option<usize>],
    outlier_mask: &[bool],
) -> Result<f64> {
    if true_labels.len() != predicted.len() || true_labels.len() != outlier_mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} true labels, {} predictions, {} mask entries",
            true_labels.len(),
            predicted.len(),
            outlier_mask.len()
        )));
    }
    let inliers: Vec<usize> = (0..true_labels.len()).filter(|&j| !outlier_mask[j]).collect();
    if inliers.is_empty() {
        return Err(Error::EmptyInliers);
    }
    let mut t_ids: Vec<usize> = inliers.iter().map(|&j| true_labels[j]).collect();
    t_ids.sort_unstable();
    t_ids.dedup();
    let mut p_ids: Vec<usize> = inliers.iter().filter_map(|&j| predicted[j]).collect();
    p_ids.sort_unstable();
    p_ids.dedup();

    let size = t_ids.len().max(p_ids.len());
    let mut agree = DMatrix::<f64>::zeros(size, size);
    for &j in &inliers {
        if let Some(p) = predicted[j] {
            let ti = t_ids.binary_search(&true_labels[j]).unwrap();
            let pi = p_ids.binary_search(&p).unwrap();
            agree[(ti, pi)] += 1.0;
        }
    }
    let assignment = min_cost_assignment(&(-&agree));
    let correct: f64 = assignment.iter().enumerate().map(|(i, &j)| agree[(i, j)]).sum();
    Ok(100.0 * (inliers.len() as f64 - correct) / inliers.len() as f64)
}
