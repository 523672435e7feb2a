//! Synthetic robust-recovery and subspace-clustering problems with ground
//! truth.
//!
//! Low-rank problems are `X = L Σ Rᵀ` with Gaussian factors and a fixed
//! diagonal `Σ`, so the condition number of the inlier block is exactly
//! `s_max / s_min`. Unions of subspaces stack `K` Gaussian rank-`d` blocks.
//! Outlier columns are i.i.d. Gaussian, and each column is observed on an
//! exact-size random row subset.
//!
//! Masks and outlier columns are drawn from per-column streams derived from
//! the seed, so the output does not depend on generation order.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grassmann::{ObservedVector, Subspace};
use crate::rng::{self, Rng};

// Stream layout for `rng::derived`: 0 drives the factors, the others are
// keyed by column.
const MASK_STREAM: u64 = 1 << 32;
const OUTLIER_STREAM: u64 = 2 << 32;
const NOISE_STREAM: u64 = 3 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub outlier_fraction: f64,
    pub observe_fraction: f64,
    pub outlier_sigma: f64,
    pub inlier_noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        SyntheticSpec {
            n,
            m,
            d,
            s_min: 1.0,
            s_max: 1.0,
            outlier_fraction: 0.0,
            observe_fraction: 1.0,
            outlier_sigma: 1.0,
            inlier_noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.n.min(self.m) {
            return Err(Error::InvalidSpec(format!(
                "need 1 <= d <= min(n, m), got n={}, m={}, d={}",
                self.n, self.m, self.d
            )));
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max) {
            return Err(Error::InvalidSpec(format!(
                "need 0 < s_min <= s_max, got [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        check_fractions(self.outlier_fraction, self.observe_fraction)?;
        check_sigmas(self.outlier_sigma, self.inlier_noise_sigma)
    }

    /// The `d` diagonal entries of `Σ`, evenly spaced from `s_max` down to `s_min`.
    pub fn singular_values(&self) -> Vec<f64> {
        if self.d == 1 {
            return vec![self.s_max];
        }
        (0..self.d)
            .map(|i| self.s_max - (self.s_max - self.s_min) * i as f64 / (self.d - 1) as f64)
            .collect()
    }
}

fn check_fractions(outlier: f64, observe: f64) -> Result<()> {
    if !(0.0..1.0).contains(&outlier) {
        return Err(Error::InvalidSpec(format!("outlier fraction must be in [0, 1), got {outlier}")));
    }
    if !(observe > 0.0 && observe <= 1.0) {
        return Err(Error::InvalidSpec(format!("observe fraction must be in (0, 1], got {observe}")));
    }
    Ok(())
}

fn check_sigmas(outlier_sigma: f64, noise: f64) -> Result<()> {
    if !(outlier_sigma > 0.0) || !(noise >= 0.0) {
        return Err(Error::InvalidSpec("outlier sigma must be > 0 and noise sigma >= 0".into()));
    }
    Ok(())
}

/// Generation-time labels and subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One subspace for low-rank problems, `K` for unions.
    pub subspaces: Vec<Subspace>,
    /// Cluster label per column, `None` for outliers.
    pub labels: Vec<Option<usize>>,
}

impl GroundTruth {
    pub fn outlier_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_none).collect()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    /// The full `n x m` matrix before masking.
    pub dense: DMatrix<f64>,
    /// Observed entries of every column.
    pub columns: Vec<ObservedVector>,
    pub truth: GroundTruth,
}

impl SyntheticProblem {
    pub fn ambient_dim(&self) -> usize {
        self.dense.nrows()
    }
}

fn observe(column_id: usize, full: &DVector<f64>, fraction: f64, seed: u64) -> ObservedVector {
    let n = full.len();
    let count = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    if count == n {
        return ObservedVector::full(column_id, full.as_slice());
    }
    let mut r = rng::derived(seed, MASK_STREAM + column_id as u64);
    let mut rows = index::sample(&mut r, n, count).into_vec();
    rows.sort_unstable();
    let values = rows.iter().map(|&i| full[i]).collect();
    ObservedVector::new(column_id, rows, values).expect("sorted unique rows")
}

fn outlier_column(n: usize, sigma: f64, seed: u64, column_id: usize) -> DVector<f64> {
    let mut r = rng::derived(seed, OUTLIER_STREAM + column_id as u64);
    DVector::from_fn(n, |_, _| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
}

fn add_noise(col: &mut DVector<f64>, sigma: f64, seed: u64, column_id: usize) {
    if sigma == 0.0 {
        return;
    }
    let mut r = rng::derived(seed, NOISE_STREAM + column_id as u64);
    for v in col.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut r);
        *v += sigma * z;
    }
}

fn orthonormal_factor(n: usize, d: usize, r: &mut Rng) -> (DMatrix<f64>, Subspace) {
    loop {
        let l = rng::gaussian_matrix(n, d, r);
        if let Ok(s) = Subspace::orthonormalize(l.clone()) {
            return (l, s);
        }
    }
}

/// `X = L Σ Rᵀ` with `⌊ρ m⌋` columns replaced by Gaussian outliers.
pub fn gen_low_rank(spec: &SyntheticSpec) -> Result<SyntheticProblem> {
    spec.validate()?;
    let SyntheticSpec { n, m, d, .. } = *spec;
    let mut r = rng::seeded(spec.seed);
    let (l, subspace) = orthonormal_factor(n, d, &mut r);
    let right = rng::gaussian_matrix(m, d, &mut r);
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(spec.singular_values()));
    let mut dense = l * sigma * right.transpose();

    let n_out = (spec.outlier_fraction * m as f64).floor() as usize;
    let outliers = index::sample(&mut r, m, n_out).into_vec();
    let mut labels = vec![Some(0); m];
    for &j in &outliers {
        labels[j] = None;
        dense.set_column(j, &outlier_column(n, spec.outlier_sigma, spec.seed, j));
    }
    for (j, label) in labels.iter().enumerate() {
        if label.is_some() {
            let mut c = dense.column(j).into_owned();
            add_noise(&mut c, spec.inlier_noise_sigma, spec.seed, j);
            dense.set_column(j, &c);
        }
    }
    let columns = (0..m)
        .map(|j| observe(j, &dense.column(j).into_owned(), spec.observe_fraction, spec.seed))
        .collect();
    Ok(SyntheticProblem { dense, columns, truth: GroundTruth { subspaces: vec![subspace], labels } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionSpec {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub inliers_per_subspace: usize,
    /// Fraction of all columns that are outliers.
    pub outlier_fraction: f64,
    pub observe_fraction: f64,
    pub outlier_sigma: f64,
    pub seed: u64,
}

impl UnionSpec {
    pub fn new(k: usize, d: usize, n: usize, inliers_per_subspace: usize) -> Self {
        UnionSpec {
            k,
            d,
            n,
            inliers_per_subspace,
            outlier_fraction: 0.0,
            observe_fraction: 1.0,
            outlier_sigma: 1.0,
            seed: 0,
        }
    }

    pub fn outlier_count(&self) -> usize {
        let inliers = (self.k * self.inliers_per_subspace) as f64;
        (inliers * self.outlier_fraction / (1.0 - self.outlier_fraction)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 || self.d > self.n || self.inliers_per_subspace == 0 {
            return Err(Error::InvalidSpec(format!(
                "need K >= 1, 1 <= d <= n and inliers per subspace >= 1 (K={}, d={}, n={}, per={})",
                self.k, self.d, self.n, self.inliers_per_subspace
            )));
        }
        check_fractions(self.outlier_fraction, self.observe_fraction)?;
        check_sigmas(self.outlier_sigma, 0.0)
    }
}

/// `K` blocks `Y_L Y_Rᵀ` of Gaussian factors, with outliers shuffled in at
/// random positions.
pub fn gen_union(spec: &UnionSpec) -> Result<SyntheticProblem> {
    spec.validate()?;
    let UnionSpec { k, d, n, inliers_per_subspace: per, .. } = *spec;
    let mut r = rng::seeded(spec.seed);
    let mut blocks = Vec::with_capacity(k);
    let mut subspaces = Vec::with_capacity(k);
    for _ in 0..k {
        let (left, s) = orthonormal_factor(n, d, &mut r);
        let right = rng::gaussian_matrix(per, d, &mut r);
        blocks.push(left * right.transpose());
        subspaces.push(s);
    }
    let n_out = spec.outlier_count();
    let mut labels: Vec<Option<usize>> =
        (0..k).flat_map(|i| std::iter::repeat_n(Some(i), per)).chain(std::iter::repeat_n(None, n_out)).collect();
    labels.shuffle(&mut r);

    let m = labels.len();
    let mut dense = DMatrix::zeros(n, m);
    let mut next = vec![0usize; k];
    for (j, label) in labels.iter().enumerate() {
        match *label {
            Some(i) => {
                dense.set_column(j, &blocks[i].column(next[i]));
                next[i] += 1;
            }
            None => dense.set_column(j, &outlier_column(n, spec.outlier_sigma, spec.seed, j)),
        }
    }
    let columns = (0..m)
        .map(|j| observe(j, &dense.column(j).into_owned(), spec.observe_fraction, spec.seed))
        .collect();
    Ok(SyntheticProblem { dense, columns, truth: GroundTruth { subspaces, labels } })
}
