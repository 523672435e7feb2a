//! Points on the Grassmannian and the per-vector geometry of the L2,1 loss.
//!
//! A [`Subspace`] is stored as an `n x d` matrix with orthonormal columns.
//! For one (possibly incomplete) column `x_Ω` the loss is
//!
//! ```text
//! F(U; x) = min_w ‖x_Ω − U_Ω w‖₂
//! ```
//!
//! whose Grassmannian gradient is the rank-one matrix `−e wᵀ`, with `w` the
//! least-squares weights and `e` the zero-padded, normalized residual. A step
//! along the geodesic in the `−∇F` direction has a closed form that only
//! needs `U w`, `e` and `w` (see [`geodesic_step`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthonormality tolerance checked when a basis is handed in from outside.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Drift in `‖UᵀU − I‖_F` above which a step re-orthonormalizes. Equal to
/// [`ORTHONORMALITY_TOL`], so every stepped basis passes
/// [`Subspace::from_orthonormal`].
pub const REORTHONORMALIZE_TRIGGER: f64 = ORTHONORMALITY_TOL;
/// Residual norm below which a column is considered exactly fit.
pub const DEGENERATE_RESIDUAL: f64 = 1e-12;
/// Smallest singular value of `U_Ω` accepted by the least-squares solve.
pub const RANK_TOL: f64 = 1e-10;
/// Norm below which a column cannot be spherized.
pub const ZERO_NORM: f64 = 1e-14;

/// A `d`-dimensional subspace of `R^n`, held as an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wraps a basis that is already orthonormal (to [`ORTHONORMALITY_TOL`]).
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        check_shape(basis.nrows(), basis.ncols())?;
        let s = Subspace { basis };
        let err = s.orthonormality_error();
        if err > ORTHONORMALITY_TOL {
            return Err(Error::InvalidShape(format!(
                "basis columns are not orthonormal (‖UᵀU − I‖_F = {err:e})"
            )));
        }
        Ok(s)
    }

    /// Orthonormal basis for the column span of `m` (thin QR).
    pub fn orthonormalize(m: DMatrix<f64>) -> Result<Self> {
        check_shape(m.nrows(), m.ncols())?;
        let scale = m.norm().max(f64::MIN_POSITIVE);
        let qr = m.qr();
        let r = qr.r();
        let min_diag = r.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if min_diag <= 1e-13 * scale {
            return Err(Error::RankDeficient(min_diag));
        }
        Ok(Subspace { basis: qr.q() })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// `‖UᵀU − I_d‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut g = self.basis.tr_mul(&self.basis);
        for i in 0..g.nrows() {
            g[(i, i)] -= 1.0;
        }
        g.norm()
    }
}

fn check_shape(n: usize, d: usize) -> Result<()> {
    if d == 0 || n == 0 || d > n {
        return Err(Error::InvalidShape(format!("need 1 <= d <= n, got n={n}, d={d}")));
    }
    Ok(())
}

/// One data column observed on the row set `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedVector {
    column_id: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl ObservedVector {
    /// `indices` must be strictly increasing and match `values` in length.
    pub fn new(column_id: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidObservation(format!(
                "column {column_id}: {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidObservation(format!(
                "column {column_id}: indices must be strictly increasing"
            )));
        }
        Ok(ObservedVector { column_id, indices, values })
    }

    /// A fully observed column.
    pub fn full(column_id: usize, values: &[f64]) -> Self {
        ObservedVector { column_id, indices: (0..values.len()).collect(), values: values.to_vec() }
    }

    pub fn column_id(&self) -> usize {
        self.column_id
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Length-`n` vector with the unobserved entries set to zero.
    pub fn zero_filled(&self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

/// Rank-one Grassmannian gradient `−e wᵀ` of the L2,1 loss for one column.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneGradient {
    /// Normalized residual, zero-padded to the ambient dimension.
    pub e: DVector<f64>,
    /// Least-squares weights.
    pub w: DVector<f64>,
    /// `‖w‖₂`, the only nonzero singular value of the gradient.
    pub sigma: f64,
    /// `‖r‖₂` before normalization; this is the loss value for the column.
    pub residual_norm: f64,
}

impl RankOneGradient {
    /// The column is already fit exactly: loss zero, `e` undefined.
    pub fn is_degenerate(&self) -> bool {
        self.residual_norm < DEGENERATE_RESIDUAL
    }
}

/// Scales the observed values to unit ℓ2 norm.
pub fn spherize(x: &ObservedVector) -> Result<ObservedVector> {
    let norm = x.norm();
    if x.is_empty() || !(norm >= ZERO_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(ObservedVector {
        column_id: x.column_id,
        indices: x.indices.clone(),
        values: x.values.iter().map(|v| v / norm).collect(),
    })
}

/// Rows `indices` of the basis, as a `|Ω| x d` matrix.
pub fn restricted_basis(u: &Subspace, indices: &[usize]) -> Result<DMatrix<f64>> {
    let n = u.ambient_dim();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, dim: n });
    }
    let b = u.basis();
    Ok(DMatrix::from_fn(indices.len(), u.rank(), |i, j| b[(indices[i], j)]))
}

/// `argmin_w ‖x_Ω − U_Ω w‖₂` by Householder QR of `U_Ω`.
pub fn least_squares_weights(u: &Subspace, x: &ObservedVector) -> Result<DVector<f64>> {
    let d = u.rank();
    if x.len() < d {
        return Err(Error::Underdetermined { observed: x.len(), rank: d });
    }
    let a = restricted_basis(u, x.indices())?;
    let qr = a.qr();
    let r = qr.r();
    let smin = r.singular_values().iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !(smin > RANK_TOL) {
        return Err(Error::RankDeficient(smin));
    }
    let mut rhs = DVector::from_column_slice(x.values());
    qr.q_tr_mul(&mut rhs);
    let head = rhs.rows(0, d).into_owned();
    r.solve_upper_triangular(&head)
        .ok_or(Error::RankDeficient(smin))
}

/// Residual `x_Ω − U_Ω w` on the observed rows.
pub fn restricted_residual(u: &Subspace, x: &ObservedVector, w: &DVector<f64>) -> Vec<f64> {
    let b = u.basis();
    x.indices()
        .iter()
        .zip(x.values())
        .map(|(&i, &v)| v - b.row(i).iter().zip(w.iter()).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// Rank-one gradient from the least-squares weights `w` for `x`.
///
/// When the residual is below [`DEGENERATE_RESIDUAL`] the returned gradient
/// has `e = 0` and reports [`RankOneGradient::is_degenerate`].
pub fn residual_gradient(u: &Subspace, x: &ObservedVector, w: &DVector<f64>) -> RankOneGradient {
    let r = restricted_residual(u, x, w);
    let residual_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut e = DVector::zeros(u.ambient_dim());
    if residual_norm >= DEGENERATE_RESIDUAL {
        for (&i, v) in x.indices().iter().zip(&r) {
            e[i] = v / residual_norm;
        }
    }
    RankOneGradient { e, w: w.clone(), sigma: w.norm(), residual_norm }
}

/// Least-squares weights and residual norm of `x` against `u`.
pub fn fit(u: &Subspace, x: &ObservedVector) -> Result<(DVector<f64>, f64)> {
    let w = least_squares_weights(u, x)?;
    let r = restricted_residual(u, x, &w);
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((w, norm))
}

/// Geodesic step of length `eta` in the `−∇F` direction:
///
/// ```text
/// U(η) = U + ((cos ησ − 1) U w/‖w‖ + sin ησ · e) wᵀ/‖w‖
/// ```
pub fn geodesic_step(u: &Subspace, g: &RankOneGradient, eta: f64) -> Result<Subspace> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidParams(format!("step size must be >= 0, got {eta}")));
    }
    geodesic_rotate(u, g, eta * g.sigma)
}

/// Rotates `u` by `angle` radians along the geodesic spanned by `(U w, e)`.
///
/// [`geodesic_step`] uses `angle = η‖w‖`; step rules with another magnitude
/// convention (e.g. the ℓ2 loss) call this directly.
pub fn geodesic_rotate(u: &Subspace, g: &RankOneGradient, angle: f64) -> Result<Subspace> {
    if g.is_degenerate() {
        return Err(Error::DegenerateGradient);
    }
    let n = u.ambient_dim();
    if g.e.len() != n || g.w.len() != u.rank() {
        return Err(Error::ShapeMismatch(format!(
            "gradient factors {}x{} do not match a {}x{} basis",
            g.e.len(),
            g.w.len(),
            n,
            u.rank()
        )));
    }
    if g.sigma == 0.0 || angle == 0.0 {
        return Ok(u.clone());
    }
    let w_hat = &g.w / g.sigma;
    let uw = u.basis() * &w_hat;
    let (s, c) = angle.sin_cos();
    let dir = uw * (c - 1.0) + &g.e * s;
    let mut basis = u.basis().clone();
    basis.ger(1.0, &dir, &w_hat, 1.0);
    let next = Subspace { basis };
    if next.orthonormality_error() > REORTHONORMALIZE_TRIGGER {
        return Subspace::orthonormalize(next.basis);
    }
    Ok(next)
}

/// Largest principal angle between two subspaces, in `[0, π/2]`.
///
/// Equal to `arccos σ_min(U1ᵀU2)`. For angles below π/4 the value is taken
/// from the sine side, `arcsin σ_max(U2 − U1 U1ᵀ U2)`, which keeps full
/// relative precision for tiny angles.
pub fn principal_angle(u1: &Subspace, u2: &Subspace) -> Result<f64> {
    if u1.ambient_dim() != u2.ambient_dim() || u1.rank() != u2.rank() {
        return Err(Error::ShapeMismatch(format!(
            "subspaces {}x{} and {}x{}",
            u1.ambient_dim(),
            u1.rank(),
            u2.ambient_dim(),
            u2.rank()
        )));
    }
    let cross = u1.basis().tr_mul(u2.basis());
    let cmin = cross.singular_values().iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let theta = cmin.clamp(0.0, 1.0).acos();
    if theta > std::f64::consts::FRAC_PI_4 {
        return Ok(theta);
    }
    let perp = u2.basis() - u1.basis() * cross;
    let smax = perp.singular_values().iter().fold(0.0f64, |a, &v| a.max(v));
    Ok(smax.clamp(0.0, 1.0).asin())
}
