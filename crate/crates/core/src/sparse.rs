//! Per-group PCA dictionaries, group sparse coding and the residual shrinkage.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GsrcError, Result};

/// Orthonormal `b × b` basis (atoms in columns) plus the mean removed before coding.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    basis: DMatrix<f64>,
    mean: DVector<f64>,
}

impl Dictionary {
    pub fn new(basis: DMatrix<f64>, mean: Option<DVector<f64>>) -> Result<Self> {
        let b = basis.nrows();
        if basis.ncols() != b {
            return Err(GsrcError::ShapeMismatch(format!(
                "dictionary basis must be square, got {}x{}",
                b,
                basis.ncols()
            )));
        }
        let mean = mean.unwrap_or_else(|| DVector::zeros(b));
        if mean.len() != b {
            return Err(GsrcError::ShapeMismatch(format!(
                "mean has length {}, expected {b}",
                mean.len()
            )));
        }
        Ok(Self { basis, mean })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn atoms(&self) -> usize {
        self.basis.ncols()
    }

    /// Largest entry of `|basisᵀ basis − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.basis.transpose() * &self.basis;
        let n = gram.nrows();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.basis.nrows() {
            return Err(GsrcError::ShapeMismatch(format!(
                "group has {rows} rows, dictionary expects {}",
                self.basis.nrows()
            )));
        }
        Ok(())
    }
}

/// Coefficients of a group under a dictionary, `b × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCode(pub DMatrix<f64>);

impl GroupCode {
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn check_same_shape(&self, other: &GroupCode) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(GsrcError::ShapeMismatch(format!(
                "codes are {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// PCA basis of the mean-removed group columns, atoms ordered by descending
/// eigenvalue.
///
/// Each atom's largest-magnitude entry is made positive (first one on ties) and
/// the sorted atoms are re-orthonormalized by modified Gram–Schmidt; any atom
/// that collapses is replaced from the standard basis, so rank-deficient
/// groups still get a full orthonormal basis.
pub fn learn_pca_dictionary(group: &DMatrix<f64>) -> Result<Dictionary> {
    let (b, k) = group.shape();
    if k == 0 || b == 0 {
        return Err(GsrcError::ShapeMismatch("empty group".into()));
    }
    if group.iter().any(|v| !v.is_finite()) {
        return Err(GsrcError::NonFinite("patch group"));
    }
    let mean = group.column_mean();
    let mut centered = group.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) / k as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });

    let eigvecs = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned());
    let standard = (0..b).map(|i| {
        let mut e = DVector::zeros(b);
        e[i] = 1.0;
        e
    });
    let mut atoms: Vec<DVector<f64>> = Vec::with_capacity(b);
    for mut candidate in eigvecs.chain(standard) {
        if atoms.len() == b {
            break;
        }
        // Two projection passes keep the completion orthogonal to round-off.
        for _ in 0..2 {
            for atom in &atoms {
                let proj = atom.dot(&candidate);
                candidate.axpy(-proj, atom, 1.0);
            }
        }
        let norm = candidate.norm();
        if norm < 1e-6 {
            continue;
        }
        candidate /= norm;
        fix_sign(&mut candidate);
        atoms.push(candidate);
    }
    let basis = DMatrix::from_columns(&atoms);
    Dictionary::new(basis, Some(mean))
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// `basisᵀ (group − mean)`.
pub fn encode(dict: &Dictionary, group: &DMatrix<f64>) -> Result<GroupCode> {
    dict.check_rows(group.nrows())?;
    let mut centered = group.clone();
    for mut col in centered.column_iter_mut() {
        col -= &dict.mean;
    }
    Ok(GroupCode(dict.basis.tr_mul(&centered)))
}

/// `basis · code + mean`.
pub fn decode(dict: &Dictionary, code: &GroupCode) -> Result<DMatrix<f64>> {
    dict.check_rows(code.0.nrows())?;
    let mut out = &dict.basis * &code.0;
    for mut col in out.column_iter_mut() {
        col += &dict.mean;
    }
    Ok(out)
}

#[inline]
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

/// Shrinks each coefficient toward the guide's: `S_λr(cur − guide) + guide`.
pub fn gsrc_shrink(current: &GroupCode, guide: &GroupCode, lambdas: &[f64]) -> Result<GroupCode> {
    current.check_same_shape(guide)?;
    let (b, k) = current.shape();
    if lambdas.len() != b {
        return Err(GsrcError::ShapeMismatch(format!(
            "{} lambdas for {b} rows",
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(GsrcError::InvalidParameter("lambdas must be >= 0".into()));
    }
    let out = DMatrix::from_fn(b, k, |r, j| {
        let g = guide.0[(r, j)];
        soft_threshold(current.0[(r, j)] - g, lambdas[r]) + g
    });
    Ok(GroupCode(out))
}

/// Population standard deviation of each row of `current − guide`, floored at `epsilon`.
pub fn estimate_row_sigmas(
    current: &GroupCode,
    guide: &GroupCode,
    epsilon: f64,
) -> Result<Vec<f64>> {
    current.check_same_shape(guide)?;
    let (b, k) = current.shape();
    let kf = k as f64;
    Ok((0..b)
        .map(|r| {
            let diff = |j: usize| current.0[(r, j)] - guide.0[(r, j)];
            let mean = (0..k).map(diff).sum::<f64>() / kf;
            let var = (0..k).map(|j| (diff(j) - mean).powi(2)).sum::<f64>() / kf;
            var.sqrt().max(epsilon)
        })
        .collect())
}

/// Population standard deviation over all entries of `current − guide`,
/// broadcast to every row.
pub fn estimate_group_sigma(
    current: &GroupCode,
    guide: &GroupCode,
    epsilon: f64,
) -> Result<Vec<f64>> {
    current.check_same_shape(guide)?;
    let (b, _) = current.shape();
    let diff = &current.0 - &guide.0;
    let n = diff.len() as f64;
    let mean = diff.sum() / n;
    let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(vec![var.sqrt().max(epsilon); b])
}

/// Inputs to the MAP regularization weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub c: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl LambdaSchedule {
    pub fn new(c: f64, sigma: f64, epsilon: f64) -> Result<Self> {
        if !(c >= 0.0 && sigma >= 0.0 && epsilon > 0.0) {
            return Err(GsrcError::InvalidParameter(format!(
                "lambda schedule needs c >= 0, sigma >= 0, epsilon > 0 (got {c}, {sigma}, {epsilon})"
            )));
        }
        Ok(Self { c, sigma, epsilon })
    }
}

/// `λ_r = c · 2√2 · σ² / σ_r` for each residual row deviation `σ_r`.
pub fn compute_lambdas(sched: &LambdaSchedule, row_sigmas: &[f64]) -> Result<Vec<f64>> {
    let scale = sched.c * 2.0 * std::f64::consts::SQRT_2 * sched.sigma * sched.sigma;
    row_sigmas
        .iter()
        .map(|&s| {
            if s > 0.0 {
                Ok(scale / s)
            } else {
                Err(GsrcError::InvalidParameter(format!(
                    "residual deviation must be positive, got {s}"
                )))
            }
        })
        .collect()
}
