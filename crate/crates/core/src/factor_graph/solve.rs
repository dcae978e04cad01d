use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::LinearSystem;
use crate::error::{Error, Result};

/// Problems with fewer scalar unknowns than this use the dense QR path.
pub const DENSE_THRESHOLD: usize = 500;

/// Lower bound on `diag(JᵀJ)` entries when forming the damping term, so that
/// variables without any constraint still receive a finite step.
pub const DIAG_FLOOR: f64 = 1e-12;

/// A Cholesky pivot smaller than this fraction of the original diagonal entry
/// is treated as a zero pivot.
const PIVOT_REL_TOL: f64 = 1e-13;

/// Relative singular-value threshold for the numerical nullspace.
pub const NULLSPACE_REL_TOL: f64 = 1e-8;

const QR_RANK_REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// Dense QR below [`DENSE_THRESHOLD`] unknowns, sparse Cholesky above.
    #[default]
    Auto,
    SparseCholesky,
    DenseQr,
}

/// Solves `(JᵀJ + λ·diag(JᵀJ))·δ = −Jᵀr`.
///
/// With `λ = 0` a rank-deficient system is reported as
/// [`Error::GaugeDeficient`] carrying the numerical nullspace dimension.
pub fn solve_normal_equations(
    lin: &LinearSystem,
    lambda: f64,
    kind: LinearSolverKind,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("damping {lambda} is negative")));
    }
    let dense = match kind {
        LinearSolverKind::Auto => lin.cols() < DENSE_THRESHOLD,
        LinearSolverKind::SparseCholesky => false,
        LinearSolverKind::DenseQr => true,
    };
    let result = if dense {
        solve_dense_qr(lin, lambda)
    } else {
        solve_sparse_cholesky(lin, lambda)
    };
    match result {
        Err(Error::Singular(_)) if lambda == 0.0 => Err(Error::GaugeDeficient {
            nullspace_dim: nullspace_dimension(lin, NULLSPACE_REL_TOL),
        }),
        other => other,
    }
}

fn solve_dense_qr(lin: &LinearSystem, lambda: f64) -> Result<DVector<f64>> {
    let (j, r) = lin.to_dense();
    let n = j.ncols();
    let (a, b) = if lambda > 0.0 {
        let m = j.nrows();
        let mut a = DMatrix::zeros(m + n, n);
        a.view_mut((0, 0), (m, n)).copy_from(&j);
        for c in 0..n {
            let d = j.column(c).norm_squared().max(DIAG_FLOOR);
            a[(m + c, c)] = (lambda * d).sqrt();
        }
        let mut b = DVector::zeros(m + n);
        b.rows_mut(0, m).copy_from(&r);
        (a, b)
    } else {
        (j, r)
    };
    if a.nrows() < n {
        return Err(Error::Singular(0));
    }
    let qr = a.qr();
    let rmat = qr.r();
    let max_diag = (0..n).map(|i| rmat[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(i) = (0..n).find(|&i| rmat[(i, i)].abs() <= QR_RANK_REL_TOL * max_diag) {
        return Err(Error::Singular(i));
    }
    let mut rhs = -b;
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, n).into_owned();
    rmat.view((0, 0), (n, n))
        .into_owned()
        .solve_upper_triangular(&top)
        .ok_or(Error::Singular(0))
}

/// Block-lower storage: `cols[j][i]` holds block `(i, j)` for `i ≥ j`.
struct BlockLower {
    cols: Vec<BTreeMap<usize, DMatrix<f64>>>,
}

fn assemble_normal_equations(lin: &LinearSystem, lambda: f64) -> (BlockLower, DVector<f64>) {
    let nvars = lin.ordering.len();
    let mut cols: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); nvars];
    for i in 0..nvars {
        let d = lin.ordering.dim(i);
        cols[i].insert(i, DMatrix::zeros(d, d));
    }
    for block in &lin.blocks {
        for (a, ja) in &block.jacobians {
            for (b, jb) in &block.jacobians {
                if a < b {
                    continue;
                }
                let contrib = ja.transpose() * jb;
                cols[*b]
                    .entry(*a)
                    .and_modify(|m| *m += &contrib)
                    .or_insert(contrib);
            }
        }
    }
    if lambda > 0.0 {
        for (i, col) in cols.iter_mut().enumerate() {
            let diag = col.get_mut(&i).expect("diagonal block");
            for c in 0..diag.nrows() {
                let d = diag[(c, c)].max(DIAG_FLOOR);
                diag[(c, c)] += lambda * d;
            }
        }
    }
    (BlockLower { cols }, -lin.gradient())
}

/// Right-looking block Cholesky in the ordering's variable order. Fill-in
/// blocks are created as elimination proceeds.
fn solve_sparse_cholesky(lin: &LinearSystem, lambda: f64) -> Result<DVector<f64>> {
    let ord = &lin.ordering;
    let nvars = ord.len();
    let (mut h, rhs) = assemble_normal_equations(lin, lambda);

    let mut l_diag: Vec<DMatrix<f64>> = Vec::with_capacity(nvars);
    let mut l_cols: Vec<Vec<(usize, DMatrix<f64>)>> = Vec::with_capacity(nvars);

    for j in 0..nvars {
        let mut col = std::mem::take(&mut h.cols[j]);
        let d = col.remove(&j).expect("diagonal block");
        let orig_diag: Vec<f64> = (0..d.nrows()).map(|c| d[(c, c)]).collect();
        let chol = d.clone().cholesky().ok_or(Error::Singular(j))?;
        let ljj = chol.l();
        for (c, od) in orig_diag.iter().enumerate() {
            let p = ljj[(c, c)];
            if !(p * p > PIVOT_REL_TOL * od.abs().max(f64::MIN_POSITIVE)) {
                return Err(Error::Singular(j));
            }
        }
        // L_ij = B_ij · L_jj⁻ᵀ
        let below: Vec<(usize, DMatrix<f64>)> = col
            .into_iter()
            .map(|(i, b)| {
                let x = ljj
                    .solve_lower_triangular(&b.transpose())
                    .expect("nonsingular factor");
                (i, x.transpose())
            })
            .collect();
        for (ai, (a, la)) in below.iter().enumerate() {
            for (b, lb) in below.iter().take(ai + 1) {
                // (a, b) with a ≥ b lives in column b
                let upd = la * lb.transpose();
                h.cols[*b]
                    .entry(*a)
                    .and_modify(|m| *m -= &upd)
                    .or_insert(-upd);
            }
        }
        l_diag.push(ljj);
        l_cols.push(below);
    }

    // forward: L·y = rhs
    let mut y = rhs;
    for j in 0..nvars {
        let off = ord.offset(j);
        let dim = ord.dim(j);
        let yj = l_diag[j]
            .solve_lower_triangular(&y.rows(off, dim).into_owned())
            .ok_or(Error::Singular(j))?;
        y.rows_mut(off, dim).copy_from(&yj);
        for (i, lij) in &l_cols[j] {
            let oi = ord.offset(*i);
            let mut seg = y.rows_mut(oi, lij.nrows());
            seg -= lij * &yj;
        }
    }
    // backward: Lᵀ·x = y
    let mut x = y;
    for j in (0..nvars).rev() {
        let off = ord.offset(j);
        let dim = ord.dim(j);
        let mut acc = x.rows(off, dim).into_owned();
        for (i, lij) in &l_cols[j] {
            let oi = ord.offset(*i);
            acc -= lij.transpose() * x.rows(oi, lij.nrows());
        }
        let xj = l_diag[j]
            .transpose()
            .solve_upper_triangular(&acc)
            .ok_or(Error::Singular(j))?;
        x.rows_mut(off, dim).copy_from(&xj);
    }
    Ok(x)
}

/// Singular values of the whitened Jacobian in descending order, padded
/// with zeros when there are fewer rows than columns.
pub fn singular_values(lin: &LinearSystem) -> Vec<f64> {
    let (j, _) = lin.to_dense();
    let n = j.ncols();
    let mut sv: Vec<f64> = if j.nrows() == 0 || n == 0 {
        Vec::new()
    } else {
        j.svd(false, false).singular_values.iter().copied().collect()
    };
    sv.resize(n, 0.0);
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values below `rel_tol` times the largest one.
pub fn nullspace_dimension(lin: &LinearSystem, rel_tol: f64) -> usize {
    let sv = singular_values(lin);
    let max = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|s| **s <= rel_tol * max).count()
}
