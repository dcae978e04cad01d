use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{factor_jacobians, factor_variables, FactorGraph, Key, Values};
use crate::error::{Error, Result};

/// Tangent step used for finite-difference Jacobians.
pub const FD_STEP: f64 = 1e-7;

/// Column layout of a linear system: variables sorted by [`Key`].
#[derive(Clone, Debug)]
pub struct Ordering {
    keys: Vec<Key>,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    index: HashMap<Key, usize>,
    total: usize,
}

impl Ordering {
    pub fn from_values(values: &Values) -> Self {
        let mut entries: Vec<(Key, usize)> =
            values.iter().map(|(k, v)| (*k, v.tangent_dim())).collect();
        entries.sort_by_key(|(k, _)| *k);
        let mut keys = Vec::with_capacity(entries.len());
        let mut offsets = Vec::with_capacity(entries.len());
        let mut dims = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        let mut total = 0;
        for (i, (k, d)) in entries.into_iter().enumerate() {
            keys.push(k);
            offsets.push(total);
            dims.push(d);
            index.insert(k, i);
            total += d;
        }
        Ordering {
            keys,
            offsets,
            dims,
            index,
            total,
        }
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn index_of(&self, key: &Key) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Total number of scalar columns.
    pub fn total_dim(&self) -> usize {
        self.total
    }
}

/// Whitened residual and Jacobian blocks of one factor.
#[derive(Clone, Debug)]
pub struct FactorBlock {
    pub residual: DVector<f64>,
    /// `(variable index in the ordering, whitened Jacobian block)`.
    pub jacobians: Vec<(usize, DMatrix<f64>)>,
}

/// The Gauss-Newton linearization `J·δ + r` of a graph at a point.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub ordering: Ordering,
    pub blocks: Vec<FactorBlock>,
}

impl LinearSystem {
    pub fn rows(&self) -> usize {
        self.blocks.iter().map(|b| b.residual.len()).sum()
    }

    pub fn cols(&self) -> usize {
        self.ordering.total_dim()
    }

    /// `‖r‖²`, equal to the nonlinear objective at the linearization point.
    pub fn objective(&self) -> f64 {
        self.blocks.iter().map(|b| b.residual.norm_squared()).sum()
    }

    /// `Jᵀ·r`.
    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.cols());
        for b in &self.blocks {
            for (var, jac) in &b.jacobians {
                let off = self.ordering.offset(*var);
                let mut seg = g.rows_mut(off, jac.ncols());
                seg += jac.transpose() * &b.residual;
            }
        }
        g
    }

    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.rows();
        let n = self.cols();
        let mut j = DMatrix::zeros(m, n);
        let mut r = DVector::zeros(m);
        let mut row = 0;
        for b in &self.blocks {
            let h = b.residual.len();
            r.rows_mut(row, h).copy_from(&b.residual);
            for (var, jac) in &b.jacobians {
                let off = self.ordering.offset(*var);
                let mut view = j.view_mut((row, off), (h, jac.ncols()));
                view += jac;
            }
            row += h;
        }
        (j, r)
    }
}

/// Linearizes every factor at `values`, whitening by each noise model.
pub fn linearize(graph: &FactorGraph, values: &Values) -> Result<LinearSystem> {
    let ordering = Ordering::from_values(values);
    let mut blocks = Vec::with_capacity(graph.len());
    for factor in graph.iter() {
        let vars = factor_variables(factor, values)?;
        let e = factor.error(&vars)?;
        let jacs = factor_jacobians(factor, &vars)?;
        let noise = factor.noise();
        let mut jacobians = Vec::with_capacity(jacs.len());
        for (key, jac) in factor.keys().iter().zip(jacs) {
            let idx = ordering.index_of(key).ok_or(Error::MissingKey(*key))?;
            jacobians.push((idx, noise.whiten_matrix(&jac)));
        }
        blocks.push(FactorBlock {
            residual: noise.whiten(&e),
            jacobians,
        });
    }
    Ok(LinearSystem { ordering, blocks })
}
