//! Dense N-way tensors and the matricization / spectral primitives used by the
//! rest of the crate.
//!
//! Storage is first-index-fastest: the entry at zero-based multi-index
//! `(i_0, .., i_{N-1})` lives at `Σ i_k ∏_{m<k} I_m`. This is the
//! little-endian multi-index convention used for tensorized layers, and it
//! coincides with the column-major layout of [`nalgebra::DMatrix`], so a
//! matrix unfolding whose columns enumerate the remaining modes in ascending
//! order is a plain copy for mode 0.
//!
//! Mode indices in this API are zero-based.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{arg_err, Error, Result};

/// Matrices are always 64-bit; tensors are converted on unfolding.
pub type Matrix = DMatrix<f64>;

/// An N-way array of 32-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if len != data.len() {
            return arg_err(format!(
                "dims {:?} need {} entries, got {}",
                dims,
                len,
                data.len()
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims,
            data: vec![0.0; len],
        })
    }

    /// Fills every entry from its zero-based multi-index.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f32) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &dims);
        }
        Ok(Self { dims, data })
    }

    /// Entries drawn i.i.d. from N(0, scale²).
    pub fn random_normal<R: Rng + ?Sized>(dims: Vec<usize>, scale: f64, rng: &mut R) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        let data = (0..len)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (z * scale) as f32
            })
            .collect();
        Ok(Self { dims, data })
    }

    pub(crate) fn from_f64(dims: Vec<usize>, data: &[f64]) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            dims,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// Flat offset of a zero-based multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f32 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f32) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Same data, new mode sizes. The flat layout is untouched.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data.clone())
    }

    /// Reorders modes so that output mode `j` is input mode `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.order())?;
        let dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let data = permute_flat(&self.data, &self.dims, perm);
        Ok(Self { dims, data })
    }

    pub fn inner_product(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return arg_err(format!(
                "inner product of {:?} and {:?}",
                self.dims, other.dims
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖self − other‖_F / ‖other‖_F`; the absolute error when `other` is zero.
    pub fn relative_error(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return arg_err(format!("compare {:?} with {:?}", self.dims, other.dims));
        }
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = f64::from(a) - f64::from(b);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let base = other.frobenius_norm();
        Ok(if base > 0.0 { diff / base } else { diff })
    }

    /// Mode-`k` unfolding: `I_k × ∏_{k'≠k} I_{k'}`, columns little-endian over
    /// the remaining modes in ascending order.
    pub fn k_unfold(&self, k: usize) -> Result<Matrix> {
        if k >= self.order() {
            return arg_err(format!("mode {k} out of range for order {}", self.order()));
        }
        let cols: Vec<usize> = (0..self.order()).filter(|&m| m != k).collect();
        self.matricize(&[k], &cols)
    }

    /// Inverse of [`k_unfold`](Self::k_unfold).
    pub fn k_fold(mat: &Matrix, k: usize, dims: &[usize]) -> Result<Self> {
        if k >= dims.len() {
            return arg_err(format!("mode {k} out of range for order {}", dims.len()));
        }
        let cols: Vec<usize> = (0..dims.len()).filter(|&m| m != k).collect();
        Self::fold_matricized(mat, &[k], &cols, dims)
    }

    /// Generalized unfolding: rows enumerate `row_modes`, columns enumerate
    /// `col_modes`, each little-endian in the order given. Together the two
    /// lists must cover every mode exactly once.
    pub fn matricize(&self, row_modes: &[usize], col_modes: &[usize]) -> Result<Matrix> {
        let perm: Vec<usize> = row_modes.iter().chain(col_modes).copied().collect();
        check_permutation(&perm, self.order())?;
        let rows: usize = row_modes.iter().map(|&m| self.dims[m]).product();
        let cols: usize = col_modes.iter().map(|&m| self.dims[m]).product();
        let flat = permute_flat(&self.data, &self.dims, &perm);
        Ok(Matrix::from_iterator(
            rows,
            cols,
            flat.into_iter().map(f64::from),
        ))
    }

    /// Inverse of [`matricize`](Self::matricize) for a tensor of shape `dims`.
    pub fn fold_matricized(
        mat: &Matrix,
        row_modes: &[usize],
        col_modes: &[usize],
        dims: &[usize],
    ) -> Result<Self> {
        check_dims(dims)?;
        let perm: Vec<usize> = row_modes.iter().chain(col_modes).copied().collect();
        check_permutation(&perm, dims.len())?;
        let rows: usize = row_modes.iter().map(|&m| dims[m]).product();
        let cols: usize = col_modes.iter().map(|&m| dims[m]).product();
        if mat.nrows() != rows || mat.ncols() != cols {
            return arg_err(format!(
                "matrix {}x{} cannot fold into {:?}",
                mat.nrows(),
                mat.ncols(),
                dims
            ));
        }
        let permuted_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        let flat: Vec<f32> = mat.iter().map(|&v| v as f32).collect();
        let data = permute_flat(&flat, &permuted_dims, &inverse_permutation(&perm));
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// `(m,n)`-unfolding into an `I_m × I_n × C` stack of frontal slices;
    /// slice `c` is the matrix at the `c`-th little-endian multi-index of the
    /// remaining modes (ascending). Requires `m < n`.
    pub fn mn_unfold(&self, m: usize, n: usize) -> Result<Self> {
        let order = self.order();
        if order < 2 {
            return arg_err("mn-unfolding needs order >= 2");
        }
        if m >= n || n >= order {
            return arg_err(format!("mode pair ({m},{n}) invalid for order {order}"));
        }
        let mut perm = vec![m, n];
        perm.extend((0..order).filter(|&k| k != m && k != n));
        let rest: usize = perm[2..].iter().map(|&k| self.dims[k]).product();
        let data = permute_flat(&self.data, &self.dims, &perm);
        Ok(Self {
            dims: vec![self.dims[m], self.dims[n], rest],
            data,
        })
    }

    /// Frontal slice `c` of a 3-way tensor as a matrix.
    pub fn frontal_slice(&self, c: usize) -> Result<Matrix> {
        if self.order() != 3 || c >= self.dims[2] {
            return arg_err(format!("no frontal slice {c} in {:?}", self.dims));
        }
        let (r, k) = (self.dims[0], self.dims[1]);
        let start = c * r * k;
        Ok(Matrix::from_iterator(
            r,
            k,
            self.data[start..start + r * k].iter().map(|&v| f64::from(v)),
        ))
    }
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m × p` with orthonormal columns, `p = min(m, n)`.
    pub u: Matrix,
    /// Non-increasing and non-negative.
    pub singular_values: Vec<f64>,
    /// `n × p` with orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.transpose()
    }
}

/// Relative cutoff below which singular values are reported as exactly zero.
pub const SINGULAR_VALUE_CLAMP: f64 = 1e-12;

// A convergence threshold of exactly f64::EPSILON makes nalgebra stop on
// wrong values for some exactly rank-deficient wide inputs.
const SVD_EPS: f64 = 5.0 * f64::EPSILON;

pub fn svd(mat: &Matrix) -> Result<SvdResult> {
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("svd input has non-finite entries".into()));
    }
    let (m, n) = mat.shape();
    let p = m.min(n);
    let raw = mat
        .clone()
        .try_svd(true, true, SVD_EPS, 0)
        .ok_or_else(|| Error::Numeric("svd did not converge".into()))?;
    let (u, vt) = match (raw.u, raw.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numeric("svd factors missing".into())),
    };

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        raw.singular_values[b]
            .partial_cmp(&raw.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut sorted_u = Matrix::zeros(m, p);
    let mut sorted_v = Matrix::zeros(n, p);
    let mut values = Vec::with_capacity(p);
    for (j, &src) in order.iter().enumerate() {
        sorted_u.set_column(j, &u.column(src));
        sorted_v.set_column(j, &vt.row(src).transpose());
        values.push(raw.singular_values[src].max(0.0));
    }
    let top = values.first().copied().unwrap_or(0.0);
    for s in &mut values {
        if *s < SINGULAR_VALUE_CLAMP * top {
            *s = 0.0;
        }
    }
    Ok(SvdResult {
        u: sorted_u,
        singular_values: values,
        v: sorted_v,
    })
}

/// Moore–Penrose pseudo-inverse, dropping singular values below
/// `rel_cutoff · σ_max`.
pub fn pseudo_inverse(mat: &Matrix, rel_cutoff: f64) -> Result<Matrix> {
    let dec = svd(mat)?;
    let top = dec.singular_values.first().copied().unwrap_or(0.0);
    let (m, n) = mat.shape();
    let mut out = Matrix::zeros(n, m);
    for (j, &s) in dec.singular_values.iter().enumerate() {
        if s > rel_cutoff * top && s > 0.0 {
            let vj = dec.v.column(j);
            let uj = dec.u.column(j);
            out += (vj * uj.transpose()) / s;
        }
    }
    Ok(out)
}

pub(crate) fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return arg_err("tensor needs at least one mode");
    }
    if dims.contains(&0) {
        return arg_err(format!("zero-sized mode in {dims:?}"));
    }
    Ok(())
}

fn check_permutation(perm: &[usize], order: usize) -> Result<()> {
    let mut seen = vec![false; order];
    if perm.len() != order {
        return arg_err(format!("{perm:?} is not a permutation of {order} modes"));
    }
    for &p in perm {
        if p >= order || seen[p] {
            return arg_err(format!("{perm:?} is not a permutation of {order} modes"));
        }
        seen[p] = true;
    }
    Ok(())
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

/// Odometer step over a first-index-fastest multi-index.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

/// Permutes a first-index-fastest buffer: output mode `j` is input mode
/// `perm[j]`.
pub(crate) fn permute_flat<T: Copy>(data: &[T], dims: &[usize], perm: &[usize]) -> Vec<T> {
    let order = dims.len();
    let mut in_strides = vec![1usize; order];
    for k in 1..order {
        in_strides[k] = in_strides[k - 1] * dims[k - 1];
    }
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; order];
    let mut src = 0usize;
    for _ in 0..data.len() {
        out.push(data[src]);
        for j in 0..order {
            idx[j] += 1;
            src += strides[j];
            if idx[j] < out_dims[j] {
                break;
            }
            src -= strides[j] * out_dims[j];
            idx[j] = 0;
        }
    }
    out
}
