//! Third-order tensors, the tensor nuclear norm and its proximal operator.
//!
//! The transform along mode 3 is the unnormalized DFT. The nuclear norm is
//! the mean of the frequency-slice nuclear norms,
//! `tnn(X) = (1/n3) * sum_k ||X_hat_k||_*`, so by Parseval the proximal
//! operator of `tau * tnn` soft-thresholds every frequency slice by `tau`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

/// `n1 x n2 x n3` tensor. Frontal slice `k` is the column-major `n1 x n2`
/// block `data[k*n1*n2 .. (k+1)*n1*n2]`, so the mode-3 unfolding with one
/// column per slice shares the same buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    /// `f(i, j, k)`
    pub fn from_fn(
        n1: usize,
        n2: usize,
        n3: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self {
            dims: (n1, n2, n3),
            data,
        }
    }

    /// View a `(n1*n2) x n3` mode-3 unfolding as a tensor.
    pub fn from_unfolding(n1: usize, unfolding: DMatrix<f64>) -> Self {
        let (rows, n3) = unfolding.shape();
        assert!(n1 > 0 && rows % n1 == 0, "rows must be a multiple of n1");
        Self {
            dims: (n1, rows / n1, n3),
            data: unfolding.data.into(),
        }
    }

    pub fn into_unfolding(self) -> DMatrix<f64> {
        let (n1, n2, n3) = self.dims;
        DMatrix::from_vec(n1 * n2, n3, self.data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (n1, n2, _) = self.dims;
        self.data[(k * n2 + j) * n1 + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    fn slice(&self, k: usize) -> &[f64] {
        let len = self.dims.0 * self.dims.1;
        &self.data[k * len..(k + 1) * len]
    }

    /// Frequency slices `0..=n3/2`; the rest are their conjugates.
    fn half_spectrum(&self) -> Vec<DMatrix<Complex64>> {
        let (n1, n2, n3) = self.dims;
        (0..=n3 / 2)
            .map(|k| {
                let mut acc = DMatrix::<Complex64>::zeros(n1, n2);
                for j in 0..n3 {
                    let theta = -2.0 * PI * ((j * k) % n3) as f64 / n3 as f64;
                    let w = Complex64::new(libm::cos(theta), libm::sin(theta));
                    for (a, &x) in acc.iter_mut().zip(self.slice(j)) {
                        *a += w * x;
                    }
                }
                acc
            })
            .collect()
    }

    fn from_half_spectrum(dims: (usize, usize, usize), spectrum: &[DMatrix<Complex64>]) -> Self {
        let (n1, n2, n3) = dims;
        let len = n1 * n2;
        let mut data = vec![0.0; len * n3];
        for (k, s) in spectrum.iter().enumerate() {
            let mult = multiplicity(k, n3);
            for j in 0..n3 {
                let theta = 2.0 * PI * ((j * k) % n3) as f64 / n3 as f64;
                let (c, sn) = (libm::cos(theta), libm::sin(theta));
                let out = &mut data[j * len..(j + 1) * len];
                for (o, z) in out.iter_mut().zip(s.iter()) {
                    *o += mult * (z.re * c - z.im * sn);
                }
            }
        }
        let scale = 1.0 / n3 as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        Self { dims, data }
    }
}

/// How many frequencies the half-spectrum entry `k` stands for.
fn multiplicity(k: usize, n3: usize) -> f64 {
    if k == 0 || 2 * k == n3 {
        1.0
    } else {
        2.0
    }
}

/// Singular values via the eigenvalues of the smaller Gram matrix.
fn gram_eigen<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
) -> (bool, nalgebra::SymmetricEigen<T, nalgebra::Dyn>) {
    let tall = a.nrows() >= a.ncols();
    let gram = if tall {
        a.adjoint() * a
    } else {
        a * a.adjoint()
    };
    (tall, gram.symmetric_eigen())
}

/// Uses a full SVD: square roots of Gram eigenvalues inflate singular
/// values near zero.
fn nuclear_norm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.clone().singular_values().sum()
}

/// Soft-threshold the singular values of `a` by `tau`. Returns the result
/// and its nuclear norm.
///
/// With `a = U S V^H`, the result is `a V diag(max(1 - tau/s, 0)) V^H`
/// (or the mirrored form for wide matrices), so only the Gram eigenvectors
/// are needed.
fn shrink<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, tau: f64) -> (DMatrix<T>, f64) {
    let (tall, eig) = gram_eigen(a);
    let vecs = eig.eigenvectors;
    let mut scaled = vecs.clone();
    let mut nuclear = 0.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let s = libm::sqrt(l.max(0.0));
        let f = if s > tau {
            nuclear += s - tau;
            1.0 - tau / s
        } else {
            0.0
        };
        for z in scaled.column_mut(i).iter_mut() {
            *z = z.clone() * T::from_real(f);
        }
    }
    if nuclear == 0.0 {
        return (DMatrix::zeros(a.nrows(), a.ncols()), 0.0);
    }
    let proj = scaled * vecs.adjoint();
    let out = if tall { a * proj } else { proj * a };
    (out, nuclear)
}

fn is_real_frequency(k: usize, n3: usize) -> bool {
    k == 0 || 2 * k == n3
}

/// Tensor nuclear norm.
pub fn tnn(x: &Tensor3) -> f64 {
    let n3 = x.dims.2;
    let total: f64 = x
        .half_spectrum()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let norm = if is_real_frequency(k, n3) {
                nuclear_norm(&s.map(|z| z.re))
            } else {
                nuclear_norm(s)
            };
            multiplicity(k, n3) * norm
        })
        .sum();
    total / n3 as f64
}

/// Proximal operator of `tau * tnn`. Also returns `tnn` of the result,
/// which falls out of the thresholding for free.
pub fn tensor_svt(y: &Tensor3, tau: f64) -> (Tensor3, f64) {
    let n3 = y.dims.2;
    let mut norm = 0.0;
    let shrunk: Vec<DMatrix<Complex64>> = y
        .half_spectrum()
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let (out, nuc) = if is_real_frequency(k, n3) {
                let (re, nuc) = shrink(&s.map(|z| z.re), tau);
                (re.map(|v| Complex64::new(v, 0.0)), nuc)
            } else {
                shrink(&s, tau)
            };
            norm += multiplicity(k, n3) * nuc;
            out
        })
        .collect();
    (
        Tensor3::from_half_spectrum(y.dims, &shrunk),
        norm / n3 as f64,
    )
}
