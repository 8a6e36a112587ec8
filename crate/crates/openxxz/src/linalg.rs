//! Dense complex operators on the 2^L quantum space (plus the small 2x2 and
//! 4x4 auxiliary objects). Sizes stay tiny (L <= 8 in practice), so plain
//! dense storage keeps the identity checks one-liner matrix algebra.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::numkernel::Cpx;

/// Dense complex matrix with a square-dimension invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    mat: Array2<Cpx>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: Array2::eye(dim),
        }
    }

    pub fn from_array(mat: Array2<Cpx>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operator must be square");
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn array(&self) -> &Array2<Cpx> {
        &self.mat
    }

    pub fn get(&self, r: usize, c: usize) -> Cpx {
        self.mat[(r, c)]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Cpx) {
        self.mat[(r, c)] = v;
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            mat: self.mat.dot(&other.mat),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat - &other.mat,
        }
    }

    pub fn scale(&self, s: Cpx) -> Self {
        Self {
            mat: self.mat.mapv(|v| v * s),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            mat: self.mat.t().to_owned(),
        }
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        StateVector(self.mat.dot(&v.0))
    }

    /// <u|M = (M^T u)^T as a column; used for bra-side products.
    pub fn apply_left(&self, u: &StateVector) -> StateVector {
        StateVector(self.mat.t().dot(&u.0))
    }

    pub fn frobenius(&self) -> f64 {
        self.mat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Scale-free difference ||A - B||_F / max(||A||_F, ||B||_F).
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let scale = self.frobenius().max(other.frobenius());
        if scale == 0.0 {
            return 0.0;
        }
        self.sub(other).frobenius() / scale
    }

    /// ||[A, B]||_F / (||AB||_F max 1), the commutation residual.
    pub fn commutator_rel(&self, other: &Self) -> f64 {
        let ab = self.mul(other);
        let ba = other.mul(self);
        ab.sub(&ba).frobenius() / ab.frobenius().max(ba.frobenius()).max(f64::MIN_POSITIVE)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim(), other.dim());
        let mut out = Array2::zeros((n * m, n * m));
        for r1 in 0..n {
            for c1 in 0..n {
                let v = self.mat[(r1, c1)];
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for r2 in 0..m {
                    for c2 in 0..m {
                        out[(r1 * m + r2, c1 * m + c2)] = v * other.mat[(r2, c2)];
                    }
                }
            }
        }
        Self { mat: out }
    }
}

/// Dense complex vector on the 2^L quantum space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub Array1<Cpx>);

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self(Array1::zeros(dim))
    }

    pub fn basis(dim: usize, idx: usize) -> Self {
        let mut v = Array1::zeros(dim);
        v[idx] = Cpx::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Plain bilinear pairing u·v (no conjugation); matches <bra|ket>
    /// contraction of transfer-matrix algebra where bras are transposes.
    pub fn dot(&self, other: &Self) -> Cpx {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Sesquilinear inner product conj(u)·v, for Rayleigh quotients.
    pub fn inner(&self, other: &Self) -> Cpx {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: Cpx) -> Self {
        Self(self.0.mapv(|v| v * s))
    }
}

/// Embed a one-site 2x2 operator at site `j` (1-based, site 1 = most
/// significant bit) of an L-site chain.
pub fn site_operator(l: usize, j: usize, op: [[Cpx; 2]; 2]) -> DenseOperator {
    assert!((1..=l).contains(&j));
    let dim = 1usize << l;
    let bit = l - j;
    let mut out = Array2::zeros((dim, dim));
    for col in 0..dim {
        let cb = (col >> bit) & 1;
        for (rb, row_vals) in op.iter().enumerate() {
            let v = row_vals[cb];
            if v != Cpx::new(0.0, 0.0) {
                let row = (col & !(1 << bit)) | (rb << bit);
                out[(row, col)] += v;
            }
        }
    }
    DenseOperator::from_array(out)
}

/// Embed a two-space 4x4 operator acting on tensor slots `s1 < s2`
/// (0-based) of `total` two-dimensional spaces.
pub fn two_site_embed(op: &DenseOperator, s1: usize, s2: usize, total: usize) -> DenseOperator {
    assert_eq!(op.dim(), 4);
    assert!(s1 < s2 && s2 < total);
    let dim = 1usize << total;
    let b1 = total - 1 - s1;
    let b2 = total - 1 - s2;
    let mut out = Array2::zeros((dim, dim));
    for col in 0..dim {
        let c1 = (col >> b1) & 1;
        let c2 = (col >> b2) & 1;
        for r1 in 0..2usize {
            for r2 in 0..2usize {
                let v = op.get(2 * r1 + r2, 2 * c1 + c2);
                if v != Cpx::new(0.0, 0.0) {
                    let row = (col & !(1 << b1) & !(1 << b2)) | (r1 << b1) | (r2 << b2);
                    out[(row, col)] += v;
                }
            }
        }
    }
    DenseOperator::from_array(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Cpx {
        Cpx::new(re, im)
    }

    #[test]
    fn kron_and_site_operator_agree() {
        let sz = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        let via_site = site_operator(2, 2, sz);
        let id = DenseOperator::identity(2);
        let mut szm = DenseOperator::zeros(2);
        szm.set(0, 0, c(1.0, 0.0));
        szm.set(1, 1, c(-1.0, 0.0));
        let via_kron = id.kron(&szm);
        assert!(via_site.rel_diff(&via_kron) < 1e-15);
    }

    #[test]
    fn two_site_embed_matches_kron() {
        // op on slots (0,1) of 3 spaces == op ⊗ id.
        let mut op = DenseOperator::zeros(4);
        for r in 0..4 {
            for cidx in 0..4 {
                op.set(r, cidx, c((r * 4 + cidx) as f64, 0.3 * r as f64));
            }
        }
        let emb = two_site_embed(&op, 0, 1, 3);
        let direct = op.kron(&DenseOperator::identity(2));
        assert!(emb.rel_diff(&direct) < 1e-15);

        let emb = two_site_embed(&op, 1, 2, 3);
        let direct = DenseOperator::identity(2).kron(&op);
        assert!(emb.rel_diff(&direct) < 1e-15);
    }

    #[test]
    fn apply_left_is_transpose_action() {
        let mut m = DenseOperator::zeros(2);
        m.set(0, 1, c(2.0, 1.0));
        m.set(1, 0, c(-1.0, 0.5));
        let u = StateVector::basis(2, 0);
        let left = m.apply_left(&u);
        assert_eq!(left.0[1], c(2.0, 1.0));
    }
}
