//! R- and K-matrices, single- and double-row monodromy blocks, the double-row
//! transfer matrix and the open-chain Hamiltonian, all as dense operators.
//!
//! Conventions (certified by the identity tests in this module and by the
//! acceptance suite):
//!   * R(λ) is the symmetric six-vertex matrix [[a,0,0,0],[0,b,c,0],
//!     [0,c,b,0],[0,0,0,a]] with a = sinh(λ+γ), b = sinh λ, c = sinh γ;
//!   * site 1 carries the h boundary field and maps to the most significant
//!     bit of the basis index; spin up = bit 0, so |0> is index 0;
//!   * the double-row product reads R_{0L}(λ-μ_L) ... R_{01}(λ-μ_1) K_0(λ)
//!     R_{01}(λ+μ_1) ... R_{0L}(λ+μ_L), i.e. the left product has j
//!     decreasing left-to-right and the right product increasing.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{site_operator, DenseOperator, StateVector};
use crate::numkernel::{fn_a, fn_b, fn_c, sinh_proximity, Cpx, ModelParams, DELTA_GEN, MAX_DENSE_L};

/// Auxiliary-space 2x2 block decomposition of a (C^2 ⊗ C^{2^L}) operator.
#[derive(Clone, Debug)]
pub struct MonodromyBlocks {
    pub a: DenseOperator,
    pub b: DenseOperator,
    pub c: DenseOperator,
    pub d: DenseOperator,
    pub lambda: Cpx,
}

/// Blocks of the two single-row products: unbarred from the leftward row
/// at λ-μ_j, barred from the rightward row at λ+μ_j (the two rows that
/// build the double-row product).
#[derive(Clone, Debug)]
pub struct SingleRowBlocks {
    pub a: DenseOperator,
    pub b: DenseOperator,
    pub c: DenseOperator,
    pub d: DenseOperator,
    pub a_bar: DenseOperator,
    pub b_bar: DenseOperator,
    pub c_bar: DenseOperator,
    pub d_bar: DenseOperator,
    pub lambda: Cpx,
}

/// Six-vertex R-matrix on C^2 ⊗ C^2.
pub fn r_matrix(lambda: Cpx, params: &ModelParams) -> DenseOperator {
    let a = fn_a(lambda, params);
    let b = fn_b(lambda);
    let c = fn_c(params);
    let z = Cpx::new(0.0, 0.0);
    let mut m = DenseOperator::zeros(4);
    for (r, cidx, v) in [
        (0, 0, a),
        (1, 1, b),
        (1, 2, c),
        (2, 1, c),
        (2, 2, b),
        (3, 3, a),
    ] {
        if v != z {
            m.set(r, cidx, v);
        }
    }
    m
}

/// Diagonal reflection matrix K(λ) = diag(sinh(h+λ), sinh(h-λ)).
pub fn k_matrix(lambda: Cpx, params: &ModelParams) -> DenseOperator {
    let mut m = DenseOperator::zeros(2);
    m.set(0, 0, (params.h + lambda).sinh());
    m.set(1, 1, (params.h - lambda).sinh());
    m
}

/// Dual reflection matrix K̄(λ) = diag(sinh(h̄-λ-γ), sinh(h̄+λ+γ)),
/// obtained from K by the isomorphism K^t(-λ-γ)|_{h→h̄}.
pub fn k_dual(lambda: Cpx, params: &ModelParams) -> DenseOperator {
    let mut m = DenseOperator::zeros(2);
    m.set(0, 0, (params.hbar - lambda - params.gamma).sinh());
    m.set(1, 1, (params.hbar + lambda + params.gamma).sinh());
    m
}

fn check_dense_limit(params: &ModelParams) -> Result<()> {
    if params.l() > MAX_DENSE_L {
        Err(Error::DimensionLimit {
            l: params.l(),
            max: MAX_DENSE_L,
        })
    } else {
        Ok(())
    }
}

/// Accumulates the aux-block product one factor at a time. Each R-factor is
/// site-local, so right-multiplication is O(4^L) instead of a dense matmul.
struct AuxProduct {
    l: usize,
    a: Array2<Cpx>,
    b: Array2<Cpx>,
    c: Array2<Cpx>,
    d: Array2<Cpx>,
}

impl AuxProduct {
    fn identity(l: usize) -> Self {
        let dim = 1usize << l;
        Self {
            l,
            a: Array2::eye(dim),
            b: Array2::zeros((dim, dim)),
            c: Array2::zeros((dim, dim)),
            d: Array2::eye(dim),
        }
    }

    /// M · diag_j(up, dn): scales column c by `up` or `dn` according to the
    /// spin at site j in the column index.
    fn mul_diag_site(m: &Array2<Cpx>, l: usize, j: usize, up: Cpx, dn: Cpx) -> Array2<Cpx> {
        let bit = l - j;
        let mut out = m.clone();
        for (cidx, mut col) in out.columns_mut().into_iter().enumerate() {
            let s = if (cidx >> bit) & 1 == 0 { up } else { dn };
            col.mapv_inplace(|v| v * s);
        }
        out
    }

    /// M · (w σ⁻_j): column c of the result is w · column (c with bit j set)
    /// of M when site j is down in c, else zero.
    fn mul_lower_site(m: &Array2<Cpx>, l: usize, j: usize, w: Cpx) -> Array2<Cpx> {
        let bit = l - j;
        let dim = m.nrows();
        let mut out = Array2::zeros((dim, dim));
        for cidx in 0..dim {
            if (cidx >> bit) & 1 == 0 {
                let src = cidx | (1 << bit);
                for r in 0..dim {
                    out[(r, cidx)] = m[(r, src)] * w;
                }
            }
        }
        out
    }

    /// M · (w σ⁺_j).
    fn mul_raise_site(m: &Array2<Cpx>, l: usize, j: usize, w: Cpx) -> Array2<Cpx> {
        let bit = l - j;
        let dim = m.nrows();
        let mut out = Array2::zeros((dim, dim));
        for cidx in 0..dim {
            if (cidx >> bit) & 1 == 1 {
                let src = cidx & !(1 << bit);
                for r in 0..dim {
                    out[(r, cidx)] = m[(r, src)] * w;
                }
            }
        }
        out
    }

    /// U ← U · R_{0j}(u).
    fn apply_r(&mut self, u: Cpx, j: usize, params: &ModelParams) {
        let av = fn_a(u, params);
        let bv = fn_b(u);
        let cv = fn_c(params);
        let l = self.l;
        // R blocks: F_a = diag_j(a,b), F_b = c σ⁻_j, F_c = c σ⁺_j, F_d = diag_j(b,a).
        let new_a = Self::mul_diag_site(&self.a, l, j, av, bv) + Self::mul_raise_site(&self.b, l, j, cv);
        let new_b = Self::mul_lower_site(&self.a, l, j, cv) + Self::mul_diag_site(&self.b, l, j, bv, av);
        let new_c = Self::mul_diag_site(&self.c, l, j, av, bv) + Self::mul_raise_site(&self.d, l, j, cv);
        let new_d = Self::mul_lower_site(&self.c, l, j, cv) + Self::mul_diag_site(&self.d, l, j, bv, av);
        self.a = new_a;
        self.b = new_b;
        self.c = new_c;
        self.d = new_d;
    }

    /// U ← U · diag_aux(k1, k2).
    fn apply_diag_aux(&mut self, k1: Cpx, k2: Cpx) {
        self.a.mapv_inplace(|v| v * k1);
        self.b.mapv_inplace(|v| v * k2);
        self.c.mapv_inplace(|v| v * k1);
        self.d.mapv_inplace(|v| v * k2);
    }

    fn into_blocks(self, lambda: Cpx) -> MonodromyBlocks {
        MonodromyBlocks {
            a: DenseOperator::from_array(self.a),
            b: DenseOperator::from_array(self.b),
            c: DenseOperator::from_array(self.c),
            d: DenseOperator::from_array(self.d),
            lambda,
        }
    }
}

/// 𝒜, ℬ, 𝒞, 𝒟 blocks of the double-row product at spectral parameter λ.
pub fn double_row_monodromy(lambda: Cpx, params: &ModelParams) -> Result<MonodromyBlocks> {
    check_dense_limit(params)?;
    let l = params.l();
    let mut u = AuxProduct::identity(l);
    for j in (1..=l).rev() {
        u.apply_r(lambda - params.mu[j - 1], j, params);
    }
    u.apply_diag_aux((params.h + lambda).sinh(), (params.h - lambda).sinh());
    for j in 1..=l {
        u.apply_r(lambda + params.mu[j - 1], j, params);
    }
    Ok(u.into_blocks(lambda))
}

/// Blocks of the two row products entering the double-row construction:
/// unbarred = R_{0L}(λ-μ_L)...R_{01}(λ-μ_1), barred = R_{01}(λ+μ_1)...R_{0L}(λ+μ_L).
pub fn single_row_monodromy(lambda: Cpx, params: &ModelParams) -> Result<SingleRowBlocks> {
    check_dense_limit(params)?;
    let l = params.l();
    let mut u = AuxProduct::identity(l);
    for j in (1..=l).rev() {
        u.apply_r(lambda - params.mu[j - 1], j, params);
    }
    let mut v = AuxProduct::identity(l);
    for j in 1..=l {
        v.apply_r(lambda + params.mu[j - 1], j, params);
    }
    Ok(SingleRowBlocks {
        a: DenseOperator::from_array(u.a),
        b: DenseOperator::from_array(u.b),
        c: DenseOperator::from_array(u.c),
        d: DenseOperator::from_array(u.d),
        a_bar: DenseOperator::from_array(v.a),
        b_bar: DenseOperator::from_array(v.b),
        c_bar: DenseOperator::from_array(v.c),
        d_bar: DenseOperator::from_array(v.d),
        lambda,
    })
}

/// 𝒟̃(λ) = 𝒟(λ) - (sinh γ / sinh(2λ+γ)) 𝒜(λ).
pub fn d_tilde(blocks: &MonodromyBlocks, params: &ModelParams) -> Result<DenseOperator> {
    let shift = 2.0 * blocks.lambda + params.gamma;
    if sinh_proximity(shift) < DELTA_GEN {
        return Err(Error::SingularDenominator {
            context: "d_tilde",
            factor: "sinh(2*lambda + gamma)".into(),
            magnitude: sinh_proximity(shift),
            threshold: DELTA_GEN,
        });
    }
    Ok(blocks.d.sub(&blocks.a.scale(fn_c(params) / shift.sinh())))
}

/// Double-row transfer matrix T(λ) = sinh(h̄-λ-γ) 𝒜(λ) + sinh(h̄+λ+γ) 𝒟(λ).
pub fn transfer_matrix(lambda: Cpx, params: &ModelParams) -> Result<DenseOperator> {
    let blocks = double_row_monodromy(lambda, params)?;
    Ok(transfer_from_blocks(&blocks, params))
}

pub fn transfer_from_blocks(blocks: &MonodromyBlocks, params: &ModelParams) -> DenseOperator {
    let k1 = (params.hbar - blocks.lambda - params.gamma).sinh();
    let k2 = (params.hbar + blocks.lambda + params.gamma).sinh();
    blocks.a.scale(k1).add(&blocks.d.scale(k2))
}

/// T(λ) assembled as tr_0 [ K̄_0(λ) U(λ) ], exercising the dual reflection
/// matrix instead of hard-coded sinh factors.
pub fn transfer_matrix_via_trace(lambda: Cpx, params: &ModelParams) -> Result<DenseOperator> {
    let blocks = double_row_monodromy(lambda, params)?;
    let kb = k_dual(lambda, params);
    Ok(blocks.a.scale(kb.get(0, 0)).add(&blocks.d.scale(kb.get(1, 1))))
}

/// Eigenvalue Λ_𝒜(λ) = b(h+λ) Π_j a(λ-μ_j) a(λ+μ_j) of 𝒜 on |0>.
pub fn lambda_a(lambda: Cpx, params: &ModelParams) -> Cpx {
    let mut out = (params.h + lambda).sinh();
    for &m in &params.mu {
        out *= fn_a(lambda - m, params) * fn_a(lambda + m, params);
    }
    out
}

/// Eigenvalue Λ_𝒟̃(λ) = -(b(2λ)/a(2λ)) a(λ-h) Π_j b(λ-μ_j) b(λ+μ_j) of 𝒟̃ on |0>.
pub fn lambda_d_tilde(lambda: Cpx, params: &ModelParams) -> Result<Cpx> {
    let den = 2.0 * lambda + params.gamma;
    if sinh_proximity(den) < DELTA_GEN {
        return Err(Error::SingularDenominator {
            context: "lambda_d_tilde",
            factor: "sinh(2*lambda + gamma)".into(),
            magnitude: sinh_proximity(den),
            threshold: DELTA_GEN,
        });
    }
    let mut out = -(fn_b(2.0 * lambda) / den.sinh()) * fn_a(lambda - params.h, params);
    for &m in &params.mu {
        out *= fn_b(lambda - m) * fn_b(lambda + m);
    }
    Ok(out)
}

/// Open XXZ Hamiltonian: Σ_i (σˣσˣ + σʸσʸ + cosh γ σᶻσᶻ) plus the boundary
/// fields sinh γ coth(h) σ₁ᶻ - sinh γ coth(h̄) σ_Lᶻ.
pub fn hamiltonian(params: &ModelParams) -> Result<DenseOperator> {
    check_dense_limit(params)?;
    let l = params.l();
    let dim = 1usize << l;
    let z = Cpx::new(0.0, 0.0);
    let one = Cpx::new(1.0, 0.0);
    let sx = [[z, one], [one, z]];
    let sy = [[z, Cpx::new(0.0, -1.0)], [Cpx::new(0.0, 1.0), z]];
    let sz = [[one, z], [z, -one]];
    let delta = params.gamma.cosh();
    let mut h = DenseOperator::zeros(dim);
    for i in 1..l {
        let xx = site_operator(l, i, sx).mul(&site_operator(l, i + 1, sx));
        let yy = site_operator(l, i, sy).mul(&site_operator(l, i + 1, sy));
        let zz = site_operator(l, i, sz).mul(&site_operator(l, i + 1, sz));
        h = h.add(&xx).add(&yy).add(&zz.scale(delta));
    }
    let c = fn_c(params);
    h = h.add(&site_operator(l, 1, sz).scale(c * params.h.cosh() / params.h.sinh()));
    h = h.sub(&site_operator(l, l, sz).scale(c * params.hbar.cosh() / params.hbar.sinh()));
    Ok(h)
}

/// Highest-weight vector |0> = (1,0)^{⊗L}.
pub fn highest_weight(l: usize) -> StateVector {
    StateVector::basis(1 << l, 0)
}

/// Number of down spins in basis index `idx`.
pub fn magnon_number(idx: usize) -> u32 {
    idx.count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::two_site_embed;
    use crate::numkernel::SpectralSets;

    fn c(re: f64, im: f64) -> Cpx {
        Cpx::new(re, im)
    }

    fn params2() -> ModelParams {
        ModelParams::new(
            c(0.437, 0.21),
            c(0.83, -0.34),
            c(-0.61, 0.47),
            vec![c(0.211, -0.05), c(-0.34, 0.12)],
        )
        .unwrap()
    }

    fn params3() -> ModelParams {
        ModelParams::new(
            c(0.437, 0.21),
            c(0.83, -0.34),
            c(-0.61, 0.47),
            vec![c(0.211, -0.05), c(-0.34, 0.12), c(0.09, 0.21)],
        )
        .unwrap()
    }

    #[test]
    fn r_at_zero_is_scaled_permutation() {
        let p = params2();
        let r0 = r_matrix(c(0.0, 0.0), &p);
        let mut perm = DenseOperator::zeros(4);
        for (r, cc) in [(0usize, 0usize), (1, 2), (2, 1), (3, 3)] {
            perm.set(r, cc, fn_c(&p));
        }
        assert!(r0.rel_diff(&perm) < 1e-15);
    }

    #[test]
    fn r_unitarity() {
        let p = params2();
        let lam = c(0.31, 0.27);
        let prod = r_matrix(lam, &p).mul(&r_matrix(-lam, &p));
        let scalar = fn_a(lam, &p) * fn_a(-lam, &p);
        assert!(prod.rel_diff(&DenseOperator::identity(4).scale(scalar)) < 1e-14);
    }

    #[test]
    fn r_crossing_unitarity() {
        // R^{t1}(λ) R^{t1}(-λ-2γ) ∝ id; the constant must agree across entries.
        let p = params2();
        let lam = c(0.31, 0.27);
        let t1 = |m: &DenseOperator| {
            let mut out = DenseOperator::zeros(4);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            out.set(2 * i + j, 2 * k + l, m.get(2 * k + j, 2 * i + l));
                        }
                    }
                }
            }
            out
        };
        let prod = t1(&r_matrix(lam, &p)).mul(&t1(&r_matrix(-lam - 2.0 * p.gamma, &p)));
        let scalar = prod.get(0, 0);
        assert!(scalar.norm() > 1e-6);
        assert!(prod.rel_diff(&DenseOperator::identity(4).scale(scalar)) < 1e-13);
    }

    #[test]
    fn yang_baxter_residual() {
        let p = params2();
        let (l1, l2) = (c(0.4, 0.1), c(-0.2, 0.37));
        let r12 = |u: Cpx| two_site_embed(&r_matrix(u, &p), 0, 1, 3);
        let r13 = |u: Cpx| two_site_embed(&r_matrix(u, &p), 0, 2, 3);
        let r23 = |u: Cpx| two_site_embed(&r_matrix(u, &p), 1, 2, 3);
        let lhs = r12(l1 - l2).mul(&r13(l1)).mul(&r23(l2));
        let rhs = r23(l2).mul(&r13(l1)).mul(&r12(l1 - l2));
        assert!(lhs.rel_diff(&rhs) < 1e-14);
    }

    #[test]
    fn k_matrix_special_points() {
        let p = params2();
        let k0 = k_matrix(c(0.0, 0.0), &p);
        assert!(k0.rel_diff(&DenseOperator::identity(2).scale(p.h.sinh())) < 1e-15);
        let kh = k_matrix(p.h, &p);
        assert!((kh.get(0, 0) - (2.0 * p.h).sinh()).norm() < 1e-15);
        assert!(kh.get(1, 1).norm() < 1e-15);
    }

    #[test]
    fn reflection_equation_residual() {
        let p = params2();
        let (l1, l2) = (c(0.4, 0.1), c(-0.2, 0.37));
        let r = |u: Cpx| r_matrix(u, &p);
        let k1 = |u: Cpx| k_matrix(u, &p).kron(&DenseOperator::identity(2));
        let k2 = |u: Cpx| DenseOperator::identity(2).kron(&k_matrix(u, &p));
        let lhs = r(l1 - l2).mul(&k1(l1)).mul(&r(l1 + l2)).mul(&k2(l2));
        let rhs = k2(l2).mul(&r(l1 + l2)).mul(&k1(l1)).mul(&r(l1 - l2));
        assert!(lhs.rel_diff(&rhs) < 1e-14);
    }

    #[test]
    fn dual_reflection_equation_residual() {
        // K̄ is diagonal, so the space-wise transposes are the matrices themselves.
        let p = params2();
        let (l1, l2) = (c(0.4, 0.1), c(-0.2, 0.37));
        let g2 = 2.0 * p.gamma;
        let r = |u: Cpx| r_matrix(u, &p);
        let k1 = |u: Cpx| k_dual(u, &p).kron(&DenseOperator::identity(2));
        let k2 = |u: Cpx| DenseOperator::identity(2).kron(&k_dual(u, &p));
        let lhs = r(-l1 + l2).mul(&k1(l1)).mul(&r(-l1 - l2 - g2)).mul(&k2(l2));
        let rhs = k2(l2).mul(&r(-l1 - l2 - g2)).mul(&k1(l1)).mul(&r(-l1 + l2));
        assert!(lhs.rel_diff(&rhs) < 1e-14);
    }

    #[test]
    fn k_dual_is_image_of_k_under_the_isomorphism() {
        let p = params2();
        for k in 0..20 {
            let lam = c(0.1 * k as f64 - 0.7, 0.07 * k as f64 - 0.5);
            // d(K)(λ) = K^t(-λ-γ)|_{h→h̄}; K diagonal so the transpose is itself.
            let mapped = {
                let mut pp = p.clone();
                pp.h = p.hbar;
                k_matrix(-lam - p.gamma, &pp)
            };
            assert!(k_dual(lam, &p).rel_diff(&mapped) < 1e-14);
        }
        let kd = k_dual(-p.gamma, &p);
        assert!(kd.rel_diff(&DenseOperator::identity(2).scale(p.hbar.sinh())) < 1e-14);
    }

    #[test]
    fn highest_weight_actions() {
        let p = params3();
        let lam = c(0.31, 0.27);
        let blocks = double_row_monodromy(lam, &p).unwrap();
        let vac = highest_weight(p.l());

        let la = lambda_a(lam, &p);
        let av = blocks.a.apply(&vac);
        assert!(av.sub(&vac.scale(la)).norm() / la.norm() < 1e-13);

        let dt = d_tilde(&blocks, &p).unwrap();
        let ld = lambda_d_tilde(lam, &p).unwrap();
        let dv = dt.apply(&vac);
        assert!(dv.sub(&vac.scale(ld)).norm() / ld.norm() < 1e-12);

        assert!(blocks.c.apply(&vac).norm() < 1e-12);
        assert!(blocks.b.apply_left(&vac).norm() < 1e-12);

        // bra-side actions
        let av = blocks.a.apply_left(&vac);
        assert!(av.sub(&vac.scale(la)).norm() / la.norm() < 1e-13);
        let dv = dt.apply_left(&vac);
        assert!(dv.sub(&vac.scale(ld)).norm() / ld.norm() < 1e-12);
    }

    #[test]
    fn monodromy_blocks_match_full_embedding() {
        // Rebuild the 2·2^L product with generic two_site embeddings (aux = slot 0)
        // and compare all four blocks; certifies the fast block accumulation.
        let p = params2();
        let lam = c(0.31, 0.27);
        let total = p.l() + 1;
        let dim = 1usize << total;
        let mut full = DenseOperator::identity(dim);
        for j in (1..=p.l()).rev() {
            full = full.mul(&two_site_embed(&r_matrix(lam - p.mu[j - 1], &p), 0, j, total));
        }
        // K_0 acts on the aux slot alone.
        let mut kfull = DenseOperator::zeros(dim);
        let k = k_matrix(lam, &p);
        let half = dim / 2;
        for i in 0..half {
            kfull.set(i, i, k.get(0, 0));
            kfull.set(half + i, half + i, k.get(1, 1));
        }
        full = full.mul(&kfull);
        for j in 1..=p.l() {
            full = full.mul(&two_site_embed(&r_matrix(lam + p.mu[j - 1], &p), 0, j, total));
        }
        let blocks = double_row_monodromy(lam, &p).unwrap();
        for (b, roff, coff) in [
            (&blocks.a, 0usize, 0usize),
            (&blocks.b, 0, half),
            (&blocks.c, half, 0),
            (&blocks.d, half, half),
        ] {
            let mut block = DenseOperator::zeros(half);
            for r in 0..half {
                for cidx in 0..half {
                    block.set(r, cidx, full.get(roff + r, coff + cidx));
                }
            }
            assert!(b.rel_diff(&block) < 1e-13);
        }
    }

    #[test]
    fn commutation_families() {
        let p = params3();
        let (l1, l2) = (c(0.4, 0.1), c(-0.2, 0.37));
        let u1 = double_row_monodromy(l1, &p).unwrap();
        let u2 = double_row_monodromy(l2, &p).unwrap();
        assert!(u1.b.commutator_rel(&u2.b) < 1e-13);
        assert!(u1.c.commutator_rel(&u2.c) < 1e-13);
        let t1 = transfer_from_blocks(&u1, &p);
        let t2 = transfer_from_blocks(&u2, &p);
        assert!(t1.commutator_rel(&t2) < 1e-13);
    }

    #[test]
    fn transfer_matrix_two_assemblies_and_sectors() {
        let p = params3();
        let lam = c(0.31, 0.27);
        let t = transfer_matrix(lam, &p).unwrap();
        let t2 = transfer_matrix_via_trace(lam, &p).unwrap();
        assert!(t.rel_diff(&t2) < 1e-14);
        // ice rule: T preserves magnon number
        let dim = t.dim();
        for r in 0..dim {
            for cc in 0..dim {
                if magnon_number(r) != magnon_number(cc) {
                    assert!(t.get(r, cc).norm() < 1e-12 * t.frobenius());
                }
            }
        }
    }

    #[test]
    fn bbcc_reconstruction() {
        let p = params3();
        let lam = c(0.31, 0.27);
        let dr = double_row_monodromy(lam, &p).unwrap();
        let sr = single_row_monodromy(lam, &p).unwrap();
        let kp = (p.h + lam).sinh();
        let km = (p.h - lam).sinh();
        let b_rec = sr.a.mul(&sr.b_bar).scale(kp).add(&sr.b.mul(&sr.d_bar).scale(km));
        let c_rec = sr.c.mul(&sr.a_bar).scale(kp).add(&sr.d.mul(&sr.c_bar).scale(km));
        assert!(b_rec.rel_diff(&dr.b) < 1e-13);
        assert!(c_rec.rel_diff(&dr.c) < 1e-13);
    }

    #[test]
    fn single_row_transposition_symmetry() {
        // A^t = Ā|_{μ→-μ} and B^t = C̄|_{μ→-μ} (crossing symmetry of the rows).
        let p = params3();
        let lam = c(0.31, 0.27);
        let sr = single_row_monodromy(lam, &p).unwrap();
        let srm = single_row_monodromy(lam, &p.negated_mu()).unwrap();
        assert!(sr.a.transpose().rel_diff(&srm.a_bar) < 1e-13);
        assert!(sr.b.transpose().rel_diff(&srm.c_bar) < 1e-13);
        assert!(sr.c.transpose().rel_diff(&srm.b_bar) < 1e-13);
        assert!(sr.d.transpose().rel_diff(&srm.d_bar) < 1e-13);
    }

    #[test]
    fn c_is_transposed_b_with_negated_mu() {
        let p = params3();
        let lam = c(0.31, 0.27);
        let dr = double_row_monodromy(lam, &p).unwrap();
        let drm = double_row_monodromy(lam, &p.negated_mu()).unwrap();
        assert!(dr.c.rel_diff(&drm.b.transpose()) < 1e-13);
    }

    #[test]
    fn lambda_zeros() {
        let p = params2();
        assert!(lambda_d_tilde(c(0.0, 0.0), &p).unwrap().norm() < 1e-15);
        assert!(lambda_a(-p.h, &p).norm() < 1e-15);
        assert!(lambda_a(p.mu[0] - p.gamma, &p).norm() < 1e-15);
    }

    #[test]
    fn d_tilde_singular_near_half_gamma() {
        let p = params2();
        let lam = -p.gamma / 2.0 + c(1e-8, 0.0);
        let blocks = double_row_monodromy(lam, &p).unwrap();
        assert!(matches!(
            d_tilde(&blocks, &p),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn hamiltonian_explicit_l2_and_symmetry() {
        let p = params2();
        let h = hamiltonian(&p).unwrap();
        // hand-transcribed 4x4: basis |00>,|01>,|10>,|11> (0 = up)
        let delta = p.gamma.cosh();
        let bf1 = fn_c(&p) * p.h.cosh() / p.h.sinh();
        let bf2 = fn_c(&p) * p.hbar.cosh() / p.hbar.sinh();
        let z = c(0.0, 0.0);
        let two = c(2.0, 0.0);
        let mut want = DenseOperator::zeros(4);
        // σxσx + σyσy flips |01> <-> |10> with amplitude 2; σzσz diag(1,-1,-1,1)
        want.set(0, 0, delta + bf1 - bf2);
        want.set(1, 1, -delta + bf1 + bf2);
        want.set(2, 2, -delta - bf1 - bf2);
        want.set(3, 3, delta - bf1 + bf2);
        want.set(1, 2, two);
        want.set(2, 1, two);
        let _ = z;
        assert!(h.rel_diff(&want) < 1e-14);
        assert!(h.rel_diff(&h.transpose()) < 1e-14);
    }

    #[test]
    fn exceeding_dense_limit_errors() {
        let p = ModelParams::new(
            c(0.4, 0.2),
            c(0.8, -0.3),
            c(-0.6, 0.5),
            vec![c(0.0, 0.0); MAX_DENSE_L + 1],
        )
        .unwrap();
        assert!(matches!(
            double_row_monodromy(c(0.1, 0.1), &p),
            Err(Error::DimensionLimit { .. })
        ));
    }

    #[test]
    fn spectral_set_genericity_guards_monodromy_uses() {
        let p = params2();
        let s = SpectralSets::random_generic(11, 2, 0.8, &p, 0.05);
        assert!(s.check_generic(&p, 0.05).is_ok());
    }
}
