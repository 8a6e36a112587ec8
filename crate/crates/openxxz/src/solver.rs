//! The constructive solution: separation-of-variables kernels and recursion,
//! the n = 1 closed form, and the multiple contour integral evaluated either
//! as a residue-permutation sum or by nested circle quadrature.

use itertools::Itertools;
use rayon::prelude::*;

use crate::bethe::scalar_product_direct_value;
use crate::error::{Error, Result};
use crate::numkernel::{fn_a, fn_b, fn_c, sinh_proximity, Cpx, ModelParams, SpectralSets, DELTA_GEN};
use crate::record::{EvalRecord, Method};

// ---------------------------------------------------------------------------
// Step 1: V and W extraction
// ---------------------------------------------------------------------------

fn singular_prefactor(context: &'static str, z: Cpx, what: &str) -> Result<()> {
    let prox = sinh_proximity(z);
    if prox < DELTA_GEN {
        Err(Error::SingularDenominator {
            context,
            factor: what.into(),
            magnitude: prox,
            threshold: DELTA_GEN,
        })
    } else {
        Ok(())
    }
}

/// V(X'|Y') obtained by specializing the oracle at (X' ∪ {μ₁-γ} | Y' ∪ {μ₁})
/// and dividing out the displayed prefactors. `X'`, `Y'` have length n-1.
pub fn extract_v<F>(x_red: &[Cpx], y_red: &[Cpx], params: &ModelParams, oracle: F) -> Result<Cpx>
where
    F: Fn(&[Cpx], &[Cpx]) -> Result<Cpx>,
{
    let m1 = params.mu[0];
    let g = params.gamma;
    let mut x_aug = x_red.to_vec();
    x_aug.push(m1 - g);
    let mut y_aug = y_red.to_vec();
    y_aug.push(m1);
    let s = oracle(&x_aug, &y_aug)?;
    let mut pref = Cpx::new(1.0, 0.0);
    for &lam in x_red {
        singular_prefactor("extract_v", lam - m1, "b(lambda - mu_1)")?;
        pref *= fn_b(lam - m1) * fn_a(lam + m1, params);
    }
    for &lam in y_red {
        singular_prefactor("extract_v", lam + m1, "b(lambda + mu_1)")?;
        pref *= fn_a(lam - m1, params) * fn_b(lam + m1);
    }
    Ok(s / pref)
}

/// W(X'|Y') from the swapped specialization (X' ∪ {μ₁} | Y' ∪ {μ₁-γ}).
pub fn extract_w<F>(x_red: &[Cpx], y_red: &[Cpx], params: &ModelParams, oracle: F) -> Result<Cpx>
where
    F: Fn(&[Cpx], &[Cpx]) -> Result<Cpx>,
{
    let m1 = params.mu[0];
    let g = params.gamma;
    let mut x_aug = x_red.to_vec();
    x_aug.push(m1);
    let mut y_aug = y_red.to_vec();
    y_aug.push(m1 - g);
    let s = oracle(&x_aug, &y_aug)?;
    let mut pref = Cpx::new(1.0, 0.0);
    for &lam in x_red {
        singular_prefactor("extract_w", lam + m1, "b(lambda + mu_1)")?;
        pref *= fn_a(lam - m1, params) * fn_b(lam + m1);
    }
    for &lam in y_red {
        singular_prefactor("extract_w", lam - m1, "b(lambda - mu_1)")?;
        pref *= fn_b(lam - m1) * fn_a(lam + m1, params);
    }
    Ok(s / pref)
}

// ---------------------------------------------------------------------------
// Steps 2-5: the F and Omega coefficient functions
// ---------------------------------------------------------------------------

/// ℱ(Z) for a set Z of size n-1.
pub fn f_factor(z: &[Cpx], params: &ModelParams) -> Result<Cpx> {
    let m1 = params.mu[0];
    let mut pref = fn_c(params) * fn_b(2.0 * m1) * fn_b(params.h + m1);
    for j in 2..=params.l() {
        pref *= fn_a(m1 - params.mu[j - 1], params) * fn_a(m1 + params.mu[j - 1], params);
    }
    singular_prefactor("f_factor", 2.0 * m1, "b(2 mu_1)")?;
    singular_prefactor("f_factor", params.h + m1, "b(h + mu_1)")?;
    let mut num = Cpx::new(1.0, 0.0);
    for &lam in z {
        num *= fn_b(lam - m1) * fn_a(lam + m1, params);
    }
    Ok(num / pref)
}

/// Ω_λ(Z_λ): the second-term prefactor is c / b(λ+μ₁) (the λ₀ = μ₁-γ
/// specialization of the Type A coefficients).
pub fn omega_factor(lambda: Cpx, others: &[Cpx], params: &ModelParams) -> Result<Cpx> {
    let g = params.gamma;
    let m1 = params.mu[0];
    let c = fn_c(params);
    singular_prefactor("omega_factor", lambda - m1 + g, "a(lambda - mu_1)")?;
    singular_prefactor("omega_factor", lambda + m1, "b(lambda + mu_1)")?;
    singular_prefactor("omega_factor", 2.0 * lambda + g, "a(2 lambda)")?;
    let la = crate::algebra::lambda_a(lambda, params);
    let ld = crate::algebra::lambda_d_tilde(lambda, params)?;
    let mut t1 = la * c / fn_a(lambda - m1, params) * (fn_b(2.0 * lambda) / fn_a(2.0 * lambda, params));
    let mut t2 = ld * c / fn_b(lambda + m1);
    for &t in others {
        t1 *= fn_a(t - lambda, params) / fn_b(t - lambda) * (fn_b(t + lambda) / fn_a(t + lambda, params))
            * fn_b(t - m1)
            * fn_a(t + m1, params);
        t2 *= fn_a(lambda - t, params) / fn_b(lambda - t) * (fn_a(t + lambda + g, params) / fn_b(t + lambda + g))
            * fn_b(t - m1)
            * fn_a(t + m1, params);
    }
    Ok(t1 + t2)
}

/// ℱ̄(Z).
pub fn f_bar_factor(z: &[Cpx], params: &ModelParams) -> Result<Cpx> {
    let m1 = params.mu[0];
    let g = params.gamma;
    singular_prefactor("f_bar_factor", 2.0 * m1 - 2.0 * g, "b(2 mu_1 - 2 gamma)")?;
    singular_prefactor("f_bar_factor", params.h - m1, "b(h - mu_1)")?;
    let mut pref = fn_c(params) * fn_b(2.0 * m1 - 2.0 * g) * fn_b(params.h - m1);
    for j in 2..=params.l() {
        pref *= fn_a(params.mu[j - 1] - m1, params) * fn_a(-params.mu[j - 1] - m1, params);
    }
    let mut num = Cpx::new(1.0, 0.0);
    for &lam in z {
        num *= fn_a(lam - m1, params) * fn_b(lam + m1);
    }
    Ok(num / pref)
}

/// Ω̄_λ(Z_λ).
pub fn omega_bar_factor(lambda: Cpx, others: &[Cpx], params: &ModelParams) -> Result<Cpx> {
    let g = params.gamma;
    let m1 = params.mu[0];
    let c = fn_c(params);
    singular_prefactor("omega_bar_factor", lambda + m1 + g, "a(lambda + mu_1)")?;
    singular_prefactor("omega_bar_factor", lambda - m1, "b(lambda - mu_1)")?;
    singular_prefactor("omega_bar_factor", 2.0 * lambda + g, "a(2 lambda)")?;
    let la = crate::algebra::lambda_a(lambda, params);
    let ld = crate::algebra::lambda_d_tilde(lambda, params)?;
    let mut t1 = la * c / fn_a(lambda + m1, params) * (fn_b(2.0 * lambda) / fn_a(2.0 * lambda, params));
    let mut t2 = ld * c / fn_b(lambda - m1);
    for &t in others {
        t1 *= fn_a(t - lambda, params) / fn_b(t - lambda) * (fn_b(t + lambda) / fn_a(t + lambda, params))
            * fn_a(t - m1, params)
            * fn_b(t + m1);
        t2 *= fn_a(lambda - t, params) / fn_b(lambda - t) * (fn_a(t + lambda + g, params) / fn_b(t + lambda + g))
            * fn_a(t - m1, params)
            * fn_b(t + m1);
    }
    Ok(t1 + t2)
}

// ---------------------------------------------------------------------------
// Steps 7-8: the two separation kernels
// ---------------------------------------------------------------------------

/// Which 2x2 determinant a [`KernelMatrix`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelVariant {
    /// From the first separation kernel (evaluation points λ ∈ X, λ̄ ∈ Y).
    Gamma,
    /// From the second separation kernel (μ₁ signs flipped in the shifts).
    GammaBar,
    /// Level-i block of the contour integrand (points w_i, w̄_i).
    PhiLevel(usize),
}

/// One of the 2x2 matrices whose determinants drive the separation kernels
/// and the contour integrand.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub entries: [[Cpx; 2]; 2],
    pub variant: KernelVariant,
    /// (λ, λ̄) or (w_i, w̄_i), whichever the variant evaluates at.
    pub points: (Cpx, Cpx),
}

impl KernelMatrix {
    pub fn det(&self) -> Cpx {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn kernel_generic(
    lambda: Cpx,
    lambda_bar: Cpx,
    sets: &SpectralSets,
    params: &ModelParams,
    bar: bool,
) -> Result<Cpx> {
    let g = params.gamma;
    let m1 = params.mu[0];
    let x_red: Vec<Cpx> = sets.x.iter().copied().filter(|&z| z != lambda).collect();
    let y_red: Vec<Cpx> = sets.y.iter().copied().filter(|&z| z != lambda_bar).collect();
    if x_red.len() != sets.n() - 1 || y_red.len() != sets.n() - 1 {
        return Err(Error::Invalid(
            "kernel evaluation points must be members of the spectral sets".into(),
        ));
    }

    // the constant C_0 (or C̄_0)
    let ratio = |t: Cpx| -> Cpx {
        let r = fn_a(t - m1, params) / fn_b(t - m1) * (fn_b(t + m1) / fn_a(t + m1, params));
        if bar {
            r.inv()
        } else {
            r
        }
    };
    let mut bracket_x = Cpx::new(1.0, 0.0);
    let mut bracket_y = Cpx::new(1.0, 0.0);
    for &t in &sets.x {
        bracket_x *= ratio(t);
    }
    for &t in &sets.y {
        bracket_y *= ratio(t);
    }
    let bracket = bracket_x - bracket_y;
    let bracket_scale = bracket_x.norm().max(bracket_y.norm()).max(f64::MIN_POSITIVE);
    if bracket.norm() < DELTA_GEN * bracket_scale {
        return Err(Error::Resonance(format!(
            "kernel bracket vanishes (|Δ| = {:.3e} at scale {:.3e})",
            bracket.norm(),
            bracket_scale
        )));
    }
    let mut c0_inv = fn_b(params.h + m1)
        * fn_b(params.h - m1)
        * fn_b(2.0 * m1 - 2.0 * g)
        * if bar {
            fn_b(2.0 * m1 - g)
        } else {
            fn_b(2.0 * m1 + g)
        };
    for j in 2..=params.l() {
        for eps in [1.0f64, -1.0] {
            c0_inv *= fn_a(m1 - eps * params.mu[j - 1], params) * fn_a(eps * params.mu[j - 1] - m1, params);
        }
    }
    c0_inv *= bracket;

    let det = separation_matrix(lambda, lambda_bar, sets, params, bar)?.det();

    let mut pref = fn_b(2.0 * lambda) / fn_a(2.0 * lambda, params)
        * (fn_b(2.0 * lambda_bar) / fn_a(2.0 * lambda_bar, params));
    for &t in x_red.iter().chain(y_red.iter()) {
        pref *= if bar {
            fn_b(t - m1) * fn_a(t + m1, params)
        } else {
            fn_a(t - m1, params) * fn_b(t + m1)
        };
    }
    Ok(det * pref / c0_inv)
}

/// The 2x2 matrix behind the separation kernels: row i sets the ω shifts and
/// the μ₁ sign (flipped for the barred kernel), column j the evaluation point
/// and the reduced set it couples to.
pub fn separation_matrix(
    lambda: Cpx,
    lambda_bar: Cpx,
    sets: &SpectralSets,
    params: &ModelParams,
    bar: bool,
) -> Result<KernelMatrix> {
    let g = params.gamma;
    let m1 = params.mu[0];
    let x_red: Vec<Cpx> = sets.x.iter().copied().filter(|&z| z != lambda).collect();
    let y_red: Vec<Cpx> = sets.y.iter().copied().filter(|&z| z != lambda_bar).collect();
    let mut m = [[Cpx::new(0.0, 0.0); 2]; 2];
    for (i, row) in m.iter_mut().enumerate() {
        let mut sgn = if i == 0 { 1.0 } else { -1.0 };
        if bar {
            sgn = -sgn;
        }
        for (j, entry) in row.iter_mut().enumerate() {
            let kappa = if j == 0 { lambda } else { lambda_bar };
            let zj: &[Cpx] = if j == 0 { &x_red } else { &y_red };
            let om = (kappa - sgn * m1 + (i as f64) * g).sinh();
            let omb = (kappa + sgn * m1 + (1.0 - i as f64) * g).sinh();
            let mut t1 = fn_b(params.h + kappa) / om;
            let mut t2 = fn_a(kappa - params.h, params) / omb;
            for &mk in &params.mu {
                t1 *= fn_a(kappa - mk, params) * fn_a(kappa + mk, params);
                t2 *= fn_b(kappa - mk) * fn_b(kappa + mk);
            }
            for &t in zj {
                t1 *= fn_a(t - kappa, params) / fn_b(t - kappa) * (fn_b(t + kappa) / fn_a(t + kappa, params));
                t2 *= fn_a(kappa - t, params) / fn_b(kappa - t)
                    * (fn_a(t + kappa + g, params) / fn_b(t + kappa + g));
            }
            *entry = t1 - t2;
        }
    }
    let out = KernelMatrix {
        entries: m,
        variant: if bar { KernelVariant::GammaBar } else { KernelVariant::Gamma },
        points: (lambda, lambda_bar),
    };
    if !out.is_finite() {
        return Err(Error::Invalid("separation matrix entries are not finite".into()));
    }
    Ok(out)
}

/// 𝒦_{λλ̄}: the Step-7 separation kernel; λ must belong to X and λ̄ to Y.
pub fn kernel_k(lambda: Cpx, lambda_bar: Cpx, sets: &SpectralSets, params: &ModelParams) -> Result<Cpx> {
    kernel_generic(lambda, lambda_bar, sets, params, false)
}

/// 𝒦̄_{λλ̄}: the Step-8 kernel.
pub fn kernel_kbar(lambda: Cpx, lambda_bar: Cpx, sets: &SpectralSets, params: &ModelParams) -> Result<Cpx> {
    kernel_generic(lambda, lambda_bar, sets, params, true)
}

// ---------------------------------------------------------------------------
// n = 1 closed form
// ---------------------------------------------------------------------------

/// ψ(λ, λ̄).
pub fn psi(lambda: Cpx, lambda_bar: Cpx, params: &ModelParams) -> Cpx {
    let mut pa = Cpx::new(1.0, 0.0);
    let mut pb = Cpx::new(1.0, 0.0);
    let mut pab = Cpx::new(1.0, 0.0);
    let mut pbb = Cpx::new(1.0, 0.0);
    for &m in &params.mu {
        pa *= fn_a(lambda - m, params) * fn_a(lambda + m, params);
        pb *= fn_b(lambda - m) * fn_b(lambda + m);
        pab *= fn_a(lambda_bar - m, params) * fn_a(lambda_bar + m, params);
        pbb *= fn_b(lambda_bar - m) * fn_b(lambda_bar + m);
    }
    let bh = |z: Cpx| fn_b(params.h + z);
    let ah = |z: Cpx| fn_a(z - params.h, params);
    bh(lambda) * pa * (bh(lambda_bar) * fn_b(lambda - lambda_bar) * pab + ah(lambda_bar) * fn_a(lambda + lambda_bar, params) * pbb)
        - ah(lambda) * pb
            * (bh(lambda_bar) * fn_a(lambda + lambda_bar, params) * pab
                + ah(lambda_bar) * fn_b(lambda - lambda_bar) * pbb)
}

/// S_1(λ^C | λ^B) in closed form, normalization fixed by the asymptotics.
pub fn scalar_product_n1_value(lambda_c: Cpx, lambda_b: Cpx, params: &ModelParams) -> Result<Cpx> {
    let g = params.gamma;
    singular_prefactor("scalar_product_n1", lambda_b - lambda_c, "b(lambda^B - lambda^C)")?;
    singular_prefactor("scalar_product_n1", lambda_b + lambda_c + g, "a(lambda^B + lambda^C)")?;
    singular_prefactor("scalar_product_n1", 2.0 * lambda_c + g, "a(2 lambda^C)")?;
    singular_prefactor("scalar_product_n1", 2.0 * lambda_b + g, "a(2 lambda^B)")?;
    Ok(fn_c(params)
        * (fn_b(2.0 * lambda_c) / fn_a(2.0 * lambda_c, params))
        * (fn_b(2.0 * lambda_b) / fn_a(2.0 * lambda_b, params))
        * psi(lambda_b, lambda_c, params)
        / (fn_b(lambda_b - lambda_c) * fn_a(lambda_b + lambda_c, params)))
}

pub fn scalar_product_n1(lambda_c: Cpx, lambda_b: Cpx, params: &ModelParams) -> Result<EvalRecord> {
    let value = scalar_product_n1_value(lambda_c, lambda_b, params)?;
    let sets = SpectralSets::new(vec![lambda_c], vec![lambda_b])?;
    Ok(EvalRecord::new(Method::ClosedN1, params, &sets, value))
}

// ---------------------------------------------------------------------------
// Theorem 5: the contour integrand and its residue evaluation
// ---------------------------------------------------------------------------

/// R_i at the point (w, w̄): the difference of the two telescoping ratio
/// products over k = i..n.
pub fn r_level(i: usize, w: &[Cpx], wb: &[Cpx], params: &ModelParams) -> Cpx {
    let m = params.mu[i - 1];
    let mut t1 = Cpx::new(1.0, 0.0);
    let mut t2 = Cpx::new(1.0, 0.0);
    for k in i..=w.len() {
        t1 *= fn_a(w[k - 1] - m, params) / fn_b(w[k - 1] - m) * (fn_b(w[k - 1] + m) / fn_a(w[k - 1] + m, params));
        t2 *= fn_a(wb[k - 1] - m, params) / fn_b(wb[k - 1] - m)
            * (fn_b(wb[k - 1] + m) / fn_a(wb[k - 1] + m, params));
    }
    t1 - t2
}

/// Scale-free magnitude of R_i (for resonance detection).
pub fn r_level_scaled(i: usize, w: &[Cpx], wb: &[Cpx], params: &ModelParams) -> f64 {
    let m = params.mu[i - 1];
    let mut t1 = Cpx::new(1.0, 0.0);
    let mut t2 = Cpx::new(1.0, 0.0);
    for k in i..=w.len() {
        t1 *= fn_a(w[k - 1] - m, params) / fn_b(w[k - 1] - m) * (fn_b(w[k - 1] + m) / fn_a(w[k - 1] + m, params));
        t2 *= fn_a(wb[k - 1] - m, params) / fn_b(wb[k - 1] - m)
            * (fn_b(wb[k - 1] + m) / fn_a(wb[k - 1] + m, params));
    }
    (t1 - t2).norm() / t1.norm().max(t2.norm()).max(f64::MIN_POSITIVE)
}

/// Level-i 2x2 matrix Φ^{(i)} of the contour integrand at the point (w, w̄);
/// ω_l(x) = sinh(x + (l-1)γ), ω̄_l(x) = sinh(x + (2-l)γ), with column m
/// selecting the w (m=1) or w̄ (m=2) family.
pub fn phi_matrix(i: usize, w: &[Cpx], wb: &[Cpx], params: &ModelParams) -> KernelMatrix {
    let n = w.len();
    let g = params.gamma;
    let mi = params.mu[i - 1];
    let s = |j: usize, m: usize| if m == 1 { w[j - 1] } else { wb[j - 1] };
    let mut mat = [[Cpx::new(0.0, 0.0); 2]; 2];
    for l in 1..=2usize {
        let sgn = if l == 1 { 1.0 } else { -1.0 };
        for m in 1..=2usize {
            let sim = s(i, m);
            let om = (sim - sgn * mi + (l as f64 - 1.0) * g).sinh();
            let omb = (sim + sgn * mi + (2.0 - l as f64) * g).sinh();
            let mut t1 = fn_b(params.h + sim) / om;
            let mut t2 = fn_a(sim - params.h, params) / omb;
            for k in i..=params.l() {
                let mk = params.mu[k - 1];
                t1 *= fn_a(sim - mk, params) * fn_a(sim + mk, params);
                t2 *= fn_b(sim - mk) * fn_b(sim + mk);
            }
            for j in (i + 1)..=n {
                let sj = s(j, m);
                t1 *= fn_a(sj - sim, params) / fn_b(sj - sim) * (fn_b(sj + sim) / fn_a(sj + sim, params));
                t2 *= fn_a(sim - sj, params) / fn_b(sim - sj)
                    * (fn_a(sim + sj + g, params) / fn_b(sim + sj + g));
            }
            mat[l - 1][m - 1] = t1 - t2;
        }
    }
    KernelMatrix {
        entries: mat,
        variant: KernelVariant::PhiLevel(i),
        points: (w[i - 1], wb[i - 1]),
    }
}

/// det Φ^{(i)} at the point (w, w̄).
pub fn phi_det(i: usize, w: &[Cpx], wb: &[Cpx], params: &ModelParams) -> Cpx {
    phi_matrix(i, w, wb, params).det()
}

/// H(w | w̄): the full Theorem-5 integrand without the 1/b(w-λ) denominators
/// (the numerator of the contour ansatz), c^{2n} included.
pub fn integrand_h(w: &[Cpx], wb: &[Cpx], params: &ModelParams) -> Cpx {
    let n = w.len();
    let mut val = fn_c(params).powi(2 * n as i32);
    for i in 1..n {
        let mi = params.mu[i - 1];
        for j in (i + 1)..=n {
            val *= fn_a(w[j - 1] - mi, params)
                * fn_b(w[j - 1] + mi)
                * fn_a(wb[j - 1] - mi, params)
                * fn_b(wb[j - 1] + mi);
        }
    }
    for i in 1..=n {
        let mi = params.mu[i - 1];
        val *= fn_b(2.0 * mi) / fn_a(2.0 * mi, params);
    }
    for i in 1..n {
        for j in (i + 1)..=n {
            let dw = fn_b(w[j - 1] - w[i - 1]);
            let dwb = fn_b(wb[j - 1] - wb[i - 1]);
            val *= dw * dw * dwb * dwb;
        }
    }
    for i in 1..=n {
        val *= fn_b(2.0 * w[i - 1]) / fn_a(2.0 * w[i - 1], params)
            * (fn_b(2.0 * wb[i - 1]) / fn_a(2.0 * wb[i - 1], params));
        val *= phi_det(i, w, wb, params) / r_level(i, w, wb, params);
    }
    val
}

/// The constant relating H at level n to H at level n-1 (L-1 sites, μ
/// shifted): evaluating it at any generic point gives the proportionality
/// constant between V and S_{n-1}, which seeds the recursion route.
pub fn hh_level_constant(w: &[Cpx], wb: &[Cpx], params: &ModelParams) -> Result<Cpx> {
    let n = w.len();
    if n < 2 {
        return Err(Error::Invalid("hh_level_constant needs n >= 2".into()));
    }
    let reduced = params.dropped_first_site()?;
    let g = params.gamma;
    let m1 = params.mu[0];
    let lvl1 = fn_b(2.0 * w[0]) / fn_a(2.0 * w[0], params)
        * (fn_b(2.0 * wb[0]) / fn_a(2.0 * wb[0], params))
        * phi_det(1, w, wb, params)
        / r_level(1, w, wb, params);
    let mut cst = fn_b(2.0 * m1 - 2.0 * g) * fn_b(2.0 * m1 + g);
    for eps in [1.0f64, -1.0] {
        cst *= fn_b(params.h + eps * m1);
        for j in 2..=params.l() {
            cst *= fn_a(m1 - eps * params.mu[j - 1], params) * fn_a(eps * params.mu[j - 1] - m1, params);
        }
    }
    let mut tail = Cpx::new(1.0, 0.0);
    for k in 2..=n {
        let dw = fn_b(w[k - 1] - w[0]);
        let dwb = fn_b(wb[k - 1] - wb[0]);
        tail *= dw * dw * dwb * dwb;
        tail *= fn_a(w[k - 1] - m1, params)
            * fn_b(w[k - 1] + m1)
            * fn_a(wb[k - 1] - m1, params)
            * fn_b(wb[k - 1] + m1);
    }
    let h_full = integrand_h(w, wb, params);
    let h_red = integrand_h(&w[1..], &wb[1..], &reduced);
    Ok(h_full / (lvl1 / cst * tail * h_red))
}

/// Evaluation mode of the Theorem-5 contour integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContourMode {
    /// Finite sum over injective pole assignments (σ, τ), summed in
    /// lexicographic order.
    Residue,
    /// Nested trapezoid quadrature on circles around the spectral points;
    /// supported for n <= 2. `validate` re-runs with doubled nodes and
    /// errors when the two results drift apart.
    Quadrature {
        nodes: usize,
        radius: f64,
        validate: bool,
    },
}

pub const QUAD_NODES_DEFAULT: usize = 96;
pub const QUAD_RADIUS_DEFAULT: f64 = 0.1;

/// One injective pole assignment of the residue evaluation: w_i ← λ_{σ(i)}^C,
/// w̄_i ← λ_{τ(i)}^B, with its residue weight (the integrand with the picked
/// b factors replaced by one and the remaining denominators kept).
#[derive(Clone, Debug)]
pub struct ResidueAssignment {
    pub sigma: Vec<usize>,
    pub tau: Vec<usize>,
    pub weight: Cpx,
}

/// One residue term: the integrand with the picked b(w_i - λ_{σ(i)}) factors
/// replaced by one, evaluated at the assignment; the remaining denominator
/// factors stay.
fn residue_term(sigma: &[usize], tau: &[usize], sets: &SpectralSets, params: &ModelParams) -> Cpx {
    let n = sets.n();
    let w: Vec<Cpx> = sigma.iter().map(|&k| sets.x[k]).collect();
    let wb: Vec<Cpx> = tau.iter().map(|&k| sets.y[k]).collect();
    let h = integrand_h(&w, &wb, params);
    let mut den = Cpx::new(1.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if j != sigma[i] {
                den *= fn_b(w[i] - sets.x[j]);
            }
            if j != tau[i] {
                den *= fn_b(wb[i] - sets.y[j]);
            }
        }
    }
    h / den
}

/// All (n!)² injective assignments in lexicographic (σ, τ) order, with
/// weights; the scalar product is their plain sum. Coincident picks never
/// appear (they carry zero weight through the b(w_j - w_i)² factors and are
/// excluded by construction).
pub fn residue_assignments(sets: &SpectralSets, params: &ModelParams) -> Vec<ResidueAssignment> {
    let n = sets.n();
    let idx: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for sigma in idx.iter().copied().permutations(n) {
        for tau in idx.iter().copied().permutations(n) {
            let weight = residue_term(&sigma, &tau, sets, params);
            out.push(ResidueAssignment {
                sigma: sigma.clone(),
                tau,
                weight,
            });
        }
    }
    out
}

/// Multiple contour integral of Theorem 5.
pub fn contour_scalar_product(
    sets: &SpectralSets,
    params: &ModelParams,
    mode: ContourMode,
) -> Result<EvalRecord> {
    sets.check_generic(params, DELTA_GEN)?;
    match mode {
        ContourMode::Residue => contour_residue(sets, params),
        ContourMode::Quadrature {
            nodes,
            radius,
            validate,
        } => contour_quadrature(sets, params, nodes, radius, validate),
    }
}

fn contour_residue(sets: &SpectralSets, params: &ModelParams) -> Result<EvalRecord> {
    let n = sets.n();
    let assignments = residue_assignments(sets, params);
    let mut total = Cpx::new(0.0, 0.0);
    let mut min_r = f64::INFINITY;
    let mut terms = 0usize;
    for asg in &assignments {
        let w: Vec<Cpx> = asg.sigma.iter().map(|&k| sets.x[k]).collect();
        let wb: Vec<Cpx> = asg.tau.iter().map(|&k| sets.y[k]).collect();
        for i in 1..=n {
            min_r = min_r.min(r_level_scaled(i, &w, &wb, params));
        }
        total += asg.weight;
        terms += 1;
    }
    let trusted = min_r >= DELTA_GEN;
    let mut rec = EvalRecord::new(Method::ContourResidue, params, sets, total)
        .with_diagnostic("min_scaled_r", min_r)
        .with_diagnostic("residue_terms", terms as f64);
    rec.trusted = trusted;
    Ok(rec)
}

/// Circle grid for one integration variable: centers at the given spectral
/// points, radius shrunk when centers come closer than 3r to each other or
/// to a known fixed pole of the integrand, node phases offset per variable
/// so grids of different variables never coincide exactly.
struct CircleGrid {
    nodes: Vec<Cpx>,
    /// trapezoid weight dw/(2πi) per node
    weights: Vec<Cpx>,
}

/// Fixed pole locations of the contour integrand in any one integration
/// variable: ±μ_j and ±μ_j - γ (ratio and ω denominators) plus the zeros of
/// a(2w) at (-γ + iπk)/2. The iπ-periodic copies near the desk-scale strip
/// are enumerated explicitly.
fn integrand_poles(params: &ModelParams) -> Vec<Cpx> {
    let mut poles = Vec::new();
    let ipi = Cpx::new(0.0, std::f64::consts::PI);
    for k in -1..=1 {
        let shift = ipi * k as f64;
        for &m in &params.mu {
            poles.push(m + shift);
            poles.push(-m + shift);
            poles.push(m - params.gamma + shift);
            poles.push(-m - params.gamma + shift);
        }
    }
    for k in -2..=2 {
        poles.push((-params.gamma + ipi * k as f64) / 2.0);
    }
    poles
}

fn build_grid(centers: &[Cpx], poles: &[Cpx], nodes_per_circle: usize, radius: f64, phase: f64) -> CircleGrid {
    let mut r = radius;
    for (i, &ci) in centers.iter().enumerate() {
        for &cj in &centers[i + 1..] {
            r = r.min((ci - cj).norm() / 3.0);
        }
        for &p in poles {
            r = r.min((ci - p).norm() / 3.0);
        }
    }
    let mut nodes = Vec::with_capacity(centers.len() * nodes_per_circle);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for &c in centers {
        for k in 0..nodes_per_circle {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + phase) / nodes_per_circle as f64;
            let e = Cpx::new(0.0, th).exp();
            nodes.push(c + r * e);
            // dw/(2πi) = i r e^{iθ} dθ / (2πi) = r e^{iθ} / N
            weights.push(r * e / nodes_per_circle as f64);
        }
    }
    CircleGrid { nodes, weights }
}

fn contour_quadrature(
    sets: &SpectralSets,
    params: &ModelParams,
    nodes: usize,
    radius: f64,
    validate: bool,
) -> Result<EvalRecord> {
    let n = sets.n();
    if n > 2 {
        return Err(Error::UnsupportedOrder {
            what: "contour quadrature",
            n,
            max: 2,
        });
    }
    let run = |nn: usize| -> (Cpx, f64) {
        match n {
            1 => quadrature_n1(sets, params, nn, radius),
            _ => quadrature_n2(sets, params, nn, radius),
        }
    };
    let (value, min_r) = run(nodes);
    if validate {
        let (value2, _) = run(2 * nodes);
        let drift = (value - value2).norm() / value2.norm().max(f64::MIN_POSITIVE);
        if drift > 1e-8 {
            return Err(Error::QuadratureNotConverged { rel: drift });
        }
        let mut rec = EvalRecord::new(Method::ContourQuadrature, params, sets, value2)
            .with_diagnostic("min_scaled_r", min_r)
            .with_diagnostic("doubling_drift", drift);
        rec.trusted = min_r >= DELTA_GEN;
        return Ok(rec);
    }
    let mut rec = EvalRecord::new(Method::ContourQuadrature, params, sets, value)
        .with_diagnostic("min_scaled_r", min_r);
    rec.trusted = min_r >= DELTA_GEN;
    Ok(rec)
}

fn quadrature_n1(sets: &SpectralSets, params: &ModelParams, nodes: usize, radius: f64) -> (Cpx, f64) {
    let poles = integrand_poles(params);
    let gw = build_grid(&sets.x, &poles, nodes, radius, 0.13);
    let gb = build_grid(&sets.y, &poles, nodes, radius, 0.57);
    let x0 = sets.x[0];
    let y0 = sets.y[0];
    let mut total = Cpx::new(0.0, 0.0);
    let mut min_r = f64::INFINITY;
    for (iw, &w) in gw.nodes.iter().enumerate() {
        for (ib, &wb) in gb.nodes.iter().enumerate() {
            let h = integrand_h(&[w], &[wb], params);
            total += h / (fn_b(w - x0) * fn_b(wb - y0)) * gw.weights[iw] * gb.weights[ib];
            min_r = min_r.min(r_level_scaled(1, &[w], &[wb], params));
        }
    }
    (total, min_r)
}

/// Tables for the n = 2 quadrature: everything that depends on one node or
/// on a (level-1, level-2) node pair is precomputed, leaving about a dozen
/// complex operations per 4-tuple.
struct QuadSide {
    rho1: Vec<Cpx>,
    rho1b: Vec<Cpx>,
    rho2b: Vec<Cpx>,
    /// combined numeric pair factor: t1[i1] * t2[i2] * b(v2-v1)^2
    pair_num: Vec<Vec<Cpx>>,
    /// Φ^{(1)} column entries for rows l = 1, 2 as pair tables
    phi1_row1: Vec<Vec<Cpx>>,
    phi1_row2: Vec<Vec<Cpx>>,
    /// Φ^{(2)} column entries for rows l = 1, 2 as level-2 node tables
    phi2_row1: Vec<Cpx>,
    phi2_row2: Vec<Cpx>,
}

fn build_side(grid1: &CircleGrid, grid2: &CircleGrid, poles: &[Cpx], params: &ModelParams) -> QuadSide {
    let g = params.gamma;
    let m1 = params.mu[0];
    let m2 = params.mu[1];
    let rho = |v: Cpx, m: Cpx| fn_a(v - m, params) / fn_b(v - m) * (fn_b(v + m) / fn_a(v + m, params));

    // per-node single factors: weight, 1/Πb(v-λ), b(2v)/a(2v), and for
    // level 2 the cross-level numerator a(v-μ1) b(v+μ1)
    let single = |grid: &CircleGrid, level2: bool| -> Vec<Cpx> {
        grid.nodes
            .iter()
            .zip(&grid.weights)
            .map(|(&v, &wgt)| {
                let mut t = wgt * fn_b(2.0 * v) / fn_a(2.0 * v, params);
                for &p in poles {
                    t /= fn_b(v - p);
                }
                if level2 {
                    t *= fn_a(v - m1, params) * fn_b(v + m1);
                }
                t
            })
            .collect()
    };
    let t1 = single(grid1, false);
    let t2 = single(grid2, true);

    // Φ entry builders at level i for a single node
    let phi_parts = |v: Cpx, level: usize| -> [(Cpx, Cpx); 2] {
        let mi = if level == 1 { m1 } else { m2 };
        let mut out = [(Cpx::new(0.0, 0.0), Cpx::new(0.0, 0.0)); 2];
        for l in 1..=2usize {
            let sgn = if l == 1 { 1.0 } else { -1.0 };
            let om = (v - sgn * mi + (l as f64 - 1.0) * g).sinh();
            let omb = (v + sgn * mi + (2.0 - l as f64) * g).sinh();
            let mut a_part = fn_b(params.h + v) / om;
            let mut b_part = fn_a(v - params.h, params) / omb;
            for k in level..=params.l() {
                let mk = params.mu[k - 1];
                a_part *= fn_a(v - mk, params) * fn_a(v + mk, params);
                b_part *= fn_b(v - mk) * fn_b(v + mk);
            }
            out[l - 1] = (a_part, b_part);
        }
        out
    };

    let n1 = grid1.nodes.len();
    let n2 = grid2.nodes.len();
    let mut pair_num = vec![vec![Cpx::new(0.0, 0.0); n2]; n1];
    let mut phi1_row1 = vec![vec![Cpx::new(0.0, 0.0); n2]; n1];
    let mut phi1_row2 = vec![vec![Cpx::new(0.0, 0.0); n2]; n1];
    for (i1, &v1) in grid1.nodes.iter().enumerate() {
        let parts = phi_parts(v1, 1);
        for (i2, &v2) in grid2.nodes.iter().enumerate() {
            let dv = fn_b(v2 - v1);
            pair_num[i1][i2] = t1[i1] * t2[i2] * dv * dv;
            let gpair = fn_a(v2 - v1, params) / dv * (fn_b(v2 + v1) / fn_a(v2 + v1, params));
            let hpair = fn_a(v1 - v2, params) / fn_b(v1 - v2)
                * (fn_a(v1 + v2 + g, params) / fn_b(v1 + v2 + g));
            phi1_row1[i1][i2] = parts[0].0 * gpair - parts[0].1 * hpair;
            phi1_row2[i1][i2] = parts[1].0 * gpair - parts[1].1 * hpair;
        }
    }
    let mut phi2_row1 = vec![Cpx::new(0.0, 0.0); n2];
    let mut phi2_row2 = vec![Cpx::new(0.0, 0.0); n2];
    for (i2, &v2) in grid2.nodes.iter().enumerate() {
        let parts = phi_parts(v2, 2);
        phi2_row1[i2] = parts[0].0 - parts[0].1;
        phi2_row2[i2] = parts[1].0 - parts[1].1;
    }

    QuadSide {
        rho1: grid1.nodes.iter().map(|&v| rho(v, m1)).collect(),
        rho1b: grid2.nodes.iter().map(|&v| rho(v, m1)).collect(),
        rho2b: grid2.nodes.iter().map(|&v| rho(v, m2)).collect(),
        pair_num,
        phi1_row1,
        phi1_row2,
        phi2_row1,
        phi2_row2,
    }
}

fn quadrature_n2(sets: &SpectralSets, params: &ModelParams, nodes: usize, radius: f64) -> (Cpx, f64) {
    let poles = integrand_poles(params);
    let gw1 = build_grid(&sets.x, &poles, nodes, radius, 0.13);
    let gw2 = build_grid(&sets.x, &poles, nodes, radius, 0.37);
    let gb1 = build_grid(&sets.y, &poles, nodes, radius, 0.57);
    let gb2 = build_grid(&sets.y, &poles, nodes, radius, 0.81);
    let wside = build_side(&gw1, &gw2, &sets.x, params);
    let bside = build_side(&gb1, &gb2, &sets.y, params);

    let nb1 = gb1.nodes.len();
    let nb2 = gb2.nodes.len();
    let nw1 = gw1.nodes.len();
    let nw2 = gw2.nodes.len();

    // fixed prefactor: c^4 Π_i b(2μ_i)/a(2μ_i)
    let mut pref = fn_c(params).powi(4);
    for i in 0..2 {
        pref *= fn_b(2.0 * params.mu[i]) / fn_a(2.0 * params.mu[i], params);
    }

    let rho1b_nsq: Vec<f64> = bside.rho1.iter().map(|z| z.norm_sqr()).collect();
    let rho1b2_nsq: Vec<f64> = bside.rho1b.iter().map(|z| z.norm_sqr()).collect();
    let rho2b_nsq: Vec<f64> = bside.rho2b.iter().map(|z| z.norm_sqr()).collect();

    let partials: Vec<(Cpx, f64)> = (0..nw1)
        .into_par_iter()
        .map(|i1| {
            let mut acc = Cpx::new(0.0, 0.0);
            let mut min_sq = f64::INFINITY;
            for i2 in 0..nw2 {
                let p_w = wside.rho1[i1] * wside.rho1b[i2];
                let p_w_nsq = p_w.norm_sqr();
                let q2_w = wside.rho2b[i2];
                let q2_nsq = q2_w.norm_sqr();
                let nw = wside.pair_num[i1][i2];
                let f1w_r1 = wside.phi1_row1[i1][i2];
                let f1w_r2 = wside.phi1_row2[i1][i2];
                let f2w_r1 = wside.phi2_row1[i2];
                let f2w_r2 = wside.phi2_row2[i2];
                for (j1, &rho1b_j1) in bside.rho1.iter().enumerate().take(nb1) {
                    let rho1b_j1_nsq = rho1b_nsq[j1];
                    let phi1b_r1_row = &bside.phi1_row1[j1];
                    let phi1b_r2_row = &bside.phi1_row2[j1];
                    let numb_row = &bside.pair_num[j1];
                    for j2 in 0..nb2 {
                        let prod1 = rho1b_j1 * bside.rho1b[j2];
                        let r1 = p_w - prod1;
                        let r2 = q2_w - bside.rho2b[j2];
                        // exact resonance tracking on the integration grid
                        let s1 = r1.norm_sqr() / p_w_nsq.max(rho1b_j1_nsq * rho1b2_nsq[j2]);
                        let s2 = r2.norm_sqr() / q2_nsq.max(rho2b_nsq[j2]);
                        min_sq = min_sq.min(s1).min(s2);
                        let det1 = f1w_r1 * phi1b_r2_row[j2] - phi1b_r1_row[j2] * f1w_r2;
                        let det2 = f2w_r1 * bside.phi2_row2[j2] - bside.phi2_row1[j2] * f2w_r2;
                        acc += nw * numb_row[j2] * det1 * det2 / (r1 * r2);
                    }
                }
            }
            (acc, min_sq)
        })
        .collect();
    let total: Cpx = partials.iter().map(|p| p.0).sum();
    let min_r = partials.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).sqrt();
    (pref * total, min_r)
}

// ---------------------------------------------------------------------------
// Recursion route: (SXY) kernels + HH level constants + the n = 1 closed form
// ---------------------------------------------------------------------------

pub fn scalar_product_recursion(sets: &SpectralSets, params: &ModelParams) -> Result<EvalRecord> {
    sets.check_generic(params, DELTA_GEN)?;
    let mut hh_drift = 0.0f64;
    let value = recursion_value(&sets.x, &sets.y, params, &mut hh_drift)?;
    Ok(EvalRecord::new(Method::Recursion, params, sets, value)
        .with_diagnostic("hh_constancy_drift", hh_drift))
}

fn recursion_value(x: &[Cpx], y: &[Cpx], params: &ModelParams, hh_drift: &mut f64) -> Result<Cpx> {
    let n = x.len();
    if n == 1 {
        return scalar_product_n1_value(x[0], y[0], params);
    }
    if n > params.l() {
        return Err(Error::Invalid(format!("n = {n} exceeds L = {}", params.l())));
    }
    let sets = SpectralSets::new(x.to_vec(), y.to_vec())?;
    // level constant from the HH ratio at the identity assignment, with a
    // constancy probe at a swapped assignment
    let cv = hh_level_constant(x, y, params)?;
    {
        let mut xs = x.to_vec();
        xs.swap(0, 1);
        let mut ys = y.to_vec();
        ys.swap(0, 1);
        let cv2 = hh_level_constant(&xs, &ys, params)?;
        let drift = (cv - cv2).norm() / cv.norm().max(f64::MIN_POSITIVE);
        *hh_drift = hh_drift.max(drift);
    }
    let reduced = params.dropped_first_site()?;
    let mut total = Cpx::new(0.0, 0.0);
    for (i, &lx) in x.iter().enumerate() {
        let xr: Vec<Cpx> = x
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &z)| z)
            .collect();
        for (j, &ly) in y.iter().enumerate() {
            let yr: Vec<Cpx> = y
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &z)| z)
                .collect();
            let k = kernel_k(lx, ly, &sets, params)?;
            let v = cv * recursion_value(&xr, &yr, &reduced, hh_drift)?;
            total += k * v;
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Homogeneous limit
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomogeneousMethod {
    Direct,
    ContourResidue,
}

const HOMOGENEOUS_EPS: f64 = 1e-2;
const HOMOGENEOUS_STABILITY: f64 = 1e-6;

/// S_n at μ_j = 0. The direct route evaluates there exactly; the contour
/// route evaluates at μ_j = ε·j and Richardson-extrapolates (the scalar
/// product is even in ε, so one step removes the ε² term; two extrapolants
/// from (ε, ε/2) and (ε/2, ε/4) must agree).
pub fn homogeneous_scalar_product(
    sets: &SpectralSets,
    params: &ModelParams,
    method: HomogeneousMethod,
) -> Result<EvalRecord> {
    if params.mu.iter().any(|m| m.norm() != 0.0) {
        return Err(Error::Invalid("homogeneous evaluation expects mu = 0".into()));
    }
    match method {
        HomogeneousMethod::Direct => {
            let value = scalar_product_direct_value(&sets.x, &sets.y, params)?;
            Ok(EvalRecord::new(Method::Direct, params, sets, value))
        }
        HomogeneousMethod::ContourResidue => {
            let at_eps = |eps: f64| -> Result<(Cpx, Cpx)> {
                let mut p = params.clone();
                for (j, m) in p.mu.iter_mut().enumerate() {
                    *m = Cpx::new(eps * (j + 1) as f64, 0.0);
                }
                let rec = contour_residue(sets, &p)?;
                // b(2μ_1)/R_1 at the identity assignment: both factors vanish
                // as ε → 0 and the ratio must converge
                let w: Vec<Cpx> = sets.x.clone();
                let wb: Vec<Cpx> = sets.y.clone();
                let ratio = fn_b(2.0 * p.mu[0]) / r_level(1, &w, &wb, &p);
                Ok((rec.value_cpx(), ratio))
            };
            let (s1, q1) = at_eps(HOMOGENEOUS_EPS)?;
            let (s2, q2) = at_eps(HOMOGENEOUS_EPS / 2.0)?;
            let (s3, q3) = at_eps(HOMOGENEOUS_EPS / 4.0)?;
            let third = Cpx::new(3.0, 0.0);
            let r1 = (4.0 * s2 - s1) / third;
            let r2 = (4.0 * s3 - s2) / third;
            let rel = (r1 - r2).norm() / r2.norm().max(f64::MIN_POSITIVE);
            if rel > HOMOGENEOUS_STABILITY {
                return Err(Error::ExtrapolationUnstable {
                    rel,
                    limit: HOMOGENEOUS_STABILITY,
                });
            }
            let ratio_drift2 = (q2 - q1).norm() / q2.norm().max(f64::MIN_POSITIVE);
            let ratio_drift3 = (q3 - q2).norm() / q3.norm().max(f64::MIN_POSITIVE);
            Ok(EvalRecord::new(Method::ContourResidue, params, sets, r2)
                .with_diagnostic("richardson_agreement", rel)
                .with_diagnostic("b2mu_over_r1_drift_coarse", ratio_drift2)
                .with_diagnostic("b2mu_over_r1_drift_fine", ratio_drift3))
        }
    }
}
