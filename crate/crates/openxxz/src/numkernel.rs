//! Model parameters, spectral sets, and the scalar building blocks
//! a(λ) = sinh(λ+γ), b(λ) = sinh(λ), c = sinh(γ) that every formula uses.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Cpx = Complex64;

/// Default genericity margin for singular-proximity checks.
pub const DELTA_GEN: f64 = 1e-3;

/// Hard cap on the chain length for dense 2^L operators (one matrix at L = 12
/// is already 256 MiB).
pub const MAX_DENSE_L: usize = 12;

/// Scale-free distance of `z` from the zero set of sinh (i.e. from iπZ).
/// |sinh z| / max(1, |cosh z|) behaves like the distance to the nearest zero
/// when close, and stays O(1) away from it regardless of Re z.
pub fn sinh_proximity(z: Cpx) -> f64 {
    z.sinh().norm() / z.cosh().norm().max(1.0)
}

/// Anisotropy, boundary fields and inhomogeneities of the open XXZ chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub gamma: Cpx,
    pub h: Cpx,
    pub hbar: Cpx,
    pub mu: Vec<Cpx>,
}

impl ModelParams {
    pub fn new(gamma: Cpx, h: Cpx, hbar: Cpx, mu: Vec<Cpx>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Invalid("chain length L must be >= 1".into()));
        }
        Ok(Self { gamma, h, hbar, mu })
    }

    /// Chain length L.
    pub fn l(&self) -> usize {
        self.mu.len()
    }

    /// Hilbert-space dimension 2^L.
    pub fn dim(&self) -> usize {
        1 << self.l()
    }

    /// q = e^γ.
    pub fn q(&self) -> Cpx {
        self.gamma.exp()
    }

    /// t = e^h.
    pub fn t(&self) -> Cpx {
        self.h.exp()
    }

    /// y_i = e^{2 μ_i} (1-based site index).
    pub fn y(&self, i: usize) -> Cpx {
        (2.0 * self.mu[i - 1]).exp()
    }

    /// Same chain with every inhomogeneity negated.
    pub fn negated_mu(&self) -> Self {
        Self {
            mu: self.mu.iter().map(|m| -m).collect(),
            ..self.clone()
        }
    }

    /// Same boundary data on the shorter chain (μ_2, ..., μ_L); the reduction
    /// used by the separation-of-variables recursion.
    pub fn dropped_first_site(&self) -> Result<Self> {
        if self.l() < 2 {
            return Err(Error::Invalid("cannot drop a site from an L = 1 chain".into()));
        }
        Ok(Self {
            mu: self.mu[1..].to_vec(),
            ..self.clone()
        })
    }

    /// Homogeneous chain μ_j = 0.
    pub fn homogeneous(gamma: Cpx, h: Cpx, hbar: Cpx, l: usize) -> Result<Self> {
        Self::new(gamma, h, hbar, vec![Cpx::new(0.0, 0.0); l])
    }

    /// Seeded random draw with |Re|, |Im| <= `range` for every parameter.
    pub fn random(seed: u64, l: usize, range: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |r: &mut ChaCha8Rng| Cpx::new(r.gen_range(-range..range), r.gen_range(-range..range));
        let gamma = draw(&mut rng);
        let h = draw(&mut rng);
        let hbar = draw(&mut rng);
        let mu = (0..l).map(|_| draw(&mut rng)).collect();
        Self { gamma, h, hbar, mu }
    }

    /// Seeded draw, re-drawn (with consecutive sub-seeds) until generic at
    /// margin `delta`. Deterministic for a given seed.
    pub fn random_generic(seed: u64, l: usize, range: f64, delta: f64) -> Self {
        for k in 0.. {
            let p = Self::random(seed.wrapping_add(k * 0x9e37_79b9), l, range);
            if p.check_generic(delta).is_ok() {
                return p;
            }
        }
        unreachable!()
    }

    /// Genericity: all pairwise μ_i ± μ_j, 2μ_i and 2μ_i ± γ bounded away
    /// from 0 mod iπ by `delta`, so every formula denominator is nonsingular.
    pub fn check_generic(&self, delta: f64) -> Result<()> {
        let l = self.l();
        let check = |z: Cpx, what: String| -> Result<()> {
            if sinh_proximity(z) < delta {
                Err(Error::NotGeneric(what))
            } else {
                Ok(())
            }
        };
        for i in 0..l {
            check(2.0 * self.mu[i], format!("2*mu_{}", i + 1))?;
            check(2.0 * self.mu[i] + self.gamma, format!("2*mu_{} + gamma", i + 1))?;
            check(2.0 * self.mu[i] - self.gamma, format!("2*mu_{} - gamma", i + 1))?;
            for j in 0..l {
                if i != j {
                    check(self.mu[i] - self.mu[j], format!("mu_{} - mu_{}", i + 1, j + 1))?;
                }
                if i < j {
                    check(self.mu[i] + self.mu[j], format!("mu_{} + mu_{}", i + 1, j + 1))?;
                }
            }
        }
        Ok(())
    }

    pub fn is_generic(&self, delta: f64) -> bool {
        self.check_generic(delta).is_ok()
    }
}

/// The two tuples of spectral points X = (λ_1^C .. λ_n^C), Y = (λ_1^B .. λ_n^B).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSets {
    pub x: Vec<Cpx>,
    pub y: Vec<Cpx>,
}

impl SpectralSets {
    pub fn new(x: Vec<Cpx>, y: Vec<Cpx>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Invalid(format!(
                "|X| = {} and |Y| = {} must agree",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::Invalid("spectral sets must be non-empty".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Seeded random draw with |Re|, |Im| <= `range`.
    pub fn random(seed: u64, n: usize, range: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5357_4150);
        let draw = |r: &mut ChaCha8Rng| Cpx::new(r.gen_range(-range..range), r.gen_range(-range..range));
        let x = (0..n).map(|_| draw(&mut rng)).collect();
        let y = (0..n).map(|_| draw(&mut rng)).collect();
        Self { x, y }
    }

    /// Seeded draw re-drawn until generic relative to `params` at margin `delta`.
    pub fn random_generic(seed: u64, n: usize, range: f64, params: &ModelParams, delta: f64) -> Self {
        for k in 0.. {
            let s = Self::random(seed.wrapping_add(k * 0x517c_c1b7), n, range);
            if s.check_generic(params, delta).is_ok() {
                return s;
            }
        }
        unreachable!()
    }

    /// Genericity: entries pairwise distinct within each set (also mod the
    /// λ → -λ reflection that pairs points in every formula), no entry near
    /// -γ/2 mod iπ (a(2w) denominators), and no entry near ±μ_j mod iπ
    /// (contour poles and kernel prefactors).
    pub fn check_generic(&self, params: &ModelParams, delta: f64) -> Result<()> {
        let near = |z: Cpx| sinh_proximity(z) < delta;
        for (tag, set) in [("X", &self.x), ("Y", &self.y)] {
            for i in 0..set.len() {
                if near(2.0 * set[i] + params.gamma) {
                    return Err(Error::NotGeneric(format!("{tag}[{}] is near -gamma/2 mod i*pi", i + 1)));
                }
                for m in 0..params.l() {
                    if near(set[i] - params.mu[m]) || near(set[i] + params.mu[m]) {
                        return Err(Error::NotGeneric(format!(
                            "{tag}[{}] is near ±mu_{} mod i*pi",
                            i + 1,
                            m + 1
                        )));
                    }
                }
                for j in (i + 1)..set.len() {
                    if near(set[i] - set[j]) || near(set[i] + set[j]) {
                        return Err(Error::NotGeneric(format!(
                            "{tag}[{}] and {tag}[{}] collide (possibly after reflection)",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Additional margin checks for a functional-equation evaluation at λ_0:
    /// λ_0 must stay away from every entry (and its reflection) so the
    /// equation coefficients stay finite.
    pub fn check_generic_with_lambda0(&self, params: &ModelParams, lambda0: Cpx, delta: f64) -> Result<()> {
        self.check_generic(params, delta)?;
        for (tag, set) in [("X", &self.x), ("Y", &self.y)] {
            for (i, &z) in set.iter().enumerate() {
                if sinh_proximity(z - lambda0) < delta || sinh_proximity(z + lambda0 + params.gamma) < delta {
                    return Err(Error::NotGeneric(format!(
                        "lambda_0 too close to {tag}[{}] (or its reflection)",
                        i + 1
                    )));
                }
            }
        }
        if sinh_proximity(2.0 * lambda0 + params.gamma) < delta {
            return Err(Error::NotGeneric("lambda_0 near -gamma/2 mod i*pi".into()));
        }
        Ok(())
    }
}

/// a(λ) = sinh(λ + γ).
pub fn fn_a(lambda: Cpx, params: &ModelParams) -> Cpx {
    (lambda + params.gamma).sinh()
}

/// b(λ) = sinh(λ).
pub fn fn_b(lambda: Cpx) -> Cpx {
    lambda.sinh()
}

/// c = sinh(γ).
pub fn fn_c(params: &ModelParams) -> Cpx {
    params.gamma.sinh()
}

/// θ(λ, ω) = sinh(λ+ω) / sinh(λ−ω+γ).
pub fn theta(lambda: Cpx, omega: Cpx, params: &ModelParams) -> Result<Cpx> {
    let den = lambda - omega + params.gamma;
    if sinh_proximity(den) < DELTA_GEN {
        return Err(Error::SingularDenominator {
            context: "theta",
            factor: "sinh(lambda - omega + gamma)".into(),
            magnitude: sinh_proximity(den),
            threshold: DELTA_GEN,
        });
    }
    Ok((lambda + omega).sinh() / den.sinh())
}

/// Δ_m^± = Σ_{l=0}^m q^{±2l}.
pub fn delta_sum(m: usize, sign: i32, params: &ModelParams) -> Cpx {
    let q = params.q();
    let step = match sign {
        s if s >= 0 => q * q,
        _ => (q * q).inv(),
    };
    let mut acc = Cpx::new(0.0, 0.0);
    let mut term = Cpx::new(1.0, 0.0);
    for _ in 0..=m {
        acc += term;
        term *= step;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(
            Cpx::new(0.437, 0.21),
            Cpx::new(0.83, -0.34),
            Cpx::new(-0.61, 0.47),
            vec![Cpx::new(0.211, -0.05), Cpx::new(-0.34, 0.12)],
        )
        .unwrap()
    }

    #[test]
    fn scalar_function_special_values() {
        let p = params();
        assert_eq!(fn_b(Cpx::new(0.0, 0.0)), Cpx::new(0.0, 0.0));
        assert!(fn_a(-p.gamma, &p).norm() < 1e-15);
        assert_eq!(fn_a(Cpx::new(0.0, 0.0), &p), fn_c(&p));
    }

    #[test]
    fn theta_special_values() {
        let p = params();
        let zero = Cpx::new(0.0, 0.0);
        let om = Cpx::new(0.3, 0.4);
        let got = theta(zero, om, &p).unwrap();
        let want = om.sinh() / (p.gamma - om).sinh();
        assert!((got - want).norm() < 1e-15);

        let lam = Cpx::new(0.2, -0.7);
        let got = theta(lam, zero, &p).unwrap();
        assert!((got - fn_b(lam) / fn_a(lam, &p)).norm() < 1e-15);

        let half = p.gamma / 2.0;
        let got = theta(half, half, &p).unwrap();
        assert!((got - Cpx::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn theta_singular_denominator() {
        let p = params();
        let om = Cpx::new(0.3, 0.4);
        // lambda - omega + gamma = 0
        let lam = om - p.gamma;
        assert!(matches!(
            theta(lam, om, &p),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn delta_sum_values() {
        let p = params();
        let q2 = p.q() * p.q();
        assert_eq!(delta_sum(0, 1, &p), Cpx::new(1.0, 0.0));
        assert!((delta_sum(1, 1, &p) - (Cpx::new(1.0, 0.0) + q2)).norm() < 1e-15);
        let want = Cpx::new(1.0, 0.0) + q2.inv() + (q2 * q2).inv();
        assert!((delta_sum(2, -1, &p) - want).norm() < 1e-14);
    }

    #[test]
    fn delta_sum_inversion_identity() {
        // Δ_m^- = q^{-2m} Δ_m^+ for m <= 8.
        let p = params();
        let q2 = p.q() * p.q();
        for m in 0..=8usize {
            let lhs = delta_sum(m, -1, &p);
            let rhs = q2.powi(-(m as i32)) * delta_sum(m, 1, &p);
            assert!(
                (lhs - rhs).norm() / rhs.norm() < 1e-13,
                "m = {m}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn genericity_rejects_equal_mu() {
        let m = Cpx::new(0.2, 0.1);
        let p = ModelParams::new(
            Cpx::new(0.4, 0.2),
            Cpx::new(0.8, -0.3),
            Cpx::new(-0.6, 0.5),
            vec![m, m],
        )
        .unwrap();
        assert!(!p.is_generic(DELTA_GEN));
    }

    #[test]
    fn genericity_accept_rate() {
        // Default random draws should be generic with probability >= 0.99.
        let mut accepted = 0;
        for seed in 0..1000u64 {
            if ModelParams::random(seed, 3, 2.0).is_generic(DELTA_GEN) {
                accepted += 1;
            }
        }
        assert!(accepted >= 990, "accepted {accepted}/1000");
    }

    #[test]
    fn spectral_sets_reject_near_collision() {
        let p = params();
        let z = Cpx::new(0.3, -0.2);
        let s = SpectralSets::new(vec![z, z + Cpx::new(1e-6, 0.0)], vec![Cpx::new(0.1, 0.4), Cpx::new(-0.5, 0.2)])
            .unwrap();
        assert!(s.check_generic(&p, DELTA_GEN).is_err());
        // near -gamma/2
        let s = SpectralSets::new(vec![-p.gamma / 2.0 + Cpx::new(1e-5, 0.0)], vec![Cpx::new(0.1, 0.4)]).unwrap();
        assert!(s.check_generic(&p, DELTA_GEN).is_err());
    }
}
