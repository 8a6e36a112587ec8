//! Drives the cross-check, sweep-table and verify runs on top of the
//! library, producing reports and process exit outcomes.

use anyhow::{anyhow, Result};

use openxxz::algebra::{
    double_row_monodromy, k_dual, k_matrix, r_matrix, transfer_from_blocks, transfer_matrix,
};
use openxxz::bethe::{
    bethe_residual, eigencheck, generic_magnitude, scalar_product_direct, scalar_product_direct_value,
    solve_bethe_newton,
};
use openxxz::funceq::{
    asymptotic_coefficient, asymptotic_operators, equation_residual, EquationKind,
};
use openxxz::linalg::{two_site_embed, DenseOperator};
use openxxz::numkernel::{fn_a, Cpx, ModelParams, SpectralSets};
use openxxz::record::EvalRecord;
use openxxz::solver::{
    contour_scalar_product, scalar_product_n1, scalar_product_recursion, ContourMode,
};

use crate::config::{MethodChoice, RunConfig, SuiteChoice};
use crate::report::{
    CrosscheckReport, DrawReport, MethodValue, PairwiseDiff, SuiteCheck, SweepRow, TableReport,
    VerifyReport,
};

/// Overall run outcome, mapped to the process exit code by main.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ToleranceFailure,
    ResonanceFlag,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::ToleranceFailure => 1,
            Outcome::ResonanceFlag => 2,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::ToleranceFailure => "tolerance_failure",
            Outcome::ResonanceFlag => "resonance_flag",
        }
    }
}

fn draw_inputs(cfg: &RunConfig, draw: usize) -> (u64, ModelParams, SpectralSets) {
    let seed = cfg.seed.wrapping_add(draw as u64);
    let params = match cfg.explicit_params() {
        Some(p) => p,
        None => ModelParams::random_generic(seed, cfg.l, cfg.range, cfg.set_margin.max(cfg.delta_gen)),
    };
    let sets = match cfg.explicit_spectral_sets() {
        Some(s) => s,
        None => SpectralSets::random_generic(seed ^ 0xABCD_1234, cfg.n, cfg.range, &params, cfg.set_margin),
    };
    (seed, params, sets)
}

pub fn eval_method(
    method: MethodChoice,
    sets: &SpectralSets,
    params: &ModelParams,
    cfg: &RunConfig,
) -> Result<EvalRecord> {
    let rec = match method {
        MethodChoice::Direct => scalar_product_direct(sets, params)?,
        MethodChoice::ContourResidue => contour_scalar_product(sets, params, ContourMode::Residue)?,
        MethodChoice::ContourQuadrature => contour_scalar_product(
            sets,
            params,
            ContourMode::Quadrature {
                nodes: cfg.quad_nodes,
                radius: cfg.quad_radius,
                validate: sets.n() == 1,
            },
        )?,
        MethodChoice::Recursion => scalar_product_recursion(sets, params)?,
        MethodChoice::ClosedN1 => scalar_product_n1(sets.x[0], sets.y[0], params)?,
    };
    Ok(rec)
}

pub fn run_crosscheck(cfg: &RunConfig) -> Result<(CrosscheckReport, Outcome)> {
    let mut draws = Vec::with_capacity(cfg.draws);
    let mut any_tol = false;
    let mut any_flag = false;
    for d in 0..cfg.draws {
        let (seed, params, sets) = draw_inputs(cfg, d);
        let mut records = Vec::new();
        for &m in &cfg.methods {
            let rec = eval_method(m, &sets, &params, cfg)
                .map_err(|e| anyhow!("draw {d}, method {}: {e}", m.tag()))?
                .with_seed(Some(seed));
            records.push(rec);
        }
        let mut pairwise = Vec::new();
        let mut max_rel = 0.0f64;
        for i in 0..records.len() {
            for j in (i + 1)..records.len() {
                let vi = records[i].value_cpx();
                let vj = records[j].value_cpx();
                let rel = (vi - vj).norm() / vi.norm().max(vj.norm()).max(f64::MIN_POSITIVE);
                max_rel = max_rel.max(rel);
                pairwise.push(PairwiseDiff {
                    a: records[i].method.tag().to_string(),
                    b: records[j].method.tag().to_string(),
                    rel,
                });
            }
        }
        let all_trusted = records.iter().all(|r| r.trusted && r.is_finite());
        any_tol |= max_rel > cfg.tol("fourway");
        any_flag |= !all_trusted;
        draws.push(DrawReport {
            draw: d,
            seed,
            records,
            pairwise,
            max_rel,
            all_trusted,
        });
    }
    let outcome = if any_tol {
        Outcome::ToleranceFailure
    } else if any_flag {
        Outcome::ResonanceFlag
    } else {
        Outcome::Pass
    };
    let report = CrosscheckReport {
        version: openxxz::VERSION.to_string(),
        kind: "crosscheck".to_string(),
        config: cfg.clone(),
        draws,
        status: outcome.status().to_string(),
    };
    Ok((report, outcome))
}

pub fn run_table(cfg: &RunConfig) -> Result<(TableReport, Outcome)> {
    let (_, params, base_sets) = draw_inputs(cfg, 0);
    let from = cfg
        .sweep_from
        .as_deref()
        .map(crate::config::parse_complex)
        .transpose()
        .map_err(|e| anyhow!("sweep_from: {e}"))?
        .unwrap_or(Cpx::new(-0.5, -0.2));
    let to = cfg
        .sweep_to
        .as_deref()
        .map(crate::config::parse_complex)
        .transpose()
        .map_err(|e| anyhow!("sweep_to: {e}"))?
        .unwrap_or(Cpx::new(0.5, 0.3));
    let mut rows = Vec::new();
    let mut any_tol = false;
    let mut any_flag = false;
    for idx in 0..cfg.sweep_points {
        let t = if cfg.sweep_points == 1 {
            0.0
        } else {
            idx as f64 / (cfg.sweep_points - 1) as f64
        };
        let lam = from + (to - from) * Cpx::new(t, 0.0);
        let mut sets = base_sets.clone();
        sets.y[0] = lam;
        let mut values = Vec::new();
        let mut vals_c: Vec<Cpx> = Vec::new();
        for &m in &cfg.methods {
            let rec = eval_method(m, &sets, &params, cfg)
                .map_err(|e| anyhow!("sweep point {idx}, method {}: {e}", m.tag()))?;
            any_flag |= !rec.trusted;
            vals_c.push(rec.value_cpx());
            values.push(MethodValue {
                method: m.tag().to_string(),
                re: rec.value.re,
                im: rec.value.im,
                trusted: rec.trusted,
            });
        }
        let mut max_rel = 0.0f64;
        for i in 0..vals_c.len() {
            for j in (i + 1)..vals_c.len() {
                let rel = (vals_c[i] - vals_c[j]).norm()
                    / vals_c[i].norm().max(vals_c[j].norm()).max(f64::MIN_POSITIVE);
                max_rel = max_rel.max(rel);
            }
        }
        any_tol |= max_rel > cfg.tol("fourway");
        rows.push(SweepRow {
            idx,
            lambda: lam.into(),
            values,
            max_rel,
        });
    }
    let outcome = if any_tol {
        Outcome::ToleranceFailure
    } else if any_flag {
        Outcome::ResonanceFlag
    } else {
        Outcome::Pass
    };
    let report = TableReport {
        version: openxxz::VERSION.to_string(),
        kind: "table".to_string(),
        config: cfg.clone(),
        rows,
        status: outcome.status().to_string(),
    };
    Ok((report, outcome))
}

// ---------------------------------------------------------------------------
// verify suites
// ---------------------------------------------------------------------------

struct Checker {
    checks: Vec<SuiteCheck>,
}

impl Checker {
    fn push(&mut self, suite: &str, check: &str, residual: f64, tolerance: f64) {
        self.checks.push(SuiteCheck {
            suite: suite.to_string(),
            check: check.to_string(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        });
    }
}

fn suite_identities(cfg: &RunConfig, ck: &mut Checker) -> Result<()> {
    let tol = cfg.tol("identities");
    let mut worst_ybe = 0.0f64;
    let mut worst_req = 0.0f64;
    let mut worst_breq = 0.0f64;
    let mut worst_uni = 0.0f64;
    let mut worst_cross = 0.0f64;
    for d in 0..cfg.draws.max(10) {
        let seed = cfg.seed.wrapping_add(d as u64);
        let p = ModelParams::random_generic(seed, 2, cfg.range, cfg.delta_gen);
        let s = SpectralSets::random(seed ^ 0x77, 2, cfg.range);
        let (l1, l2) = (s.x[0], s.x[1]);
        let r12 = |u: Cpx| two_site_embed(&r_matrix(u, &p), 0, 1, 3);
        let r13 = |u: Cpx| two_site_embed(&r_matrix(u, &p), 0, 2, 3);
        let r23 = |u: Cpx| two_site_embed(&r_matrix(u, &p), 1, 2, 3);
        let lhs = r12(l1 - l2).mul(&r13(l1)).mul(&r23(l2));
        let rhs = r23(l2).mul(&r13(l1)).mul(&r12(l1 - l2));
        worst_ybe = worst_ybe.max(lhs.rel_diff(&rhs));

        let r = |u: Cpx| r_matrix(u, &p);
        let k1 = |u: Cpx| k_matrix(u, &p).kron(&DenseOperator::identity(2));
        let k2 = |u: Cpx| DenseOperator::identity(2).kron(&k_matrix(u, &p));
        let lhs = r(l1 - l2).mul(&k1(l1)).mul(&r(l1 + l2)).mul(&k2(l2));
        let rhs = k2(l2).mul(&r(l1 + l2)).mul(&k1(l1)).mul(&r(l1 - l2));
        worst_req = worst_req.max(lhs.rel_diff(&rhs));

        let g2 = 2.0 * p.gamma;
        let kb1 = |u: Cpx| k_dual(u, &p).kron(&DenseOperator::identity(2));
        let kb2 = |u: Cpx| DenseOperator::identity(2).kron(&k_dual(u, &p));
        let lhs = r(-l1 + l2).mul(&kb1(l1)).mul(&r(-l1 - l2 - g2)).mul(&kb2(l2));
        let rhs = kb2(l2).mul(&r(-l1 - l2 - g2)).mul(&kb1(l1)).mul(&r(-l1 + l2));
        worst_breq = worst_breq.max(lhs.rel_diff(&rhs));

        let prod = r_matrix(l1, &p).mul(&r_matrix(-l1, &p));
        let scalar = fn_a(l1, &p) * fn_a(-l1, &p);
        worst_uni = worst_uni.max(prod.rel_diff(&DenseOperator::identity(4).scale(scalar)));

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
        let prod = t1(&r_matrix(l1, &p)).mul(&t1(&r_matrix(-l1 - g2, &p)));
        worst_cross = worst_cross.max(prod.rel_diff(&DenseOperator::identity(4).scale(prod.get(0, 0))));
    }
    ck.push("identities", "yang_baxter", worst_ybe, tol);
    ck.push("identities", "reflection", worst_req, tol);
    ck.push("identities", "dual_reflection", worst_breq, tol);
    ck.push("identities", "unitarity", worst_uni, tol);
    ck.push("identities", "crossing_unitarity", worst_cross, tol);

    // action equations and commuting families at the configured size
    let p = ModelParams::random_generic(cfg.seed, cfg.l, cfg.range, cfg.delta_gen);
    let lam = Cpx::new(0.31, 0.27);
    let blocks = double_row_monodromy(lam, &p)?;
    let vac = openxxz::algebra::highest_weight(p.l());
    let la = openxxz::algebra::lambda_a(lam, &p);
    let act_a = blocks.a.apply(&vac).sub(&vac.scale(la)).norm() / la.norm();
    let dt = openxxz::algebra::d_tilde(&blocks, &p)?;
    let ld = openxxz::algebra::lambda_d_tilde(lam, &p)?;
    let act_d = dt.apply(&vac).sub(&vac.scale(ld)).norm() / ld.norm();
    let act_c = blocks.c.apply(&vac).norm();
    let act_b = blocks.b.apply_left(&vac).norm();
    ck.push("identities", "action_equations", act_a.max(act_d).max(act_c).max(act_b), tol);

    let l2 = Cpx::new(-0.2, 0.37);
    let blocks2 = double_row_monodromy(l2, &p)?;
    let t1m = transfer_from_blocks(&blocks, &p);
    let t2m = transfer_from_blocks(&blocks2, &p);
    let comm = blocks
        .b
        .commutator_rel(&blocks2.b)
        .max(blocks.c.commutator_rel(&blocks2.c))
        .max(t1m.commutator_rel(&t2m));
    ck.push("identities", "commuting_families", comm, tol);
    Ok(())
}

fn suite_lemmas(cfg: &RunConfig, ck: &mut Checker) -> Result<()> {
    let tol = cfg.tol("lemmas");
    let n = cfg.n.clamp(2, 3);
    let l = cfg.l.max(n);
    let p = ModelParams::random_generic(cfg.seed, l, cfg.range, cfg.delta_gen);
    let s = SpectralSets::random_generic(cfg.seed ^ 0x51, n, cfg.range, &p, cfg.set_margin);

    // Lemma 2: all permutations
    let base = scalar_product_direct_value(&s.x, &s.y, &p)?;
    let mut worst = 0.0f64;
    let perms = permutations(n);
    for px in &perms {
        for py in &perms {
            let xs: Vec<Cpx> = px.iter().map(|&i| s.x[i]).collect();
            let ys: Vec<Cpx> = py.iter().map(|&i| s.y[i]).collect();
            let v = scalar_product_direct_value(&xs, &ys, &p)?;
            worst = worst.max((v - base).norm() / base.norm());
        }
    }
    ck.push("lemmas", "lemma2_double_symmetry", worst, 1e-12);

    // Lemma 3: held-out interpolation in x = e^{2λ}
    let deg = 2 * l;
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for k in 0..=deg {
        let lam = Cpx::new(0.1 * k as f64 - 0.4, 0.15 * k as f64 - 0.3);
        let x = (2.0 * lam).exp();
        let mut xv = s.x.clone();
        xv[0] = lam;
        let v = scalar_product_direct_value(&xv, &s.y, &p)?;
        xs.push(x);
        vals.push(x.powi(l as i32) * v);
    }
    let lam_h = Cpx::new(0.22, -0.13);
    let xh = (2.0 * lam_h).exp();
    let mut pred = Cpx::new(0.0, 0.0);
    for i in 0..=deg {
        let mut li = Cpx::new(1.0, 0.0);
        for j in 0..=deg {
            if j != i {
                li *= (xh - xs[j]) / (xs[i] - xs[j]);
            }
        }
        pred += vals[i] * li;
    }
    let mut xv = s.x.clone();
    xv[0] = lam_h;
    let actual = xh.powi(l as i32) * scalar_product_direct_value(&xv, &s.y, &p)?;
    ck.push("lemmas", "lemma3_polynomial_degree", (pred - actual).norm() / actual.norm(), tol);

    // Lemma 4: all six specializations
    let g = p.gamma;
    let m1 = p.mu[0];
    let pairs = [(m1 - g, m1), (m1 - g, -m1 - g), (-m1, m1)];
    let mut worst = 0.0f64;
    for &(z1, z2) in &pairs {
        let mut y = s.y.clone();
        y[0] = z1;
        y[1] = z2;
        let v = scalar_product_direct_value(&s.x, &y, &p)?;
        let sets = SpectralSets::new(s.x.clone(), y)?;
        let scale = generic_magnitude(&sets, &p, 10, cfg.seed ^ 0x99)?;
        worst = worst.max(v.norm() / scale);
        let mut x = s.x.clone();
        x[0] = z1;
        x[1] = z2;
        let v = scalar_product_direct_value(&x, &s.y, &p)?;
        let sets = SpectralSets::new(x, s.y.clone())?;
        let scale = generic_magnitude(&sets, &p, 10, cfg.seed ^ 0x9a)?;
        worst = worst.max(v.norm() / scale);
    }
    ck.push("lemmas", "lemma4_special_zeroes", worst, 1e-9);
    Ok(())
}

fn suite_equations(cfg: &RunConfig, ck: &mut Checker) -> Result<()> {
    let tol = cfg.tol("equations");
    let mut worst = 0.0f64;
    for d in 0..cfg.draws.max(5) {
        let seed = cfg.seed.wrapping_add(d as u64);
        let n = 1 + (d % 3).min(cfg.l - 1);
        let l = cfg.l.max(n);
        let p = ModelParams::random_generic(seed, l, cfg.range, cfg.delta_gen);
        let s = SpectralSets::random_generic(seed ^ 0x31, n, cfg.range, &p, cfg.set_margin);
        let l0 = Cpx::new(0.18, -0.42);
        for kind in [EquationKind::TypeA, EquationKind::TypeD] {
            let r = equation_residual(kind, l0, &s, |x, y| scalar_product_direct_value(x, y, &p), &p)?;
            worst = worst.max(r);
        }
    }
    ck.push("equations", "type_a_and_d_residuals", worst, tol);
    Ok(())
}

fn suite_asymptotics(cfg: &RunConfig, ck: &mut Checker) -> Result<()> {
    let p = ModelParams::random_generic(cfg.seed, cfg.l.min(3), cfg.range, cfg.delta_gen);
    let mut worst_closed = 0.0f64;
    let mut worst_limit = 0.0f64;
    for n in 1..=cfg.n.min(2).min(p.l()) {
        let ops = asymptotic_operators(&p);
        let assembled = ops.jbar_j_vacuum(n);
        let closed = openxxz::funceq::jbar_j_closed_sum(n, &p);
        worst_closed = worst_closed.max((assembled - closed).norm() / assembled.norm());

        let coeff = asymptotic_coefficient(n, &p);
        for re in [8.0, 10.0] {
            let x: Vec<Cpx> = (0..n).map(|k| Cpx::new(re + 0.03 * k as f64, 0.17 * (k + 1) as f64)).collect();
            let y: Vec<Cpx> = (0..n)
                .map(|k| Cpx::new(re + 0.05 - 0.02 * k as f64, 0.11 * (k + 1) as f64))
                .collect();
            let s = scalar_product_direct_value(&x, &y, &p)?;
            let mut fac = Cpx::new(1.0, 0.0);
            for k in 0..n {
                fac *= ((2.0 * x[k]).exp() * (2.0 * y[k]).exp()).powi(-(p.l() as i32));
            }
            worst_limit = worst_limit.max((s * fac - coeff).norm() / coeff.norm());
        }
    }
    ck.push("asymptotics", "closed_sum_vs_assembled", worst_closed, 1e-10);
    ck.push("asymptotics", "large_lambda_limit", worst_limit, cfg.tol("asymptotics"));
    Ok(())
}

fn suite_onshell(cfg: &RunConfig, ck: &mut Checker) -> Result<()> {
    let p = ModelParams::random_generic(cfg.seed, cfg.l.max(2), cfg.range, cfg.delta_gen);
    let root = solve_bethe_newton(1, None, &p).map_err(|e| anyhow!("newton: {e}"))?;
    let res = bethe_residual(&root, &p)?[0].norm();
    ck.push("onshell", "newton_bethe_residual", res, 1e-10);
    let r = eigencheck(&root, Cpx::new(0.37, 0.15), &p)?;
    ck.push("onshell", "eigencheck", r, cfg.tol("onshell"));
    let _ = transfer_matrix(Cpx::new(0.1, 0.2), &p)?;
    Ok(())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    heap_permute(&mut idx, n, &mut out);
    out.sort();
    out
}

fn heap_permute(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(arr.clone());
        return;
    }
    for i in 0..k {
        heap_permute(arr, k - 1, out);
        if k.is_multiple_of(2) {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}

pub fn run_verify(cfg: &RunConfig) -> Result<(VerifyReport, Outcome)> {
    let mut ck = Checker { checks: Vec::new() };
    for suite in &cfg.suites {
        match suite {
            SuiteChoice::Identities => suite_identities(cfg, &mut ck)?,
            SuiteChoice::Lemmas => suite_lemmas(cfg, &mut ck)?,
            SuiteChoice::Equations => suite_equations(cfg, &mut ck)?,
            SuiteChoice::Asymptotics => suite_asymptotics(cfg, &mut ck)?,
            SuiteChoice::Onshell => suite_onshell(cfg, &mut ck)?,
        }
    }
    let pass = ck.checks.iter().all(|c| c.pass);
    let outcome = if pass { Outcome::Pass } else { Outcome::ToleranceFailure };
    let report = VerifyReport {
        version: openxxz::VERSION.to_string(),
        kind: "verify".to_string(),
        config: cfg.clone(),
        checks: ck.checks,
        status: outcome.status().to_string(),
    };
    Ok((report, outcome))
}
