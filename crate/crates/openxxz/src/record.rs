//! Evaluation records: one scalar-product evaluation with its method tag,
//! parameters, value and residual diagnostics, serialized with complex
//! numbers as {re, im} pairs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::numkernel::{Cpx, ModelParams, SpectralSets};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    ContourResidue,
    ContourQuadrature,
    Recursion,
    ClosedN1,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::ContourResidue => "contour_residue",
            Method::ContourQuadrature => "contour_quadrature",
            Method::Recursion => "recursion",
            Method::ClosedN1 => "closed_n1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CpxPair {
    pub re: f64,
    pub im: f64,
}

impl From<Cpx> for CpxPair {
    fn from(z: Cpx) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamsDump {
    pub gamma: CpxPair,
    pub h: CpxPair,
    pub hbar: CpxPair,
    pub l: usize,
    pub mu: Vec<CpxPair>,
}

impl From<&ModelParams> for ParamsDump {
    fn from(p: &ModelParams) -> Self {
        Self {
            gamma: p.gamma.into(),
            h: p.h.into(),
            hbar: p.hbar.into(),
            l: p.l(),
            mu: p.mu.iter().map(|&m| m.into()).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SetsDump {
    pub x: Vec<CpxPair>,
    pub y: Vec<CpxPair>,
}

impl From<&SpectralSets> for SetsDump {
    fn from(s: &SpectralSets) -> Self {
        Self {
            x: s.x.iter().map(|&z| z.into()).collect(),
            y: s.y.iter().map(|&z| z.into()).collect(),
        }
    }
}

/// One scalar-product evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRecord {
    pub method: Method,
    pub params: ParamsDump,
    pub sets: SetsDump,
    pub value: CpxPair,
    /// Named non-negative residual diagnostics (deterministically ordered).
    pub diagnostics: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    /// False when resonance detection flagged the evaluation.
    pub trusted: bool,
}

impl EvalRecord {
    pub fn new(method: Method, params: &ModelParams, sets: &SpectralSets, value: Cpx) -> Self {
        Self {
            method,
            params: params.into(),
            sets: sets.into(),
            value: value.into(),
            diagnostics: BTreeMap::new(),
            seed: None,
            trusted: true,
        }
    }

    pub fn value_cpx(&self) -> Cpx {
        Cpx::new(self.value.re, self.value.im)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_diagnostic(mut self, name: &str, v: f64) -> Self {
        self.diagnostics.insert(name.to_string(), v);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.value.re.is_finite()
            && self.value.im.is_finite()
            && self.diagnostics.values().all(|v| v.is_finite() && *v >= 0.0)
    }
}
