//! Flat-key configuration files: one `key = value` per line, `#` comments.
//! Complex values are written `a+bi` (also plain `a` or `bi`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use openxxz::numkernel::{Cpx, ModelParams};
use serde::Serialize;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(l) = self.line {
            write!(f, " at line {l}")?;
        }
        if let Some(ref fld) = self.field {
            write!(f, " (field `{fld}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, field: Option<&str>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        field: field.map(str::to_string),
        message: message.into(),
    }
}

/// Parse `a`, `a+bi`, `a-bi`, `bi`, `-bi`, `i`.
pub fn parse_complex(s: &str) -> Result<Cpx, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err("empty complex literal".into());
    }
    if !t.ends_with('i') {
        return t.parse::<f64>().map(|re| Cpx::new(re, 0.0)).map_err(|e| e.to_string());
    }
    let body = &t[..t.len() - 1];
    // split at the last +/- that is not an exponent sign and not leading
    let bytes = body.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        let c = bytes[k] as char;
        if (c == '+' || c == '-') && !matches!(bytes[k - 1] as char, 'e' | 'E') {
            split = Some(k);
            break;
        }
    }
    match split {
        Some(k) => {
            let re: f64 = body[..k].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
            let im_str = &body[k..];
            let im: f64 = if im_str == "+" {
                1.0
            } else if im_str == "-" {
                -1.0
            } else {
                im_str.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?
            };
            Ok(Cpx::new(re, im))
        }
        None => {
            let im: f64 = if body.is_empty() {
                1.0
            } else if body == "-" {
                -1.0
            } else {
                body.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?
            };
            Ok(Cpx::new(0.0, im))
        }
    }
}

pub fn format_complex(z: Cpx) -> String {
    if z.im >= 0.0 {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}{}i", z.re, z.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Direct,
    ContourResidue,
    ContourQuadrature,
    Recursion,
    ClosedN1,
}

impl MethodChoice {
    pub const ALL: [MethodChoice; 5] = [
        MethodChoice::Direct,
        MethodChoice::ContourResidue,
        MethodChoice::ContourQuadrature,
        MethodChoice::Recursion,
        MethodChoice::ClosedN1,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            MethodChoice::Direct => "direct",
            MethodChoice::ContourResidue => "contour_residue",
            MethodChoice::ContourQuadrature => "contour_quadrature",
            MethodChoice::Recursion => "recursion",
            MethodChoice::ClosedN1 => "closed_n1",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteChoice {
    Identities,
    Lemmas,
    Equations,
    Asymptotics,
    Onshell,
}

impl SuiteChoice {
    pub const ALL: [SuiteChoice; 5] = [
        SuiteChoice::Identities,
        SuiteChoice::Lemmas,
        SuiteChoice::Equations,
        SuiteChoice::Asymptotics,
        SuiteChoice::Onshell,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            SuiteChoice::Identities => "identities",
            SuiteChoice::Lemmas => "lemmas",
            SuiteChoice::Equations => "equations",
            SuiteChoice::Asymptotics => "asymptotics",
            SuiteChoice::Onshell => "onshell",
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExplicitParams {
    pub gamma: String,
    pub h: String,
    pub hbar: String,
    pub mu: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExplicitSets {
    pub x: Vec<String>,
    pub y: Vec<String>,
}

/// Fully resolved run configuration; serialized verbatim into every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub params_mode: String,
    pub explicit: Option<ExplicitParams>,
    pub explicit_sets: Option<ExplicitSets>,
    pub seed: u64,
    pub n: usize,
    pub l: usize,
    pub draws: usize,
    pub range: f64,
    pub delta_gen: f64,
    pub set_margin: f64,
    pub methods: Vec<MethodChoice>,
    pub suites: Vec<SuiteChoice>,
    pub tolerances: BTreeMap<String, f64>,
    pub quad_nodes: usize,
    pub quad_radius: f64,
    pub sweep_points: usize,
    pub sweep_from: Option<String>,
    pub sweep_to: Option<String>,
    pub out: Option<String>,
    pub format: OutputFormat,
    pub max_qubits: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut tolerances = BTreeMap::new();
        tolerances.insert("fourway".to_string(), 1e-8);
        tolerances.insert("identities".to_string(), 1e-12);
        tolerances.insert("equations".to_string(), 1e-10);
        tolerances.insert("lemmas".to_string(), 1e-8);
        tolerances.insert("asymptotics".to_string(), 1e-4);
        tolerances.insert("onshell".to_string(), 1e-8);
        Self {
            params_mode: "random".to_string(),
            explicit: None,
            explicit_sets: None,
            seed: 0,
            n: 1,
            l: 1,
            draws: 1,
            range: 0.8,
            delta_gen: 1e-3,
            set_margin: 0.05,
            methods: vec![MethodChoice::Direct, MethodChoice::ContourResidue],
            suites: SuiteChoice::ALL.to_vec(),
            tolerances,
            quad_nodes: 96,
            quad_radius: 0.1,
            sweep_points: 0,
            sweep_from: None,
            sweep_to: None,
            out: None,
            format: OutputFormat::Json,
            max_qubits: 8,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(None, None, format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_content(&text)
    }

    pub fn from_str_content(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut explicit_gamma = None;
        let mut explicit_h = None;
        let mut explicit_hbar = None;
        let mut explicit_mu: Option<Vec<Cpx>> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(Some(lineno), None, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let fail = |msg: String| err(Some(lineno), Some(key), msg);
            match key {
                "params" => {
                    if value != "random" && value != "explicit" {
                        return Err(fail(format!("expected `random` or `explicit`, got `{value}`")));
                    }
                    cfg.params_mode = value.to_string();
                }
                "seed" => cfg.seed = value.parse().map_err(|e| fail(format!("{e}")))?,
                "n" => cfg.n = value.parse().map_err(|e| fail(format!("{e}")))?,
                "l" => cfg.l = value.parse().map_err(|e| fail(format!("{e}")))?,
                "draws" => cfg.draws = value.parse().map_err(|e| fail(format!("{e}")))?,
                "range" => cfg.range = value.parse().map_err(|e| fail(format!("{e}")))?,
                "delta_gen" => cfg.delta_gen = value.parse().map_err(|e| fail(format!("{e}")))?,
                "set_margin" => cfg.set_margin = value.parse().map_err(|e| fail(format!("{e}")))?,
                "quad_nodes" => cfg.quad_nodes = value.parse().map_err(|e| fail(format!("{e}")))?,
                "quad_radius" => cfg.quad_radius = value.parse().map_err(|e| fail(format!("{e}")))?,
                "sweep_points" => cfg.sweep_points = value.parse().map_err(|e| fail(format!("{e}")))?,
                "sweep_from" => {
                    parse_complex(value).map_err(&fail)?;
                    cfg.sweep_from = Some(value.to_string());
                }
                "sweep_to" => {
                    parse_complex(value).map_err(&fail)?;
                    cfg.sweep_to = Some(value.to_string());
                }
                "gamma" => explicit_gamma = Some(parse_complex(value).map_err(&fail)?),
                "h" => explicit_h = Some(parse_complex(value).map_err(&fail)?),
                "hbar" => explicit_hbar = Some(parse_complex(value).map_err(&fail)?),
                "mu" => {
                    let mut mu = Vec::new();
                    for part in value.split(',') {
                        mu.push(parse_complex(part).map_err(&fail)?);
                    }
                    explicit_mu = Some(mu);
                }
                "x" | "y" => {
                    let mut pts = Vec::new();
                    for part in value.split(',') {
                        pts.push(format_complex(parse_complex(part).map_err(&fail)?));
                    }
                    let es = cfg.explicit_sets.get_or_insert(ExplicitSets {
                        x: Vec::new(),
                        y: Vec::new(),
                    });
                    if key == "x" {
                        es.x = pts;
                    } else {
                        es.y = pts;
                    }
                }
                "methods" => {
                    let mut ms = Vec::new();
                    for part in value.split(',') {
                        ms.push(MethodChoice::parse(part.trim()).map_err(&fail)?);
                    }
                    cfg.methods = ms;
                }
                "suites" => {
                    let mut ss = Vec::new();
                    for part in value.split(',') {
                        ss.push(SuiteChoice::parse(part.trim()).map_err(&fail)?);
                    }
                    cfg.suites = ss;
                }
                "out" => cfg.out = Some(value.to_string()),
                "format" => {
                    cfg.format = match value {
                        "json" => OutputFormat::Json,
                        "csv" => OutputFormat::Csv,
                        other => return Err(fail(format!("expected `json` or `csv`, got `{other}`"))),
                    }
                }
                k if k.starts_with("tol.") => {
                    let name = &k[4..];
                    let v: f64 = value.parse().map_err(|e| fail(format!("{e}")))?;
                    cfg.tolerances.insert(name.to_string(), v);
                }
                other => return Err(err(Some(lineno), Some(other), "unknown key".to_string())),
            }
        }

        if cfg.params_mode == "explicit" {
            let gamma = explicit_gamma.ok_or_else(|| err(None, Some("gamma"), "missing for explicit params"))?;
            let h = explicit_h.ok_or_else(|| err(None, Some("h"), "missing for explicit params"))?;
            let hbar = explicit_hbar.ok_or_else(|| err(None, Some("hbar"), "missing for explicit params"))?;
            let mu = explicit_mu.ok_or_else(|| err(None, Some("mu"), "missing for explicit params"))?;
            cfg.l = mu.len();
            cfg.explicit = Some(ExplicitParams {
                gamma: format_complex(gamma),
                h: format_complex(h),
                hbar: format_complex(hbar),
                mu: mu.iter().map(|&m| format_complex(m)).collect(),
            });
        }

        if let Ok(v) = std::env::var("OPENXXZ_MAX_QUBITS") {
            let q: usize = v
                .parse()
                .map_err(|e| err(None, Some("OPENXXZ_MAX_QUBITS"), format!("{e}")))?;
            cfg.max_qubits = q.min(openxxz::numkernel::MAX_DENSE_L);
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.l == 0 {
            return Err(err(None, Some("l"), "chain length must be >= 1"));
        }
        if let Some(es) = &self.explicit_sets {
            if es.x.len() != es.y.len() || es.x.is_empty() {
                return Err(err(None, Some("x"), "explicit sets x and y must be non-empty and equal length"));
            }
            if es.x.len() != self.n {
                return Err(err(
                    None,
                    Some("x"),
                    format!("explicit sets have {} entries but n = {}", es.x.len(), self.n),
                ));
            }
        }
        if self.l > self.max_qubits {
            return Err(err(
                None,
                Some("l"),
                format!(
                    "L = {} exceeds the dense cap of {} qubits (raise OPENXXZ_MAX_QUBITS, hard limit {})",
                    self.l,
                    self.max_qubits,
                    openxxz::numkernel::MAX_DENSE_L
                ),
            ));
        }
        if self.n == 0 || self.n > self.l {
            return Err(err(
                None,
                Some("n"),
                format!("need 1 <= n <= L, got n = {}, L = {}", self.n, self.l),
            ));
        }
        if self.methods.is_empty() {
            return Err(err(None, Some("methods"), "at least one method required"));
        }
        if self.methods.contains(&MethodChoice::ClosedN1) && self.n != 1 {
            return Err(err(None, Some("methods"), "closed_n1 requires n = 1"));
        }
        if self.methods.contains(&MethodChoice::ContourQuadrature) && self.n > 2 {
            return Err(err(None, Some("methods"), "contour_quadrature requires n <= 2"));
        }
        Ok(())
    }

    pub fn explicit_spectral_sets(&self) -> Option<openxxz::SpectralSets> {
        let es = self.explicit_sets.as_ref()?;
        let x: Option<Vec<Cpx>> = es.x.iter().map(|s| parse_complex(s).ok()).collect();
        let y: Option<Vec<Cpx>> = es.y.iter().map(|s| parse_complex(s).ok()).collect();
        openxxz::SpectralSets::new(x?, y?).ok()
    }

    pub fn explicit_params(&self) -> Option<ModelParams> {
        let e = self.explicit.as_ref()?;
        let gamma = parse_complex(&e.gamma).ok()?;
        let h = parse_complex(&e.h).ok()?;
        let hbar = parse_complex(&e.hbar).ok()?;
        let mu: Option<Vec<Cpx>> = e.mu.iter().map(|s| parse_complex(s).ok()).collect();
        ModelParams::new(gamma, h, hbar, mu?).ok()
    }

    pub fn tol(&self, name: &str) -> f64 {
        *self.tolerances.get(name).unwrap_or(&1e-8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("1.5").unwrap(), Cpx::new(1.5, 0.0));
        assert_eq!(parse_complex("1.5+0.25i").unwrap(), Cpx::new(1.5, 0.25));
        assert_eq!(parse_complex("-1.5-0.25i").unwrap(), Cpx::new(-1.5, -0.25));
        assert_eq!(parse_complex("0.3i").unwrap(), Cpx::new(0.0, 0.3));
        assert_eq!(parse_complex("-i").unwrap(), Cpx::new(0.0, -1.0));
        assert_eq!(parse_complex("1e-2+2e-3i").unwrap(), Cpx::new(0.01, 0.002));
        assert!(parse_complex("florp").is_err());
    }

    #[test]
    fn config_roundtrip_and_errors() {
        let cfg = RunConfig::from_str_content(
            "seed = 7\nn = 1\nl = 1\nmethods = direct, closed_n1\ntol.fourway = 1e-9\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.tol("fourway"), 1e-9);

        let e = RunConfig::from_str_content("n = 5\nl = 3\n").unwrap_err();
        assert!(e.to_string().contains("n"));

        let e = RunConfig::from_str_content("bogus_key = 3\n").unwrap_err();
        assert_eq!(e.line, Some(1));

        let e = RunConfig::from_str_content("seed == 3\n").unwrap_err();
        assert!(e.to_string().contains("line 1"));

        let e = RunConfig::from_str_content("n = 2\nl = 2\nmethods = closed_n1\n").unwrap_err();
        assert!(e.to_string().contains("closed_n1"));
    }
}
