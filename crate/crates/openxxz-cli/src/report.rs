//! Machine-readable run reports. Complex numbers are {re, im} pairs, maps
//! are ordered, and nothing time- or path-dependent is embedded, so a report
//! is a pure function of the resolved configuration.

use serde::Serialize;

use openxxz::record::EvalRecord;

use crate::config::RunConfig;

#[derive(Clone, Debug, Serialize)]
pub struct PairwiseDiff {
    pub a: String,
    pub b: String,
    pub rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DrawReport {
    pub draw: usize,
    pub seed: u64,
    pub records: Vec<EvalRecord>,
    pub pairwise: Vec<PairwiseDiff>,
    pub max_rel: f64,
    pub all_trusted: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckReport {
    pub version: String,
    pub kind: String,
    pub config: RunConfig,
    pub draws: Vec<DrawReport>,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub idx: usize,
    pub lambda: openxxz::record::CpxPair,
    pub values: Vec<MethodValue>,
    pub max_rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodValue {
    pub method: String,
    pub re: f64,
    pub im: f64,
    pub trusted: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    pub version: String,
    pub kind: String,
    pub config: RunConfig,
    pub rows: Vec<SweepRow>,
    pub status: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteCheck {
    pub suite: String,
    pub check: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub version: String,
    pub kind: String,
    pub config: RunConfig,
    pub checks: Vec<SuiteCheck>,
    pub status: String,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn crosscheck_csv(report: &CrosscheckReport) -> String {
    let mut out = String::from("draw,seed,method,value_re,value_im,trusted,max_rel\n");
    for d in &report.draws {
        for r in &d.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                d.draw,
                d.seed,
                r.method.tag(),
                r.value.re,
                r.value.im,
                r.trusted,
                d.max_rel
            ));
        }
    }
    out
}

pub fn table_csv(report: &TableReport) -> String {
    let mut header = String::from("idx,lambda_re,lambda_im");
    // column order follows the configured method order
    for m in &report.config.methods {
        header.push_str(&format!(",{0}_re,{0}_im", m.tag()));
    }
    header.push_str(",max_rel\n");
    let mut out = header;
    for row in &report.rows {
        out.push_str(&format!("{},{},{}", row.idx, row.lambda.re, row.lambda.im));
        for v in &row.values {
            out.push_str(&format!(",{},{}", v.re, v.im));
        }
        out.push_str(&format!(",{}\n", row.max_rel));
    }
    out
}

pub fn verify_csv(report: &VerifyReport) -> String {
    let mut out = String::from("suite,check,residual,tolerance,pass\n");
    for c in &report.checks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_escape(&c.suite),
            csv_escape(&c.check),
            c.residual,
            c.tolerance,
            c.pass
        ));
    }
    out
}
