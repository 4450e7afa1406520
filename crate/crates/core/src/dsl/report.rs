use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub r: u32,
    pub raw: Vec<String>,
    pub restricted: Vec<String>,
    pub side_conditions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub check: String,
    /// `symbolically-zero`, `numerically-zero`, `nonzero`, `unknown`,
    /// `pass` or `fail`.
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub kind: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    pub chain: Vec<StepReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<VerdictReport>,
    /// Chain-wide side conditions, including the echoed assumptions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub side_conditions: Vec<String>,
    /// Named expressions the task computed, such as commutator components
    /// or the final solved system.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TaskReport {
    pub fn new(task: impl Into<String>, kind: impl Into<String>, status: impl Into<String>) -> Self {
        TaskReport {
            task: task.into(),
            kind: kind.into(),
            status: status.into(),
            order: None,
            chain: Vec::new(),
            verdicts: Vec::new(),
            side_conditions: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub task: String,
    pub expect: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub problem: String,
    pub engine_version: String,
    pub results: Vec<TaskReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<ExpectationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl Report {
    pub fn new(problem: impl Into<String>) -> Self {
        Report {
            problem: problem.into(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            results: Vec::new(),
            expectations: Vec::new(),
            errors: Vec::new(),
        }
    }
}

/// JSON with keys in sorted order, so equal reports are byte-identical.
pub fn emit_report(r: &Report) -> String {
    // going through Value sorts every object's keys
    let v = serde_json::to_value(r).expect("reports serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

/// Human-readable form of a report.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem {} (engine {})", r.problem, r.engine_version);
    for t in &r.results {
        let _ = write!(out, "\ntask {} [{}]: {}", t.task, t.kind, t.status);
        if let Some(o) = t.order {
            let _ = write!(out, ", order {o}");
        }
        out.push('\n');
        for s in &t.chain {
            let _ = writeln!(out, "  step {}", s.r);
            let _ = writeln!(out, "    raw:        {}", s.raw.join(" ; "));
            let _ = writeln!(out, "    restricted: {}", s.restricted.join(" ; "));
            for c in &s.side_conditions {
                let _ = writeln!(out, "    if {c}");
            }
        }
        for c in &t.side_conditions {
            let _ = writeln!(out, "  assuming {c}");
        }
        for (k, v) in &t.outputs {
            let _ = writeln!(out, "  {k}: {v}");
        }
        for v in &t.verdicts {
            let _ = write!(out, "  {}: {}", v.check, v.verdict);
            if let Some(x) = v.residual {
                let _ = write!(out, " (residual {x:.3e})");
            }
            if let Some(w) = &v.witness {
                let pts: Vec<String> = w.iter().map(|(k, x)| format!("{k}={x:.6}")).collect();
                let _ = write!(out, " witness {}", pts.join(", "));
            }
            out.push('\n');
        }
        for n in &t.notes {
            let _ = writeln!(out, "  note: {n}");
        }
    }
    if !r.expectations.is_empty() {
        out.push('\n');
        for e in &r.expectations {
            let _ = writeln!(out, "expect {} {}: {} {}", e.task, e.expect, if e.passed { "ok" } else { "MISMATCH" }, e.detail);
        }
    }
    for e in &r.errors {
        let _ = writeln!(out, "error: {e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("heat.psym");
        let mut t = TaskReport::new("s", "chain", "partial");
        t.order = Some(1);
        t.chain.push(StepReport {
            r: 1,
            raw: vec!["x*u_x^2 - x*u*u_xx".into()],
            restricted: vec!["x*u_x^2 - x*u*u_xx".into()],
            side_conditions: vec!["nonzero x".into()],
        });
        t.verdicts.push(VerdictReport {
            check: "heat".into(),
            verdict: "nonzero".into(),
            residual: Some(0.125),
            witness: Some(vec![("x".into(), 0.3)]),
        });
        r.results.push(t);
        r
    }

    #[test]
    fn round_trips_and_sorts_keys() {
        let r = sample();
        let s = emit_report(&r);
        let back: Report = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(emit_report(&back), s);
        assert!(s.find("\"engine_version\"").unwrap() < s.find("\"problem\"").unwrap());
        assert!(s.contains("\"order\": 1"));
    }

    #[test]
    fn empty_report_has_empty_results() {
        let s = emit_report(&Report::new("empty"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["results"], serde_json::json!([]));
    }
}
