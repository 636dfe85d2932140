use std::fmt::Write as _;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub name: String,
    /// Script line, 0 for checks not tied to a line.
    pub line: usize,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub title: String,
    pub results: Vec<AssertionResult>,
    /// Free-form lines printed after the results (seed, minimized trace).
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, name: impl Into<String>, line: usize, expected: impl Into<String>, actual: impl Into<String>, pass: bool) {
        self.results.push(AssertionResult {
            name: name.into(),
            line,
            expected: expected.into(),
            actual: actual.into(),
            pass,
        });
    }

    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssertionResult> {
        self.results.iter().filter(|r| !r.pass)
    }

    pub fn human(&self) -> String {
        let mut out = format!("== {}\n", self.title);
        for r in &self.results {
            let status = if r.pass { "ok  " } else { "FAIL" };
            let at = if r.line > 0 { format!(" (line {})", r.line) } else { String::new() };
            let _ = writeln!(out, "{status} {}{at}", r.name);
            if !r.pass {
                let _ = writeln!(out, "     expected: {}", r.expected);
                let _ = writeln!(out, "     actual:   {}", r.actual);
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        let failed = self.failures().count();
        let _ = writeln!(
            out,
            "{} passed, {failed} failed",
            self.results.len() - failed
        );
        out
    }

    /// One JSON object per result.
    pub fn machine(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&serde_json::to_string(r).expect("plain struct serializes"));
            out.push('\n');
        }
        out
    }
}
