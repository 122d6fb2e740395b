//! A small runner for numbered acceptance criteria: each criterion returns a
//! verdict with a one-line detail, panics are caught and reported as
//! failures, and the process exit code reflects the overall result.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }

    /// Passes when every part passes; details are joined with `; `.
    pub fn all(parts: Vec<Verdict>) -> Self {
        let pass = parts.iter().all(|p| p.pass);
        let detail = parts
            .iter()
            .map(|p| {
                if p.pass {
                    p.detail.clone()
                } else {
                    format!("[fail] {}", p.detail)
                }
            })
            .collect::<Vec<_>>()
            .join("; ");
        Verdict { pass, detail }
    }

    /// Adds a wall-clock budget to the verdict.
    pub fn within(self, elapsed: Duration, budget: Duration) -> Self {
        let ok = elapsed <= budget;
        let timing = format!("runtime {:.2} s (budget {:.0} s)", elapsed.as_secs_f64(), budget.as_secs_f64());
        Verdict::all(vec![self, Verdict::new(ok, timing)])
    }
}

#[derive(Default)]
pub struct Suite {
    results: Vec<(u32, bool)>,
}

impl Suite {
    pub fn new() -> Self {
        Suite::default()
    }

    pub fn run<F>(&mut self, id: u32, name: &str, criterion: F)
    where
        F: FnOnce() -> Verdict,
    {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:2} {tag} {name} ({:.1} s): {}",
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
        self.results.push((id, verdict.pass));
    }

    pub fn finish(&self) -> ExitCode {
        let failed: Vec<String> = self
            .results
            .iter()
            .filter(|(_, p)| !p)
            .map(|(id, _)| id.to_string())
            .collect();
        println!(
            "acceptance: {} passed, {} failed{}",
            self.results.len() - failed.len(),
            failed.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(" (criteria {})", failed.join(", "))
            }
        );
        if failed.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_requires_every_part() {
        let v = Verdict::all(vec![Verdict::new(true, "a"), Verdict::new(false, "b")]);
        assert!(!v.pass);
        assert_eq!(v.detail, "a; [fail] b");
    }

    #[test]
    fn budget_is_enforced() {
        let v = Verdict::new(true, "x").within(Duration::from_secs(2), Duration::from_secs(1));
        assert!(!v.pass);
    }
}
