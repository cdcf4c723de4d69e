//! Run summary: every residual and tolerance check, serialized as JSON with
//! a stable field order.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn leq(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub task: String,
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
    pub all_passed: bool,
}

impl Summary {
    pub fn new(task: &str, echo: &str) -> Self {
        Self {
            task: task.to_string(),
            config: serde_json::from_str(echo).unwrap_or(serde_json::Value::Null),
            checks: Vec::new(),
            outputs: Vec::new(),
            all_passed: true,
        }
    }

    pub fn push(&mut self, check: Check) {
        println!(
            "check {:<40} {}  (value {:.3e}, tolerance {:.1e})",
            check.name,
            if check.pass { "PASS" } else { "FAIL" },
            check.value,
            check.tolerance
        );
        self.all_passed &= check.pass;
        self.checks.push(check);
    }

    pub fn finish(&mut self) {
        self.all_passed = self.checks.iter().all(|c| c.pass);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
