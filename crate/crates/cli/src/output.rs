//! Report rendering: aligned human text or `key<TAB>value` lines.

use std::fmt::Write as _;

pub struct Report {
    machine: bool,
    rows: Vec<(String, Value)>,
}

enum Value {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Report {
    pub fn new(machine: bool) -> Self {
        Self {
            machine,
            rows: Vec::new(),
        }
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) -> &mut Self {
        self.rows.push((key.into(), Value::Num(v)));
        self
    }

    pub fn int(&mut self, key: impl Into<String>, v: usize) -> &mut Self {
        self.rows.push((key.into(), Value::Int(v as u64)));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl Into<String>) -> &mut Self {
        self.rows.push((key.into(), Value::Text(v.into())));
        self
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &self.rows {
            let v = match v {
                // Shortest round-trip form: locale independent and reproducible.
                Value::Num(x) if self.machine => format!("{x}"),
                Value::Num(x) => format!("{x:.6}"),
                Value::Int(n) => n.to_string(),
                Value::Text(s) => s.clone(),
            };
            if self.machine {
                let _ = writeln!(out, "{k}\t{v}");
            } else {
                let _ = writeln!(out, "{k:<width$}  {v}");
            }
        }
        out
    }
}
