use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Flat `key=value` report, one metric per line.
///
/// A command that produces a document (a graph, say) sets `body`; the body
/// then goes to the output and the report to standard error.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
    violations: Vec<String>,
    pub body: Option<String>,
    /// The command wrote its own files under `--out`; the report goes to
    /// standard output.
    pub out_consumed: bool,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut r = Report::default();
        r.put("command", command);
        r.put("seed", seed);
        r
    }

    pub fn put(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn extend(&mut self, lines: Vec<(String, String)>) {
        self.lines.extend(lines);
    }

    /// Records a failed assertion; the run then exits with status 1.
    pub fn violation(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(&format!("{k}={}\n", v.replace('\n', " ")));
        }
        out.push_str(&format!("violations={}\n", self.violations.len()));
        for v in &self.violations {
            out.push_str(&format!("violation={}\n", v.replace('\n', " ")));
        }
        out.push_str(&format!(
            "status={}\n",
            if self.ok() { "ok" } else { "violation" }
        ));
        out
    }

    pub fn emit(&self, out: Option<&Path>) -> std::io::Result<()> {
        let out = if self.out_consumed { None } else { out };
        let (doc, side) = match &self.body {
            Some(body) => (body.clone(), Some(self.render())),
            None => (self.render(), None),
        };
        match out {
            Some(path) => fs::write(path, doc)?,
            None => std::io::stdout().write_all(doc.as_bytes())?,
        }
        if let Some(side) = side {
            std::io::stderr().write_all(side.as_bytes())?;
        }
        Ok(())
    }
}
