//! Rule engine for constraints the DIDL grammar cannot express.
//!
//! Each rule is a [`Rule`] trait object in a [`RuleRegistry`]. Shallow rules
//! look only at the tree; deep rules materialize payloads and run only when
//! a fetcher is supplied.

mod rules;

use std::collections::BTreeMap;
use std::fmt;

use crate::model::{DidlDocument, NodePath, NodeRef};
use crate::resourceio::{Fetcher, Materializer};

pub use rules::catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Shallow,
    Deep,
}

/// Static description of a rule.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RuleInfo {
    pub id: &'static str,
    pub severity: Severity,
    pub mode: Mode,
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    /// Rule id; deep-mode fetch failures use `R9-FETCH`.
    pub rule: String,
    pub severity: Severity,
    pub path: NodePath,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.severity.as_str(), self.rule, self.path, self.message)
    }
}

/// Inputs shared by all rules during one run.
pub struct RuleContext<'a> {
    pub doc: &'a DidlDocument,
    /// Preorder walk of `doc`.
    pub nodes: Vec<(NodePath, NodeRef<'a>)>,
    /// Present in deep mode only.
    pub materializer: Option<Materializer<'a>>,
}

pub trait Rule: Send + Sync {
    fn info(&self) -> RuleInfo;
    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>);

    fn id(&self) -> &'static str {
        self.info().id
    }

    /// Finding at `path` with this rule's id and severity.
    fn finding(&self, path: &NodePath, message: String) -> Finding {
        let info = self.info();
        Finding { rule: info.id.to_string(), severity: info.severity, path: path.clone(), message }
    }
}

pub struct RuleRegistry {
    rules: Vec<Box<dyn Rule>>,
}

impl Default for RuleRegistry {
    fn default() -> Self {
        RuleRegistry { rules: catalog() }
    }
}

fn id_key(id: &str) -> (char, u32, String) {
    let mut chars = id.chars();
    let letter = chars.next().unwrap_or(' ');
    let rest: String = chars.collect();
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    let suffix = rest[digits.len()..].to_string();
    (letter, digits.parse().unwrap_or(0), suffix)
}

impl RuleRegistry {
    pub fn empty() -> Self {
        RuleRegistry { rules: Vec::new() }
    }

    /// Adds a rule, keeping the registry in id order. Replaces a rule with
    /// the same id.
    pub fn register(&mut self, rule: Box<dyn Rule>) {
        self.rules.retain(|r| r.id() != rule.id());
        self.rules.push(rule);
        self.rules.sort_by_key(|r| id_key(r.id()));
    }

    pub fn get(&self, id: &str) -> Option<&dyn Rule> {
        self.rules.iter().find(|r| r.id() == id).map(|r| r.as_ref())
    }

    pub fn infos(&self) -> Vec<RuleInfo> {
        self.rules.iter().map(|r| r.info()).collect()
    }

    pub fn validate(&self, doc: &DidlDocument, fetcher: Option<&dyn Fetcher>) -> ValidationReport {
        let cx = RuleContext { doc, nodes: doc.walk(), materializer: fetcher.map(Materializer::new) };
        let ordinal: BTreeMap<&NodePath, usize> = cx.nodes.iter().enumerate().map(|(i, (p, _))| (p, i + 1)).collect();
        let mut tagged = Vec::new();
        for (rank, rule) in self.rules.iter().enumerate() {
            if rule.info().mode == Mode::Deep && cx.materializer.is_none() {
                continue;
            }
            let mut out = Vec::new();
            rule.check(&cx, &mut out);
            tagged.extend(out.into_iter().map(|f| (ordinal.get(&f.path).copied().unwrap_or(0), rank, f)));
        }
        // Stable: equal keys keep rule emission order.
        tagged.sort_by_key(|(o, r, _)| (*o, *r));
        ValidationReport::new(tagged.into_iter().map(|(_, _, f)| f).collect())
    }
}

/// The full rule catalog, ordered by id.
pub fn rule_catalog() -> Vec<RuleInfo> {
    RuleRegistry::default().infos()
}

pub fn validate(doc: &DidlDocument, fetcher: Option<&dyn Fetcher>) -> ValidationReport {
    RuleRegistry::default().validate(doc, fetcher)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    /// No error-severity findings.
    pub passed: bool,
}

impl ValidationReport {
    pub fn new(findings: Vec<Finding>) -> Self {
        let passed = !findings.iter().any(|f| f.severity == Severity::Error);
        ValidationReport { findings, passed }
    }

    /// Promotes warnings to errors.
    pub fn strict(self) -> Self {
        let findings = self.findings.into_iter().map(|f| Finding { severity: Severity::Error, ..f }).collect();
        ValidationReport::new(findings)
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        self.findings.iter().map(|f| f.rule.as_str()).collect()
    }

    /// One `<severity> <rule> <path> <message>` line per finding.
    pub fn to_text(&self) -> String {
        self.findings.iter().map(|f| format!("{f}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let findings: Vec<_> = self
            .findings
            .iter()
            .map(|f| {
                serde_json::json!({
                    "rule": f.rule,
                    "severity": f.severity.as_str(),
                    "path": f.path.to_string(),
                    "message": f.message,
                })
            })
            .collect();
        serde_json::json!({ "passed": self.passed, "findings": findings })
    }
}
