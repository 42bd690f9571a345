//! JSON instance documents and report formats.
//!
//! Every file is an object `{"version": 1, "kind": ..., "payload": ...}`.
//! Rationals are strings `"p/q"` (integers may also be bare JSON integers);
//! JSON floats are rejected. Goods are 0-based in documents and named
//! `G1..Gh` in text reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::equilibrium::{ConditionResult, EquilibriumCandidate, Offender, VerificationReport};
use crate::hsolver::{HierarchicalLabeling, HierarchyCheck};
use crate::market::{Market, MarketError, Trader, TraderId};
use crate::rational::{format_rational, serde_q, Q};
use crate::reduction::{
    BimatrixGame, GadgetIds, GameReport, LiftRole, MixedStrategyPair, RoleMap,
    SeparablePLMSpec, WsneReport,
};

pub const FORMAT_VERSION: u32 = 1;

/// Process exit code for a check that passed.
pub const EXIT_PASS: i32 = 0;
/// Process exit code for a check that failed.
pub const EXIT_FAIL: i32 = 1;
/// Process exit code for unreadable or invalid input.
pub const EXIT_MALFORMED: i32 = 2;

pub fn exit_code(passed: bool) -> i32 {
    if passed {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format version {found}, expected {FORMAT_VERSION}")]
    Version { found: Value },
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("expected a `{expected}` document, got `{found}`")]
    WrongKind { expected: Kind, found: Kind },
    #[error("invalid {kind} payload: {message}")]
    Payload { kind: Kind, message: String },
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Market,
    Game,
    Candidate,
    Labeling,
    PlmSpec,
    Strategies,
    Report,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Market => "market",
            Kind::Game => "game",
            Kind::Candidate => "candidate",
            Kind::Labeling => "labeling",
            Kind::PlmSpec => "plm-spec",
            Kind::Strategies => "strategies",
            Kind::Report => "report",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        [
            Kind::Market,
            Kind::Game,
            Kind::Candidate,
            Kind::Labeling,
            Kind::PlmSpec,
            Kind::Strategies,
            Kind::Report,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which construction produced a market, and who plays which part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "lowercase")]
pub enum RoleAnnotation {
    Game(RoleMap),
    Lift { roles: BTreeMap<TraderId, LiftRole> },
    Gadget(GadgetIds),
}

/// A market plus optional construction metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketInstance {
    pub market: Market,
    pub roles: Option<RoleAnnotation>,
}

impl MarketInstance {
    pub fn new(market: Market) -> Self {
        Self {
            market,
            roles: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MarketWire {
    goods: usize,
    traders: Vec<Trader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roles: Option<RoleAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "lowercase")]
pub enum Report {
    Verification(VerificationReport),
    Wsne(WsneReport),
    Game(GameReport),
    Hierarchy(HierarchyCheck),
    /// Market validation: one entry per violated invariant.
    Diagnostics {
        diagnostics: Vec<String>,
        existence: bool,
    },
}

impl Report {
    pub fn passed(&self) -> bool {
        match self {
            Report::Verification(r) => r.verdict,
            Report::Wsne(r) => r.passed,
            Report::Game(r) => r.valid(),
            Report::Hierarchy(r) => r.valid,
            Report::Diagnostics { diagnostics, .. } => diagnostics.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceDocument {
    Market(MarketInstance),
    Game(BimatrixGame),
    Candidate(EquilibriumCandidate),
    Labeling(HierarchicalLabeling),
    PlmSpec(SeparablePLMSpec),
    Strategies(MixedStrategyPair),
    Report(Report),
}

fn payload_error(kind: Kind) -> impl Fn(serde_json::Error) -> IoError {
    move |e| IoError::Payload {
        kind,
        message: e.to_string(),
    }
}

impl InstanceDocument {
    pub fn kind(&self) -> Kind {
        match self {
            InstanceDocument::Market(_) => Kind::Market,
            InstanceDocument::Game(_) => Kind::Game,
            InstanceDocument::Candidate(_) => Kind::Candidate,
            InstanceDocument::Labeling(_) => Kind::Labeling,
            InstanceDocument::PlmSpec(_) => Kind::PlmSpec,
            InstanceDocument::Strategies(_) => Kind::Strategies,
            InstanceDocument::Report(_) => Kind::Report,
        }
    }

    fn payload(&self) -> Value {
        let v = match self {
            InstanceDocument::Market(m) => serde_json::to_value(MarketWire {
                goods: m.market.good_count(),
                traders: m.market.traders().to_vec(),
                roles: m.roles.clone(),
            }),
            InstanceDocument::Game(g) => serde_json::to_value(g),
            InstanceDocument::Candidate(c) => serde_json::to_value(c),
            InstanceDocument::Labeling(l) => serde_json::to_value(l),
            InstanceDocument::PlmSpec(s) => serde_json::to_value(s),
            InstanceDocument::Strategies(s) => serde_json::to_value(s),
            InstanceDocument::Report(r) => serde_json::to_value(r),
        };
        v.expect("document types serialize to JSON")
    }

    pub fn into_market(self) -> Result<MarketInstance, IoError> {
        match self {
            InstanceDocument::Market(m) => Ok(m),
            other => Err(other.wrong(Kind::Market)),
        }
    }

    pub fn into_game(self) -> Result<BimatrixGame, IoError> {
        match self {
            InstanceDocument::Game(g) => Ok(g),
            other => Err(other.wrong(Kind::Game)),
        }
    }

    pub fn into_candidate(self) -> Result<EquilibriumCandidate, IoError> {
        match self {
            InstanceDocument::Candidate(c) => Ok(c),
            other => Err(other.wrong(Kind::Candidate)),
        }
    }

    pub fn into_labeling(self) -> Result<HierarchicalLabeling, IoError> {
        match self {
            InstanceDocument::Labeling(l) => Ok(l),
            other => Err(other.wrong(Kind::Labeling)),
        }
    }

    pub fn into_plm_spec(self) -> Result<SeparablePLMSpec, IoError> {
        match self {
            InstanceDocument::PlmSpec(s) => Ok(s),
            other => Err(other.wrong(Kind::PlmSpec)),
        }
    }

    pub fn into_strategies(self) -> Result<MixedStrategyPair, IoError> {
        match self {
            InstanceDocument::Strategies(s) => Ok(s),
            other => Err(other.wrong(Kind::Strategies)),
        }
    }

    fn wrong(&self, expected: Kind) -> IoError {
        IoError::WrongKind {
            expected,
            found: self.kind(),
        }
    }
}

/// Parses a document. Syntax errors carry line and column; payload errors
/// carry the offending field's message.
pub fn parse_instance(text: &str) -> Result<InstanceDocument, IoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IoError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = root else {
        return Err(IoError::Syntax {
            line: 1,
            column: 1,
            message: "top level must be an object".into(),
        });
    };
    let version = obj.remove("version").unwrap_or(Value::Null);
    if version.as_u64() != Some(FORMAT_VERSION as u64) {
        return Err(IoError::Version { found: version });
    }
    let kind_text = match obj.remove("kind") {
        Some(Value::String(s)) => s,
        other => return Err(IoError::UnknownKind(other.unwrap_or(Value::Null).to_string())),
    };
    let kind = Kind::parse(&kind_text).ok_or(IoError::UnknownKind(kind_text))?;
    let payload = obj.remove("payload").unwrap_or(Value::Null);
    let err = payload_error(kind);
    Ok(match kind {
        Kind::Market => {
            let wire: MarketWire = serde_json::from_value(payload).map_err(err)?;
            InstanceDocument::Market(MarketInstance {
                market: Market::new(wire.goods, wire.traders)?,
                roles: wire.roles,
            })
        }
        Kind::Game => {
            let g: BimatrixGame = serde_json::from_value(payload).map_err(err)?;
            g.check_shape().map_err(|e| IoError::Payload {
                kind,
                message: e.to_string(),
            })?;
            InstanceDocument::Game(g)
        }
        Kind::Candidate => InstanceDocument::Candidate(serde_json::from_value(payload).map_err(err)?),
        Kind::Labeling => InstanceDocument::Labeling(serde_json::from_value(payload).map_err(err)?),
        Kind::PlmSpec => InstanceDocument::PlmSpec(serde_json::from_value(payload).map_err(err)?),
        Kind::Strategies => {
            InstanceDocument::Strategies(serde_json::from_value(payload).map_err(err)?)
        }
        Kind::Report => InstanceDocument::Report(serde_json::from_value(payload).map_err(err)?),
    })
}

/// Canonical text: pretty JSON with fields in declaration order and a
/// trailing newline.
pub fn emit_instance(doc: &InstanceDocument) -> String {
    #[derive(Serialize)]
    struct Wire<'a> {
        version: u32,
        kind: &'a str,
        payload: Value,
    }
    let mut out = serde_json::to_string_pretty(&Wire {
        version: FORMAT_VERSION,
        kind: doc.kind().name(),
        payload: doc.payload(),
    })
    .expect("JSON values serialize");
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    /// One JSON record per line.
    Lines,
}

fn condition_name(c: u8) -> &'static str {
    match c {
        1 => "prices",
        2 => "budget",
        3 => "optimality",
        4 => "clearing",
        _ => "unknown",
    }
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn offender_text(o: &Offender) -> String {
    match o {
        Offender::Trader(id) => format!("trader {id}"),
        Offender::Good(i) => format!("good G{}", i + 1),
        Offender::Prices => "prices".into(),
    }
}

fn condition_line(c: &ConditionResult) -> String {
    let mut line = format!(
        "condition {} {} {}",
        c.condition,
        condition_name(c.condition),
        pass_fail(c.passed)
    );
    match (&c.offender, c.passed) {
        (Some(o), false) => {
            let _ = write!(line, " {} violation {}", offender_text(o), c.worst_violation);
        }
        (Some(o), true) => {
            let _ = write!(line, " worst {} at {}", c.worst_violation, offender_text(o));
        }
        (None, _) => {
            let _ = write!(line, " worst {}", c.worst_violation);
        }
    }
    if let Some(note) = &c.note {
        let _ = write!(line, " ({note})");
    }
    line
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum VerificationRecord {
    Condition(ConditionResult),
    Verdict {
        #[serde(with = "serde_q")]
        epsilon: Q,
        verdict: bool,
    },
}

/// Renders a report. Text is one human-readable line per item plus a verdict
/// line; `Lines` is line-delimited JSON that [`parse_report`] reads back.
pub fn emit_report(report: &Report, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            match report {
                Report::Verification(r) => {
                    for c in &r.conditions {
                        out.push_str(&condition_line(c));
                        out.push('\n');
                    }
                    let _ = writeln!(out, "epsilon {}", format_rational(&r.epsilon));
                }
                Report::Wsne(r) => {
                    let _ = writeln!(out, "worst margin {}", r.worst_margin);
                    if let Some(o) = &r.offender {
                        let who = match o.player {
                            crate::reduction::Player::Row => "row",
                            crate::reduction::Player::Column => "column",
                        };
                        let _ = writeln!(
                            out,
                            "{who} player strategy {} trails strategy {} by {}",
                            o.strategy + 1,
                            o.better + 1,
                            o.margin
                        );
                    }
                }
                Report::Game(r) => {
                    for v in &r.violations {
                        let _ = writeln!(out, "{v}");
                    }
                }
                Report::Hierarchy(r) => {
                    if let Some(v) = &r.violation {
                        let _ = writeln!(out, "{v}");
                    }
                }
                Report::Diagnostics {
                    diagnostics,
                    existence,
                } => {
                    for d in diagnostics {
                        let _ = writeln!(out, "{d}");
                    }
                    let _ = writeln!(
                        out,
                        "existence conditions {}",
                        if *existence { "hold" } else { "fail" }
                    );
                }
            }
            let _ = writeln!(out, "verdict {}", pass_fail(report.passed()));
        }
        ReportFormat::Lines => match report {
            Report::Verification(r) => {
                for c in &r.conditions {
                    out.push_str(&record(&VerificationRecord::Condition(c.clone())));
                }
                out.push_str(&record(&VerificationRecord::Verdict {
                    epsilon: r.epsilon.clone(),
                    verdict: r.verdict,
                }));
            }
            other => out.push_str(&record(other)),
        },
    }
    out
}

fn record<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("records serialize");
    s.push('\n');
    s
}

/// Reads the `Lines` format back.
pub fn parse_report(text: &str) -> Result<Report, IoError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let syntax = |line: usize, e: serde_json::Error| IoError::Syntax {
        line: line + 1,
        column: e.column(),
        message: e.to_string(),
    };
    let Some(&(first_no, first)) = lines.first() else {
        return Err(IoError::Syntax {
            line: 1,
            column: 1,
            message: "empty report".into(),
        });
    };
    let head: Value = serde_json::from_str(first).map_err(|e| syntax(first_no, e))?;
    if head.get("record").is_none() {
        return serde_json::from_value(head).map_err(payload_error(Kind::Report));
    }
    let mut conditions = Vec::new();
    for (no, line) in lines {
        match serde_json::from_str(line).map_err(|e| syntax(no, e))? {
            VerificationRecord::Condition(c) => conditions.push(c),
            VerificationRecord::Verdict { epsilon, verdict } => {
                return Ok(Report::Verification(VerificationReport {
                    epsilon,
                    conditions,
                    verdict,
                }))
            }
        }
    }
    Err(IoError::Payload {
        kind: Kind::Report,
        message: "missing verdict record".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::verify_candidate;
    use crate::market::{swap_market, AllocationProfile, PriceVector};
    use crate::rational::{one, q, qi};

    const SWAP: &str = r#"{
  "version": 1,
  "kind": "market",
  "payload": {
    "goods": 2,
    "traders": [
      {
        "id": "T1",
        "endowment": [
          "1",
          "0"
        ],
        "utility": {
          "kind": "linear",
          "base_slopes": [
            "0",
            "1"
          ],
          "influence": [
            [],
            []
          ]
        }
      },
      {
        "id": "T2",
        "endowment": [
          "0",
          "1"
        ],
        "utility": {
          "kind": "linear",
          "base_slopes": [
            "1",
            "0"
          ],
          "influence": [
            [],
            []
          ]
        }
      }
    ]
  }
}
"#;

    #[test]
    fn golden_swap_market() {
        let doc = parse_instance(SWAP).unwrap();
        assert_eq!(doc.clone().into_market().unwrap().market, swap_market());
        assert_eq!(emit_instance(&doc), SWAP);
    }

    #[test]
    fn float_literal_rejected() {
        let text = SWAP.replacen("\"1\",", "0.5,", 1);
        let err = parse_instance(&text).unwrap_err().to_string();
        assert!(err.contains("float literal; write 1/2"), "{err}");
        let text = SWAP.replacen("\"1\",", "\"0.5\",", 1);
        let err = parse_instance(&text).unwrap_err().to_string();
        assert!(err.contains("float literal; write 1/2"), "{err}");
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_instance("{\"version\": 1,\n \"kind\": }"),
            Err(IoError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_instance(&SWAP.replace("\"version\": 1", "\"version\": 2")),
            Err(IoError::Version { .. })
        ));
        assert!(matches!(
            parse_instance(&SWAP.replace("\"market\"", "\"bazaar\"")),
            Err(IoError::UnknownKind(k)) if k == "bazaar"
        ));
    }

    #[test]
    fn field_order_is_canonicalized() {
        let shuffled = r#"{"payload": {"y": ["0", "1"], "x": ["2/4", "1/2"]}, "kind": "strategies", "version": 1}"#;
        let doc = parse_instance(shuffled).unwrap();
        let canon = emit_instance(&doc);
        assert!(canon.find("\"x\"").unwrap() < canon.find("\"y\"").unwrap());
        assert!(canon.contains("\"1/2\""));
        assert_eq!(emit_instance(&parse_instance(&canon).unwrap()), canon);
    }

    fn swap_report(x2: Vec<Q>) -> VerificationReport {
        let cand = EquilibriumCandidate::new(
            PriceVector::normalized(vec![q(1, 2), q(1, 2)]).unwrap(),
            AllocationProfile::from_pairs([("T1", vec![qi(0), one()]), ("T2", x2)]),
        );
        verify_candidate(&swap_market(), &cand, &qi(0)).unwrap()
    }

    #[test]
    fn text_report_lines() {
        let ok = emit_report(&Report::Verification(swap_report(vec![one(), qi(0)])), ReportFormat::Text);
        assert_eq!(ok.lines().filter(|l| l.starts_with("condition") && l.contains(" PASS")).count(), 4);
        assert!(ok.ends_with("verdict PASS\n"));
        let bad = emit_report(
            &Report::Verification(swap_report(vec![q(2, 3), qi(0)])),
            ReportFormat::Text,
        );
        assert!(bad.contains("condition 4 clearing FAIL good G1 violation 1/3"), "{bad}");
        assert!(bad.ends_with("verdict FAIL\n"));
    }

    #[test]
    fn lines_round_trip() {
        for r in [
            Report::Verification(swap_report(vec![one(), qi(0)])),
            Report::Verification(swap_report(vec![q(2, 3), qi(0)])),
            Report::Diagnostics {
                diagnostics: vec!["x".into()],
                existence: false,
            },
        ] {
            let text = emit_report(&r, ReportFormat::Lines);
            assert_eq!(parse_report(&text).unwrap(), r);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!((exit_code(true), exit_code(false), EXIT_MALFORMED), (0, 1, 2));
    }
}
