//! Per-node timeline of generate, receive and main-chain-switch records, and
//! its line-oriented file format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::chain::{BlockId, BlockKind, MinerId, Protocol};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Generate,
    Receive,
    /// The node moved its tip to a block that does not extend the old tip.
    Switch,
    /// A received block failed validation and was dropped.
    Reject,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Generate => "generate",
            Action::Receive => "receive",
            Action::Switch => "switch",
            Action::Reject => "reject",
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generate" => Ok(Action::Generate),
            "receive" => Ok(Action::Receive),
            "switch" => Ok(Action::Switch),
            "reject" => Ok(Action::Reject),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// One observation at one node.
///
/// For [`Action::Switch`], `block` is the new tip, `parent` the old tip and
/// `fork` their common ancestor; `kind`, `miner`, `size` and `txs` describe
/// the new tip.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub node: u32,
    pub action: Action,
    pub block: BlockId,
    pub parent: BlockId,
    pub kind: BlockKind,
    pub miner: MinerId,
    pub size: u64,
    pub txs: u64,
    pub fork: Option<BlockId>,
}

/// Run-level facts the metrics need besides the records.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMeta {
    pub protocol: Protocol,
    pub nodes: u32,
    /// Mining power per node, in node order.
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub meta: LogMeta,
    pub records: Vec<LogRecord>,
}

const MAGIC: &str = "# ngsim event log v1";
const COLUMNS: &str = "time\tnode\taction\tblock\tparent\tkind\tminer\tsize\ttxs\tfork";

impl EventLog {
    pub fn new(meta: LogMeta) -> Self {
        EventLog {
            meta,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Time of the last record (0 for an empty log).
    pub fn end_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 4));
        s.push_str(MAGIC);
        s.push('\n');
        let _ = writeln!(s, "# protocol {}", self.meta.protocol);
        let _ = writeln!(s, "# nodes {}", self.meta.nodes);
        let powers: Vec<String> = self.meta.powers.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "# powers {}", powers.join(","));
        s.push_str(COLUMNS);
        s.push('\n');
        for r in &self.records {
            let fork = r.fork.map_or_else(|| "-".to_string(), |f| f.to_string());
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.time,
                r.node,
                r.action.as_str(),
                r.block,
                r.parent,
                r.kind,
                r.miner,
                r.size,
                r.txs,
                fork
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut protocol = None;
        let mut nodes = None;
        let mut powers = None;
        let mut records = Vec::new();
        let mut saw_columns = false;
        let mut rest = text;
        let mut line_no = 0;
        while !rest.is_empty() {
            line_no += 1;
            let (line, tail) = match rest.find('\n') {
                Some(i) => (&rest[..i], &rest[i + 1..]),
                None => {
                    return Err(LogError::Malformed {
                        line: line_no,
                        message: "truncated line (no terminating newline)".into(),
                    })
                }
            };
            rest = tail;
            let bad = |message: String| LogError::Malformed {
                line: line_no,
                message,
            };
            if let Some(h) = line.strip_prefix("# ") {
                let (key, value) = h.split_once(' ').unwrap_or((h, ""));
                match key {
                    "protocol" => protocol = Some(value.parse::<Protocol>().map_err(bad)?),
                    "nodes" => nodes = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                    "powers" => {
                        let ps: Result<Vec<f64>, _> = if value.is_empty() {
                            Ok(Vec::new())
                        } else {
                            value.split(',').map(str::parse).collect()
                        };
                        powers = Some(ps.map_err(|e| bad(e.to_string()))?);
                    }
                    _ => {}
                }
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if line == COLUMNS {
                saw_columns = true;
                continue;
            }
            if !saw_columns {
                return Err(bad("record before column header".into()));
            }
            records.push(parse_record(line).map_err(bad)?);
        }
        Ok(EventLog {
            meta: LogMeta {
                protocol: protocol.ok_or(LogError::MissingHeader("protocol"))?,
                nodes: nodes.ok_or(LogError::MissingHeader("nodes"))?,
                powers: powers.ok_or(LogError::MissingHeader("powers"))?,
            },
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        std::fs::write(path, self.to_text()).map_err(|source| LogError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, LogError> {
        let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

fn parse_record(line: &str) -> Result<LogRecord, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 10 {
        return Err(format!("expected 10 fields, found {}", f.len()));
    }
    let num = |i: usize| {
        f[i].parse::<u64>()
            .map_err(|e| format!("field {}: {e}", i + 1))
    };
    let time: f64 = f[0].parse().map_err(|e| format!("field 1: {e}"))?;
    if !time.is_finite() {
        return Err("non-finite time".into());
    }
    let miner = if f[6] == "-" {
        MinerId::NONE
    } else {
        MinerId(f[6].parse().map_err(|e| format!("field 7: {e}"))?)
    };
    Ok(LogRecord {
        time,
        node: f[1].parse().map_err(|e| format!("field 2: {e}"))?,
        action: f[2].parse()?,
        block: BlockId(num(3)?),
        parent: BlockId(num(4)?),
        kind: f[5].parse()?,
        miner,
        size: num(7)?,
        txs: num(8)?,
        fork: if f[9] == "-" {
            None
        } else {
            Some(BlockId(num(9)?))
        },
    })
}
