//! Text trace format: one `R <addr>` or `W <addr>` per line, decimal word
//! addresses, `#` comments and blank lines ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::memory::{AccessKind, Address, MemEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

pub fn parse_trace(text: &str) -> Result<Vec<MemEvent>, TraceError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TraceError {
            line: i + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        let kind = match parts.next() {
            Some("R") | Some("r") => AccessKind::Read,
            Some("W") | Some("w") => AccessKind::Write,
            Some(other) => return Err(err(format!("unknown access kind `{other}`"))),
            None => unreachable!(),
        };
        let addr = parts
            .next()
            .ok_or_else(|| err("missing address".into()))?
            .parse::<u64>()
            .map_err(|e| err(format!("bad address: {e}")))?;
        if let Some(extra) = parts.next() {
            return Err(err(format!("unexpected trailing token `{extra}`")));
        }
        events.push(MemEvent {
            kind,
            addr: Address(addr),
        });
    }
    Ok(events)
}

pub fn format_trace(events: &[MemEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        let k = match ev.kind {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        };
        let _ = writeln!(out, "{k} {}", ev.addr.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_skips_comments() {
        let evs = parse_trace("# header\nR 0\n\nW 64\nR 0\n").unwrap();
        assert_eq!(evs.len(), 3);
        assert_eq!(evs[1].kind, AccessKind::Write);
        assert_eq!(evs[1].addr, Address(64));
        assert!(parse_trace("").unwrap().is_empty());
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse_trace("Q 5").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_trace("R 1\n# ok\nR x").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse_trace("R").is_err());
        assert!(parse_trace("R 1 2").is_err());
    }
}
