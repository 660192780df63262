use std::io::{BufRead, Write};

use super::{HistoryRecord, SearchError};

/// Appends `rec` as one JSON line.
pub fn write_record<W: Write>(mut w: W, rec: &HistoryRecord) -> Result<(), SearchError> {
    let line = serde_json::to_string(rec).map_err(|e| SearchError::MalformedHistory { line: rec.index, message: e.to_string() })?;
    writeln!(w, "{line}")?;
    Ok(())
}

/// Reads a JSON-lines log. A final line without a trailing newline that fails
/// to parse is treated as an interrupted write and dropped.
pub fn read_history<R: BufRead>(mut r: R) -> Result<Vec<HistoryRecord>, SearchError> {
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if r.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<HistoryRecord>(text) {
            Ok(rec) => {
                if rec.index != out.len() {
                    return Err(SearchError::MalformedHistory {
                        line: line_no,
                        message: format!("expected index {}, found {}", out.len(), rec.index),
                    });
                }
                out.push(rec);
            }
            Err(_) if !complete => break,
            Err(e) => return Err(SearchError::MalformedHistory { line: line_no, message: e.to_string() }),
        }
    }
    Ok(out)
}
