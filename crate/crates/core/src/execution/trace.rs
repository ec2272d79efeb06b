//! Newline-delimited JSON export of a trace and its SHA-256 fingerprint.

use std::io::{self, Write};

use serde_json::json;
use sha2::{Digest, Sha256};

use super::ExecutionTrace;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One `meta` line, one `block` line per stored block, one `anomaly` line
/// per anomaly and one `round` line per round.
pub fn write_ndjson<W: Write>(trace: &ExecutionTrace, mut out: W) -> io::Result<()> {
    let mut line = |value: serde_json::Value| -> io::Result<()> {
        serde_json::to_writer(&mut out, &value)?;
        out.write_all(b"\n")
    };
    line(json!({ "event": "meta", "meta": trace.meta }))?;
    for (id, node) in trace.store.nodes().iter().enumerate().skip(1) {
        let block = node.block.as_ref().expect("non-root node carries a block");
        line(json!({
            "event": "block",
            "id": id,
            "parent": node.parent,
            "height": node.height,
            "hash": node.hash,
            "s": block.s,
            "x": hex(&block.x),
            "ctr": block.ctr,
            "creator": node.creator,
            "round": node.round,
            "valid": node.valid,
        }))?;
    }
    for a in trace.store.anomalies() {
        line(json!({ "event": "anomaly", "anomaly": a }))?;
    }
    for r in &trace.rounds {
        line(json!({ "event": "round", "record": r }))?;
    }
    Ok(())
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Hex SHA-256 of the NDJSON export.
pub fn trace_hash(trace: &ExecutionTrace) -> String {
    let mut w = HashWriter(Sha256::new());
    write_ndjson(trace, &mut w).expect("hashing never fails");
    hex(&w.0.finalize())
}
