//! Protocol event trace: one line per event with a stable field order,
//! so two runs of the same seeded scenario can be compared byte for
//! byte.

use std::fmt::Write as _;

use crate::engine::SimTime;
use crate::NodeId;

/// Collects trace lines into one growing buffer.
#[derive(Debug, Default)]
pub struct TraceSink {
    buf: String,
}

impl TraceSink {
    pub fn new() -> TraceSink {
        TraceSink::default()
    }

    /// Appends `t=<time> node=<id> ev=<kind> <detail>`.
    pub fn event(&mut self, t: SimTime, node: NodeId, kind: &str, detail: &str) {
        let _ = if detail.is_empty() {
            writeln!(self.buf, "t={t} node={node} ev={kind}")
        } else {
            writeln!(self.buf, "t={t} node={node} ev={kind} {detail}")
        };
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_stable_and_ordered() {
        let mut sink = TraceSink::new();
        sink.event(SimTime::from_secs(1.25), NodeId(3), "rreq_tx", "src=3 bid=0");
        sink.event(SimTime::from_secs(2.0), NodeId(4), "noop", "");
        assert_eq!(
            sink.as_str(),
            "t=1.250000000 node=3 ev=rreq_tx src=3 bid=0\nt=2.000000000 node=4 ev=noop\n"
        );
    }
}
