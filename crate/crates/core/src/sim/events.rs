//! Simulation event log.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CommuteStart,
    Arrive,
    SessionStart,
    ParkInactive,
    ParkActiveIdle,
    Overflow,
    Enqueue,
    Notify,
    Full,
    Relocate,
    Fee,
    Comply,
    Depart,
    PoliciesChanged,
    PortsChanged,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Global tick (day * 288 + tick of day).
    pub tick: u64,
    pub vehicle_id: Option<u32>,
    pub event: EventKind,
    pub detail: String,
}

pub fn write_jsonl<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_shape() {
        let events = vec![Event { tick: 3, vehicle_id: Some(1), event: EventKind::Fee, detail: "5000".into() }];
        let mut buf = Vec::new();
        write_jsonl(&events, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"tick\":3,\"vehicle_id\":1,\"event\":\"fee\",\"detail\":\"5000\"}\n"
        );
    }
}
