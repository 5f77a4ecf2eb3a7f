//! JSON-lines event log: one object per simulation event.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{RequestId, VehicleId};
use crate::grid::Zone;
use crate::matching::LegKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Start { mode: String, vehicles: usize, dt_minutes: u64, seed: u64 },
    Request { request: RequestId, origin: Zone, destination: Zone, hop: Option<Zone> },
    Assign { vehicle: VehicleId, requests: Vec<RequestId>, leg: LegKind, zone: Zone, pickup_etas: Vec<f64> },
    Pickup { vehicle: VehicleId, request: RequestId, zone: Zone },
    /// Drop-off at a hop zone.
    Hop { vehicle: VehicleId, request: RequestId, zone: Zone },
    /// Drop-off at the final destination; `vehicle` is absent for trips
    /// that start at their destination.
    Dropoff { vehicle: Option<VehicleId>, request: RequestId, zone: Zone },
    Reject { request: RequestId, zone: Zone },
    /// Hop-zone wait exceeded its deadline.
    Expire { request: RequestId, zone: Zone },
    Dispatch { vehicle: VehicleId, zone: Zone, target: Zone, eta: f64 },
    Move { vehicle: VehicleId, zone: Zone, to: Zone, onboard: Vec<RequestId> },
    StepEnd { step: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: u64, kind: EventKind) {
        self.events.push(Event { time, kind });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(src: impl BufRead) -> Result<Self> {
        let mut events = Vec::new();
        for (n, line) in src.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("event line {}: {e}", n + 1)))?);
        }
        Ok(Self { events })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(BufReader::new(fs::File::open(path)?))
    }
}
