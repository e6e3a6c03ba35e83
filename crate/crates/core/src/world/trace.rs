//! Per-step episode traces as JSON lines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Actor, Control, EgoState, InfractionEvent, TrafficLight, WorldState};

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub time_step: u64,
    pub ego: EgoState,
    pub actors: Vec<Actor>,
    pub lights: Vec<TrafficLight>,
    pub control: Control,
    pub events: Vec<InfractionEvent>,
}

impl TraceStep {
    /// Records the state a control was applied to plus the events it caused.
    pub fn new(world: &WorldState, control: Control, events: Vec<InfractionEvent>) -> Self {
        Self {
            time_step: world.time_step,
            ego: world.ego,
            actors: world.actors.clone(),
            lights: world.lights.clone(),
            control,
            events,
        }
    }
}

pub fn write_trace<W: Write>(mut out: W, steps: &[TraceStep]) -> std::io::Result<()> {
    for s in steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_trace_line(line: &str) -> Result<TraceStep, serde_json::Error> {
    serde_json::from_str(line)
}
