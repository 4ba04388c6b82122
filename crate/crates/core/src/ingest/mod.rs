//! Trajectory table ingestion.

mod generic;
mod highd;

pub use generic::{parse_generic, parse_generic_named, write_generic, GenericTrajectoryRow, GENERIC_HEADER};
pub use highd::{parse_highd, HighDRecordingMeta};

use crate::model::{Scene, VehicleClass};

/// Drops every truck whose lane id changes during its track. Cars are kept
/// whether or not they change lanes.
pub fn exclude_truck_lane_changes(scene: &Scene) -> Scene {
    scene.filtered(|t| !(t.class() == VehicleClass::Truck && t.changes_lane()))
}

fn malformed(line: u64, reason: impl Into<String>) -> crate::Error {
    crate::Error::MalformedRow { line, reason: reason.into() }
}

fn csv_error(err: csv::Error) -> crate::Error {
    match err.position() {
        Some(pos) => malformed(pos.line(), err.to_string()),
        None => crate::Error::Csv(err),
    }
}
