//! Reader for the three-file HighD recording layout
//! (`XX_tracks.csv`, `XX_tracksMeta.csv`, `XX_recordingMeta.csv`).
//!
//! HighD positions are the top-left corner of the bounding box in image
//! coordinates (y pointing down). `width` is the box extent along x (the
//! vehicle length) and `height` the extent along y (the vehicle width).

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use super::{csv_error, malformed};
use crate::error::{Error, Result};
use crate::model::{Direction, FrameState, Lane, LaneLayout, Scene, VehicleClass, VehicleTrack};

#[derive(Debug, Clone, PartialEq)]
pub struct HighDRecordingMeta {
    pub recording_id: String,
    pub frame_rate: f64,
    pub upper_lane_markings: Vec<f64>,
    pub lower_lane_markings: Vec<f64>,
}

impl HighDRecordingMeta {
    /// Lane intervals between consecutive markings. Upper-carriageway lanes
    /// get ids `2..=nu`, lower ones `nu+2..`, following the dataset's
    /// numbering where the outer shoulders take the remaining ids.
    pub fn layout(&self) -> Result<LaneLayout> {
        let nu = self.upper_lane_markings.len() as i32;
        let mut lanes = Vec::new();
        for (k, w) in self.upper_lane_markings.windows(2).enumerate() {
            lanes.push(Lane { id: k as i32 + 2, lower: -w[1], upper: -w[0], direction: Direction::NegativeX });
        }
        for (k, w) in self.lower_lane_markings.windows(2).enumerate() {
            lanes.push(Lane { id: nu + 2 + k as i32, lower: -w[1], upper: -w[0], direction: Direction::PositiveX });
        }
        LaneLayout::new(lanes)
    }
}

struct Table {
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(input: R, required: &[&str]) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers().map_err(csv_error)?.clone();
        let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for name in required {
            if !columns.contains_key(*name) {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record));
        }
        Ok(Table { columns, rows })
    }

    fn text<'a>(&self, row: &'a (u64, csv::StringRecord), name: &str) -> Result<&'a str> {
        row.1.get(self.columns[name]).ok_or_else(|| malformed(row.0, format!("missing field `{name}`")))
    }

    fn number(&self, row: &(u64, csv::StringRecord), name: &str) -> Result<f64> {
        let text = self.text(row, name)?;
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(malformed(row.0, format!("`{name}` is not a finite number: `{text}`"))),
        }
    }

    fn integer(&self, row: &(u64, csv::StringRecord), name: &str) -> Result<i64> {
        let text = self.text(row, name)?;
        text.parse::<i64>().map_err(|_| malformed(row.0, format!("`{name}` is not an integer: `{text}`")))
    }
}

fn markings(text: &str, line: u64) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| malformed(line, format!("bad lane markings `{text}`")))?;
    if values.len() < 2 || values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(malformed(line, "lane markings need at least two ascending entries"));
    }
    Ok(values)
}

fn parse_recording_meta<R: Read>(input: R) -> Result<HighDRecordingMeta> {
    let table = Table::read(input, &["id", "frameRate", "upperLaneMarkings", "lowerLaneMarkings"])?;
    let row = table.rows.first().ok_or_else(|| malformed(2, "recording meta has no data row"))?;
    let frame_rate = table.number(row, "frameRate")?;
    if !(frame_rate > 0.0) {
        return Err(malformed(row.0, "frame rate must be positive"));
    }
    Ok(HighDRecordingMeta {
        recording_id: table.text(row, "id")?.to_string(),
        frame_rate,
        upper_lane_markings: markings(table.text(row, "upperLaneMarkings")?, row.0)?,
        lower_lane_markings: markings(table.text(row, "lowerLaneMarkings")?, row.0)?,
    })
}

struct TrackMeta {
    class: VehicleClass,
    length: f64,
    width: f64,
}

fn parse_tracks_meta<R: Read>(input: R) -> Result<HashMap<u32, TrackMeta>> {
    let table = Table::read(input, &["id", "width", "height", "class"])?;
    let mut out = HashMap::new();
    for row in &table.rows {
        let id = u32::try_from(table.integer(row, "id")?).map_err(|_| malformed(row.0, "negative vehicle id"))?;
        let class = table.text(row, "class")?.parse::<VehicleClass>().map_err(|e| malformed(row.0, e))?;
        out.insert(id, TrackMeta { class, length: table.number(row, "width")?, width: table.number(row, "height")? });
    }
    Ok(out)
}

/// Reads one HighD recording into a canonical [`Scene`] with (x, y) moved to
/// the geometric center of each vehicle.
pub fn parse_highd<A: Read, B: Read, C: Read>(
    tracks_csv: A,
    tracks_meta_csv: B,
    recording_meta_csv: C,
) -> Result<Scene> {
    let meta = parse_recording_meta(recording_meta_csv)?;
    let layout = meta.layout()?;
    let track_meta = parse_tracks_meta(tracks_meta_csv)?;
    let table = Table::read(
        tracks_csv,
        &[
            "frame",
            "id",
            "x",
            "y",
            "width",
            "height",
            "xVelocity",
            "yVelocity",
            "xAcceleration",
            "yAcceleration",
            "laneId",
        ],
    )?;

    let mut states: BTreeMap<u32, Vec<FrameState>> = BTreeMap::new();
    for row in &table.rows {
        let id = u32::try_from(table.integer(row, "id")?).map_err(|_| malformed(row.0, "negative vehicle id"))?;
        if !track_meta.contains_key(&id) {
            return Err(malformed(row.0, format!("vehicle {id} missing from tracks meta")));
        }
        let box_x = table.number(row, "width")?;
        let box_y = table.number(row, "height")?;
        let lane_id =
            i32::try_from(table.integer(row, "laneId")?).map_err(|_| malformed(row.0, "lane id out of range"))?;
        states.entry(id).or_default().push(FrameState {
            frame: table.integer(row, "frame")?,
            x: table.number(row, "x")? + box_x / 2.0,
            y: -(table.number(row, "y")? + box_y / 2.0),
            vx: table.number(row, "xVelocity")?,
            vy: -table.number(row, "yVelocity")?,
            ax: table.number(row, "xAcceleration")?,
            ay: -table.number(row, "yAcceleration")?,
            lane_id,
        });
    }

    let mut tracks = Vec::with_capacity(states.len());
    for (id, mut s) in states {
        s.sort_by_key(|st| st.frame);
        let m = &track_meta[&id];
        tracks.push(VehicleTrack::new(id, m.class, m.width, m.length, meta.frame_rate, s)?);
    }
    Scene::new(meta.recording_id.clone(), layout, tracks, meta.frame_rate)
}
