//! Per-neighbor risk (category grid or autoencoder) and its aggregation into
//! an ego risk time series.

mod autoencoder;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use autoencoder::{
    ae_train, AeHyperparameters, AeVariant, Autoencoder, TrainingMeta, HIDDEN, INPUTS, MIN_TRAINING_SAMPLES, PARAMS,
};

use crate::error::{Error, Result};
use crate::model::{Scene, VehicleAt};
use crate::neighbors::{classify_in_snapshot, NeighborConfig, RelativePosition};
use crate::ssm::{ssm_for_entry, SsmSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SafetyCategory {
    Safe,
    Conflict,
    Critical,
}

impl SafetyCategory {
    pub fn value(self) -> f64 {
        match self {
            SafetyCategory::Safe => 0.0,
            SafetyCategory::Conflict => 0.5,
            SafetyCategory::Critical => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SsmKind {
    Pet,
    Drac,
    Ittc,
}

pub const PET_SAFE: f64 = 1.0;
pub const PET_CRITICAL: f64 = 0.4;
pub const DRAC_SAFE: f64 = 3.3;
pub const DRAC_CRITICAL: f64 = 5.0;
pub const ITTC_SAFE: f64 = 1.0 / 1.5;
pub const ITTC_CRITICAL: f64 = 1.0;

/// Maps an SSM value to its safety category. Safe bands are closed at the
/// Safe/Conflict threshold and Critical bands at the Conflict/Critical one.
pub fn categorize(kind: SsmKind, value: f64) -> SafetyCategory {
    match kind {
        SsmKind::Pet => {
            if value >= PET_SAFE {
                SafetyCategory::Safe
            } else if value <= PET_CRITICAL {
                SafetyCategory::Critical
            } else {
                SafetyCategory::Conflict
            }
        }
        SsmKind::Drac | SsmKind::Ittc => {
            let (safe, critical) = match kind {
                SsmKind::Drac => (DRAC_SAFE, DRAC_CRITICAL),
                _ => (ITTC_SAFE, ITTC_CRITICAL),
            };
            if value <= safe {
                SafetyCategory::Safe
            } else if value >= critical {
                SafetyCategory::Critical
            } else {
                SafetyCategory::Conflict
            }
        }
    }
}

/// True when all three measures of the sample fall in the Safe band.
pub fn is_all_safe(sample: &SsmSample) -> bool {
    categorize(SsmKind::Pet, sample.pet) == SafetyCategory::Safe
        && categorize(SsmKind::Drac, sample.drac) == SafetyCategory::Safe
        && categorize(SsmKind::Ittc, sample.ittc) == SafetyCategory::Safe
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsmConfigId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl SsmConfigId {
    pub const ALL: [SsmConfigId; 7] = [
        SsmConfigId::A,
        SsmConfigId::B,
        SsmConfigId::C,
        SsmConfigId::D,
        SsmConfigId::E,
        SsmConfigId::F,
        SsmConfigId::G,
    ];

    pub fn letter(self) -> char {
        match self {
            SsmConfigId::A => 'a',
            SsmConfigId::B => 'b',
            SsmConfigId::C => 'c',
            SsmConfigId::D => 'd',
            SsmConfigId::E => 'e',
            SsmConfigId::F => 'f',
            SsmConfigId::G => 'g',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        SsmConfigId::ALL.into_iter().find(|id| id.letter() == c.to_ascii_lowercase())
    }
}

impl fmt::Display for SsmConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridWeights {
    pub pet: f64,
    pub drac: f64,
    pub ittc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SsmMode {
    Grid(GridWeights),
    Autoencoder(AeVariant),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsmWeights {
    pub config_id: SsmConfigId,
    pub mode: SsmMode,
}

impl SsmWeights {
    pub fn table(config_id: SsmConfigId) -> Self {
        let grid = |pet, drac, ittc| SsmMode::Grid(GridWeights { pet, drac, ittc });
        let mode = match config_id {
            SsmConfigId::A => grid(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
            SsmConfigId::B => grid(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
            SsmConfigId::C => grid(1.0, 0.0, 0.0),
            SsmConfigId::D => grid(0.0, 1.0, 0.0),
            SsmConfigId::E => grid(0.0, 0.0, 1.0),
            SsmConfigId::F => SsmMode::Autoencoder(AeVariant::Linear),
            SsmConfigId::G => SsmMode::Autoencoder(AeVariant::Tanh),
        };
        SsmWeights { config_id, mode }
    }

    /// Grid configurations without a PET weight cannot rate PL/PF vehicles.
    pub fn evaluates_parallel(&self) -> bool {
        match self.mode {
            SsmMode::Grid(w) => w.pet > 0.0,
            SsmMode::Autoencoder(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionalWeights {
    pub config_id: u8,
    pub lv: f64,
    pub fv: f64,
    pub pl: f64,
    pub pf: f64,
}

impl PositionalWeights {
    pub fn table(config_id: u8) -> Result<Self> {
        let (lv, fv, pl, pf) = match config_id {
            1 => (1.0, 1.0, 0.0, 0.0),
            2 => (1.0, 1.0, 1.0, 1.0),
            3 => (1.0, 1.0, 2.0, 2.0),
            _ => return Err(Error::InvalidConfig(format!("unknown positional config {config_id}"))),
        };
        Ok(PositionalWeights { config_id, lv, fv, pl, pf })
    }

    pub fn weight(&self, position: RelativePosition) -> f64 {
        match position {
            RelativePosition::LV => self.lv,
            RelativePosition::FV => self.fv,
            RelativePosition::PL => self.pl,
            RelativePosition::PF => self.pf,
        }
    }
}

/// A positional/SSM configuration pair such as `2a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelId {
    pub positional: u8,
    pub ssm: SsmConfigId,
}

impl ModelId {
    pub fn new(positional: u8, ssm: SsmConfigId) -> Result<Self> {
        PositionalWeights::table(positional)?;
        Ok(ModelId { positional, ssm })
    }

    /// The twelve models 1a–3g built from configurations a, b, f and g.
    pub fn grid() -> Vec<ModelId> {
        let mut out = Vec::new();
        for positional in 1..=3 {
            for ssm in [SsmConfigId::A, SsmConfigId::B, SsmConfigId::F, SsmConfigId::G] {
                out.push(ModelId { positional, ssm });
            }
        }
        out
    }
}

impl Ord for ModelId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.positional, self.ssm).cmp(&(other.positional, other.ssm))
    }
}

impl PartialOrd for ModelId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.positional, self.ssm)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad model id `{s}` (expected e.g. 2a)"));
        let mut chars = s.trim().chars();
        let (Some(p), Some(c), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(bad());
        };
        let positional = p.to_digit(10).ok_or_else(bad)? as u8;
        let ssm = SsmConfigId::from_letter(c).ok_or_else(bad)?;
        ModelId::new(positional, ssm).map_err(|_| bad())
    }
}

impl TryFrom<String> for ModelId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelId> for String {
    fn from(id: ModelId) -> String {
        id.to_string()
    }
}

/// Weighted sum of category values. `None` when the configuration has no
/// usable measure for the sample's position (PET-free configs on PL/PF).
pub fn grid_risk(sample: &SsmSample, w: &GridWeights) -> Option<f64> {
    if sample.position.is_parallel() && w.pet <= 0.0 {
        return None;
    }
    let mut risk = 0.0;
    for (kind, weight, value) in
        [(SsmKind::Pet, w.pet, sample.pet), (SsmKind::Drac, w.drac, sample.drac), (SsmKind::Ittc, w.ittc, sample.ittc)]
    {
        if weight > 0.0 {
            risk += weight * categorize(kind, value).value();
        }
    }
    Some(risk)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationScales {
    pub pet: f64,
    pub drac: f64,
    pub ittc: f64,
}

impl Default for NormalizationScales {
    fn default() -> Self {
        NormalizationScales { pet: 1.0, drac: 5.0, ittc: 1.0 }
    }
}

/// Maps (PET, DRAC, ITTC) into [0,1]³ with larger meaning riskier; the fully
/// safe limit (PET = ∞, DRAC = ITTC = 0) maps to the origin.
pub fn normalize_ssm(sample: &SsmSample, scales: &NormalizationScales) -> [f64; 3] {
    let n_pet = if sample.pet.is_infinite() { 0.0 } else { 1.0 - (sample.pet.max(0.0) / scales.pet).tanh() };
    [n_pet, (sample.drac.max(0.0) / scales.drac).tanh(), (sample.ittc.max(0.0) / scales.ittc).tanh()]
}

/// Per-position risk of one frame; PL/PF hold the maximum over vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentRisks {
    pub lv: Option<f64>,
    pub fv: Option<f64>,
    pub pl: Option<f64>,
    pub pf: Option<f64>,
}

impl ComponentRisks {
    pub fn get(&self, position: RelativePosition) -> Option<f64> {
        match position {
            RelativePosition::LV => self.lv,
            RelativePosition::FV => self.fv,
            RelativePosition::PL => self.pl,
            RelativePosition::PF => self.pf,
        }
    }

    fn slot(&mut self, position: RelativePosition) -> &mut Option<f64> {
        match position {
            RelativePosition::LV => &mut self.lv,
            RelativePosition::FV => &mut self.fv,
            RelativePosition::PL => &mut self.pl,
            RelativePosition::PF => &mut self.pf,
        }
    }

    /// Keeps the larger of the stored and the new risk.
    pub fn merge_max(&mut self, position: RelativePosition, risk: f64) {
        let slot = self.slot(position);
        *slot = Some(slot.map_or(risk, |r| r.max(risk)));
    }
}

/// Weight-normalized average over the positions with a defined risk.
pub fn aggregate_ego_risk(components: &ComponentRisks, pw: &PositionalWeights) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for position in RelativePosition::ALL {
        if let Some(r) = components.get(position) {
            let w = pw.weight(position);
            num += w * r;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn default_min_series_seconds() -> f64 {
    3.0
}

/// Declarative model configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub ssm_config: SsmConfigId,
    pub positional_config: u8,
    pub normalization: NormalizationScales,
    pub autoencoder: AeHyperparameters,
    #[serde(flatten)]
    pub neighbors: NeighborConfig,
    #[serde(default = "default_min_series_seconds")]
    pub min_series_seconds: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ssm_config: SsmConfigId::A,
            positional_config: 2,
            normalization: NormalizationScales::default(),
            autoencoder: AeHyperparameters::default(),
            neighbors: NeighborConfig::default(),
            min_series_seconds: default_min_series_seconds(),
        }
    }
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        PositionalWeights::table(self.positional_config)?;
        let n = &self.normalization;
        let positive = [n.pet, n.drac, n.ittc, self.neighbors.horizon, self.neighbors.gap_epsilon];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("normalization scales, horizon and gap epsilon must be positive".into()));
        }
        if !(self.neighbors.vy_min >= 0.0) || !(self.min_series_seconds >= 0.0) {
            return Err(Error::InvalidConfig("vy_min and min_series_seconds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn model_id(&self) -> Result<ModelId> {
        ModelId::new(self.positional_config, self.ssm_config)
    }

    /// Frames needed for `min_series_seconds` at `frame_rate`.
    pub fn min_series_frames(&self, frame_rate: f64) -> usize {
        (self.min_series_seconds * frame_rate).round().max(3.0) as usize
    }
}

/// A fully resolved risk model: weights plus, for f/g, a trained autoencoder.
#[derive(Debug, Clone)]
pub struct RiskModel {
    pub id: ModelId,
    pub ssm: SsmWeights,
    pub positional: PositionalWeights,
    pub scales: NormalizationScales,
    ae: Option<Autoencoder>,
}

impl RiskModel {
    pub fn new(id: ModelId, scales: NormalizationScales, ae: Option<Autoencoder>) -> Result<Self> {
        let ssm = SsmWeights::table(id.ssm);
        let ae = match (ssm.mode, ae) {
            (SsmMode::Grid(_), _) => None,
            (SsmMode::Autoencoder(v), Some(ae)) if ae.variant() == v => Some(ae),
            (SsmMode::Autoencoder(v), Some(ae)) => {
                return Err(Error::InvalidConfig(format!(
                    "model {id} needs a {v:?} autoencoder, got {:?}",
                    ae.variant()
                )))
            }
            (SsmMode::Autoencoder(v), None) => {
                return Err(Error::InvalidConfig(format!("model {id} needs a trained {v:?} autoencoder")))
            }
        };
        Ok(RiskModel { id, ssm, positional: PositionalWeights::table(id.positional)?, scales, ae })
    }

    pub fn autoencoder(&self) -> Option<&Autoencoder> {
        self.ae.as_ref()
    }

    /// Risk of a single neighbor, `None` when the model cannot rate it.
    pub fn neighbor_risk(&self, sample: &SsmSample) -> Option<f64> {
        match (&self.ssm.mode, &self.ae) {
            (SsmMode::Grid(w), _) => grid_risk(sample, w),
            (SsmMode::Autoencoder(_), Some(ae)) => Some(ae.risk(&normalize_ssm(sample, &self.scales))),
            (SsmMode::Autoencoder(_), None) => None,
        }
    }

    pub fn components(&self, samples: &[SsmSample]) -> ComponentRisks {
        let mut components = ComponentRisks::default();
        for s in samples {
            if let Some(r) = self.neighbor_risk(s) {
                components.merge_max(s.position, r);
            }
        }
        components
    }
}

/// SSM samples of every classified neighbor of one ego at one frame.
pub fn frame_samples(
    vehicles: &[VehicleAt],
    layout: &crate::model::LaneLayout,
    ego_id: u32,
    cfg: &NeighborConfig,
) -> Result<Vec<SsmSample>> {
    let set = classify_in_snapshot(vehicles, layout, ego_id, cfg)?;
    set.entries().iter().map(|e| ssm_for_entry(vehicles, ego_id, e, cfg)).collect()
}

/// SSM samples along an ego's whole track, computed once and reusable
/// across risk models.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSamples {
    pub recording_id: String,
    pub ego_id: u32,
    pub frame_rate: f64,
    pub frames: Vec<i64>,
    pub samples: Vec<Vec<SsmSample>>,
}

pub fn ego_samples(scene: &Scene, ego_id: u32, cfg: &NeighborConfig) -> Result<EgoSamples> {
    let track = scene.track(ego_id)?;
    let mut frames = Vec::with_capacity(track.len());
    let mut samples = Vec::with_capacity(track.len());
    for state in track.states() {
        frames.push(state.frame);
        samples.push(frame_samples(&scene.snapshot(state.frame), scene.layout(), ego_id, cfg)?);
    }
    Ok(EgoSamples {
        recording_id: scene.recording_id().to_string(),
        ego_id,
        frame_rate: scene.frame_rate(),
        frames,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSeries {
    pub model: ModelId,
    pub recording_id: String,
    pub ego_id: u32,
    pub frame_rate: f64,
    pub frames: Vec<i64>,
    pub overall: Vec<f64>,
    pub components: Vec<ComponentRisks>,
}

impl RiskSeries {
    pub fn len(&self) -> usize {
        self.overall.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overall.is_empty()
    }
}

pub fn risk_from_samples(model: &RiskModel, ego: &EgoSamples) -> RiskSeries {
    let components: Vec<ComponentRisks> = ego.samples.iter().map(|s| model.components(s)).collect();
    let overall = components.iter().map(|c| aggregate_ego_risk(c, &model.positional)).collect();
    RiskSeries {
        model: model.id,
        recording_id: ego.recording_id.clone(),
        ego_id: ego.ego_id,
        frame_rate: ego.frame_rate,
        frames: ego.frames.clone(),
        overall,
        components,
    }
}

pub fn risk_timeseries(scene: &Scene, ego_id: u32, model: &RiskModel, config: &ModelConfig) -> Result<RiskSeries> {
    let track = scene.track(ego_id)?;
    let min = config.min_series_frames(scene.frame_rate());
    if track.len() < min {
        return Err(Error::TrackTooShort { vehicle_id: ego_id, frames: track.len(), min });
    }
    Ok(risk_from_samples(model, &ego_samples(scene, ego_id, &config.neighbors)?))
}

/// Long-format risk table: one row per ego and frame, empty cells for
/// positions without a rated neighbor.
pub fn write_risk_csv<'a, W: std::io::Write>(
    output: W,
    series: impl IntoIterator<Item = &'a RiskSeries>,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(["model", "recording_id", "ego_id", "frame", "overall", "lv", "fv", "pl", "pf"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for s in series {
        for ((frame, overall), c) in s.frames.iter().zip(&s.overall).zip(&s.components) {
            writer.write_record([
                s.model.to_string(),
                s.recording_id.clone(),
                s.ego_id.to_string(),
                frame.to_string(),
                overall.to_string(),
                opt(c.lv),
                opt(c.fv),
                opt(c.pl),
                opt(c.pf),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Normalized SSM vectors of every neighbor pair whose three measures are all
/// Safe, over every vehicle of every scene. Order is deterministic.
pub fn safe_training_vectors(
    scenes: &[Scene],
    cfg: &NeighborConfig,
    scales: &NormalizationScales,
) -> Result<Vec<[f64; 3]>> {
    let jobs: Vec<(&Scene, u32)> = scenes.iter().flat_map(|s| s.tracks().keys().map(move |&id| (s, id))).collect();
    let per_vehicle: Vec<Vec<[f64; 3]>> = jobs
        .par_iter()
        .map(|&(scene, id)| -> Result<Vec<[f64; 3]>> {
            let ego = ego_samples(scene, id, cfg)?;
            Ok(ego.samples.iter().flatten().filter(|s| is_all_safe(s)).map(|s| normalize_ssm(s, scales)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_vehicle.into_iter().flatten().collect())
}
