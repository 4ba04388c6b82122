use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use ssmrisk::ingest::{exclude_truck_lane_changes, write_generic};
use ssmrisk::model::{Direction, Scene, VehicleClass};
use ssmrisk::risk::{
    ae_train, risk_timeseries, safe_training_vectors, write_risk_csv, AeVariant, Autoencoder, ModelConfig, ModelId,
    RiskModel, RiskSeries, SsmMode, SsmWeights,
};
use ssmrisk::stats::{
    compare_configs, evaluate_corpus, read_results_csv, write_comparison_csv, write_comparison_long_csv,
    write_results_csv, CorrelationResult, EgoFailure, Summary,
};
use ssmrisk::synth::{generate, golden_corpus, responsive_corpus, CutInParams, ReactionRule, ScenarioSpec};

use crate::config::{usage, EvalRun, InputSpec, RiskRun, SynthKind};
use crate::input::load_scenes;

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes `{recording}.csv` and `{recording}.layout.toml` into `dir`.
fn write_scene(dir: &Path, scene: &Scene) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("{}.csv", scene.recording_id()));
    let mut w = create(&path)?;
    write_generic(scene, &mut w)?;
    w.flush()?;
    let layout = dir.join(format!("{}.layout.toml", scene.recording_id()));
    fs::write(&layout, scene.layout().to_toml_string()).with_context(|| format!("writing {}", layout.display()))?;
    Ok(path)
}

fn warn_parallel(model: ModelId) {
    if !SsmWeights::table(model.ssm).evaluates_parallel() {
        eprintln!(
            "warning: model {model}: configuration {} has no PET weight and cannot evaluate parallel vehicles; \
             PL/PF neighbors are ignored",
            model.ssm
        );
    }
}

fn variant_name(v: AeVariant) -> &'static str {
    match v {
        AeVariant::Linear => "linear",
        AeVariant::Tanh => "tanh",
    }
}

/// Loads the autoencoder from `path`, or trains one on the safe frames of
/// `scenes` and stores it in `out`.
fn resolve_ae(
    variant: AeVariant,
    path: Option<&Path>,
    scenes: &[Scene],
    cfg: &ModelConfig,
    out: &Path,
) -> anyhow::Result<Autoencoder> {
    if let Some(path) = path {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let ae = Autoencoder::read_from(std::io::BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?;
        if ae.variant() != variant {
            return Err(usage(format!("{} holds a {:?} autoencoder, need {variant:?}", path.display(), ae.variant())));
        }
        return Ok(ae);
    }
    let vectors = safe_training_vectors(scenes, &cfg.neighbors, &cfg.normalization)?;
    let ae = ae_train(&vectors, variant, &cfg.autoencoder)?;
    let path = out.join(format!("ae_{}.bin", variant_name(variant)));
    let mut w = create(&path)?;
    ae.write_to(&mut w)?;
    w.flush()?;
    eprintln!(
        "trained {} autoencoder on {} safe samples (final loss {:.6}) -> {}",
        variant_name(variant),
        vectors.len(),
        ae.meta().final_loss,
        path.display()
    );
    Ok(ae)
}

fn build_model(
    id: ModelId,
    ae_path: impl Fn(AeVariant) -> Option<PathBuf>,
    cache: &mut BTreeMap<&'static str, Autoencoder>,
    scenes: &[Scene],
    cfg: &ModelConfig,
    out: &Path,
) -> anyhow::Result<RiskModel> {
    let ae = match SsmWeights::table(id.ssm).mode {
        SsmMode::Grid(_) => None,
        SsmMode::Autoencoder(v) => {
            let key = variant_name(v);
            if !cache.contains_key(key) {
                let ae = resolve_ae(v, ae_path(v).as_deref(), scenes, cfg, out)?;
                cache.insert(key, ae);
            }
            Some(cache[key].clone())
        }
    };
    Ok(RiskModel::new(id, cfg.normalization, ae)?)
}

fn prepared_scenes(input: &InputSpec) -> anyhow::Result<Vec<Scene>> {
    Ok(load_scenes(input)?.iter().map(exclude_truck_lane_changes).collect())
}

pub fn ingest(input: &InputSpec, write_dir: Option<&Path>) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    let scenes = load_scenes(input)?;
    if let Some(dir) = write_dir {
        ensure_dir(dir)?;
    }
    for scene in &scenes {
        let kept = exclude_truck_lane_changes(scene);
        let count = |class| scene.tracks().values().filter(|t| t.class() == class).count();
        let range = scene.frame_range().map_or("none".to_string(), |(a, b)| format!("{a}..={b}"));
        writeln!(
            stdout,
            "recording {}: {} Hz, {:.2} s, frames {range}",
            scene.recording_id(),
            scene.frame_rate(),
            scene.duration_seconds()
        )?;
        writeln!(
            stdout,
            "  tracks: {} (cars {}, trucks {}); lane-changing trucks excluded: {}",
            scene.tracks().len(),
            count(VehicleClass::Car),
            count(VehicleClass::Truck),
            scene.tracks().len() - kept.tracks().len()
        )?;
        for lane in scene.layout().lanes() {
            let dir = match lane.direction {
                Direction::PositiveX => "+x",
                Direction::NegativeX => "-x",
            };
            writeln!(stdout, "  lane {}: [{}, {}] {dir}", lane.id, lane.lower, lane.upper)?;
        }
        if let Some(dir) = write_dir {
            let path = write_scene(dir, scene)?;
            writeln!(stdout, "  written to {}", path.display())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EgoRiskSummary {
    recording_id: String,
    ego_id: u32,
    frames: usize,
    peak_risk: f64,
    mean_risk: f64,
}

#[derive(Serialize)]
struct Skipped {
    recording_id: String,
    ego_id: u32,
    reason: String,
}

#[derive(Serialize)]
struct RiskReport {
    model: ModelId,
    evaluates_parallel: bool,
    egos: Vec<EgoRiskSummary>,
    skipped: Vec<Skipped>,
}

pub fn risk(run: &RiskRun) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    warn_parallel(run.model_id);
    let scenes = prepared_scenes(&run.input)?;
    ensure_dir(&run.out)?;
    let model = build_model(run.model_id, |_| run.ae.clone(), &mut BTreeMap::new(), &scenes, &run.model, &run.out)?;
    let egos: Vec<(&Scene, u32)> = scenes
        .iter()
        .flat_map(|s| {
            s.tracks()
                .values()
                .filter(|t| t.class() == VehicleClass::Car && run.ego.is_none_or(|e| e == t.id()))
                .map(move |t| (s, t.id()))
        })
        .collect();
    if egos.is_empty() {
        return Err(ssmrisk::Error::NoEgoCandidates.into());
    }
    let outcomes: Vec<ssmrisk::Result<RiskSeries>> =
        egos.par_iter().map(|&(scene, id)| risk_timeseries(scene, id, &model, &run.model)).collect();

    let mut series = Vec::new();
    let mut skipped = Vec::new();
    for (&(scene, id), outcome) in egos.iter().zip(outcomes) {
        match outcome {
            Ok(s) => series.push(s),
            Err(e @ ssmrisk::Error::TrackTooShort { .. }) => {
                eprintln!("warning: {} ego {id}: {e}; skipped", scene.recording_id());
                skipped.push(Skipped { recording_id: scene.recording_id().into(), ego_id: id, reason: e.to_string() });
            }
            Err(e) => return Err(e).with_context(|| format!("{} ego {id}", scene.recording_id())),
        }
    }

    let csv_path = run.out.join(format!("risk_{}.csv", run.model_id));
    let mut w = create(&csv_path)?;
    write_risk_csv(&mut w, &series)?;
    w.flush()?;
    let report = RiskReport {
        model: run.model_id,
        evaluates_parallel: model.ssm.evaluates_parallel(),
        egos: series
            .iter()
            .map(|s| EgoRiskSummary {
                recording_id: s.recording_id.clone(),
                ego_id: s.ego_id,
                frames: s.len(),
                peak_risk: s.overall.iter().copied().fold(0.0, f64::max),
                mean_risk: s.overall.iter().sum::<f64>() / s.len().max(1) as f64,
            })
            .collect(),
        skipped,
    };
    write_json(&run.out.join(format!("risk_{}.json", run.model_id)), &report)?;
    writeln!(
        stdout,
        "model {}: {} ego series written to {} ({} skipped)",
        run.model_id,
        report.egos.len(),
        csv_path.display(),
        report.skipped.len()
    )?;
    Ok(())
}

#[derive(Serialize)]
struct EvalReport<'a> {
    significance: f64,
    max_lag_seconds: f64,
    scenes: usize,
    summaries: Vec<&'a Summary>,
    failures: &'a [EgoFailure],
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.3}"))
}

pub fn eval(run: &EvalRun) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    for m in &run.models {
        warn_parallel(*m);
    }
    let scenes = prepared_scenes(&run.input)?;
    ensure_dir(&run.out)?;
    let mut cache = BTreeMap::new();
    let ae_path = |v: AeVariant| match v {
        AeVariant::Linear => run.ae_linear.clone(),
        AeVariant::Tanh => run.ae_tanh.clone(),
    };
    let models = run
        .models
        .iter()
        .map(|&id| build_model(id, ae_path, &mut cache, &scenes, &run.model, &run.out))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let evaluation = evaluate_corpus(&scenes, &models, &run.model, &run.eval)?;
    for f in &evaluation.failures {
        eprintln!("warning: model {} {} ego {}: {}", f.model, f.recording_id, f.ego_id, f.reason);
    }
    let mut w = create(&run.out.join("results.csv"))?;
    write_results_csv(&mut w, evaluation.results.values().flatten())?;
    w.flush()?;
    let report = EvalReport {
        significance: run.eval.significance,
        max_lag_seconds: run.eval.max_lag_seconds,
        scenes: scenes.len(),
        summaries: evaluation.summaries.values().collect(),
        failures: &evaluation.failures,
    };
    write_json(&run.out.join("summary.json"), &report)?;

    writeln!(stdout, "model  evaluated  significant  fraction  mean_rho  std_rho  failed")?;
    for s in evaluation.summaries.values() {
        writeln!(
            stdout,
            "{:<6} {:>9} {:>12} {:>9.3} {:>9} {:>8} {:>7}",
            s.model.to_string(),
            s.evaluated,
            s.significant,
            s.significant_fraction,
            fmt_opt(s.mean_rho),
            fmt_opt(s.std_rho),
            s.failed
        )?;
    }
    Ok(())
}

pub fn compare(inputs: &[PathBuf], significance: f64, out: &Path) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    if !(significance > 0.0 && significance < 1.0) {
        return Err(usage(format!("significance must lie in (0, 1), got {significance}")));
    }
    let mut results: BTreeMap<ModelId, Vec<CorrelationResult>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for path in inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let rows =
            read_results_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        for r in rows {
            if !seen.insert((r.model, r.recording_id.clone(), r.ego_id)) {
                return Err(usage(format!(
                    "{}: model {} has more than one result for {} ego {}",
                    path.display(),
                    r.model,
                    r.recording_id,
                    r.ego_id
                )));
            }
            results.entry(r.model).or_default().push(r);
        }
    }
    if results.len() < 2 {
        return Err(usage(format!("compare needs results for at least two models, found {}", results.len())));
    }
    let comparisons = compare_configs(&results, significance)?;
    let models: Vec<ModelId> = results.keys().copied().collect();
    ensure_dir(out)?;
    let mut w = create(&out.join("comparison.csv"))?;
    write_comparison_csv(&mut w, &models, &comparisons)?;
    w.flush()?;
    let mut w = create(&out.join("comparison_long.csv"))?;
    write_comparison_long_csv(&mut w, &comparisons)?;
    w.flush()?;

    write!(stdout, "{:>4}", "")?;
    for m in &models {
        write!(stdout, " {:>3}", m.to_string())?;
    }
    writeln!(stdout)?;
    for row in &models {
        write!(stdout, "{:>4}", row.to_string())?;
        for col in &models {
            let cell = if row == col {
                "-".to_string()
            } else {
                comparisons
                    .iter()
                    .find(|c| c.row == *row && c.col == *col)
                    .map_or(String::new(), |c| c.verdict.to_string())
            };
            write!(stdout, " {cell:>3}")?;
        }
        writeln!(stdout)?;
    }
    Ok(())
}

pub struct SynthRequest {
    pub kind: Option<SynthKind>,
    pub delay: Option<f64>,
    pub duration: Option<f64>,
    pub spec: Option<PathBuf>,
    pub golden: bool,
    pub responsive: Option<usize>,
    pub seed: u64,
}

fn scenario(kind: SynthKind, delay: Option<f64>, duration: Option<f64>) -> ScenarioSpec {
    let (mut spec, name) = match kind {
        SynthKind::CutIn => {
            let mut p =
                CutInParams { reaction: delay.map(|d| ReactionRule::new(0.1, d, 3.0)), ..CutInParams::default() };
            if let Some(d) = duration {
                p.duration = d;
            }
            (ScenarioSpec::cut_in(&p), "cutin")
        }
        SynthKind::CarFollowing => (ScenarioSpec::car_following(25.0, 30.0, duration.unwrap_or(10.0)), "car_following"),
        SynthKind::Tailgate => (ScenarioSpec::tailgate(30.0, 0.3, duration.unwrap_or(10.0)), "tailgate"),
        SynthKind::Overtake => (ScenarioSpec::overtake(duration.unwrap_or(10.0)), "overtake"),
        SynthKind::Empty => (ScenarioSpec::empty(duration.unwrap_or(10.0)), "empty"),
    };
    spec.recording_id = name.to_string();
    spec
}

pub fn synth(req: &SynthRequest, out: &Path) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    if req.delay.is_some() && req.kind != Some(SynthKind::CutIn) {
        return Err(usage("--delay applies to --kind cutin only"));
    }
    ensure_dir(out)?;
    let scenes: Vec<Scene> = if let Some(path) = &req.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec = ScenarioSpec::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        vec![generate(&spec, req.seed)?]
    } else if req.golden {
        let cases = golden_corpus(req.seed)?;
        let mut w = create(&out.join("expected.csv"))?;
        w.write_all(b"recording_id,ego_id,frame,neighbor_id,position,pet,ittc,drac\n")?;
        for case in &cases {
            for e in &case.expected {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    case.scene.recording_id(),
                    case.ego_id,
                    e.frame,
                    e.neighbor_id,
                    e.position,
                    e.pet,
                    e.ittc,
                    e.drac
                )?;
            }
        }
        w.flush()?;
        cases.into_iter().map(|c| c.scene).collect()
    } else if let Some(n) = req.responsive {
        if n == 0 {
            return Err(usage("--responsive needs at least one scene"));
        }
        responsive_corpus(n, req.seed)?
    } else if let Some(kind) = req.kind {
        vec![generate(&scenario(kind, req.delay, req.duration), req.seed)?]
    } else {
        return Err(usage("synth needs one of --kind, --spec, --golden or --responsive"));
    };
    for scene in &scenes {
        let path = write_scene(out, scene)?;
        writeln!(stdout, "{} ({} tracks, {:.2} s)", path.display(), scene.tracks().len(), scene.duration_seconds())?;
    }
    Ok(())
}
