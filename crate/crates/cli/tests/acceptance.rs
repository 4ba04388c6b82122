//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use ssmrisk::model::{FrameState, VehicleAt, VehicleClass};
use ssmrisk::neighbors::{classify_neighbors, encroachment_point, NeighborConfig, RelativePosition};
use ssmrisk::risk::{
    ae_train, categorize, grid_risk, normalize_ssm, risk_timeseries, AeHyperparameters, AeVariant, Autoencoder,
    ModelConfig, ModelId, NormalizationScales, RiskModel, SafetyCategory, SsmConfigId, SsmKind, SsmMode, SsmWeights,
    PARAMS,
};
use ssmrisk::ssm::{ssm_for_entry, SsmSample};
use ssmrisk::stats::{best_lag, evaluate_ego, spearman, wilcoxon_signed_rank, EvalConfig};
use ssmrisk::synth::{
    generate, golden_corpus, three_lane_layout, AccelSegment, CutInParams, ReactionRule, ScenarioKind, ScenarioSpec,
    VehicleSpec,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn ssm_exactness() -> Check {
    let start = Instant::now();
    let cfg = NeighborConfig::default();
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        for case in golden_corpus(seed).map_err(|e| e.to_string())? {
            let mut got = Vec::new();
            for st in case.scene.track(case.ego_id).map_err(|e| e.to_string())?.states() {
                let set = classify_neighbors(&case.scene, case.ego_id, st.frame, &cfg).map_err(|e| e.to_string())?;
                let snapshot = case.scene.snapshot(st.frame);
                for entry in set.entries() {
                    got.push(ssm_for_entry(&snapshot, case.ego_id, &entry, &cfg).map_err(|e| e.to_string())?);
                }
            }
            ensure(got.len() == case.expected.len(), || {
                format!("{}: {} samples, expected {}", case.name, got.len(), case.expected.len())
            })?;
            for (g, e) in got.iter().zip(&case.expected) {
                ensure((g.frame, g.neighbor_id, g.position) == (e.frame, e.neighbor_id, e.position), || {
                    format!("{}: neighbor mismatch at frame {}", case.name, g.frame)
                })?;
                for (a, b) in [(g.pet, e.pet), (g.ittc, e.ittc), (g.drac, e.drac)] {
                    let err = (a - b).abs();
                    worst = worst.max(err);
                    ensure(err <= 1e-9, || format!("{} frame {}: {a} vs {b}", case.name, g.frame))?;
                }
                compared += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{compared} samples, max abs error {worst:.1e}"))
}

fn vehicle(id: u32, x: f64, y: f64, vx: f64, vy: f64, lane_id: i32) -> VehicleAt {
    VehicleAt {
        id,
        class: VehicleClass::Car,
        width: 1.8,
        length: 4.5,
        state: FrameState { frame: 0, x, y, vx, vy, ax: 0.0, ay: 0.0, lane_id },
    }
}

fn encroachment_oracle() -> Check {
    let layout = three_lane_layout();
    let cfg = NeighborConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 1500 {
        let ego = vehicle(1, 0.0, rng.random_range(3.6..6.9), rng.random_range(15.0..35.0), 0.0, 2);
        let (lane, y, boundary, sign) = if rng.random_bool(0.5) {
            (3, rng.random_range(7.05..10.4), 7.0, -1.0)
        } else {
            (1, rng.random_range(0.1..3.45), 3.5, 1.0)
        };
        let vy = sign * rng.random_range(0.1..3.0);
        let other = vehicle(2, rng.random_range(-50.0..50.0), y, rng.random_range(15.0..35.0), vy, lane);
        let Some(enc) = encroachment_point(&ego, &other, &layout, &cfg).map_err(|e| e.to_string())? else {
            continue;
        };
        let dt = 1e-3;
        let (mut t, mut yy) = (0.0, y);
        while (yy - boundary) * sign < 0.0 {
            t += dt;
            yy = y + vy * t;
        }
        let err = (enc.t_cross - t).abs();
        worst = worst.max(err);
        ensure(err <= 0.01, || format!("t_cross {} vs simulated {t}", enc.t_cross))?;
        checked += 1;
    }
    Ok(format!("{checked} configurations, max |dt| {:.2} ms", worst * 1e3))
}

/// Independent reading of the threshold table: half-open Conflict bands.
fn expected_category(kind: SsmKind, v: f64) -> SafetyCategory {
    let (safe, critical) = match kind {
        SsmKind::Pet => (v >= 1.0, v <= 0.4),
        SsmKind::Drac => (v <= 3.3, v >= 5.0),
        SsmKind::Ittc => (v <= 1.0 / 1.5, v >= 1.0),
    };
    match (safe, critical) {
        (true, false) => SafetyCategory::Safe,
        (false, true) => SafetyCategory::Critical,
        (false, false) => SafetyCategory::Conflict,
        (true, true) => unreachable!("overlapping bands"),
    }
}

fn category_partition() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (kind, hi, larger_is_riskier) in
        [(SsmKind::Pet, 3.0, false), (SsmKind::Drac, 10.0, true), (SsmKind::Ittc, 2.0, true)]
    {
        let mut values: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..hi)).collect();
        values.extend([0.4, 1.0, 3.3, 5.0, 1.0 / 1.5, 0.0]);
        for v in &values {
            ensure(categorize(kind, *v) == expected_category(kind, *v), || format!("{kind:?} {v}"))?;
        }
        values.sort_by(f64::total_cmp);
        if !larger_is_riskier {
            values.reverse();
        }
        let cats: Vec<SafetyCategory> = values.iter().map(|v| categorize(kind, *v)).collect();
        ensure(cats.windows(2).all(|w| w[0] <= w[1]), || format!("{kind:?} not monotone"))?;
    }
    Ok("3 x 100000 values".into())
}

fn sample(position: RelativePosition, pet: f64, drac: f64, ittc: f64) -> SsmSample {
    SsmSample { neighbor_id: 2, frame: 0, position, pet, ittc, drac, gap_clamped: false }
}

fn grid(id: SsmConfigId) -> ssmrisk::risk::GridWeights {
    match SsmWeights::table(id).mode {
        SsmMode::Grid(w) => w,
        SsmMode::Autoencoder(_) => unreachable!(),
    }
}

fn random_scene(rng: &mut impl Rng) -> ScenarioSpec {
    let lanes = [1.75, 5.25, 8.75];
    let mut vehicles = Vec::new();
    for id in 1..=6 {
        let mut v = VehicleSpec::car(
            id,
            rng.random_range(-60.0..60.0) + f64::from(id) * 0.01,
            lanes[rng.random_range(0..3)] + rng.random_range(-0.3..0.3),
            rng.random_range(15.0..35.0),
        );
        v.vy0 = rng.random_range(-0.3..0.3);
        v.profile = vec![AccelSegment { start: rng.random_range(0.0..3.0), ax: rng.random_range(-4.0..2.0), ay: 0.0 }];
        vehicles.push(v);
    }
    ScenarioSpec::new(ScenarioKind::Custom, 4.0, vehicles)
}

fn grid_fusion() -> Check {
    let (a, b) = (grid(SsmConfigId::A), grid(SsmConfigId::B));
    let cases = [
        // (Safe, Conflict, Safe)
        (sample(RelativePosition::LV, 2.0, 4.0, 0.1), 1.0 / 6.0, 1.0 / 12.0),
        // (Critical, Critical, Critical)
        (sample(RelativePosition::FV, 0.1, 6.0, 1.5), 1.0, 1.0),
        // (Conflict, Safe, Critical)
        (sample(RelativePosition::PL, 0.7, 1.0, 2.0), 0.5, 1.0 / 3.0 + 1.0 / 6.0),
        // (Safe, Safe, Conflict)
        (sample(RelativePosition::PF, 5.0, 0.0, 0.8), 1.0 / 6.0, 1.0 / 12.0),
    ];
    for (s, ra, rb) in cases {
        let (ga, gb) = (grid_risk(&s, &a).unwrap(), grid_risk(&s, &b).unwrap());
        ensure((ga - ra).abs() < 1e-12 && (gb - rb).abs() < 1e-12, || format!("{s:?}: {ga}, {gb}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = ModelConfig::default();
    let models: Vec<RiskModel> = (1..=3)
        .flat_map(|p| [SsmConfigId::A, SsmConfigId::B, SsmConfigId::C, SsmConfigId::D, SsmConfigId::E].map(|s| (p, s)))
        .map(|(p, s)| RiskModel::new(ModelId::new(p, s).unwrap(), cfg.normalization, None).unwrap())
        .collect();
    let mut frames = 0;
    for _ in 0..40 {
        let scene = generate(&random_scene(&mut rng), 0).map_err(|e| e.to_string())?;
        for m in &models {
            let series = risk_timeseries(&scene, 1, m, &cfg).map_err(|e| e.to_string())?;
            ensure(series.overall.iter().all(|r| (0.0..=1.0).contains(r)), || format!("{} out of range", m.id))?;
            frames += series.len();
        }
    }
    Ok(format!("4 hand cases, {frames} randomized frames in [0, 1]"))
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for variant in [AeVariant::Linear, AeVariant::Tanh] {
        for _ in 0..10 {
            let ae = Autoencoder::initialized(variant, &mut rng);
            let batch: Vec<[f64; 3]> = (0..32).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let (_, grad) = ae.loss_and_gradient(&batch);
            for i in 0..PARAMS {
                let at = |delta: f64| {
                    let mut p = *ae.params();
                    p[i] += delta;
                    Autoencoder::from_params(variant, p).loss(&batch)
                };
                let numeric = (at(1e-5) - at(-1e-5)) / 2e-5;
                let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                ensure(rel <= 1e-4, || format!("{variant:?} param {i}: {} vs {numeric}", grad[i]))?;
            }
        }
    }
    Ok(format!("2 variants x 10 points, max rel error {worst:.1e}"))
}

fn ae_ordering() -> Check {
    let start = Instant::now();
    let scales = NormalizationScales::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut safe = || {
        let pet = if rng.random_bool(0.2) { f64::INFINITY } else { rng.random_range(1.0..8.0) };
        normalize_ssm(
            &sample(RelativePosition::LV, pet, rng.random_range(0.0..3.3), rng.random_range(0.0..1.0 / 1.5)),
            &scales,
        )
    };
    let train: Vec<[f64; 3]> = (0..5000).map(|_| safe()).collect();
    let held_out: Vec<[f64; 3]> = (0..1000).map(|_| safe()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let critical: Vec<[f64; 3]> = (0..1000)
        .map(|_| {
            let s = sample(
                RelativePosition::LV,
                rng.random_range(0.0..0.4),
                rng.random_range(5.0..15.0),
                rng.random_range(1.0..3.0),
            );
            normalize_ssm(&s, &scales)
        })
        .collect();
    let mut ratios = Vec::new();
    for variant in [AeVariant::Linear, AeVariant::Tanh] {
        let ae = ae_train(&train, variant, &AeHyperparameters::default()).map_err(|e| e.to_string())?;
        let mean = |xs: &[[f64; 3]]| xs.iter().map(|x| ae.risk(x)).sum::<f64>() / xs.len() as f64;
        let ratio = mean(&critical) / mean(&held_out);
        ensure(ratio >= 3.0, || format!("{variant:?}: ratio {ratio:.2}"))?;
        ratios.push(format!("{variant:?} {ratio:.1}x"));
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(ratios.join(", "))
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

fn statistics_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..100 {
        let n = rng.random_range(6..80);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..10))).collect();
        let y: Vec<f64> = x.iter().map(|v| v + f64::from(rng.random_range(-4..5))).collect();
        let (rho, _) = spearman(&x, &y).map_err(|e| e.to_string())?;
        let expected = brute_pearson(&brute_ranks(&x), &brute_ranks(&y));
        ensure((rho - expected).abs() <= 1e-12, || format!("spearman {rho} vs {expected}"))?;
    }
    let mut wilcoxon_cases = 0;
    for n in 5..=12usize {
        for _ in 0..30 {
            let diffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.3)).collect();
            let ranks = brute_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
            let w: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
            let hits = (0u32..1 << n)
                .filter(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum::<f64>() >= w)
                .count();
            let p = hits as f64 / f64::from(1u32 << n);
            let r = wilcoxon_signed_rank(&diffs).map_err(|e| e.to_string())?;
            ensure(r.exact && (r.p_value - p).abs() <= 1e-12, || format!("wilcoxon n={n}: {} vs {p}", r.p_value))?;
            wilcoxon_cases += 1;
        }
    }
    let fr = 25.0;
    let max_shift = (2.0 * fr) as usize;
    for shift in 0..=max_shift {
        let n = 300;
        let base: Vec<f64> = (0..n + shift).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lag = best_lag(&base[shift..], &base[..n], fr, 2.0).map_err(|e| e.to_string())?;
        ensure(lag.frames == shift, || format!("planted {shift}, found {}", lag.frames))?;
    }
    Ok(format!("100 spearman pairs, {wilcoxon_cases} wilcoxon cases, shifts 0..={max_shift}"))
}

fn lag_recovery() -> Check {
    let params = CutInParams { reaction: Some(ReactionRule::new(0.1, 0.25, 3.0)), ..CutInParams::default() };
    let scene = generate(&ScenarioSpec::cut_in(&params), 0).map_err(|e| e.to_string())?;
    let cfg = ModelConfig::default();
    let model = RiskModel::new("2a".parse().unwrap(), cfg.normalization, None).map_err(|e| e.to_string())?;
    let series = risk_timeseries(&scene, 1, &model, &cfg).map_err(|e| e.to_string())?;
    let track = scene.track(1).map_err(|e| e.to_string())?;
    let r = evaluate_ego(&series, track, &EvalConfig::default()).map_err(|e| e.to_string())?;
    let frame = 1.0 / scene.frame_rate();
    ensure((r.lag_seconds - 0.25).abs() <= frame + 1e-12, || format!("lag {} s", r.lag_seconds))?;
    ensure(r.rho > 0.0 && r.significant, || format!("rho {} p {}", r.rho, r.p_value))?;
    Ok(format!("lag {:.2} s, rho {:.3}, p {:.1e}, n {}", r.lag_seconds, r.rho, r.p_value, r.n))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ssmrisk")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn config_grid() -> Check {
    let start = Instant::now();
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let scenes = dir.path().join("scenes");
    let (ev, cmp) = (dir.path().join("eval"), dir.path().join("compare"));
    cli(&["synth", "--responsive", "25", "--seed", "42", "-o", p(&scenes)])?;
    cli(&["eval", "--configs", "1a,1b,1f,1g,2a,2b,2f,2g,3a,3b,3f,3g", p(&scenes), "-o", p(&ev)])?;
    cli(&["compare", p(&ev.join("results.csv")), "-o", p(&cmp)])?;

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("summary.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let summaries = summary["summaries"].as_array().ok_or("no summaries")?;
    ensure(summaries.len() == 12, || format!("{} summaries", summaries.len()))?;
    let egos = summaries[0]["evaluated"].as_u64().unwrap_or(0) + summaries[0]["failed"].as_u64().unwrap_or(0);
    ensure(egos == 50, || format!("{egos} egos"))?;

    let matrix = fs::read_to_string(cmp.join("comparison.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<&str>> = matrix.lines().map(|l| l.split(',').collect()).collect();
    let ids: Vec<String> = ModelId::grid().iter().map(ToString::to_string).collect();
    ensure(rows.len() == 13 && rows[0][1..] == ids[..], || format!("header {:?}", rows.first()))?;
    for (i, row) in rows[1..].iter().enumerate() {
        ensure(row.len() == 13 && row[0] == ids[i], || format!("row {i}: {row:?}"))?;
        for (j, cell) in row[1..].iter().enumerate() {
            let ok = if i == j { *cell == "-" } else { *cell == "r" || *cell == "n" };
            ensure(ok, || format!("cell ({}, {}) = {cell}", ids[i], ids[j]))?;
        }
    }
    let rejected = rows[1..].iter().flat_map(|r| &r[1..]).filter(|c| **c == "r").count();

    for config in ["2d", "2e", "2c"] {
        let out = dir.path().join(format!("risk-{config}"));
        let stderr = cli(&["risk", "--config", config, p(&scenes), "-o", p(&out)])?;
        let mut reader = csv::Reader::from_path(out.join(format!("risk_{config}.csv"))).map_err(|e| e.to_string())?;
        let mut parallel = 0;
        for rec in reader.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            if !rec[7].is_empty() || !rec[8].is_empty() {
                parallel += 1;
            }
        }
        let skips = config != "2c";
        ensure(skips == stderr.contains("cannot evaluate parallel vehicles"), || format!("{config}: warning"))?;
        ensure(skips == (parallel == 0), || format!("{config}: {parallel} frames with PL/PF risk"))?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("12 summaries over 50 egos, 12x12 matrix with {rejected} r cells, d/e skip PL/PF"))
}

fn highd_corpus() -> Outcome {
    let Some(dir) = std::env::var_os("SSMRISK_DATA_DIR") else {
        return Outcome::Skip("SSMRISK_DATA_DIR not set".into());
    };
    let dir = Path::new(&dir);
    if !dir.join("01_tracks.csv").is_file() {
        return Outcome::Skip(format!("no HighD recordings in {}", dir.display()));
    }
    let out = match TempDir::new() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let run = cli(&["eval", "--format", "highd", "--recording", "1-57", "--data-dir", p(dir), "-o", p(out.path())]);
    if let Err(e) = run {
        return Outcome::Fail(e);
    }
    let text = fs::read_to_string(out.path().join("summary.json")).unwrap_or_default();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
    let fractions: Vec<String> = summary["summaries"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|s| format!("{}={:.3}", s["model"].as_str().unwrap_or("?"), s["significant_fraction"]))
                .collect()
        })
        .unwrap_or_default();
    Outcome::Pass(format!("significant fractions: {}", fractions.join(" ")))
}

fn run(check: fn() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(detail)) => Outcome::Pass(detail),
        Ok(Err(detail)) => Outcome::Fail(detail),
        Err(panic) => Outcome::Fail(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, &dyn Fn() -> Outcome); 10] = [
        ("SSM exactness on the golden corpus", &|| run(ssm_exactness)),
        ("encroachment vs 1 ms simulation", &|| run(encroachment_oracle)),
        ("category partition and monotonicity", &|| run(category_partition)),
        ("grid fusion", &|| run(grid_fusion)),
        ("autoencoder gradient check", &|| run(gradient_check)),
        ("autoencoder risk ordering", &|| run(ae_ordering)),
        ("statistics oracles", &|| run(statistics_oracles)),
        ("end-to-end lag recovery", &|| run(lag_recovery)),
        ("configuration grid plumbing", &|| run(config_grid)),
        ("HighD corpus run", &highd_corpus),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("AC{:<2} {tag} {name} [{elapsed:.2?}] {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
