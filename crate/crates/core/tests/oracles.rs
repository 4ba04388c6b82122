//! Independent oracles for the numeric core: closed-form SSMs, a stepped
//! encroachment simulation, finite-difference gradients and brute-force
//! statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssmrisk::model::{FrameState, VehicleAt, VehicleClass};
use ssmrisk::neighbors::{classify_neighbors, encroachment_point, NeighborConfig, RelativePosition};
use ssmrisk::risk::{
    ae_train, aggregate_ego_risk, categorize, grid_risk, normalize_ssm, AeHyperparameters, AeVariant, Autoencoder,
    ComponentRisks, GridWeights, NormalizationScales, PositionalWeights, SafetyCategory, SsmKind, PARAMS,
};
use ssmrisk::ssm::{ssm_for_entry, SsmSample};
use ssmrisk::stats::{best_lag, spearman, wilcoxon_signed_rank};
use ssmrisk::synth::{golden_corpus, three_lane_layout};

#[test]
fn golden_corpus_matches_closed_form() {
    let cfg = NeighborConfig::default();
    for seed in [1, 7, 42] {
        for case in golden_corpus(seed).unwrap() {
            let mut got = Vec::new();
            for st in case.scene.track(case.ego_id).unwrap().states() {
                let set = classify_neighbors(&case.scene, case.ego_id, st.frame, &cfg).unwrap();
                let snapshot = case.scene.snapshot(st.frame);
                for entry in set.entries() {
                    got.push(ssm_for_entry(&snapshot, case.ego_id, &entry, &cfg).unwrap());
                }
            }
            assert_eq!(got.len(), case.expected.len(), "{}", case.name);
            for (g, e) in got.iter().zip(&case.expected) {
                assert_eq!((g.frame, g.neighbor_id, g.position), (e.frame, e.neighbor_id, e.position), "{}", case.name);
                for (a, b, what) in [(g.pet, e.pet, "pet"), (g.ittc, e.ittc, "ittc"), (g.drac, e.drac, "drac")] {
                    assert!((a - b).abs() <= 1e-9, "{} frame {} {what}: {a} vs {b}", case.name, g.frame);
                }
            }
        }
    }
}

fn car(id: u32, x: f64, y: f64, vx: f64, vy: f64, lane_id: i32) -> VehicleAt {
    VehicleAt {
        id,
        class: VehicleClass::Car,
        width: 1.8,
        length: 4.5,
        state: FrameState { frame: 0, x, y, vx, vy, ax: 0.0, ay: 0.0, lane_id },
    }
}

#[test]
fn encroachment_agrees_with_stepped_simulation() {
    let layout = three_lane_layout();
    let cfg = NeighborConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut crossings = 0;
    for _ in 0..2000 {
        let ego = car(1, 0.0, rng.random_range(3.6..6.9), 25.0, 0.0, 2);
        let (lane, y, boundary, sign) = if rng.random_bool(0.5) {
            (3, rng.random_range(7.05..10.4), 7.0, -1.0)
        } else {
            (1, rng.random_range(0.1..3.45), 3.5, 1.0)
        };
        let vy = sign * rng.random_range(0.05..3.0);
        let other = car(2, rng.random_range(-40.0..40.0), y, rng.random_range(15.0..35.0), vy, lane);
        let enc = encroachment_point(&ego, &other, &layout, &cfg).unwrap();

        let dt = 1e-3;
        let mut t = 0.0;
        let mut yy = y;
        while (yy - boundary) * sign < 0.0 && t <= cfg.horizon + dt {
            t += dt;
            yy += vy * dt;
        }
        let crossed = t <= cfg.horizon;
        match enc {
            Some(e) => {
                crossings += 1;
                assert!(crossed);
                assert!((e.t_cross - t).abs() <= 0.01, "{} vs {t}", e.t_cross);
                assert!((e.x_enc - (other.state.x + other.state.vx * e.t_cross)).abs() < 1e-9);
            }
            None => assert!(!crossed || (t - cfg.horizon).abs() <= 0.01),
        }
    }
    assert!(crossings >= 1000, "{crossings}");
}

#[test]
fn categories_partition_and_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (kind, hi, riskier_is_larger) in
        [(SsmKind::Pet, 3.0, false), (SsmKind::Drac, 10.0, true), (SsmKind::Ittc, 2.0, true)]
    {
        let mut values: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..hi)).collect();
        values.extend([0.4, 1.0, 3.3, 5.0, 1.0 / 1.5, f64::INFINITY]);
        if riskier_is_larger {
            values.sort_by(f64::total_cmp);
        } else {
            values.sort_by(|a, b| b.total_cmp(a));
        }
        let cats: Vec<SafetyCategory> = values.iter().map(|v| categorize(kind, *v)).collect();
        assert!(cats.windows(2).all(|w| w[0] <= w[1]), "{kind:?}");
        assert!(cats.contains(&SafetyCategory::Safe) && cats.contains(&SafetyCategory::Conflict));
    }
}

fn sample(position: RelativePosition, pet: f64, drac: f64, ittc: f64) -> SsmSample {
    SsmSample { neighbor_id: 2, frame: 0, position, pet, ittc, drac, gap_clamped: false }
}

#[test]
fn grid_fusion_hand_values() {
    let a = GridWeights { pet: 1.0 / 3.0, drac: 1.0 / 3.0, ittc: 1.0 / 3.0 };
    let b = GridWeights { pet: 2.0 / 3.0, drac: 1.0 / 6.0, ittc: 1.0 / 6.0 };
    // (Safe, Conflict, Safe)
    let s = sample(RelativePosition::LV, 2.0, 4.0, 0.1);
    assert!((grid_risk(&s, &a).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    assert!((grid_risk(&s, &b).unwrap() - 1.0 / 12.0).abs() < 1e-12);
    // (Critical, Safe, Conflict)
    let s = sample(RelativePosition::PL, 0.2, 1.0, 0.8);
    assert!((grid_risk(&s, &a).unwrap() - 0.5).abs() < 1e-12);
    assert!((grid_risk(&s, &b).unwrap() - (2.0 / 3.0 + 1.0 / 12.0)).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let mut c = ComponentRisks::default();
        for position in RelativePosition::ALL {
            if rng.random_bool(0.6) {
                let s = sample(
                    position,
                    rng.random_range(0.0..3.0),
                    rng.random_range(0.0..8.0),
                    rng.random_range(0.0..2.0),
                );
                if let Some(r) = grid_risk(&s, &a) {
                    c.merge_max(position, r);
                }
            }
        }
        for p in 1..=3 {
            let r = aggregate_ego_risk(&c, &PositionalWeights::table(p).unwrap());
            assert!((0.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn autoencoder_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for variant in [AeVariant::Linear, AeVariant::Tanh] {
        for _ in 0..10 {
            let ae = Autoencoder::initialized(variant, &mut rng);
            let batch: Vec<[f64; 3]> = (0..16)
                .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect();
            let (_, grad) = ae.loss_and_gradient(&batch);
            let h = 1e-5;
            for i in 0..PARAMS {
                let shifted = |delta: f64| {
                    let mut p = *ae.params();
                    p[i] += delta;
                    Autoencoder::from_params(variant, p).loss(&batch)
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                let scale = grad[i].abs().max(numeric.abs()).max(1e-6);
                assert!((grad[i] - numeric).abs() / scale <= 1e-4, "{variant:?} param {i}: {} vs {numeric}", grad[i]);
            }
        }
    }
}

fn safe_vector(rng: &mut impl Rng) -> [f64; 3] {
    let pet = if rng.random_bool(0.2) { f64::INFINITY } else { rng.random_range(1.0..8.0) };
    let s = sample(RelativePosition::LV, pet, rng.random_range(0.0..3.3), rng.random_range(0.0..1.0 / 1.5));
    normalize_ssm(&s, &NormalizationScales::default())
}

fn critical_vector(rng: &mut impl Rng) -> [f64; 3] {
    let s = sample(
        RelativePosition::LV,
        rng.random_range(0.0..0.4),
        rng.random_range(5.0..15.0),
        rng.random_range(1.0..3.0),
    );
    normalize_ssm(&s, &NormalizationScales::default())
}

#[test]
fn autoencoder_separates_critical_from_safe() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let train: Vec<[f64; 3]> = (0..2000).map(|_| safe_vector(&mut rng)).collect();
    let held_out: Vec<[f64; 3]> = (0..500).map(|_| safe_vector(&mut rng)).collect();
    let critical: Vec<[f64; 3]> = (0..500).map(|_| critical_vector(&mut rng)).collect();
    for variant in [AeVariant::Linear, AeVariant::Tanh] {
        let ae = ae_train(&train, variant, &AeHyperparameters::default()).unwrap();
        let mean = |xs: &[[f64; 3]]| xs.iter().map(|x| ae.risk(x)).sum::<f64>() / xs.len() as f64;
        let (safe, crit) = (mean(&held_out), mean(&critical));
        assert!(crit >= 3.0 * safe, "{variant:?}: critical {crit} safe {safe}");
    }
}

/// Rank by counting, ties averaged.
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
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn spearman_matches_brute_force_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.random_range(5..60);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8))).collect();
        let y: Vec<f64> = x.iter().map(|v| (v + f64::from(rng.random_range(-3..4))).round()).collect();
        let (rho, _) = spearman(&x, &y).unwrap();
        let expected = brute_pearson(&brute_ranks(&x), &brute_ranks(&y));
        assert!((rho - expected).abs() <= 1e-12, "{rho} vs {expected}");
    }
}

#[test]
fn wilcoxon_exact_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for n in 5..=12usize {
        for _ in 0..25 {
            let diffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.2)).collect();
            let ranks = brute_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
            let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
            let hits = (0u32..(1 << n))
                .filter(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum::<f64>() >= observed)
                .count();
            let r = wilcoxon_signed_rank(&diffs).unwrap();
            assert!(r.exact);
            assert!((r.p_value - hits as f64 / f64::from(1u32 << n)).abs() <= 1e-12);
        }
    }
}

#[test]
fn planted_lags_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let fr = 25.0;
    for shift in 0..=50usize {
        let n = 400;
        let base: Vec<f64> = (0..n + shift).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = base[shift..].to_vec();
        let b = base[..n].to_vec();
        let lag = best_lag(&a, &b, fr, 2.0).unwrap();
        assert_eq!(lag.frames, shift);
        assert!((lag.seconds - shift as f64 / fr).abs() < 1e-12);
    }
}
