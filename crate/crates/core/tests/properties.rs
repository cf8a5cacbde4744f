use proptest::prelude::*;

use irlplan::evaluation::{prediction_metrics, EvalReport, EvalRow, PlanningHit};
use irlplan::features::{collision_indicator, BoxPose};
use irlplan::generation::{solve_quartic, solve_quintic};
use irlplan::irl::{cost, irl_loss, label_demo, proposal_distribution, select_behavior, IrlSample};
use irlplan::optim::{clip_grad_norm, step_decay};
use irlplan::prediction::{read_params, write_params, CmpModelParams, Gaussian2};
use irlplan::scenario::{parse_scenarios, synthesize_scenarios, write_scenarios, Template};
use irlplan::{
    CostWeights, FeatureVector, Fusion, FrenetState, Point2, PredictedFutures, PredictorConfig, ReferencePath, T_F,
};

fn weights() -> impl Strategy<Value = [f64; 7]> {
    prop::array::uniform7(-3.0..3.0f64)
}

fn feature_rows(max: usize) -> impl Strategy<Value = Vec<[f64; 7]>> {
    prop::collection::vec(prop::array::uniform7(0.0..5.0f64), 2..max)
}

fn sample() -> impl Strategy<Value = IrlSample> {
    feature_rows(12).prop_flat_map(|features| {
        let n = features.len();
        (Just(features), 0..n).prop_map(|(features, demo)| IrlSample { features, demo })
    })
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, x| acc * t + x)
}

proptest! {
    #[test]
    fn quartic_meets_start_state(s in -100.0..100.0f64, v in 0.0..30.0f64, a in -4.0..4.0f64,
                                 vt in 0.0..30.0f64, at in -2.0..2.0f64, t in 0.5..10.0f64) {
        let c = solve_quartic([s, v, a], [vt, at], t).unwrap();
        prop_assert!((horner(&c.0, 0.0) - s).abs() < 1e-12);
        prop_assert!((c.velocity(t) - vt).abs() < 1e-9 * vt.abs().max(1.0));
        prop_assert!((c.acceleration(t) - at).abs() < 1e-9 * vt.abs().max(1.0));
    }

    #[test]
    fn quintic_hits_target(d0 in -5.0..5.0f64, dt in -5.0..5.0f64, t in 0.5..10.0f64) {
        let c = solve_quintic([d0, 0.0, 0.0], [dt, 0.0, 0.0], t).unwrap();
        prop_assert!((horner(&c.0, t) - dt).abs() < 1e-9);
        prop_assert!(c.velocity(t).abs() < 1e-9);
    }

    #[test]
    fn straight_path_roundtrip(heading in -3.1..3.1f64, s in 5.0..95.0f64, d in -8.0..8.0f64, v in 0.0..25.0f64) {
        let dir = Point2::new(heading.cos(), heading.sin());
        let pts: Vec<Point2> = (0..=100).map(|i| Point2::new(dir.x * i as f64, dir.y * i as f64)).collect();
        let path = ReferencePath::build(&pts, 10.0).unwrap();
        let st = FrenetState { s, d, s_dot: v, ..FrenetState::default() };
        let back = path.cartesian_to_frenet(&path.frenet_to_cartesian(&st).unwrap(), 0.0).unwrap();
        prop_assert!((back.s - s).abs() < 1e-6 && (back.d - d).abs() < 1e-6);
        prop_assert!((back.s_dot - v).abs() < 1e-6);
    }

    #[test]
    fn distribution_normalized_and_shift_invariant(costs in prop::collection::vec(-100.0..100.0f64, 1..40), shift in -1e3..1e3f64) {
        let p = proposal_distribution(&costs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        let q = proposal_distribution(&costs.iter().map(|c| c + shift).collect::<Vec<_>>());
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ranking_survives_positive_scaling(rows in feature_rows(30), w in weights(), k in 1e-3..1e3f64) {
        let f: Vec<FeatureVector> = rows.iter().map(|r| FeatureVector::from_array(*r)).collect();
        let w = CostWeights(w);
        let a: Vec<usize> = select_behavior(&f, &w).iter().map(|x| x.0).collect();
        let b: Vec<usize> = select_behavior(&f, &w.scaled(k)).iter().map(|x| x.0).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ranking_is_by_cost(rows in feature_rows(30), w in weights()) {
        let f: Vec<FeatureVector> = rows.iter().map(|r| FeatureVector::from_array(*r)).collect();
        let w = CostWeights(w);
        let ranked = select_behavior(&f, &w);
        for pair in ranked.windows(2) {
            prop_assert!(cost(&w, &rows[pair[0].0]) <= cost(&w, &rows[pair[1].0]));
            prop_assert!(pair[0].1 >= pair[1].1);
        }
    }

    #[test]
    fn irl_loss_is_convex(batch in prop::collection::vec(sample(), 1..5), a in weights(), b in weights(), t in 0.0..1.0f64) {
        let (wa, wb) = (CostWeights(a), CostWeights(b));
        let mid = CostWeights(std::array::from_fn(|i| (1.0 - t) * a[i] + t * b[i]));
        let la = irl_loss(&wa, &batch, 1e-2).unwrap();
        let lb = irl_loss(&wb, &batch, 1e-2).unwrap();
        let lm = irl_loss(&mid, &batch, 1e-2).unwrap();
        prop_assert!(lm <= (1.0 - t) * la + t * lb + 1e-9);
    }

    #[test]
    fn demo_label_is_nearest(points in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..30), tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
        let pts: Vec<Point2> = points.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        let truth = Point2::new(tx, ty);
        let i = label_demo(&pts, truth);
        let best = pts[i].distance(truth);
        prop_assert!(pts.iter().all(|p| p.distance(truth) >= best));
        prop_assert!(pts[..i].iter().all(|p| p.distance(truth) > best));
    }

    #[test]
    fn collision_is_symmetric_and_covers_overlap(
        ha in -3.2..3.2f64, hb in -3.2..3.2f64, x in -8.0..8.0f64, y in -5.0..5.0f64,
        la in 1.0..6.0f64, wa in 0.5..2.5f64, lb in 1.0..6.0f64, wb in 0.5..2.5f64,
    ) {
        let a = BoxPose { x: 0.0, y: 0.0, heading: ha, length: la, width: wa };
        let b = BoxPose { x, y, heading: hb, length: lb, width: wb };
        let hit = collision_indicator(&a, &b, 3);
        prop_assert_eq!(hit, collision_indicator(&b, &a, 3));
        // a corner of one box inside the other implies overlap
        let (s, c) = hb.sin_cos();
        let corner = (x + 0.5 * lb * c - 0.5 * wb * s, y + 0.5 * lb * s + 0.5 * wb * c);
        let (sa, ca) = ha.sin_cos();
        let u = corner.0 * ca + corner.1 * sa;
        let v = -corner.0 * sa + corner.1 * ca;
        if u.abs() < 0.5 * la && v.abs() < 0.5 * wa {
            prop_assert_eq!(hit, 1.0);
        }
    }

    #[test]
    fn clipped_gradient_norm_bounded(g in prop::collection::vec(-1e3..1e3f64, 1..50), max in 0.1..10.0f64) {
        let mut g = g;
        let before = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let reported = clip_grad_norm(&mut g, max);
        let after = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((reported - before).abs() <= 1e-9 * before.max(1.0));
        prop_assert!(after <= max * (1.0 + 1e-12) || (before <= max && (after - before).abs() < 1e-12));
    }

    #[test]
    fn decay_never_increases(step in 0usize..10_000, every in 1usize..200, factor in 0.0..=1.0f64) {
        prop_assert!(step_decay(1e-2, factor, every, step + 1) <= step_decay(1e-2, factor, every, step));
    }

    #[test]
    fn weights_text_roundtrip(w in weights()) {
        let w = CostWeights(w);
        prop_assert_eq!(w.to_string().parse::<CostWeights>().unwrap(), w);
    }

    #[test]
    fn min_fde_not_above_any_mode(offsets in prop::collection::vec(-5.0..5.0f64, 1..5)) {
        let truth: Vec<Vec<Point2>> = vec![(0..T_F).map(|t| Point2::new(t as f64, 0.0)).collect()];
        let modes: Vec<Vec<Vec<Gaussian2>>> = offsets
            .iter()
            .map(|o| vec![(0..T_F).map(|t| Gaussian2 { mu_x: t as f64, sigma_x: 1.0, mu_y: *o, sigma_y: 1.0 }).collect()])
            .collect();
        let k = modes.len();
        let pred = PredictedFutures { modes, mode_probs: vec![1.0 / k as f64; k] };
        let (ade, fde) = prediction_metrics(&pred, &truth);
        let best = offsets.iter().map(|o| o.abs()).fold(f64::INFINITY, f64::min);
        prop_assert!((fde - best).abs() < 1e-12 && (ade - best).abs() < 1e-12);
    }

    #[test]
    fn report_ignores_row_order(hits in prop::collection::vec((0.0..20.0f64, any::<bool>(), any::<bool>(), any::<bool>()), 1..40), seed in any::<u64>()) {
        let rows: Vec<EvalRow> = hits
            .iter()
            .enumerate()
            .map(|(i, &(f, a, b, c))| EvalRow {
                scenario_id: i,
                hit: PlanningHit { plan_min_fde: f, top3_hit: a, speed_hit: b, lane_hit: c },
                min_ade: Some(f / 2.0),
                min_fde: None,
            })
            .collect();
        let mut shuffled = rows.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 7919) % n);
        }
        let (a, b) = (EvalReport::from_rows(&rows), EvalReport::from_rows(&shuffled));
        prop_assert!((a.plan_min_fde - b.plan_min_fde).abs() < 1e-12);
        prop_assert_eq!(a.top3_accuracy, b.top3_accuracy);
        prop_assert!((0.0..=1.0).contains(&a.lane_intent_accuracy));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn params_file_roundtrip(seed in any::<u64>(), late in any::<bool>()) {
        let cfg = PredictorConfig {
            fusion: if late { Fusion::Late } else { Fusion::Early },
            embed_dim: 8,
            rng_seed: seed,
            ..PredictorConfig::default()
        };
        let params = CmpModelParams::init(&cfg);
        let mut buf = Vec::new();
        write_params(&mut buf, &params).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        prop_assert_eq!(back, params);
    }

    #[test]
    fn synthesized_scenarios_validate_and_roundtrip(seed in any::<u64>(), t in 0usize..5) {
        let template = Template::ALL[t];
        let scenarios = synthesize_scenarios(template, 2, seed);
        for s in &scenarios {
            prop_assert!(s.validate().is_ok());
        }
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &scenarios).unwrap();
        prop_assert_eq!(parse_scenarios(std::str::from_utf8(&buf).unwrap()).unwrap(), scenarios);
    }
}
