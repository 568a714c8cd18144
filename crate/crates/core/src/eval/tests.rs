use std::collections::BTreeMap;

use super::*;
use crate::data::{BudgetGrid, ModelSpec, Query};
use crate::router::TablePredictor;

fn pt(cost: f64, quality: f64) -> DeferralPoint {
    DeferralPoint {
        lambda: 0.0,
        mean_quality: quality,
        total_cost: cost,
        mean_cost: cost,
    }
}

/// Dataset whose sample for (query, model, level) is `f(qi, mi, level)` =
/// (quality, output tokens); input tokens are zero.
fn hand_dataset(
    pool: Vec<ModelSpec>,
    grid: BudgetGrid,
    n: usize,
    f: impl Fn(usize, usize, Level) -> (f64, u64),
) -> Dataset {
    let queries: Vec<Query> = (0..n).map(|i| Query::new(format!("q{i}"), vec![i as f64])).collect();
    let mut samples = Vec::new();
    for qi in 0..n {
        for (mi, m) in pool.iter().enumerate() {
            for l in grid.levels() {
                let (quality, tokens) = f(qi, mi, l);
                samples.push(ResponseSample {
                    query_id: format!("q{qi}"),
                    model_id: m.model_id.clone(),
                    budget: l.budget,
                    is_default: l.is_default,
                    quality,
                    actual_output_tokens: tokens,
                    input_tokens: 0,
                });
            }
        }
    }
    Dataset::new(pool, grid, queries, samples, 1, true).unwrap()
}

#[test]
fn audc_shapes() {
    assert!((audc(&[pt(0.0, 0.7), pt(1.0, 0.7)], 1.0) - 0.7).abs() < 1e-15);
    assert!((audc(&[pt(0.0, 0.0), pt(2.0, 1.0)], 2.0) - 0.5).abs() < 1e-15);
    // 0.25 * 0.4 flat, trapezoid 0.5 * 0.6, flat 0.25 * 0.8
    assert!((audc(&[pt(0.25, 0.4), pt(0.75, 0.8)], 1.0) - 0.6).abs() < 1e-15);
}

#[test]
fn single_point_curve_is_degenerate() {
    let best = BestSingle {
        model_id: "m".into(),
        quality: 0.9,
        mean_cost: 1.0,
    };
    let c = DeferralCurve::new(vec![pt(0.5, 0.42)], &best).unwrap();
    assert!(c.degenerate);
    assert_eq!(c.audc, 0.42);
    assert_eq!(c.with_cost_axis(2.0).audc, 0.42);
}

#[test]
fn qnc_cases() {
    let best = BestSingle {
        model_id: "m".into(),
        quality: 0.8,
        mean_cost: 2.0,
    };
    assert_eq!(qnc(&[pt(1.0, 0.5), pt(2.0, 0.8)], &best).unwrap(), Qnc::Reached(1.0));
    assert_eq!(qnc(&[pt(0.5, 0.85), pt(2.0, 0.9)], &best).unwrap(), Qnc::Reached(0.25));
    assert_eq!(qnc(&[pt(1.0, 0.5), pt(3.0, 0.79)], &best).unwrap(), Qnc::Unreached);
    let free = BestSingle { mean_cost: 0.0, ..best };
    assert!(matches!(qnc(&[pt(0.0, 1.0)], &free), Err(EvalError::ZeroBestCost)));
    assert_eq!(serde_json::to_string(&Qnc::Unreached).unwrap(), "\"unreached\"");
    assert_eq!(serde_json::from_str::<Qnc>("0.5").unwrap(), Qnc::Reached(0.5));
}

fn two_by_two() -> Dataset {
    let grid = BudgetGrid::new(vec![100], 200).unwrap();
    let pool = vec![ModelSpec::new("big", 0.0, 10.0), ModelSpec::new("small", 0.0, 1.0)];
    hand_dataset(pool, grid, 3, |qi, mi, l| {
        let q = match (mi, l.is_default) {
            (0, false) => [0.7, 0.5, 0.9][qi],
            (0, true) => [0.8, 0.6, 0.9][qi],
            (1, false) => [0.2, 0.5, 0.1][qi],
            _ => [0.3, 0.55, 0.2][qi],
        };
        (q, u64::from(l.budget) - qi as u64)
    })
}

fn brute_oracle(d: &Dataset, lambda: f64, default_only: bool) -> (f64, f64) {
    let scale = cost_scale(d.pool(), d.grid());
    let (mut tq, mut tc) = (0.0, 0.0);
    for qi in 0..d.queries().len() {
        let mut best: Option<(f64, f64, String, Level, f64)> = None;
        for (mi, m) in d.pool().iter().enumerate() {
            for (li, &l) in d.levels().iter().enumerate() {
                if default_only && !l.is_default {
                    continue;
                }
                let s = d.sample_at(qi, mi, li).unwrap();
                let c = query_cost(m, s.input_tokens, s.actual_output_tokens);
                let sc = (1.0 - lambda) * s.quality - lambda * c / scale;
                let cand = (sc, c, m.model_id.clone(), l, s.quality);
                let better = best.as_ref().is_none_or(|b| {
                    cand.0 > b.0
                        || (cand.0 == b.0
                            && (cand.1 < b.1 || (cand.1 == b.1 && (cand.2.as_str(), cand.3) < (b.2.as_str(), b.3))))
                });
                if better {
                    best = Some(cand);
                }
            }
        }
        let b = best.unwrap();
        tq += b.4;
        tc += b.1;
    }
    let n = d.queries().len() as f64;
    (tq / n, tc / n)
}

#[test]
fn oracles_match_enumeration() {
    let d = two_by_two();
    let grid = lambda_grid(33);
    for (curve, default_only) in [(oracle_point(&d, &grid).unwrap(), true), (oracle_curve(&d, &grid).unwrap(), false)] {
        for p in &curve.points {
            let (q, c) = brute_oracle(&d, p.lambda, default_only);
            assert!((p.mean_quality - q).abs() < 1e-12 && (p.mean_cost - c).abs() < 1e-18);
        }
    }
    let (op, oc) = (oracle_point(&d, &grid).unwrap(), oracle_curve(&d, &grid).unwrap());
    let axis = op.cost_axis_max.max(oc.cost_axis_max);
    assert!(oc.with_cost_axis(axis).audc >= op.with_cost_axis(axis).audc);
}

#[test]
fn oracles_coincide_on_a_one_level_grid() {
    // A single anchor equal to the default cap still gives two levels, so
    // collapse by making anchor samples identical to default ones.
    let grid = BudgetGrid::new(vec![100], 100).unwrap();
    let pool = vec![ModelSpec::new("a", 0.0, 3.0), ModelSpec::new("b", 0.0, 1.0)];
    let d = hand_dataset(pool, grid, 4, |qi, mi, _| ([0.2, 0.9, 0.4, 0.6][qi] * (mi + 1) as f64 / 2.0, 90));
    let grid = lambda_grid(16);
    assert_eq!(oracle_point(&d, &grid).unwrap().points, oracle_curve(&d, &grid).unwrap().points);
}

#[test]
fn single_model_oracle_is_default_behaviour() {
    let grid = BudgetGrid::new(vec![10, 20], 50).unwrap();
    let d = hand_dataset(vec![ModelSpec::new("solo", 1.0, 2.0)], grid, 5, |qi, _, l| {
        (if l.is_default { 0.5 + 0.1 * qi as f64 } else { 0.1 }, u64::from(l.budget))
    });
    let c = oracle_point(&d, &lambda_grid(8)).unwrap();
    for p in &c.points {
        assert!((p.mean_quality - 0.7).abs() < 1e-12);
    }
    let b = best_single(&d).unwrap();
    assert_eq!(c.qnc, Qnc::Reached(1.0));
    assert_eq!(b.model_id, "solo");
}

#[test]
fn best_single_ties_prefer_cheaper() {
    let grid = BudgetGrid::new(vec![100], 100).unwrap();
    let pool = vec![ModelSpec::new("a", 0.0, 3.0), ModelSpec::new("b", 0.0, 1.0)];
    let d = hand_dataset(pool, grid, 2, |_, _, _| (0.5, 100));
    assert_eq!(best_single(&d).unwrap().model_id, "b");
}

fn table_for(d: &Dataset, rows: impl Fn(usize, usize, Level) -> f64) -> TablePredictor {
    let levels = d.grid().levels();
    TablePredictor {
        pool: d.pool().to_vec(),
        grid: d.grid().clone(),
        embedding_dim: 1,
        table: (0..d.queries().len())
            .map(|qi| {
                (0..d.pool().len())
                    .flat_map(|mi| levels.iter().map(move |&l| (mi, l)))
                    .map(|(mi, l)| rows(qi, mi, l))
                    .collect()
            })
            .collect(),
    }
}

#[test]
fn lambda_zero_sweep_is_quality_argmax() {
    let d = two_by_two();
    let truth = |qi: usize, mi: usize, l: Level| {
        let li = d.level_index(l).unwrap();
        d.sample_at(qi, mi, li).unwrap().quality
    };
    let p = table_for(&d, truth);
    let pol = RoutingPolicy::new(0.0, 200, RoutingMode::DiscreteCurve);
    let c = sweep(&p, &d, &pol, &ReactiveAnchors::default(), &[0.0]).unwrap();
    assert_eq!(c.points.len(), 1);
    // perfect predictions at lambda 0: best realized quality per query
    assert!((c.points[0].mean_quality - (0.8 + 0.6 + 0.9) / 3.0).abs() < 1e-12);
}

#[test]
fn lambda_one_sweep_minimizes_cost() {
    let d = two_by_two();
    let p = table_for(&d, |_, _, _| 0.5);
    let pol = RoutingPolicy::new(0.0, 200, RoutingMode::DiscreteCurve);
    let decisions = sweep_decisions(&p, &d, &pol, &ReactiveAnchors::default(), &[1.0]).unwrap();
    for dec in &decisions[0] {
        assert_eq!((dec.model_id.as_str(), dec.budget), ("small", 100));
    }
}

#[test]
fn continuous_decisions_snap_up() {
    let grid = BudgetGrid::new(vec![100, 200], 400).unwrap();
    let d = hand_dataset(vec![ModelSpec::new("m", 0.0, 1.0)], grid, 1, |_, _, l| (0.5, u64::from(l.budget)));
    assert_eq!(lookup_level(&d, Level::anchor(150)), Level::anchor(200));
    assert_eq!(lookup_level(&d, Level::anchor(0)), Level::anchor(100));
    assert_eq!(lookup_level(&d, Level::anchor(300)), Level::default_cap(400));
    assert_eq!(lookup_level(&d, Level::anchor(900)), Level::default_cap(400));
    assert_eq!(lookup_level(&d, Level::anchor(200)), Level::anchor(200));
    assert_eq!(lookup_level(&d, Level::default_cap(400)), Level::default_cap(400));
}

#[test]
fn compliance_rates() {
    let grid = BudgetGrid::new(vec![10, 20], 40).unwrap();
    let d = hand_dataset(vec![ModelSpec::new("m", 0.0, 1.0)], grid.clone(), 4, |_, _, l| (0.5, u64::from(l.budget)));
    let rows = compliance_table(&d, DEFAULT_COMPLIANCE_RATIO);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.rate == 1.0 && r.n_samples == 4));
    let d = hand_dataset(vec![ModelSpec::new("m", 0.0, 1.0)], grid, 4, |_, _, l| (0.5, 2 * u64::from(l.budget)));
    assert!(compliance_table(&d, 1.1).iter().all(|r| r.rate == 0.0));
}

#[test]
fn anchor_selection() {
    let std = BudgetGrid::standard().anchors;
    assert_eq!(select_anchors(&std, 15).unwrap(), std);
    assert_eq!(select_anchors(&std, 2).unwrap(), vec![10, 4000]);
    let six = select_anchors(&std, 6).unwrap();
    assert_eq!(six.len(), 6);
    assert_eq!((six[0], six[5]), (10, 4000));
    assert!(six.windows(2).all(|w| w[0] < w[1]));
    assert!(select_anchors(&std, 0).is_err() && select_anchors(&std, 16).is_err());
}

#[test]
fn replicate_statistics() {
    let vals = BTreeMap::from([(0u64, 0.6), (1, 0.8)]);
    let s = replicate::<EvalError>(&[0, 1], |seed| Ok(BTreeMap::from([("audc".to_string(), vals[&seed])]))).unwrap();
    let m = &s.metrics["audc"];
    assert!((m.mean - 0.7).abs() < 1e-15);
    assert!((m.sd - 0.02f64.sqrt()).abs() < 1e-12);
    assert!(!s.single_replicate);

    let one = replicate::<EvalError>(&[1], |_| Ok(BTreeMap::from([("x".to_string(), 0.3)]))).unwrap();
    assert!(one.single_replicate);
    assert_eq!(one.metrics["x"].sd, 0.0);

    let same = replicate::<EvalError>(&[1, 2, 3], |_| Ok(BTreeMap::from([("x".to_string(), 0.3)]))).unwrap();
    assert_eq!(same.metrics["x"].sd, 0.0);
    assert!(replicate::<EvalError>(&[], |_| Ok(BTreeMap::new())).is_err());
}

#[test]
fn report_files() {
    let d = two_by_two();
    let p = table_for(&d, |qi, mi, l| {
        let li = d.level_index(l).unwrap();
        d.sample_at(qi, mi, li).unwrap().quality
    });
    let pol = RoutingPolicy::new(0.0, 200, RoutingMode::ContinuousCurve);
    let report = evaluate(&p, &d, &Method::ALL, &pol, &ReactiveAnchors::default(), &lambda_grid(8), 7).unwrap();
    assert_eq!(report.curves.len(), 5);
    assert!(report.curves.values().all(|c| c.cost_axis_max == report.cost_axis_max));
    assert!(report.curves["oracle_curve"].audc >= report.curves["oracle_point"].audc);
    assert_eq!(report.replicates.seeds, vec![7]);

    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    for m in Method::ALL {
        let csv = std::fs::read_to_string(dir.path().join(format!("curve_{}.csv", m.name()))).unwrap();
        assert!(csv.starts_with("lambda,mean_cost_usd,mean_quality\n"));
        assert_eq!(csv.lines().count(), 9);
    }
    let comp = std::fs::read_to_string(dir.path().join("compliance.csv")).unwrap();
    assert!(comp.starts_with("model_id,budget,rate\n"));
    let back: EvalReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, report);
}
