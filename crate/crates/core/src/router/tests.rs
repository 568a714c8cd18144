use proptest::prelude::*;

use super::*;
use crate::data::{Dataset, ResponseSample};

fn spec(id: &str, out_price: f64) -> ModelSpec {
    ModelSpec::new(id, 0.0, out_price)
}

/// One query (embedding `[0.0]`) with qualities given per model over `grid.levels()`.
fn table(pool: Vec<ModelSpec>, grid: BudgetGrid, rows: Vec<Vec<f64>>) -> TablePredictor {
    TablePredictor {
        pool,
        grid,
        embedding_dim: 1,
        table: vec![rows.concat()],
    }
}

fn q0() -> Query {
    Query::new("q", vec![0.0])
}

fn policy(lambda: f64, budget_limit: u32, mode: RoutingMode) -> RoutingPolicy {
    RoutingPolicy::new(lambda, budget_limit, mode)
}

#[test]
fn score_formula() {
    assert_eq!(score(0.7, 123.0, 0.0, 1.0), 0.7);
    assert_eq!(score(0.7, 0.5, 1.0, 2.0), -0.25);
    assert!((score(0.8, 0.5 * 3.0, 0.5, 3.0) - 0.15).abs() < 1e-15);
}

#[test]
fn cost_scale_is_the_priciest_cell() {
    let grid = BudgetGrid::new(vec![100, 200], 300).unwrap();
    let pool = vec![spec("a", 1.0), spec("b", 4.0)];
    assert!((cost_scale(&pool, &grid) - 4.0 * 300.0 / 1e6).abs() < 1e-18);
    assert_eq!(cost_scale(&[spec("free", 0.0)], &grid), 1.0);
}

#[test]
fn interpolation_rules() {
    let pts = [(100, 0.4), (200, 0.8), (400, 0.9)];
    assert_eq!(interpolate(&pts, 100.0), 0.4);
    assert_eq!(interpolate(&pts, 200.0), 0.8);
    assert_eq!(interpolate(&pts, 400.0), 0.9);
    assert!((interpolate(&pts, 150.0) - 0.6).abs() < 1e-15);
    assert!((interpolate(&pts, 300.0) - 0.85).abs() < 1e-15);
    assert!((interpolate(&pts, 50.0) - 0.2).abs() < 1e-15);
    assert_eq!(interpolate(&pts, 0.0), 0.0);
    assert_eq!(interpolate(&pts, 9000.0), 0.9);
}

#[test]
fn interpolate_quality_is_exact_at_anchors() {
    let grid = BudgetGrid::new(vec![100, 200], 400).unwrap();
    let p = table(vec![spec("a", 1.0)], grid, vec![vec![0.123456789, 0.7, 0.75]]);
    assert_eq!(interpolate_quality(&p, &q0(), "a", 100.0).unwrap(), 0.123456789);
    assert_eq!(interpolate_quality(&p, &q0(), "a", 400.0).unwrap(), 0.75);
    assert!((interpolate_quality(&p, &q0(), "a", 300.0).unwrap() - 0.725).abs() < 1e-15);
}

#[test]
fn default_level_joins_the_curve_only_at_a_new_budget() {
    let grid = BudgetGrid::new(vec![100, 200], 200).unwrap();
    let p = table(vec![spec("a", 1.0)], grid.clone(), vec![vec![0.4, 0.8, 0.1]]);
    let f = Forecast::new(&p, &q0()).unwrap();
    assert_eq!(f.curve_points(0), vec![(100, 0.4), (200, 0.8)]);
}

#[test]
fn reactive_single_model_ignores_lambda() {
    let grid = BudgetGrid::new(vec![100, 200], 300).unwrap();
    let p = table(vec![spec("a", 1.0)], grid, vec![vec![0.4, 0.8, 0.9]]);
    for lambda in [0.0, 0.3, 1.0] {
        let d = route_reactive(&p, &q0(), &policy(lambda, 1000, RoutingMode::Reactive), &ReactiveAnchors::default()).unwrap();
        assert_eq!((d.model_id.as_str(), d.budget, d.is_default), ("a", 300, true));
        assert_eq!(d.instruction, "Use at most 300 tokens.");
    }
}

#[test]
fn reactive_ties_prefer_cheaper_then_smaller_id() {
    let grid = BudgetGrid::new(vec![100], 100).unwrap();
    // Equal score at lambda 0, different cost.
    let p = table(
        vec![spec("b", 2.0), spec("a", 5.0), spec("c", 2.0)],
        grid,
        vec![vec![0.5, 0.6], vec![0.5, 0.6], vec![0.5, 0.6]],
    );
    let d = route_reactive(&p, &q0(), &policy(0.0, 100, RoutingMode::Reactive), &ReactiveAnchors::default()).unwrap();
    assert_eq!(d.model_id, "b");
}

#[test]
fn reactive_crossover_matches_brute_force() {
    // A: quality 0.9 at 10 units, B: quality 0.6 at 1 unit; both at budget 100.
    let grid = BudgetGrid::new(vec![100], 100).unwrap();
    let pool = vec![spec("A", 10.0), spec("B", 1.0)];
    let p = table(pool.clone(), grid.clone(), vec![vec![0.0, 0.9], vec![0.0, 0.6]]);
    let scale = cost_scale(&pool, &grid);
    let (ca, cb) = (output_cost(&pool[0], 100) / scale, output_cost(&pool[1], 100) / scale);
    // (1-l)0.9 - l ca = (1-l)0.6 - l cb
    let threshold = 0.3 / (0.3 + ca - cb);
    for i in 0..=1000 {
        let lambda = i as f64 / 1000.0;
        let d = route_reactive(&p, &q0(), &policy(lambda, 100, RoutingMode::Reactive), &ReactiveAnchors::default()).unwrap();
        let sa = (1.0 - lambda) * 0.9 - lambda * ca;
        let sb = (1.0 - lambda) * 0.6 - lambda * cb;
        let expect = if sa > sb { "A" } else { "B" };
        assert_eq!(d.model_id, expect, "lambda {lambda}");
        if (lambda - threshold).abs() > 1e-9 {
            assert_eq!(d.model_id == "A", lambda < threshold);
        }
    }
}

#[test]
fn reactive_respects_assigned_anchor_and_limit() {
    let grid = BudgetGrid::new(vec![100, 200], 300).unwrap();
    let p = table(vec![spec("a", 1.0), spec("b", 1.0)], grid, vec![vec![0.1, 0.2, 0.3], vec![0.5, 0.6, 0.7]]);
    let mut anchors = ReactiveAnchors::default();
    anchors.set("a", Level::anchor(100));
    let d = route_reactive(&p, &q0(), &policy(0.0, 150, RoutingMode::Reactive), &anchors).unwrap();
    assert_eq!((d.model_id.as_str(), d.budget), ("a", 100));
    anchors.set("a", Level::anchor(999));
    assert!(matches!(
        route_reactive(&p, &q0(), &policy(0.0, 1000, RoutingMode::Reactive), &anchors),
        Err(RouteError::Predictor(PredictorError::UnknownCell { .. }))
    ));
}

#[test]
fn discrete_infeasible_limit() {
    let grid = BudgetGrid::new(vec![100, 200], 300).unwrap();
    let p = table(vec![spec("a", 1.0)], grid, vec![vec![0.4, 0.8, 0.9]]);
    let err = route_discrete(&p, &q0(), &policy(0.5, 50, RoutingMode::DiscreteCurve)).unwrap_err();
    assert!(err.to_string().contains("no feasible budget"));
}

#[test]
fn discrete_lambda_zero_is_quality_argmax() {
    let grid = BudgetGrid::new(vec![100, 200, 400], 400).unwrap();
    let p = table(
        vec![spec("a", 1.0), spec("b", 3.0)],
        grid,
        vec![vec![0.2, 0.5, 0.7, 0.6], vec![0.3, 0.9, 0.95, 0.1]],
    );
    let d = route_discrete(&p, &q0(), &policy(0.0, 400, RoutingMode::DiscreteCurve)).unwrap();
    assert_eq!((d.model_id.as_str(), d.budget), ("b", 400));
    let d = route_discrete(&p, &q0(), &policy(0.0, 399, RoutingMode::DiscreteCurve)).unwrap();
    assert_eq!((d.model_id.as_str(), d.budget), ("b", 200));
}

fn brute_force(p: &TablePredictor, policy: &RoutingPolicy) -> (String, Level, f64) {
    let scale = cost_scale(&p.pool, &p.grid);
    let levels = p.grid.levels();
    let mut best: Option<(f64, f64, String, Level)> = None;
    for (m, spec) in p.pool.iter().enumerate() {
        for (li, &l) in levels.iter().enumerate() {
            if l.budget > policy.budget_limit {
                continue;
            }
            let q = p.table[0][m * levels.len() + li];
            let c = crate::pricing::query_cost(spec, policy.input_tokens, u64::from(l.budget));
            let s = (1.0 - policy.lambda) * q - policy.lambda * c / scale;
            let key = (s, c, spec.model_id.clone(), l);
            let better = match &best {
                None => true,
                Some(b) => {
                    key.0 > b.0
                        || (key.0 == b.0 && key.1 < b.1)
                        || (key.0 == b.0 && key.1 == b.1 && (key.2.as_str(), key.3) < (b.2.as_str(), b.3))
                }
            };
            if better {
                best = Some(key);
            }
        }
    }
    let (s, _, id, l) = best.unwrap();
    (id, l, s)
}

#[test]
fn discrete_matches_enumeration_on_three_by_four() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let grid = BudgetGrid::new(vec![50, 100, 200, 400], 400).unwrap();
    for _ in 0..200 {
        let pool: Vec<ModelSpec> = ["x", "y", "z"]
            .iter()
            .map(|id| ModelSpec::new(*id, rng.random_range(0.0..2.0), rng.random_range(0.0..20.0)))
            .collect();
        let rows = (0..3).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let p = table(pool, grid.clone(), rows);
        let mut pol = policy(rng.random_range(0.0..=1.0), rng.random_range(50..500), RoutingMode::DiscreteCurve);
        pol.input_tokens = rng.random_range(0..300);
        let d = route_discrete(&p, &q0(), &pol).unwrap();
        let (id, level, s) = brute_force(&p, &pol);
        assert_eq!((d.model_id.clone(), d.level()), (id, level));
        assert!((d.score - s).abs() < 1e-12);
    }
}

#[test]
fn continuous_includes_the_limit_breakpoint() {
    let grid = BudgetGrid::new(vec![100, 200], 200).unwrap();
    let p = table(vec![spec("a", 0.0)], grid, vec![vec![0.4, 0.8, 0.8]]);
    let d = route_continuous(&p, &q0(), &policy(0.0, 150, RoutingMode::ContinuousCurve)).unwrap();
    assert_eq!(d.budget, 150);
    assert!((d.predicted_quality - 0.6).abs() < 1e-15);
}

#[test]
fn continuous_lambda_zero_equals_discrete_with_full_limit() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let grid = BudgetGrid::new(vec![50, 100, 200, 400], 400).unwrap();
    for _ in 0..100 {
        let pool = vec![spec("a", rng.random_range(0.1..5.0)), spec("b", rng.random_range(0.1..5.0))];
        let rows = (0..2).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let p = table(pool, grid.clone(), rows);
        for limit in [400, 1000] {
            let c = route_continuous(&p, &q0(), &policy(0.0, limit, RoutingMode::ContinuousCurve)).unwrap();
            let d = route_discrete(&p, &q0(), &policy(0.0, limit, RoutingMode::DiscreteCurve)).unwrap();
            assert_eq!(c, d);
        }
    }
}

#[test]
fn continuous_breakpoints_agree_with_dense_search() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    // default level sits on the last anchor, so the curve covers every head
    let grid = BudgetGrid::new(vec![40, 100, 250], 250).unwrap();
    for _ in 0..50 {
        let pool = vec![
            ModelSpec::new("a", 0.5, rng.random_range(0.1..10.0)),
            ModelSpec::new("b", 0.5, rng.random_range(0.1..10.0)),
        ];
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let r: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                vec![r[0], r[1], r[2], r[2]]
            })
            .collect();
        let p = table(pool.clone(), grid.clone(), rows);
        let mut pol = policy(rng.random_range(0.0..=1.0), rng.random_range(1..400), RoutingMode::ContinuousCurve);
        pol.input_tokens = 50;
        let d = route_continuous(&p, &q0(), &pol).unwrap();
        let f = Forecast::new(&p, &q0()).unwrap();
        let mut best = (f64::NEG_INFINITY, 0u32);
        for (m, s) in pool.iter().enumerate() {
            for b in 0..=pol.budget_limit {
                let c = crate::pricing::query_cost(s, pol.input_tokens, u64::from(b));
                let sc = score(f.interpolate(m, f64::from(b)), c, pol.lambda, f.cost_scale());
                if sc > best.0 {
                    best = (sc, b);
                }
            }
        }
        assert!((d.score - best.0).abs() < 1e-9, "{} vs {}", d.score, best.0);
        assert!(d.budget.abs_diff(best.1) <= 1 || (d.score - best.0).abs() < 1e-12);
    }
}

#[test]
fn continuous_never_scores_below_discrete_at_an_anchor_limit() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let grid = BudgetGrid::new(vec![50, 100, 200, 400], 600).unwrap();
    for _ in 0..200 {
        let pool = vec![spec("a", rng.random_range(0.1..5.0)), spec("b", rng.random_range(0.1..5.0))];
        let rows = (0..2).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let p = table(pool, grid.clone(), rows);
        let limit = [50, 100, 200, 400][rng.random_range(0..4)];
        let lambda = rng.random_range(0.0..=1.0);
        let c = route_continuous(&p, &q0(), &policy(lambda, limit, RoutingMode::ContinuousCurve)).unwrap();
        let d = route_discrete(&p, &q0(), &policy(lambda, limit, RoutingMode::DiscreteCurve)).unwrap();
        assert!(c.score >= d.score);
        if c.budget != 0 {
            assert_eq!(c.score, d.score);
        }
    }
}

#[test]
fn singleton_grid_search_spaces_coincide() {
    let grid = BudgetGrid::new(vec![100], 100).unwrap();
    let mut anchors = ReactiveAnchors::default();
    anchors.set("a", Level::anchor(100));
    anchors.set("b", Level::anchor(100));
    let p = table(vec![spec("a", 1.0), spec("b", 2.0)], grid, vec![vec![0.3, 0.2], vec![0.6, 0.9]]);
    let pol = policy(0.4, 100, RoutingMode::DiscreteCurve);
    // K = 1 means one level per model; pin each model to every level it has.
    let b = enumerate_search_spaces(&p, &q0(), &pol, &anchors).unwrap();
    assert!(b.reasoning_best >= b.reactive_best);
    let single = BudgetGrid::new(vec![100], 100).unwrap();
    let p1 = TablePredictor {
        grid: single,
        ..p.clone()
    };
    let b1 = enumerate_search_spaces(&p1, &q0(), &pol, &ReactiveAnchors::default()).unwrap();
    let mut both = ReactiveAnchors::default();
    for id in ["a", "b"] {
        both.set(id, Level::default_cap(100));
    }
    assert_eq!(b1, enumerate_search_spaces(&p1, &q0(), &pol, &both).unwrap());
}

#[test]
fn reasoning_space_can_be_strictly_better() {
    // large: great quality even at a small budget; reactive pins it to the expensive default
    let grid = BudgetGrid::new(vec![50, 500], 500).unwrap();
    let p = table(
        vec![spec("large", 10.0), spec("small", 0.5)],
        grid,
        vec![vec![0.85, 0.9, 0.9], vec![0.3, 0.4, 0.4]],
    );
    let b = enumerate_search_spaces(&p, &q0(), &policy(0.5, 500, RoutingMode::DiscreteCurve), &ReactiveAnchors::default())
        .unwrap();
    assert!(b.reasoning_best > b.reactive_best);
}

fn random_instance(seed: u64) -> (TablePredictor, RoutingPolicy, ReactiveAnchors) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..6);
    let mut anchors: Vec<u32> = (0..k).map(|_| rng.random_range(1..2000)).collect();
    anchors.sort();
    anchors.dedup();
    let grid = BudgetGrid::new(anchors, rng.random_range(1..3000)).unwrap();
    let levels = grid.levels();
    let n = rng.random_range(1..5);
    let pool: Vec<ModelSpec> = (0..n)
        .map(|i| ModelSpec::new(format!("m{i}"), rng.random_range(0.0..3.0), rng.random_range(0.0..30.0)))
        .collect();
    let mut reactive = ReactiveAnchors::default();
    for m in &pool {
        reactive.set(m.model_id.clone(), levels[rng.random_range(0..levels.len())]);
    }
    let rows = (0..n).map(|_| (0..levels.len()).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let mut pol = policy(rng.random_range(0.0..=1.0), 3000, RoutingMode::DiscreteCurve);
    pol.input_tokens = rng.random_range(0..500);
    (table(pool, grid, rows), pol, reactive)
}

proptest! {
    #[test]
    fn reasoning_dominates_reactive(seed in any::<u64>()) {
        let (p, pol, anchors) = random_instance(seed);
        let b = enumerate_search_spaces(&p, &q0(), &pol, &anchors).unwrap();
        prop_assert!(b.reasoning_best >= b.reactive_best);
    }

    #[test]
    fn decided_cost_is_monotone_in_lambda(seed in any::<u64>()) {
        let (p, pol, anchors) = random_instance(seed);
        let f = Forecast::new(&p, &q0()).unwrap();
        for mode in [RoutingMode::Reactive, RoutingMode::DiscreteCurve, RoutingMode::ContinuousCurve] {
            let mut last = f64::INFINITY;
            for i in 0..64 {
                let lambda = i as f64 / 63.0;
                let d = f.decide(&RoutingPolicy { lambda, mode, ..pol }, &anchors).unwrap();
                prop_assert!(d.predicted_cost_usd <= last);
                last = d.predicted_cost_usd;
            }
        }
    }

    #[test]
    fn routing_is_deterministic(seed in any::<u64>()) {
        let (p, pol, anchors) = random_instance(seed);
        prop_assert_eq!(route(&p, &q0(), &pol, &anchors).unwrap(), route(&p, &q0(), &pol, &anchors).unwrap());
    }
}

#[test]
fn policy_validation_and_decision_json() {
    assert!(policy(1.5, 10, RoutingMode::Reactive).validate().is_err());
    assert!(policy(0.5, 0, RoutingMode::Reactive).validate().is_err());
    let grid = BudgetGrid::new(vec![100], 100).unwrap();
    let p = table(vec![spec("a", 1.0)], grid, vec![vec![0.5, 0.5]]);
    let d = route_discrete(&p, &q0(), &policy(0.0, 100, RoutingMode::DiscreteCurve)).unwrap();
    let json = serde_json::to_string(&d).unwrap();
    let positions: Vec<usize> = [
        "query_id",
        "model_id",
        "budget",
        "predicted_quality",
        "predicted_cost_usd",
        "score",
        "instruction",
    ]
    .iter()
    .map(|k| json.find(&format!("\"{k}\":")).unwrap())
    .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{json}");
    assert!(!json.contains("is_default"));
    let mode: RoutingMode = serde_json::from_str("\"continuous_curve\"").unwrap();
    assert_eq!(mode, RoutingMode::ContinuousCurve);
}

// -- signatures --

fn signature_dataset(pool: &[ModelSpec], grid: &BudgetGrid, quality: impl Fn(usize, usize, Level) -> f64) -> Dataset {
    let queries: Vec<Query> = (0..4).map(|i| Query::new(format!("v{i}"), vec![0.0])).collect();
    let mut samples = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        for (mi, m) in pool.iter().enumerate() {
            for l in grid.levels() {
                samples.push(ResponseSample {
                    query_id: q.query_id.clone(),
                    model_id: m.model_id.clone(),
                    budget: l.budget,
                    is_default: l.is_default,
                    quality: quality(qi, mi, l),
                    actual_output_tokens: 1,
                    input_tokens: 1,
                });
            }
        }
    }
    Dataset::new(pool.to_vec(), grid.clone(), queries, samples, 1, true).unwrap()
}

#[test]
fn signature_is_zero_when_observations_match_reference() {
    let grid = BudgetGrid::new(vec![100, 200], 200).unwrap();
    let pool = vec![spec("a", 1.0), spec("b", 1.0)];
    let p = table(pool.clone(), grid.clone(), vec![vec![0.2, 0.4, 0.5], vec![0.6, 0.8, 0.9]]);
    // reference = mean of heads = 0.4 at 100, 0.6 at 200
    let ref_q = |l: Level| if l.budget == 100 { 0.4 } else { 0.6 };
    let val = signature_dataset(&pool, &grid, |_, _, l| ref_q(l));
    let s = build_signature(&p, &val, "a").unwrap();
    assert!(s.per_budget_error.values().all(|&e| e.abs() < 1e-15));
    assert_eq!(s.per_budget_error.len(), 2);
    assert_eq!(build_signature(&p, &val, "b").unwrap().per_budget_error, s.per_budget_error);
    assert!(matches!(build_signature(&p, &val, "ghost"), Err(RouteError::Coverage { .. })));
}

fn sig(id: &str, errs: &[f64]) -> ModelSignature {
    ModelSignature {
        model_id: id.into(),
        per_budget_error: errs.iter().enumerate().map(|(i, &e)| (100 * (i as u32 + 1), e)).collect(),
        mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
    }
}

#[test]
fn unseen_model_weights() {
    let grid = BudgetGrid::new(vec![100, 200], 200).unwrap();
    let p = table(
        vec![spec("a", 1.0), spec("b", 1.0)],
        grid,
        vec![vec![0.2, 0.4, 0.5], vec![0.6, 0.8, 0.9]],
    );
    let sigs = [sig("a", &[0.1, 0.1]), sig("b", &[0.5, 0.6])];
    let added = [(spec("new", 0.5), sig("new", &[0.1, 0.1]))];

    let sharp = UnseenPool::new(&p, &sigs, &added, 1e-4).unwrap();
    assert_eq!(sharp.predict(&[0.0], 2, Level::anchor(200)).unwrap(), 0.4);

    let flat = UnseenPool::new(&p, &sigs, &added, f64::INFINITY).unwrap();
    assert!((flat.predict(&[0.0], 2, Level::anchor(100)).unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(flat.weights(0), vec![("a", 0.5), ("b", 0.5)]);

    assert!(matches!(UnseenPool::new(&p, &[], &added, 0.1), Err(RouteError::EmptySignatures)));
    // The cheaper twin of "a" wins when only cost matters; "b" still wins on quality.
    let d = route_unseen(&p, &sigs, &added, &q0(), &policy(1.0, 200, RoutingMode::DiscreteCurve)).unwrap();
    assert_eq!((d.model_id.as_str(), d.budget), ("new", 100));
    let d = route_unseen(&p, &sigs, &added, &q0(), &policy(0.0, 200, RoutingMode::DiscreteCurve)).unwrap();
    assert_eq!(d.model_id, "b");
}
