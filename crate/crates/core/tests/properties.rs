use std::sync::OnceLock;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use intersect_core::bounds::{anticorrelation_ceiling, q_matrix};
use intersect_core::{
    aggregate, attainable_region, dominance_test, gradient_pair, membership, metric_d, metric_s, metric_s_n, pca2,
    region_for_schema, shared_count_distribution, sweep, witness, IdentityDistribution, Individual, Membership,
    PairSampling, PerformancePoint, Point2, Segment, SweepResult, TraitSchema,
};

fn schema_strategy(max_traits: usize, max_values: usize) -> impl Strategy<Value = TraitSchema> {
    prop::collection::vec(2..=max_values, 1..=max_traits).prop_map(|c| TraitSchema::from_cardinalities(&c).unwrap())
}

fn group_strategy() -> impl Strategy<Value = (TraitSchema, Vec<Individual>)> {
    schema_strategy(4, 5).prop_flat_map(|schema| {
        let member = schema.cardinalities().into_iter().map(|v| 0..v).collect::<Vec<_>>();
        (Just(schema), prop::collection::vec(member, 2..=12))
    })
    .prop_map(|(schema, rows)| {
        let group = rows.into_iter().enumerate().map(|(i, v)| Individual::new(i.to_string(), v)).collect();
        (schema, group)
    })
}

/// Schema plus a distribution over its cells, with some exact zeros.
fn distribution_strategy() -> impl Strategy<Value = IdentityDistribution> {
    schema_strategy(4, 6)
        .prop_flat_map(|schema| {
            let c = schema.num_cells();
            (Just(schema), prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64, 0.0..1e-3f64], c))
        })
        .prop_filter("some mass", |(_, w)| w.iter().sum::<f64>() > 1e-9)
        .prop_map(|(schema, w)| {
            let total: f64 = w.iter().sum();
            IdentityDistribution::new(schema, w.iter().map(|x| x / total).collect()).unwrap()
        })
}

fn metrics_of(schema: &TraitSchema, group: &[Individual]) -> (f64, f64, f64) {
    let dist = aggregate(group, schema).unwrap();
    (metric_d(&dist).unwrap(), metric_s(&dist).unwrap(), metric_s_n(group).unwrap())
}

proptest! {
    #[test]
    fn metrics_lie_in_unit_interval_and_ignore_member_order((schema, group) in group_strategy(), seed: u64) {
        let (d, s, s_n) = metrics_of(&schema, &group);
        for x in [d, s, s_n] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        let mut shuffled = group.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(metrics_of(&schema, &shuffled), (d, s, s_n));
    }

    #[test]
    fn duplicating_members_keeps_d_and_s_but_inflates_s_n((schema, group) in group_strategy(), copies in 2usize..5) {
        let (d, s, s_n) = metrics_of(&schema, &group);
        let bigger: Vec<Individual> = group.iter().cycle().take(group.len() * copies).cloned().collect();
        let (d2, s2, s_n2) = metrics_of(&schema, &bigger);
        prop_assert!((d - d2).abs() <= 1e-12 && (s - s2).abs() <= 1e-12);
        if s < 1.0 - 1e-12 {
            prop_assert!(s_n2 > s_n);
        } else {
            prop_assert!((s_n2 - s_n).abs() <= 1e-12);
        }
    }

    #[test]
    fn d_is_the_normalized_chance_of_differing((schema, group) in group_strategy()) {
        let c = schema.num_cells() as f64;
        let dist = shared_count_distribution(&group, PairSampling::WithReplacement).unwrap();
        let all_shared = dist.probs[dist.num_traits()];
        let d = metric_d(&aggregate(&group, &schema).unwrap()).unwrap();
        prop_assert!((d - c / (c - 1.0) * (1.0 - all_shared)).abs() <= 1e-12);
    }

    #[test]
    fn single_trait_projection_lies_on_its_line((schema, group) in group_strategy(), pick: prop::sample::Index) {
        let t = pick.index(schema.num_traits());
        let single = schema.project(&[t]).unwrap();
        let projected: Vec<Individual> = group.iter().map(|i| i.project(&[t])).collect();
        let dist = aggregate(&projected, &single).unwrap();
        let c = single.num_cells() as f64;
        let (d, s) = (metric_d(&dist).unwrap(), metric_s(&dist).unwrap());
        prop_assert!((s - (1.0 - (c - 1.0) / c * d)).abs() <= 1e-12);
    }

    #[test]
    fn distributions_respect_the_region(dist in distribution_strategy()) {
        let region = region_for_schema(dist.schema()).unwrap();
        let (d, s) = (metric_d(&dist).unwrap(), metric_s(&dist).unwrap());
        prop_assert!(region.slack(d, s) >= -1e-10, "slack {}", region.slack(d, s));
        let g = gradient_pair(&dist).unwrap();
        prop_assert!(g.inner <= anticorrelation_ceiling(dist.schema()) + 1e-10);
    }

    #[test]
    fn quadratic_form_reproduces_s(dist in distribution_strategy()) {
        let q = q_matrix(dist.schema()).unwrap();
        let p = DVector::from_column_slice(dist.probs());
        prop_assert!((0.5 * p.dot(&(&q * &p)) - metric_s(&dist).unwrap()).abs() <= 1e-12);
        // the all-ones vector is an eigenvector with eigenvalue 2C·s_min
        let c = dist.schema().num_cells();
        let ones = DVector::from_element(c, 1.0);
        let lambda = 2.0 * c as f64 * dist.schema().s_min();
        prop_assert!((&q * &ones - &ones * lambda).amax() <= 1e-10);
    }

    #[test]
    fn witnesses_are_valid_and_on_their_segments(v1 in 2usize..=6, extra in 0usize..=4, seg in 0usize..4, t in 0.0..=1.0f64) {
        let region = attainable_region(v1, v1 + extra).unwrap();
        let seg = Segment::ALL[seg];
        let (lo, hi) = region.alpha_range(seg);
        let w = witness(&region, seg, lo + t * (hi - lo)).unwrap();
        let p = w.dist.probs();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let (a, b) = region.endpoints(seg);
        let (dx, dy) = (b.d - a.d, b.s - a.s);
        let off = ((w.point.d - a.d) * dy - (w.point.s - a.s) * dx).abs() / dx.hypot(dy);
        prop_assert!(off <= 1e-10);
    }

    #[test]
    fn two_trait_distributions_are_never_outside(v1 in 2usize..=5, extra in 0usize..=3, w in prop::collection::vec(0.0..1.0f64, 64)) {
        let region = attainable_region(v1, v1 + extra).unwrap();
        let c = region.c;
        let total: f64 = w[..c].iter().sum();
        prop_assume!(total > 1e-9);
        let dist = IdentityDistribution::new(region.schema(), w[..c].iter().map(|x| x / total).collect()).unwrap();
        let point = Point2::new(metric_d(&dist).unwrap(), metric_s(&dist).unwrap());
        prop_assert_ne!(membership(&region, point, 1e-9), Membership::Outside);
    }

    #[test]
    fn pca_ratio_is_rotation_invariant(pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4..40), angle in 0.0..std::f64::consts::TAU) {
        let base = pca2(&pts);
        prop_assume!(base.as_ref().is_ok_and(|b| !b.isotropic && !b.vertical && b.slope.abs() > 1e-6));
        let base = base.unwrap();
        let (sin, cos) = angle.sin_cos();
        let rotated: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (cos * x - sin * y, sin * x + cos * y)).collect();
        let turned = pca2(&rotated).unwrap();
        prop_assert!((turned.ratio - base.ratio).abs() <= 1e-10);
        let quarter: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (-y, x)).collect();
        let q = pca2(&quarter).unwrap();
        prop_assert!((q.slope * base.slope + 1.0).abs() <= 1e-8 * (1.0 + base.slope.abs().max(1.0 / base.slope.abs())));
    }

    #[test]
    fn dominance_depends_only_on_orderings(raw in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, -5.0..5.0f64), 5..40)) {
        let points: Vec<PerformancePoint> = raw
            .iter()
            .enumerate()
            .map(|(i, &(d, s, performance))| PerformancePoint { id: i.to_string(), d, s, performance })
            .collect();
        let warped: Vec<PerformancePoint> = points
            .iter()
            .map(|p| PerformancePoint { d: p.d.powi(3), s: p.s.exp(), performance: p.performance.atan(), ..p.clone() })
            .collect();
        let a = dominance_test(&points, 20, 1, false).unwrap();
        let b = dominance_test(&warped, 20, 1, false).unwrap();
        prop_assert_eq!(a.n_cases, b.n_cases);
        prop_assert_eq!(a.observed_fraction, b.observed_fraction);
    }
}

fn reference_sweep() -> &'static (TraitSchema, SweepResult) {
    static SWEEP: OnceLock<(TraitSchema, SweepResult)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let schema = TraitSchema::from_cardinalities(&[2, 3]).unwrap();
        let result = sweep(&schema, 101, 20, 1).unwrap();
        (schema, result)
    })
}

#[test]
fn sweep_outputs_are_feasible_and_within_the_region() {
    let (schema, result) = reference_sweep();
    let region = region_for_schema(schema).unwrap();
    for p in &result.points {
        for q in [&p.argmax, &p.argmin] {
            assert!(q.iter().all(|&x| x >= -1e-10));
            assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
        assert!(p.residual_max.abs() <= 1e-8 && p.residual_min.abs() <= 1e-8);
        assert!(p.s_min <= p.s_max);
        assert!(p.s_max <= region.upper_bound(p.d) + 1e-6);
        assert!(p.s_min >= region.lower_bound(p.d) - 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn random_distributions_sit_between_the_sweep_curves(w in prop::collection::vec(0.0..1.0f64, 6), sparse in prop::collection::vec(any::<bool>(), 6)) {
        let (schema, result) = reference_sweep();
        let p: Vec<f64> = w.iter().zip(&sparse).map(|(x, z)| if *z { 0.0 } else { *x }).collect();
        let total: f64 = p.iter().sum();
        prop_assume!(total > 1e-9);
        let dist = IdentityDistribution::new(schema.clone(), p.iter().map(|x| x / total).collect()).unwrap();
        let (d, s) = (metric_d(&dist).unwrap(), metric_s(&dist).unwrap());
        let (lo, hi) = result.envelope_at(d).unwrap();
        prop_assert!(s >= lo - 1e-4 && s <= hi + 1e-4, "d = {d}, s = {s}, envelope [{lo}, {hi}]");
    }
}

#[test]
fn monte_carlo_soundness_for_three_by_six() {
    let region = attainable_region(3, 6).unwrap();
    let schema = region.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..100_000 {
        let mut p: Vec<f64> = (0..18).map(|_| -rng.random::<f64>().ln().powi(3)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        let dist = IdentityDistribution::new(schema.clone(), p).unwrap();
        let point = Point2::new(metric_d(&dist).unwrap(), metric_s(&dist).unwrap());
        assert_ne!(membership(&region, point, 1e-9), Membership::Outside, "{point:?}");
    }
}

#[test]
fn proved_segments_share_the_region_slopes() {
    for (v1, v2) in [(2, 2), (2, 6), (3, 6), (4, 5)] {
        let region = attainable_region(v1, v2).unwrap();
        let polygon = region_for_schema(&region.schema()).unwrap();
        let slope = |a: Point2, b: Point2| (b.s - a.s) / (b.d - a.d);
        assert!((slope(region.p1, region.p2) + polygon.upper_slope).abs() <= 1e-14);
        assert!((slope(region.p1, region.p4) + polygon.lower_slope).abs() <= 1e-14);
    }
}
