mod common;

use std::collections::BTreeSet;

use ppad::encoder::{predict, predict_pair, FeatureVector};
use ppad::imaging::{BinaryMask, GrayImage};
use ppad::inference::{aggregate, average_precision, roc_auc, ViewProbabilities};
use ppad::linalg::{dot, Matrix};
use ppad::maskgen::{convex_hull, cross, generate_mask, rasterize_fill, signed_area, MaskParams, MaskSpec, Point2D};
use ppad::prompts::PromptParams;
use ppad::rng;
use ppad::synth::{apply_gamma, distance_transform, gamma_field, Label, DEFAULT_WEIGHTS};
use ppad::trainer::{Checkpoint, TrainConfig};
use proptest::prelude::*;

fn on_segment(p: Point2D, a: Point2D, b: Point2D) -> bool {
    cross(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn in_triangle(p: Point2D, a: Point2D, b: Point2D, c: Point2D) -> bool {
    let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// Extreme points by exhaustion: a point is a hull vertex unless it lies in
/// a closed triangle or on a segment spanned by other points.
fn brute_hull_vertices(points: &[Point2D]) -> BTreeSet<(i64, i64)> {
    let n = points.len();
    let mut out = BTreeSet::new();
    'next: for i in 0..n {
        let p = points[i];
        let others: Vec<Point2D> = (0..n).filter(|&j| j != i).map(|j| points[j]).collect();
        for a in 0..others.len() {
            for b in a + 1..others.len() {
                if on_segment(p, others[a], others[b]) {
                    continue 'next;
                }
                for c in b + 1..others.len() {
                    if cross(others[a], others[b], others[c]) != 0.0 && in_triangle(p, others[a], others[b], others[c]) {
                        continue 'next;
                    }
                }
            }
        }
        out.insert((p.x as i64, p.y as i64));
    }
    out
}

fn pnpoly(poly: &[Point2D], px: f64, py: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn int_points(max_len: usize, span: i64) -> impl Strategy<Value = Vec<Point2D>> {
    prop::collection::btree_set((0..span, 0..span), 3..=max_len)
        .prop_map(|s| s.into_iter().map(|(x, y)| Point2D::new(x as f64, y as f64)).collect())
}

fn mask_strategy(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side, any::<u64>()).prop_map(|(w, h, seed)| common::random_mask(&mut rng::seeded(seed), w, h))
}

fn unit_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("nonzero", |v| dot(v, v) > 1e-6)
        .prop_map(|v| FeatureVector::normalized(v).as_slice().to_vec())
}

/// Gram–Schmidt on a Gaussian matrix gives a random orthogonal map.
fn orthogonal(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = Matrix::gaussian(dim, dim, 1.0, &mut rng::seeded(seed));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in 0..dim {
        let mut v = g.row(r).to_vec();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&v, &v).sqrt();
        basis.push(v.into_iter().map(|x| x / n).collect());
    }
    basis
}

fn rotate(q: &[Vec<f64>], v: &[f64]) -> FeatureVector {
    FeatureVector::normalized(q.iter().map(|row| dot(row, v)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn hull_matches_exhaustive_extreme_points(points in int_points(12, 20)) {
        let all_collinear = points.windows(3).all(|w| cross(w[0], w[1], w[2]) == 0.0)
            && points.iter().all(|&p| cross(points[0], points[1], p) == 0.0);
        match convex_hull(&points) {
            Err(_) => prop_assert!(all_collinear),
            Ok(hull) => {
                prop_assert!(!all_collinear);
                let got: BTreeSet<(i64, i64)> = hull.iter().map(|p| (p.x as i64, p.y as i64)).collect();
                prop_assert_eq!(got.len(), hull.len());
                prop_assert_eq!(got, brute_hull_vertices(&points));
                prop_assert!(signed_area(&hull) > 0.0);
                for i in 0..hull.len() {
                    let (a, b, c) = (hull[i], hull[(i + 1) % hull.len()], hull[(i + 2) % hull.len()]);
                    prop_assert!(cross(a, b, c) > 0.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn scanline_fill_matches_point_in_polygon(
        points in prop::collection::vec((1.0f64..39.0, 1.0f64..29.0), 3..10)
    ) {
        let pts: Vec<Point2D> = points.iter().map(|&(x, y)| Point2D::new(x, y)).collect();
        let Ok(hull) = convex_hull(&pts) else { return Ok(()) };
        let oracle = BinaryMask::from_fn(40, 30, |x, y| pnpoly(&hull, x as f64 + 0.5, y as f64 + 0.5));
        match rasterize_fill(&hull, 40, 30) {
            Ok(mask) => prop_assert_eq!(mask, oracle.largest_component()),
            Err(_) => prop_assert!(oracle.is_empty()),
        }
    }

    #[test]
    fn distance_transform_is_exact(mask in mask_strategy(32)) {
        let sq = common::brute_force_sq_edt(&mask);
        match distance_transform(&mask) {
            Err(_) => prop_assert!(mask.is_empty()),
            Ok(d) => {
                for (got, want) in d.as_slice().iter().zip(&sq) {
                    prop_assert_eq!(*got, (*want as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn gamma_field_respects_its_bounds(mask in mask_strategy(24), wi in 0usize..4) {
        prop_assume!(!mask.is_empty());
        let w = DEFAULT_WEIGHTS[wi];
        let g = gamma_field(&mask, w).unwrap();
        let (lo, hi) = (1.0f64.min(1.0 + w), 1.0f64.max(1.0 + w));
        let mut inside_min = f64::INFINITY;
        for (&m, &v) in mask.as_slice().iter().zip(g.as_slice()) {
            prop_assert!(v > 0.0);
            if m {
                prop_assert!(v >= lo && v <= hi);
                inside_min = inside_min.min(v);
            } else {
                prop_assert_eq!(v, 1.0);
            }
        }
        if w < 0.0 {
            prop_assert!((inside_min - (1.0 + w)).abs() < 1e-12);
        }
    }

    #[test]
    fn power_map_keeps_outside_pixels_and_order(mask in mask_strategy(24), wi in 0usize..4, seed in any::<u64>()) {
        prop_assume!(!mask.is_empty());
        let (w, h) = mask.dims();
        let img = GrayImage::new(w, h, Matrix::uniform(1, w * h, 1.0, &mut rng::seeded(seed)).as_slice().iter().map(|v| v.abs()).collect()).unwrap();
        let g = gamma_field(&mask, DEFAULT_WEIGHTS[wi]).unwrap();
        let out = apply_gamma(&img, &g).unwrap();
        for (k, &m) in mask.as_slice().iter().enumerate() {
            let (a, b) = (img.as_slice()[k], out.as_slice()[k]);
            prop_assert!((0.0..=1.0).contains(&b));
            if !m {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // pixels sharing one exponent keep their order
        let mut by_gamma: Vec<(u64, f64, f64)> = (0..w * h).map(|k| (g.as_slice()[k].to_bits(), img.as_slice()[k], out.as_slice()[k])).collect();
        by_gamma.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for pair in by_gamma.windows(2) {
            if pair[0].0 == pair[1].0 {
                prop_assert!(pair[0].2 <= pair[1].2);
            }
        }
    }

    #[test]
    fn prediction_depends_on_angles_only(
        img in unit_vec(6), n in unit_vec(6), p in unit_vec(6), scale in 0.0f64..15.0, seed in any::<u64>()
    ) {
        let q = orthogonal(6, seed);
        let (fi, fn_, fp) = (FeatureVector::normalized(img.clone()), FeatureVector::normalized(n.clone()), FeatureVector::normalized(p.clone()));
        let before = predict(&fi, &fn_, &fp, scale);
        let after = predict(&rotate(&q, &img), &rotate(&q, &n), &rotate(&q, &p), scale);
        prop_assert!((before - after).abs() < 1e-9);
        let (normal, abnormal) = predict_pair(&fi, &fn_, &fp, scale);
        prop_assert_eq!(normal + abnormal, 1.0);
        prop_assert!(abnormal > 0.0 && abnormal < 1.0);
    }

    #[test]
    fn aggregation_ignores_view_order(probs in prop::array::uniform5(0.0f64..1.0), eta in 0.05f64..0.95, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let base = aggregate(&ViewProbabilities(probs), eta);
        let mut shuffled = probs;
        shuffled.shuffle(&mut rng::seeded(seed));
        prop_assert_eq!(base.to_bits(), aggregate(&ViewProbabilities(shuffled), eta).to_bits());
        let max = probs.iter().copied().fold(0.0, f64::max);
        if max > eta {
            prop_assert_eq!(base, max);
        } else {
            prop_assert!(base <= max && base >= probs.iter().copied().fold(1.0, f64::min));
        }
    }

    #[test]
    fn auc_matches_pairwise_counting(seed in any::<u64>()) {
        let scores = common::random_scores(&mut rng::seeded(seed), 50);
        let auc = roc_auc(&scores).unwrap();
        prop_assert!((auc - common::pairwise_auc(&scores)).abs() < 1e-12);
        // strictly increasing transforms change nothing
        let warped: Vec<(f64, Label)> = scores.iter().map(|&(s, l)| ((3.0 * s).exp() - 7.0, l)).collect();
        prop_assert_eq!(roc_auc(&warped).unwrap(), auc);
        let ap = average_precision(&scores).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert_eq!(average_precision(&warped).unwrap(), ap);
    }

    #[test]
    fn resize_stays_within_source_range(w in 1usize..20, h in 1usize..20, tw in 1usize..30, th in 1usize..30, seed in any::<u64>()) {
        let m = Matrix::uniform(1, w * h, 1.0, &mut rng::seeded(seed));
        let img = GrayImage::new(w, h, m.as_slice().iter().map(|v| v.abs()).collect()).unwrap();
        let (lo, hi) = img.min_max();
        let out = img.resize(tw, th).unwrap();
        prop_assert_eq!(out.dims(), (tw, th));
        for &v in out.as_slice() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
        prop_assert_eq!(img.resize(w, h).unwrap(), img);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), epoch in 0usize..1000, lt in 1usize..5) {
        let config = TrainConfig { seed, text_prompt_len: lt, ..TrainConfig::default() };
        let n = config.grid().unwrap().n_patches();
        let params = PromptParams::gaussian(lt, n, config.embed_dim, 1.0, &mut rng::seeded(seed));
        let ck = Checkpoint { params, frozen_hash: seed.rotate_left(7), config, epoch };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn generated_masks_meet_their_contract(seed in any::<u64>(), half in 0usize..5) {
        // region: the full 64×64 image or one of its halves
        let region = BinaryMask::from_fn(64, 64, |x, y| match half {
            0 => x < 32,
            1 => x >= 32,
            2 => y < 32,
            3 => y >= 32,
            _ => true,
        });
        let params = MaskParams::default();
        let mask = generate_mask(&MaskSpec::new(region.clone(), seed)).unwrap();
        prop_assert!(mask.is_subset_of(&region));
        prop_assert_eq!(mask.component_count(), 1);
        let frac = mask.count() as f64 / region.count() as f64;
        prop_assert!(frac >= params.area_bounds.0 && frac <= params.area_bounds.1, "area fraction {}", frac);
    }
}
