use super::*;
use crate::scenegen::{generate_scene, ObjectSpec, SceneConfig};
use proptest::prelude::*;

fn rig() -> CameraRig {
    CameraRig {
        focal_px: 600.0,
        baseline_m: 0.055,
        ..CameraRig::paper()
    }
}

fn pair(p: [f64; 2], g: [f64; 2]) -> (Grid<f64>, Grid<f64>, Grid<bool>) {
    (
        Grid::from_vec(2, 1, p.to_vec()).unwrap(),
        Grid::from_vec(2, 1, g.to_vec()).unwrap(),
        Grid::filled(2, 1, true),
    )
}

#[test]
fn disparity_fixtures() {
    let (p, g, m) = pair([33.0, 66.0], [33.0, 66.0]);
    assert_eq!(epe(&p, &g, &m), 0.0);
    let (p, g, m) = pair([31.0, 36.0], [30.0, 33.0]);
    assert!((epe(&p, &g, &m) - 2.0).abs() < 1e-12);
    assert!((bad1(&p, &g, &m) - 0.5).abs() < 1e-12);
    let (p, g, m) = pair([31.0, 33.5], [30.0, 33.0]);
    assert_eq!(bad1(&p, &g, &m), 0.0, "exactly one pixel is not bad");
    let (p, g, m) = pair([32.0, 33.0], [30.0, 33.0]);
    assert!((bad1(&p, &g, &m) - 0.5).abs() < 1e-12);
}

#[test]
fn depth_fixtures() {
    let r = rig();
    let (p, g, m) = pair([33.0, 66.0], [33.0, 66.0]);
    assert_eq!(
        (abs_depth_err(&p, &g, &r, &m), frac_gt_4mm(&p, &g, &r, &m), delta105(&p, &g, &r, &m)),
        (0.0, 0.0, 1.0)
    );
    // gt depth 1.0 m at d = 33; a prediction 5 mm nearer
    let d5 = 33.0 / 0.995;
    let (p, g, m) = pair([d5, 66.0], [33.0, 66.0]);
    assert!((frac_gt_4mm(&p, &g, &r, &m) - 0.5).abs() < 1e-12);
    assert!((abs_depth_err(&p, &g, &r, &m) - 2.5).abs() < 1e-9);
    // 4.9% relative depth error everywhere
    let (p, g, m) = pair([33.0 / 1.049, 66.0 / 0.951], [33.0, 66.0]);
    assert_eq!(delta105(&p, &g, &r, &m), 1.0);
}

#[test]
fn nan_ground_truth_is_skipped() {
    let (p, g, m) = pair([31.0, 36.0], [30.0, f64::NAN]);
    assert_eq!(epe(&p, &g, &m), 1.0);
}

fn scene() -> SceneSample<f64> {
    let objects = vec![
        ObjectSpec::parse("transparent rect 40 40 20 20 30 1").unwrap(),
        ObjectSpec::parse("diffuse ellipse 90 50 24 20 26 3").unwrap(),
    ];
    generate_scene(2, &SceneConfig::fixed(CameraRig::desk(), 12.0, objects)).unwrap()
}

#[test]
fn splits_partition_all() {
    let s = scene();
    let pred = s.gt_disparity.map(|d| d + 0.5);
    for include_boundary in [true, false] {
        let r = report(&pred, &s, &EvalConfig { include_boundary });
        let n = |sp| r.split(sp).pixel_count;
        assert_eq!(n(Split::All), n(Split::Trans) + n(Split::Diffuse) + n(Split::Background));
        assert!((r.split(Split::Trans).epe_px - 0.5).abs() < 1e-12);
    }
    let r = report(&pred, &s, &EvalConfig::default());
    assert_eq!(r.split(Split::All).pixel_count, 128 * 96);
    assert_eq!(r.per_class_abs_depth_mm.len(), 2);
    assert!(r.per_class_abs_depth_mm.contains_key("transparent#1"));
}

#[test]
fn identical_predictions_give_identical_rows() {
    let s = scene();
    let pred = s.gt_disparity.map(|d| d - 0.3);
    let mut t = ComparisonTable::new("strategies");
    t.push("random", report(&pred, &s, &EvalConfig::default()));
    t.push("utility", report(&pred, &s, &EvalConfig::default()));
    let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert_eq!(lines[1].split_once(',').unwrap().1, lines[5].split_once(',').unwrap().1);
    assert!(t.to_text().contains("utility"));
    let json: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn seed_summary_statistics() {
    let s = scene();
    let reps: Vec<MetricReport> = [0.2, 0.4, 0.6]
        .iter()
        .map(|&e| report(&s.gt_disparity.map(|d| d + e), &s, &EvalConfig::default()))
        .collect();
    let sum = SeedSummary::new("x", &[("a".into(), reps)]);
    let row = sum.row("a", Split::All).unwrap();
    assert!((row.mean[0] - 0.4).abs() < 1e-12);
    assert!((row.std[0] - 0.2).abs() < 1e-12);
    assert!(String::from_utf8(sum.to_csv().unwrap()).unwrap().starts_with("label,split,seeds,epe_px_mean"));
}

proptest! {
    #[test]
    fn metrics_are_order_invariant_and_additive(errs in proptest::collection::vec(-3.0f64..3.0, 2..40), split in 1usize..39) {
        let n = errs.len();
        let split = split.min(n - 1);
        let gt = Grid::from_fn(n, 1, |u, _| 20.0 + (u % 7) as f64);
        let pred = Grid::from_fn(n, 1, |u, _| gt.get(u, 0) + errs[u]);
        let rev_gt = Grid::from_fn(n, 1, |u, _| gt.get(n - 1 - u, 0));
        let rev_pred = Grid::from_fn(n, 1, |u, _| pred.get(n - 1 - u, 0));
        let all = Grid::filled(n, 1, true);
        let r = rig();
        prop_assert!((epe(&pred, &gt, &all) - epe(&rev_pred, &rev_gt, &all)).abs() < 1e-12);
        prop_assert!((abs_depth_err(&pred, &gt, &r, &all) - abs_depth_err(&rev_pred, &rev_gt, &r, &all)).abs() < 1e-9);
        let a = Grid::from_fn(n, 1, |u, _| u < split);
        let b = Grid::from_fn(n, 1, |u, _| u >= split);
        let weighted = (epe(&pred, &gt, &a) * split as f64 + epe(&pred, &gt, &b) * (n - split) as f64) / n as f64;
        prop_assert!((weighted - epe(&pred, &gt, &all)).abs() < 1e-12);
        for f in [bad1(&pred, &gt, &all), frac_gt_4mm(&pred, &gt, &r, &all), delta105(&pred, &gt, &r, &all)] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
