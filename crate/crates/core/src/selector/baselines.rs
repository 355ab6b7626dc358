//! Reference strategies: random, lowest-confidence and transparent-centre.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::confidence::confidence_map;
use super::touches::{Strategy, Touch, TouchSet};
use super::{SelectView, SelectionConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::scenegen::Material;
use crate::stereomodel::{forward, DisparityHypotheses, ModelState};

fn touch_at<T>(view: &SelectView<'_, T>, u: usize, v: usize) -> Touch {
    Touch {
        scene_id: view.sample.scene_id,
        view_id: view.sample.view_id,
        u,
        v,
    }
}

fn shortfall<T>(view: &SelectView<'_, T>, needed: usize, available: usize) -> Error {
    Error::Shortfall {
        view: format!("scene {} view {}", view.sample.scene_id, view.sample.view_id),
        needed,
        available,
    }
}

fn candidate_list<T>(view: &SelectView<'_, T>) -> Vec<(usize, usize)> {
    view.candidates.iter_indexed().filter(|&(_, _, c)| c).map(|(u, v, _)| (u, v)).collect()
}

/// Uniform draws without replacement from each view's candidates.
pub fn baseline_random<T: Real>(views: &[SelectView<'_, T>], cfg: &SelectionConfig, seed: u64) -> Result<TouchSet> {
    let mut set = TouchSet::default();
    for (k, view) in views.iter().enumerate() {
        let pool = candidate_list(view);
        if pool.len() < cfg.n {
            return Err(shortfall(view, cfg.n, pool.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for i in rand::seq::index::sample(&mut rng, pool.len(), cfg.n) {
            let (u, v) = pool[i];
            set.push(touch_at(view, u, v), Strategy::Random);
        }
    }
    Ok(set)
}

/// Lowest pretrained confidence first, keeping `min_spacing` between the
/// touches of one view.
pub fn baseline_confidence<T: Real>(
    pretrained: &ModelState<T>,
    views: &[SelectView<'_, T>],
    hyps: &DisparityHypotheses<T>,
    cfg: &SelectionConfig,
) -> Result<TouchSet> {
    let mut set = TouchSet::default();
    for view in views {
        let fwd = forward(&view.input, pretrained, hyps);
        let conf = confidence_map(&fwd.prob, &fwd.pred, hyps, T::lit(cfg.epsilon));
        let mut pool = candidate_list(view);
        // stable sort keeps row-major order among equal confidences
        pool.sort_by(|a, b| conf.get(a.0, a.1).partial_cmp(&conf.get(b.0, b.1)).expect("finite confidence"));
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(cfg.n);
        for (u, v) in pool {
            let far = chosen.iter().all(|&(a, b)| {
                let (du, dv) = (a as f64 - u as f64, b as f64 - v as f64);
                (du * du + dv * dv).sqrt() >= cfg.min_spacing
            });
            if far {
                chosen.push((u, v));
                if chosen.len() == cfg.n {
                    break;
                }
            }
        }
        if chosen.len() < cfg.n {
            return Err(shortfall(view, cfg.n, chosen.len()));
        }
        for (u, v) in chosen {
            set.push(touch_at(view, u, v), Strategy::Confidence);
        }
    }
    Ok(set)
}

/// 4-connected components of `mask`, each listed in row-major order.
pub(crate) fn components(mask: &Grid<bool>) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = Grid::filled(w, h, false);
    let mut out = Vec::new();
    for (u0, v0, m) in mask.iter_indexed() {
        if !m || seen.get(u0, v0) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![(u0, v0)];
        seen.set(u0, v0, true);
        while let Some((u, v)) = stack.pop() {
            comp.push((u, v));
            let mut visit = |x: usize, y: usize| {
                if mask.get(x, y) && !seen.get(x, y) {
                    seen.set(x, y, true);
                    stack.push((x, y));
                }
            };
            if u > 0 {
                visit(u - 1, v);
            }
            if u + 1 < w {
                visit(u + 1, v);
            }
            if v > 0 {
                visit(u, v - 1);
            }
            if v + 1 < h {
                visit(u, v + 1);
            }
        }
        comp.sort_by_key(|&(u, v)| (v, u));
        out.push(comp);
    }
    out
}

/// Touches the centres of transparent regions, largest first, cycling
/// through them when a view needs more touches than it has regions.
pub fn baseline_oracle_center<T: Real>(views: &[SelectView<'_, T>], cfg: &SelectionConfig) -> Result<TouchSet> {
    let mut set = TouchSet::default();
    for view in views {
        let transparent = Grid::from_fn(view.sample.width(), view.sample.height(), |u, v| {
            view.sample.material.get(u, v) == Material::Transparent && view.candidates.get(u, v)
        });
        let mut comps = components(&transparent);
        // stable: equal areas keep first-pixel order
        comps.sort_by(|a, b| b.len().cmp(&a.len()));
        let available: usize = comps.iter().map(Vec::len).sum();
        if available < cfg.n {
            return Err(shortfall(view, cfg.n, available));
        }
        let centroids: Vec<(f64, f64)> = comps
            .iter()
            .map(|c| {
                let n = c.len() as f64;
                let su: f64 = c.iter().map(|p| p.0 as f64).sum();
                let sv: f64 = c.iter().map(|p| p.1 as f64).sum();
                (su / n, sv / n)
            })
            .collect();
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(cfg.n);
        let mut k = 0;
        while chosen.len() < cfg.n {
            let (cu, cv) = centroids[k % comps.len()];
            let best = comps[k % comps.len()]
                .iter()
                .filter(|p| !chosen.contains(p))
                .min_by(|a, b| {
                    let da = (a.0 as f64 - cu).powi(2) + (a.1 as f64 - cv).powi(2);
                    let db = (b.0 as f64 - cu).powi(2) + (b.1 as f64 - cv).powi(2);
                    da.partial_cmp(&db).expect("finite distance")
                })
                .copied();
            if let Some(p) = best {
                chosen.push(p);
            }
            k += 1;
        }
        for (u, v) in chosen {
            set.push(touch_at(view, u, v), Strategy::OracleCenter);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, CameraRig, ObjectKind, ObjectSpec, SceneConfig, SceneSample, Shape};
    use crate::stereomodel::DescriptorConfig;

    fn scene(objects: Vec<ObjectSpec>) -> SceneSample<f64> {
        generate_scene(9, &SceneConfig::fixed(CameraRig::desk(), 12.0, objects)).unwrap()
    }

    fn transparent(cx: f64, cy: f64, w: f64) -> ObjectSpec {
        ObjectSpec {
            kind: ObjectKind::Transparent,
            shape: Shape::Rect { cx, cy, w, h: w },
            disparity: 30.0,
            instance: 0,
        }
    }

    #[test]
    fn oracle_hits_centre_of_centred_square() {
        let s = scene(vec![transparent(64.0, 48.0, 21.0)]);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let view = SelectView::new(&s, DescriptorConfig::default(), &hyps, true);
        let cfg = SelectionConfig { n: 1, ..SelectionConfig::desk() };
        let set = baseline_oracle_center(&[view], &cfg).unwrap();
        let r = set.records[0];
        // rect spans [53.5, 74.5) so pixels 54..=74 with centre 64
        assert_eq!((r.u, r.v), (64, 48));
    }

    #[test]
    fn oracle_cycles_largest_first_without_duplicates() {
        let s = scene(vec![transparent(40.0, 30.0, 12.0), transparent(90.0, 60.0, 20.0)]);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let view = SelectView::new(&s, DescriptorConfig::default(), &hyps, true);
        let cfg = SelectionConfig { n: 5, ..SelectionConfig::desk() };
        let set = baseline_oracle_center(&[view], &cfg).unwrap();
        assert!(set.all_distinct());
        let r = &set.records;
        assert!(r[0].u > 64 && r[2].u > 64 && r[4].u > 64);
        assert!(r[1].u < 64 && r[3].u < 64);
    }

    #[test]
    fn oracle_without_transparent_pixels_reports_shortfall() {
        let s = scene(vec![]);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let view = SelectView::new(&s, DescriptorConfig::default(), &hyps, true);
        let err = baseline_oracle_center(&[view], &SelectionConfig::desk()).unwrap_err();
        assert!(matches!(err, Error::Shortfall { needed: 5, available: 0, .. }));
    }

    #[test]
    fn random_is_reproducible_and_valid() {
        let s = scene(vec![transparent(64.0, 48.0, 21.0)]);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let view = SelectView::new(&s, DescriptorConfig::default(), &hyps, true);
        let cfg = SelectionConfig::desk();
        let a = baseline_random(std::slice::from_ref(&view), &cfg, 17).unwrap();
        let b = baseline_random(std::slice::from_ref(&view), &cfg, 17).unwrap();
        let c = baseline_random(std::slice::from_ref(&view), &cfg, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.all_distinct());
        assert!(a.records.iter().all(|r| view.candidates.get(r.u, r.v)));
    }

    #[test]
    fn confidence_baseline_respects_spacing() {
        let s = scene(vec![transparent(64.0, 48.0, 21.0)]);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let state = ModelState::random(2, 8, DescriptorConfig::default(), 0.3);
        let view = SelectView::new(&s, state.descriptor, &hyps, true);
        let cfg = SelectionConfig::desk();
        let set = baseline_confidence(&state, &[view], &hyps, &cfg).unwrap();
        assert_eq!(set.len(), 5);
        for (i, a) in set.records.iter().enumerate() {
            for b in &set.records[i + 1..] {
                let d = ((a.u as f64 - b.u as f64).powi(2) + (a.v as f64 - b.v as f64).powi(2)).sqrt();
                assert!(d >= 20.0);
            }
        }
    }
}
