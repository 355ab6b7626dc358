//! Confidence maps and the smoothed unconfident-region mask.

use crate::grid::Grid;
use crate::scalar::Real;
use crate::stereomodel::{DisparityHypotheses, ProbabilityVolume};

/// Probability mass strictly within `epsilon` of the predicted disparity.
pub fn confidence_map<T: Real>(
    prob: &ProbabilityVolume<T>,
    pred: &Grid<T>,
    hyps: &DisparityHypotheses<T>,
    epsilon: T,
) -> Grid<T> {
    let d = hyps.values();
    Grid::from_fn(prob.width, prob.height, |u, v| {
        let p = prob.at(u, v);
        let f = pred.get(u, v);
        let c: T = p
            .iter()
            .zip(d)
            .filter(|&(_, &dk)| (dk - f).abs() < epsilon)
            .map(|(&pk, _)| pk)
            .sum();
        c.min(T::one())
    })
}

/// `true` where confidence is at most `c1`.
pub fn unconfident_mask<T: Real>(confidence: &Grid<T>, c1: T) -> Grid<bool> {
    confidence.map(|c| c <= c1)
}

/// Normalised 1D Gaussian truncated at three standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Separable Gaussian blur of a binary mask with zero padding.
pub fn smooth_mask<T: Real>(mask: &Grid<bool>, sigma: f64) -> Grid<T> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (mask.width(), mask.height());
    let mut tmp = vec![0.0f64; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for (j, &kj) in k.iter().enumerate() {
                let x = u as isize + j as isize - r;
                if x >= 0 && (x as usize) < w && mask.get(x as usize, v) {
                    acc += kj;
                }
            }
            tmp[v * w + u] = acc;
        }
    }
    Grid::from_fn(w, h, |u, v| {
        let mut acc = 0.0;
        for (j, &kj) in k.iter().enumerate() {
            let y = v as isize + j as isize - r;
            if y >= 0 && (y as usize) < h {
                acc += kj * tmp[y as usize * w + u];
            }
        }
        T::lit(acc)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereomodel::Volume;
    use proptest::prelude::*;

    fn single(p: Vec<f64>) -> ProbabilityVolume<f64> {
        Volume { width: 1, height: 1, depth: p.len(), data: p }
    }

    #[test]
    fn one_hot_is_fully_confident() {
        let h = DisparityHypotheses::integer_range(10, 14).unwrap();
        let p = single(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let pred = Grid::filled(1, 1, 12.0);
        assert_eq!(confidence_map(&p, &pred, &h, 0.5).get(0, 0), 1.0);
    }

    /// Uniform over 12..=96 predicts 54; hypotheses 50..=58 lie strictly
    /// within 5 of it.
    #[test]
    fn uniform_confidence_counts_neighbourhood() {
        let h: DisparityHypotheses<f64> = DisparityHypotheses::integer_range(12, 96).unwrap();
        let p = single(vec![1.0 / 85.0; 85]);
        let pred = Grid::filled(1, 1, 54.0);
        let inside = h.values().iter().filter(|d: &&f64| (**d - 54.0).abs() < 5.0).count();
        assert_eq!(inside, 9);
        let c = confidence_map(&p, &pred, &h, 5.0).get(0, 0);
        assert!((c - 9.0 / 85.0).abs() < 1e-12);
        assert!((confidence_map(&p, &pred, &h, 200.0).get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = Grid::from_vec(3, 1, vec![1.0, 0.999, 0.5]).unwrap();
        let m = unconfident_mask(&c, 0.999);
        assert_eq!(m.as_slice(), &[false, true, true]);
        assert!(unconfident_mask(&Grid::filled(2, 2, 1.0f64), 0.999).as_slice().iter().all(|x| !*x));
    }

    #[test]
    fn smoothing_examples() {
        let zeros: Grid<f64> = smooth_mask(&Grid::<bool>::filled(30, 30, false), 2.0);
        assert!(zeros.as_slice().iter().all(|&x| x == 0.0));

        let ones: Grid<f64> = smooth_mask(&Grid::filled(40, 40, true), 2.0);
        assert!((ones.get(20, 20) - 1.0).abs() < 1e-12);
        assert!(ones.get(0, 0) < 0.5);

        // single pixel -> the kernel itself
        let mut m = Grid::filled(41, 41, false);
        m.set(20, 20, true);
        let s: Grid<f64> = smooth_mask(&m, 3.0);
        let k = gaussian_kernel(3.0);
        for dy in -9isize..=9 {
            for dx in -9isize..=9 {
                let expect = k[(dy + 9) as usize] * k[(dx + 9) as usize];
                let got = s.get((20 + dx) as usize, (20 + dy) as usize);
                assert!((got - expect).abs() < 1e-15);
            }
        }
        let total: f64 = s.as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(s.get(20, 10), 0.0);
    }

    proptest! {
        #[test]
        fn confidence_bounded_and_monotone_in_epsilon(
            raw in proptest::collection::vec(0.0f64..1.0, 9), pred in 3.0f64..11.0, e1 in 0.1f64..6.0, de in 0.0f64..4.0)
        {
            let s: f64 = raw.iter().sum::<f64>() + 1e-12;
            let p = single(raw.iter().map(|x| x / s).collect());
            let h = DisparityHypotheses::integer_range(3, 11).unwrap();
            let pred = Grid::filled(1, 1, pred);
            let a = confidence_map(&p, &pred, &h, e1).get(0, 0);
            let b = confidence_map(&p, &pred, &h, e1 + de).get(0, 0);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
        }

        #[test]
        fn smoothed_mask_stays_in_unit_interval(bits in proptest::collection::vec(any::<bool>(), 400), sigma in 0.5f64..4.0) {
            let m = Grid::from_vec(20, 20, bits).unwrap();
            let s: Grid<f64> = smooth_mask(&m, sigma);
            prop_assert!(s.as_slice().iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        }
    }
}
