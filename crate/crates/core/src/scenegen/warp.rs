//! Forward warping of the left view into the right view.

use crate::grid::Grid;
use crate::scalar::Real;

/// Disparity jump (px) between neighbouring columns above which the warp
/// treats them as different surfaces and does not interpolate between them.
const DISCONTINUITY_PX: f64 = 1.0;

/// Right view plus the disparity of the surface that won each pixel
/// (`NaN` where nothing was written).
#[derive(Clone, Debug)]
pub struct Warped<T> {
    pub image: Grid<T>,
    pub zbuffer: Grid<T>,
}

/// Renders `right(u - d(u, v), v) = left(u, v)`.
///
/// Each row is rasterised segment by segment so fractional disparities are
/// handled by linear interpolation along the left row. Where two surfaces
/// land on the same right pixel the larger disparity (closer surface) wins.
/// Pixels nothing maps to are taken from `fill`, or zero.
pub fn warp_right_from_left<T: Real>(
    left: &Grid<T>,
    render_disparity: &Grid<T>,
    fill: Option<&Grid<T>>,
) -> Warped<T> {
    let (w, h) = (left.width(), left.height());
    let mut image = Grid::filled(w, h, T::zero());
    let mut zbuffer = Grid::filled(w, h, T::nan());
    let jump = T::lit(DISCONTINUITY_PX);

    let write = |x: T, v: usize, value: T, d: T, image: &mut Grid<T>, zbuf: &mut Grid<T>| {
        let Some(xi) = x.to_isize() else { return };
        if xi < 0 || xi as usize >= w {
            return;
        }
        let xi = xi as usize;
        let cur = zbuf.get(xi, v);
        if cur.is_nan() || d > cur {
            zbuf.set(xi, v, d);
            image.set(xi, v, value);
        }
    };

    for v in 0..h {
        for u in 0..w {
            let d0 = render_disparity.get(u, v);
            let l0 = left.get(u, v);
            let x0 = T::from_usize_lossy(u) - d0;
            if x0 == x0.floor() {
                write(x0, v, l0, d0, &mut image, &mut zbuffer);
            }
            if u + 1 == w {
                continue;
            }
            let d1 = render_disparity.get(u + 1, v);
            if (d1 - d0).abs() > jump {
                continue;
            }
            let x1 = T::from_usize_lossy(u + 1) - d1;
            if !(x1 > x0) {
                continue;
            }
            let l1 = left.get(u + 1, v);
            let mut x = x0.ceil();
            while x <= x1 {
                if x > x0 && x < x1 {
                    let t = (x - x0) / (x1 - x0);
                    write(x, v, l0 + (l1 - l0) * t, d0 + (d1 - d0) * t, &mut image, &mut zbuffer);
                }
                x = x + T::one();
            }
        }
        for x in 0..w {
            if zbuffer.get(x, v).is_nan() {
                let value = fill.map_or(T::zero(), |f| f.get(x, v));
                image.set(x, v, value);
            }
        }
    }
    Warped { image, zbuffer }
}
