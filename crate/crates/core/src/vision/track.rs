use nalgebra::{Matrix2, Vector2, Vector3};

use super::camera::{pinhole, world_to_camera, CameraParams, MIN_DEPTH};
use super::image::ImageFrame;
use crate::geometry::RigidTransform;
use crate::lio::MapPoint;
use crate::scalar::Real;

/// A map point followed across consecutive images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackedFeature<T: Real> {
    pub point_id: u64,
    /// World position of the map point.
    pub position: Vector3<T>,
    /// Pixel in the previous image.
    pub prev_pixel: Vector2<T>,
    /// Pixel in the current image.
    pub cur_pixel: Vector2<T>,
    pub valid: bool,
}

impl<T: Real> TrackedFeature<T> {
    /// A feature seen once, at `pixel`.
    pub fn new(point_id: u64, position: Vector3<T>, pixel: Vector2<T>) -> Self {
        Self { point_id, position, prev_pixel: pixel, cur_pixel: pixel, valid: true }
    }

    pub fn flow(&self) -> Vector2<T> {
        self.cur_pixel - self.prev_pixel
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerConfig {
    pub levels: usize,
    /// Odd window side in pixels.
    pub window: usize,
    pub max_iterations: usize,
    /// Stop once the update step is shorter than this, pixels.
    pub epsilon: f64,
    pub max_fb_error: f64,
    pub border: f64,
    /// Floor on the smaller eigenvalue of the per-pixel structure tensor.
    pub min_eigen: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 21,
            max_iterations: 30,
            epsilon: 0.01,
            max_fb_error: 1.5,
            border: 3.0,
            min_eigen: 1e-2,
        }
    }
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn from_gray(img: &ImageFrame) -> Self {
        let gray = img.to_gray();
        Self { w: gray.width, h: gray.height, data: gray.data }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    /// [1 2 1] blur followed by 2x decimation.
    fn down(&self) -> Self {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let px = |x: isize, y: isize| {
            self.at(x.clamp(0, self.w as isize - 1) as usize, y.clamp(0, self.h as isize - 1) as usize)
        };
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (cx, cy) = (2 * x as isize, 2 * y as isize);
                let mut acc = 0.0;
                for (dy, wy) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
                    for (dx, wx) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
                        acc += wx * wy * px(cx + dx, cy + dy);
                    }
                }
                data.push(acc / 16.0);
            }
        }
        Self { w, h, data }
    }

    fn gradients(&self) -> (Plane, Plane) {
        let mut gx = vec![0.0; self.w * self.h];
        let mut gy = vec![0.0; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(self.w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(self.h - 1));
                gx[y * self.w + x] = (self.at(xr, y) - self.at(xl, y)) / (xr - xl).max(1) as f32;
                gy[y * self.w + x] = (self.at(x, yd) - self.at(x, yu)) / (yd - yu).max(1) as f32;
            }
        }
        (Plane { w: self.w, h: self.h, data: gx }, Plane { w: self.w, h: self.h, data: gy })
    }

    #[inline]
    fn sample(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, (self.w - 1) as f64);
        let v = v.clamp(0.0, (self.h - 1) as f64);
        let x0 = (u as usize).min(self.w.saturating_sub(2));
        let y0 = (v as usize).min(self.h.saturating_sub(2));
        let (x1, y1) = ((x0 + 1).min(self.w - 1), (y0 + 1).min(self.h - 1));
        let (ax, ay) = (u - x0 as f64, v - y0 as f64);
        let p = |x, y| self.at(x, y) as f64;
        (1.0 - ay) * ((1.0 - ax) * p(x0, y0) + ax * p(x1, y0)) + ay * ((1.0 - ax) * p(x0, y1) + ax * p(x1, y1))
    }
}

struct Level {
    img: Plane,
    gx: Plane,
    gy: Plane,
}

struct Pyramid(Vec<Level>);

impl Pyramid {
    fn new(img: &ImageFrame, levels: usize) -> Self {
        let mut out = Vec::with_capacity(levels);
        let mut plane = Plane::from_gray(img);
        for l in 0..levels.max(1) {
            if l > 0 {
                plane = plane.down();
            }
            let (gx, gy) = plane.gradients();
            out.push(Level { img: Plane { w: plane.w, h: plane.h, data: plane.data.clone() }, gx, gy });
        }
        Pyramid(out)
    }
}

/// Tracks `from` in `a` to `b`, starting at `guess`. `None` when the window is
/// textureless or the iteration does not settle at the finest level.
fn track_point(a: &Pyramid, b: &Pyramid, from: Vector2<f64>, guess: Vector2<f64>, cfg: &TrackerConfig) -> Option<Vector2<f64>> {
    let half = (cfg.window / 2) as isize;
    let n = (cfg.window * cfg.window) as f64;
    let top = a.0.len() - 1;
    let mut g = (guess - from) / f64::powi(2.0, top as i32);
    let mut tmpl = Vec::with_capacity(cfg.window * cfg.window);
    for level in (0..=top).rev() {
        let (la, lb) = (&a.0[level], &b.0[level]);
        let p = from / f64::powi(2.0, level as i32);
        tmpl.clear();
        let mut gm = Matrix2::<f64>::zeros();
        for dy in -half..=half {
            for dx in -half..=half {
                let (u, v) = (p.x + dx as f64, p.y + dy as f64);
                let (ix, iy) = (la.gx.sample(u, v), la.gy.sample(u, v));
                gm += Matrix2::new(ix * ix, ix * iy, ix * iy, iy * iy);
                tmpl.push((la.img.sample(u, v), ix, iy));
            }
        }
        let min_eig = {
            let (t, d) = (gm.trace() / n, gm.determinant() / (n * n));
            0.5 * t - (0.25 * t * t - d).max(0.0).sqrt()
        };
        if min_eig < cfg.min_eigen {
            return None;
        }
        let g_inv = gm.try_inverse()?;
        let mut nu = Vector2::zeros();
        let mut converged = false;
        for _ in 0..cfg.max_iterations {
            let q = p + g + nu;
            let mut bvec = Vector2::zeros();
            let mut k = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let (i0, ix, iy) = tmpl[k];
                    k += 1;
                    let di = i0 - lb.img.sample(q.x + dx as f64, q.y + dy as f64);
                    bvec += Vector2::new(di * ix, di * iy);
                }
            }
            let eta = g_inv * bvec;
            nu += eta;
            if eta.norm() < cfg.epsilon {
                converged = true;
                break;
            }
        }
        if level == 0 {
            if !converged || !nu.iter().all(|x| x.is_finite()) {
                return None;
            }
            return Some(from + g + nu);
        }
        g = (g + nu) * 2.0;
    }
    unreachable!("level 0 returns")
}

/// Pyramidal Lucas-Kanade with a forward-backward check. Each input feature's
/// `cur_pixel` is its location in `prev`; the output moves it to `prev_pixel` and writes
/// the tracked location in `cur` to `cur_pixel`. Failures are flagged, never dropped.
pub fn track_features<T: Real>(
    prev: &ImageFrame,
    cur: &ImageFrame,
    features: &[TrackedFeature<T>],
    cfg: &TrackerConfig,
) -> Vec<TrackedFeature<T>> {
    let a = Pyramid::new(prev, cfg.levels);
    let b = Pyramid::new(cur, cfg.levels);
    features
        .iter()
        .map(|f| {
            let mut out = *f;
            out.prev_pixel = f.cur_pixel;
            if !f.valid {
                return out;
            }
            let from = Vector2::new(f.cur_pixel.x.as_f64(), f.cur_pixel.y.as_f64());
            let tracked = track_point(&a, &b, from, from, cfg).and_then(|to| {
                let back = track_point(&b, &a, to, from, cfg)?;
                let inside = cur.contains(to.x, to.y, cfg.border) && prev.contains(from.x, from.y, cfg.border);
                ((back - from).norm() <= cfg.max_fb_error && inside).then_some(to)
            });
            match tracked {
                Some(to) => out.cur_pixel = Vector2::new(T::lit(to.x), T::lit(to.y)),
                None => out.valid = false,
            }
            out
        })
        .collect()
}

/// Grid-based pool maintenance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PromotionConfig {
    pub min_features: usize,
    pub cell: f64,
    pub border: f64,
}

impl Default for PromotionConfig {
    fn default() -> Self {
        Self { min_features: 40, cell: 40.0, border: 3.0 }
    }
}

/// Drops invalid features and, when fewer than `min_features` remain, promotes recent
/// points whose projection lands in a grid cell that holds no feature yet. Returns the
/// number promoted.
pub fn promote_features<T: Real>(
    features: &mut Vec<TrackedFeature<T>>,
    recent: &[MapPoint],
    nav_pose: &RigidTransform<T>,
    params: &CameraParams<T>,
    width: usize,
    height: usize,
    cfg: &PromotionConfig,
) -> usize {
    features.retain(|f| f.valid);
    if features.len() >= cfg.min_features {
        return 0;
    }
    let cols = (width as f64 / cfg.cell).ceil() as usize;
    let rows = (height as f64 / cfg.cell).ceil() as usize;
    let cell_of = |u: f64, v: f64| ((v / cfg.cell) as usize).min(rows - 1) * cols + ((u / cfg.cell) as usize).min(cols - 1);
    let mut occupied = vec![false; cols * rows];
    for f in features.iter() {
        occupied[cell_of(f.cur_pixel.x.as_f64(), f.cur_pixel.y.as_f64())] = true;
    }
    let known: std::collections::HashSet<u64> = features.iter().map(|f| f.point_id).collect();
    let (w, h) = (width as f64, height as f64);
    let mut promoted = 0;
    for p in recent {
        if known.contains(&p.id) {
            continue;
        }
        let pos = Vector3::new(T::lit(p.position.x), T::lit(p.position.y), T::lit(p.position.z));
        let pc = world_to_camera(&pos, nav_pose, params);
        if !(pc.z > T::lit(MIN_DEPTH)) {
            continue;
        }
        let px = pinhole(&pc, &params.intrinsics);
        let (u, v) = (px.x.as_f64(), px.y.as_f64());
        if !(u >= cfg.border && v >= cfg.border && u <= w - 1.0 - cfg.border && v <= h - 1.0 - cfg.border) {
            continue;
        }
        let c = cell_of(u, v);
        if occupied[c] {
            continue;
        }
        occupied[c] = true;
        features.push(TrackedFeature::new(p.id, pos, px));
        promoted += 1;
    }
    promoted
}
