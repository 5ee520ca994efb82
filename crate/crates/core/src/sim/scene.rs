use nalgebra::Vector3;

/// Surface albedo as a function of in-surface coordinates in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    Uniform(Vector3<f64>),
    Checker { a: Vector3<f64>, b: Vector3<f64>, size: f64 },
    /// `mean + amplitude · sin(2πa/period) · cos(2πb/period)`, smooth everywhere.
    Sinusoid { mean: Vector3<f64>, amplitude: f64, period: f64 },
}

impl Texture {
    pub fn gray(level: f64) -> Self {
        Texture::Uniform(Vector3::repeat(level))
    }

    pub fn color(&self, a: f64, b: f64) -> Vector3<f64> {
        match *self {
            Texture::Uniform(c) => c,
            Texture::Checker { a: ca, b: cb, size } => {
                let parity = (a / size).floor() as i64 + (b / size).floor() as i64;
                if parity.rem_euclid(2) == 0 {
                    ca
                } else {
                    cb
                }
            }
            Texture::Sinusoid { mean, amplitude, period } => {
                let w = 2.0 * std::f64::consts::PI / period;
                mean.add_scalar(amplitude * (w * a).sin() * (w * b).cos())
            }
        }
    }
}

/// Bounded rectangle in 3-D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Patch {
    pub center: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    /// Half extents along `u_axis` and `v_axis`.
    pub half_extent: (f64, f64),
    pub texture: Texture,
}

impl Patch {
    /// `u_hint` is projected onto the plane to fix the texture orientation.
    pub fn new(center: Vector3<f64>, normal: Vector3<f64>, u_hint: Vector3<f64>, half_extent: (f64, f64), texture: Texture) -> Option<Self> {
        let normal = normal.try_normalize(1e-12)?;
        let u_axis = (u_hint - normal * normal.dot(&u_hint)).try_normalize(1e-9)?;
        let v_axis = normal.cross(&u_axis);
        Some(Self { center, normal, u_axis, v_axis, half_extent, texture })
    }

    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.normal.dot(&(self.center - origin)) / denom;
        if t <= 0.0 {
            return None;
        }
        let local = origin + dir * t - self.center;
        let (a, b) = (local.dot(&self.u_axis), local.dot(&self.v_axis));
        (a.abs() <= self.half_extent.0 && b.abs() <= self.half_extent.1).then_some((t, a, b))
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AaBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub texture: Texture,
}

impl AaBox {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>, f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut axis = 0;
        for i in 0..3 {
            if dir[i].abs() < 1e-15 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let (a, b) = ((self.min[i] - origin[i]) / dir[i], (self.max[i] - origin[i]) / dir[i]);
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            if near > t0 {
                t0 = near;
                axis = i;
            }
            t1 = t1.min(far);
        }
        if t0 > t1 || t0 <= 0.0 {
            // misses, or the origin is inside the box
            return None;
        }
        let mut normal = Vector3::zeros();
        normal[axis] = -dir[axis].signum();
        let hit = origin + dir * t0;
        let (ia, ib) = ((axis + 1) % 3, (axis + 2) % 3);
        Some((t0, normal, hit[ia] - self.min[ia], hit[ib] - self.min[ib]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub color: Vector3<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    pub patches: Vec<Patch>,
    pub boxes: Vec<AaBox>,
}

impl Scene {
    pub fn is_empty(&self) -> bool {
        self.patches.is_empty() && self.boxes.is_empty()
    }

    /// Nearest intersection along the unit direction `dir`, no farther than `max_range`.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let closer = |best: &Option<Hit>, t: f64| t <= max_range && best.is_none_or(|h| t < h.distance);
        for p in &self.patches {
            if let Some((t, a, b)) = p.intersect(origin, dir) {
                if closer(&best, t) {
                    // project onto the plane so the hit satisfies its equation to rounding
                    let raw = origin + dir * t;
                    let point = raw - p.normal * p.normal.dot(&(raw - p.center));
                    best = Some(Hit { distance: t, point, normal: p.normal, color: p.texture.color(a, b) });
                }
            }
        }
        for b in &self.boxes {
            if let Some((t, normal, u, v)) = b.intersect(origin, dir) {
                if closer(&best, t) {
                    best = Some(Hit { distance: t, point: origin + dir * t, normal, color: b.texture.color(u, v) });
                }
            }
        }
        best
    }

    /// Square room of side `size` and height `height` with smooth textured walls, a checker
    /// floor, a ceiling and a few pillars.
    pub fn room(size: f64, height: f64) -> Self {
        let h = size / 2.0;
        let z = height / 2.0;
        let wall = |mean: f64, period: f64| Texture::Sinusoid { mean: Vector3::new(mean, mean + 10.0, mean - 10.0), amplitude: 70.0, period };
        let patches = vec![
            Patch::new(Vector3::new(h, 0.0, z), -Vector3::x(), Vector3::y(), (h, z), wall(120.0, 1.3)),
            Patch::new(Vector3::new(-h, 0.0, z), Vector3::x(), Vector3::y(), (h, z), wall(130.0, 1.1)),
            Patch::new(Vector3::new(0.0, h, z), -Vector3::y(), Vector3::x(), (h, z), wall(125.0, 0.9)),
            Patch::new(Vector3::new(0.0, -h, z), Vector3::y(), Vector3::x(), (h, z), wall(115.0, 1.5)),
            Patch::new(
                Vector3::zeros(),
                Vector3::z(),
                Vector3::x(),
                (h, h),
                Texture::Checker { a: Vector3::repeat(60.0), b: Vector3::repeat(180.0), size: 1.0 },
            ),
            Patch::new(Vector3::new(0.0, 0.0, height), -Vector3::z(), Vector3::x(), (h, h), Texture::gray(200.0)),
        ]
        .into_iter()
        .flatten()
        .collect();
        let pillar = |x: f64, y: f64, w: f64, level: f64| AaBox {
            min: Vector3::new(x - w, y - w, 0.0),
            max: Vector3::new(x + w, y + w, height * 0.6),
            texture: Texture::Sinusoid { mean: Vector3::repeat(level), amplitude: 60.0, period: 0.7 },
        };
        let q = size * 0.3;
        let boxes = vec![pillar(q, q, 0.5, 110.0), pillar(-q, q * 0.8, 0.4, 140.0), pillar(-q * 0.7, -q, 0.6, 100.0), pillar(q * 0.9, -q * 0.6, 0.35, 150.0)];
        Scene { patches, boxes }
    }
}
