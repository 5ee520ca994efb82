use super::camera::Intrinsics;
use super::image::ImageFrame;

/// Radial-tangential distortion `(k1, k2, p1, p2, k3)` on normalized coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    /// From 4 or 5 coefficients in `k1 k2 p1 p2 [k3]` order.
    pub fn from_coefficients(c: &[f64]) -> Option<Self> {
        match c.len() {
            4 => Some(Self { k1: c[0], k2: c[1], p1: c[2], p2: c[3], k3: 0.0 }),
            5 => Some(Self { k1: c[0], k2: c[1], p1: c[2], p2: c[3], k3: c[4] }),
            0 => Some(Self::default()),
            _ => None,
        }
    }

    pub fn coefficients(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients().iter().all(|&c| c == 0.0)
    }

    /// Ideal normalized coordinates to distorted ones.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Inverse of [`Distortion::distort`] by fixed-point iteration.
    pub fn undistort(&self, xd: f64, yd: f64) -> (f64, f64) {
        let (mut x, mut y) = (xd, yd);
        for _ in 0..20 {
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
            let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
        }
        (x, y)
    }
}

/// Resamples `raw` so that it follows the ideal pin-hole model: each output pixel looks up
/// its distorted location in `raw` with bilinear interpolation.
pub fn undistort_image(raw: &ImageFrame, intrinsics: &Intrinsics<f64>, distortion: &Distortion) -> ImageFrame {
    if distortion.is_zero() {
        return raw.clone();
    }
    let Intrinsics { fx, fy, cx, cy } = *intrinsics;
    let mut out = ImageFrame::filled(raw.stamp, raw.width, raw.height, raw.channels, 0.0);
    for v in 0..raw.height {
        for u in 0..raw.width {
            let (xd, yd) = distortion.distort((u as f64 - cx) / fx, (v as f64 - cy) / fy);
            let (ud, vd) = (fx * xd + cx, fy * yd + cy);
            if !raw.contains(ud, vd, 0.0) {
                continue;
            }
            for c in 0..raw.channels {
                out.set(u, v, c, raw.bilinear(ud, vd, c) as f32);
            }
        }
    }
    out
}
