use crate::geometry::Timestamp;

/// Row-major image with 1 (gray) or 3 (RGB) interleaved channels in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    pub stamp: Timestamp,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ImageFrame {
    pub fn new(stamp: Timestamp, width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert!(channels == 1 || channels == 3, "images have 1 or 3 channels");
        assert_eq!(data.len(), width * height * channels, "pixel buffer size");
        Self { stamp, width, height, channels, data }
    }

    pub fn filled(stamp: Timestamp, width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self::new(stamp, width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(
        stamp: Timestamp,
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(stamp, width, height, channels, data)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Whether `(u, v)` lies at least `margin` pixels inside the image.
    #[inline]
    pub fn contains(&self, u: f64, v: f64, margin: f64) -> bool {
        u >= margin && v >= margin && u <= self.width as f64 - 1.0 - margin && v <= self.height as f64 - 1.0 - margin
    }

    /// Bilinear sample of one channel. Coordinates are clamped to the image.
    pub fn bilinear(&self, u: f64, v: f64, c: usize) -> f64 {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let x0 = (u.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (ax, ay) = (u - x0 as f64, v - y0 as f64);
        let p = |x, y| self.at(x, y, c) as f64;
        (1.0 - ay) * ((1.0 - ax) * p(x0, y0) + ax * p(x1, y0)) + ay * ((1.0 - ax) * p(x0, y1) + ax * p(x1, y1))
    }

    /// Luma (BT.601) for RGB, a copy for gray.
    pub fn to_gray(&self) -> ImageFrame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        ImageFrame::new(self.stamp, self.width, self.height, 1, data)
    }
}

/// A continuous multi-channel intensity function over pixel coordinates.
///
/// The photometric residual only needs samples and gradients, so analytic fields can stand
/// in for images when checking derivatives.
pub trait IntensityField {
    fn channels(&self) -> usize;
    /// Whether `(u, v)` can be sampled together with its gradient.
    fn samplable(&self, u: f64, v: f64) -> bool;
    fn sample(&self, u: f64, v: f64) -> [f64; 3];
    /// `[∂I/∂u, ∂I/∂v]` per channel.
    fn gradient(&self, u: f64, v: f64) -> [[f64; 2]; 3];
}

impl IntensityField for ImageFrame {
    fn channels(&self) -> usize {
        self.channels
    }

    fn samplable(&self, u: f64, v: f64) -> bool {
        self.contains(u, v, 1.0)
    }

    fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = self.bilinear(u, v, c);
        }
        out
    }

    /// Central differences of the bilinear surface, one pixel apart.
    fn gradient(&self, u: f64, v: f64) -> [[f64; 2]; 3] {
        let mut out = [[0.0; 2]; 3];
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            o[0] = 0.5 * (self.bilinear(u + 1.0, v, c) - self.bilinear(u - 1.0, v, c));
            o[1] = 0.5 * (self.bilinear(u, v + 1.0, c) - self.bilinear(u, v - 1.0, c));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixels_and_midpoints() {
        let img = ImageFrame::from_fn(Timestamp(0.0), 4, 3, 1, |x, y, _| (x + 10 * y) as f32);
        assert_eq!(img.bilinear(2.0, 1.0, 0), 12.0);
        assert!((img.bilinear(2.5, 1.5, 0) - 17.5).abs() < 1e-12);
        assert_eq!(img.bilinear(3.0, 2.0, 0), 23.0);
    }

    #[test]
    fn gradient_of_ramp() {
        let img = ImageFrame::from_fn(Timestamp(0.0), 20, 20, 3, |x, y, c| (2 * x + 3 * y + c) as f32);
        let g = img.gradient(7.3, 9.6);
        for ch in g {
            assert!((ch[0] - 2.0).abs() < 1e-9 && (ch[1] - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gray_of_rgb() {
        let img = ImageFrame::filled(Timestamp(0.0), 2, 2, 3, 100.0);
        let g = img.to_gray();
        assert_eq!(g.channels, 1);
        assert!((g.at(1, 1, 0) - 100.0).abs() < 1e-3);
    }
}
