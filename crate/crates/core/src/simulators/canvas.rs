use crate::tensor::Tensor;

/// Side length of every rendered frame, in pixels.
pub const CANVAS: usize = 32;

/// Grayscale raster in continuous pixel coordinates: pixel `(row, col)`
/// covers `[col, col+1) × [row, row+1)` and is sampled at its center.
/// Primitives are anti-aliased over one pixel and composited with `max`.
pub(crate) struct Canvas {
    pixels: Vec<f64>,
}

impl Canvas {
    pub fn new() -> Self {
        Canvas {
            pixels: vec![0.0; CANVAS * CANVAS],
        }
    }

    fn splat(&mut self, intensity: f64, coverage: impl Fn(f64, f64) -> f64) {
        for row in 0..CANVAS {
            let py = row as f64 + 0.5;
            for col in 0..CANVAS {
                let px = col as f64 + 0.5;
                let c = coverage(px, py);
                if c > 0.0 {
                    let p = &mut self.pixels[row * CANVAS + col];
                    *p = p.max(intensity * c.min(1.0));
                }
            }
        }
    }

    pub fn disk(&mut self, x: f64, y: f64, radius: f64, intensity: f64) {
        self.splat(intensity, |px, py| {
            let d = ((px - x).powi(2) + (py - y).powi(2)).sqrt();
            radius + 0.5 - d
        });
    }

    pub fn segment(&mut self, from: (f64, f64), to: (f64, f64), width: f64, intensity: f64) {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let len2 = dx * dx + dy * dy;
        self.splat(intensity, |px, py| {
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - from.0) * dx + (py - from.1) * dy) / len2).clamp(0.0, 1.0)
            };
            let (cx, cy) = (from.0 + t * dx, from.1 + t * dy);
            let d = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
            width / 2.0 + 0.5 - d
        });
    }

    pub fn set(&mut self, row: usize, col: usize, intensity: f64) {
        self.pixels[row * CANVAS + col] = intensity;
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor::matrix(CANVAS, CANVAS, self.pixels)
    }
}
