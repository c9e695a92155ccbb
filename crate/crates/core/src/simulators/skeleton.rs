use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, CANVAS};
use super::Trajectory;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const JOINTS: usize = 6;

/// Joint order used in every 12-value pose vector, as `(x, y)` pairs.
/// "Left" is the image-left side.
pub const JOINT_NAMES: [&str; JOINTS] = [
    "left_hip",
    "left_knee",
    "left_foot",
    "right_hip",
    "right_knee",
    "right_foot",
];

/// Legs forming an isosceles trapezoid that widens over time: hips fixed on
/// the top edge, straight legs rotating outward as the expansion phase grows
/// linearly from a random start at a random rate. All extents are pixels on
/// the 32×32 canvas; ranges are `[min, max]` and sampled uniformly per
/// trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrapezoidSkeletonSpec {
    pub hip_width: [f64; 2],
    pub leg_length: [f64; 2],
    /// Leg angle from vertical (radians) reached at full expansion.
    pub kick_angle: [f64; 2],
    /// Expansion phase gained per frame; the phase saturates at 1.
    pub expansion_rate: [f64; 2],
    pub start_phase: [f64; 2],
    /// `(x, y)` of the midpoint between the hips.
    pub center: [f64; 2],
    /// Uniform offset in `[-jitter, jitter]` added to both center coordinates.
    pub center_jitter: f64,
    pub frames: usize,
    /// Standard deviation of the iid Gaussian noise added to every coordinate.
    pub noise: f64,
}

impl Default for TrapezoidSkeletonSpec {
    fn default() -> Self {
        TrapezoidSkeletonSpec {
            hip_width: [5.0, 8.0],
            leg_length: [12.0, 16.0],
            kick_angle: [0.35, 0.6],
            expansion_rate: [0.05, 0.15],
            start_phase: [0.0, 1.0],
            center: [16.0, 8.0],
            center_jitter: 0.0,
            frames: 5,
            noise: 0.5,
        }
    }
}

fn uniform<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    range[0] + (range[1] - range[0]) * rng.gen::<f64>()
}

impl TrapezoidSkeletonSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("hip_width", self.hip_width),
            ("leg_length", self.leg_length),
            ("kick_angle", self.kick_angle),
            ("expansion_rate", self.expansion_rate),
            ("start_phase", self.start_phase),
        ];
        for (name, r) in ranges {
            if !(r[0] <= r[1]) || r[0] < 0.0 {
                return Err(Error::Config(format!("bad {name} range {r:?}")));
            }
        }
        if !(self.hip_width[0] > 0.0 && self.leg_length[0] > 0.0) {
            return Err(Error::Config("skeleton extents must be positive".into()));
        }
        if self.kick_angle[1] >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Config("kick angle must stay below 90°".into()));
        }
        if self.frames == 0 || self.noise < 0.0 || self.center_jitter < 0.0 {
            return Err(Error::Config("bad frame count, noise or jitter".into()));
        }
        let reach = self.hip_width[1] / 2.0 + self.leg_length[1] * self.kick_angle[1].sin();
        let size = CANVAS as f64;
        let j = self.center_jitter;
        let inside = self.center[0] - j - reach >= 0.0
            && self.center[0] + j + reach <= size
            && self.center[1] - j >= 0.0
            && self.center[1] + j + self.leg_length[1] <= size;
        if !inside {
            return Err(Error::Config(
                "skeleton geometry does not fit on the canvas".into(),
            ));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SkeletonDraw {
        let hip_width = uniform(self.hip_width, rng);
        let leg_length = uniform(self.leg_length, rng);
        let kick = uniform(self.kick_angle, rng);
        let rate = uniform(self.expansion_rate, rng);
        let start = uniform(self.start_phase, rng);
        let jitter = [-self.center_jitter, self.center_jitter];
        let cx = self.center[0] + uniform(jitter, rng);
        let cy = self.center[1] + uniform(jitter, rng);
        SkeletonDraw {
            hip_width,
            leg_length,
            kick,
            rate,
            start,
            center: (cx, cy),
        }
    }
}

/// One sampled subject and motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonDraw {
    pub hip_width: f64,
    pub leg_length: f64,
    pub kick: f64,
    pub rate: f64,
    pub start: f64,
    pub center: (f64, f64),
}

impl SkeletonDraw {
    pub fn phase(&self, t: usize) -> f64 {
        (self.start + self.rate * t as f64).min(1.0)
    }

    pub fn pose(&self, t: usize) -> [f64; 2 * JOINTS] {
        skeleton_pose(self, self.phase(t))
    }

    pub fn trajectory(&self, frames: usize) -> Trajectory {
        let values = (0..frames).flat_map(|t| self.pose(t)).collect();
        Trajectory::new(2 * JOINTS, values)
    }
}

/// Noise-free joints at the given expansion phase.
pub fn skeleton_pose(draw: &SkeletonDraw, phase: f64) -> [f64; 2 * JOINTS] {
    let (cx, cy) = draw.center;
    let angle = phase.clamp(0.0, 1.0) * draw.kick;
    let (s, c) = angle.sin_cos();
    let half = draw.hip_width / 2.0;
    let leg = draw.leg_length;
    // Horizontal offsets from the center axis, shared by both sides.
    let hip = half;
    let knee = half + 0.5 * leg * s;
    let foot = half + leg * s;
    let knee_y = cy + 0.5 * leg * c;
    let foot_y = cy + leg * c;
    [
        cx - hip, cy, cx - knee, knee_y, cx - foot, foot_y,
        cx + hip, cy, cx + knee, knee_y, cx + foot, foot_y,
    ]
}

pub fn sample_skeleton_trajectory<R: Rng + ?Sized>(
    spec: &TrapezoidSkeletonSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    spec.validate()?;
    let draw = spec.draw(rng);
    let mut traj = draw.trajectory(spec.frames).into_flat();
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).unwrap();
        for v in &mut traj {
            *v += normal.sample(rng);
        }
    }
    Ok(Trajectory::new(2 * JOINTS, traj))
}

const JOINT_RADIUS: f64 = 1.2;
const LIMB_WIDTH: f64 = 1.0;
const LIMB_INTENSITY: f64 = 0.5;

/// 32×32 frame with unit-intensity disks at the joints and dimmer limbs
/// (hip–hip, hip–knee, knee–foot). Joints off the canvas are clamped to its
/// border; the returned flag reports whether that happened.
pub fn render_skeleton_frame(joints: &[f64]) -> Result<(Tensor, bool)> {
    if joints.len() != 2 * JOINTS {
        return Err(Error::dimension("render_skeleton_frame", &[joints.len()], &[2 * JOINTS]));
    }
    if joints.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite joint coordinate".into()));
    }
    let size = CANVAS as f64;
    let mut clamped = false;
    let pts: Vec<(f64, f64)> = joints
        .chunks(2)
        .map(|p| {
            let x = p[0].clamp(0.0, size);
            let y = p[1].clamp(0.0, size);
            clamped |= x != p[0] || y != p[1];
            (x, y)
        })
        .collect();

    let mut canvas = Canvas::new();
    canvas.segment(pts[0], pts[3], LIMB_WIDTH, LIMB_INTENSITY);
    for side in [0, 3] {
        canvas.segment(pts[side], pts[side + 1], LIMB_WIDTH, LIMB_INTENSITY);
        canvas.segment(pts[side + 1], pts[side + 2], LIMB_WIDTH, LIMB_INTENSITY);
    }
    for &(x, y) in &pts {
        canvas.disk(x, y, JOINT_RADIUS, 1.0);
    }
    Ok((canvas.into_tensor(), clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless() -> TrapezoidSkeletonSpec {
        TrapezoidSkeletonSpec {
            noise: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn default_spec_fits_canvas() {
        TrapezoidSkeletonSpec::default().validate().unwrap();
        let bad = TrapezoidSkeletonSpec {
            center: [4.0, 8.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn closed_legs_form_a_rectangle() {
        let draw = noiseless().draw(&mut ChaCha8Rng::seed_from_u64(1));
        let pose = skeleton_pose(&draw, 0.0);
        // feet directly below hips
        assert_eq!(pose[4], pose[0]);
        assert_eq!(pose[10], pose[6]);
        assert!((pose[6] - pose[0] - draw.hip_width).abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetry_without_noise() {
        let spec = noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let draw = spec.draw(&mut rng);
            for t in 0..spec.frames {
                let p = draw.pose(t);
                for j in 0..3 {
                    let (l, r) = (j * 2, (j + 3) * 2);
                    assert!((p[l] + p[r] - 2.0 * draw.center.0).abs() < 1e-12);
                    assert_eq!(p[l + 1], p[r + 1]);
                }
            }
        }
    }

    #[test]
    fn trajectories_are_reproducible() {
        let spec = TrapezoidSkeletonSpec::default();
        let a = sample_skeleton_trajectory(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_skeleton_trajectory(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert_eq!(a.dim(), 12);
    }

    #[test]
    fn centered_pose_is_one_blob() {
        let joints = [16.0; 12];
        let (frame, clamped) = render_skeleton_frame(&joints).unwrap();
        assert!(!clamped);
        let lit: Vec<usize> = (0..CANVAS * CANVAS)
            .filter(|&i| frame.data()[i] > 0.0)
            .collect();
        for &i in &lit {
            let (r, c) = ((i / CANVAS) as f64 + 0.5, (i % CANVAS) as f64 + 0.5);
            assert!((r - 16.0).abs() < 2.5 && (c - 16.0).abs() < 2.5);
        }
        assert!(frame.data()[15 * CANVAS + 15] > 0.95);
    }

    #[test]
    fn mirrored_joints_give_mirrored_image() {
        let draw = noiseless().draw(&mut ChaCha8Rng::seed_from_u64(4));
        let mut pose = draw.pose(3);
        // Re-center on the canvas axis so mirroring stays on canvas.
        let shift = 16.0 - draw.center.0;
        for p in pose.chunks_mut(2) {
            p[0] += shift;
        }
        let mut mirrored = [0.0; 12];
        for j in 0..JOINTS {
            let src = (j + 3) % JOINTS;
            mirrored[2 * j] = 32.0 - pose[2 * src];
            mirrored[2 * j + 1] = pose[2 * src + 1];
        }
        let (a, _) = render_skeleton_frame(&pose).unwrap();
        let (b, _) = render_skeleton_frame(&mirrored).unwrap();
        for row in 0..CANVAS {
            for col in 0..CANVAS {
                let x = a.data()[row * CANVAS + col];
                let y = b.data()[row * CANVAS + CANVAS - 1 - col];
                assert!((x - y).abs() < 1e-9, "({row},{col}) {x} vs {y}");
            }
        }
    }

    #[test]
    fn joint_centroids_recover_positions() {
        let spec = noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 50 {
            let draw = spec.draw(&mut rng);
            let pose = draw.pose(rng.gen_range(0..5));
            let pts: Vec<(f64, f64)> = pose.chunks(2).map(|p| (p[0], p[1])).collect();
            let separated = pts.iter().enumerate().all(|(i, a)| {
                pts.iter()
                    .skip(i + 1)
                    .all(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() >= 4.0)
            });
            if !separated {
                continue;
            }
            checked += 1;
            let (frame, _) = render_skeleton_frame(&pose).unwrap();
            for &(x, y) in &pts {
                let (mut sx, mut sy, mut w) = (0.0, 0.0, 0.0);
                for row in 0..CANVAS {
                    for col in 0..CANVAS {
                        let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                        let v = frame.data()[row * CANVAS + col];
                        if v > 0.75 && (px - x).hypot(py - y) < 2.5 {
                            sx += v * px;
                            sy += v * py;
                            w += v;
                        }
                    }
                }
                let (ex, ey) = (sx / w, sy / w);
                assert!((ex - x).hypot(ey - y) < 1.5, "joint ({x},{y}) centroid ({ex},{ey})");
            }
        }
    }

    #[test]
    fn off_canvas_joints_are_clamped() {
        let mut joints = [16.0; 12];
        joints[0] = -3.0;
        let (_, clamped) = render_skeleton_frame(&joints).unwrap();
        assert!(clamped);
        assert!(render_skeleton_frame(&joints[..10]).is_err());
    }
}
