//! Evaluation metrics: Pearson correlation, PCK@β and mean absolute error.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sample Pearson coefficient. Two-pass to avoid cancellation.
pub fn pearson_correlation(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dimension("pearson_correlation", &[pred.len()], &[truth.len()]));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 points, got {}",
            pred.len()
        )));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correctness radius `β·max(h, w)` for PCK.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PckSpec {
    pub beta: f64,
    pub height: f64,
    pub width: f64,
}

impl PckSpec {
    pub fn new(beta: f64, height: f64, width: f64) -> Result<Self> {
        if !(beta > 0.0 && height > 0.0 && width > 0.0) {
            return Err(Error::Argument(format!(
                "PCK needs positive β, h, w; got {beta}, {height}, {width}"
            )));
        }
        Ok(PckSpec {
            beta,
            height,
            width,
        })
    }

    /// Box spanned by every true joint in `frames × 2J` (x, y pairs).
    pub fn from_bounding_box(beta: f64, truth: &Tensor) -> Result<Self> {
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in truth.data().chunks(2) {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        Self::new(beta, y1 - y0, x1 - x0)
    }

    pub fn threshold(&self) -> f64 {
        self.beta * self.height.max(self.width)
    }
}

/// Per-joint count of frames whose prediction lies within the threshold
/// (inclusive). Inputs are `frames × 2J` with `(x, y)` pairs per joint.
pub fn pck_hits(pred: &Tensor, truth: &Tensor, spec: &PckSpec) -> Result<Vec<usize>> {
    if pred.shape() != truth.shape() || !pred.is_matrix() || pred.cols() % 2 != 0 {
        return Err(Error::dimension("pck_at", pred.shape(), truth.shape()));
    }
    let joints = pred.cols() / 2;
    let threshold = spec.threshold();
    let mut hits = vec![0; joints];
    for f in 0..pred.rows() {
        let (p, t) = (pred.row(f), truth.row(f));
        for (j, hit) in hits.iter_mut().enumerate() {
            let d = (p[2 * j] - t[2 * j]).hypot(p[2 * j + 1] - t[2 * j + 1]);
            if d <= threshold {
                *hit += 1;
            }
        }
    }
    Ok(hits)
}

/// Per-joint fraction of frames predicted within the threshold.
pub fn pck_at(pred: &Tensor, truth: &Tensor, spec: &PckSpec) -> Result<Vec<f64>> {
    let frames = pred.rows() as f64;
    Ok(pck_hits(pred, truth, spec)?
        .into_iter()
        .map(|h| h as f64 / frames)
        .collect())
}

pub fn mae(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::dimension("mae", pred.shape(), truth.shape()));
    }
    let total: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / pred.numel() as f64)
}

/// MAE restricted to the given columns of `batch × d` matrices.
pub fn mae_columns(pred: &Tensor, truth: &Tensor, columns: &[usize]) -> Result<f64> {
    if pred.shape() != truth.shape() || !pred.is_matrix() {
        return Err(Error::dimension("mae_columns", pred.shape(), truth.shape()));
    }
    if columns.is_empty() || columns.iter().any(|&c| c >= pred.cols()) {
        return Err(Error::Argument(format!("bad column selection {columns:?}")));
    }
    let mut total = 0.0;
    for r in 0..pred.rows() {
        let (p, t) = (pred.row(r), truth.row(r));
        total += columns.iter().map(|&c| (p[c] - t[c]).abs()).sum::<f64>();
    }
    Ok(total / (pred.rows() * columns.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()
    }

    #[test]
    fn perfect_correlations() {
        let t = [1.0, 2.0, 4.0, 8.0];
        let p2: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson_correlation(&p2, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_correlation(&neg, &t).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_matches_covariance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (a, b) = (random(100, &mut rng), random(100, &mut rng));
            let n = 100.0;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
            let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let r = pearson_correlation(&a, &b).unwrap();
            assert!((r - cov / (sa * sb)).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_errors() {
        assert!(matches!(
            pearson_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson_correlation(&[1.0], &[1.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson_correlation(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn pck_identity_and_boundary() {
        let t = Tensor::matrix(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let spec = PckSpec::new(0.1, 200.0, 100.0).unwrap();
        assert_eq!(spec.threshold(), 20.0);
        assert_eq!(pck_at(&t, &t, &spec).unwrap(), vec![1.0, 1.0]);
        // joint 0 exactly 20 px away in frame 0, 20.5 px in frame 1
        let mut p = t.clone();
        p.data_mut()[0] += 20.0;
        p.data_mut()[5] += 20.5;
        assert_eq!(pck_at(&p, &t, &spec).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn pck_matches_count_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (frames, joints) = (rng.gen_range(1..20), rng.gen_range(1..7));
            let truth = Tensor::matrix(frames, 2 * joints, random(frames * 2 * joints, &mut rng));
            let pred = truth.zip_map(&Tensor::matrix(frames, 2 * joints, random(frames * 2 * joints, &mut rng)), |a, b| a + b);
            let spec = PckSpec::new(rng.gen_range(0.05..0.5), 10.0, rng.gen_range(1.0..20.0)).unwrap();
            let got = pck_at(&pred, &truth, &spec).unwrap();
            for j in 0..joints {
                let mut hits = 0;
                for f in 0..frames {
                    let dx = pred.row(f)[2 * j] - truth.row(f)[2 * j];
                    let dy = pred.row(f)[2 * j + 1] - truth.row(f)[2 * j + 1];
                    if (dx * dx + dy * dy).sqrt() <= spec.beta * spec.height.max(spec.width) {
                        hits += 1;
                    }
                }
                assert_eq!(got[j], hits as f64 / frames as f64);
            }
        }
    }

    #[test]
    fn pck_errors() {
        let a = Tensor::zeros(&[2, 4]);
        let b = Tensor::zeros(&[3, 4]);
        let spec = PckSpec::new(0.1, 1.0, 1.0).unwrap();
        assert!(matches!(pck_at(&a, &b, &spec), Err(Error::Dimension { .. })));
        assert!(PckSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(PckSpec::new(0.1, 1.0, -1.0).is_err());
    }

    #[test]
    fn bounding_box_spec() {
        let t = Tensor::matrix(2, 4, vec![0.0, 0.0, 10.0, 4.0, 2.0, 30.0, 5.0, 5.0]);
        let spec = PckSpec::from_bounding_box(0.1, &t).unwrap();
        assert_eq!((spec.height, spec.width), (30.0, 10.0));
        assert_eq!(spec.threshold(), 3.0);
    }

    #[test]
    fn mae_values() {
        let a = Tensor::matrix(1, 2, vec![1.0, 2.0]);
        let b = Tensor::matrix(1, 2, vec![2.0, 4.0]);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &b).unwrap(), 1.5);
        assert!(mae(&a, &Tensor::zeros(&[2, 1])).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, t) = (random(64, &mut rng), random(64, &mut rng));
        let direct = p.iter().zip(&t).map(|(x, y)| (x - y).abs()).sum::<f64>() / 64.0;
        let got = mae(&Tensor::matrix(8, 8, p), &Tensor::matrix(8, 8, t)).unwrap();
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn mae_column_groups() {
        let p = Tensor::matrix(2, 4, vec![1.0, 1.0, 5.0, 5.0, 1.0, 1.0, 5.0, 5.0]);
        let t = Tensor::zeros(&[2, 4]);
        assert_eq!(mae_columns(&p, &t, &[0, 1]).unwrap(), 1.0);
        assert_eq!(mae_columns(&p, &t, &[2, 3]).unwrap(), 5.0);
        assert!(mae_columns(&p, &t, &[4]).is_err());
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn correlation_affine_invariance((a, b) in series(), s in 0.1f64..10.0, c in -5.0f64..5.0) {
            let r = match pearson_correlation(&a, &b) { Ok(r) => r, Err(_) => return Ok(()) };
            let scaled: Vec<f64> = a.iter().map(|v| s * v + c).collect();
            let flipped: Vec<f64> = a.iter().map(|v| -s * v + c).collect();
            prop_assert!((pearson_correlation(&scaled, &b).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson_correlation(&flipped, &b).unwrap() + r).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn pck_monotone_in_beta(
            frames in 1usize..10,
            offsets in prop::collection::vec(-5.0f64..5.0, 40),
            b1 in 0.01f64..1.0,
            b2 in 0.01f64..1.0,
        ) {
            let truth = Tensor::zeros(&[frames, 4]);
            let pred = Tensor::matrix(frames, 4, offsets[..frames * 4].to_vec());
            let (lo, hi) = (b1.min(b2), b1.max(b2));
            let small = pck_at(&pred, &truth, &PckSpec::new(lo, 10.0, 10.0).unwrap()).unwrap();
            let large = pck_at(&pred, &truth, &PckSpec::new(hi, 10.0, 10.0).unwrap()).unwrap();
            for (s, l) in small.iter().zip(&large) {
                prop_assert!(s <= l);
            }
        }

        #[test]
        fn mae_triangle(v in prop::collection::vec(-10.0f64..10.0, 3 * 12)) {
            let a = Tensor::matrix(3, 4, v[..12].to_vec());
            let b = Tensor::matrix(3, 4, v[12..24].to_vec());
            let c = Tensor::matrix(3, 4, v[24..].to_vec());
            let lhs = mae(&a, &c).unwrap();
            prop_assert!(lhs >= 0.0);
            prop_assert!(lhs <= mae(&a, &b).unwrap() + mae(&b, &c).unwrap() + 1e-12);
        }
    }
}
