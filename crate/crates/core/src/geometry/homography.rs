//! Planar homographies: normalized DLT, RANSAC, and Levenberg-Marquardt
//! refinement of the one-sided transfer error.

use nalgebra::{Matrix3, Point2, SMatrix, SVector, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Correspondence;

const MIN_DET: f64 = 1e-9;

/// 3x3 projective map, scaled so the bottom-right entry is 1 when it is
/// not (near) zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

fn normalize(m: Matrix3<f64>) -> Matrix3<f64> {
    let s = m[(2, 2)];
    if s.abs() > 1e-12 {
        m / s
    } else {
        m / m.norm()
    }
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate);
        }
        let m = normalize(m);
        if m.determinant().abs() <= MIN_DET {
            return Err(Error::Degenerate);
        }
        Ok(Homography { m })
    }

    /// Row-major entries.
    pub fn from_row_slice(v: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(v))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Rotation by `angle` radians about `(cx, cy)`, followed by a shift.
    pub fn rotation_about(angle: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let to = Matrix3::new(1.0, 0.0, cx, 0.0, 1.0, cy, 0.0, 0.0, 1.0);
        let from = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
        Homography { m: to * r * from }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.m - Matrix3::identity()).abs().max() <= tol
    }

    #[inline]
    pub fn try_apply(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        (v.z.abs() > 1e-12).then(|| Point2::new(v.x / v.z, v.y / v.z))
    }

    /// Maps `p`; points sent to infinity come back as non-finite values.
    #[inline]
    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        self.try_apply(p)
            .unwrap_or_else(|| Point2::new(f64::INFINITY, f64::INFINITY))
    }

    pub fn inverse(&self) -> Homography {
        // from_matrix rejects singular matrices, so the inverse exists.
        let inv = self.m.try_inverse().expect("homography is invertible");
        Homography { m: normalize(inv) }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Homography {
        Homography {
            m: normalize(self.m * other.m),
        }
    }

    pub fn transfer_error(&self, c: &Correspondence) -> f64 {
        let q = self.apply(&c.a);
        let e = ((q.x - c.b.x).powi(2) + (q.y - c.b.y).powi(2)).sqrt();
        if e.is_finite() {
            e
        } else {
            f64::MAX
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    /// Inlier threshold on the transfer error, in pixels.
    pub threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    /// Levenberg-Marquardt refinement on the final inliers.
    pub refine: bool,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            threshold: 3.0,
            max_iterations: 2000,
            confidence: 0.995,
            refine: true,
        }
    }
}

/// Similarity taking points to zero mean and mean distance sqrt(2).
fn normalizing_transform(points: impl Iterator<Item = Point2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist.is_nan() || mean_dist <= 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Normalized direct linear transform over all correspondences.
pub fn dlt(corrs: &[Correspondence]) -> Result<Homography> {
    if corrs.len() < 4 {
        return Err(Error::TooFewPoints(corrs.len()));
    }
    let ta = normalizing_transform(corrs.iter().map(|c| c.a)).ok_or(Error::Degenerate)?;
    let tb = normalizing_transform(corrs.iter().map(|c| c.b)).ok_or(Error::Degenerate)?;
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for c in corrs {
        let a = ta * Vector3::new(c.a.x, c.a.y, 1.0);
        let b = tb * Vector3::new(c.b.x, c.b.y, 1.0);
        let (x, y) = (a.x, a.y);
        let (u, v) = (b.x, b.y);
        let r0 = SVector::<f64, 9>::from_row_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        let r1 = SVector::<f64, 9>::from_row_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        ata += r0 * r0.transpose() + r1 * r1.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine eigenvalues");
    let h = eig.eigenvectors.column(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tb_inv = tb.try_inverse().ok_or(Error::Degenerate)?;
    Homography::from_matrix(tb_inv * hn * ta)
}

fn triangle_area(p: &Point2<f64>, q: &Point2<f64>, r: &Point2<f64>) -> f64 {
    ((q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)).abs() / 2.0
}

/// True when any three of the points are (nearly) collinear.
fn has_collinear_triple(points: &[Point2<f64>]) -> bool {
    let mut scale: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            scale = scale.max((points[i] - points[j]).norm_squared());
        }
    }
    let eps = 1e-6 * scale.max(1e-12);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                if triangle_area(&points[i], &points[j], &points[k]) <= eps {
                    return true;
                }
            }
        }
    }
    false
}

/// True when all points lie (nearly) on one line.
fn all_collinear(points: impl Iterator<Item = Point2<f64>> + Clone) -> bool {
    let n = points.clone().count() as f64;
    if n < 3.0 {
        return true;
    }
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        xx += dx * dx;
        yy += dy * dy;
        xy += dx * dy;
    }
    let tr = xx + yy;
    let det = xx * yy - xy * xy;
    // Smallest / largest eigenvalue of the scatter matrix.
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (lmax, lmin) = (tr / 2.0 + disc, tr / 2.0 - disc);
    lmax <= 0.0 || lmin / lmax < 1e-10
}

fn sample_is_degenerate(corrs: &[Correspondence], idx: &[usize; 4]) -> bool {
    let a: Vec<_> = idx.iter().map(|&i| corrs[i].a).collect();
    let b: Vec<_> = idx.iter().map(|&i| corrs[i].b).collect();
    has_collinear_triple(&a) || has_collinear_triple(&b)
}

/// Levenberg-Marquardt on the 8 free entries (h33 = 1), minimizing the
/// squared transfer error over `corrs`.
pub fn refine(h: &Homography, corrs: &[Correspondence]) -> Homography {
    let m = h.matrix();
    if m[(2, 2)].abs() < 1e-12 || corrs.len() < 4 {
        return *h;
    }
    let mut p = SVector::<f64, 8>::from_row_slice(&[
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
    ]);
    let cost = |p: &SVector<f64, 8>| -> f64 {
        corrs
            .iter()
            .map(|c| {
                let w = p[6] * c.a.x + p[7] * c.a.y + 1.0;
                let u = (p[0] * c.a.x + p[1] * c.a.y + p[2]) / w - c.b.x;
                let v = (p[3] * c.a.x + p[4] * c.a.y + p[5]) / w - c.b.y;
                u * u + v * v
            })
            .sum()
    };
    let mut lambda = 1e-3;
    let mut current = cost(&p);
    for _ in 0..30 {
        let mut jtj = SMatrix::<f64, 8, 8>::zeros();
        let mut jtr = SVector::<f64, 8>::zeros();
        for c in corrs {
            let (x, y) = (c.a.x, c.a.y);
            let w = p[6] * x + p[7] * y + 1.0;
            let u = (p[0] * x + p[1] * y + p[2]) / w;
            let v = (p[3] * x + p[4] * y + p[5]) / w;
            let ju = SVector::<f64, 8>::from_row_slice(&[
                x / w,
                y / w,
                1.0 / w,
                0.0,
                0.0,
                0.0,
                -u * x / w,
                -u * y / w,
            ]);
            let jv = SVector::<f64, 8>::from_row_slice(&[
                0.0,
                0.0,
                0.0,
                x / w,
                y / w,
                1.0 / w,
                -v * x / w,
                -v * y / w,
            ]);
            jtj += ju * ju.transpose() + jv * jv.transpose();
            jtr += ju * (u - c.b.x) + jv * (v - c.b.y);
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut damped = jtj;
            for i in 0..8 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = p - step;
            let c = cost(&candidate);
            if c.is_finite() && c < current {
                p = candidate;
                let gain = current - c;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = gain > 1e-14 * current.max(1e-300);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let refined = Matrix3::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0);
    Homography::from_matrix(refined).unwrap_or(*h)
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w4 = inlier_ratio.powi(4);
    if w4 >= 1.0 {
        return 1;
    }
    if w4 <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w4).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

fn inlier_mask(h: &Homography, corrs: &[Correspondence], threshold: f64) -> Vec<bool> {
    corrs.iter().map(|c| h.transfer_error(c) <= threshold).collect()
}

/// Robust estimate mapping `c.a` to `c.b`. Returns the homography and the
/// inlier mask (transfer error within `params.threshold`).
pub fn estimate_homography(
    corrs: &[Correspondence],
    params: &RansacParams,
    seed: u64,
) -> Result<(Homography, Vec<bool>)> {
    let n = corrs.len();
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, f64, Homography)> = None;
    let mut needed = params.max_iterations.max(1);
    let mut iter = 0;
    let mut attempts = 0;
    let attempt_cap = 10 * params.max_iterations.max(1);
    while iter < needed && attempts < attempt_cap {
        attempts += 1;
        let idx = if n == 4 {
            [0, 1, 2, 3]
        } else {
            let mut s = [0usize; 4];
            let mut k = 0;
            while k < 4 {
                let v = rng.random_range(0..n);
                if !s[..k].contains(&v) {
                    s[k] = v;
                    k += 1;
                }
            }
            s
        };
        if sample_is_degenerate(corrs, &idx) {
            if n == 4 {
                break;
            }
            continue;
        }
        iter += 1;
        let sample: Vec<_> = idx.iter().map(|&i| corrs[i]).collect();
        let Ok(h) = dlt(&sample) else { continue };
        let mut count = 0;
        let mut err_sum = 0.0;
        for c in corrs {
            let e = h.transfer_error(c);
            if e <= params.threshold {
                count += 1;
                err_sum += e;
            }
        }
        let better = match &best {
            None => true,
            Some((bc, be, _)) => count > *bc || (count == *bc && err_sum < *be),
        };
        if better {
            best = Some((count, err_sum, h));
            needed = required_iterations(count as f64 / n as f64, params.confidence, params.max_iterations);
        }
        if n == 4 {
            break;
        }
    }
    let Some((_, _, mut h)) = best else {
        return Err(Error::Degenerate);
    };
    let mut mask = inlier_mask(&h, corrs, params.threshold);
    // Re-fit on the consensus set, then polish.
    for _ in 0..2 {
        let inliers: Vec<_> = corrs
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| *c)
            .collect();
        if inliers.len() < 4 || all_collinear(inliers.iter().map(|c| c.a)) {
            return Err(Error::Degenerate);
        }
        if inliers.len() > 4 {
            if let Ok(refit) = dlt(&inliers) {
                h = refit;
            }
        }
        if params.refine {
            h = refine(&h, &inliers);
        }
        let next = inlier_mask(&h, corrs, params.threshold);
        if next == mask {
            break;
        }
        if next.iter().filter(|&&m| m).count() < 4 {
            break;
        }
        mask = next;
    }
    Ok((h, mask))
}
