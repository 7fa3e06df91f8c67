//! RANSAC estimation of a 6-dof affine map from point correspondences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Affine2D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Reprojection error (px) below which a correspondence is an inlier.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Lowe ratio used when matching descriptors.
    pub ratio_test: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            inlier_threshold: 2.0,
            max_iterations: 1000,
            ratio_test: 0.75,
            min_inliers: 12,
            seed: 0x5eed,
        }
    }
}

impl RansacConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidInput("RANSAC inlier threshold must be positive".into()));
        }
        if !(self.ratio_test > 0.0 && self.ratio_test < 1.0) {
            return Err(Error::InvalidInput("ratio test must be in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("RANSAC needs at least one iteration".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug)]
pub struct RansacFit {
    pub transform: Affine2D,
    pub inliers: Vec<bool>,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

pub type Point = (f64, f64);

#[inline]
fn reprojection_error(t: &Affine2D, s: Point, d: Point) -> f64 {
    let (x, y) = t.apply(s.0, s.1);
    ((x - d.0).powi(2) + (y - d.1).powi(2)).sqrt()
}

/// Twice the signed triangle area.
fn doubled_area(p: Point, q: Point, r: Point) -> f64 {
    (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
}

/// Exact affine through three non-collinear correspondences.
fn affine_from_three(src: [Point; 3], dst: [Point; 3]) -> Option<Affine2D> {
    let [p0, p1, p2] = src;
    let det = doubled_area(p0, p1, p2);
    if det.abs() < 1.0 {
        return None;
    }
    // Solve [x y 1] * [a b tx]^T = u for each output row via Cramer's rule.
    let solve = |u: [f64; 3]| {
        let a = (u[0] * (p1.1 - p2.1) + u[1] * (p2.1 - p0.1) + u[2] * (p0.1 - p1.1)) / det;
        let b = (u[0] * (p2.0 - p1.0) + u[1] * (p0.0 - p2.0) + u[2] * (p1.0 - p0.0)) / det;
        let t = (u[0] * (p1.0 * p2.1 - p2.0 * p1.1)
            + u[1] * (p2.0 * p0.1 - p0.0 * p2.1)
            + u[2] * (p0.0 * p1.1 - p1.0 * p0.1))
            / det;
        (a, b, t)
    };
    let (a, b, tx) = solve([dst[0].0, dst[1].0, dst[2].0]);
    let (c, d, ty) = solve([dst[0].1, dst[1].1, dst[2].1]);
    Some(Affine2D::new(a, b, c, d, tx, ty))
}

/// Solves a symmetric 3x3 system with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = v[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Least-squares affine fit over the given correspondences.
///
/// Coordinates are centered before solving the normal equations.
pub fn fit_affine_least_squares(src: &[Point], dst: &[Point]) -> Option<Affine2D> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return None;
    }
    let mean = |pts: &[Point]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        (sx / n as f64, sy / n as f64)
    };
    let (msx, msy) = mean(src);
    let (mdx, mdy) = mean(dst);
    let mut m = [[0.0; 3]; 3];
    let mut vu = [0.0; 3];
    let mut vv = [0.0; 3];
    for (s, d) in src.iter().zip(dst) {
        let row = [s.0 - msx, s.1 - msy, 1.0];
        let (u, v) = (d.0 - mdx, d.1 - mdy);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            vu[i] += row[i] * u;
            vv[i] += row[i] * v;
        }
    }
    let [a, b, tu] = solve3(m, vu)?;
    let [c, d, tv] = solve3(m, vv)?;
    // Undo centering: u' = a(x - msx) + b(y - msy) + tu + mdx.
    Some(Affine2D::new(
        a,
        b,
        c,
        d,
        tu + mdx - a * msx - b * msy,
        tv + mdy - c * msx - d * msy,
    ))
}

fn mark_inliers(t: &Affine2D, src: &[Point], dst: &[Point], threshold: f64) -> Vec<bool> {
    src.iter()
        .zip(dst)
        .map(|(&s, &d)| reprojection_error(t, s, d) < threshold)
        .collect()
}

fn select(points: &[Point], flags: &[bool]) -> Vec<Point> {
    points.iter().zip(flags).filter_map(|(p, &f)| f.then_some(*p)).collect()
}

/// Residual below which an inlier is never trimmed by [`polish`].
const POLISH_FLOOR: f64 = 0.5;

/// Refits on the inliers whose residual is within three robust standard
/// deviations of the fit. The inlier gate is wide enough to admit near-miss
/// matches (a sprite edge moving a pixel, a neighbouring texel), and a few of
/// those visibly bias a least-squares fit that chains over many frames.
fn polish(mut transform: Affine2D, src: &[Point], dst: &[Point], inliers: &[bool]) -> Affine2D {
    for _ in 0..3 {
        let residuals: Vec<f64> = src
            .iter()
            .zip(dst)
            .zip(inliers)
            .filter(|(_, &f)| f)
            .map(|((&s, &d), _)| reprojection_error(&transform, s, d))
            .collect();
        if residuals.len() < 3 {
            break;
        }
        let mut sorted = residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let gate = (3.0 * 1.4826 * sorted[sorted.len() / 2]).max(POLISH_FLOOR);
        if sorted[sorted.len() - 1] <= gate {
            break;
        }
        let core: Vec<bool> = src
            .iter()
            .zip(dst)
            .zip(inliers)
            .map(|((&s, &d), &f)| f && reprojection_error(&transform, s, d) <= gate)
            .collect();
        if core.iter().filter(|&&b| b).count() < 3 {
            break;
        }
        match fit_affine_least_squares(&select(src, &core), &select(dst, &core)) {
            Some(t) => transform = t,
            None => break,
        }
    }
    transform
}

/// Robust affine fit mapping `src` onto `dst`.
///
/// Runs `max_iterations` minimal-sample hypotheses and keeps the one with the
/// lowest truncated squared error (each correspondence costs
/// `min(e^2, threshold^2)`). Plain inlier counting prefers a slightly wrong
/// model that also absorbs a few near-miss outliers; this does not. It then
/// refits on the inlier set by least squares until the set stops changing,
/// and finally trims residual outliers from that set.
pub fn estimate_affine_ransac(src: &[Point], dst: &[Point], cfg: &RansacConfig) -> Result<RansacFit> {
    cfg.validate()?;
    if src.len() != dst.len() {
        return Err(Error::InvalidInput("correspondence lists differ in length".into()));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::StitchFailure(format!("{n} correspondences, need at least 3")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Affine2D)> = None;
    let t2 = cfg.inlier_threshold * cfg.inlier_threshold;
    for _ in 0..cfg.max_iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some(t) = affine_from_three([src[i], src[j], src[k]], [dst[i], dst[j], dst[k]]) else {
            continue;
        };
        let cost: f64 = src
            .iter()
            .zip(dst)
            .map(|(&s, &d)| reprojection_error(&t, s, d).powi(2).min(t2))
            .sum();
        if best.is_none_or(|(bc, _)| cost < bc) {
            best = Some((cost, t));
        }
    }
    let Some((_, mut transform)) = best else {
        return Err(Error::StitchFailure("all samples degenerate".into()));
    };

    let mut inliers = mark_inliers(&transform, src, dst, cfg.inlier_threshold);
    for _ in 0..10 {
        let Some(refit) = fit_affine_least_squares(&select(src, &inliers), &select(dst, &inliers)) else {
            break;
        };
        let next = mark_inliers(&refit, src, dst, cfg.inlier_threshold);
        let next_count = next.iter().filter(|&&b| b).count();
        let count = inliers.iter().filter(|&&b| b).count();
        if next_count < count {
            break;
        }
        transform = refit;
        if next == inliers {
            break;
        }
        inliers = next;
    }

    transform = polish(transform, src, dst, &inliers);
    let inliers = mark_inliers(&transform, src, dst, cfg.inlier_threshold);

    let count = inliers.iter().filter(|&&b| b).count();
    if count < cfg.min_inliers {
        return Err(Error::StitchFailure(format!(
            "{count} inliers, need {}",
            cfg.min_inliers
        )));
    }
    Ok(RansacFit { transform, inliers })
}
