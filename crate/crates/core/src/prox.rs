//! Proximal operators of the four terms in the phase program and the
//! conjugation bridge `prox_{nu F*}(z) = z - nu prox_{F/nu}(z / nu)`.

use crate::error::{Error, Result};
use crate::phase::l2_norm;
use crate::wavelet::WaveletCoeffs;

fn check_nonneg(name: &str, t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {t}")));
    }
    Ok(())
}

#[inline]
fn shrink(z: f64, t: f64) -> f64 {
    let m = z.abs() - t;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// `sign(z) * max(|z| - t, 0)` element-wise.
pub fn soft_threshold(zeta: &[f64], t: f64) -> Result<Vec<f64>> {
    check_nonneg("threshold", t)?;
    Ok(zeta.iter().map(|&z| shrink(z, t)).collect())
}

/// Soft thresholding of detail coefficients; the scaling block passes
/// through untouched.
pub fn prox_f1(zeta: &WaveletCoeffs, t: f64) -> Result<WaveletCoeffs> {
    check_nonneg("threshold", t)?;
    let mut out = zeta.clone();
    shrink_details(out.width(), out.height(), out.levels(), out.data_mut(), t);
    Ok(out)
}

pub(crate) fn shrink_details(width: usize, height: usize, levels: usize, data: &mut [f64], t: f64) {
    let (sw, sh) = (width >> levels, height >> levels);
    for (i, row) in data.chunks_exact_mut(width).enumerate() {
        let skip = if i < sh { sw } else { 0 };
        for v in &mut row[skip..] {
            *v = shrink(*v, t);
        }
    }
}

/// Projection onto `{z : ||z||_2 <= eps_n}`.
pub fn project_l2_ball(zeta: &[f64], eps_n: f64) -> Result<Vec<f64>> {
    check_nonneg("eps_n", eps_n)?;
    let mut out = zeta.to_vec();
    project_l2_ball_in_place(&mut out, eps_n);
    Ok(out)
}

pub(crate) fn project_l2_ball_in_place(zeta: &mut [f64], eps_n: f64) {
    if eps_n == 0.0 {
        zeta.fill(0.0);
        return;
    }
    let norm = l2_norm(zeta);
    if norm > eps_n {
        let s = eps_n / norm;
        zeta.iter_mut().for_each(|v| *v *= s);
    }
}

/// Result of projecting onto an l1 ball around a center.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Projection {
    pub point: Vec<f64>,
    /// Threshold solving `sum_i max(0, |z_i - q_i| - lambda) = eps_w`;
    /// zero when the input was already feasible.
    pub lambda: f64,
}

/// Projection onto `{z : ||q - z||_1 <= eps_w}`.
pub fn project_l1_ball_around(zeta: &[f64], q: &[f64], eps_w: f64) -> Result<L1Projection> {
    check_nonneg("eps_w", eps_w)?;
    if zeta.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: zeta has {}, q has {}",
            zeta.len(),
            q.len()
        )));
    }
    let mut point = zeta.to_vec();
    let mut scratch = Vec::new();
    let lambda = project_l1_ball_around_in_place(&mut point, q, eps_w, &mut scratch);
    Ok(L1Projection { point, lambda })
}

/// In-place l1-ball projection. Returns the threshold used.
pub(crate) fn project_l1_ball_around_in_place(
    zeta: &mut [f64],
    q: &[f64],
    eps_w: f64,
    scratch: &mut Vec<f64>,
) -> f64 {
    if eps_w == 0.0 {
        zeta.copy_from_slice(q);
        return f64::INFINITY;
    }
    let dist: f64 = zeta.iter().zip(q).map(|(z, c)| (z - c).abs()).sum();
    if dist <= eps_w {
        return 0.0;
    }
    scratch.clear();
    scratch.extend(zeta.iter().zip(q).map(|(z, c)| (z - c).abs()));
    let lambda = l1_threshold(scratch, eps_w);
    for (z, &c) in zeta.iter_mut().zip(q) {
        *z = c + shrink(*z - c, lambda);
    }
    lambda
}

/// Solve `sum_i max(0, a_i - lambda) = eps` for `lambda > 0` given
/// magnitudes `a` with `sum a > eps`. Consumes `a` as scratch.
///
/// Entries below a running lower bound on `lambda` cannot contribute, so
/// they are filtered out first; the survivors are sorted in decreasing
/// order and scanned over breakpoints.
pub(crate) fn l1_threshold(a: &mut Vec<f64>, eps: f64) -> f64 {
    // Lower-bound pruning: for any active set S, lambda >= (sum_S a - eps) / |S|.
    loop {
        let (sum, count) = a.iter().fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
        let bound = (sum - eps) / count as f64;
        let before = a.len();
        a.retain(|&v| v > bound);
        if a.len() == before {
            break;
        }
    }
    a.sort_unstable_by(|x, y| y.total_cmp(x));
    let mut cumsum = 0.0;
    let mut lambda = 0.0;
    for (k, &v) in a.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - eps) / (k + 1) as f64;
        if candidate >= v {
            break;
        }
        lambda = candidate;
    }
    lambda.max(0.0)
}

/// Projection onto `{z : z_0 = 0}`.
pub fn prox_anchor(zeta: &[f64]) -> Vec<f64> {
    let mut out = zeta.to_vec();
    if let Some(first) = out.first_mut() {
        *first = 0.0;
    }
    out
}

/// Prox of the convex conjugate via the Moreau decomposition.
///
/// `prox_scaled` must evaluate `prox_{F/nu}`; the caller owns the `1/nu`
/// scaling because it is specific to each `F`.
pub fn prox_conjugate<P>(prox_scaled: P, zeta: &[f64], nu: f64) -> Result<Vec<f64>>
where
    P: FnOnce(&[f64]) -> Vec<f64>,
{
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu must be > 0, got {nu}")));
    }
    let scaled: Vec<f64> = zeta.iter().map(|z| z / nu).collect();
    let p = prox_scaled(&scaled);
    Ok(zeta.iter().zip(&p).map(|(z, pv)| z - nu * pv).collect())
}

/// Buffer-reusing form of [`prox_conjugate`] used inside the solver.
/// `prox_scaled` receives `zeta / nu` and must overwrite it with
/// `prox_{F/nu}(zeta / nu)`.
pub(crate) fn prox_conjugate_in_place<P>(zeta: &mut [f64], nu: f64, scratch: &mut Vec<f64>, prox_scaled: P)
where
    P: FnOnce(&mut [f64]),
{
    scratch.clear();
    scratch.extend(zeta.iter().map(|z| z / nu));
    prox_scaled(scratch);
    for (z, p) in zeta.iter_mut().zip(scratch.iter()) {
        *z -= nu * p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::dot;
    use crate::wavelet::{scaling_mask, Wavelet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-r..r)).collect()
    }

    /// Bisection on the monotone map lambda -> sum max(0, |d_i| - lambda).
    fn bisect_lambda(d: &[f64], eps: f64) -> f64 {
        let f = |l: f64| d.iter().map(|v| (v.abs() - l).max(0.0)).sum::<f64>() - eps;
        let (mut lo, mut hi) = (0.0, d.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[2.5], 1.0).unwrap(), vec![1.5]);
        assert_eq!(soft_threshold(&[-0.3], 1.0).unwrap(), vec![0.0]);
        assert_eq!(soft_threshold(&[-2.0], 0.5).unwrap(), vec![-1.5]);
        let v = vec![0.3, -4.0, 1e-9];
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v);
        assert!(soft_threshold(&v, -1.0).is_err());
    }

    #[test]
    fn prox_f1_respects_mask() {
        let (w, h, j) = (8, 8, 2);
        let mask = scaling_mask(w, h, j);
        let data: Vec<f64> = mask.iter().map(|&m| if m { 0.1 } else { 3.0 }).collect();
        let c = WaveletCoeffs::new(w, h, j, Wavelet::Haar, data).unwrap();
        let out = prox_f1(&c, 5.0).unwrap();
        for (v, &m) in out.data().iter().zip(&mask) {
            assert_eq!(*v, if m { 0.1 } else { 0.0 });
        }
        let zero = WaveletCoeffs::new(w, h, j, Wavelet::Haar, vec![0.0; 64]).unwrap();
        assert!(prox_f1(&zero, 1.0).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_ball_examples() {
        let z = vec![2.0, 0.0];
        assert_eq!(project_l2_ball(&z, 1.0).unwrap(), vec![1.0, 0.0]);
        let inside = vec![0.1, -0.2];
        assert_eq!(project_l2_ball(&inside, 1.0).unwrap(), inside);
        assert_eq!(project_l2_ball(&[0.0, 0.0], 3.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(project_l2_ball(&[1.0, 1.0], 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn l1_ball_examples() {
        let p = project_l1_ball_around(&[3.0, 1.0], &[0.0, 0.0], 2.0).unwrap();
        assert!((p.lambda - 1.0).abs() < 1e-15);
        assert_eq!(p.point, vec![2.0, 0.0]);

        let q = vec![1.0, -1.0, 0.5];
        let z = vec![1.25, -1.25, 0.5];
        let p = project_l1_ball_around(&z, &q, 1.0).unwrap();
        assert_eq!(p.point, z);
        assert_eq!(p.lambda, 0.0);

        let p = project_l1_ball_around(&z, &q, 0.0).unwrap();
        assert_eq!(p.point, q);
        assert!(project_l1_ball_around(&z, &q[..2], 1.0).is_err());
    }

    #[test]
    fn l1_ball_ties() {
        // Four identical breakpoints: 4 * (2 - lambda) = 2 -> lambda = 1.5.
        let p = project_l1_ball_around(&[2.0, -2.0, 2.0, -2.0], &[0.0; 4], 2.0).unwrap();
        assert!((p.lambda - 1.5).abs() < 1e-15);
        assert_eq!(p.point, vec![0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn l1_ball_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let z = random_vec(&mut rng, 200, 3.0);
            let q = random_vec(&mut rng, 200, 1.0);
            let dist: f64 = z.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
            let eps = rng.gen_range(0.01..0.9) * dist;
            let p = project_l1_ball_around(&z, &q, eps).unwrap();
            let d: Vec<f64> = z.iter().zip(&q).map(|(a, b)| a - b).collect();
            let oracle = bisect_lambda(&d, eps);
            assert!((p.lambda - oracle).abs() <= 1e-9 * oracle.max(1.0));
            let r: f64 = p.point.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
            assert!((r - eps).abs() <= 1e-9 * eps);
        }
    }

    #[test]
    fn moreau_identity_l2() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let z = random_vec(&mut rng, 50, 5.0);
            let nu = rng.gen_range(0.05..3.0);
            let eps = rng.gen_range(0.0..4.0);
            let conj = prox_conjugate(|s| project_l2_ball(s, eps).unwrap(), &z, nu).unwrap();
            let scaled: Vec<f64> = z.iter().map(|v| v / nu).collect();
            let p = project_l2_ball(&scaled, eps).unwrap();
            for i in 0..z.len() {
                assert!((conj[i] + nu * p[i] - z[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conjugate_of_l1_is_clipping() {
        let prox = |s: &[f64]| soft_threshold(s, 1.0).unwrap();
        assert!((prox_conjugate(prox, &[0.5], 1.0).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!((prox_conjugate(prox, &[3.0], 1.0).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(prox_conjugate(prox, &[3.0], 0.0).is_err());
        assert!(prox_conjugate(prox, &[3.0], -1.0).is_err());
    }

    #[test]
    fn in_place_conjugate_matches_allocating_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let z = random_vec(&mut rng, 40, 4.0);
        let q = random_vec(&mut rng, 40, 1.0);
        let nu = 0.37;
        let expected = prox_conjugate(|s| project_l1_ball_around(s, &q, 3.0).unwrap().point, &z, nu).unwrap();
        let mut got = z.clone();
        let mut scratch = Vec::new();
        let mut inner = Vec::new();
        prox_conjugate_in_place(&mut got, nu, &mut scratch, |s| {
            project_l1_ball_around_in_place(s, &q, 3.0, &mut inner);
        });
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn anchor_examples() {
        assert_eq!(prox_anchor(&[5.0, 1.0, 2.0]), vec![0.0, 1.0, 2.0]);
        assert_eq!(prox_anchor(&[0.0, 1.0]), vec![0.0, 1.0]);
        assert_eq!(prox_anchor(&[0.0; 3]), vec![0.0; 3]);
        assert!(prox_anchor(&[]).is_empty());
    }

    #[test]
    fn projections_are_firmly_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let q = random_vec(&mut rng, 30, 1.0);
        for _ in 0..200 {
            let a = random_vec(&mut rng, 30, 4.0);
            let b = random_vec(&mut rng, 30, 4.0);
            let ops: [&dyn Fn(&[f64]) -> Vec<f64>; 4] = [
                &|z| soft_threshold(z, 0.7).unwrap(),
                &|z| project_l2_ball(z, 2.0).unwrap(),
                &|z| project_l1_ball_around(z, &q, 5.0).unwrap().point,
                &|z| prox_anchor(z),
            ];
            for op in ops {
                let (pa, pb) = (op(&a), op(&b));
                let dp: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
                let dx: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                assert!(dot(&dp, &dp) <= dot(&dp, &dx) + 1e-10);
            }
        }
    }

    #[test]
    fn l1_projection_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let q = random_vec(&mut rng, 20, 1.0);
        let z = random_vec(&mut rng, 20, 5.0);
        let eps = 3.0;
        let p = project_l1_ball_around(&z, &q, eps).unwrap().point;
        let dist = |u: &[f64]| u.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for _ in 0..100 {
            // Random feasible point: q plus a direction scaled into the ball.
            let d = random_vec(&mut rng, 20, 1.0);
            let l1: f64 = d.iter().map(|v| v.abs()).sum();
            let s = rng.gen_range(0.0..1.0) * eps / l1;
            let u: Vec<f64> = q.iter().zip(&d).map(|(c, v)| c + s * v).collect();
            assert!(dist(&p) <= dist(&u) + 1e-12);
        }
    }
}
