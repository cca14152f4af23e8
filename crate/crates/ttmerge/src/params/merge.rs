//! Static weight-space merges of two aligned parameter maps.
//!
//! Arithmetic is carried out in `f64` per element and narrowed back to `f32`.
//! Endpoint coefficients (exactly 0 or 1) return the corresponding input
//! value untouched, so identities like `lerp(a, b, 0) == a` hold bitwise,
//! signed zeros included.

use super::ParameterMap;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Angle (radians) below which slerp falls back to lerp.
pub const SLERP_PARALLEL_EPS: f64 = 1e-7;

#[inline]
fn affine(a: f64, b: f64, s: f64) -> f64 {
    if s == 0.0 {
        a
    } else if s == 1.0 {
        b
    } else {
        (1.0 - s) * a + s * b
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("{name} = {v} must lie in [0, 1]")));
    }
    Ok(())
}

/// `(1 - λ)·θ_pt + λ·θ_ft`, elementwise.
pub fn lerp_params(pt: &ParameterMap, ft: &ParameterMap, lambda: f64) -> Result<ParameterMap> {
    check_unit("lambda", lambda)?;
    pt.zip_with(ft, |a, b| affine(a, b, lambda))
}

/// Uniform two-model soup: `lerp_params(pt, ft, 0.5)`.
pub fn soup(pt: &ParameterMap, ft: &ParameterMap) -> Result<ParameterMap> {
    lerp_params(pt, ft, 0.5)
}

/// Spherical interpolation on the single concatenated parameter vector.
///
/// With `Ω` the angle between the flattened maps, returns
/// `[sin((1-t)Ω)·v1 + sin(tΩ)·v2] / sin Ω`, re-split into the tensor layout.
/// Nearly parallel inputs (`Ω < 1e-7`) fall back to [`lerp_params`].
/// Antipodal inputs have no unique great circle and are rejected.
pub fn slerp_params(a: &ParameterMap, b: &ParameterMap, t: f64) -> Result<ParameterMap> {
    check_unit("t", t)?;
    a.check_aligned(b)?;
    let (v1, v2) = (a.flatten(), b.flatten());
    let n1 = v1.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n2 = v2.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::Domain("slerp of a zero-norm parameter vector".into()));
    }
    let dot: f64 = v1.iter().zip(&v2).map(|(x, y)| x * y).sum();
    let omega = (dot / (n1 * n2)).clamp(-1.0, 1.0).acos();
    if omega < SLERP_PARALLEL_EPS {
        return lerp_params(a, b, t);
    }
    if std::f64::consts::PI - omega < SLERP_PARALLEL_EPS {
        return Err(Error::Domain(
            "slerp between antipodal parameter vectors is undefined".into(),
        ));
    }
    let s = omega.sin();
    let (c1, c2) = (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s);
    let merged: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| c1 * x + c2 * y).collect();
    a.unflatten(&merged)
}

/// `θ_pt + s·(θ_ft − θ_pt)`.
///
/// With a single task vector this is the same map as `lerp_params(·, ·, s)`,
/// extended to any real `s`.
pub fn task_arithmetic(pt: &ParameterMap, ft: &ParameterMap, scale: f64) -> Result<ParameterMap> {
    if !scale.is_finite() {
        return Err(Error::Domain(format!("task-arithmetic scale {scale}")));
    }
    pt.zip_with(ft, |a, b| affine(a, b, scale))
}

/// Which entries of a task vector survive trimming at density `k`.
///
/// Keeps the `⌈k·n⌉` entries of largest magnitude; equal magnitudes at the
/// cut are resolved in favour of the lower flat index.
pub fn ties_trim_mask(task_vector: &[f64], k: f64) -> Result<Vec<bool>> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::Domain(format!("TIES density k = {k} must lie in (0, 1]")));
    }
    let n = task_vector.len();
    let keep = ((k * n as f64 - 1e-9).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        task_vector[j]
            .abs()
            .total_cmp(&task_vector[i].abs())
            .then(i.cmp(&j))
    });
    let mut mask = vec![false; n];
    for &i in &order[..keep] {
        mask[i] = true;
    }
    Ok(mask)
}

/// TIES merging of one expert into its base.
///
/// Per tensor, trims the task vector `θ_ft − θ_pt` to its top-`k` fraction by
/// magnitude and returns `θ_pt + scale·trim(τ)`. Sign election across task
/// vectors is the identity when there is only one.
pub fn ties_merge(
    pt: &ParameterMap,
    ft: &ParameterMap,
    k: f64,
    scale: f64,
) -> Result<ParameterMap> {
    pt.check_aligned(ft)?;
    if !scale.is_finite() {
        return Err(Error::Domain(format!("TIES scale {scale}")));
    }
    let mut out = ParameterMap::new();
    for ((name, a), (_, b)) in pt.iter().zip(ft.iter()) {
        let tau: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| y as f64 - x as f64)
            .collect();
        let mask = ties_trim_mask(&tau, k)?;
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .zip(&mask)
            .map(|((&x, &y), &kept)| {
                if kept {
                    affine(x as f64, y as f64, scale) as f32
                } else {
                    x
                }
            })
            .collect();
        out.insert(name, a.with_data(data)?)?;
    }
    Ok(out)
}

/// Mixup merge: one `λ ~ Beta(α, α)` draw, then [`lerp_params`].
///
/// The drawn coefficient is returned alongside the merged map and always
/// lies strictly inside `(0, 1)`.
pub fn mixup_merge(
    pt: &ParameterMap,
    ft: &ParameterMap,
    rng: &mut SplitMix64,
    alpha: f64,
) -> Result<(ParameterMap, f64)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("mixup alpha = {alpha} must be > 0")));
    }
    pt.check_aligned(ft)?;
    let lambda = loop {
        let l = rng.beta(alpha, alpha);
        if l > 0.0 && l < 1.0 {
            break l;
        }
    };
    Ok((lerp_params(pt, ft, lambda)?, lambda))
}
