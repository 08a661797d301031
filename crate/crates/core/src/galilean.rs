//! Modulation, the Galilean operator `J(t) = x + 2it∇`, its fractional powers, and
//! the weighted norms tracked along a run.
//!
//! `|J|^β = M(t)(-4t²Δ)^{β/2}M(-t)` is evaluated spectrally. In the lens frame the
//! same quantity reduces to `‖|∇_v|^β B‖₂`, independent of `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_weighted_x, weighted_sum, ComplexField, Space};
use crate::propagator::{free_flow, Frame};
use crate::C64;

/// `e^{±i|x|²/4t} u`.
pub fn modulation(u: &ComplexField, t: f64, sign: f64) -> Result<ComplexField> {
    u.expect(Space::Physical)?;
    if t == 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("modulation needs finite t != 0, got {t}")));
    }
    let r2 = u.grid.radius_sq();
    let mut out = u.clone();
    for (v, r2) in out.values.iter_mut().zip(r2) {
        *v *= C64::from_polar(1.0, sign.signum() * r2 / (4.0 * t));
    }
    Ok(out)
}

/// `‖(s²|k|²)^{β/2} f̂‖₂`, with the `k = 0` node weighted by zero when `β > 0`.
pub fn fractional_gradient_norm(f: &ComplexField, beta: f64, s: f64) -> Result<f64> {
    f.expect(Space::Physical)?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("exponent β = {beta} < 0")));
    }
    let mut hat = f.values.clone();
    f.grid.forward_in_place(&mut hat);
    let k2: Vec<f64> = f.grid.wavenumber_sq().into_iter().map(|k2| s * s * k2).collect();
    Ok(weighted_sum(&k2, &hat, beta, f.grid.dk().powi(f.grid.d as i32)).sqrt())
}

/// Both evaluations of `‖|J(t)|^β u‖₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JNorm {
    /// Spectral weight `(4t²|k|²)^{β/2}` on `M(-t)u`.
    pub route_a: f64,
    /// `‖|x|^β e^{-itΔ}u‖₂`.
    pub route_b: f64,
}

impl JNorm {
    pub fn value(&self) -> f64 {
        self.route_a
    }

    pub fn relative_gap(&self) -> f64 {
        let scale = self.route_a.abs().max(self.route_b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.route_a - self.route_b).abs() / scale
        }
    }
}

pub fn fractional_j_norm(u: &ComplexField, t: f64, beta: f64) -> Result<JNorm> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("|J|^β needs t > 0, got {t}")));
    }
    let w = modulation(u, t, -1.0)?;
    let route_a = fractional_gradient_norm(&w, beta, 2.0 * t)?;
    let route_b = norm_weighted_x(&free_flow(u, -t)?, beta)?;
    Ok(JNorm { route_a, route_b })
}

/// `‖e^{-itΔ}u‖₂ + ‖|x|^β e^{-itΔ}u‖₂`.
pub fn h0beta_pullback_norm(u: &ComplexField, t: f64, beta: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("pullback needs t >= 0, got {t}")));
    }
    let f = free_flow(u, -t)?;
    Ok(f.l2() + norm_weighted_x(&f, beta)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub t: f64,
    pub l2: f64,
    pub linf: f64,
    pub jbeta: f64,
    pub jbracket: f64,
    pub h0beta_pullback: f64,
    /// Relative gap between the two `|J|^β` routes (physical frame only).
    pub jbeta_route_gap: Option<f64>,
    /// `‖u‖_∞ / (‖w‖₂^{1-θ} ‖|∇|^β w‖₂^θ)`, `w = M(-t)u`, `θ = d/2β`.
    pub gn_ratio: f64,
}

fn gn_ratio(linf: f64, l2: f64, grad: f64, d: usize, beta: f64) -> f64 {
    let theta = d as f64 / (2.0 * beta);
    let denom = l2.powf(1.0 - theta) * grad.powf(theta);
    if denom > 0.0 {
        linf / denom
    } else {
        0.0
    }
}

/// Norms of a physical-frame field at time `t > 0`.
pub fn report_norms(u: &ComplexField, t: f64, beta: f64) -> Result<NormReport> {
    let j = fractional_j_norm(u, t, beta)?;
    let l2 = u.l2();
    let linf = u.max_abs();
    let w = modulation(u, t, -1.0)?;
    let grad = fractional_gradient_norm(&w, beta, 1.0)?;
    Ok(NormReport {
        t,
        l2,
        linf,
        jbeta: j.value(),
        jbracket: (l2 * l2 + j.value() * j.value()).sqrt(),
        h0beta_pullback: h0beta_pullback_norm(u, t, beta)?,
        jbeta_route_gap: Some(j.relative_gap()),
        gn_ratio: gn_ratio(linf, l2, grad, u.grid.d, beta),
    })
}

/// Norms of `u` given its lens representative `B(t, ·)`.
///
/// `‖u‖₂ = ‖B‖₂`, `‖u‖_∞ = (2t)^{-d/2}‖B‖_∞`, and both `‖|J|^β u‖₂` and the
/// weighted part of the pullback norm equal `‖|∇_v|^β B‖₂`.
pub fn report_norms_lens(b: &ComplexField, t: f64, beta: f64) -> Result<NormReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("lens norms need t > 0, got {t}")));
    }
    let d = b.grid.d;
    let l2 = b.l2();
    let jbeta = fractional_gradient_norm(b, beta, 1.0)?;
    let binf = b.max_abs();
    Ok(NormReport {
        t,
        l2,
        linf: (2.0 * t).powf(-(d as f64) / 2.0) * binf,
        jbeta,
        jbracket: (l2 * l2 + jbeta * jbeta).sqrt(),
        h0beta_pullback: l2 + jbeta,
        jbeta_route_gap: None,
        gn_ratio: gn_ratio(binf, l2, jbeta, d, beta),
    })
}

/// Dispatches on the frame of `field`.
pub fn report_norms_in(field: &ComplexField, frame: Frame, t: f64, beta: f64) -> Result<NormReport> {
    match frame {
        Frame::Physical => report_norms(field, t, beta),
        Frame::Lens => report_norms_lens(field, t, beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::lens;

    fn gaussian(g: GridSpec) -> ComplexField {
        ComplexField::from_fn(g, 0.0, |x| C64::new((-x[..g.d].iter().map(|a| a * a).sum::<f64>()).exp(), 0.0))
    }

    #[test]
    fn modulation_pair_is_identity() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let u = gaussian(g);
        let back = modulation(&modulation(&u, 0.7, 1.0).unwrap(), 0.7, -1.0).unwrap();
        for (a, b) in back.values.iter().zip(&u.values) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(modulation(&u, 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_power_is_l2() {
        let g = GridSpec::new(2, 64, 8.0).unwrap();
        let u = free_flow(&gaussian(g), 0.3).unwrap();
        let j = fractional_j_norm(&u, 0.3, 0.0).unwrap();
        assert!((j.route_a - u.l2()).abs() < 1e-12 * u.l2());
        assert!((j.route_b - u.l2()).abs() < 1e-12 * u.l2());
    }

    #[test]
    fn lens_norms_match_physical() {
        let g = GridSpec::new(2, 128, 16.0).unwrap();
        let u = free_flow(&gaussian(g), 0.5).unwrap();
        let phys = report_norms(&u, 0.5, 1.1).unwrap();
        let lensed = report_norms_lens(&lens::to_lens(&u, 0.5), 0.5, 1.1).unwrap();
        for (a, b) in [
            (phys.l2, lensed.l2),
            (phys.linf, lensed.linf),
            (phys.jbeta, lensed.jbeta),
            (phys.gn_ratio, lensed.gn_ratio),
        ] {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
        // The physical pullback norm samples |x|^β, which is not smooth at the origin.
        let gap = (phys.h0beta_pullback - lensed.h0beta_pullback).abs() / lensed.h0beta_pullback;
        assert!(gap < 1e-4, "pullback gap {gap}");
    }

    #[test]
    fn zero_field_reports_zero() {
        let g = GridSpec::new(2, 16, 4.0).unwrap();
        let r = report_norms(&ComplexField::zeros(g, Space::Physical, 1.0), 1.0, 1.1).unwrap();
        assert_eq!((r.l2, r.linf, r.jbeta, r.jbracket, r.h0beta_pullback), (0.0, 0.0, 0.0, 0.0, 0.0));
    }
}
