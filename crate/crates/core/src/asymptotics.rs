//! Phase accumulation, renormalization `G = e^{iσΦ}γ`, profile extraction and
//! exponent fits.
//!
//! Along `x = 2vt` the solution behaves like `t^{-d/2} e^{i|x|²/4t} γ(t, v)`, so the
//! potential felt there is `(2t)^{-1} N_t[γ](v)` with
//! `N_t[γ] = 2^d (k_{2t} ∗ |γ|²) - 2|γ|^{2/d}`, where `k_s(r) = (1 - e^{-sr})/r`
//! for the Bopp–Podolsky term and `1/r` for the Coulomb term. The phase is
//! `Φ(t, v) = ∫_1^t N_s[γ(s)](v) ds / 2s`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galilean::NormReport;
use crate::grid::{ComplexField, GridSpec, Space};
use crate::kernels::{KernelKind, KernelMultiplier, RadialKernel};
use crate::lens;
use crate::propagator::{Frame, NonlinearitySpec};
use crate::wavepacket::{GammaBounds, GammaField};
use crate::C64;

/// Multiplier for the convolution part of `N_t` on the velocity grid, if any.
pub fn phase_multiplier(grid: GridSpec, spec: &NonlinearitySpec, t: f64) -> Result<Option<KernelMultiplier>> {
    match spec.convolution() {
        None => Ok(None),
        Some(kind) => {
            let screen = if kind == KernelKind::BoppPodolsky { 2.0 * t } else { 1.0 };
            Ok(Some(KernelMultiplier::new(grid, RadialKernel { kind, screen }, 2.0 * grid.l)?))
        }
    }
}

/// `N[γ]` at every node of `grid`.
pub fn phase_density(
    gamma: &[C64],
    grid: GridSpec,
    spec: &NonlinearitySpec,
    m: Option<&KernelMultiplier>,
) -> Result<Vec<f64>> {
    if gamma.len() != grid.len() {
        return Err(Error::GridMismatch("γ does not cover the velocity grid".into()));
    }
    let mut out = vec![0.0; gamma.len()];
    if let Some(kind) = spec.convolution() {
        let m = m.ok_or_else(|| Error::InvalidArgument("phase density needs a multiplier".into()))?;
        if m.grid != grid || m.kernel.kind != kind {
            return Err(Error::GridMismatch("phase multiplier built for another grid or kernel".into()));
        }
        let rho: Vec<f64> = gamma.iter().map(|g| g.norm_sqr()).collect();
        let scale = 2f64.powi(grid.d as i32);
        for (o, c) in out.iter_mut().zip(m.convolve(&rho)) {
            *o = scale * c;
        }
    }
    if spec.power() {
        let e = 1.0 / grid.d as f64;
        for (o, g) in out.iter_mut().zip(gamma) {
            *o -= 2.0 * g.norm_sqr().powf(e);
        }
    }
    Ok(out)
}

/// `e^{iσΦ}γ`.
pub fn renormalize(gamma: &[C64], phi: &[f64], sigma: f64) -> Vec<C64> {
    gamma.iter().zip(phi).map(|(g, p)| g * C64::from_polar(1.0, sigma * p)).collect()
}

/// Online trapezoid of `Φ` in `log t`, together with per-node phase unwrapping of `γ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseTracker {
    pub phi: Vec<f64>,
    /// Unwrapped `arg γ` per node.
    pub arg: Vec<f64>,
    /// Observations whose `arg γ` moved by more than π/2 at some significant node.
    pub jump_flags: usize,
    /// Largest step in `log t` between consecutive observations.
    pub max_log_step: f64,
    t_first: Option<f64>,
    last: Option<(f64, Vec<f64>, Vec<C64>)>,
    coarse: Vec<f64>,
    anchor: Option<(f64, Vec<f64>)>,
    samples: usize,
    quad_error: f64,
}

impl PhaseTracker {
    pub fn new(len: usize) -> Self {
        Self {
            phi: vec![0.0; len],
            arg: vec![0.0; len],
            jump_flags: 0,
            max_log_step: 0.0,
            t_first: None,
            last: None,
            coarse: vec![0.0; len],
            anchor: None,
            samples: 0,
            quad_error: 0.0,
        }
    }

    pub fn t_last(&self) -> Option<f64> {
        self.last.as_ref().map(|l| l.0)
    }

    /// Richardson estimate of the trapezoid error in `Φ`, per unit of `log t`.
    pub fn quadrature_error(&self) -> f64 {
        self.quad_error
    }

    pub fn observe(&mut self, t: f64, gamma: &[C64], density: Vec<f64>) -> Result<()> {
        if gamma.len() != self.phi.len() || density.len() != self.phi.len() {
            return Err(Error::GridMismatch("phase tracker length mismatch".into()));
        }
        match self.last.take() {
            None => {
                self.t_first = Some(t);
                for (a, g) in self.arg.iter_mut().zip(gamma) {
                    *a = g.arg();
                }
                self.anchor = Some((t, density.clone()));
            }
            Some((t0, n0, g0)) => {
                if !(t > t0) {
                    return Err(Error::InvalidArgument(format!("phase observations must advance: {t} after {t0}")));
                }
                let dl = (t / t0).ln();
                self.max_log_step = self.max_log_step.max(dl);
                for ((p, a), b) in self.phi.iter_mut().zip(&n0).zip(&density) {
                    *p += 0.25 * (a + b) * dl;
                }
                let floor = 1e-3 * gamma.iter().map(|g| g.norm()).fold(0.0, f64::max);
                let mut jumped = false;
                for ((a, new), old) in self.arg.iter_mut().zip(gamma).zip(&g0) {
                    let step = (new * old.conj()).arg();
                    *a += step;
                    if step.abs() > 0.5 * PI && new.norm() > floor {
                        jumped = true;
                    }
                }
                if jumped {
                    self.jump_flags += 1;
                }
                self.samples += 1;
                if self.samples.is_multiple_of(2) {
                    let (ta, na) = self.anchor.take().expect("anchor set on first observation");
                    let dl2 = (t / ta).ln();
                    for ((c, a), b) in self.coarse.iter_mut().zip(&na).zip(&density) {
                        *c += 0.25 * (a + b) * dl2;
                    }
                    let span = (t / self.t_first.expect("first time set")).ln();
                    let diff = self.phi.iter().zip(&self.coarse).map(|(f, c)| (f - c).abs()).fold(0.0, f64::max);
                    self.quad_error = diff / 3.0 / span;
                    self.anchor = Some((t, density.clone()));
                }
            }
        }
        self.last = Some((t, density, gamma.to_vec()));
        Ok(())
    }
}

/// One recorded analysis time.
#[derive(Clone, Debug)]
pub struct TraceCheckpoint {
    pub t: f64,
    /// Convolution-route `γ` on the full velocity grid.
    pub gamma: GammaField,
    pub phi: Vec<f64>,
    pub arg: Vec<f64>,
    pub g: Vec<C64>,
    pub norms: Option<NormReport>,
    pub bounds: Option<GammaBounds>,
    /// Relative gaps direct vs convolution and direct vs Fourier.
    pub cross_gaps: Option<(f64, f64)>,
    /// Lens representative `B(t)`, kept for the reconstruction check.
    pub field: Option<ComplexField>,
}

#[derive(Clone, Debug)]
pub struct ScatteringTrace {
    pub spec: NonlinearitySpec,
    pub sigma: f64,
    pub grid: GridSpec,
    pub checkpoints: Vec<TraceCheckpoint>,
    pub series: Vec<NormReport>,
    pub jump_flags: usize,
    pub quadrature_error: f64,
}

impl ScatteringTrace {
    pub fn new(spec: NonlinearitySpec, sigma: f64, grid: GridSpec) -> Self {
        Self { spec, sigma, grid, checkpoints: Vec::new(), series: Vec::new(), jump_flags: 0, quadrature_error: 0.0 }
    }

    /// Records a checkpoint from the tracker's current state.
    pub fn push(&mut self, tracker: &PhaseTracker, gamma: GammaField) -> Result<&mut TraceCheckpoint> {
        if gamma.grid != self.grid || gamma.nodes.is_some() {
            return Err(Error::GridMismatch("checkpoint γ must cover the trace grid".into()));
        }
        if let Some(last) = self.checkpoints.last() {
            if !(gamma.t > last.t) {
                return Err(Error::InvalidArgument("checkpoint times must increase".into()));
            }
        }
        let g = renormalize(&gamma.values, &tracker.phi, self.sigma);
        self.jump_flags = tracker.jump_flags;
        self.quadrature_error = tracker.quadrature_error();
        self.checkpoints.push(TraceCheckpoint {
            t: gamma.t,
            gamma,
            phi: tracker.phi.clone(),
            arg: tracker.arg.clone(),
            g,
            norms: None,
            bounds: None,
            cross_gaps: None,
            field: None,
        });
        Ok(self.checkpoints.last_mut().expect("just pushed"))
    }
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<Fit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("line fit needs at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("line fit with a single abscissa".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(Fit { slope, stderr, intercept, points: n })
}

fn loglog(points: impl Iterator<Item = (f64, f64)>, min_points: usize, what: &str) -> Result<Fit> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (a, b) in points {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InsufficientData(format!("{what}: non-positive value {b}")));
        }
        x.push(a.ln());
        y.push(b.ln());
    }
    if x.len() < min_points {
        return Err(Error::InsufficientData(format!("{what} needs {min_points} points, got {}", x.len())));
    }
    fit_line(&x, &y)
}

/// Slope of `log ‖u‖_∞` against `log t` over rows with `t ∈ [t_min, t_max]`.
pub fn decay_exponent_fit(series: &[NormReport], t_min: f64, t_max: f64) -> Result<Fit> {
    loglog(
        series.iter().filter(|r| r.t >= t_min && r.t <= t_max).map(|r| (r.t, r.linf)),
        5,
        "decay fit",
    )
}

/// Slope of `log ‖e^{-itΔ}u‖_{H^{0,β}}` against `log ⟨t⟩`.
pub fn energy_growth_fit(series: &[NormReport], t_min: f64, t_max: f64) -> Result<Fit> {
    loglog(
        series.iter().filter(|r| r.t >= t_min && r.t <= t_max).map(|r| ((1.0 + r.t * r.t).sqrt(), r.h0beta_pullback)),
        5,
        "growth fit",
    )
}

/// Modeled sizes of the three remainder terms in the `γ` equation.
pub fn remainder_terms(n: &NormReport, d: usize) -> [f64; 3] {
    let d = d as f64;
    let t = n.t;
    let common = n.linf.powf(1.0 + 1.0 / d) * n.l2.powf(2.0 * (d - 1.0) / d) * n.jbeta.powf(1.0 / d);
    let e = 1.0 / (20.0 * d);
    [
        t.powf(-1.5) * n.jbracket,
        t.powf(-d / 2.0 + 0.5 - e) * common,
        t.powf(d / 2.0 - 0.5 - e) * common,
    ]
}

/// `∫_1^t N_s[W] ds / 2s` for a fixed modulus `|W|`.
pub fn model_phase(grid: GridSpec, spec: &NonlinearitySpec, w: &[C64], t: f64) -> Result<Vec<f64>> {
    let screened = spec.convolution() == Some(KernelKind::BoppPodolsky);
    let span = t.ln();
    if !screened || span == 0.0 {
        let m = phase_multiplier(grid, spec, t)?;
        let n = phase_density(w, grid, spec, m.as_ref())?;
        return Ok(n.into_iter().map(|x| 0.5 * span * x).collect());
    }
    let steps = ((span.abs() / 0.05).ceil() as usize).max(2);
    let dl = span / steps as f64;
    let mut acc = vec![0.0; w.len()];
    for i in 0..=steps {
        let s = (i as f64 * dl).exp();
        let m = phase_multiplier(grid, spec, s)?;
        let n = phase_density(w, grid, spec, m.as_ref())?;
        let weight = if i == 0 || i == steps { 0.25 * dl } else { 0.5 * dl };
        for (a, x) in acc.iter_mut().zip(n) {
            *a += weight * x;
        }
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Analysis region `max_a |v_a| ≤ v_max`.
    pub v_max: f64,
    /// Phase fits use nodes with `|γ(T)| ≥ floor·max|γ(T)|`.
    pub floor: f64,
    /// Phase fits use checkpoints with `t ≥ t_min`, or the last four if fewer qualify.
    pub t_min: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { v_max: f64::INFINITY, floor: 0.1, t_min: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileEstimate {
    pub grid: GridSpec,
    pub spec: NonlinearitySpec,
    pub sigma: f64,
    pub t_final: f64,
    /// `G` at the final checkpoint.
    pub w: Vec<C64>,
    /// `e^{iσΦ_W(T)} γ(T)`, the profile paired with the model phase `Φ_W`.
    pub w_asymptotic: Vec<C64>,
    pub region: Vec<bool>,
    pub fit_mask: Vec<bool>,
    /// Fitted `d arg γ / d log t`, zero outside `fit_mask`.
    pub phase_slope: Vec<f64>,
    /// `-σ N[W]/2`.
    pub predicted_slope: Vec<f64>,
    pub residual_exponent: Option<Fit>,
    pub checkpoint_times: Vec<f64>,
    pub cauchy_gaps: Vec<f64>,
    pub gamma_gaps: Vec<f64>,
    pub jump_flags: usize,
}

impl ProfileEstimate {
    /// `max |fit - prediction| / max |prediction|` over the fit mask.
    pub fn slope_relative_error(&self) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for ((m, a), b) in self.fit_mask.iter().zip(&self.phase_slope).zip(&self.predicted_slope) {
            if *m {
                num = num.max((a - b).abs());
                den = den.max(b.abs());
            }
        }
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }

    /// `sup |W - other|` over the analysis region.
    pub fn sup_distance(&self, other: &[C64]) -> f64 {
        sup_over(&self.region, &self.w, other)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let v: Vec<Vec<f64>> = (0..self.grid.len()).map(|p| self.grid.point(p)[..self.grid.d].to_vec()).collect();
        serde_json::json!({
            "schema": "modscat-profile/1",
            "equation": self.spec.name(),
            "sigma": self.sigma,
            "t_final": self.t_final,
            "grid": {"d": self.grid.d, "n": self.grid.n, "L": self.grid.l},
            "v": v,
            "W_re": self.w.iter().map(|z| z.re).collect::<Vec<_>>(),
            "W_im": self.w.iter().map(|z| z.im).collect::<Vec<_>>(),
            "W_asymptotic_re": self.w_asymptotic.iter().map(|z| z.re).collect::<Vec<_>>(),
            "W_asymptotic_im": self.w_asymptotic.iter().map(|z| z.im).collect::<Vec<_>>(),
            "fit_mask": self.fit_mask,
            "phase_slope": self.phase_slope,
            "predicted_slope": self.predicted_slope,
            "slope_relative_error": self.slope_relative_error(),
            "residual_exponent": self.residual_exponent,
            "checkpoint_times": self.checkpoint_times,
            "cauchy_gaps": self.cauchy_gaps,
            "gamma_gaps": self.gamma_gaps,
            "phase_jump_flags": self.jump_flags,
        })
    }
}

/// Least squares for a three-column design through its Cholesky-factored normal matrix.
struct NormalEquations {
    l: [[f64; 3]; 3],
}

impl NormalEquations {
    fn new(design: &[[f64; 3]]) -> Result<Self> {
        let mut a = [[0.0; 3]; 3];
        for row in design {
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        let mut l = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if i == j {
                    if !(s > 1e-12 * a[i][i]) {
                        return Err(Error::InsufficientData("phase fit design is singular".into()));
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Ok(Self { l })
    }

    fn solve(&self, design: &[[f64; 3]], y: &[f64]) -> [f64; 3] {
        let mut b = [0.0; 3];
        for (row, yi) in design.iter().zip(y) {
            for i in 0..3 {
                b[i] += row[i] * yi;
            }
        }
        let l = &self.l;
        let mut z = [0.0; 3];
        for i in 0..3 {
            z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
        }
        let mut x = [0.0; 3];
        for i in (0..3).rev() {
            x[i] = (z[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
        }
        x
    }
}

fn sup_over(mask: &[bool], a: &[C64], b: &[C64]) -> f64 {
    mask.iter().zip(a).zip(b).filter(|((m, _), _)| **m).map(|((_, x), y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn profile_limit(trace: &ScatteringTrace, opts: ProfileOptions) -> Result<ProfileEstimate> {
    let cps = &trace.checkpoints;
    if cps.len() < 4 {
        return Err(Error::InsufficientData(format!("profile extraction needs 4 checkpoints, got {}", cps.len())));
    }
    let grid = trace.grid;
    let last = cps.last().expect("non-empty");
    let region: Vec<bool> = (0..grid.len())
        .map(|p| grid.point(p)[..grid.d].iter().all(|c| c.abs() <= opts.v_max))
        .collect();
    let peak = last.gamma.values.iter().zip(&region).filter(|(_, r)| **r).map(|(g, _)| g.norm()).fold(0.0, f64::max);
    let fit_mask: Vec<bool> = last
        .gamma
        .values
        .iter()
        .zip(&region)
        .map(|(g, r)| *r && peak > 0.0 && g.norm() >= opts.floor * peak)
        .collect();

    // arg γ = a + b log t + c/t: the 1/t term absorbs the linear approach to the profile.
    // Early checkpoints carry faster transients, so only the late window enters the fit.
    let first = cps.iter().position(|c| c.t >= opts.t_min).unwrap_or(0).min(cps.len() - 4);
    let window = &cps[first..];
    let design: Vec<[f64; 3]> = window.iter().map(|c| [1.0, c.t.ln(), 1.0 / c.t]).collect();
    let solver = NormalEquations::new(&design)?;
    let mut phase_slope = vec![0.0; grid.len()];
    let mut ys = vec![0.0; window.len()];
    for p in 0..grid.len() {
        if fit_mask[p] {
            for (y, c) in ys.iter_mut().zip(window) {
                *y = c.arg[p];
            }
            phase_slope[p] = solver.solve(&design, &ys)[1];
        }
    }
    let m = phase_multiplier(grid, &trace.spec, last.t)?;
    let n_w = phase_density(&last.g, grid, &trace.spec, m.as_ref())?;
    let predicted_slope = n_w.iter().map(|n| -0.5 * trace.sigma * n).collect();

    let w = last.g.clone();
    let phi_model = model_phase(grid, &trace.spec, &last.gamma.values, last.t)?;
    let w_asymptotic = renormalize(&last.gamma.values, &phi_model, trace.sigma);

    let cauchy_gaps = cps.windows(2).map(|c| sup_over(&region, &c[1].g, &c[0].g)).collect();
    let gamma_gaps = cps.windows(2).map(|c| sup_over(&region, &c[1].gamma.values, &c[0].gamma.values)).collect();
    let residual_exponent = loglog(
        cps[..cps.len() - 1].iter().map(|c| (c.t, sup_over(&region, &c.g, &w))),
        3,
        "residual fit",
    )
    .ok();
    Ok(ProfileEstimate {
        grid,
        spec: trace.spec,
        sigma: trace.sigma,
        t_final: last.t,
        w,
        w_asymptotic,
        region,
        fit_mask,
        phase_slope,
        predicted_slope,
        residual_exponent,
        checkpoint_times: cps.iter().map(|c| c.t).collect(),
        cauchy_gaps,
        gamma_gaps,
        jump_flags: trace.jump_flags,
    })
}

/// `t^{-d/2} e^{i|x|²/4t} W(x/2t) e^{-iσΦ_W(t, x/2t)}` on the image grid `2t·v`.
pub fn asymptotic_reconstruction(est: &ProfileEstimate, t: f64) -> Result<ComplexField> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("reconstruction needs t > 0, got {t}")));
    }
    let phi = model_phase(est.grid, &est.spec, &est.w_asymptotic, t)?;
    let grid = lens::image_grid(est.grid, t);
    let r2 = grid.radius_sq();
    let s = t.powf(-(grid.d as f64) / 2.0);
    let values = est
        .w_asymptotic
        .iter()
        .zip(&phi)
        .zip(&r2)
        .map(|((w, p), r2)| s * w * C64::from_polar(1.0, r2 / (4.0 * t) - est.sigma * p))
        .collect();
    ComplexField::new(grid, Space::Physical, t, values)
}

/// `t^{d/2} sup |u(t) - reconstruction|` over the analysis region, from the lens
/// representative of `u` on the estimate's velocity grid.
pub fn reconstruction_remainder(est: &ProfileEstimate, b: &ComplexField, frame: Frame) -> Result<f64> {
    if frame != Frame::Lens || b.grid != est.grid {
        return Err(Error::GridMismatch("reconstruction compares lens fields on the profile grid".into()));
    }
    let t = b.t;
    let phi = model_phase(est.grid, &est.spec, &est.w_asymptotic, t)?;
    let c = C64::new(0.0, 2.0).powf(-(b.grid.d as f64) / 2.0);
    let model: Vec<C64> =
        est.w_asymptotic.iter().zip(&phi).map(|(w, p)| w * C64::from_polar(1.0, -est.sigma * p)).collect();
    let scaled: Vec<C64> = b.values.iter().map(|v| c * v).collect();
    Ok(sup_over(&est.region, &scaled, &model))
}

/// Constructed modified-scattering input `γ(t) = e^{-(iσ/2) N₀ log t} W₀ + c·t^{-1/4}`.
pub fn synthetic_gamma(w0: &[C64], n0: &[f64], c: C64, sigma: f64, t: f64) -> Vec<C64> {
    let lt = t.ln();
    w0.iter()
        .zip(n0)
        .map(|(w, n)| w * C64::from_polar(1.0, -0.5 * sigma * n * lt) + c * t.powf(-0.25))
        .collect()
}

/// Runs the phase pipeline on [`synthetic_gamma`] from `t = 1` to `t_end`, with
/// observations at most `log_step` apart in `log t` and checkpoints at every power of two.
pub fn synthetic_trace(
    grid: GridSpec,
    spec: NonlinearitySpec,
    w0: &[C64],
    c: C64,
    sigma: f64,
    t_end: f64,
    log_step: f64,
) -> Result<ScatteringTrace> {
    let m = phase_multiplier(grid, &spec, 1.0)?;
    if spec.convolution() == Some(KernelKind::BoppPodolsky) {
        return Err(Error::InvalidArgument("synthetic traces use scale-free nonlinearities".into()));
    }
    let n0 = phase_density(w0, grid, &spec, m.as_ref())?;
    let mut trace = ScatteringTrace::new(spec, sigma, grid);
    let mut tracker = PhaseTracker::new(grid.len());
    let per_octave = (LN_2 / log_step).ceil().max(1.0) as usize;
    let mut times = vec![1.0];
    let mut start = 1.0f64;
    while start < t_end {
        let stop = (2.0 * start).min(t_end);
        let span = (stop / start).ln();
        let k = ((per_octave as f64 * span / LN_2).ceil() as usize).max(1);
        times.extend((1..k).map(|i| start * (span * i as f64 / k as f64).exp()));
        times.push(stop);
        start = stop;
    }
    for t in times {
        let gamma = synthetic_gamma(w0, &n0, c, sigma, t);
        let density = phase_density(&gamma, grid, &spec, m.as_ref())?;
        tracker.observe(t, &gamma, density)?;
        if t.log2().fract() == 0.0 || t == t_end {
            let g = GammaField { t, method: crate::wavepacket::GammaMethod::Convolution, grid, nodes: None, values: gamma };
            trace.push(&tracker, g)?;
        }
    }
    Ok(trace)
}
