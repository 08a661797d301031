//! Strang split-step integration of `i∂_t u + Δu = V(u) u`.
//!
//! Two frames share the same machinery. In the physical frame the state is
//! `u(t, x)` on the box. In the lens frame the state is `B(t, v)` defined by
//! `u(t, x) = (2it)^{-d/2} e^{i|x|²/4t} B(t, x/2t)`, which obeys
//! `i∂_t B + (4t²)^{-1} Δ_v B = V_lens B` on a fixed velocity box, with
//! `V_lens(v) = (2t)^{-1} [ (k_{2t} ∗ |B|²)(v) - |B|^{2/d}(v) ]` and
//! `k_s(r) = (1 - e^{-s r})/r` for the Bopp–Podolsky term. The free part is exact in
//! both frames; only the splitting error remains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, Space};
use crate::kernels::{KernelKind, KernelMultiplier, RadialKernel};
use crate::lens;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NonlinearitySpec {
    Linear,
    Hartree,
    BoppPodolsky,
    Power,
    Custom { convolution: Option<KernelKind>, power: bool },
}

impl NonlinearitySpec {
    pub fn convolution(&self) -> Option<KernelKind> {
        match *self {
            NonlinearitySpec::Hartree => Some(KernelKind::Coulomb),
            NonlinearitySpec::BoppPodolsky => Some(KernelKind::BoppPodolsky),
            NonlinearitySpec::Custom { convolution, .. } => convolution,
            _ => None,
        }
    }

    /// Whether the focusing term `-|u|^{2/d}` is present.
    pub fn power(&self) -> bool {
        match *self {
            NonlinearitySpec::BoppPodolsky | NonlinearitySpec::Power => true,
            NonlinearitySpec::Custom { power, .. } => power,
            _ => false,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.convolution().is_none() && !self.power()
    }

    pub fn name(&self) -> String {
        match *self {
            NonlinearitySpec::Linear => "linear".into(),
            NonlinearitySpec::Hartree => "hartree".into(),
            NonlinearitySpec::BoppPodolsky => "bopp_podolsky".into(),
            NonlinearitySpec::Power => "power".into(),
            NonlinearitySpec::Custom { convolution, power } => format!(
                "custom({}{})",
                convolution.map(|k| k.name()).unwrap_or("none"),
                if power { "+power" } else { "" }
            ),
        }
    }
}

/// `e^{iτΔ}u`: the multiplier `e^{-i|k|²τ}` on the transform side.
pub fn free_flow(u: &ComplexField, tau: f64) -> Result<ComplexField> {
    u.expect(Space::Physical)?;
    let mut out = u.clone();
    free_flow_in_place(&u.grid, &u.grid.wavenumber_sq(), &mut out.values, tau);
    Ok(out)
}

pub(crate) fn free_flow_in_place(grid: &GridSpec, k2: &[f64], values: &mut [C64], tau: f64) {
    if tau == 0.0 {
        return;
    }
    grid.forward_in_place(values);
    for (v, &k) in values.iter_mut().zip(k2) {
        *v *= C64::from_polar(1.0, -k * tau);
    }
    grid.inverse_in_place(values);
}

/// Free evolution of a lens-frame field from `t1` to `t2`.
pub fn free_flow_lens(b: &ComplexField, t1: f64, t2: f64) -> Result<ComplexField> {
    b.expect(Space::Physical)?;
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::InvalidArgument("lens times must be positive".into()));
    }
    let mut out = b.clone();
    free_flow_in_place(&b.grid, &b.grid.wavenumber_sq(), &mut out.values, lens::free_time(t1, t2));
    out.t = t2;
    Ok(out)
}

/// `V(u) = prefactor·(m ∗ |u|² - |u|^{2/d})` with the terms selected by `spec`.
pub(crate) fn potential(
    values: &[C64],
    d: usize,
    spec: &NonlinearitySpec,
    m: Option<&KernelMultiplier>,
    prefactor: f64,
) -> Result<Vec<f64>> {
    let mut v = vec![0.0; values.len()];
    if let Some(kind) = spec.convolution() {
        let m = m.ok_or_else(|| Error::InvalidArgument(format!("{} needs a {} multiplier", spec.name(), kind.name())))?;
        if m.kernel.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "{} needs a {} multiplier, got {}",
                spec.name(),
                kind.name(),
                m.kernel.kind.name()
            )));
        }
        let rho: Vec<f64> = values.iter().map(|u| u.norm_sqr()).collect();
        v = m.convolve(&rho);
    }
    if spec.power() {
        let e = 1.0 / d as f64;
        for (vi, u) in v.iter_mut().zip(values) {
            *vi -= u.norm_sqr().powf(e);
        }
    }
    if prefactor != 1.0 {
        v.iter_mut().for_each(|x| *x *= prefactor);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite potential".into()));
    }
    Ok(v)
}

/// `u ← e^{-iτV(u)}u` pointwise.
pub fn potential_step(
    u: &ComplexField,
    spec: &NonlinearitySpec,
    m: Option<&KernelMultiplier>,
    tau: f64,
) -> Result<ComplexField> {
    u.expect(Space::Physical)?;
    if spec.is_linear() {
        return Ok(u.clone());
    }
    if let Some(m) = m {
        if m.grid != u.grid {
            return Err(Error::GridMismatch("multiplier built for another grid".into()));
        }
    }
    let v = potential(&u.values, u.grid.d, spec, m, 1.0)?;
    let mut out = u.clone();
    for (x, vi) in out.values.iter_mut().zip(&v) {
        *x *= C64::from_polar(1.0, -tau * vi);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Physical,
    Lens,
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    /// `u` in the physical frame, `B` in the lens frame.
    pub field: ComplexField,
    pub t: f64,
    pub frame: Frame,
    pub spec: NonlinearitySpec,
    pub step_count: u64,
    pub boundary_mass: f64,
}

impl EvolutionState {
    pub fn new(u: ComplexField, spec: NonlinearitySpec) -> Self {
        let t = u.t;
        let boundary_mass = boundary_mass(&u);
        Self { field: u, t, frame: Frame::Physical, spec, step_count: 0, boundary_mass }
    }

    pub fn mass(&self) -> f64 {
        self.field.l2()
    }

    /// `u(t)` sampled on the physical nodes (the image grid `2t·v` in the lens frame).
    pub fn physical(&self) -> ComplexField {
        match self.frame {
            Frame::Physical => self.field.clone(),
            Frame::Lens => lens::from_lens(&self.field, self.t),
        }
    }
}

/// Relative mass in the outer shell `max_a |x_a| > 3L/4`.
pub fn boundary_mass(f: &ComplexField) -> f64 {
    let g = f.grid;
    let cut = 0.75 * g.l;
    let x = g.x_axis();
    let (mut outer, mut total) = (0.0, 0.0);
    for (p, v) in f.values.iter().enumerate() {
        let idx = g.unravel(p);
        let m = v.norm_sqr();
        total += m;
        if idx[..g.d].iter().any(|&i| x[i].abs() > cut) {
            outer += m;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Owns the multipliers and wavenumber tables for one evolution.
pub struct Stepper {
    pub spec: NonlinearitySpec,
    /// Truncation radius as a multiple of the current grid's half-length.
    pub radius_factor: f64,
    grid: Option<GridSpec>,
    k2: Vec<f64>,
    multiplier: Option<KernelMultiplier>,
}

impl Stepper {
    pub fn new(spec: NonlinearitySpec) -> Self {
        Self { spec, radius_factor: 2.0, grid: None, k2: Vec::new(), multiplier: None }
    }

    fn prepare(&mut self, grid: GridSpec, screen: f64) -> Result<()> {
        if self.grid != Some(grid) {
            self.grid = Some(grid);
            self.k2 = grid.wavenumber_sq();
            self.multiplier = None;
        }
        if let Some(kind) = self.spec.convolution() {
            let kernel = RadialKernel { kind, screen: if kind == KernelKind::Coulomb { 1.0 } else { screen } };
            let stale = self.multiplier.as_ref().is_none_or(|m| m.kernel != kernel);
            if stale {
                self.multiplier = Some(KernelMultiplier::new(grid, kernel, self.radius_factor * grid.l)?);
            }
        }
        Ok(())
    }

    /// Multiplier currently in use, if any.
    pub fn multiplier(&self) -> Option<&KernelMultiplier> {
        self.multiplier.as_ref()
    }

    /// One Strang step of length `dt` in the state's frame.
    pub fn step(&mut self, state: &mut EvolutionState, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
        }
        let grid = state.field.grid;
        let (t0, tm, t1) = (state.t, state.t + 0.5 * dt, state.t + dt);
        let (tau_a, tau_b, prefactor, screen) = match state.frame {
            Frame::Physical => (0.5 * dt, 0.5 * dt, 1.0, 1.0),
            Frame::Lens => (
                lens::free_time(t0, tm),
                lens::free_time(tm, t1),
                1.0 / (2.0 * tm),
                2.0 * tm,
            ),
        };
        self.prepare(grid, screen)?;
        let values = &mut state.field.values;
        free_flow_in_place(&grid, &self.k2, values, tau_a);
        if !state.spec.is_linear() {
            let v = potential(values, grid.d, &state.spec, self.multiplier.as_ref(), prefactor)
                .map_err(|_| Error::NonFinite { t: t0, step: state.step_count })?;
            for (x, vi) in values.iter_mut().zip(&v) {
                *x *= C64::from_polar(1.0, -dt * vi);
            }
        }
        free_flow_in_place(&grid, &self.k2, values, tau_b);
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite { t: t1, step: state.step_count + 1 });
        }
        state.t = t1;
        state.field.t = t1;
        state.step_count += 1;
        Ok(())
    }
}

/// One physical-frame Strang step with an explicitly supplied multiplier.
pub fn strang_step(
    state: &EvolutionState,
    m: Option<&KernelMultiplier>,
    dt: f64,
) -> Result<EvolutionState> {
    if state.frame != Frame::Physical {
        return Err(Error::InvalidArgument("strang_step acts on physical-frame states".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let half = free_flow(&state.field, 0.5 * dt)?;
    let kicked = potential_step(&half, &state.spec, m, dt)
        .map_err(|_| Error::NonFinite { t: state.t, step: state.step_count })?;
    let mut u = free_flow(&kicked, 0.5 * dt)?;
    if u.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite { t: state.t + dt, step: state.step_count + 1 });
    }
    u.t = state.t + dt;
    let mut next = state.clone();
    next.boundary_mass = boundary_mass(&u);
    next.field = u;
    next.t += dt;
    next.step_count += 1;
    Ok(next)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepControl {
    /// Physical-frame time step.
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub checkpoint_times: Vec<f64>,
    /// Switch to the lens frame at this time (`None`: stay physical).
    pub t_switch: Option<f64>,
    /// Lens-frame step as a fraction of the current time.
    pub lens_ratio: f64,
    /// Observations (every step) start here.
    pub observe_from: f64,
    pub boundary_limit: f64,
}

impl StepControl {
    pub fn dyadic(t_end: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = 1.0;
        while t <= t_end * (1.0 + 1e-12) {
            out.push(t);
            t *= 2.0;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.lens_ratio > 0.0) {
            return Err(Error::InvalidArgument("time steps must be positive".into()));
        }
        if self.t_end < self.t_start {
            return Err(Error::InvalidArgument("t_end before t_start".into()));
        }
        if self.checkpoint_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("checkpoint times must increase".into()));
        }
        if self.checkpoint_times.iter().any(|&c| c < self.t_start || c > self.t_end) {
            return Err(Error::InvalidArgument("checkpoint outside [t_start, t_end]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Observation,
    Checkpoint,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// Advances `state` to `control.t_end`, calling `sink` after every step at
/// `t ≥ observe_from` and at every checkpoint time (including `t_start` when it is one).
pub fn evolve(
    state: &mut EvolutionState,
    stepper: &mut Stepper,
    control: &StepControl,
    mut sink: impl FnMut(&EvolutionState, Event, &Stepper) -> Result<()>,
) -> Result<()> {
    control.validate()?;
    let mut next_cp = control.checkpoint_times.iter().position(|&c| c >= state.t - 1e-12).unwrap_or(usize::MAX);
    let emit = |state: &EvolutionState, next_cp: &mut usize, stepper: &Stepper, sink: &mut dyn FnMut(&EvolutionState, Event, &Stepper) -> Result<()>| -> Result<()> {
        if *next_cp < control.checkpoint_times.len() && close(state.t, control.checkpoint_times[*next_cp]) {
            *next_cp += 1;
            sink(state, Event::Checkpoint, stepper)
        } else if state.t >= control.observe_from - 1e-12 {
            sink(state, Event::Observation, stepper)
        } else {
            Ok(())
        }
    };
    emit(state, &mut next_cp, stepper, &mut sink)?;
    while state.t < control.t_end - 1e-12 * control.t_end.max(1.0) {
        if let Some(ts) = control.t_switch {
            if state.frame == Frame::Physical && state.t >= ts - 1e-12 {
                state.field = lens::to_lens(&state.field, state.t);
                state.frame = Frame::Lens;
            }
        }
        let mut dt = match state.frame {
            Frame::Physical => control.dt,
            Frame::Lens => control.lens_ratio * state.t,
        };
        let mut targets = vec![control.t_end, control.observe_from];
        if let Some(ts) = control.t_switch {
            targets.push(ts);
        }
        if next_cp < control.checkpoint_times.len() {
            targets.push(control.checkpoint_times[next_cp]);
        }
        for target in targets {
            if target > state.t + 1e-12 && state.t + dt > target - 1e-9 * dt {
                dt = target - state.t;
            }
        }
        stepper.step(state, dt)?;
        for target in [control.t_end, control.observe_from]
            .into_iter()
            .chain(control.t_switch)
            .chain(control.checkpoint_times.get(next_cp).copied())
        {
            if close(state.t, target) {
                state.t = target;
                state.field.t = target;
            }
        }
        state.boundary_mass = boundary_mass(&state.field);
        if state.boundary_mass > control.boundary_limit {
            return Err(Error::BoundaryMass { t: state.t, mass: state.boundary_mass, limit: control.boundary_limit });
        }
        emit(state, &mut next_cp, stepper, &mut sink)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn gaussian(g: GridSpec, amp: f64) -> ComplexField {
        ComplexField::from_fn(g, 0.0, |x| C64::new(amp * (-x.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0))
    }

    #[test]
    fn single_mode_is_eigenfunction() {
        let g = GridSpec::new(2, 16, PI).unwrap();
        let u = ComplexField::from_fn(g, 0.0, |x| C64::from_polar(1.0, 2.0 * x[0] - 3.0 * x[1]));
        let out = free_flow(&u, 0.3).unwrap();
        for (a, b) in out.values.iter().zip(&u.values) {
            assert!((a - b * C64::from_polar(1.0, -13.0 * 0.3)).norm() < 1e-12);
        }
    }

    #[test]
    fn group_property() {
        let g = GridSpec::new(2, 64, 8.0).unwrap();
        let u = gaussian(g, 1.0);
        let back = free_flow(&free_flow(&u, 0.7).unwrap(), -0.7).unwrap();
        for (a, b) in back.values.iter().zip(&u.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn power_potential_rotates_phase() {
        let g = GridSpec::new(2, 8, 2.0).unwrap();
        let mut u = ComplexField::zeros(g, Space::Physical, 0.0);
        u.values[3] = C64::new(0.25, 0.0);
        let out = potential_step(&u, &NonlinearitySpec::Power, None, 0.4).unwrap();
        assert!((out.values[3] - 0.25 * C64::from_polar(1.0, 0.4 * 0.25)).norm() < 1e-15);
        assert_eq!(potential_step(&u, &NonlinearitySpec::Linear, None, 0.4).unwrap(), u);
    }

    #[test]
    fn hartree_kick_preserves_modulus() {
        let g = GridSpec::new(2, 32, 6.0).unwrap();
        let m = KernelMultiplier::coulomb(g, 12.0).unwrap();
        let u = gaussian(g, 0.8);
        let out = potential_step(&u, &NonlinearitySpec::Hartree, Some(&m), 0.1).unwrap();
        for (a, b) in out.values.iter().zip(&u.values) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
        assert!(potential_step(&u, &NonlinearitySpec::Hartree, None, 0.1).is_err());
        let bp = KernelMultiplier::bopp_podolsky(g, 12.0).unwrap();
        assert!(potential_step(&u, &NonlinearitySpec::Hartree, Some(&bp), 0.1).is_err());
    }

    #[test]
    fn linear_step_equals_free_flow() {
        let g = GridSpec::new(2, 32, 6.0).unwrap();
        let s = EvolutionState::new(gaussian(g, 1.0), NonlinearitySpec::Linear);
        let next = strang_step(&s, None, 0.05).unwrap();
        let direct = free_flow(&s.field, 0.05).unwrap();
        for (a, b) in next.field.values.iter().zip(&direct.values) {
            assert!((a - b).norm() < 1e-14);
        }
        assert_relative_eq!(next.t, 0.05);
    }

    #[test]
    fn zero_length_run_emits_one_checkpoint() {
        let g = GridSpec::new(2, 16, 6.0).unwrap();
        let mut s = EvolutionState::new(gaussian(g, 1.0), NonlinearitySpec::Linear);
        s.t = 1.0;
        s.field.t = 1.0;
        let control = StepControl {
            dt: 0.01,
            t_start: 1.0,
            t_end: 1.0,
            checkpoint_times: vec![1.0],
            t_switch: None,
            lens_ratio: 0.02,
            observe_from: 1.0,
            boundary_limit: 1e-6,
        };
        let mut events = Vec::new();
        evolve(&mut s, &mut Stepper::new(NonlinearitySpec::Linear), &control, |st, e, _| {
            events.push((st.t, e));
            Ok(())
        })
        .unwrap();
        assert_eq!(events, vec![(1.0, Event::Checkpoint)]);
        assert_eq!(s.step_count, 0);
    }
}
