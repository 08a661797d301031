//! Self-checks against independent evaluations: brute-force lattice sums, closed
//! forms, and cross-route agreement. Failures are table entries, never errors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galilean::{fractional_j_norm, modulation};
use crate::grid::{ComplexField, GridSpec};
use crate::kernels::{
    direct_convolution_oracle, radial_quadrature, truncated_transform, untruncated_transform, KernelKind,
    KernelMultiplier, RadialKernel,
};
use crate::lens;
use crate::propagator::{free_flow, EvolutionState, Frame, NonlinearitySpec, Stepper};
use crate::wavepacket::{
    gamma_convolution, gamma_direct, gamma_fourier, gamma_relative_gap, sample_nodes, WavepacketProfile,
};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Kernels,
    Gamma,
    Propagator,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Suite::All),
            "kernels" => Some(Suite::Kernels),
            "gamma" => Some(Suite::Gamma),
            "propagator" => Some(Suite::Propagator),
            _ => None,
        }
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Grid size of the kernel checks; the γ and propagator checks use `8n`.
    pub n: usize,
    /// Constant added to every kernel multiplier node (fault injection).
    pub multiplier_perturbation: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n: 16, multiplier_perturbation: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub suite: String,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub entries: Vec<OracleEntry>,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn find(&self, name: &str) -> Option<&OracleEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn push(&mut self, suite: &str, name: impl Into<String>, measured: Result<f64>, tolerance: f64) {
        let (measured, note) = match measured {
            Ok(v) => (v, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        self.entries.push(OracleEntry {
            suite: suite.into(),
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
            note,
        });
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<11} {:<34} {:>12} {:>12}  result\n", "suite", "check", "measured", "tolerance");
        for e in &self.entries {
            s += &format!(
                "{:<11} {:<34} {:>12.3e} {:>12.1e}  {}{}\n",
                e.suite,
                e.name,
                e.measured,
                e.tolerance,
                if e.pass { "PASS" } else { "FAIL" },
                e.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
            );
        }
        s
    }
}

pub fn oracle_suite(suite: Suite, cfg: &OracleConfig) -> OracleReport {
    let mut r = OracleReport::default();
    if suite.includes(Suite::Kernels) {
        kernel_checks(&mut r, cfg);
    }
    if suite.includes(Suite::Gamma) {
        gamma_checks(&mut r, cfg);
    }
    if suite.includes(Suite::Propagator) {
        propagator_checks(&mut r, cfg);
    }
    r
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `max |spectral - direct| / ‖ρ‖₁` for one kernel.
pub fn convolution_gap(grid: GridSpec, kernel: RadialKernel, perturbation: f64) -> Result<f64> {
    let radius = 2.0 * grid.l;
    let rho = ComplexField::from_fn(grid, 0.0, |x| {
        let r2: f64 = x[..grid.d].iter().map(|a| a * a).sum();
        C64::new((-r2).exp() * (1.0 + 0.3 * x[0]).abs(), 0.0)
    });
    let mut m = KernelMultiplier::new(grid, kernel, radius)?;
    if perturbation != 0.0 {
        m = m.perturbed(perturbation);
    }
    let dens: Vec<f64> = rho.values.iter().map(|v| v.re).collect();
    let spectral = m.convolve(&dens);
    let direct = direct_convolution_oracle(kernel, radius, &rho)?;
    let l1: f64 = dens.iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume();
    let gap = spectral.iter().zip(&direct.values).map(|(a, b)| (a - b.re).abs()).fold(0.0, f64::max);
    Ok(gap / l1)
}

/// `max (m_BP - m_Coulomb) / max |m_Coulomb|` over the padded frequency nodes.
pub fn ordering_excess(grid: GridSpec, screen: f64) -> Result<f64> {
    let radius = 2.0 * grid.l;
    let c = KernelMultiplier::new(grid, RadialKernel::coulomb(), radius)?.values();
    let b = KernelMultiplier::new(grid, RadialKernel { kind: KernelKind::BoppPodolsky, screen }, radius)?.values();
    let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(b.iter().zip(&c).map(|(b, c)| b - c).fold(f64::NEG_INFINITY, f64::max) / scale)
}

fn kernel_checks(r: &mut OracleReport, cfg: &OracleConfig) {
    for d in [2usize, 3] {
        let grid = GridSpec::new(d, cfg.n, 3.0);
        for kernel in [RadialKernel::coulomb(), RadialKernel::bopp_podolsky()] {
            let gap = grid.as_ref().map_err(clone_err).and_then(|&g| convolution_gap(g, kernel, cfg.multiplier_perturbation));
            r.push("kernels", format!("convolution/{}/d{d}", kernel.kind.name()), gap, 1e-9);
        }
        let excess = grid.as_ref().map_err(clone_err).and_then(|&g| {
            [1.0, 2.0, 16.0].iter().try_fold(f64::NEG_INFINITY, |acc, &s| Ok(acc.max(ordering_excess(g, s)?)))
        });
        r.push("kernels", format!("ordering/d{d}"), excess, 0.0);
    }
    for kernel in [RadialKernel::coulomb(), RadialKernel::bopp_podolsky()] {
        let worst = [0.25, 1.0, 2.5, 7.3]
            .iter()
            .map(|&k| rel(radial_quadrature(kernel, 3, k, 6.0), truncated_transform(kernel, 3, k, 6.0)))
            .fold(0.0, f64::max);
        r.push("kernels", format!("closed_form/{}/d3", kernel.kind.name()), Ok(worst), 1e-6);
    }
    // cos(kR) = 0 removes the oscillating tail of the truncated Coulomb part.
    let radius = 20.5 * PI;
    let q = radial_quadrature(RadialKernel::bopp_podolsky(), 3, 1.0, radius);
    let exact = untruncated_transform(KernelKind::BoppPodolsky, 3, 1.0);
    r.push("kernels", "untruncated/bopp_podolsky/d3/k=1", Ok(rel(q, exact).max(rel(exact, 2.0 * PI))), 1e-6);
}

fn oracle_grid(cfg: &OracleConfig, l: f64) -> Result<GridSpec> {
    GridSpec::new(2, 8 * cfg.n, l)
}

fn coarse(cfg: &OracleConfig, fine: f64, rough: f64) -> f64 {
    if cfg.n >= 16 {
        fine
    } else {
        rough
    }
}

fn gamma_checks(r: &mut OracleReport, cfg: &OracleConfig) {
    let p = WavepacketProfile::gaussian(2);
    let closed = oracle_grid(cfg, 16.0).and_then(|g| {
        let t = 2.0;
        let base = ComplexField::from_fn(g, t, |x| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let u = modulation(&base, t, 1.0)?;
        let vg = lens::velocity_grid(g, t);
        let nodes = sample_nodes(&vg, 1.0, 5);
        let direct = gamma_direct(&u, Frame::Physical, &p, vg, &nodes)?;
        Ok(nodes.iter().zip(&direct.values).fold(0.0f64, |acc, (&node, val)| {
            let v = vg.point(node);
            let v2 = v[0] * v[0] + v[1] * v[1];
            let exact = t / (t + 1.0) * (-4.0 * t * t * v2 / (1.0 + t)).exp();
            acc.max((val - exact).norm())
        }))
    });
    r.push("gamma", "gaussian_closed_form", closed, coarse(cfg, 1e-12, 1e-3));

    let packet = oracle_grid(cfg, 16.0).and_then(|g| {
        let u0 = ComplexField::from_fn(g, 0.0, |x| {
            let r2 = (x[0] - 0.4).powi(2) + (x[1] + 0.2).powi(2);
            C64::new(1.0, 0.3 * x[0]) * (-r2).exp()
        });
        let mut u = free_flow(&u0, 1.0)?;
        u.t = 1.0;
        Ok(u)
    });
    let conv_gap = packet.as_ref().map_err(clone_err).and_then(|u| {
        let conv = gamma_convolution(u, Frame::Physical, &p)?;
        let direct = gamma_direct(u, Frame::Physical, &p, conv.grid, &sample_nodes(&conv.grid, 1.5, 7))?;
        gamma_relative_gap(&direct, &conv)
    });
    r.push("gamma", "cross_method/convolution", conv_gap, coarse(cfg, 1e-10, 1e-3));
    let four_gap = packet.as_ref().map_err(clone_err).and_then(|u| {
        let four = gamma_fourier(u, Frame::Physical, &p)?;
        let direct = gamma_direct(u, Frame::Physical, &p, four.grid, &sample_nodes(&four.grid, 1.5, 7))?;
        gamma_relative_gap(&direct, &four)
    });
    r.push("gamma", "cross_method/fourier", four_gap, coarse(cfg, 1e-8, 1e-3));
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidArgument(e.to_string())
}

/// `u(t)` for `u₀ = e^{-|x|²/2s₀}` on the periodic box: the free-space solution
/// `(1 + 2it/s₀)^{-d/2} e^{-|x|²/2(s₀ + 2it)}` summed over periodic images.
pub fn periodized_free_gaussian(g: GridSpec, s0: f64, t: f64) -> ComplexField {
    let s = C64::new(s0, 2.0 * t);
    let amp = (s / s0).powf(-(g.d as f64) / 2.0);
    let images: Vec<f64> = (-2..=2).map(|m| 2.0 * g.l * m as f64).collect();
    ComplexField::from_fn(g, t, |x| {
        let mut acc = C64::new(0.0, 0.0);
        let mut idx = [0usize; 3];
        loop {
            let r2: f64 = (0..g.d).map(|a| (x[a] + images[idx[a]]).powi(2)).sum();
            acc += amp * (-r2 / (2.0 * s)).exp();
            let mut a = 0;
            while a < g.d {
                idx[a] += 1;
                if idx[a] < images.len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == g.d {
                break;
            }
        }
        acc
    })
}

fn propagator_checks(r: &mut OracleReport, cfg: &OracleConfig) {
    let free = oracle_grid(cfg, 12.0).and_then(|g| {
        let s0 = 2.0;
        let u0 = periodized_free_gaussian(g, s0, 0.0);
        let mut worst = 0.0f64;
        for t in [0.5, 2.0, 4.0] {
            let exact = periodized_free_gaussian(g, s0, t);
            let num = free_flow(&u0, t)?;
            let diff: f64 = num.values.iter().zip(&exact.values).map(|(a, b)| (a - b).norm_sqr()).sum();
            worst = worst.max((diff * g.cell_volume()).sqrt() / exact.l2());
        }
        Ok(worst)
    });
    r.push("propagator", "free_gaussian_closed_form", free, coarse(cfg, 1e-12, 1e-4));

    let mass = GridSpec::new(2, 4 * cfg.n, 6.0).and_then(|g| {
        let u0 = ComplexField::from_fn(g, 0.0, |x| C64::new(0.5 * (-(x[0] * x[0] + x[1] * x[1])).exp(), 0.2 * x[1]));
        let m0 = u0.l2();
        let mut st = EvolutionState::new(u0, NonlinearitySpec::BoppPodolsky);
        let mut stepper = Stepper::new(NonlinearitySpec::BoppPodolsky);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            stepper.step(&mut st, 0.005)?;
            worst = worst.max((st.mass() - m0).abs() / m0);
        }
        Ok(worst)
    });
    r.push("propagator", "mass_conservation/200_steps", mass, 2e-12);

    let routes = oracle_grid(cfg, 16.0).and_then(|g| {
        let u0 = ComplexField::from_fn(g, 0.0, |x| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let t = 0.5;
        let mut u = free_flow(&u0, t)?;
        u.t = t;
        Ok(fractional_j_norm(&u, t, 1.1)?.relative_gap())
    });
    r.push("propagator", "j_beta_two_routes", routes, coarse(cfg, 1e-4, 1e-2));
}
