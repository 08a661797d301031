//! Wavepackets `Ψ_v(t, x) = ϑ((x - 2tv)/√t) e^{i|x|²/4t}` and the testing functional
//! `γ(t, v) = ∫ u(t, x) conj(Ψ_v(t, x)) dx`, evaluated three ways.
//!
//! With `w = M(-t)u` and `f = e^{-itΔ}u`:
//! - direct: quadrature of `u·conj(Ψ_v)`;
//! - convolution: `γ(t, v) = t^{d/2} (w(2t·) ∗ κ_t)(v)`, `κ_t(z) = (2√t)^d ϑ(2√t z)`;
//! - Fourier: `γ(t, v) = (f̂ ∗ K_t)(v)`, `K_t(ξ) = t^{d/2} conj(ϑ̃(√t ξ))`.
//!
//! In the lens frame `w(2ty) = (2it)^{-d/2} B(y)`, so the convolution form reads
//! `γ = (2i)^{-d/2} B ∗ κ_t` on the velocity box.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galilean::{fractional_gradient_norm, modulation};
use crate::grid::{ComplexField, GridSpec, Space};
use crate::lens;
use crate::propagator::Frame;
use crate::C64;

/// The Gaussian profile `ϑ(x) = π^{-d/2} e^{-|x|²}`.
///
/// Its twisted transform `ϑ̃(ξ) = e^{i|ξ|²} F[e^{i|x|²/4}ϑ](ξ)` is `c_d e^{-α|ξ|²}`
/// with `α = (4 - 16i)/17` and `c_d = (2π)^{-d/2}(1 - i/4)^{-d/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WavepacketProfile {
    pub d: usize,
}

impl WavepacketProfile {
    pub fn gaussian(d: usize) -> Self {
        Self { d }
    }

    fn dim(&self) -> f64 {
        self.d as f64
    }

    pub fn theta(&self, y2: f64) -> f64 {
        PI.powf(-self.dim() / 2.0) * (-y2).exp()
    }

    /// One-dimensional factor `π^{-1/2} e^{-s²}`.
    fn theta_1d(s: f64) -> f64 {
        (-s * s).exp() / PI.sqrt()
    }

    /// `F[ϑ](k) = (2π)^{-d/2} e^{-|k|²/4}`.
    pub fn theta_hat(&self, k2: f64) -> f64 {
        (2.0 * PI).powf(-self.dim() / 2.0) * (-k2 / 4.0).exp()
    }

    pub fn alpha() -> C64 {
        C64::new(4.0, -16.0) / 17.0
    }

    pub fn tilde_prefactor(&self) -> C64 {
        (2.0 * PI).powf(-self.dim() / 2.0) * C64::new(1.0, -0.25).powf(-self.dim() / 2.0)
    }

    pub fn theta_tilde(&self, xi2: f64) -> C64 {
        self.tilde_prefactor() * (-Self::alpha() * xi2).exp()
    }

    /// `∫ ϑ̃ = c_d (π/α)^{d/2}`, which evaluates to `(-2i)^{-d/2}`.
    pub fn tilde_integral(&self) -> C64 {
        self.tilde_prefactor() * (C64::new(PI, 0.0) / Self::alpha()).powf(self.dim() / 2.0)
    }

    /// `F[ϑ̃](y) = c_d (2α)^{-d/2} e^{-|y|²/4α}`.
    fn tilde_transform(&self, y2: f64) -> C64 {
        let a = Self::alpha();
        self.tilde_prefactor() * (2.0 * a).powf(-self.dim() / 2.0) * (-y2 / (4.0 * a)).exp()
    }

    /// Grid quadrature of `ϑ`.
    pub fn integral_on(&self, grid: &GridSpec) -> f64 {
        grid.radius_sq().iter().map(|&r2| self.theta(r2)).sum::<f64>() * grid.cell_volume()
    }
}

fn check_time(t: f64, min: f64) -> Result<()> {
    if !(t >= min) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} below {min}")));
    }
    Ok(())
}

/// Samples `Ψ_v(t, ·)` on `grid`; the centre `2tv` must lie in the inner half of the box.
pub fn wavepacket_field(profile: &WavepacketProfile, v: &[f64], t: f64, grid: GridSpec) -> Result<ComplexField> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("wavepacket needs t > 0, got {t}")));
    }
    if v.len() != grid.d {
        return Err(Error::InvalidArgument("velocity dimension differs from grid".into()));
    }
    if v.iter().any(|&va| (2.0 * t * va).abs() > 0.5 * grid.l) {
        return Err(Error::InvalidArgument(format!("centre 2tv = {:?} outside |x| <= L/2", v.iter().map(|a| 2.0 * t * a).collect::<Vec<_>>())));
    }
    let st = t.sqrt();
    Ok(ComplexField::from_fn(grid, t, |x| {
        let y2: f64 = x.iter().zip(v).map(|(xa, va)| ((xa - 2.0 * t * va) / st).powi(2)).sum();
        let r2: f64 = x.iter().map(|a| a * a).sum();
        profile.theta(y2) * C64::from_polar(1.0, r2 / (4.0 * t))
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMethod {
    Direct,
    Convolution,
    Fourier,
}

impl GammaMethod {
    pub fn name(self) -> &'static str {
        match self {
            GammaMethod::Direct => "direct",
            GammaMethod::Convolution => "convolution",
            GammaMethod::Fourier => "fourier",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" => Some(GammaMethod::Direct),
            "convolution" => Some(GammaMethod::Convolution),
            "fourier" => Some(GammaMethod::Fourier),
            _ => None,
        }
    }
}

/// `γ(t, ·)` on the nodes of a velocity grid, either all of them or a listed subset.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaField {
    pub t: f64,
    pub method: GammaMethod,
    pub grid: GridSpec,
    pub nodes: Option<Vec<usize>>,
    pub values: Vec<C64>,
}

impl GammaField {
    pub fn node_list(&self) -> Vec<usize> {
        match &self.nodes {
            Some(n) => n.clone(),
            None => (0..self.grid.len()).collect(),
        }
    }

    pub fn get(&self, node: usize) -> Option<C64> {
        match &self.nodes {
            None => self.values.get(node).copied(),
            Some(list) => list.iter().position(|&p| p == node).map(|i| self.values[i]),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Full-grid γ as a field on the velocity box.
    pub fn as_field(&self) -> Result<ComplexField> {
        if self.nodes.is_some() {
            return Err(Error::InvalidArgument("γ sampled on a subset of nodes".into()));
        }
        ComplexField::new(self.grid, Space::Physical, self.t, self.values.clone())
    }

    pub fn l2(&self) -> Result<f64> {
        Ok(self.as_field()?.l2())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let g = self.grid;
        let mut out = Vec::new();
        writeln!(
            out,
            "format=modscat-gamma version=1 method={} t={:e} d={} n={} L={:e} count={} nodes={} record=index:u64,v:f64x{},re:f64,im:f64 endianness=little",
            self.method.name(),
            self.t,
            g.d,
            g.n,
            g.l,
            self.values.len(),
            if self.nodes.is_some() { "listed" } else { "all" },
            g.d
        )?;
        for (node, v) in self.node_list().into_iter().zip(&self.values) {
            out.extend_from_slice(&(node as u64).to_le_bytes());
            for c in &g.point(node)[..g.d] {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Corrupt(format!("gamma header lacks `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?.parse::<f64>().map_err(|_| Error::Corrupt(format!("bad `{key}` in gamma header")))
        };
        if field("format")? != "modscat-gamma" || field("version")? != "1" {
            return Err(Error::Corrupt("not a version 1 gamma file".into()));
        }
        if field("endianness")? != "little" {
            return Err(Error::Corrupt("unsupported endianness".into()));
        }
        let method = GammaMethod::parse(&field("method")?).ok_or_else(|| Error::Corrupt("unknown gamma method".into()))?;
        let grid = GridSpec::new(num("d")? as usize, num("n")? as usize, num("L")?)
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        let count = num("count")? as usize;
        let listed = field("nodes")? == "listed";
        let mut body = Vec::new();
        reader.read_to_end(&mut body)?;
        let rec = 8 * (3 + grid.d);
        if body.len() != count * rec {
            return Err(Error::Corrupt(format!("gamma body holds {} bytes, expected {}", body.len(), count * rec)));
        }
        let word = |i: usize| <[u8; 8]>::try_from(&body[8 * i..8 * i + 8]).expect("slice of 8");
        let mut nodes = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        for r in 0..count {
            let base = r * (3 + grid.d);
            let node = u64::from_le_bytes(word(base)) as usize;
            if node >= grid.len() {
                return Err(Error::Corrupt(format!("node index {node} out of range")));
            }
            nodes.push(node);
            let re = f64::from_le_bytes(word(base + 1 + grid.d));
            let im = f64::from_le_bytes(word(base + 2 + grid.d));
            values.push(C64::new(re, im));
        }
        if !listed && nodes.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(Error::Corrupt("full gamma file out of node order".into()));
        }
        Ok(Self { t: num("t")?, method, grid, nodes: listed.then_some(nodes), values })
    }
}

/// Contracts the trailing axis of a `(outer, n)` array with the `m × n` table,
/// returning a `(m, outer)` array.
fn contract_last(data: &[C64], n: usize, table: &[C64], m: usize) -> Vec<C64> {
    let outer = data.len() / n;
    let mut out = vec![C64::new(0.0, 0.0); m * outer];
    for o in 0..outer {
        let row = &data[o * n..(o + 1) * n];
        for i in 0..m {
            out[i * outer + o] = row.iter().zip(&table[i * n..(i + 1) * n]).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// `Σ_j data[j] Π_a tables[a][i_a, j_a]` for all `i`, with per-axis tables of shape `m × n`.
fn separable_sum(data: &[C64], n: usize, d: usize, tables: &[Vec<C64>], m: usize) -> Vec<C64> {
    let mut cur = data.to_vec();
    for a in (0..d).rev() {
        cur = contract_last(&cur, n, &tables[a], m);
    }
    cur
}

/// Index reflection `x → -x` on the centered node lattice.
fn reflect(grid: &GridSpec, values: &[C64]) -> Vec<C64> {
    let n = grid.n;
    (0..values.len())
        .map(|p| {
            let idx = grid.unravel(p);
            let mut r = [0usize; 3];
            for a in 0..grid.d {
                r[a] = (n - idx[a]) % n;
            }
            values[grid.ravel(&r[..grid.d])]
        })
        .collect()
}

fn lens_factor(d: usize) -> C64 {
    C64::new(0.0, 2.0).powf(-(d as f64) / 2.0)
}

/// Direct quadrature of `u·conj(Ψ_v)` at the given nodes of `vgrid`.
///
/// In the lens frame `γ(t, v) = (2i)^{-d/2} ∫ B(y) κ_t(y - v) dy`; `κ_t` is far narrower
/// than the velocity spacing at late times, so the integral runs over a local patch
/// on which `B` is evaluated through its trigonometric interpolant.
pub fn gamma_direct(
    field: &ComplexField,
    frame: Frame,
    profile: &WavepacketProfile,
    vgrid: GridSpec,
    nodes: &[usize],
) -> Result<GammaField> {
    field.expect(Space::Physical)?;
    let t = field.t;
    check_time(t, f64::MIN_POSITIVE)?;
    if vgrid.d != field.grid.d || profile.d != field.grid.d {
        return Err(Error::GridMismatch("velocity grid dimension differs from field".into()));
    }
    let g = field.grid;
    let (d, n) = (g.d, g.n);
    let values = match frame {
        Frame::Physical => {
            let w = modulation(field, t, -1.0)?;
            let x = g.x_axis();
            let st = t.sqrt();
            nodes
                .iter()
                .map(|&p| {
                    let v = vgrid.point(p);
                    let tables: Vec<Vec<C64>> = (0..d)
                        .map(|a| {
                            x.iter()
                                .map(|&xa| C64::new(WavepacketProfile::theta_1d((xa - 2.0 * t * v[a]) / st), 0.0))
                                .collect()
                        })
                        .collect();
                    separable_sum(&w.values, n, d, &tables, 1)[0] * g.cell_volume()
                })
                .collect()
        }
        Frame::Lens => {
            let mut hat = field.values.clone();
            g.forward_in_place(&mut hat);
            let ks = g.k_axis();
            let scale = (2.0 * PI).powf(-(d as f64) / 2.0) * g.dk().powi(d as i32);
            let st = t.sqrt();
            let hp = 2.0 * PI / (PI / g.h() + 25.3 * st);
            let half = (3.05 / (st * hp)).ceil() as usize;
            let m = 2 * half + 1;
            let z: Vec<f64> = (0..m).map(|i| (i as f64 - half as f64) * hp).collect();
            let k1: Vec<f64> = z.iter().map(|&z| (4.0 * t / PI).sqrt() * (-4.0 * t * z * z).exp() * hp).collect();
            let c = lens_factor(d) * scale;
            nodes
                .iter()
                .map(|&p| {
                    let v = vgrid.point(p);
                    let tables: Vec<Vec<C64>> = (0..d)
                        .map(|a| {
                            z.iter()
                                .flat_map(|&zi| ks.iter().map(move |&k| C64::from_polar(1.0, k * (v[a] + zi))))
                                .collect()
                        })
                        .collect();
                    let patch = separable_sum(&hat, n, d, &tables, m);
                    let weights: Vec<C64> = k1.iter().map(|&w| C64::new(w, 0.0)).collect();
                    let w_tables = vec![weights; d];
                    c * separable_sum(&patch, m, d, &w_tables, 1)[0]
                })
                .collect()
        }
    };
    Ok(GammaField { t, method: GammaMethod::Direct, grid: vgrid, nodes: Some(nodes.to_vec()), values })
}

/// Velocity grid on which the convolution route reports `γ`.
pub fn convolution_grid(field: &ComplexField, frame: Frame) -> GridSpec {
    match frame {
        Frame::Physical => lens::velocity_grid(field.grid, field.t),
        Frame::Lens => field.grid,
    }
}

/// All-node `γ` from one transform pair.
pub fn gamma_convolution(field: &ComplexField, frame: Frame, profile: &WavepacketProfile) -> Result<GammaField> {
    field.expect(Space::Physical)?;
    let t = field.t;
    check_time(t, f64::MIN_POSITIVE)?;
    let g = field.grid;
    let d = g.d as f64;
    let k2 = g.wavenumber_sq();
    let (mut data, prefactor, width2) = match frame {
        Frame::Physical => (modulation(field, t, -1.0)?.values, C64::new(t.powf(d / 2.0), 0.0), t),
        Frame::Lens => (field.values.clone(), lens_factor(g.d), 1.0 / (4.0 * t)),
    };
    g.forward_in_place(&mut data);
    // (2π)^{d/2} times the transform of the unit-mass kernel with scale `width`.
    let norm = (2.0 * PI).powf(d / 2.0);
    for (v, &k2) in data.iter_mut().zip(&k2) {
        *v *= prefactor * norm * profile.theta_hat(width2 * k2);
    }
    g.inverse_in_place(&mut data);
    Ok(GammaField { t, method: GammaMethod::Convolution, grid: convolution_grid(field, frame), nodes: None, values: data })
}

/// `f̂ = e^{it|ξ|²} û(t, ξ)` on its natural lattice: the wavenumbers of the box in
/// the physical frame, the velocity nodes in the lens frame.
pub fn profile_transform(field: &ComplexField, frame: Frame) -> Result<(GridSpec, Vec<C64>)> {
    field.expect(Space::Physical)?;
    let t = field.t;
    let g = field.grid;
    match frame {
        Frame::Physical => {
            let mut hat = field.values.clone();
            g.forward_in_place(&mut hat);
            for (v, k2) in hat.iter_mut().zip(g.wavenumber_sq()) {
                *v *= C64::from_polar(1.0, t * k2);
            }
            Ok((frequency_grid(&g), hat))
        }
        Frame::Lens => {
            // f = M(-t) F^{-1}[B] on the dual lattice, then f̂ = F[f] back on the velocity nodes.
            let mut dual = field.values.clone();
            g.forward_in_place(&mut dual);
            let mut f = reflect(&g, &dual);
            for (v, k2) in f.iter_mut().zip(g.wavenumber_sq()) {
                *v *= C64::from_polar(1.0, -k2 / (4.0 * t));
            }
            g.inverse_in_place(&mut f);
            Ok((g, reflect(&g, &f)))
        }
    }
}

/// The wavenumber lattice of `g` viewed as a grid of its own.
pub fn frequency_grid(g: &GridSpec) -> GridSpec {
    GridSpec { d: g.d, n: g.n, l: g.n as f64 * g.dk() / 2.0 }
}

/// `γ` from the frequency-side representation, on the lattice of [`profile_transform`].
///
/// The convolution with `K_t` is carried out through the closed form of
/// `F^{-1}[K_t](x) = conj(F[ϑ̃](x/√t))`.
pub fn gamma_fourier(field: &ComplexField, frame: Frame, profile: &WavepacketProfile) -> Result<GammaField> {
    let t = field.t;
    check_time(t, f64::MIN_POSITIVE)?;
    let (out_grid, fhat) = profile_transform(field, frame)?;
    let d = field.grid.d;
    let norm = (2.0 * PI).powf(d as f64 / 2.0);
    let values = match frame {
        Frame::Physical => {
            let g = field.grid;
            let mut f = fhat;
            g.inverse_in_place(&mut f);
            for (v, r2) in f.iter_mut().zip(g.radius_sq()) {
                *v *= norm * profile.tilde_transform(r2 / t).conj();
            }
            g.forward_in_place(&mut f);
            f
        }
        Frame::Lens => {
            let g = field.grid;
            let mut f = fhat;
            g.forward_in_place(&mut f);
            let mut f = reflect(&g, &f);
            for (v, k2) in f.iter_mut().zip(g.wavenumber_sq()) {
                *v *= norm * profile.tilde_transform(k2 / t).conj();
            }
            g.inverse_in_place(&mut f);
            reflect(&g, &f)
        }
    };
    Ok(GammaField { t, method: GammaMethod::Fourier, grid: out_grid, nodes: None, values })
}

/// `max |a - b| / max |b|` over the nodes listed in `a`.
pub fn gamma_relative_gap(a: &GammaField, b: &GammaField) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("gamma fields live on different grids".into()));
    }
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (p, va) in a.node_list().into_iter().zip(&a.values) {
        let vb = b.get(p).ok_or_else(|| Error::GridMismatch(format!("node {p} missing")))?;
        num = num.max((va - vb).norm());
        den = den.max(vb.norm());
    }
    Ok(if den > 0.0 { num / den } else { num })
}

/// Up to `per_axis^d` nodes of `grid`, evenly strided over `max_a |v_a| ≤ v_max`.
pub fn sample_nodes(grid: &GridSpec, v_max: f64, per_axis: usize) -> Vec<usize> {
    let x = grid.x_axis();
    let inside: Vec<usize> = (0..grid.n).filter(|&j| x[j].abs() <= v_max + 1e-12).collect();
    if inside.is_empty() || per_axis == 0 {
        return Vec::new();
    }
    let centre = grid.n / 2;
    let stride = (inside.len() / per_axis).max(1);
    let half = per_axis / 2;
    let axis: Vec<usize> = (0..per_axis)
        .filter_map(|i| {
            let off = (i as i64 - half as i64) * stride as i64;
            let j = centre as i64 + off;
            (j >= 0 && (j as usize) < grid.n && x[j as usize].abs() <= v_max + 1e-12).then_some(j as usize)
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; grid.d];
    loop {
        let coords: Vec<usize> = idx.iter().map(|&i| axis[i]).collect();
        out.push(grid.ravel(&coords));
        let mut a = grid.d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axis.len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Discrete masses of the convolution kernel `κ_t` and of `K_t` on the given grids.
pub fn kernel_masses(profile: &WavepacketProfile, vgrid: &GridSpec, fgrid: &GridSpec, t: f64) -> (f64, C64) {
    let d = profile.dim();
    let conv = vgrid
        .radius_sq()
        .iter()
        .map(|&r2| (4.0 * t).powf(d / 2.0) * profile.theta(4.0 * t * r2))
        .sum::<f64>()
        * vgrid.cell_volume();
    let four = fgrid
        .radius_sq()
        .iter()
        .map(|&r2| t.powf(d / 2.0) * profile.theta_tilde(t * r2).conj())
        .sum::<C64>()
        * fgrid.cell_volume();
    (conv, four)
}

/// Left and right sides of `(i∂_t + Δ)Ψ_v = (2t)^{-1} e^{i|x|²/4t} ∇·{i(x - 2vt)ϑ + 2√t ∇ϑ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t: f64,
    pub delta: f64,
    pub lhs_l2: f64,
    pub rhs_l2: f64,
    /// `‖lhs - rhs‖₂ / ‖rhs‖₂`.
    pub relative_gap: f64,
}

/// The left side uses a centered difference of step `delta` and the spectral Laplacian;
/// the right side is sampled from its closed form for the Gaussian profile.
pub fn wavepacket_residual(
    profile: &WavepacketProfile,
    v: &[f64],
    t: f64,
    grid: GridSpec,
    delta: f64,
) -> Result<ResidualReport> {
    if !(t > 0.0) || !(delta > 0.0) || delta >= t {
        return Err(Error::InvalidArgument(format!("need 0 < δ < t, got δ = {delta}, t = {t}")));
    }
    let plus = wavepacket_field(profile, v, t + delta, grid)?;
    let minus = wavepacket_field(profile, v, t - delta, grid)?;
    let mid = wavepacket_field(profile, v, t, grid)?;
    let mut lap = mid.values.clone();
    grid.forward_in_place(&mut lap);
    for (z, k2) in lap.iter_mut().zip(grid.wavenumber_sq()) {
        *z *= -k2;
    }
    grid.inverse_in_place(&mut lap);
    let lhs: Vec<C64> = plus
        .values
        .iter()
        .zip(&minus.values)
        .zip(&lap)
        .map(|((p, m), l)| C64::i() * (p - m) / (2.0 * delta) + l)
        .collect();
    let d = grid.d as f64;
    let st = t.sqrt();
    let rhs: Vec<C64> = (0..grid.len())
        .map(|p| {
            let x = grid.point(p);
            let r2: f64 = x[..grid.d].iter().map(|a| a * a).sum();
            let y2: f64 = x[..grid.d].iter().zip(v).map(|(xa, va)| ((xa - 2.0 * t * va) / st).powi(2)).sum();
            let th = profile.theta(y2);
            // ∇·(yϑ) = (d - 2|y|²)ϑ and Δϑ = (4|y|² - 2d)ϑ.
            let bracket = C64::new(2.0 * (4.0 * y2 - 2.0 * d) * th, (d - 2.0 * y2) * th);
            bracket * C64::from_polar(1.0, r2 / (4.0 * t)) / (2.0 * t)
        })
        .collect();
    let w = grid.cell_volume();
    let l2 = |v: &mut dyn Iterator<Item = f64>| (v.sum::<f64>() * w).sqrt();
    let lhs_l2 = l2(&mut lhs.iter().map(|z| z.norm_sqr()));
    let rhs_l2 = l2(&mut rhs.iter().map(|z| z.norm_sqr()));
    let diff = l2(&mut lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()));
    Ok(ResidualReport { t, delta, lhs_l2, rhs_l2, relative_gap: diff / rhs_l2 })
}

/// Measured quantities from the norm and approximation bounds on `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBounds {
    pub t: f64,
    /// `‖γ‖_∞ / (t^{d/2}‖u‖_∞)`.
    pub linf_ratio: f64,
    /// `‖γ‖₂ / ‖u‖₂`.
    pub l2_ratio: f64,
    /// `‖|∇_v|^β γ‖₂ / ‖|J|^β u‖₂`.
    pub grad_ratio: f64,
    /// `sup_v |u(t, 2vt) - t^{-d/2} e^{i|x|²/4t} γ(t, v)|`.
    pub physical_gap: f64,
    /// `physical_gap / (t^{-β/2-d/4} ‖|J|^β u‖₂)`.
    pub physical_ratio: f64,
    /// `sup_ξ |f̂(ξ) - (2i)^{d/2} γ_F(t, ξ)|`; the factor undoes `∫ conj(ϑ̃) = (2i)^{-d/2}`.
    pub fourier_gap: f64,
    /// `fourier_gap / (t^{d/4-β/2} ‖|J|^β u‖₂)`.
    pub fourier_ratio: f64,
}

impl GammaBounds {
    pub fn max_ratio(&self) -> f64 {
        [self.linf_ratio, self.l2_ratio, self.grad_ratio, self.physical_ratio, self.fourier_ratio]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Evaluates every bound for the full-grid convolution and Fourier fields of `field`.
pub fn gamma_bounds(
    field: &ComplexField,
    frame: Frame,
    conv: &GammaField,
    fourier: &GammaField,
    u_linf: f64,
    u_l2: f64,
    jbeta: f64,
    beta: f64,
) -> Result<GammaBounds> {
    let t = field.t;
    let d = field.grid.d as f64;
    let gfield = conv.as_field()?;
    let grad = fractional_gradient_norm(&gfield, beta, 1.0)?;
    let physical_gap = match frame {
        Frame::Physical => {
            let w = modulation(field, t, -1.0)?;
            let s = t.powf(-d / 2.0);
            w.values.iter().zip(&conv.values).map(|(w, g)| (w - s * g).norm()).fold(0.0, f64::max)
        }
        Frame::Lens => {
            let c = lens_factor(field.grid.d);
            let s = t.powf(-d / 2.0);
            field.values.iter().zip(&conv.values).map(|(b, g)| s * (c * b - g).norm()).fold(0.0, f64::max)
        }
    };
    let (_, fhat) = profile_transform(field, frame)?;
    let undo = C64::new(0.0, 2.0).powf(d / 2.0);
    let fourier_gap = fhat.iter().zip(&fourier.values).map(|(f, g)| (f - undo * g).norm()).fold(0.0, f64::max);
    Ok(GammaBounds {
        t,
        linf_ratio: ratio(conv.max_abs(), t.powf(d / 2.0) * u_linf),
        l2_ratio: ratio(gfield.l2(), u_l2),
        grad_ratio: ratio(grad, jbeta),
        physical_gap,
        physical_ratio: ratio(physical_gap, t.powf(-beta / 2.0 - d / 4.0) * jbeta),
        fourier_gap,
        fourier_ratio: ratio(fourier_gap, t.powf(d / 4.0 - beta / 2.0) * jbeta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twisted_transform_integral() {
        for d in [2usize, 3] {
            let p = WavepacketProfile::gaussian(d);
            let expect = C64::new(0.0, -2.0).powf(-(d as f64) / 2.0);
            assert!((p.tilde_integral() - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn profile_has_unit_integral() {
        let g = GridSpec::new(2, 64, 6.0).unwrap();
        assert!((WavepacketProfile::gaussian(2).integral_on(&g) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reflect_is_involution() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let v: Vec<C64> = (0..64).map(|i| C64::new(i as f64, 0.0)).collect();
        assert_eq!(reflect(&g, &reflect(&g, &v)), v);
        assert_eq!(reflect(&g, &v)[g.ravel(&[1, 2])], v[g.ravel(&[7, 6])]);
    }

    #[test]
    fn zero_field_gives_zero_gamma() {
        let g = GridSpec::new(2, 32, 6.0).unwrap();
        let p = WavepacketProfile::gaussian(2);
        let u = ComplexField::zeros(g, Space::Physical, 2.0);
        for frame in [Frame::Physical, Frame::Lens] {
            assert_eq!(gamma_convolution(&u, frame, &p).unwrap().max_abs(), 0.0);
            assert_eq!(gamma_fourier(&u, frame, &p).unwrap().max_abs(), 0.0);
            assert_eq!(gamma_direct(&u, frame, &p, g, &[0, 5]).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn sample_nodes_are_centred_and_bounded() {
        let g = GridSpec::new(2, 64, 8.0).unwrap();
        let nodes = sample_nodes(&g, 2.0, 5);
        assert_eq!(nodes.len(), 25);
        assert!(nodes.contains(&g.ravel(&[32, 32])));
        for p in nodes {
            assert!(g.point(p)[..2].iter().all(|c| c.abs() <= 2.0));
        }
    }
}
