//! Free-space convolution with `|x|^{-1}` and the Bopp–Podolsky kernel
//! `K(x) = (1 - e^{-|x|})/|x|` on a periodic grid.
//!
//! The multiplier is the unsymmetric transform `Σ_o h^d k(o) e^{-iκ·o}` of the
//! kernel sampled on every lattice offset `o` with `|o| ≤ R`, taken on the grid
//! zero-padded to `(2n)^d`. The self offset carries the cell average of the
//! kernel. With this multiplier the spectral product reproduces the aperiodic
//! lattice sum exactly, so the direct-sum oracle pins it to roundoff.

use std::f64::consts::PI;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{ComplexField, GridSpec, Space};
use crate::quad::{bessel_j0, gauss_legendre, integrate};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Coulomb,
    BoppPodolsky,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Coulomb => "coulomb",
            KernelKind::BoppPodolsky => "bopp_podolsky",
        }
    }
}

/// Radial kernel `1/r` or `(1 - e^{-s r})/r`; `s = 1` is the Bopp–Podolsky kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialKernel {
    pub kind: KernelKind,
    pub screen: f64,
}

impl RadialKernel {
    pub fn coulomb() -> Self {
        Self { kind: KernelKind::Coulomb, screen: 1.0 }
    }

    pub fn bopp_podolsky() -> Self {
        Self { kind: KernelKind::BoppPodolsky, screen: 1.0 }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Coulomb => 1.0 / r,
            KernelKind::BoppPodolsky => {
                let sr = self.screen * r;
                if sr < 1e-8 {
                    self.screen * (1.0 - 0.5 * sr)
                } else {
                    -(-sr).exp_m1() / r
                }
            }
        }
    }

    /// `∫₀^ρ k(r) r^{d-1} dr`.
    fn radial_moment(&self, d: usize, rho: f64) -> f64 {
        let coulomb = rho.powi(d as i32 - 1) / (d as f64 - 1.0);
        match self.kind {
            KernelKind::Coulomb => coulomb,
            KernelKind::BoppPodolsky => {
                let s = self.screen;
                let x = s * rho;
                let yukawa = if d == 2 {
                    -(-x).exp_m1() / s
                } else if x < 1e-3 {
                    // 1 - e^{-x}(1+x) = x²/2 - x³/3 + x⁴/8 - …
                    x * x * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0) / (s * s)
                } else {
                    (1.0 - (-x).exp() * (1.0 + x)) / (s * s)
                };
                coulomb - yukawa
            }
        }
    }

    /// Average of the kernel over the cube `[-h/2, h/2]^d`, integrated exactly
    /// in the radial direction and by Gauss–Legendre over the faces.
    pub fn cell_average(&self, d: usize, h: f64) -> f64 {
        let (x, w) = gauss_legendre(48);
        let a = 0.5 * h;
        let face = |y2: f64| {
            let rho = (y2 + a * a).sqrt();
            a / rho.powi(d as i32) * self.radial_moment(d, rho)
        };
        let integral = if d == 2 {
            x.iter().zip(&w).map(|(xi, wi)| wi * a * face((a * xi).powi(2))).sum::<f64>()
        } else {
            let mut s = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                for (xj, wj) in x.iter().zip(&w) {
                    s += wi * wj * a * a * face((a * xi).powi(2) + (a * xj).powi(2));
                }
            }
            s
        };
        2.0 * d as f64 * integral / h.powi(d as i32)
    }

    /// Lattice value used by both the multiplier and the direct-sum oracle.
    fn lattice_value(&self, r: f64, radius: f64, self_value: f64) -> f64 {
        if r == 0.0 {
            self_value
        } else if r <= radius {
            self.eval(r)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelMultiplier {
    pub grid: GridSpec,
    pub kernel: RadialKernel,
    pub radius: f64,
    /// Multiplier on the padded lattice in raw FFT ordering.
    fft_values: Vec<f64>,
}

impl KernelMultiplier {
    pub fn new(grid: GridSpec, kernel: RadialKernel, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("truncation radius {radius} must be positive")));
        }
        if !(kernel.screen > 0.0) {
            return Err(Error::InvalidArgument("screening scale must be positive".into()));
        }
        let (d, n, h) = (grid.d, grid.n, grid.h());
        let np = 2 * n;
        let total = np.pow(d as u32);
        let self_value = kernel.cell_average(d, h);
        let offset = |i: usize| if i < n { i as f64 } else { i as f64 - np as f64 };
        let mut samples = vec![C64::new(0.0, 0.0); total];
        for (p, s) in samples.iter_mut().enumerate() {
            let mut q = p;
            let mut r2 = 0.0;
            for _ in 0..d {
                let o = offset(q % np) * h;
                r2 += o * o;
                q /= np;
            }
            *s = C64::new(kernel.lattice_value(r2.sqrt(), radius, self_value), 0.0);
        }
        fft_nd(&mut samples, np, d, false);
        let vol = grid.cell_volume();
        let fft_values = samples.iter().map(|v| v.re * vol).collect();
        Ok(Self { grid, kernel, radius, fft_values })
    }

    pub fn coulomb(grid: GridSpec, radius: f64) -> Result<Self> {
        Self::new(grid, RadialKernel::coulomb(), radius)
    }

    pub fn bopp_podolsky(grid: GridSpec, radius: f64) -> Result<Self> {
        Self::new(grid, RadialKernel::bopp_podolsky(), radius)
    }

    /// Grid on which the multiplier lives: `(2n)^d` nodes over `[-2L, 2L)^d`.
    pub fn padded_grid(&self) -> GridSpec {
        GridSpec { d: self.grid.d, n: 2 * self.grid.n, l: 2.0 * self.grid.l }
    }

    /// Multiplier values at the padded grid's frequency nodes, centered ordering.
    pub fn values(&self) -> Vec<f64> {
        let pg = self.padded_grid();
        let half = pg.n / 2;
        (0..pg.len())
            .map(|p| {
                let idx = pg.unravel(p);
                let mut q = 0;
                for i in &idx[..pg.d] {
                    q = q * pg.n + (i + half) % pg.n;
                }
                self.fft_values[q]
            })
            .collect()
    }

    /// Value at wavenumber zero, `Σ_o h^d k(o)`.
    pub fn value_at_zero(&self) -> f64 {
        self.fft_values[0]
    }

    /// Adds a constant to every node; used to inject faults in oracle self-tests.
    pub fn perturbed(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.fft_values.iter_mut().for_each(|v| *v += delta);
        out
    }

    /// `(kernel ∗ ρ)` at every node of the base grid.
    pub fn convolve(&self, rho: &[f64]) -> Vec<f64> {
        let (d, n) = (self.grid.d, self.grid.n);
        let np = 2 * n;
        let mut buf = vec![C64::new(0.0, 0.0); np.pow(d as u32)];
        let pad_index = |p: usize| {
            let idx = self.grid.unravel(p);
            idx[..d].iter().fold(0, |acc, &i| acc * np + i)
        };
        for (p, &r) in rho.iter().enumerate() {
            buf[pad_index(p)] = C64::new(r, 0.0);
        }
        fft_nd(&mut buf, np, d, false);
        for (b, m) in buf.iter_mut().zip(&self.fft_values) {
            *b *= *m;
        }
        fft_nd(&mut buf, np, d, true);
        let scale = 1.0 / buf.len() as f64;
        (0..rho.len()).map(|p| buf[pad_index(p)].re * scale).collect()
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let pg = self.padded_grid();
        writeln!(
            f,
            "format=modscat-multiplier version=1 d={} n={} L={:e} base_n={} base_L={:e} R={:e} kind={} screen={:e} layout=centered count={}",
            pg.d,
            pg.n,
            pg.l,
            self.grid.n,
            self.grid.l,
            self.radius,
            self.kernel.kind.name(),
            self.kernel.screen,
            pg.len()
        )?;
        for v in self.values() {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|s| s.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Corrupt(format!("multiplier header lacks {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?.parse::<f64>().map_err(|e| Error::Corrupt(format!("{key}: {e}")))
        };
        if field("format")? != "modscat-multiplier" || field("version")? != "1" {
            return Err(Error::Corrupt("not a version-1 multiplier cache".into()));
        }
        let grid = GridSpec::new(num("d")? as usize, num("base_n")? as usize, num("base_L")?)?;
        let kind = match field("kind")?.as_str() {
            "coulomb" => KernelKind::Coulomb,
            "bopp_podolsky" => KernelKind::BoppPodolsky,
            other => return Err(Error::Corrupt(format!("unknown kernel kind {other}"))),
        };
        let kernel = RadialKernel { kind, screen: num("screen")? };
        let count = num("count")? as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * count {
            return Err(Error::Corrupt(format!("expected {} payload bytes, found {}", 8 * count, bytes.len())));
        }
        let centered: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut out = Self { grid, kernel, radius: num("R")?, fft_values: vec![0.0; count] };
        let pg = out.padded_grid();
        if pg.len() != count {
            return Err(Error::Corrupt("count does not match grid".into()));
        }
        let half = pg.n / 2;
        for (p, v) in centered.iter().enumerate() {
            let idx = pg.unravel(p);
            let q = idx[..pg.d].iter().fold(0, |acc, &i| acc * pg.n + (i + half) % pg.n);
            out.fft_values[q] = *v;
        }
        Ok(out)
    }
}

/// `(kernel ∗ density)` for a physical-space density (imaginary part ignored).
pub fn nonlocal_potential(m: &KernelMultiplier, density: &ComplexField) -> Result<ComplexField> {
    density.expect(Space::Physical)?;
    if density.grid != m.grid {
        return Err(Error::GridMismatch(format!("multiplier {:?} vs density {:?}", m.grid, density.grid)));
    }
    let rho: Vec<f64> = density.values.iter().map(|v| v.re).collect();
    let values = m.convolve(&rho).into_iter().map(|v| C64::new(v, 0.0)).collect();
    Ok(ComplexField { grid: density.grid, space: Space::Physical, t: density.t, values })
}

/// Brute-force lattice sum `Σ_j k(x_i - x_j) ρ_j h^d`; the ground truth for
/// [`nonlocal_potential`].
pub fn direct_convolution_oracle(
    kernel: RadialKernel,
    radius: f64,
    density: &ComplexField,
) -> Result<ComplexField> {
    let g = density.grid;
    if g.n > 32 {
        return Err(Error::CostGuard(format!("direct sum limited to n <= 32, got {}", g.n)));
    }
    let h = g.h();
    let self_value = kernel.cell_average(g.d, h);
    let vol = g.cell_volume();
    let idx: Vec<[usize; 3]> = (0..g.len()).map(|p| g.unravel(p)).collect();
    let values = idx
        .iter()
        .map(|a| {
            let mut s = 0.0;
            for (j, b) in idx.iter().enumerate() {
                let r2: f64 = (0..g.d).map(|k| ((a[k] as f64 - b[k] as f64) * h).powi(2)).sum();
                s += kernel.lattice_value(r2.sqrt(), radius, self_value) * density.values[j].re;
            }
            C64::new(s * vol, 0.0)
        })
        .collect();
    Ok(ComplexField { grid: g, space: Space::Physical, t: density.t, values })
}

/// Unsymmetric transform of the kernel truncated to the ball of radius `R`,
/// in closed form where one exists (all of d = 3) and by radial quadrature in d = 2.
pub fn truncated_transform(kernel: RadialKernel, d: usize, k: f64, radius: f64) -> f64 {
    if d == 3 && kernel.screen == 1.0 {
        let r = radius;
        let coulomb = if k == 0.0 { 2.0 * PI * r * r } else { 4.0 * PI * (1.0 - (k * r).cos()) / (k * k) };
        return match kernel.kind {
            KernelKind::Coulomb => coulomb,
            KernelKind::BoppPodolsky => {
                let yukawa = if k == 0.0 {
                    4.0 * PI * (1.0 - (-r).exp() * (1.0 + r))
                } else {
                    4.0 * PI * (k - (-r).exp() * ((k * r).sin() + k * (k * r).cos())) / (k * (1.0 + k * k))
                };
                coulomb - yukawa
            }
        };
    }
    radial_quadrature(kernel, d, k, radius)
}

/// `4π∫₀^R k(r) r² sinc(κr) dr` (d = 3) or `2π∫₀^R k(r) r J₀(κr) dr` (d = 2).
pub fn radial_quadrature(kernel: RadialKernel, d: usize, k: f64, radius: f64) -> f64 {
    let pieces = 4 + (k * radius / PI).ceil() as usize;
    if d == 3 {
        let f = |r: f64| {
            let kr = k * r;
            let sinc = if kr.abs() < 1e-8 { 1.0 - kr * kr / 6.0 } else { kr.sin() / kr };
            kernel.eval(r.max(1e-300)) * r * r * sinc
        };
        4.0 * PI * integrate(f, 0.0, radius, 1e-12, pieces)
    } else {
        let f = |r: f64| if r == 0.0 { kernel.screen_limit() } else { kernel.eval(r) * r * bessel_j0(k * r) };
        2.0 * PI * integrate(f, 0.0, radius, 1e-11, pieces)
    }
}

impl RadialKernel {
    /// Limit of `k(r)·r` as `r → 0`.
    fn screen_limit(&self) -> f64 {
        match self.kind {
            KernelKind::Coulomb => 1.0,
            KernelKind::BoppPodolsky => 0.0,
        }
    }
}

/// Transforms of the untruncated kernels (`k > 0`).
pub fn untruncated_transform(kind: KernelKind, d: usize, k: f64) -> f64 {
    match (kind, d) {
        (KernelKind::Coulomb, 3) => 4.0 * PI / (k * k),
        (KernelKind::Coulomb, _) => 2.0 * PI / k,
        (KernelKind::BoppPodolsky, 3) => 4.0 * PI / (k * k * (1.0 + k * k)),
        (KernelKind::BoppPodolsky, _) => 2.0 * PI * (1.0 / k - 1.0 / (1.0 + k * k).sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_pointwise() {
        assert_relative_eq!(RadialKernel::bopp_podolsky().eval(1.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(RadialKernel::coulomb().eval(2.0), 0.5);
    }

    #[test]
    fn cell_average_of_coulomb_matches_known_constants() {
        // Mean of 1/|x| over the unit square is 4 asinh(1); over the unit cube ≈ 2.380077.
        assert_relative_eq!(RadialKernel::coulomb().cell_average(2, 1.0), 4.0 * 1f64.asinh(), epsilon = 1e-13);
        assert_relative_eq!(RadialKernel::coulomb().cell_average(3, 0.5), 2.0 * 2.380_077_363_979_6, epsilon = 1e-9);
    }

    #[test]
    fn zero_frequency_values() {
        let r = 3.0;
        assert_relative_eq!(truncated_transform(RadialKernel::coulomb(), 3, 0.0, r), 2.0 * PI * r * r);
        assert_relative_eq!(truncated_transform(RadialKernel::coulomb(), 2, 0.0, r), 2.0 * PI * r, epsilon = 1e-9);
        assert_relative_eq!(untruncated_transform(KernelKind::BoppPodolsky, 3, 1.0), 2.0 * PI);
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let g = GridSpec::new(2, 8, 2.0).unwrap();
        let m = KernelMultiplier::coulomb(g, 4.0).unwrap();
        let z = ComplexField::zeros(g, Space::Physical, 0.0);
        assert!(nonlocal_potential(&m, &z).unwrap().values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cache_round_trip() {
        let g = GridSpec::new(2, 8, 2.0).unwrap();
        let m = KernelMultiplier::bopp_podolsky(g, 4.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        m.write_cache(&path).unwrap();
        let back = KernelMultiplier::read_cache(&path).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.grid, m.grid);
    }
}
