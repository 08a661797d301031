//! Periodic box `[-L, L)^d`, complex fields on it, and the discrete Fourier
//! transform normalized to approximate `(2π)^{-d/2} ∫ e^{-ix·ξ} f(x) dx`.
//!
//! Frequency-tagged fields use centered ordering: index `j` on an axis holds
//! the wavenumber `(j - n/2)·π/L`, mirroring `x_j = -L + j·h` on the physical side.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub l: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, l: f64) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidGrid(format!("dimension {d} not in {{2, 3}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 8")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidGrid(format!("half-length L = {l} must be positive")));
        }
        Ok(Self { d, n, l })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Spacing of the wavenumber lattice, `π/L`.
    pub fn dk(&self) -> f64 {
        PI / self.l
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn x_axis(&self) -> Vec<f64> {
        (0..self.n).map(|j| -self.l + j as f64 * self.h()).collect()
    }

    pub fn k_axis(&self) -> Vec<f64> {
        let half = (self.n / 2) as f64;
        (0..self.n).map(|j| (j as f64 - half) * self.dk()).collect()
    }

    /// Per-axis indices of flat index `p`, axis 0 slowest.
    pub fn unravel(&self, mut p: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.d).rev() {
            out[a] = p % self.n;
            p /= self.n;
        }
        out
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.d).fold(0, |acc, &i| acc * self.n + i)
    }

    /// Coordinates of node `p`.
    pub fn point(&self, p: usize) -> [f64; 3] {
        let idx = self.unravel(p);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = -self.l + idx[a] as f64 * self.h();
        }
        x
    }

    pub fn wavevector(&self, p: usize) -> [f64; 3] {
        let idx = self.unravel(p);
        let mut k = [0.0; 3];
        for a in 0..self.d {
            k[a] = (idx[a] as f64 - (self.n / 2) as f64) * self.dk();
        }
        k
    }

    fn sum_sq_axis(&self, axis: &[f64]) -> Vec<f64> {
        let sq: Vec<f64> = axis.iter().map(|v| v * v).collect();
        (0..self.len())
            .map(|p| {
                let idx = self.unravel(p);
                (0..self.d).map(|a| sq[idx[a]]).sum()
            })
            .collect()
    }

    /// `|x|²` at every node.
    pub fn radius_sq(&self) -> Vec<f64> {
        self.sum_sq_axis(&self.x_axis())
    }

    /// `|k|²` at every frequency node (centered ordering).
    pub fn wavenumber_sq(&self) -> Vec<f64> {
        self.sum_sq_axis(&self.k_axis())
    }

    /// `(-1)^{j_1+…+j_d}` pattern used to shift between centered and FFT ordering.
    fn checkerboard(&self, data: &mut [C64]) {
        for (p, v) in data.iter_mut().enumerate() {
            let idx = self.unravel(p);
            if idx[..self.d].iter().sum::<usize>() % 2 == 1 {
                *v = -*v;
            }
        }
    }

    /// Forward transform of raw physical samples, in place.
    pub fn forward_in_place(&self, data: &mut [C64]) {
        self.checkerboard(data);
        fft_nd(data, self.n, self.d, false);
        self.checkerboard(data);
        let scale = (2.0 * PI).powf(-(self.d as f64) / 2.0) * self.cell_volume();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse transform of raw centered frequency samples, in place.
    pub fn inverse_in_place(&self, data: &mut [C64]) {
        self.checkerboard(data);
        fft_nd(data, self.n, self.d, true);
        self.checkerboard(data);
        let scale = (2.0 * PI).powf(-(self.d as f64) / 2.0) * self.dk().powi(self.d as i32);
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Physical,
    Frequency,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Physical => "physical",
            Space::Frequency => "frequency",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub space: Space,
    pub t: f64,
    pub values: Vec<C64>,
}

impl ComplexField {
    pub fn new(grid: GridSpec, space: Space, t: f64, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("field has non-finite entries".into()));
        }
        Ok(Self { grid, space, t, values })
    }

    pub fn zeros(grid: GridSpec, space: Space, t: f64) -> Self {
        Self { grid, space, t, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples `f(x)` at every physical node.
    pub fn from_fn(grid: GridSpec, t: f64, f: impl Fn(&[f64]) -> C64) -> Self {
        let values = (0..grid.len()).map(|p| f(&grid.point(p)[..grid.d])).collect();
        Self { grid, space: Space::Physical, t, values }
    }

    pub fn expect(&self, space: Space) -> Result<()> {
        if self.space != space {
            return Err(Error::WrongSpace { expected: space.name(), found: self.space.name() });
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Quadrature weight per node for the field's own space.
    pub fn weight(&self) -> f64 {
        match self.space {
            Space::Physical => self.grid.cell_volume(),
            Space::Frequency => self.grid.dk().powi(self.grid.d as i32),
        }
    }

    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.weight()).sqrt()
    }
}

pub fn transform_forward(f: &ComplexField) -> Result<ComplexField> {
    f.expect(Space::Physical)?;
    let mut values = f.values.clone();
    f.grid.forward_in_place(&mut values);
    Ok(ComplexField { grid: f.grid, space: Space::Frequency, t: f.t, values })
}

pub fn transform_inverse(g: &ComplexField) -> Result<ComplexField> {
    g.expect(Space::Frequency)?;
    let mut values = g.values.clone();
    g.grid.inverse_in_place(&mut values);
    Ok(ComplexField { grid: g.grid, space: Space::Physical, t: g.t, values })
}

/// `‖f‖_{L^p}` for `p = 2` (quadrature) or `p = ∞` (max modulus over nodes).
pub fn norm_lp(f: &ComplexField, p: f64) -> Result<f64> {
    f.expect(Space::Physical)?;
    if p == 2.0 {
        Ok(f.l2())
    } else if p.is_infinite() && p > 0.0 {
        Ok(f.max_abs())
    } else {
        Err(Error::InvalidArgument(format!("unsupported exponent p = {p}")))
    }
}

/// `‖|x|^ν f‖_{L²}`.
pub fn norm_weighted_x(f: &ComplexField, nu: f64) -> Result<f64> {
    f.expect(Space::Physical)?;
    if !(nu >= 0.0) {
        return Err(Error::InvalidArgument(format!("weight exponent {nu} < 0")));
    }
    Ok(weighted_sum(&f.grid.radius_sq(), &f.values, nu, f.weight()).sqrt())
}

/// `Σ (r²)^ν |v|² w` with the convention `0^0 = 1`.
pub(crate) fn weighted_sum(r2: &[f64], values: &[C64], nu: f64, w: f64) -> f64 {
    r2.iter()
        .zip(values)
        .map(|(&r2, v)| if nu == 0.0 { v.norm_sqr() } else { r2.powf(nu) * v.norm_sqr() })
        .sum::<f64>()
        * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn build_grid_examples() {
        let g = GridSpec::new(2, 8, 4.0).unwrap();
        assert_eq!(g.h(), 1.0);
        assert_relative_eq!(g.k_axis()[0], -PI);
        assert_relative_eq!(g.k_axis()[7], 3.0 * PI / 4.0);
        let g = GridSpec::new(3, 8, PI).unwrap();
        let ks: Vec<f64> = g.k_axis();
        for (j, k) in ks.iter().enumerate() {
            assert_relative_eq!(*k, j as f64 - 4.0, epsilon = 1e-14);
        }
        assert!(GridSpec::new(2, 12, 4.0).is_err());
        assert!(GridSpec::new(2, 8, 0.0).is_err());
        assert!(GridSpec::new(4, 8, 1.0).is_err());
        assert!(GridSpec::new(2, 4, 1.0).is_err());
    }

    #[test]
    fn plane_wave_goes_to_single_node() {
        let g = GridSpec::new(2, 16, 3.0).unwrap();
        let (m0, m1) = (11usize, 5usize);
        let k0 = [g.k_axis()[m0], g.k_axis()[m1]];
        let f = ComplexField::from_fn(g, 0.0, |x| C64::from_polar(1.0, k0[0] * x[0] + k0[1] * x[1]));
        let fh = transform_forward(&f).unwrap();
        let target = g.ravel(&[m0, m1]);
        let peak = (2.0 * PI).powi(-1) * (2.0 * g.l).powi(2);
        for (p, v) in fh.values.iter().enumerate() {
            let want = if p == target { peak } else { 0.0 };
            assert!((v - want).norm() < 1e-10 * peak, "node {p}: {v}");
        }
        let back = transform_inverse(&fh).unwrap();
        for (a, b) in back.values.iter().zip(&f.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_transform_pair() {
        let g = GridSpec::new(2, 256, 12.0).unwrap();
        let f = ComplexField::from_fn(g, 0.0, |x| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let fh = transform_forward(&f).unwrap();
        let k2 = g.wavenumber_sq();
        for p in (0..g.len()).step_by(997) {
            let want = 0.5 * (-k2[p] / 4.0).exp();
            if want > 1e-6 {
                assert_relative_eq!(fh.values[p].re, want, max_relative = 1e-10);
            }
            assert!((fh.values[p] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn norms() {
        let g = GridSpec::new(2, 64, 4.0).unwrap();
        let one = ComplexField::from_fn(g, 0.0, |_| C64::new(1.0, 0.0));
        assert_relative_eq!(norm_lp(&one, 2.0).unwrap(), 8.0, max_relative = 1e-14);
        assert_eq!(norm_lp(&ComplexField::zeros(g, Space::Physical, 0.0), f64::INFINITY).unwrap(), 0.0);
        assert!(norm_lp(&one, 3.0).is_err());

        let g = GridSpec::new(2, 128, 8.0).unwrap();
        let gauss = ComplexField::from_fn(g, 0.0, |x| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        assert_relative_eq!(norm_lp(&gauss, 2.0).unwrap(), (PI / 2.0).sqrt(), max_relative = 1e-10);
        assert_relative_eq!(norm_weighted_x(&gauss, 0.0).unwrap(), norm_lp(&gauss, 2.0).unwrap());
        assert_relative_eq!(norm_weighted_x(&gauss, 1.0).unwrap(), (PI / 4.0).sqrt(), max_relative = 1e-8);
        assert!(norm_weighted_x(&gauss, -1.0).is_err());

        let mut spike = ComplexField::zeros(g, Space::Physical, 0.0);
        spike.values[g.ravel(&[64, 64])] = C64::new(1.0, 0.0);
        assert_eq!(norm_weighted_x(&spike, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn wrong_tag_rejected() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let f = ComplexField::zeros(g, Space::Frequency, 0.0);
        assert!(transform_forward(&f).is_err());
        assert!(transform_inverse(&ComplexField::zeros(g, Space::Physical, 0.0)).is_err());
    }
}
