//! Pseudo-conformal ("lens") coordinates `u(t, x) = (2it)^{-d/2} e^{i|x|²/4t} B(t, x/2t)`.
//!
//! For a free solution `B(t) = F[M(t) e^{-itΔ}u]`, so `B` settles to the scattering
//! profile while the physical support grows like `t`.

use std::f64::consts::PI;

use crate::grid::{ComplexField, GridSpec, Space};
use crate::C64;

/// `(2it)^{p}` for real `p`.
pub fn two_it_pow(t: f64, d: usize, sign: f64) -> C64 {
    let p = sign * d as f64 / 2.0;
    C64::from_polar((2.0 * t).powf(p), p * PI / 2.0)
}

/// Effective free time of the lens Laplacian between `t1` and `t2`.
pub fn free_time(t1: f64, t2: f64) -> f64 {
    0.25 / t1 - 0.25 / t2
}

/// Velocity grid whose nodes are the images `x_j / 2t` of the physical nodes.
pub fn velocity_grid(x: GridSpec, t: f64) -> GridSpec {
    GridSpec { d: x.d, n: x.n, l: x.l / (2.0 * t) }
}

/// Physical grid `2t·v` for a velocity grid.
pub fn image_grid(v: GridSpec, t: f64) -> GridSpec {
    GridSpec { d: v.d, n: v.n, l: v.l * 2.0 * t }
}

pub fn to_lens(u: &ComplexField, t: f64) -> ComplexField {
    let c = two_it_pow(t, u.grid.d, 1.0);
    let r2 = u.grid.radius_sq();
    let values = u
        .values
        .iter()
        .zip(&r2)
        .map(|(v, &r2)| c * C64::from_polar(1.0, -r2 / (4.0 * t)) * v)
        .collect();
    ComplexField { grid: velocity_grid(u.grid, t), space: Space::Physical, t, values }
}

pub fn from_lens(b: &ComplexField, t: f64) -> ComplexField {
    let grid = image_grid(b.grid, t);
    let c = two_it_pow(t, b.grid.d, -1.0);
    let r2 = grid.radius_sq();
    let values = b
        .values
        .iter()
        .zip(&r2)
        .map(|(v, &r2)| c * C64::from_polar(1.0, r2 / (4.0 * t)) * v)
        .collect();
    ComplexField { grid, space: Space::Physical, t, values }
}
