//! One-dimensional quadrature and the Bessel function J₀.

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and |Kronrod − Gauss| on one interval.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let s = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`, split initially into
/// `pieces` equal panels, to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, pieces: usize) -> f64 {
    let pieces = pieces.max(1);
    let w = (b - a) / pieces as f64;
    let mut stack: Vec<(f64, f64, f64, u32)> = (0..pieces)
        .map(|i| (a + i as f64 * w, a + (i + 1) as f64 * w, tol / pieces as f64, 0))
        .collect();
    let mut total = 0.0;
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        if err <= t || depth >= 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    total
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Bessel J₀ from the periodic integral `(1/2π)∫ cos(x sin θ) dθ`, evaluated by
/// the trapezoid rule, which converges geometrically once the point count exceeds |x|.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 48 + x.abs().ceil() as usize;
    (0..n)
        .map(|j| (x * (2.0 * PI * j as f64 / n as f64).sin()).cos())
        .sum::<f64>()
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn j0_reference_values() {
        assert_relative_eq!(bessel_j0(0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(bessel_j0(1.0), 0.765_197_686_557_966_6, epsilon = 1e-15);
        assert_relative_eq!(bessel_j0(10.0), -0.245_935_764_451_348_3, epsilon = 1e-14);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
    }

    #[test]
    fn adaptive_integration() {
        assert_relative_eq!(integrate(|x| x.sin(), 0.0, PI, 1e-13, 1), 2.0, epsilon = 1e-12);
        let v = integrate(|x| (-x * x).exp(), -10.0, 10.0, 1e-14, 4);
        assert_relative_eq!(v, PI.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, epsilon = 1e-14);
    }
}
