//! Real spherical-harmonics color evaluation, degrees 0 to 3.
//!
//! Coefficients are stored coefficient-major: `sh[k * 3 + c]` is basis function `k`
//! for color channel `c`. Basis order and signs follow the usual splatting convention.

use nalgebra::Vector3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

/// Number of basis functions up to `degree`.
pub const fn sh_basis_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Number of reals per primitive (three channels).
pub const fn sh_coeff_len(degree: usize) -> usize {
    3 * sh_basis_count(degree)
}

/// Degree whose coefficient length equals `len`, if any.
pub fn sh_degree_for_len(len: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|d| sh_coeff_len(*d) == len)
}

/// Basis values `Y_k(dir)` for `k < (degree+1)²`. `dir` must be unit length.
pub fn sh_basis(degree: usize, dir: &Vector3<f64>) -> Vec<f64> {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut out = Vec::with_capacity(sh_basis_count(degree));
    out.push(SH_C0);
    if degree >= 1 {
        out.extend_from_slice(&[-SH_C1 * y, SH_C1 * z, -SH_C1 * x]);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out.extend_from_slice(&[
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]);
        if degree >= 3 {
            out.extend_from_slice(&[
                SH_C3[0] * y * (3.0 * xx - yy),
                SH_C3[1] * x * y * z,
                SH_C3[2] * y * (4.0 * zz - xx - yy),
                SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
                SH_C3[4] * x * (4.0 * zz - xx - yy),
                SH_C3[5] * z * (xx - yy),
                SH_C3[6] * x * (xx - 3.0 * yy),
            ]);
        }
    }
    out
}

/// `clamp(0.5 + Σ_k c_k·Y_k(dir), 0, 1)` per channel.
pub fn sh_to_color(sh: &[f64], degree: usize, dir: &Vector3<f64>) -> [f64; 3] {
    debug_assert_eq!(sh.len(), sh_coeff_len(degree));
    let basis = sh_basis(degree, dir);
    let mut rgb = [0.5; 3];
    for (k, y) in basis.iter().enumerate() {
        for (c, v) in rgb.iter_mut().enumerate() {
            *v += sh[k * 3 + c] * y;
        }
    }
    rgb.map(|v| v.clamp(0.0, 1.0))
}

/// Degree-0 coefficient producing `color` at every view direction.
pub fn dc_from_color(color: f64) -> f64 {
    (color - 0.5) / SH_C0
}
