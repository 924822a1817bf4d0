//! Real spherical harmonics on S^2 through their solid (polynomial) extensions.
//!
//! The regular solid harmonic `r^l P_l^m(cos θ) (cos mφ, sin mφ)` is a homogeneous
//! polynomial of degree `l` in Cartesian coordinates. Evaluating it with [`Jet3`]
//! numbers yields exact Euclidean derivatives, from which tangential gradients and
//! covariant Hessians follow without any polar-coordinate singularity.

use std::f64::consts::PI;

use super::jet::Jet3;

/// Orthonormalization constant for the real harmonic of degree `l`, order `m`.
pub fn normalization(l: usize, m: i64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let mut ratio = 1.0;
    // (l - |m|)! / (l + |m|)!
    for k in (l - am + 1)..=(l + am) {
        ratio /= k as f64;
    }
    let base = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
    if m == 0 {
        base
    } else {
        base * 2f64.sqrt()
    }
}

/// Unnormalized solid harmonics `(C_lm, S_lm)` at `p`, indexed `[l][m]` for `m <= l`.
pub fn solid_harmonics(p: [f64; 3], lmax: usize) -> Vec<Vec<(Jet3, Jet3)>> {
    let x = Jet3::var(0, p[0]);
    let y = Jet3::var(1, p[1]);
    let z = Jet3::var(2, p[2]);
    let r2 = x * x + y * y + z * z;
    let mut table = vec![vec![(Jet3::ZERO, Jet3::ZERO); lmax + 1]; lmax + 1];
    table[0][0] = (Jet3::constant(1.0), Jet3::ZERO);
    for m in 1..=lmax {
        let (c, s) = table[m - 1][m - 1];
        let f = (2 * m - 1) as f64;
        table[m][m] = ((x * c - y * s) * f, (y * c + x * s) * f);
    }
    for m in 0..=lmax {
        for l in (m + 1)..=lmax {
            let (c1, s1) = table[l - 1][m];
            let (c2, s2) = if l >= m + 2 {
                table[l - 2][m]
            } else {
                (Jet3::ZERO, Jet3::ZERO)
            };
            let a = (2 * l - 1) as f64 / (l - m) as f64;
            let b = (l + m - 1) as f64 / (l - m) as f64;
            table[l][m] = (z * c1 * a - r2 * c2 * b, z * s1 * a - r2 * s2 * b);
        }
    }
    table
}

/// Value, tangential gradient and covariant Hessian of a function on S^2 at `u`,
/// given the Euclidean jet of its 1-homogeneous extension.
///
/// The tangential block of the Euclidean Hessian of a 1-homogeneous function equals
/// `∇²φ + φ Id`, so the covariant Hessian is that block minus `φ Id`.
pub fn tangential_parts(ext: &Jet3, frame: &[[f64; 3]; 2]) -> (f64, [f64; 2], [f64; 3]) {
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let hv = |e: &[f64; 3]| {
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate() {
            *o = ext.h[a][0] * e[0] + ext.h[a][1] * e[1] + ext.h[a][2] * e[2];
        }
        out
    };
    let g = [dot(&ext.g, &frame[0]), dot(&ext.g, &frame[1])];
    let he0 = hv(&frame[0]);
    let he1 = hv(&frame[1]);
    let h11 = dot(&frame[0], &he0) - ext.v;
    let h12 = dot(&frame[0], &he1);
    let h22 = dot(&frame[1], &he1) - ext.v;
    (ext.v, g, [h11, h12, h22])
}

/// 1-homogeneous extensions of the normalized harmonics listed in `labels` at unit vector `u`.
pub fn homogeneous_extensions(u: [f64; 3], labels: &[(usize, i64)]) -> Vec<Jet3> {
    let lmax = labels.iter().map(|l| l.0).max().unwrap_or(0);
    let solid = solid_harmonics(u, lmax);
    let x = Jet3::var(0, u[0]);
    let y = Jet3::var(1, u[1]);
    let z = Jet3::var(2, u[2]);
    let r2 = x * x + y * y + z * z;
    let mut radial: Vec<Option<Jet3>> = vec![None; lmax + 1];
    labels
        .iter()
        .map(|&(l, m)| {
            let (c, s) = solid[l][m.unsigned_abs() as usize];
            let poly = if m < 0 { s } else { c } * normalization(l, m);
            let rad = *radial[l].get_or_insert_with(|| r2.powf((1.0 - l as f64) / 2.0));
            poly * rad
        })
        .collect()
}
