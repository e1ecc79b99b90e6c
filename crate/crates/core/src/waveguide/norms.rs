//! Discrete functional norms on wave fields, evaluated through the Fourier
//! multipliers (1 + xi^2 + |p|^2)^N (isotropic Sobolev), the sup-in-xi
//! Z-weight (1 + xi^2)^2 (1 + |p|^2), and the centered-coordinate weights
//! for the scattering spaces S and S^+.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::{y_slices_fft, Representation, WaveField};

fn with_fourier<T>(f: &WaveField, op: impl FnOnce(&WaveField) -> T) -> T {
    if f.representation() == Representation::Fourier {
        op(f)
    } else {
        op(&f.fourier_clone())
    }
}

fn with_physical<T>(f: &WaveField, op: impl FnOnce(&WaveField) -> T) -> T {
    if f.representation() == Representation::Physical {
        op(f)
    } else {
        op(&f.physical_clone())
    }
}

fn check_degree(n: f64) -> Result<()> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "norm degree N = {n} must be a nonnegative real"
        )));
    }
    Ok(())
}

/// Sobolev norm with the isotropic multiplier (1 + xi^2 + |p|^2)^N.
/// N = 0 reduces to the L^2 norm.
pub fn norm_hn(f: &WaveField, n: f64) -> Result<f64> {
    check_degree(n)?;
    Ok(with_fourier(f, |ff| {
        let disc = ff.disc();
        let n_yd = disc.n_y_total();
        let mut sum = 0.0;
        for (j, chunk) in ff.data().chunks(n_yd).enumerate() {
            let xi2 = disc.xi()[j] * disc.xi()[j];
            for (m, v) in chunk.iter().enumerate() {
                let w = 1.0 + xi2 + disc.y_mode(m).norm_sq() as f64;
                sum += w.powf(n) * v.norm_sqr();
            }
        }
        (disc.fourier_mass_constant() * sum).sqrt()
    }))
}

/// The scattering-critical norm: sup over xi of
/// (1 + xi^2)^2 sum_p (1 + |p|^2) |Fhat_p(xi)|^2, square-rooted.
/// No lattice-spacing constant enters (it is a sup, not an integral).
pub fn norm_z(f: &WaveField) -> f64 {
    with_fourier(f, |ff| {
        let disc = ff.disc();
        let n_yd = disc.n_y_total();
        let mut worst = 0.0f64;
        for (j, chunk) in ff.data().chunks(n_yd).enumerate() {
            let xi2 = disc.xi()[j] * disc.xi()[j];
            let h1: f64 = chunk
                .iter()
                .enumerate()
                .map(|(m, v)| (1.0 + disc.y_mode(m).norm_sq() as f64) * v.norm_sqr())
                .sum();
            worst = worst.max((1.0 + xi2).powi(2) * h1);
        }
        worst.sqrt()
    })
}

/// L^2 norm of x.F with x the centered sawtooth coordinate on [-L/2, L/2).
pub fn x_weighted_l2(f: &WaveField) -> f64 {
    with_physical(f, |fp| {
        let disc = fp.disc();
        let n_yd = disc.n_y_total();
        let mut sum = 0.0;
        for (j, chunk) in fp.data().chunks(n_yd).enumerate() {
            let x2 = disc.x_coord(j) * disc.x_coord(j);
            sum += x2 * chunk.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        (disc.physical_mass_constant() * sum).sqrt()
    })
}

/// ||F||_S = ||F||_{H^N} + ||xF||_{L^2}.
pub fn norm_s(f: &WaveField, n: f64) -> Result<f64> {
    Ok(norm_hn(f, n)? + x_weighted_l2(f))
}

/// ||F||_{S+} = ||F||_S + ||(1 - dxx)^4 F||_S + ||xF||_S.
pub fn norm_splus(f: &WaveField, n: f64) -> Result<f64> {
    let base = norm_s(f, n)?;

    let mut elliptic = f.fourier_clone();
    {
        let disc = elliptic.disc().clone();
        let n_yd = disc.n_y_total();
        for (j, chunk) in elliptic.data_mut().chunks_mut(n_yd).enumerate() {
            let w = (1.0 + disc.xi()[j] * disc.xi()[j]).powi(4);
            chunk.iter_mut().for_each(|v| *v *= w);
        }
    }

    let mut weighted = f.physical_clone();
    {
        let disc = weighted.disc().clone();
        let n_yd = disc.n_y_total();
        for (j, chunk) in weighted.data_mut().chunks_mut(n_yd).enumerate() {
            let x = disc.x_coord(j);
            chunk.iter_mut().for_each(|v| *v *= x);
        }
    }

    Ok(base + norm_s(&elliptic, n)? + norm_s(&weighted, n)?)
}

/// sup over x of the H^1_y norm: max_j of
/// (2pi)^d sum_p (1 + |p|^2) |c_p(x_j)|^2, square-rooted.
pub fn norm_linf_h1(u: &WaveField) -> f64 {
    with_physical(u, |up| {
        let disc = up.disc();
        let n_yd = disc.n_y_total();
        // Partial transform: keep x physical, take y to coefficients.
        let mut data: Vec<Complex64> = up.data().to_vec();
        y_slices_fft(&mut data, disc, true);
        let y_scale = 1.0 / n_yd as f64;
        let cy = (2.0 * std::f64::consts::PI).powi(disc.dim_y() as i32);
        let mut worst = 0.0f64;
        for chunk in data.chunks(n_yd) {
            let h1: f64 = chunk
                .iter()
                .enumerate()
                .map(|(m, v)| {
                    let c = v * y_scale;
                    (1.0 + disc.y_mode(m).norm_sq() as f64) * c.norm_sqr()
                })
                .sum();
            worst = worst.max(cy * h1);
        }
        worst.sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_field;
    use super::super::{Discretization, WaveField};
    use super::*;
    use crate::lattice::LatticePoint;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn pt(coords: &[i64]) -> LatticePoint {
        LatticePoint::new(coords).unwrap()
    }

    fn disc_2d() -> Arc<Discretization> {
        Discretization::new(2, 12.0 * PI, 32, 8).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let disc = disc_2d();
        let z = WaveField::zero(disc, Representation::Fourier);
        assert_eq!(norm_hn(&z, 8.0).unwrap(), 0.0);
        assert_eq!(norm_z(&z), 0.0);
        assert_eq!(norm_s(&z, 8.0).unwrap(), 0.0);
        assert_eq!(norm_splus(&z, 8.0).unwrap(), 0.0);
        assert_eq!(norm_linf_h1(&z), 0.0);
    }

    #[test]
    fn hn_degree_zero_is_l2_mass() {
        let disc = disc_2d();
        let f = random_field(&disc, 1);
        let l2 = norm_hn(&f, 0.0).unwrap();
        assert!((l2 * l2 - f.mass()).abs() / f.mass() < 1e-10);
    }

    #[test]
    fn invalid_degree_rejected() {
        let disc = disc_2d();
        let f = WaveField::zero(disc, Representation::Fourier);
        assert!(norm_hn(&f, -1.0).is_err());
        assert!(norm_hn(&f, f64::NAN).is_err());
    }

    #[test]
    fn single_mode_z_norm() {
        let disc = disc_2d();
        let mut f = WaveField::zero(disc.clone(), Representation::Fourier);
        let k = 5;
        let p = pt(&[1, -2]);
        f.set_fourier_mode(k, &p, Complex64::new(1.0, 0.0)).unwrap();
        let xi2 = disc.xi()[k] * disc.xi()[k];
        let expected_sq = (1.0 + xi2).powi(2) * (1.0 + 5.0);
        let got = norm_z(&f);
        assert!((got * got - expected_sq).abs() < 1e-12);
    }

    #[test]
    fn single_mode_hn_norm() {
        let disc = disc_2d();
        let mut f = WaveField::zero(disc.clone(), Representation::Fourier);
        let k = 3;
        let p = pt(&[0, 2]);
        let amp = Complex64::new(0.0, 2.0);
        f.set_fourier_mode(k, &p, amp).unwrap();
        let xi2 = disc.xi()[k] * disc.xi()[k];
        let expected = ((1.0 + xi2 + 4.0).powf(3.0)
            * disc.fourier_mass_constant()
            * amp.norm_sqr())
        .sqrt();
        assert!((norm_hn(&f, 3.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn h1_bounded_by_s() {
        let disc = disc_2d();
        for seed in 0..5 {
            let f = random_field(&disc, seed);
            let h1 = norm_hn(&f, 1.0).unwrap();
            for n in [1.0, 2.0, 8.0] {
                assert!(h1 <= norm_s(&f, n).unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn splus_dominates_s() {
        let disc = disc_2d();
        let f = random_field(&disc, 7);
        let s = norm_s(&f, 2.0).unwrap();
        let sp = norm_splus(&f, 2.0).unwrap();
        assert!(sp >= s);
    }

    #[test]
    fn linf_h1_of_y_constant_field() {
        // F independent of y: c_p = 0 except p = 0, and the norm is the
        // max over x of (2pi)^{d/2} |F(x)|.
        let disc = Discretization::new(1, 10.0, 16, 8).unwrap();
        let mut f = WaveField::zero(disc.clone(), Representation::Physical);
        for j in 0..disc.n_x() {
            for m in 0..disc.n_y_total() {
                let i = f.idx(j, m);
                f.data_mut()[i] = Complex64::new(j as f64, 0.0);
            }
        }
        let expected = (2.0 * PI).sqrt() * (disc.n_x() - 1) as f64;
        assert!((norm_linf_h1(&f) - expected).abs() < 1e-9);
    }

    #[test]
    fn norms_are_representation_independent() {
        let disc = disc_2d();
        let f = random_field(&disc, 9);
        let g = f.fourier_clone();
        assert!((norm_hn(&f, 4.0).unwrap() - norm_hn(&g, 4.0).unwrap()).abs() < 1e-9);
        assert!((norm_z(&f) - norm_z(&g)).abs() < 1e-9);
        assert!((norm_s(&f, 4.0).unwrap() - norm_s(&g, 4.0).unwrap()).abs() < 1e-9);
        assert!((norm_linf_h1(&f) - norm_linf_h1(&g)).abs() < 1e-9);
    }
}
