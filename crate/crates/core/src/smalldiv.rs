//! Small-divisor audits: scan the non-resonant quadruples of a lattice ball
//! for the minimum weighted divisor |omega| * nu3^gamma, estimate how often
//! sampled potentials clear a threshold, and fit the decay exponent of the
//! lower envelope.
//!
//! The weight clamps nu3 to at least 1: quadruples such as (p, 0, -p, 0)
//! have nu3 = 0 with |omega| of order |p|^2, and the literal weight would
//! make every scan report 0. The clamp keeps the weight faithful to the
//! role of the bound (small divisors force three large frequencies) while
//! staying positive on those degenerate tuples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{nu3, omega, resonant_unchecked, LatticePoint, Potential, Quadruple};
use crate::resonance::Ball;

/// Histogram of log10 weighted divisors, with fixed half-decade bins.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DivisorHistogram {
    /// Left edge of the first bin, in log10 of the weighted divisor.
    pub log10_min: f64,
    /// Bin width in log10 units.
    pub bin_width: f64,
    /// Counts per bin (pre-deduplication multiplicities).
    pub counts: Vec<u64>,
    /// Quadruples with weighted divisor below 10^log10_min (or exactly 0).
    pub underflow: u64,
    /// Quadruples above the last bin edge.
    pub overflow: u64,
}

impl DivisorHistogram {
    fn new() -> Self {
        Self {
            log10_min: -12.0,
            bin_width: 0.5,
            counts: vec![0; 32],
            underflow: 0,
            overflow: 0,
        }
    }

    fn record(&mut self, weighted: f64, multiplicity: u64) {
        if weighted <= 0.0 {
            self.underflow += multiplicity;
            return;
        }
        let bin = (weighted.log10() - self.log10_min) / self.bin_width;
        if bin < 0.0 {
            self.underflow += multiplicity;
        } else if bin as usize >= self.counts.len() {
            self.overflow += multiplicity;
        } else {
            self.counts[bin as usize] += multiplicity;
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }
}

/// Result of scanning every non-resonant quadruple of a ball for one
/// potential.
#[derive(Debug, Clone)]
pub struct AuditReport {
    pub seed: Option<u64>,
    pub radius_sq: i64,
    pub gamma: f64,
    /// Ordered quadruples scanned, before symmetry deduplication.
    pub scanned: u64,
    /// min over the non-resonant set of |omega| * max(nu3, 1)^gamma; `None`
    /// when the set is empty.
    pub min_weighted_divisor: Option<f64>,
    pub worst_quadruple: Option<Quadruple>,
    pub histogram: DivisorHistogram,
}

/// Scans every quadruple of the momentum set over the ball with the
/// resonance test false, computing the weighted divisor for each.
///
/// The scan dedupes by the symmetry (p, q, r, s) <-> (r, q, p, s), which
/// leaves omega and nu3 unchanged; counts are reported pre-dedup.
pub fn audit(potential: &Potential, radius_sq: i64, gamma: f64) -> Result<AuditReport> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let dim = potential.dim();
    let ball = Ball::new(dim, radius_sq)?;
    // Potential values and norms resolved once per ball point.
    let coeffs: Vec<f64> = ball.points().iter().map(|p| potential.coefficient(p)).collect();

    let mut scanned = 0u64;
    let mut min_weighted = f64::INFINITY;
    let mut worst: Option<[LatticePoint; 4]> = None;
    let mut histogram = DivisorHistogram::new();

    for (qi, q) in ball.points().iter().enumerate() {
        for (ri, r) in ball.points().iter().enumerate() {
            let qr = q.sub(r);
            for (si, s) in ball.points().iter().enumerate() {
                let p = qr.add(s);
                let Some(pi) = ball.index_of(&p) else { continue };
                // Dedup: (p,q,r,s) and (r,q,p,s) carry identical weights.
                if p > *r {
                    continue;
                }
                let multiplicity = if pi == ri as u32 { 1 } else { 2 };
                if resonant_unchecked(&p, q, r, s) {
                    continue;
                }
                scanned += multiplicity;
                let integer_part = -p.norm_sq() + q.norm_sq() - r.norm_sq() + s.norm_sq();
                let om = integer_part as f64 + coeffs[pi as usize] - coeffs[qi]
                    + coeffs[ri]
                    - coeffs[si];
                let weighted = om.abs() * nu3(&p, q, r, s).max(1.0).powf(gamma);
                histogram.record(weighted, multiplicity);
                if weighted < min_weighted {
                    min_weighted = weighted;
                    worst = Some([p, *q, *r, *s]);
                }
            }
        }
    }

    let (min_weighted_divisor, worst_quadruple) = match worst {
        Some([p, q, r, s]) => (
            Some(min_weighted),
            Some(Quadruple::classify(potential, p, q, r, s)?),
        ),
        None => (None, None),
    };
    Ok(AuditReport {
        seed: potential.seed(),
        radius_sq,
        gamma,
        scanned,
        min_weighted_divisor,
        worst_quadruple,
        histogram,
    })
}

/// Monte-Carlo estimate of how often sampled potentials clear the weighted
/// divisor threshold `c` on a ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericityEstimate {
    pub n_samples: usize,
    pub passes: usize,
    pub fraction: f64,
    /// 95% Wilson score interval for the pass fraction.
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub threshold: f64,
    pub gamma: f64,
    /// Per-sample (derived seed, minimum weighted divisor).
    pub samples: Vec<(u64, Option<f64>)>,
}

#[allow(clippy::too_many_arguments)]
pub fn genericity_estimate(
    dim: usize,
    m: f64,
    amplitude: f64,
    cutoff: i64,
    radius_sq: i64,
    gamma: f64,
    threshold: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GenericityEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    // Independent per-sample seeds derived from the master seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_seeds: Vec<u64> = (0..n_samples).map(|_| rng.gen()).collect();

    let mut passes = 0usize;
    let mut samples = Vec::with_capacity(n_samples);
    for &s in &sample_seeds {
        let potential = Potential::sample(dim, m, amplitude, cutoff, s)?;
        let report = audit(&potential, radius_sq, gamma)?;
        // An empty non-resonant set clears the threshold vacuously.
        let pass = report.min_weighted_divisor.map_or(true, |v| v >= threshold);
        if pass {
            passes += 1;
        }
        samples.push((s, report.min_weighted_divisor));
    }
    let fraction = passes as f64 / n_samples as f64;
    let (wilson_low, wilson_high) = wilson_interval(passes, n_samples, 1.96);
    Ok(GenericityEstimate {
        n_samples,
        passes,
        fraction,
        wilson_low,
        wilson_high,
        threshold,
        gamma,
        samples,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least-squares fit of the lower envelope log|omega| = log c - gamma log nu3
/// over the per-nu3 minima of |omega|.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma_hat: f64,
    pub c_hat: f64,
    /// (nu3, min |omega|) envelope points used in the fit.
    pub envelope: Vec<(f64, f64)>,
}

/// Fits the small-divisor decay exponent from the per-nu3 minima of |omega|
/// over the non-resonant set at the largest requested radius.
///
/// `radii_sq` must be increasing with at least 3 entries; quadruples with
/// nu3 < 1 are excluded from the log-log fit.
pub fn fit_gamma(potential: &Potential, radii_sq: &[i64]) -> Result<GammaFit> {
    if radii_sq.len() < 3 || radii_sq.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "radii list must be strictly increasing with at least 3 entries".into(),
        ));
    }
    let ball = Ball::new(potential.dim(), *radii_sq.last().unwrap())?;
    let mut minima: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for q in ball.points() {
        for r in ball.points() {
            let qr = q.sub(r);
            for s in ball.points() {
                let p = qr.add(s);
                if !ball.contains(&p) || resonant_unchecked(&p, q, r, s) {
                    continue;
                }
                let mut norms = [p.norm_sq(), q.norm_sq(), r.norm_sq(), s.norm_sq()];
                norms.sort_unstable_by(|a, b| b.cmp(a));
                let nu3_sq = norms[2];
                if nu3_sq < 1 {
                    continue;
                }
                let om = omega(potential, &p, q, r, s).abs();
                minima
                    .entry(nu3_sq)
                    .and_modify(|v| *v = v.min(om))
                    .or_insert(om);
            }
        }
    }
    if minima.len() < 3 {
        return Err(Error::FitFailed(format!(
            "only {} distinct nu3 values observed, need at least 3",
            minima.len()
        )));
    }
    if minima.values().any(|&v| v == 0.0) {
        return Err(Error::FitFailed(
            "zero divisors present in the envelope (non-resonance fails)".into(),
        ));
    }
    let envelope: Vec<(f64, f64)> = minima
        .iter()
        .map(|(&nu3_sq, &m)| ((nu3_sq as f64).sqrt(), m))
        .collect();
    let xs: Vec<f64> = envelope.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = envelope.iter().map(|(_, m)| m.ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok(GammaFit {
        gamma_hat: -slope,
        c_hat: intercept.exp(),
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_has_zero_divisor() {
        let v = Potential::zero(2).unwrap();
        let report = audit(&v, 2, 2.0).unwrap();
        assert_eq!(report.min_weighted_divisor, Some(0.0));
        let worst = report.worst_quadruple.unwrap();
        assert_eq!(worst.omega, 0.0);
        assert!(!worst.resonant);
    }

    #[test]
    fn empty_ball_has_no_divisors() {
        let v = Potential::sample(2, 2.0, 1.0, 2, 5).unwrap();
        let report = audit(&v, 0, 2.0).unwrap();
        assert_eq!(report.min_weighted_divisor, None);
        assert!(report.worst_quadruple.is_none());
        assert_eq!(report.scanned, 0);
    }

    #[test]
    fn audit_rejects_nonpositive_gamma() {
        let v = Potential::zero(2).unwrap();
        assert!(audit(&v, 2, 0.0).is_err());
        assert!(audit(&v, 2, -1.0).is_err());
    }

    #[test]
    fn sampled_potential_has_positive_divisor() {
        let v = Potential::sample(2, 2.0, 1.0, 5, 2024).unwrap();
        let report = audit(&v, 9, 2.0).unwrap();
        assert!(report.min_weighted_divisor.unwrap() > 0.0);
    }

    #[test]
    fn audit_min_is_recomputable_and_monotone_in_radius() {
        let v = Potential::sample(2, 2.0, 1.0, 4, 7).unwrap();
        let small = audit(&v, 4, 2.0).unwrap();
        let large = audit(&v, 9, 2.0).unwrap();
        assert!(large.min_weighted_divisor.unwrap() <= small.min_weighted_divisor.unwrap());

        // The worst quadruple attains the minimum.
        let worst = large.worst_quadruple.unwrap();
        let weighted = worst.omega.abs() * worst.nu3().max(1.0).powf(2.0);
        let diff = (weighted - large.min_weighted_divisor.unwrap()).abs();
        assert!(diff <= 1e-15 * weighted.max(1.0));
    }

    #[test]
    fn audit_integer_omega_for_zero_potential() {
        let v = Potential::zero(2).unwrap();
        let report = audit(&v, 5, 1.0).unwrap();
        let worst = report.worst_quadruple.unwrap();
        assert_eq!(worst.omega.fract(), 0.0);
    }

    #[test]
    fn audit_scaling_linearity() {
        // omega depends linearly on the potential coefficients; doubling V
        // doubles the potential part of omega on a sampled quadruple.
        let v = Potential::sample(2, 2.0, 0.4, 3, 13).unwrap();
        let v2 = v.scaled(2.0).unwrap();
        let v0 = Potential::zero(2).unwrap();
        let pt = |c: &[i64]| LatticePoint::new(c).unwrap();
        let (p, q, r, s) = (pt(&[1, 0]), pt(&[0, 0]), pt(&[0, 1]), pt(&[1, 1]));
        let base = omega(&v0, &p, &q, &r, &s);
        let with_v = omega(&v, &p, &q, &r, &s) - base;
        let with_2v = omega(&v2, &p, &q, &r, &s) - base;
        assert!((with_2v - 2.0 * with_v).abs() < 1e-14);
    }

    #[test]
    fn genericity_zero_amplitude_fails() {
        let est = genericity_estimate(2, 2.0, 0.0, 2, 4, 2.0, 1e-9, 5, 3).unwrap();
        assert_eq!(est.fraction, 0.0);
    }

    #[test]
    fn genericity_single_sample_is_bernoulli() {
        let est = genericity_estimate(2, 2.0, 1.0, 3, 4, 2.0, 1e-9, 1, 17).unwrap();
        assert!(est.fraction == 0.0 || est.fraction == 1.0);
    }

    #[test]
    fn genericity_is_deterministic() {
        let a = genericity_estimate(2, 2.0, 1.0, 3, 4, 2.0, 1e-6, 8, 5).unwrap();
        let b = genericity_estimate(2, 2.0, 1.0, 3, 4, 2.0, 1e-6, 8, 5).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn fit_gamma_rejects_zero_potential() {
        let v = Potential::zero(2).unwrap();
        assert!(fit_gamma(&v, &[4, 9, 16]).is_err());
    }

    #[test]
    fn fit_gamma_is_deterministic() {
        let v = Potential::sample(2, 2.0, 1.0, 4, 31).unwrap();
        let a = fit_gamma(&v, &[4, 9, 16]).unwrap();
        let b = fit_gamma(&v, &[4, 9, 16]).unwrap();
        assert_eq!(a.gamma_hat.to_bits(), b.gamma_hat.to_bits());
        assert_eq!(a.c_hat.to_bits(), b.c_hat.to_bits());
        assert!(a.c_hat > 0.0);
    }

    #[test]
    fn fit_gamma_rejects_bad_radius_list() {
        let v = Potential::sample(2, 2.0, 1.0, 3, 1).unwrap();
        assert!(fit_gamma(&v, &[4, 9]).is_err());
        assert!(fit_gamma(&v, &[9, 4, 16]).is_err());
    }

    #[test]
    fn wilson_interval_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(95, 100, 1.96);
        assert!(lo < 0.95 && 0.95 < hi);
        assert!(lo > 0.85 && hi < 1.0);
    }
}
