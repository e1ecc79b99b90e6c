//! Exact lattice arithmetic: points of Z^d, sampled convolution potentials,
//! eigenvalues `lambda_p = -|p|^2 + v_p`, phase differences `omega` and the
//! `nu3` weight.
//!
//! All resonance classification is done on exact integer squared norms;
//! floating point enters only through the potential coefficients and the
//! square root in [`nu3`].

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum torus dimension supported (the statements assume 1 <= d <= 4).
pub const MAX_DIM: usize = 4;

/// A point of Z^d carried with its exact integer squared Euclidean norm.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    dim: u8,
    coords: [i64; MAX_DIM],
    norm_sq: i64,
}

impl LatticePoint {
    pub fn new(coords: &[i64]) -> Result<Self> {
        let d = coords.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "lattice dimension must be in 1..={MAX_DIM}, got {d}"
            )));
        }
        let mut c = [0i64; MAX_DIM];
        c[..d].copy_from_slice(coords);
        let norm_sq = coords.iter().map(|&x| x * x).sum();
        Ok(Self {
            dim: d as u8,
            coords: c,
            norm_sq,
        })
    }

    /// Origin of Z^d.
    pub fn origin(dim: usize) -> Result<Self> {
        Self::new(&vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    /// Exact squared Euclidean norm |p|^2.
    pub fn norm_sq(&self) -> i64 {
        self.norm_sq
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut c = [0i64; MAX_DIM];
        for i in 0..self.dim as usize {
            c[i] = self.coords[i] + other.coords[i];
        }
        Self::new(&c[..self.dim as usize]).expect("dimension preserved")
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut c = [0i64; MAX_DIM];
        for i in 0..self.dim as usize {
            c[i] = self.coords[i] - other.coords[i];
        }
        Self::new(&c[..self.dim as usize]).expect("dimension preserved")
    }

    pub fn neg(&self) -> Self {
        let mut c = [0i64; MAX_DIM];
        for i in 0..self.dim as usize {
            c[i] = -self.coords[i];
        }
        Self::new(&c[..self.dim as usize]).expect("dimension preserved")
    }

    /// Exact integer dot product.
    pub fn dot(&self, other: &Self) -> i64 {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.dim as usize)
            .map(|i| self.coords[i] * other.coords[i])
            .sum()
    }

    pub fn is_origin(&self) -> bool {
        self.norm_sq == 0
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Truncated Fourier coefficients of a real even convolution potential.
///
/// Coefficients satisfy the envelope |v_a| <= R (1+|a|)^{-m} / 2 and the
/// mirror symmetry v_{-a} = v_a, and vanish outside the cutoff box
/// max|a_i| <= A.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    dim: usize,
    decay_m: f64,
    amplitude_r: f64,
    cutoff: i64,
    seed: Option<u64>,
    coeffs: BTreeMap<LatticePoint, f64>,
}

#[derive(Serialize, Deserialize)]
struct PotentialRepr {
    d: usize,
    m: f64,
    #[serde(rename = "R")]
    amplitude: f64,
    #[serde(rename = "A")]
    cutoff: i64,
    seed: Option<u64>,
    coefficients: Vec<(Vec<i64>, f64)>,
}

impl Potential {
    /// The zero potential (V = 0); `m` is set to `d` so the measure-space
    /// constraint m > d/2 holds vacuously.
    pub fn zero(dim: usize) -> Result<Self> {
        Self::from_coefficients(dim, dim as f64, 0.0, 0, None, BTreeMap::new())
    }

    /// Draws a potential from the truncated measure space: one uniform draw
    /// on [-1/2, 1/2] per pair {a, -a}, mirrored so that V is real and even.
    /// Deterministic in `seed`.
    pub fn sample(dim: usize, m: f64, amplitude: f64, cutoff: i64, seed: u64) -> Result<Self> {
        validate_measure_params(dim, m, amplitude, cutoff)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = BTreeMap::new();
        // Lexicographic walk over the cutoff box; one draw per representative.
        for coords in box_points(dim, cutoff) {
            let a = LatticePoint::new(&coords)?;
            if !is_pair_representative(&a) {
                continue;
            }
            let draw: f64 = rng.gen_range(-0.5..=0.5);
            let norm = (a.norm_sq() as f64).sqrt();
            let v = amplitude * (1.0 + norm).powf(-m) * draw;
            coeffs.insert(a, v);
            if !a.is_origin() {
                coeffs.insert(a.neg(), v);
            }
        }
        Ok(Self {
            dim,
            decay_m: m,
            amplitude_r: amplitude,
            cutoff,
            seed: Some(seed),
            coeffs,
        })
    }

    /// Builds a potential from explicit coefficients, checking the envelope,
    /// mirror symmetry and truncation invariants.
    pub fn from_coefficients(
        dim: usize,
        m: f64,
        amplitude: f64,
        cutoff: i64,
        seed: Option<u64>,
        coeffs: BTreeMap<LatticePoint, f64>,
    ) -> Result<Self> {
        validate_measure_params(dim, m, amplitude, cutoff)?;
        for (a, &v) in &coeffs {
            if a.dim() != dim {
                return Err(Error::InvalidParameter(format!(
                    "coefficient at {a} has dimension {} != {dim}",
                    a.dim()
                )));
            }
            if a.coords().iter().any(|c| c.abs() > cutoff) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient at {a} lies outside the cutoff box A = {cutoff}"
                )));
            }
            let norm = (a.norm_sq() as f64).sqrt();
            let envelope = amplitude * (1.0 + norm).powf(-m) / 2.0;
            if v.abs() > envelope * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient {v} at {a} violates the envelope {envelope}"
                )));
            }
            let mirrored = coeffs.get(&a.neg()).copied();
            if mirrored != Some(v) {
                return Err(Error::InvalidParameter(format!(
                    "coefficients are not even: v at {a} is {v}, at {} is {mirrored:?}",
                    a.neg()
                )));
            }
        }
        Ok(Self {
            dim,
            decay_m: m,
            amplitude_r: amplitude,
            cutoff,
            seed,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decay_exponent(&self) -> f64 {
        self.decay_m
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude_r
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn coefficients(&self) -> &BTreeMap<LatticePoint, f64> {
        &self.coeffs
    }

    /// v_a, zero outside the cutoff box.
    pub fn coefficient(&self, a: &LatticePoint) -> f64 {
        self.coeffs.get(a).copied().unwrap_or(0.0)
    }

    /// lambda_p = -|p|^2 + v_p.
    pub fn eigenvalue(&self, p: &LatticePoint) -> f64 {
        -(p.norm_sq() as f64) + self.coefficient(p)
    }

    /// All coefficients scaled by `factor`; the envelope amplitude scales
    /// along so the measure-space invariant is preserved.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor {factor} must be finite"
            )));
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(a, v)| (*a, v * factor))
            .collect();
        Self::from_coefficients(
            self.dim,
            self.decay_m,
            self.amplitude_r * factor.abs(),
            self.cutoff,
            None,
            coeffs,
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        let repr = PotentialRepr {
            d: self.dim,
            m: self.decay_m,
            amplitude: self.amplitude_r,
            cutoff: self.cutoff,
            seed: self.seed,
            coefficients: self
                .coeffs
                .iter()
                .map(|(a, v)| (a.coords().to_vec(), *v))
                .collect(),
        };
        serde_json::to_value(repr).expect("potential serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let repr: PotentialRepr = serde_json::from_value(value.clone())?;
        let mut coeffs = BTreeMap::new();
        for (coords, v) in repr.coefficients {
            coeffs.insert(LatticePoint::new(&coords)?, v);
        }
        Self::from_coefficients(repr.d, repr.m, repr.amplitude, repr.cutoff, repr.seed, coeffs)
    }
}

fn validate_measure_params(dim: usize, m: f64, amplitude: f64, cutoff: i64) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "dimension must be in 1..={MAX_DIM}, got {dim}"
        )));
    }
    if !(m > dim as f64 / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "decay exponent m = {m} must exceed d/2 = {}",
            dim as f64 / 2.0
        )));
    }
    // R = 0 is admitted as the explicit V = 0 degeneration.
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "amplitude R = {amplitude} must be nonnegative"
        )));
    }
    if cutoff < 0 {
        return Err(Error::InvalidParameter(format!(
            "cutoff A = {cutoff} must be nonnegative"
        )));
    }
    Ok(())
}

/// Representative of the pair {a, -a}: the first nonzero coordinate is
/// positive (the origin represents itself).
fn is_pair_representative(a: &LatticePoint) -> bool {
    for &c in a.coords() {
        if c > 0 {
            return true;
        }
        if c < 0 {
            return false;
        }
    }
    true
}

/// All points of the box max|a_i| <= cutoff, in lexicographic order.
fn box_points(dim: usize, cutoff: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * (2 * cutoff as usize + 1));
        for base in &out {
            for c in -cutoff..=cutoff {
                let mut v = base.clone();
                v.push(c);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// The phase difference omega = lambda_p - lambda_q + lambda_r - lambda_s.
///
/// The integer part -|p|^2 + |q|^2 - |r|^2 + |s|^2 is computed exactly in
/// integers before the potential terms are added.
pub fn omega(
    potential: &Potential,
    p: &LatticePoint,
    q: &LatticePoint,
    r: &LatticePoint,
    s: &LatticePoint,
) -> f64 {
    let integer_part = -p.norm_sq() + q.norm_sq() - r.norm_sq() + s.norm_sq();
    integer_part as f64 + potential.coefficient(p) - potential.coefficient(q)
        + potential.coefficient(r)
        - potential.coefficient(s)
}

/// Third largest of |p|, |q|, |r|, |s|; ties resolved by multiplicity.
pub fn nu3(p: &LatticePoint, q: &LatticePoint, r: &LatticePoint, s: &LatticePoint) -> f64 {
    let mut norms = [p.norm_sq(), q.norm_sq(), r.norm_sq(), s.norm_sq()];
    norms.sort_unstable_by(|a, b| b.cmp(a));
    (norms[2] as f64).sqrt()
}

/// Zero-momentum test p - q + r - s = 0, componentwise in integers.
pub fn has_zero_momentum(
    p: &LatticePoint,
    q: &LatticePoint,
    r: &LatticePoint,
    s: &LatticePoint,
) -> bool {
    let d = p.dim();
    (0..d).all(|i| p.coords()[i] - q.coords()[i] + r.coords()[i] - s.coords()[i] == 0)
}

/// Exact multiset test {|p|^2, |r|^2} == {|q|^2, |s|^2} on a zero-momentum
/// quadruple. Rejects quadruples with nonzero momentum (caller bug).
pub fn is_resonant(
    p: &LatticePoint,
    q: &LatticePoint,
    r: &LatticePoint,
    s: &LatticePoint,
) -> Result<bool> {
    if !has_zero_momentum(p, q, r, s) {
        return Err(Error::NonzeroMomentum(format!("({p},{q},{r},{s})")));
    }
    Ok(resonant_unchecked(p, q, r, s))
}

/// Multiset test without the momentum precondition (hot-loop use on
/// quadruples already known to lie in the momentum set).
#[inline]
pub fn resonant_unchecked(
    p: &LatticePoint,
    q: &LatticePoint,
    r: &LatticePoint,
    s: &LatticePoint,
) -> bool {
    let (a, b) = minmax(p.norm_sq(), r.norm_sq());
    let (c, d) = minmax(q.norm_sq(), s.norm_sq());
    a == c && b == d
}

#[inline]
fn minmax(a: i64, b: i64) -> (i64, i64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// An ordered zero-momentum quadruple with its cached phase and resonance
/// classification for a given potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadruple {
    pub p: LatticePoint,
    pub q: LatticePoint,
    pub r: LatticePoint,
    pub s: LatticePoint,
    pub omega: f64,
    pub resonant: bool,
}

impl Quadruple {
    pub fn classify(
        potential: &Potential,
        p: LatticePoint,
        q: LatticePoint,
        r: LatticePoint,
        s: LatticePoint,
    ) -> Result<Self> {
        let resonant = is_resonant(&p, &q, &r, &s)?;
        Ok(Self {
            p,
            q,
            r,
            s,
            omega: omega(potential, &p, &q, &r, &s),
            resonant,
        })
    }

    pub fn points(&self) -> [LatticePoint; 4] {
        [self.p, self.q, self.r, self.s]
    }

    pub fn nu3(&self) -> f64 {
        nu3(&self.p, &self.q, &self.r, &self.s)
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.p, self.q, self.r, self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(coords: &[i64]) -> LatticePoint {
        LatticePoint::new(coords).unwrap()
    }

    #[test]
    fn norm_sq_matches_coords() {
        assert_eq!(pt(&[2, 1]).norm_sq(), 5);
        assert_eq!(pt(&[-3, 4]).norm_sq(), 25);
        assert_eq!(pt(&[0]).norm_sq(), 0);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(LatticePoint::new(&[]).is_err());
        assert!(LatticePoint::new(&[1, 2, 3, 4, 5]).is_err());
    }

    #[test]
    fn zero_amplitude_forces_zero_potential() {
        // R = 0 draws collapse to v_a = 0 regardless of the seed.
        let v = Potential::sample(1, 1.0, 0.0, 2, 99).unwrap();
        for a in v.coefficients().values() {
            assert_eq!(*a, 0.0);
        }
        assert_eq!(v.coefficient(&pt(&[1])), 0.0);
        assert_eq!(v.coefficient(&pt(&[-2])), 0.0);
    }

    #[test]
    fn sample_respects_envelope_and_evenness() {
        let v = Potential::sample(1, 1.0, 1.0, 1, 42).unwrap();
        let v1 = v.coefficient(&pt(&[1]));
        assert!(v1.abs() <= 0.25);
        assert_eq!(v.coefficient(&pt(&[-1])), v1);
        assert_eq!(v.coefficient(&pt(&[7])), 0.0);
    }

    #[test]
    fn sample_is_deterministic_in_seed() {
        let a = Potential::sample(2, 2.0, 1.0, 3, 7).unwrap();
        let b = Potential::sample(2, 2.0, 1.0, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = Potential::sample(2, 2.0, 1.0, 3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_rejects_out_of_range_measure_params() {
        assert!(Potential::sample(2, 1.0, 1.0, 3, 0).is_err()); // m <= d/2
        assert!(Potential::sample(2, 2.0, -1.0, 3, 0).is_err()); // R < 0
    }

    #[test]
    fn eigenvalue_examples() {
        let v0 = Potential::zero(2).unwrap();
        assert_eq!(v0.eigenvalue(&pt(&[2, 1])), -5.0);

        let mut coeffs = BTreeMap::new();
        coeffs.insert(pt(&[1]), 0.25);
        coeffs.insert(pt(&[-1]), 0.25);
        let v = Potential::from_coefficients(1, 1.0, 1.0, 1, None, coeffs).unwrap();
        assert_eq!(v.eigenvalue(&pt(&[1])), -0.75);

        let mut coeffs = BTreeMap::new();
        coeffs.insert(pt(&[0]), -0.5);
        let v = Potential::from_coefficients(1, 1.0, 1.0, 0, None, coeffs).unwrap();
        assert_eq!(v.eigenvalue(&pt(&[0])), -0.5);
    }

    #[test]
    fn omega_examples() {
        let v0 = Potential::zero(2).unwrap();
        assert_eq!(
            omega(&v0, &pt(&[1, 0]), &pt(&[0, 1]), &pt(&[0, 1]), &pt(&[1, 0])),
            0.0
        );
        let v0 = Potential::zero(1).unwrap();
        assert_eq!(omega(&v0, &pt(&[2]), &pt(&[1]), &pt(&[0]), &pt(&[1])), -2.0);

        // General V: -2 + v_2 - 2 v_1 + v_0.
        let mut coeffs = BTreeMap::new();
        for (c, v) in [(0i64, 0.11), (1, 0.07), (-1, 0.07), (2, -0.03), (-2, -0.03)] {
            coeffs.insert(pt(&[c]), v);
        }
        let v = Potential::from_coefficients(1, 1.0, 1.0, 2, None, coeffs).unwrap();
        let expected = -2.0 + (-0.03) - 2.0 * 0.07 + 0.11;
        let got = omega(&v, &pt(&[2]), &pt(&[1]), &pt(&[0]), &pt(&[1]));
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn nu3_examples() {
        assert_eq!(nu3(&pt(&[3]), &pt(&[2]), &pt(&[1]), &pt(&[0])), 1.0);
        assert_eq!(nu3(&pt(&[1]), &pt(&[1]), &pt(&[1]), &pt(&[1])), 1.0);
        assert_eq!(
            nu3(&pt(&[3, 4]), &pt(&[0, 5]), &pt(&[1, 0]), &pt(&[0, 0])),
            1.0
        );
    }

    #[test]
    fn resonance_examples() {
        // Diagonal pairing (p, p, r, r).
        let p = pt(&[2, -1]);
        let r = pt(&[0, 3]);
        assert!(is_resonant(&p, &p, &r, &r).unwrap());

        // Zero momentum but unequal multisets.
        assert!(!is_resonant(&pt(&[1, 0]), &pt(&[0, 0]), &pt(&[0, 1]), &pt(&[1, 1])).unwrap());

        // Rectangle with squared norms {1, 5} on both sides.
        assert!(is_resonant(&pt(&[1, 0]), &pt(&[-1, 0]), &pt(&[-1, 2]), &pt(&[1, 2])).unwrap());

        // Nonzero momentum is a caller bug.
        assert!(is_resonant(&pt(&[1, 0]), &pt(&[0, 0]), &pt(&[0, 0]), &pt(&[0, 0])).is_err());
    }

    #[test]
    fn omega_vanishes_on_paired_quadruples() {
        let v = Potential::sample(2, 2.0, 1.0, 3, 11).unwrap();
        let p = pt(&[1, 2]);
        let r = pt(&[-3, 0]);
        assert_eq!(omega(&v, &p, &p, &r, &r), 0.0);
        assert_eq!(omega(&v, &p, &r, &r, &p), 0.0);
    }

    #[test]
    fn potential_json_roundtrip_is_bit_exact() {
        let v = Potential::sample(2, 2.0, 1.0, 4, 123).unwrap();
        let json = v.to_json();
        let text = serde_json::to_string(&json).unwrap();
        let back = Potential::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(v, back);
        for (a, val) in v.coefficients() {
            assert_eq!(back.coefficient(a).to_bits(), val.to_bits());
        }
    }
}
