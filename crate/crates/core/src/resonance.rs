//! Enumeration of the zero-momentum set and of the resonant set restricted
//! to a lattice ball, and the rectangle geometry of resonant quadruples.
//!
//! The resonant enumeration buckets ordered pairs (u, v) by the exact key
//! (u + v, sorted {|u|^2, |v|^2}); every cross product of two pairs sharing
//! a key is a resonant quadruple. This is O(B^2) pair work instead of the
//! O(B^3) triple loop, with zero false positives since keys are exact
//! integers.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{
    has_zero_momentum, resonant_unchecked, LatticePoint, Potential, Quadruple,
};

/// The lattice ball {p in Z^d : |p|^2 <= P^2}, with points in lexicographic
/// order and an exact point -> index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ball {
    dim: usize,
    radius_sq: i64,
    points: Vec<LatticePoint>,
    index: HashMap<LatticePoint, u32>,
}

impl Ball {
    pub fn new(dim: usize, radius_sq: i64) -> Result<Self> {
        if radius_sq < 0 {
            return Err(Error::InvalidParameter(format!(
                "ball radius P^2 = {radius_sq} must be nonnegative"
            )));
        }
        let radius = (radius_sq as f64).sqrt().floor() as i64;
        let mut points = Vec::new();
        let mut partial = vec![vec![]];
        for _ in 0..dim {
            let mut next = Vec::new();
            for base in &partial {
                for c in -radius..=radius {
                    let mut v: Vec<i64> = base.clone();
                    v.push(c);
                    next.push(v);
                }
            }
            partial = next;
        }
        for coords in partial {
            let p = LatticePoint::new(&coords)?;
            if p.norm_sq() <= radius_sq {
                points.push(p);
            }
        }
        points.sort_unstable();
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, i as u32))
            .collect();
        Ok(Self {
            dim,
            radius_sq,
            points,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius_sq(&self) -> i64 {
        self.radius_sq
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn point(&self, idx: u32) -> LatticePoint {
        self.points[idx as usize]
    }

    pub fn index_of(&self, p: &LatticePoint) -> Option<u32> {
        self.index.get(p).copied()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        p.norm_sq() <= self.radius_sq && p.dim() == self.dim
    }
}

/// Visits every ordered quadruple (p, q, r, s) of the momentum set with all
/// four points in the ball, in lexicographic order of (q, r, s).
pub fn for_each_momentum_quadruple<F>(ball: &Ball, mut f: F)
where
    F: FnMut(LatticePoint, LatticePoint, LatticePoint, LatticePoint),
{
    for q in ball.points() {
        for r in ball.points() {
            let qr = q.sub(r);
            for s in ball.points() {
                let p = qr.add(s);
                if ball.contains(&p) {
                    f(p, *q, *r, *s);
                }
            }
        }
    }
}

/// Collects the momentum set as classified quadruples (test- and CLI-scale).
pub fn enumerate_momentum_set(
    potential: &Potential,
    radius_sq: i64,
    dim: usize,
) -> Result<Vec<Quadruple>> {
    let ball = Ball::new(dim, radius_sq)?;
    let mut out = Vec::new();
    let mut err = None;
    for_each_momentum_quadruple(&ball, |p, q, r, s| {
        if err.is_some() {
            return;
        }
        match Quadruple::classify(potential, p, q, r, s) {
            Ok(quad) => out.push(quad),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// The complete resonant set over a ball, stored as a fiber decomposition:
/// for every target p, the list of (q, r, s) completing a resonant ordered
/// quadruple (p, q, r, s).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadrupleIndex {
    ball: Arc<Ball>,
    /// CSR offsets into `triples`, one slice per ball point (target p).
    offsets: Vec<usize>,
    /// Packed (q, r, s) ball indices.
    triples: Vec<[u32; 3]>,
}

impl QuadrupleIndex {
    /// Pair-bucket enumeration of the resonant set over the ball.
    pub fn build(dim: usize, radius_sq: i64) -> Result<Self> {
        let ball = Arc::new(Ball::new(dim, radius_sq)?);
        Ok(Self::build_over(ball))
    }

    pub fn build_over(ball: Arc<Ball>) -> Self {
        type Key = ([i64; 4], (i64, i64));
        let n = ball.len();
        let mut buckets: HashMap<Key, Vec<(u32, u32)>> = HashMap::new();
        for (i, u) in ball.points().iter().enumerate() {
            for (j, v) in ball.points().iter().enumerate() {
                let sum = u.add(v);
                let mut coords = [0i64; 4];
                coords[..u.dim()].copy_from_slice(sum.coords());
                let (lo, hi) = if u.norm_sq() <= v.norm_sq() {
                    (u.norm_sq(), v.norm_sq())
                } else {
                    (v.norm_sq(), u.norm_sq())
                };
                buckets
                    .entry((coords, (lo, hi)))
                    .or_default()
                    .push((i as u32, j as u32));
            }
        }
        // (p, r) and (q, s) pairs sharing a key: p + r = q + s gives zero
        // momentum, equal sorted squared-norm pairs give the multiset test.
        let mut adjacency: Vec<Vec<[u32; 3]>> = vec![Vec::new(); n];
        for pairs in buckets.values() {
            for &(p, r) in pairs {
                for &(q, s) in pairs {
                    adjacency[p as usize].push([q, r, s]);
                }
            }
        }
        // Canonical order per fiber, independent of bucket iteration order.
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut triples = Vec::new();
        for list in &mut adjacency {
            list.sort_unstable();
            triples.extend_from_slice(list);
            offsets.push(triples.len());
        }
        Self {
            ball,
            offsets,
            triples,
        }
    }

    pub fn ball(&self) -> &Arc<Ball> {
        &self.ball
    }

    pub fn dim(&self) -> usize {
        self.ball.dim()
    }

    pub fn radius_sq(&self) -> i64 {
        self.ball.radius_sq()
    }

    /// Total number of ordered resonant quadruples.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// The (q, r, s) fiber over target index `p`.
    pub fn fiber(&self, p: u32) -> &[[u32; 3]] {
        &self.triples[self.offsets[p as usize]..self.offsets[p as usize + 1]]
    }

    /// Iterates all ordered quadruples as ball indices (p, q, r, s).
    pub fn iter_indices(&self) -> impl Iterator<Item = [u32; 4]> + '_ {
        (0..self.ball.len() as u32).flat_map(move |p| {
            self.fiber(p)
                .iter()
                .map(move |&[q, r, s]| [p, q, r, s])
        })
    }

    /// Iterates all ordered quadruples as lattice points.
    pub fn iter_points(&self) -> impl Iterator<Item = [LatticePoint; 4]> + '_ {
        self.iter_indices().map(move |[p, q, r, s]| {
            [
                self.ball.point(p),
                self.ball.point(q),
                self.ball.point(r),
                self.ball.point(s),
            ]
        })
    }

    /// Writes the versioned binary cache: header (magic, version, d, P^2,
    /// point and quadruple counts), then packed point coordinates, CSR
    /// offsets and triples, all little-endian.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&self.radius_sq().to_le_bytes())?;
        w.write_all(&(self.ball.len() as u64).to_le_bytes())?;
        w.write_all(&(self.triples.len() as u64).to_le_bytes())?;
        for p in self.ball.points() {
            for &c in p.coords() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        for &off in &self.offsets {
            w.write_all(&(off as u64).to_le_bytes())?;
        }
        for t in &self.triples {
            for &i in t {
                w.write_all(&i.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::CorruptCache("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(Error::CorruptCache(format!(
                "unsupported version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        let radius_sq = read_i64(&mut r)?;
        let n_points = read_u64(&mut r)? as usize;
        let n_triples = read_u64(&mut r)? as usize;
        let ball = Arc::new(Ball::new(dim, radius_sq)?);
        if ball.len() != n_points {
            return Err(Error::CorruptCache(format!(
                "ball size {} does not match header {n_points}",
                ball.len()
            )));
        }
        for p in ball.points() {
            for &c in p.coords() {
                if read_i64(&mut r)? != c {
                    return Err(Error::CorruptCache("point table mismatch".into()));
                }
            }
        }
        let mut offsets = Vec::with_capacity(n_points + 1);
        for _ in 0..=n_points {
            offsets.push(read_u64(&mut r)? as usize);
        }
        if offsets.last() != Some(&n_triples) {
            return Err(Error::CorruptCache("offset table mismatch".into()));
        }
        let mut triples = Vec::with_capacity(n_triples);
        for _ in 0..n_triples {
            let q = read_u32(&mut r)?;
            let rr = read_u32(&mut r)?;
            let s = read_u32(&mut r)?;
            if q as usize >= n_points || rr as usize >= n_points || s as usize >= n_points {
                return Err(Error::CorruptCache("triple index out of range".into()));
            }
            triples.push([q, rr, s]);
        }
        Ok(Self {
            ball,
            offsets,
            triples,
        })
    }

    pub fn write_cache_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_cache(std::io::BufWriter::new(file))
    }

    pub fn read_cache_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_cache(std::io::BufReader::new(file))
    }
}

const CACHE_MAGIC: &[u8; 4] = b"WGQI";
const CACHE_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

/// Exact-integer rectangle test for a resonant quadruple: zero momentum
/// (parallelogram), orthogonality (p - q) . (q - r) = 0, and the bisector
/// condition |p|^2 = |q|^2 or |q|^2 = |r|^2.
pub fn verify_rectangle(quad: &Quadruple) -> Result<bool> {
    if !has_zero_momentum(&quad.p, &quad.q, &quad.r, &quad.s) {
        return Err(Error::NonzeroMomentum(quad.to_string()));
    }
    if !resonant_unchecked(&quad.p, &quad.q, &quad.r, &quad.s) {
        return Err(Error::NotResonant(quad.to_string()));
    }
    let edge1 = quad.p.sub(&quad.q);
    let edge2 = quad.q.sub(&quad.r);
    let orthogonal = edge1.dot(&edge2) == 0;
    let bisected =
        quad.p.norm_sq() == quad.q.norm_sq() || quad.q.norm_sq() == quad.r.norm_sq();
    Ok(orthogonal && bisected)
}

/// Brute-force resonant enumeration (oracle for the pair-bucket index).
pub fn enumerate_gamma0_bruteforce(dim: usize, radius_sq: i64) -> Result<Vec<[LatticePoint; 4]>> {
    let ball = Ball::new(dim, radius_sq)?;
    let mut out = Vec::new();
    for_each_momentum_quadruple(&ball, |p, q, r, s| {
        if resonant_unchecked(&p, &q, &r, &s) {
            out.push([p, q, r, s]);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn momentum_set_counts() {
        let v = Potential::zero(1).unwrap();
        let quads = enumerate_momentum_set(&v, 0, 1).unwrap();
        assert_eq!(quads.len(), 1);
        assert!(quads[0].p.is_origin());

        // d = 1, P^2 = 1: brute-force count over (q, r, s) in {-1,0,1}^3.
        let quads = enumerate_momentum_set(&v, 1, 1).unwrap();
        assert_eq!(quads.len(), 19);
        for quad in &quads {
            assert!(has_zero_momentum(&quad.p, &quad.q, &quad.r, &quad.s));
        }
    }

    #[test]
    fn gamma0_small_counts() {
        assert_eq!(QuadrupleIndex::build(1, 1).unwrap().len(), 15);
        assert_eq!(QuadrupleIndex::build(1, 0).unwrap().len(), 1);
        assert_eq!(QuadrupleIndex::build(2, 0).unwrap().len(), 1);
    }

    #[test]
    fn gamma0_matches_bruteforce() {
        for (dim, p2) in [(1, 4), (2, 2), (2, 5), (3, 2)] {
            let index = QuadrupleIndex::build(dim, p2).unwrap();
            let fast: BTreeSet<_> = index.iter_points().map(|q| q.map(|p| p)).collect();
            let slow: BTreeSet<_> = enumerate_gamma0_bruteforce(dim, p2)
                .unwrap()
                .into_iter()
                .collect();
            assert_eq!(fast, slow, "mismatch at d={dim}, P2={p2}");
        }
    }

    #[test]
    fn gamma0_closed_under_pair_swaps() {
        let index = QuadrupleIndex::build(2, 5).unwrap();
        let set: BTreeSet<[LatticePoint; 4]> = index.iter_points().collect();
        for [p, q, r, s] in &set {
            assert!(set.contains(&[*r, *q, *p, *s]));
            assert!(set.contains(&[*p, *s, *r, *q]));
            assert!(set.contains(&[*q, *p, *s, *r]));
        }
    }

    #[test]
    fn d1_resonances_are_trivial() {
        // In d = 1 every resonant quadruple has {p, r} = {q, s} as multisets.
        let index = QuadrupleIndex::build(1, 16).unwrap();
        for [p, q, r, s] in index.iter_points() {
            let mut pr = [p.coords()[0], r.coords()[0]];
            let mut qs = [q.coords()[0], s.coords()[0]];
            pr.sort_unstable();
            qs.sort_unstable();
            assert_eq!(pr, qs);
        }
    }

    #[test]
    fn gamma0_norm_sum_containment() {
        let index = QuadrupleIndex::build(2, 8).unwrap();
        for [p, q, r, s] in index.iter_points() {
            assert_eq!(p.norm_sq() + r.norm_sq(), q.norm_sq() + s.norm_sq());
        }
    }

    #[test]
    fn rectangle_examples() {
        let v = Potential::zero(2).unwrap();
        let pt = |c: &[i64]| LatticePoint::new(c).unwrap();

        let quad = Quadruple::classify(
            &v,
            pt(&[1, 0]),
            pt(&[-1, 0]),
            pt(&[-1, 2]),
            pt(&[1, 2]),
        )
        .unwrap();
        assert!(verify_rectangle(&quad).unwrap());

        // Degenerate rectangle (p, p, r, r).
        let quad =
            Quadruple::classify(&v, pt(&[2, 1]), pt(&[2, 1]), pt(&[0, 3]), pt(&[0, 3])).unwrap();
        assert!(verify_rectangle(&quad).unwrap());

        // Not resonant: rejected.
        let quad =
            Quadruple::classify(&v, pt(&[1, 0]), pt(&[0, 0]), pt(&[0, 1]), pt(&[1, 1])).unwrap();
        assert!(verify_rectangle(&quad).is_err());
    }

    #[test]
    fn every_enumerated_quadruple_is_a_rectangle() {
        let v = Potential::zero(2).unwrap();
        let index = QuadrupleIndex::build(2, 10).unwrap();
        for [p, q, r, s] in index.iter_points() {
            let quad = Quadruple::classify(&v, p, q, r, s).unwrap();
            assert!(verify_rectangle(&quad).unwrap(), "failed at {quad}");
        }
    }

    #[test]
    fn cache_roundtrip() {
        let index = QuadrupleIndex::build(2, 6).unwrap();
        let mut buf = Vec::new();
        index.write_cache(&mut buf).unwrap();
        let back = QuadrupleIndex::read_cache(buf.as_slice()).unwrap();
        assert_eq!(index, back);
        assert!(QuadrupleIndex::read_cache(&buf[..20]).is_err());
    }
}
