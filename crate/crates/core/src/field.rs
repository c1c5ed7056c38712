//! Stationary random capacity fields on the integer lattice and the
//! perforations they induce.
//!
//! Every site value is a pure function of `(seed, law, k)`: a counter-based
//! hash of the site turns into a uniform deviate, so boxes of any shape agree
//! on their overlap and lattice shifts act exactly.

use std::io::Write;

use crate::capacity::{radius_for_capacity, PExponent, Radius};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Marginal law of the i.i.d. site capacities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Constant(f64),
    Uniform { min: f64, max: f64 },
    /// `gamma` with probability `q`, otherwise 0.
    Bernoulli { q: f64, gamma: f64 },
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match *self {
            Law::Constant(g) if !ok(g) => Err(Error::config("law.gamma", format!("must be finite and >= 0, got {g}"))),
            Law::Uniform { min, max } if !(ok(min) && ok(max) && min <= max) => {
                Err(Error::config("law", format!("uniform bounds must satisfy 0 <= min <= max, got [{min}, {max}]")))
            }
            Law::Bernoulli { q, .. } if !(0.0..=1.0).contains(&q) => {
                Err(Error::config("law.q", format!("must lie in [0, 1], got {q}")))
            }
            Law::Bernoulli { gamma, .. } if !ok(gamma) => {
                Err(Error::config("law.gamma", format!("must be finite and >= 0, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Upper bound of the support.
    pub fn gamma_max(&self) -> f64 {
        match *self {
            Law::Constant(g) => g,
            Law::Uniform { max, .. } => max,
            Law::Bernoulli { gamma, .. } => gamma,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Constant(g) => g,
            Law::Uniform { min, max } => 0.5 * (min + max),
            Law::Bernoulli { q, gamma } => q * gamma,
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match *self {
            Law::Constant(g) => g,
            Law::Uniform { min, max } => min + (max - min) * u,
            Law::Bernoulli { q, gamma } => {
                if u < q {
                    gamma
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform deviate in `[0, 1)` attached to lattice site `k` under `seed`.
pub fn site_uniform(seed: u64, k: &[i64]) -> f64 {
    let mut h = splitmix64(seed ^ 0x5851_F42D_4C95_7F2D);
    for &c in k {
        h = splitmix64(h ^ (c as u64));
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inclusive integer box `lo <= k <= hi` in `Z^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::config("lattice_box", "corners must have the same positive dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::config("lattice_box", "box is empty"));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `{lo..=hi}^n`.
    pub fn cube(n: usize, lo: i64, hi: i64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a + 1) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        k.len() == self.dim() && k.iter().zip(self.lo.iter().zip(&self.hi)).all(|(c, (a, b))| a <= c && c <= b)
    }

    /// Position of `k` in the enumeration order (first coordinate fastest).
    pub fn index(&self, k: &[i64]) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let mut idx = 0usize;
        let mut stride = 1usize;
        for d in 0..self.dim() {
            idx += (k[d] - self.lo[d]) as usize * stride;
            stride *= (self.hi[d] - self.lo[d] + 1) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut idx: usize) -> Vec<i64> {
        let mut k = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let w = (self.hi[d] - self.lo[d] + 1) as usize;
            k.push(self.lo[d] + (idx % w) as i64);
            idx /= w;
        }
        k
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    pub fn translate(&self, by: &[i64]) -> Self {
        Self {
            lo: self.lo.iter().zip(by).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(by).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Capacity densities `γ(k)` on a lattice box.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityField<T> {
    pub lattice_box: LatticeBox,
    pub law: Law,
    pub seed: u64,
    /// Shift applied to the generator: `values[k] = γ(k + offset)`.
    pub offset: Vec<i64>,
    pub values: Vec<T>,
}

fn generate<T: Real>(law: &Law, seed: u64, offset: &[i64], k: &[i64]) -> T {
    let shifted: Vec<i64> = k.iter().zip(offset).map(|(a, b)| a + b).collect();
    T::lit(law.quantile(site_uniform(seed, &shifted)))
}

/// Samples the field on `lattice_box`.
pub fn sample_field<T: Real>(law: Law, seed: u64, lattice_box: LatticeBox) -> Result<CapacityField<T>> {
    law.validate()?;
    let offset = vec![0; lattice_box.dim()];
    let values = lattice_box.sites().map(|k| generate(&law, seed, &offset, &k)).collect();
    Ok(CapacityField { lattice_box, law, seed, offset, values })
}

/// The field `k ↦ γ(k + by)` on the same box.
pub fn shift_field<T: Real>(field: &CapacityField<T>, by: &[i64]) -> CapacityField<T> {
    let offset: Vec<i64> = field.offset.iter().zip(by).map(|(a, b)| a + b).collect();
    let values = field.lattice_box.sites().map(|k| generate(&field.law, field.seed, &offset, &k)).collect();
    CapacityField { lattice_box: field.lattice_box.clone(), law: field.law, seed: field.seed, offset, values }
}

impl<T: Real> CapacityField<T> {
    pub fn get(&self, k: &[i64]) -> Option<T> {
        self.lattice_box.index(k).map(|i| self.values[i])
    }

    /// The value the generator would produce at `k`, inside the box or not.
    pub fn generator_at(&self, k: &[i64]) -> T {
        generate(&self.law, self.seed, &self.offset, k)
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_count(self.values.len())
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.values.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_count(self.values.len())
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Writes `k1,…,kn,gamma` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.lattice_box.dim()).map(|d| format!("k{d}")).collect();
        header.push("gamma".into());
        w.write_record(&header)?;
        for (k, v) in self.lattice_box.sites().zip(&self.values) {
            let mut row: Vec<String> = k.iter().map(|c| c.to_string()).collect();
            row.push(format!("{v:e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Field sampled on `{0..=M}^n`, covering every lattice point of the closed
/// unit box at cell size `ε = 1/M`.
pub fn field_for_cells<T: Real>(law: Law, seed: u64, n: usize, cells: usize) -> Result<CapacityField<T>> {
    sample_field(law, seed, LatticeBox::cube(n, 0, cells as i64)?)
}

/// One hole `B_{radius}(ε k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hole<T> {
    pub site: Vec<i64>,
    pub center: Vec<T>,
    pub gamma: T,
    pub radius: Radius<T>,
}

/// The hole set `T_ε` inside the unit box.
#[derive(Debug, Clone, PartialEq)]
pub struct PerforationSpec<T> {
    pub eps: T,
    /// Number of cells per side, `1/ε`.
    pub cells: usize,
    pub pe: PExponent<T>,
    pub holes: Vec<Hole<T>>,
}

impl<T: Real> PerforationSpec<T> {
    pub fn empty(cells: usize, pe: PExponent<T>) -> Self {
        Self { eps: T::one() / T::from_count(cells), cells, pe, holes: Vec::new() }
    }

    /// Sum of the hole capacities, `Σ γ(k) ε^n`.
    pub fn total_capacity(&self) -> T {
        let scale = self.eps.powi(self.pe.n() as i32);
        self.holes.iter().map(|h| h.gamma * scale).sum()
    }
}

/// Converts `ε` to the integer number of cells per side.
pub fn cells_for_eps<T: Real>(eps: T) -> Result<usize> {
    if !(eps > T::zero()) {
        return Err(Error::domain(format!("cell size must be positive, got {eps}")));
    }
    let m = (T::one() / eps).round();
    if (m * eps - T::one()).abs() > T::lit(1e-6) || m < T::one() {
        return Err(Error::domain(format!("1/eps must be an integer, got eps = {eps}")));
    }
    Ok(m.to_usize().expect("cell count"))
}

/// Holes at the interior lattice points `εk`, `k ∈ {1..M-1}^n`, with `γ(k) > 0`.
pub fn holes_from_field<T: Real>(field: &CapacityField<T>, eps: T, pe: &PExponent<T>) -> Result<PerforationSpec<T>> {
    let cells = cells_for_eps(eps)?;
    let n = pe.n();
    if field.lattice_box.dim() != n {
        return Err(Error::domain("field dimension does not match n"));
    }
    let eps = T::one() / T::from_count(cells);
    let interior = LatticeBox::cube(n, 1, cells as i64 - 1);
    let mut holes = Vec::new();
    if let Ok(interior) = interior {
        for k in interior.sites() {
            let gamma = field
                .get(&k)
                .ok_or_else(|| Error::domain(format!("field does not cover lattice site {k:?}")))?;
            if gamma > T::zero() {
                let radius = radius_for_capacity(gamma, eps, pe)?;
                let center = k.iter().map(|&c| T::from_i64(c).expect("site") * eps).collect();
                holes.push(Hole { site: k, center, gamma, radius });
            }
        }
    }
    Ok(PerforationSpec { eps, cells, pe: *pe, holes })
}
