//! Point measures on the punctured line and the statistics used to compare
//! them: counts in half-open intervals, hat-function Laplace functionals,
//! Kolmogorov-Smirnov distances and order statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite multiset of `(location, multiplicity)` atoms.
///
/// Canonical form: locations sorted ascending, duplicates merged, every
/// multiplicity at least one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    atoms: Vec<(f64, u64)>,
}

impl PointMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds the canonical form. Zero multiplicities are dropped; non-finite
    /// locations are rejected.
    pub fn from_weighted<I>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, u64)>,
    {
        let mut raw: Vec<(f64, u64)> = atoms.into_iter().filter(|&(_, m)| m > 0).collect();
        if let Some(&(x, _)) = raw.iter().find(|(x, _)| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite location {x}")));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, u64)> = Vec::with_capacity(raw.len());
        for (x, m) in raw {
            match atoms.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => atoms.push((x, m)),
            }
        }
        Ok(Self { atoms })
    }

    /// Unit-multiplicity atoms at each location.
    pub fn from_points<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        Self::from_weighted(points.into_iter().map(|x| (x, 1)))
    }

    pub fn atoms(&self) -> &[(f64, u64)] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> u64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }

    pub fn max_location(&self) -> Option<f64> {
        self.atoms.last().map(|&(x, _)| x)
    }

    /// Total multiplicity with location in `(lo, hi]`.
    pub fn counts_in(&self, lo: f64, hi: f64) -> u64 {
        debug_assert!(lo < hi);
        let start = self.atoms.partition_point(|&(x, _)| x <= lo);
        let end = self.atoms.partition_point(|&(x, _)| x <= hi);
        self.atoms[start..end].iter().map(|&(_, m)| m).sum()
    }

    /// Total multiplicity strictly above `x`.
    pub fn counts_above(&self, x: f64) -> u64 {
        self.counts_in(x, f64::INFINITY)
    }

    /// `Σ multiplicity · f(location)`.
    pub fn integrate(&self, f: &HatFunction) -> f64 {
        self.atoms.iter().map(|&(x, m)| m as f64 * f.eval(x)).sum()
    }

    /// `exp(-∫ f dN)`.
    pub fn laplace_at(&self, f: &HatFunction) -> f64 {
        (-self.integrate(f)).exp()
    }

    /// The scaling operator: every location multiplied by `b > 0`.
    pub fn scaled(&self, b: f64) -> Self {
        assert!(b > 0.0, "scale factor must be positive");
        Self {
            atoms: self.atoms.iter().map(|&(x, m)| (x * b, m)).collect(),
        }
    }

    /// Superposition.
    pub fn merged(&self, other: &Self) -> Self {
        Self::from_weighted(self.atoms.iter().chain(other.atoms.iter()).copied())
            .expect("canonical measures have finite locations")
    }

    /// The `k` largest locations, each repeated by its multiplicity.
    pub fn order_statistics(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k);
        for &(x, m) in self.atoms.iter().rev() {
            for _ in 0..m {
                if out.len() == k {
                    return out;
                }
                out.push(x);
            }
        }
        out
    }

    /// Atoms with `|location| > threshold`.
    pub fn restricted_above(&self, threshold: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .filter(|(x, _)| x.abs() > threshold)
                .copied()
                .collect(),
        }
    }
}

/// `f(x) = height · clamp((|x| − ζ)/ζ, 0, 1)`: continuous, bounded, zero on
/// `|x| ≤ ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatFunction {
    zeta: f64,
    height: f64,
}

impl HatFunction {
    pub fn new(zeta: f64, height: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::InvalidParameter(format!("hat cutoff must be positive, got {zeta}")));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidParameter(format!("hat height must be positive, got {height}")));
        }
        Ok(Self { zeta, height })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.height * ((x.abs() - self.zeta) / self.zeta).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic by sorted merge. Ties are
/// consumed together on both sides before the distance is taken.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF, checked on both
/// sides of every jump of the empirical CDF.
pub fn ks_vs_cdf<F>(samples: &[f64], cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(!samples.is_empty(), "KS needs a nonempty sample");
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let below = i as f64 / n;
        while i < xs.len() && xs[i] == x {
            i += 1;
        }
        let at = i as f64 / n;
        let f = cdf(x);
        d = d.max((at - f).abs()).max((f - below).abs());
    }
    d
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total-variation distance between an empirical histogram and a pmf on
/// the same (finite) index set.
pub fn total_variation(counts: &[u64], pmf: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let len = counts.len().max(pmf.len());
    (0..len)
        .map(|i| {
            let p = pmf.get(i).copied().unwrap_or(0.0);
            let q = counts.get(i).copied().unwrap_or(0) as f64 / total as f64;
            (p - q).abs()
        })
        .sum::<f64>()
        / 2.0
}
