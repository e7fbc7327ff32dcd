use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance on `deficit + sum(mass) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// A non-increasing probability vector plus the mass of the blob (the
/// deficit): a continuum of species that individually have probability zero.
///
/// Serialized as `{"mass":[...],"deficit":x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPmf")]
pub struct OrderedPmf {
    mass: Vec<f64>,
    deficit: f64,
}

#[derive(Deserialize)]
struct RawPmf {
    mass: Vec<f64>,
    #[serde(default)]
    deficit: f64,
}

impl TryFrom<RawPmf> for OrderedPmf {
    type Error = crate::Error;

    fn try_from(raw: RawPmf) -> Result<Self> {
        OrderedPmf::new(raw.mass, raw.deficit)
    }
}

impl OrderedPmf {
    pub fn new(mass: Vec<f64>, deficit: f64) -> Result<Self> {
        if !deficit.is_finite() || !(-SUM_TOLERANCE..=1.0 + SUM_TOLERANCE).contains(&deficit) {
            return invalid(format!("deficit {deficit} outside [0, 1]"));
        }
        // Rounding residue from computing the deficit as one minus the mass.
        let deficit = deficit.clamp(0.0, 1.0);
        if let Some(bad) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return invalid(format!("mass entry {bad} is negative or not finite"));
        }
        if let Some(i) = mass.windows(2).position(|w| w[0] < w[1]) {
            return invalid(format!(
                "mass is not non-increasing at index {i}: {} < {}",
                mass[i],
                mass[i + 1]
            ));
        }
        let total = deficit + mass.iter().sum::<f64>();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("total probability {total} differs from 1"));
        }
        Ok(Self { mass, deficit })
    }

    /// A basic-model pmf (no blob) from masses that must already sum to one.
    pub fn proper(mass: Vec<f64>) -> Result<Self> {
        Self::new(mass, 0.0)
    }

    /// Normalizes arbitrary non-negative weights and sorts them decreasingly.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let mut mass = crate::partition::monotone_rearrange(weights)?;
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return invalid("weights sum to zero");
        }
        mass.iter_mut().for_each(|m| *m /= total);
        Ok(Self { mass, deficit: 0.0 })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Mass at 1-based species position `alpha`; zero past the end.
    pub fn at(&self, alpha: usize) -> f64 {
        if alpha == 0 {
            self.deficit
        } else {
            self.mass.get(alpha - 1).copied().unwrap_or(0.0)
        }
    }

    /// Coordinates over `{0, 1, ..., len}` with the blob first.
    pub fn with_blob_first(&self) -> Vec<f64> {
        std::iter::once(self.deficit)
            .chain(self.mass.iter().copied())
            .collect()
    }

    /// Number of strictly positive mass entries.
    pub fn support(&self) -> usize {
        self.mass.iter().take_while(|m| **m > 0.0).count()
    }

    /// Sum of masses strictly after position `r` (1-based), excluding the blob.
    pub fn tail_after(&self, r: usize) -> f64 {
        self.mass.iter().skip(r).rev().fold(0.0, |acc, m| acc + m)
    }
}

/// L1 distance between two mass vectors after zero-padding to a common length.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs())
        .sum()
}

/// Sup-norm distance between two mass vectors after zero-padding.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}
