//! Preference grids, bracketing and per-episode preference schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::check_beta;

/// Grid membership tolerance, so `0.3` matches `3.0 / 10.0`.
pub const GRID_TOL: f64 = 1e-12;

/// Strictly increasing anchor preferences, always containing 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceGrid {
    values: Vec<f64>,
}

impl PreferenceGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {}", values.len())));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::InvalidGrid("grid must start at 0 and end at 1".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        Ok(PreferenceGrid { values })
    }

    /// `points` equally spaced anchors `i / (points - 1)`.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {points}")));
        }
        let last = (points - 1) as f64;
        Self::new((0..points).map(|i| i as f64 / last).collect())
    }

    /// `{0, 1}`.
    pub fn coarse() -> Self {
        PreferenceGrid { values: vec![0.0, 1.0] }
    }

    /// `{0, 0.1, ..., 1}`.
    pub fn fine() -> Self {
        Self::uniform(11).expect("11 points is a valid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the grid point equal to `beta`, if any.
    pub fn position(&self, beta: f64) -> Option<usize> {
        self.values.iter().position(|&b| (b - beta).abs() <= GRID_TOL)
    }

    pub fn max_gap(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for PreferenceGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<PreferenceGrid> for Vec<f64> {
    fn from(grid: PreferenceGrid) -> Self {
        grid.values
    }
}

/// The two grid points around a preference and the interpolation weight of
/// the upper one. The interpolated table is `(1 - rho) * Q_lower + rho * Q_upper`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub rho: f64,
    pub lower_index: usize,
    pub upper_index: usize,
}

impl Bracket {
    pub fn is_exact(&self) -> bool {
        self.lower_index == self.upper_index
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn bracket(grid: &PreferenceGrid, beta: f64) -> Result<Bracket> {
    check_beta(beta)?;
    if let Some(i) = grid.position(beta) {
        let b = grid.values[i];
        return Ok(Bracket { lower: b, upper: b, rho: 1.0, lower_index: i, upper_index: i });
    }
    // First grid point above beta; exists because the grid ends at 1.
    let upper_index = grid.values.partition_point(|&b| b < beta);
    let lower_index = upper_index - 1;
    let lower = grid.values[lower_index];
    let upper = grid.values[upper_index];
    Ok(Bracket { lower, upper, rho: (beta - lower) / (upper - lower), lower_index, upper_index })
}

/// Per-episode preference generator.
#[derive(Clone, Debug, PartialEq)]
pub enum PreferenceSchedule {
    Constant(f64),
    /// `values[(episode / period) % values.len()]`.
    PeriodicStep {
        values: Vec<f64>,
        period: usize,
    },
    /// A fresh draw per episode, reproducible from `seed` and addressable by
    /// episode index. Draws uniformly on `[0, 1]`, or uniformly over `over`
    /// when given.
    PerEpisodeRandom {
        seed: u64,
        over: Option<Vec<f64>>,
    },
}

impl PreferenceSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            PreferenceSchedule::Constant(b) => check_beta(*b).map(drop),
            PreferenceSchedule::PeriodicStep { values, period } => {
                if values.is_empty() || *period == 0 {
                    return Err(Error::Config("periodic schedule needs values and a positive period".into()));
                }
                values.iter().try_for_each(|&b| check_beta(b).map(drop))
            }
            PreferenceSchedule::PerEpisodeRandom { over, .. } => match over {
                Some(v) if v.is_empty() => Err(Error::Config("random schedule over an empty set".into())),
                Some(v) => v.iter().try_for_each(|&b| check_beta(b).map(drop)),
                None => Ok(()),
            },
        }
    }
}

pub fn schedule_beta(schedule: &PreferenceSchedule, episode_index: usize) -> f64 {
    match schedule {
        PreferenceSchedule::Constant(b) => *b,
        PreferenceSchedule::PeriodicStep { values, period } => values[(episode_index / period) % values.len()],
        PreferenceSchedule::PerEpisodeRandom { seed, over } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(episode_index as u64);
            match over {
                Some(values) => values[rng.gen_range(0..values.len())],
                None => rng.gen::<f64>(),
            }
        }
    }
}

/// Default ten-step sequence for the periodic experiments.
pub fn default_periodic_values() -> Vec<f64> {
    vec![0.5, 0.1, 0.7, 0.3, 0.9, 0.4, 0.2, 0.8, 0.6, 0.5]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(PreferenceGrid::new(vec![0.0]).is_err());
        assert!(PreferenceGrid::new(vec![0.1, 1.0]).is_err());
        assert!(PreferenceGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(PreferenceGrid::new(vec![0.0, 0.9]).is_err());
        assert_eq!(PreferenceGrid::fine().len(), 11);
        assert_eq!(PreferenceGrid::fine().values()[3], 0.3);
    }

    #[test]
    fn bracket_examples() {
        let g = PreferenceGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let b = bracket(&g, 0.25).unwrap();
        assert_eq!((b.lower, b.upper, b.rho), (0.0, 0.5, 0.5));
        let b = bracket(&g, 0.5).unwrap();
        assert_eq!((b.lower, b.upper, b.rho), (0.5, 0.5, 1.0));
        assert!(b.is_exact());

        let b = bracket(&PreferenceGrid::fine(), 0.37).unwrap();
        assert_eq!((b.lower, b.upper), (0.3, 0.4));
        // independent arithmetic: (0.37 - 0.3) / 0.1
        assert!((b.rho - 0.7).abs() < 1e-12);

        assert!(bracket(&g, -0.1).is_err());
        assert!(bracket(&g, 1.1).is_err());
        let b = bracket(&g, 1.0).unwrap();
        assert_eq!(b.upper_index, 2);
    }

    #[test]
    fn schedules() {
        let s = PreferenceSchedule::PeriodicStep { values: vec![0.9, 0.1, 0.5], period: 1000 };
        assert_eq!(schedule_beta(&s, 1500), 0.1);
        assert_eq!(schedule_beta(&s, 3000), 0.9);
        assert_eq!(schedule_beta(&PreferenceSchedule::Constant(0.3), 12345), 0.3);

        let r = PreferenceSchedule::PerEpisodeRandom { seed: 7, over: None };
        let a: Vec<f64> = (0..50).map(|m| schedule_beta(&r, m)).collect();
        let b: Vec<f64> = (0..50).map(|m| schedule_beta(&r, m)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|b| (0.0..=1.0).contains(b)));
        assert!(a.windows(2).any(|w| w[0] != w[1]));

        let g = PreferenceSchedule::PerEpisodeRandom { seed: 7, over: Some(vec![0.0, 0.5, 1.0]) };
        assert!((0..50).all(|m| [0.0, 0.5, 1.0].contains(&schedule_beta(&g, m))));
    }

    #[test]
    fn default_sequence_matches_recoverable_points() {
        let v = default_periodic_values();
        assert_eq!(v.len(), 10);
        assert_eq!(v[1], 0.1);
        assert_eq!(v[6], 0.2);
    }
}
