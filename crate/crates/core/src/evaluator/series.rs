use serde::{Deserialize, Serialize};

use crate::arena::{ArenaConstants, Controller, CpuLevel, CpuPlayer, MatchResult, run_match};
use crate::datapipe::derive_seed;
use crate::error::{arg_err, Result};

/// Mean with a Gaussian 95 % half-width `1.96 * s / sqrt(n)`, `s` the
/// sample standard deviation (zero when n = 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCi {
    pub mean: f64,
    pub half_width: f64,
}

pub fn gaussian_ci(values: &[f64]) -> Result<GaussianCi> {
    let n = values.len();
    if n == 0 {
        return Err(arg_err!("confidence interval of no values"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(GaussianCi { mean, half_width: 0.0 });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(GaussianCi {
        mean,
        half_width: 1.96 * var.sqrt() / (n as f64).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSeries {
    pub cpu_level: u8,
    /// Damage percent dealt by the agent, per game.
    pub dealt: Vec<f64>,
    /// Damage percent dealt to the agent, per game.
    pub received: Vec<f64>,
    pub n: usize,
    pub dealt_ci: GaussianCi,
    pub received_ci: GaussianCi,
    pub results: Vec<MatchResult>,
}

impl MatchSeries {
    pub fn from_results(cpu_level: u8, results: Vec<MatchResult>) -> Result<Self> {
        let dealt: Vec<f64> = results.iter().map(|r| r.damage_dealt[0] as f64).collect();
        let received: Vec<f64> = results.iter().map(|r| r.damage_dealt[1] as f64).collect();
        Ok(Self {
            cpu_level,
            n: results.len(),
            dealt_ci: gaussian_ci(&dealt)?,
            received_ci: gaussian_ci(&received)?,
            dealt,
            received,
            results,
        })
    }
}

/// Plays `games` independent matches of the agent (player one) against a
/// CPU of `level`. `make_agent` builds a fresh controller for each game.
pub fn run_series<F>(
    mut make_agent: F,
    level: CpuLevel,
    games: usize,
    seed: u64,
    tick_limit: u64,
    constants: &ArenaConstants,
) -> Result<MatchSeries>
where
    F: FnMut(usize) -> Result<Box<dyn Controller>>,
{
    if games == 0 {
        return Err(arg_err!("a series needs at least one game"));
    }
    let mut results = Vec::with_capacity(games);
    for g in 0..games {
        let mut agent = make_agent(g)?;
        let mut cpu = CpuPlayer::new(level, derive_seed(seed, 7, g as u64));
        results.push(run_match(
            agent.as_mut(),
            &mut cpu,
            constants.clone(),
            tick_limit,
            derive_seed(seed, 8, g as u64),
        ));
    }
    MatchSeries::from_results(level.level, results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance() {
        let ci = gaussian_ci(&[100.0, 100.0, 100.0]).unwrap();
        assert_eq!((ci.mean, ci.half_width), (100.0, 0.0));
    }

    #[test]
    fn two_games() {
        let ci = gaussian_ci(&[80.0, 120.0]).unwrap();
        assert_eq!(ci.mean, 100.0);
        // s = sqrt(800) = 28.284..., 1.96 * s / sqrt(2) = 39.2
        assert!((ci.half_width - 39.2).abs() < 1e-9);
    }
}
