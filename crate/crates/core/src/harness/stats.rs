use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const MIN_REPS: usize = 20;
pub const MAX_REPS: usize = 100;
pub const CI_TARGET: f64 = 0.05;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub min_reps: usize,
    pub max_reps: usize,
    /// Largest acceptable half-width relative to the mean.
    pub target: f64,
    pub level: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            min_reps: MIN_REPS,
            max_reps: MAX_REPS,
            target: CI_TARGET,
            level: CONFIDENCE_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentStats {
    pub mean_time: f64,
    pub ci_half_width: f64,
    pub confidence_level: f64,
    pub repetitions: usize,
    /// Threads the measurement used; parallel cost is `mean_time * threads`.
    pub threads: usize,
    pub converged: bool,
    pub samples: Vec<f64>,
}

impl ExperimentStats {
    pub fn parallel_cost(&self) -> f64 {
        super::parallel_cost(self.mean_time, self.threads)
    }

    pub fn relative_half_width(&self) -> f64 {
        self.ci_half_width / self.mean_time
    }

    /// Single deterministic observation (simulated runs).
    pub fn single(time: f64, threads: usize) -> Self {
        ExperimentStats {
            mean_time: time,
            ci_half_width: 0.0,
            confidence_level: CONFIDENCE_LEVEL,
            repetitions: 1,
            threads,
            converged: true,
            samples: vec![time],
        }
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Two-sided Student-t half-width of the mean at `level`.
pub fn ci_half_width(samples: &[f64], level: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(samples);
    let var = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.5 + level / 2.0);
    t * (var / n as f64).sqrt()
}

/// Repeats `runner` until the relative CI half-width meets the target or the
/// repetition budget runs out.
pub fn repeat_until_ci<F>(rule: StoppingRule, threads: usize, mut runner: F) -> Result<ExperimentStats>
where
    F: FnMut() -> Result<f64>,
{
    if rule.min_reps == 0 || rule.min_reps > rule.max_reps {
        return Err(Error::invalid(format!(
            "invalid repetition bounds {}..={}",
            rule.min_reps, rule.max_reps
        )));
    }
    let mut samples = Vec::with_capacity(rule.max_reps);
    let mut run = |samples: &mut Vec<f64>| -> Result<()> {
        let t = runner()?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Measurement(format!("measurement returned non-positive duration {t}")));
        }
        samples.push(t);
        Ok(())
    };
    for _ in 0..rule.min_reps {
        run(&mut samples)?;
    }
    let relative = |s: &[f64]| ci_half_width(s, rule.level) / mean(s);
    while relative(&samples) > rule.target && samples.len() < rule.max_reps {
        run(&mut samples)?;
    }
    let half = ci_half_width(&samples, rule.level);
    let m = mean(&samples);
    Ok(ExperimentStats {
        mean_time: m,
        ci_half_width: half,
        confidence_level: rule.level,
        repetitions: samples.len(),
        threads,
        converged: half / m <= rule.target,
        samples,
    })
}
