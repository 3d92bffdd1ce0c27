//! Pair bootstrap for the monotonicity statistics.

use crate::grid::EvalGrid;
use crate::local::{fit_grid, FitConfig, GridFits, LocalError, Sample};
use crate::mono_test::{integrate, DerivativeField, TestError, TestSpec};
use crate::rng::{substream, StreamRng};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error("fit on the original sample failed: {0}")]
    OriginalFit(#[source] LocalError),
    #[error("refit on resample {b} failed: {source}")]
    ResampleFitFailure {
        b: usize,
        #[source]
        source: LocalError,
    },
    #[error(transparent)]
    Test(#[from] TestError),
    #[error("every resample failed")]
    AllFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// A failed refit aborts the bootstrap.
    #[default]
    Error,
    /// A failed refit drops that draw with a warning.
    SkipAndWarn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub resamples: usize,
    pub seed: u64,
    pub stream: u64,
    #[serde(default)]
    pub policy: FailurePolicy,
}

impl BootstrapPlan {
    pub fn new(resamples: usize, seed: u64, stream: u64) -> Self {
        Self {
            resamples,
            seed,
            stream,
            policy: FailurePolicy::Error,
        }
    }

    /// Generator for resample `b`, a function of `(seed, stream, b)` only.
    pub fn rng_for(&self, b: usize) -> StreamRng {
        substream(self.seed, &[self.stream, b as u64])
    }
}

/// Draws `n` whole observations uniformly with replacement.
pub fn resample<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Sample {
    let n = sample.len();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    sample.select(&rows)
}

/// Recentered bootstrap statistics, in resample order.
pub fn bootstrap_draws(
    sample: &Sample,
    grid: &EvalGrid,
    cfg: &FitConfig,
    spec: &TestSpec,
    plan: &BootstrapPlan,
) -> Result<Vec<f64>, BootstrapError> {
    let fits = fit_grid(sample, grid, cfg).map_err(BootstrapError::OriginalFit)?;
    let original = DerivativeField::from_fits(&fits, grid)?;
    bootstrap_draws_centered(sample, &original, grid, cfg, spec, plan)
}

/// As [`bootstrap_draws`], with the original-sample derivative field supplied.
pub fn bootstrap_draws_centered(
    sample: &Sample,
    original: &DerivativeField,
    grid: &EvalGrid,
    cfg: &FitConfig,
    spec: &TestSpec,
    plan: &BootstrapPlan,
) -> Result<Vec<f64>, BootstrapError> {
    if plan.resamples == 0 {
        return Err(BootstrapError::NoResamples);
    }
    spec.validate()?;
    let results: Vec<Result<f64, BootstrapError>> = (0..plan.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = plan.rng_for(b);
            let star = resample(sample, &mut rng);
            let fits = fit_grid(&star, grid, cfg)
                .map_err(|source| BootstrapError::ResampleFitFailure { b, source })?;
            let field = DerivativeField::from_fits(&fits, grid)?;
            Ok(integrate(&field.minus(original), grid, spec)?)
        })
        .collect();

    let mut draws = Vec::with_capacity(plan.resamples);
    for result in results {
        match result {
            Ok(v) => draws.push(v),
            Err(BootstrapError::ResampleFitFailure { b, source })
                if plan.policy == FailurePolicy::SkipAndWarn =>
            {
                log::warn!("dropping bootstrap draw {b}: {source}");
            }
            Err(e) => return Err(e),
        }
    }
    if draws.is_empty() {
        return Err(BootstrapError::AllFailed);
    }
    Ok(draws)
}

/// Original-sample fits, statistic and bootstrap draws for one data set.
#[derive(Debug, Clone)]
pub struct TestRun {
    pub fits: GridFits,
    pub statistic: f64,
    pub draws: Vec<f64>,
}

/// Fits the grid, forms the statistic and runs the bootstrap.
pub fn run_test(
    sample: &Sample,
    grid: &EvalGrid,
    cfg: &FitConfig,
    spec: &TestSpec,
    plan: &BootstrapPlan,
) -> Result<TestRun, BootstrapError> {
    spec.validate()?;
    let fits = fit_grid(sample, grid, cfg).map_err(BootstrapError::OriginalFit)?;
    let field = DerivativeField::from_fits(&fits, grid)?;
    let statistic = integrate(&field, grid, spec)?;
    let draws = bootstrap_draws_centered(sample, &field, grid, cfg, spec, plan)?;
    Ok(TestRun {
        fits,
        statistic,
        draws,
    })
}

/// Writes draws as CSV with columns `b,draw`.
pub fn write_draws_csv<W: Write>(out: W, draws: &[f64]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["b", "draw"])?;
    for (b, d) in draws.iter().enumerate() {
        w.write_record([b.to_string(), format!("{d:e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mono_test::Direction;
    use crate::rng::substream;
    use rand_distr::StandardNormal;

    fn null_sample(n: usize, seed: u64) -> Sample {
        let mut rng = substream(seed, &[0]);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y = x
            .iter()
            .map(|&v| v.powi(4) * 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Sample::scalar(y, x).unwrap()
    }

    #[test]
    fn single_row_resample_is_identity() {
        let s = Sample::scalar(vec![3.0], vec![0.2]).unwrap();
        let mut rng = substream(1, &[1]);
        assert_eq!(resample(&s, &mut rng), s);
    }

    #[test]
    fn resample_multiplicity_is_poisson_like() {
        // occurrences of row 0 in a size-1000 resample: Binomial(1000, 1/1000) ~ Poisson(1)
        let x: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let s = Sample::scalar(x.clone(), x).unwrap();
        let reps = 10_000;
        let mut counts = [0usize; 5]; // 0, 1, 2, 3, >=4
        let mut total = 0usize;
        for r in 0..reps {
            let mut rng = substream(42, &[r]);
            let star = resample(&s, &mut rng);
            let k = (0..star.len()).filter(|&i| star.covariate(i)[0] == 0.0).count();
            total += k;
            counts[k.min(4)] += 1;
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 1.0).abs() < 3.0 * (1.0f64 / reps as f64).sqrt(), "{mean}");
        let e = std::f64::consts::E.recip();
        let probs = [e, e, e / 2.0, e / 6.0, 1.0 - e * (1.0 + 1.0 + 0.5 + 1.0 / 6.0)];
        let chi2: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&o, p)| {
                let exp = p * reps as f64;
                (o as f64 - exp).powi(2) / exp
            })
            .sum();
        // chi-square(4) 1% critical value
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn draws_are_reproducible_and_nonnegative() {
        let s = null_sample(200, 5);
        let grid = EvalGrid::default();
        let cfg = FitConfig::local_linear(1.0);
        let spec = TestSpec::single(2.0, Direction::NonNegative);
        let plan = BootstrapPlan::new(20, 9, 3);
        let a = bootstrap_draws(&s, &grid, &cfg, &spec, &plan).unwrap();
        let b = bootstrap_draws(&s, &grid, &cfg, &spec, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|&d| d >= 0.0));

        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| bootstrap_draws(&s, &grid, &cfg, &spec, &plan).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn identity_resample_gives_zero_draw() {
        let s = Sample::scalar(vec![0.3, -0.2, 0.9], vec![0.1, 0.5, 0.8]).unwrap();
        let grid = EvalGrid::single(0.5, 1.0, 0.5, 1.0).unwrap();
        let cfg = FitConfig::local_linear(2.0);
        let spec = TestSpec::single(2.0, Direction::NonPositive);
        let plan = BootstrapPlan::new(1, 17, 0);
        // find a resample index that reproduces the sample row for row
        let b = (0..2000)
            .find(|&b| resample(&s, &mut plan.rng_for(b)) == s)
            .expect("some resample is the identity");
        // earlier resamples may be rank deficient; the last kept draw is resample b
        let mut plan = BootstrapPlan::new(b + 1, 17, 0);
        plan.policy = FailurePolicy::SkipAndWarn;
        let draws = bootstrap_draws(&s, &grid, &cfg, &spec, &plan).unwrap();
        assert_eq!(*draws.last().unwrap(), 0.0);
    }

    #[test]
    fn constant_outcomes_give_zero_draws() {
        let mut rng = substream(3, &[3]);
        let x: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let s = Sample::scalar(vec![5.0; 100], x).unwrap();
        let draws = bootstrap_draws(
            &s,
            &EvalGrid::default(),
            &FitConfig::local_linear(1.0),
            &TestSpec::single(2.0, Direction::NonNegative),
            &BootstrapPlan::new(25, 1, 1),
        )
        .unwrap();
        assert!(draws.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn skip_policy_drops_failed_resamples() {
        // few points near the grid edge: some resamples miss the window
        let s = Sample::scalar(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 0.02, 0.5, 0.52, 0.9, 0.95],
        )
        .unwrap();
        let grid = EvalGrid::uniform(0.0, 1.0, 3, 0.5).unwrap();
        let cfg = FitConfig::local_linear(0.2);
        let spec = TestSpec::single(2.0, Direction::NonPositive);
        let mut plan = BootstrapPlan::new(40, 2, 0);
        assert!(matches!(
            bootstrap_draws(&s, &grid, &cfg, &spec, &plan),
            Err(BootstrapError::ResampleFitFailure { .. })
        ));
        plan.policy = FailurePolicy::SkipAndWarn;
        let draws = bootstrap_draws(&s, &grid, &cfg, &spec, &plan).unwrap();
        assert!(!draws.is_empty() && draws.len() < 40);
    }

    #[test]
    fn draws_csv_layout() {
        let mut buf = Vec::new();
        write_draws_csv(&mut buf, &[0.5, 0.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "b,draw\n0,5e-1\n1,0e0\n");
    }
}
