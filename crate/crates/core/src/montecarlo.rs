//! Deterministic Monte Carlo ensembles over the iterate schemes: per-replica
//! counter-derived randomness, streaming moment accumulation with pairwise
//! merging, jackknife error bars, and report helpers that compare ensemble
//! estimates against the closed-form predictions.

use crate::dynamics::{run_trajectory_with, SchemeConfig, SchemeKind, Trajectory};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};
use crate::model::{least_squares, marginalized_minimizer_with, GramBundle, LinearModel};
use crate::operators::BoundReport;
use crate::rng::CounterRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stream index reserved for the shared response; replica r uses 1 + r.
const SHARED_RESPONSE_STREAM: u64 = 0;
/// Substream indices inside one replica's stream.
const NOISE_SUBSTREAM: u64 = 0;
const MASK_SUBSTREAM: u64 = 1;

/// An ensemble run: how many replicas, which scheme, whether each replica
/// draws its own response or all share one, and the master seed that all
/// per-replica streams are derived from (the scheme's own seed is unused
/// here).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub replicas: usize,
    pub scheme: SchemeConfig,
    pub resample_response: bool,
    pub master_seed: u64,
}

impl EnsembleConfig {
    pub fn new(
        replicas: usize,
        scheme: SchemeConfig,
        resample_response: bool,
        master_seed: u64,
    ) -> Result<EnsembleConfig> {
        if replicas < 3 {
            return Err(Error::InvalidConfig {
                path: "ensemble.replicas".into(),
                message: format!("need at least 3 replicas for jackknife error bars, got {replicas}"),
            });
        }
        Ok(EnsembleConfig {
            replicas,
            scheme,
            resample_response,
            master_seed,
        })
    }
}

/// First and second moments of one vector-valued observable across the
/// ensemble, with jackknife standard errors for every reported entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: Vector,
    /// E[xxᵀ] estimate (divisor R).
    pub second_moment: Matrix,
    /// Sample covariance (divisor R − 1).
    pub covariance: Matrix,
    pub se_mean: Vector,
    pub se_second: Matrix,
    pub se_cov: Matrix,
    pub replicas_used: usize,
}

/// Ensemble moments per checkpoint for the raw iterates, the iterates
/// anchored at the per-replica estimator, the running averages, and the
/// anchored running averages, plus the anchor itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub checkpoints: Vec<usize>,
    pub iterate: Vec<MomentStats>,
    pub deviation: Vec<MomentStats>,
    pub rp_average: Vec<MomentStats>,
    pub rp_deviation: Vec<MomentStats>,
    pub anchor: MomentStats,
    pub warnings: Vec<String>,
}

/// Streaming mean and centered second moment of vector samples, mergeable
/// pairwise so ensembles can be reduced in a fixed tree order.
#[derive(Debug, Clone)]
pub struct WelfordAccumulator {
    count: usize,
    mean: Vector,
    /// Σ (x − mean)(x − mean)ᵀ.
    m2: Matrix,
}

impl WelfordAccumulator {
    pub fn new(dim: usize) -> WelfordAccumulator {
        WelfordAccumulator {
            count: 0,
            mean: Vector::zeros(dim),
            m2: Matrix::zeros(dim, dim),
        }
    }

    pub fn from_sample(x: &Vector) -> WelfordAccumulator {
        let mut acc = WelfordAccumulator::new(x.len());
        acc.update(x);
        acc
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&mut self, x: &Vector) {
        self.count += 1;
        let delta = x - &self.mean;
        self.mean = &self.mean + &delta.scale(1.0 / self.count as f64);
        let delta2 = x - &self.mean;
        self.m2 = &self.m2 + &delta.outer(&delta2);
    }

    /// Combines two accumulators as if their samples were concatenated.
    pub fn merge(a: &WelfordAccumulator, b: &WelfordAccumulator) -> WelfordAccumulator {
        if a.count == 0 {
            return b.clone();
        }
        if b.count == 0 {
            return a.clone();
        }
        let count = a.count + b.count;
        let wa = a.count as f64;
        let wb = b.count as f64;
        let delta = &b.mean - &a.mean;
        let mean = &a.mean + &delta.scale(wb / count as f64);
        let m2 = &(&a.m2 + &b.m2) + &delta.outer(&delta).scale(wa * wb / count as f64);
        WelfordAccumulator { count, mean, m2 }
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    /// Sample covariance with divisor count − 1.
    pub fn covariance(&self) -> Result<Matrix> {
        if self.count < 2 {
            return Err(Error::InvalidConfig {
                path: "welford.count".into(),
                message: format!("covariance needs at least 2 samples, got {}", self.count),
            });
        }
        Ok(self.m2.scale(1.0 / (self.count - 1) as f64).symmetrize())
    }

    /// Raw second moment with divisor count.
    pub fn second_moment(&self) -> Result<Matrix> {
        if self.count == 0 {
            return Err(Error::InvalidConfig {
                path: "welford.count".into(),
                message: "second moment needs at least 1 sample".into(),
            });
        }
        let nf = self.count as f64;
        Ok((&self.m2.scale(1.0 / nf) + &self.mean.outer(&self.mean)).symmetrize())
    }
}

/// Reduces per-sample accumulators in a balanced binary tree: adjacent
/// pairs merge first, then pairs of pairs, and so on. The merge order is a
/// function of the sample order alone, so results do not depend on thread
/// count.
pub fn tree_merge(mut level: Vec<WelfordAccumulator>) -> Result<WelfordAccumulator> {
    if level.is_empty() {
        return Err(Error::InvalidConfig {
            path: "welford.merge".into(),
            message: "cannot merge an empty set of accumulators".into(),
        });
    }
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            next.push(if pair.len() == 2 {
                WelfordAccumulator::merge(&pair[0], &pair[1])
            } else {
                pair[0].clone()
            });
        }
        level = next;
    }
    Ok(level.pop().expect("nonempty by construction"))
}

impl MomentStats {
    /// Moments and jackknife standard errors of an ordered sample set.
    /// The mean/covariance pass uses the pairwise accumulator tree; the
    /// error bars come from leave-one-out recomputation.
    pub fn from_samples(samples: &[Vector]) -> Result<MomentStats> {
        let r = samples.len();
        if r < 3 {
            return Err(Error::InvalidConfig {
                path: "ensemble.replicas".into(),
                message: format!("need at least 3 samples for jackknife error bars, got {r}"),
            });
        }
        let d = samples[0].len();
        let merged = tree_merge(samples.iter().map(WelfordAccumulator::from_sample).collect())?;
        let mean = merged.mean().clone();
        let covariance = merged.covariance()?;
        let second_moment = merged.second_moment()?;

        let rf = r as f64;
        let sum_outer = second_moment.scale(rf);
        let mut jack_cov = Vec::with_capacity(r);
        let mut jack_second = Vec::with_capacity(r);
        let mut cov_bar = Matrix::zeros(d, d);
        let mut second_bar = Matrix::zeros(d, d);
        for x in samples {
            let loo_mean = (&mean.scale(rf) - x).scale(1.0 / (rf - 1.0));
            let loo_sum = &sum_outer - &x.outer(x);
            let loo_cov =
                (&loo_sum - &loo_mean.outer(&loo_mean).scale(rf - 1.0)).scale(1.0 / (rf - 2.0));
            let loo_second = loo_sum.scale(1.0 / (rf - 1.0));
            cov_bar = &cov_bar + &loo_cov;
            second_bar = &second_bar + &loo_second;
            jack_cov.push(loo_cov);
            jack_second.push(loo_second);
        }
        cov_bar = cov_bar.scale(1.0 / rf);
        second_bar = second_bar.scale(1.0 / rf);
        let mut var_cov = Matrix::zeros(d, d);
        let mut var_second = Matrix::zeros(d, d);
        for (loo_cov, loo_second) in jack_cov.iter().zip(&jack_second) {
            let dc = loo_cov - &cov_bar;
            let ds = loo_second - &second_bar;
            var_cov = &var_cov + &dc.hadamard(&dc)?;
            var_second = &var_second + &ds.hadamard(&ds)?;
        }
        let jack_factor = (rf - 1.0) / rf;
        let se_cov = Matrix::from_fn(d, d, |i, j| (jack_factor * var_cov.get(i, j)).sqrt());
        let se_second = Matrix::from_fn(d, d, |i, j| (jack_factor * var_second.get(i, j)).sqrt());
        let se_mean = Vector::from_fn(d, |i| (covariance.get(i, i) / rf).sqrt());

        Ok(MomentStats {
            mean,
            second_moment,
            covariance,
            se_mean,
            se_second,
            se_cov,
            replicas_used: r,
        })
    }
}

struct ReplicaSample {
    iterates: Vec<Vector>,
    rp_averages: Vec<Vector>,
    anchor: Vector,
    warnings: Vec<String>,
}

/// Shared response draw: stream 0, noise substream (None while
/// resampling, where each replica draws its own).
fn shared_response(m: &LinearModel, cfg: &EnsembleConfig) -> Option<Vector> {
    if cfg.resample_response {
        None
    } else {
        let mut rng = CounterRng::stream(cfg.master_seed, SHARED_RESPONSE_STREAM)
            .substream(NOISE_SUBSTREAM);
        Some(m.draw_response(&mut rng))
    }
}

fn replica_sample(
    m: &LinearModel,
    bundle: &GramBundle,
    shared: Option<&Vector>,
    cfg: &EnsembleConfig,
    replica: usize,
) -> Result<(Trajectory, Vector)> {
    let replica_rng = CounterRng::stream(cfg.master_seed, 1 + replica as u64);
    let response = match shared {
        Some(y) => y.clone(),
        None => {
            let mut noise_rng = replica_rng.substream(NOISE_SUBSTREAM);
            m.draw_response(&mut noise_rng)
        }
    };
    let anchor = if cfg.scheme.scheme == SchemeKind::Dropout {
        marginalized_minimizer_with(bundle, m.x(), &response)?
    } else {
        least_squares(m, &response)?
    };
    let mut mask_rng = replica_rng.substream(MASK_SUBSTREAM);
    let traj = run_trajectory_with(m, &response, &cfg.scheme, &mut mask_rng)?;
    Ok((traj, anchor))
}

/// The exact trajectory (and anchor estimator) that replica `replica`
/// contributes to `run_ensemble` under the same config: same response
/// draw, same mask stream. Lets callers dump raw trajectories that match
/// the aggregated moments bit for bit.
pub fn replica_trajectory(
    m: &LinearModel,
    cfg: &EnsembleConfig,
    replica: usize,
) -> Result<(Trajectory, Vector)> {
    if replica >= cfg.replicas {
        return Err(Error::InvalidConfig {
            path: "ensemble.replicas".into(),
            message: format!(
                "replica {replica} requested but the ensemble has {}",
                cfg.replicas
            ),
        });
    }
    let bundle = m.gram_bundle(cfg.scheme.p)?;
    let shared = shared_response(m, cfg);
    replica_sample(m, &bundle, shared.as_ref(), cfg, replica)
}

/// Runs the configured scheme across independent replicas and aggregates
/// moments at every checkpoint. Replica r draws from stream 1 + r of the
/// master seed (noise substream 0, mask substream 1); stream 0 provides
/// the shared response when resampling is off. Results are bitwise
/// reproducible for any thread count.
pub fn run_ensemble(m: &LinearModel, cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    if cfg.replicas < 3 {
        return Err(Error::InvalidConfig {
            path: "ensemble.replicas".into(),
            message: format!(
                "need at least 3 replicas for jackknife error bars, got {}",
                cfg.replicas
            ),
        });
    }
    let bundle = m.gram_bundle(cfg.scheme.p)?;
    let shared = shared_response(m, cfg);

    let samples: Vec<ReplicaSample> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| -> Result<ReplicaSample> {
            let (traj, anchor) = replica_sample(m, &bundle, shared.as_ref(), cfg, r)?;
            Ok(ReplicaSample {
                iterates: traj.iterates,
                rp_averages: traj.rp_averages,
                anchor,
                warnings: traj.warnings,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let checkpoints = cfg.scheme.checkpoints.clone();
    let mut iterate = Vec::with_capacity(checkpoints.len());
    let mut deviation = Vec::with_capacity(checkpoints.len());
    let mut rp_average = Vec::with_capacity(checkpoints.len());
    let mut rp_deviation = Vec::with_capacity(checkpoints.len());
    for ci in 0..checkpoints.len() {
        let raw: Vec<Vector> = samples.iter().map(|s| s.iterates[ci].clone()).collect();
        let dev: Vec<Vector> = samples
            .iter()
            .map(|s| &s.iterates[ci] - &s.anchor)
            .collect();
        let rp_raw: Vec<Vector> = samples.iter().map(|s| s.rp_averages[ci].clone()).collect();
        let rp_dev: Vec<Vector> = samples
            .iter()
            .map(|s| &s.rp_averages[ci] - &s.anchor)
            .collect();
        iterate.push(MomentStats::from_samples(&raw)?);
        deviation.push(MomentStats::from_samples(&dev)?);
        rp_average.push(MomentStats::from_samples(&rp_raw)?);
        rp_deviation.push(MomentStats::from_samples(&rp_dev)?);
    }
    let anchors: Vec<Vector> = samples.iter().map(|s| s.anchor.clone()).collect();
    let anchor = MomentStats::from_samples(&anchors)?;
    let warnings = samples
        .first()
        .map(|s| s.warnings.clone())
        .unwrap_or_default();

    Ok(EnsembleStats {
        checkpoints,
        iterate,
        deviation,
        rp_average,
        rp_deviation,
        anchor,
        warnings,
    })
}

/// Compares an ensemble's anchored second moment against a predicted
/// asymptotic matrix: the Frobenius gap must sit inside three aggregated
/// jackknife standard errors.
pub fn compare_to_fixed_point(stats: &MomentStats, fixed_point: &Matrix) -> BoundReport {
    let observed = (&stats.second_moment - fixed_point).frobenius();
    let theoretical = 3.0 * stats.se_second.frobenius();
    BoundReport::upper("ensemble second moment vs fixed point", theoretical, observed)
}

/// Checks the covariance decomposition Cov(iterate) = Cov(deviation) +
/// Cov(anchor) + cross terms: the cross-term defect must stay under the
/// analytic ceiling (plus whatever sampling slack the caller folds in).
pub fn gauss_markov_defect(
    cov_full: &Matrix,
    cov_deviation: &Matrix,
    cov_anchor: &Matrix,
    ceiling: f64,
) -> BoundReport {
    let defect = (&(cov_full - cov_deviation) - cov_anchor).spectral_norm();
    BoundReport::upper("covariance decomposition defect", ceiling, defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::e_dad;
    use crate::model::NoiseKind;
    use crate::operators::SOperator;

    fn reference_model() -> LinearModel {
        LinearModel::new(
            Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            Vector::new(vec![1.0, -1.0]).unwrap(),
            NoiseKind::GaussianUnit,
        )
        .unwrap()
    }

    fn gaussian_samples(rng: &mut CounterRng, count: usize, d: usize) -> Vec<Vector> {
        (0..count)
            .map(|_| Vector::from_fn(d, |_| rng.next_gaussian()))
            .collect()
    }

    fn two_pass(samples: &[Vector]) -> (Vector, Matrix) {
        let r = samples.len();
        let d = samples[0].len();
        let mut mean = Vector::zeros(d);
        for x in samples {
            mean = &mean + x;
        }
        mean = mean.scale(1.0 / r as f64);
        let mut m2 = Matrix::zeros(d, d);
        for x in samples {
            let c = x - &mean;
            m2 = &m2 + &c.outer(&c);
        }
        (mean, m2.scale(1.0 / (r - 1) as f64))
    }

    #[test]
    fn welford_matches_two_pass() {
        let mut rng = CounterRng::new(80);
        let samples = gaussian_samples(&mut rng, 500, 3);
        let mut acc = WelfordAccumulator::new(3);
        for x in &samples {
            acc.update(x);
        }
        let (mean, cov) = two_pass(&samples);
        assert!((acc.mean() - &mean).norm2() <= 1e-12);
        assert!((&acc.covariance().unwrap() - &cov).max_abs() <= 1e-10);
    }

    #[test]
    fn welford_merge_is_consistent_and_associative() {
        let mut rng = CounterRng::new(81);
        let samples = gaussian_samples(&mut rng, 300, 2);
        let mut whole = WelfordAccumulator::new(2);
        for x in &samples {
            whole.update(x);
        }
        let build = |range: std::ops::Range<usize>| {
            let mut acc = WelfordAccumulator::new(2);
            for x in &samples[range] {
                acc.update(x);
            }
            acc
        };
        let a = build(0..100);
        let b = build(100..200);
        let c = build(200..300);
        let left = WelfordAccumulator::merge(&WelfordAccumulator::merge(&a, &b), &c);
        let right = WelfordAccumulator::merge(&a, &WelfordAccumulator::merge(&b, &c));
        for merged in [&left, &right] {
            assert_eq!(merged.count(), whole.count());
            assert!((merged.mean() - whole.mean()).norm2() <= 1e-12);
            assert!(
                (&merged.covariance().unwrap() - &whole.covariance().unwrap()).max_abs() <= 1e-12
            );
        }

        let tree = tree_merge(samples.iter().map(WelfordAccumulator::from_sample).collect())
            .unwrap();
        assert!((tree.mean() - whole.mean()).norm2() <= 1e-12);
        assert!((&tree.covariance().unwrap() - &whole.covariance().unwrap()).max_abs() <= 1e-12);
    }

    #[test]
    fn moment_stats_error_bars_are_calibrated() {
        let mut rng = CounterRng::new(82);
        let samples = gaussian_samples(&mut rng, 2000, 2);
        let stats = MomentStats::from_samples(&samples).unwrap();
        let rf = samples.len() as f64;
        for i in 0..2 {
            // unit-variance coordinates: SE of the mean should be near 1/√R
            let expected = (stats.covariance.get(i, i) / rf).sqrt();
            assert!((stats.se_mean[i] - expected).abs() <= 1e-15);
            assert!(stats.se_mean[i] <= 1.3 / rf.sqrt());
            assert!(stats.se_mean[i] >= 0.7 / rf.sqrt());
            // identity covariance within 5 jackknife SEs
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                let gap = (stats.covariance.get(i, j) - target).abs();
                assert!(
                    gap <= 5.0 * stats.se_cov.get(i, j),
                    "covariance entry ({i},{j}) off by {gap}"
                );
            }
        }
        assert_eq!(stats.replicas_used, 2000);
        // for centered data the second moment tracks the covariance
        assert!(
            (&stats.second_moment - &stats.covariance).max_abs()
                <= 0.01 + 3.0 * stats.se_second.max_abs()
        );
    }

    #[test]
    fn ensemble_rejects_too_few_replicas() {
        let scheme = SchemeConfig::new(
            SchemeKind::Dropout,
            0.05,
            0.5,
            10,
            Vector::zeros(2),
            7,
        )
        .unwrap();
        assert!(matches!(
            EnsembleConfig::new(2, scheme.clone(), true, 1),
            Err(Error::InvalidConfig { .. })
        ));
        let m = reference_model();
        let cfg = EnsembleConfig {
            replicas: 2,
            scheme,
            resample_response: true,
            master_seed: 1,
        };
        assert!(matches!(
            run_ensemble(&m, &cfg),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn ensemble_is_bitwise_deterministic_across_thread_counts() {
        let m = reference_model();
        let scheme = SchemeConfig::new(
            SchemeKind::Dropout,
            0.05,
            0.5,
            12,
            Vector::zeros(2),
            7,
        )
        .unwrap();
        let cfg = EnsembleConfig::new(150, scheme, true, 99).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_ensemble(&m, &cfg))
            .unwrap();
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_ensemble(&m, &cfg))
            .unwrap();
        let a = serde_json::to_string(&single).unwrap();
        let b = serde_json::to_string(&quad).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replica_trajectory_reproduces_ensemble_members() {
        let m = reference_model();
        let scheme = SchemeConfig::new(
            SchemeKind::Dropout,
            0.05,
            0.5,
            8,
            Vector::new(vec![0.3, -0.2]).unwrap(),
            11,
        )
        .unwrap();
        let cfg = EnsembleConfig::new(6, scheme, false, 404).unwrap();
        let stats = run_ensemble(&m, &cfg).unwrap();

        let members: Vec<(Trajectory, Vector)> = (0..cfg.replicas)
            .map(|r| replica_trajectory(&m, &cfg, r).unwrap())
            .collect();
        let json = |s: &MomentStats| serde_json::to_string(s).unwrap();
        for ci in 0..stats.checkpoints.len() {
            let raw: Vec<Vector> = members.iter().map(|(t, _)| t.iterates[ci].clone()).collect();
            let dev: Vec<Vector> = members.iter().map(|(t, a)| &t.iterates[ci] - a).collect();
            assert_eq!(
                json(&MomentStats::from_samples(&raw).unwrap()),
                json(&stats.iterate[ci])
            );
            assert_eq!(
                json(&MomentStats::from_samples(&dev).unwrap()),
                json(&stats.deviation[ci])
            );
        }
        let anchors: Vec<Vector> = members.iter().map(|(_, a)| a.clone()).collect();
        assert_eq!(
            json(&MomentStats::from_samples(&anchors).unwrap()),
            json(&stats.anchor)
        );

        assert!(matches!(
            replica_trajectory(&m, &cfg, cfg.replicas),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn zero_noise_plain_descent_has_no_spread() {
        let m = reference_model().with_noise_scale(0.0);
        let scheme = SchemeConfig::new(
            SchemeKind::PlainGd,
            0.05,
            0.5,
            20,
            Vector::zeros(2),
            7,
        )
        .unwrap();
        let cfg = EnsembleConfig::new(50, scheme, true, 3).unwrap();
        let stats = run_ensemble(&m, &cfg).unwrap();
        let last = stats.iterate.last().unwrap();
        assert_eq!(last.covariance.max_abs(), 0.0);
        assert_eq!(last.se_mean[0], 0.0);
        // identical replicas: second moment is exactly the mean outer product
        let outer = last.mean.outer(&last.mean);
        assert!((&last.second_moment - &outer).max_abs() <= 1e-15);
    }

    #[test]
    fn first_step_mean_is_unbiased() {
        let m = reference_model();
        let alpha = 0.05;
        let p = 0.5;
        let beta0 = Vector::new(vec![0.5, 0.5]).unwrap();
        let scheme = SchemeConfig::new(
            SchemeKind::Dropout,
            alpha,
            p,
            1,
            beta0.clone(),
            7,
        )
        .unwrap();
        let cfg = EnsembleConfig::new(4000, scheme, true, 11).unwrap();
        let stats = run_ensemble(&m, &cfg).unwrap();
        // E[β₁] = β₀ + αp𝕏β⋆ − αE[D𝕏D]β₀ with E[D𝕏D] = p𝕏_p
        let xx = m.gram();
        let expected = &(&beta0 + &(&xx * m.beta_star()).scale(alpha * p))
            - &(&e_dad(&xx, p).unwrap() * &beta0).scale(alpha);
        let got = &stats.iterate[1].mean;
        for i in 0..2 {
            let gap = (got[i] - expected[i]).abs();
            assert!(
                gap <= 3.0 * stats.iterate[1].se_mean[i],
                "coordinate {i}: gap {gap} vs SE {}",
                stats.iterate[1].se_mean[i]
            );
        }
    }

    #[test]
    fn anchored_second_moment_matches_moment_engine() {
        let m = reference_model();
        let alpha = 0.05;
        let p = 0.5;
        let beta0 = Vector::zeros(2);
        let scheme = SchemeConfig::new(SchemeKind::Dropout, alpha, p, 5, beta0.clone(), 7)
            .unwrap()
            .with_checkpoints(vec![0, 1, 2, 5])
            .unwrap();
        let cfg = EnsembleConfig::new(12_000, scheme, true, 21).unwrap();
        let stats = run_ensemble(&m, &cfg).unwrap();
        let op = SOperator::new(&m, alpha, p).unwrap();
        let seq = op.moment_sequence(&beta0, 5).unwrap();
        for (ci, &k) in stats.checkpoints.iter().enumerate() {
            let empirical = &stats.deviation[ci].second_moment;
            let exact = &seq.a[k];
            for i in 0..2 {
                for j in 0..2 {
                    let gap = (empirical.get(i, j) - exact.get(i, j)).abs();
                    let se = stats.deviation[ci].se_second.get(i, j);
                    assert!(
                        gap <= 4.0 * se,
                        "k = {k}, entry ({i},{j}): gap {gap} vs SE {se}"
                    );
                }
            }
        }
    }

    #[test]
    fn ensemble_second_moment_reaches_fixed_point() {
        let m = reference_model();
        let alpha = 0.05;
        let p = 0.5;
        let scheme = SchemeConfig::new(SchemeKind::Dropout, alpha, p, 500, Vector::zeros(2), 7)
            .unwrap()
            .with_checkpoints(vec![0, 500])
            .unwrap();
        let cfg = EnsembleConfig::new(6000, scheme, true, 33).unwrap();
        let stats = run_ensemble(&m, &cfg).unwrap();
        let op = SOperator::new(&m, alpha, p).unwrap();
        let v = op.fixed_point_excess_cov(1e-10).unwrap();
        let report = compare_to_fixed_point(stats.deviation.last().unwrap(), &v);
        assert!(
            report.satisfied,
            "gap {} exceeds 3 aggregated SEs {}",
            report.observed, report.theoretical
        );
        assert!(report.theoretical > 0.0);
    }

    #[test]
    fn covariance_decomposition_defect_stays_under_ceiling() {
        let m = reference_model();
        let op = SOperator::new(&m, 0.05, 0.5).unwrap();
        let beta0 = Vector::new(vec![1.0, 2.0]).unwrap();
        let seq = op.moment_sequence(&beta0, 100).unwrap();
        for k in [0usize, 5, 20, 100] {
            let cov_full = op.iterate_covariance(&seq, k);
            let cov_dev = &seq.a[k] - &seq.e[k].outer(&seq.e[k]);
            let cov_anchor = op.minimizer_covariance();
            let ceiling = op.gauss_markov_ceiling(k, &beta0);
            let report = gauss_markov_defect(&cov_full, &cov_dev, &cov_anchor, ceiling);
            assert!(
                report.satisfied,
                "k = {k}: defect {} over ceiling {}",
                report.observed, report.theoretical
            );
        }
    }

    #[test]
    fn law_of_total_covariance_reconciles_ensemble_modes() {
        let m = reference_model();
        let alpha = 0.05;
        let p = 0.5;
        let k = 3usize;
        let beta0 = Vector::zeros(2);
        let scheme = SchemeConfig::new(SchemeKind::Dropout, alpha, p, k, beta0.clone(), 7)
            .unwrap()
            .with_checkpoints(vec![0, k])
            .unwrap();

        // outer loop over shared responses, inner ensembles conditional on each
        let outer = 60usize;
        let inner = 3000usize;
        let mut cond_cov_sum = Matrix::zeros(2, 2);
        let mut cond_se_sq_sum = Matrix::zeros(2, 2);
        let mut mean_acc = WelfordAccumulator::new(2);
        for s in 0..outer {
            let cfg = EnsembleConfig::new(inner, scheme.clone(), false, 1000 + s as u64).unwrap();
            let stats = run_ensemble(&m, &cfg).unwrap();
            let last = stats.iterate.last().unwrap();
            cond_cov_sum = &cond_cov_sum + &last.covariance;
            cond_se_sq_sum = &cond_se_sq_sum + &last.se_cov.hadamard(&last.se_cov).unwrap();
            mean_acc.update(&last.mean);
        }
        let mf = outer as f64;
        let expected_cond = cond_cov_sum.scale(1.0 / mf);
        let between = mean_acc.covariance().unwrap();
        let total = &expected_cond + &between;

        let op = SOperator::new(&m, alpha, p).unwrap();
        let seq = op.moment_sequence(&beta0, k).unwrap();
        let exact_total = op.iterate_covariance(&seq, k);

        // entrywise 4σ band: the between-response covariance is estimated
        // from `outer` draws (Wishart-style variance), the conditional part
        // averages `outer` independent jackknife SEs
        for i in 0..2 {
            for j in 0..2 {
                let var_between = (between.get(i, i) * between.get(j, j)
                    + between.get(i, j) * between.get(i, j))
                    / (mf - 1.0);
                let var_cond = cond_se_sq_sum.get(i, j) / (mf * mf);
                let band = 4.0 * (var_between + var_cond).sqrt();
                let gap = (total.get(i, j) - exact_total.get(i, j)).abs();
                assert!(
                    gap <= band,
                    "entry ({i},{j}): reassembled total off by {gap}, band {band}"
                );
            }
        }
    }
}
