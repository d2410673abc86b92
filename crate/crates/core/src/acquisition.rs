//! Acquisition functions over the GP posterior and the constant-liar batch
//! proposal loop.

use crate::gp::{self, GpModel};
use crate::space::{Point, SearchSpace, UnitPoint};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

const CANDIDATE_SAMPLES: usize = 1024;
const PERTURBED_BEST: usize = 10;
const PERTURB_STD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum AcquisitionError {
    #[error("batch degenerate: search space exhausted before {wanted} distinct points")]
    BatchDegenerate { wanted: usize },
    #[error("gp error: {0}")]
    Gp(#[from] gp::GpError),
    #[error("space error: {0}")]
    Space(#[from] crate::space::SpaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcquisitionSpec {
    ExpectedImprovement {
        #[serde(default)]
        xi: f64,
    },
    LowerConfidenceBound {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn default_kappa() -> f64 {
    1.96
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        AcquisitionSpec::ExpectedImprovement { xi: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LieStrategy {
    #[default]
    ConstantLiarMin,
    ConstantLiarMax,
    ConstantLiarMean,
}

impl LieStrategy {
    pub fn lie_value(&self, observed: &[f64]) -> f64 {
        match self {
            LieStrategy::ConstantLiarMin => observed.iter().cloned().fold(f64::INFINITY, f64::min),
            LieStrategy::ConstantLiarMax => {
                observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
            LieStrategy::ConstantLiarMean => {
                observed.iter().sum::<f64>() / observed.len() as f64
            }
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement for minimization. Zero at zero variance.
pub fn expected_improvement(mean: f64, variance: f64, best: f64, xi: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return 0.0;
    }
    let delta = best - mean - xi;
    let z = delta / sigma;
    (delta * std_normal_cdf(z) + sigma * std_normal_pdf(z)).max(0.0)
}

/// Lower confidence bound, to be minimized.
pub fn lower_confidence_bound(mean: f64, variance: f64, kappa: f64) -> f64 {
    mean - kappa * variance.max(0.0).sqrt()
}

/// Acquisition score where larger is better, regardless of kind.
fn score(model: &GpModel, u: &UnitPoint, spec: &AcquisitionSpec, best: f64) -> f64 {
    let (mean, var) = gp::predict(model, u);
    match spec {
        AcquisitionSpec::ExpectedImprovement { xi } => expected_improvement(mean, var, best, *xi),
        AcquisitionSpec::LowerConfidenceBound { kappa } => {
            -lower_confidence_bound(mean, var, *kappa)
        }
    }
}

/// Candidate set: 1024 uniform unit-cube samples plus the 10 best observed
/// inputs perturbed by gaussian noise (std 0.05, clipped to [0,1]).
fn candidates<R: Rng>(model: &GpModel, d: usize, rng: &mut R) -> Vec<UnitPoint> {
    let mut cands = Vec::with_capacity(CANDIDATE_SAMPLES + PERTURBED_BEST);
    for _ in 0..CANDIDATE_SAMPLES {
        cands.push(UnitPoint((0..d).map(|_| rng.gen::<f64>()).collect()));
    }
    let targets = model.raw_targets();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[a].partial_cmp(&targets[b]).unwrap());
    let noise = Normal::new(0.0, PERTURB_STD).unwrap();
    for &i in order.iter().take(PERTURBED_BEST) {
        let u = model.train_inputs()[i]
            .iter()
            .map(|x| (x + noise.sample(rng)).clamp(0.0, 1.0))
            .collect();
        cands.push(UnitPoint(u));
    }
    cands
}

fn best_observed(model: &GpModel) -> f64 {
    model
        .raw_targets()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Single-point proposal: candidate-set maximization of the acquisition,
/// denormalized (and snapped for discrete dims) into the raw space.
pub fn propose<R: Rng>(
    model: &GpModel,
    space: &SearchSpace,
    spec: &AcquisitionSpec,
    rng: &mut R,
) -> Result<Point, AcquisitionError> {
    let best = best_observed(model);
    let cands = candidates(model, space.dim(), rng);
    let mut winner = &cands[0];
    let mut winner_score = f64::NEG_INFINITY;
    for c in &cands {
        let s = score(model, c, spec, best);
        if s > winner_score {
            winner_score = s;
            winner = c;
        }
    }
    Ok(space.denormalize(winner)?)
}

/// Greedy constant-liar batch: propose, append the lie, refit a shadow model,
/// repeat. The real model is never mutated. Duplicate proposals (after
/// discrete snapping) fall back to a uniform random unvisited point.
pub fn propose_batch<R: Rng>(
    model: &GpModel,
    space: &SearchSpace,
    spec: &AcquisitionSpec,
    q: usize,
    lie: LieStrategy,
    rng: &mut R,
) -> Result<Vec<Point>, AcquisitionError> {
    assert!(q >= 1, "batch size must be >= 1");
    let observed = model.raw_targets();
    let lie_value = lie.lie_value(&observed);

    let mut shadow_inputs: Vec<Vec<f64>> = model.train_inputs().to_vec();
    let mut shadow_targets: Vec<f64> = observed;
    let mut shadow = model.clone();

    // known occupied cells in raw space: training data + batch so far
    let mut visited: Vec<Point> = shadow_inputs
        .iter()
        .map(|u| space.denormalize(&UnitPoint(u.clone())))
        .collect::<Result<_, _>>()?;
    let mut batch: Vec<Point> = Vec::with_capacity(q);

    for _ in 0..q {
        let mut point = propose(&shadow, space, spec, rng)?;
        if batch.contains(&point) {
            point = random_unvisited(space, &visited, &batch, rng)
                .ok_or(AcquisitionError::BatchDegenerate { wanted: q })?;
        }
        let u = space.normalize(&point)?;
        shadow_inputs.push(u.0);
        shadow_targets.push(lie_value);
        shadow = gp::fit(&shadow_inputs, &shadow_targets, model.hyper().clone())?;
        visited.push(point.clone());
        batch.push(point);
    }
    Ok(batch)
}

fn random_unvisited<R: Rng>(
    space: &SearchSpace,
    visited: &[Point],
    batch: &[Point],
    rng: &mut R,
) -> Option<Point> {
    // bounded rejection sampling first; exhaustive grid fallback for
    // fully-discrete spaces
    for _ in 0..256 {
        let p = space.sample_uniform(rng);
        if !visited.contains(&p) && !batch.contains(&p) {
            return Some(p);
        }
    }
    if let Ok(grid) = space.grid_points() {
        let free: Vec<&Point> = grid
            .iter()
            .filter(|p| !visited.contains(p) && !batch.contains(p))
            .collect();
        if free.is_empty() {
            return None;
        }
        return Some(free[rng.gen_range(0..free.len())].clone());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelHyper;
    use crate::space::Dimension;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ei_zero_variance_is_zero() {
        assert_eq!(expected_improvement(0.0, 0.0, 10.0, 0.0), 0.0);
    }

    #[test]
    fn ei_at_mean_equals_pdf_at_zero() {
        let v = expected_improvement(1.0, 1.0, 1.0, 0.0);
        assert!((v - 0.398942).abs() < 1e-6);
    }

    #[test]
    fn ei_far_above_best_is_negligible() {
        let v = expected_improvement(10.0, 0.01, 0.0, 0.0);
        assert!(v < 1e-12, "ei = {v}");
    }

    #[test]
    fn ei_nonnegative_and_monotone_in_sigma() {
        let mut last = 0.0;
        for i in 0..100 {
            let sigma = 0.05 * (i + 1) as f64;
            let v = expected_improvement(2.0, sigma * sigma, 1.0, 0.0);
            assert!(v >= 0.0);
            assert!(v + 1e-15 >= last, "EI not monotone at sigma {sigma}");
            last = v;
        }
    }

    #[test]
    fn lcb_examples() {
        assert_eq!(lower_confidence_bound(1.0, 0.0, 1.96), 1.0);
        assert_eq!(lower_confidence_bound(0.0, 1.0, 2.0), -2.0);
        for mean in [-3.0, 0.0, 7.5] {
            assert_eq!(lower_confidence_bound(mean, 4.0, 0.0), mean);
        }
    }

    fn unit_space_1d() -> SearchSpace {
        SearchSpace::new(vec![Dimension::continuous("x", 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn propose_avoids_noise_free_training_point() {
        let model = gp::fit(&[vec![0.5]], &[1.0], KernelHyper::isotropic(1.0, 0.3, 0.0, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = AcquisitionSpec::default();
        let p = propose(&model, &unit_space_1d(), &spec, &mut rng).unwrap();
        assert_ne!(p.0[0], 0.5);
    }

    #[test]
    fn lcb_proposal_pulled_toward_low_and_unexplored() {
        let model = gp::fit(
            &[vec![0.0], vec![1.0]],
            &[1.0, 0.0],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 1),
        )
        .unwrap();
        let spec = AcquisitionSpec::LowerConfidenceBound { kappa: 1.96 };
        // brute-force oracle on a 1001-point grid
        let mut oracle_best = f64::INFINITY;
        let mut oracle_x = 0.0;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let (m, v) = gp::predict(&model, &UnitPoint(vec![x]));
            let lcb = lower_confidence_bound(m, v, 1.96);
            if lcb < oracle_best {
                oracle_best = lcb;
                oracle_x = x;
            }
        }
        assert!(oracle_x > 0.5, "oracle minimizer at {oracle_x}");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = propose(&model, &unit_space_1d(), &spec, &mut rng).unwrap();
        assert!(p.0[0] > 0.5 && p.0[0] <= 1.0, "proposal at {}", p.0[0]);
    }

    #[test]
    fn propose_deterministic_given_seed() {
        let model = gp::fit(
            &[vec![0.2], vec![0.8]],
            &[1.0, 2.0],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 1),
        )
        .unwrap();
        let spec = AcquisitionSpec::default();
        let a = propose(&model, &unit_space_1d(), &spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = propose(&model, &unit_space_1d(), &spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn propose_stays_in_space() {
        let space = SearchSpace::new(vec![
            Dimension::continuous("a", -5.0, 5.0),
            Dimension::discrete("b", vec![1.0, 2.0, 4.0]),
        ])
        .unwrap();
        let model = gp::fit(
            &[vec![0.1, 0.0], vec![0.9, 1.0]],
            &[1.0, 2.0],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 2),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = propose(&model, &space, &AcquisitionSpec::default(), &mut rng).unwrap();
            assert!(space.check_point(&p).is_ok());
        }
    }

    #[test]
    fn batch_of_one_equals_propose() {
        let model = gp::fit(
            &[vec![0.2], vec![0.8]],
            &[1.0, 2.0],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 1),
        )
        .unwrap();
        let spec = AcquisitionSpec::default();
        let single =
            propose(&model, &unit_space_1d(), &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let batch = propose_batch(
            &model,
            &unit_space_1d(),
            &spec,
            1,
            LieStrategy::ConstantLiarMin,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_eq!(batch, vec![single]);
    }

    #[test]
    fn batch_points_pairwise_distinct_2d() {
        let space = SearchSpace::new(vec![
            Dimension::continuous("a", 0.0, 1.0),
            Dimension::continuous("b", 0.0, 1.0),
        ])
        .unwrap();
        let model = gp::fit(
            &[vec![0.2, 0.3], vec![0.7, 0.6], vec![0.5, 0.9]],
            &[1.0, 2.0, 0.5],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 2),
        )
        .unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = propose_batch(
                &model,
                &space,
                &AcquisitionSpec::default(),
                5,
                LieStrategy::ConstantLiarMin,
                &mut rng,
            )
            .unwrap();
            assert_eq!(batch.len(), 5);
            for i in 0..5 {
                for j in 0..i {
                    assert_ne!(batch[i], batch[j], "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn constant_liar_min_uses_best_observed() {
        assert_eq!(LieStrategy::ConstantLiarMin.lie_value(&[3.0, 7.0]), 3.0);
        assert_eq!(LieStrategy::ConstantLiarMax.lie_value(&[3.0, 7.0]), 7.0);
        assert_eq!(LieStrategy::ConstantLiarMean.lie_value(&[3.0, 7.0]), 5.0);
    }

    #[test]
    fn batch_leaves_real_model_untouched() {
        let model = gp::fit(
            &[vec![0.2], vec![0.8]],
            &[1.0, 2.0],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 1),
        )
        .unwrap();
        let before = format!("{model:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        propose_batch(
            &model,
            &unit_space_1d(),
            &AcquisitionSpec::default(),
            4,
            LieStrategy::ConstantLiarMin,
            &mut rng,
        )
        .unwrap();
        assert_eq!(before, format!("{model:?}"));
    }

    #[test]
    fn discrete_batch_distinct_while_cells_remain() {
        let space = SearchSpace::new(vec![
            Dimension::discrete("a", vec![0.0, 1.0, 2.0]),
            Dimension::discrete("b", vec![0.0, 1.0]),
        ])
        .unwrap();
        let model = gp::fit(
            &[vec![0.0, 0.0]],
            &[1.0],
            KernelHyper::isotropic(1.0, 0.3, 1e-8, 2),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = propose_batch(
            &model,
            &space,
            &AcquisitionSpec::default(),
            5,
            LieStrategy::ConstantLiarMin,
            &mut rng,
        )
        .unwrap();
        for i in 0..batch.len() {
            for j in 0..i {
                assert_ne!(batch[i], batch[j]);
            }
        }
    }
}
