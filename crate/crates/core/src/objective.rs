//! Objective-function bindings evaluated inside agents: Ackley, a
//! delay-injection wrapper, and deterministic synthetic stand-ins over the
//! two table fixtures.

use crate::space::{Dimension, Point, SearchSpace};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("unknown objective `{0}`")]
    UnknownObjective(String),
    #[error("point out of space: {0}")]
    PointOutOfSpace(#[from] crate::space::SpaceError),
    #[error("objective `{name}`: bad parameter {param}")]
    BadParam { name: String, param: String },
}

/// Named objective selection as it appears in the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl ObjectiveSpec {
    pub fn named(name: &str) -> Self {
        ObjectiveSpec {
            name: name.to_string(),
            params: serde_json::Map::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    fn param_f64(&self, key: &str, default: f64) -> Result<f64, ObjectiveError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| ObjectiveError::BadParam {
                name: self.name.clone(),
                param: key.to_string(),
            }),
        }
    }

    /// Resolves the named binding. An optional `delay_s` param wraps any base
    /// objective with an evaluation delay.
    pub fn resolve(&self) -> Result<Objective, ObjectiveError> {
        let base = match self.name.as_str() {
            "ackley" | "ackley+delay" => Objective::Ackley {
                a: self.param_f64("a", 20.0)?,
                b: self.param_f64("b", 0.2)?,
                c: self.param_f64("c", 2.0 * std::f64::consts::PI)?,
            },
            "synthetic_satellite" => Objective::SyntheticSatellite,
            "synthetic_multimodal" => Objective::SyntheticMultimodal {
                noise_std: self.param_f64("noise_std", 0.0)?,
            },
            other => return Err(ObjectiveError::UnknownObjective(other.to_string())),
        };
        let delay_s = self.param_f64("delay_s", 0.0)?;
        if !(delay_s.is_finite() && delay_s >= 0.0) {
            return Err(ObjectiveError::BadParam {
                name: self.name.clone(),
                param: "delay_s".to_string(),
            });
        }
        Ok(if delay_s > 0.0 {
            with_delay(base, delay_s)
        } else {
            base
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Ackley { a: f64, b: f64, c: f64 },
    SyntheticSatellite,
    SyntheticMultimodal { noise_std: f64 },
    Delayed { base: Box<Objective>, delay_s: f64 },
}

/// Wraps a binding so every evaluation sleeps `delay_s` wall-clock seconds.
pub fn with_delay(base: Objective, delay_s: f64) -> Objective {
    assert!(delay_s.is_finite() && delay_s >= 0.0);
    Objective::Delayed {
        base: Box::new(base),
        delay_s,
    }
}

impl Objective {
    pub fn evaluate<R: Rng>(&self, p: &Point, rng: &mut R) -> Result<f64, ObjectiveError> {
        match self {
            Objective::Ackley { a, b, c } => Ok(ackley(p.coords(), *a, *b, *c)),
            Objective::SyntheticSatellite => synthetic_satellite(p),
            Objective::SyntheticMultimodal { noise_std } => {
                synthetic_multimodal(p, *noise_std, rng)
            }
            Objective::Delayed { base, delay_s } => {
                std::thread::sleep(Duration::from_secs_f64(*delay_s));
                base.evaluate(p, rng)
            }
        }
    }
}

/// Ackley function with mean-normalized sums; zero at the origin.
pub fn ackley(x: &[f64], a: f64, b: f64, c: f64) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    -a * (-b * sq.sqrt()).exp() - cs.exp() + a + std::f64::consts::E
}

/// Ackley search space `[-5, 5]^d`.
pub fn ackley_space(d: usize) -> SearchSpace {
    SearchSpace::new(
        (0..d)
            .map(|i| Dimension::continuous(&format!("x{i}"), -5.0, 5.0))
            .collect(),
    )
    .unwrap()
}

fn range_values(lo: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Satellite-scheduler grid fixture: turning rate, view height, satellite
/// count; 9 x 6 x 5 = 270 cells.
pub fn table2_space() -> SearchSpace {
    SearchSpace::new(vec![
        Dimension::discrete("turning_rate", range_values(1.0, 0.25, 9)),
        Dimension::discrete("view_height", range_values(0.25, 0.25, 6)),
        Dimension::discrete("num_satellites", range_values(2.0, 1.0, 5)),
    ])
    .unwrap()
}

/// Citation-graph fixture: paper weight, topic weight, tied tau threshold,
/// simulation steps.
pub fn table1_space() -> SearchSpace {
    SearchSpace::new(vec![
        Dimension::discrete("paper_to_paper_weight", range_values(100.0, 1.0, 401)),
        Dimension::discrete("train_to_topic_weight", range_values(1.0, 1.0, 10)),
        Dimension::discrete("val_to_topic_tau", range_values(20.0, 1.0, 41)),
        Dimension::discrete("simulation_steps", range_values(5.0, 2.0, 5)),
    ])
    .unwrap()
}

/// Continuous 4-d space with the same ranges as [`table1_space`], used by
/// the multimodal stand-in.
pub fn multimodal_space() -> SearchSpace {
    SearchSpace::new(vec![
        Dimension::continuous("paper_to_paper_weight", 100.0, 500.0),
        Dimension::continuous("train_to_topic_weight", 1.0, 10.0),
        Dimension::continuous("val_to_topic_tau", 20.0, 60.0),
        Dimension::continuous("simulation_steps", 5.0, 13.0),
    ])
    .unwrap()
}

/// Deterministic separable quadratic over the satellite grid with its unique
/// minimizer at (2.0, 1.0, 4).
pub fn synthetic_satellite(p: &Point) -> Result<f64, ObjectiveError> {
    table2_space().check_point(p)?;
    let c = p.coords();
    let (turning, view, sats) = (c[0], c[1], c[2]);
    Ok((turning - 2.0).powi(2) + 4.0 * (view - 1.0).powi(2) + 0.5 * (sats - 4.0).powi(2))
}

const MULTIMODAL_OPT_U: f64 = 0.7;
const MULTIMODAL_SCALE: f64 = 4.0;

/// Rastrigin-style multimodal surface on normalized coordinates with the
/// optimum shifted off-center, plus optional gaussian noise.
pub fn synthetic_multimodal<R: Rng>(
    p: &Point,
    noise_std: f64,
    rng: &mut R,
) -> Result<f64, ObjectiveError> {
    let space = multimodal_space();
    // accept both the continuous space and the Table I discrete fixture:
    // ranges coincide, so normalize against the continuous bounds
    if p.coords().len() != space.dim() {
        return Err(ObjectiveError::PointOutOfSpace(
            crate::space::SpaceError::DimensionMismatch {
                got: p.coords().len(),
                expected: space.dim(),
            },
        ));
    }
    let u = space.normalize(p)?;
    let d = u.0.len() as f64;
    let mut value = 10.0 * d;
    for ui in &u.0 {
        let z = MULTIMODAL_SCALE * (ui - MULTIMODAL_OPT_U);
        value += z * z - 10.0 * (2.0 * std::f64::consts::PI * z).cos();
    }
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).unwrap();
        value += noise.sample(rng);
    }
    Ok(value)
}

/// The point where [`synthetic_multimodal`] attains zero.
pub fn multimodal_optimum() -> Point {
    let space = multimodal_space();
    space
        .denormalize(&crate::space::UnitPoint(vec![MULTIMODAL_OPT_U; 4]))
        .unwrap()
}
