//! Ask/tell strategy interface with three implementations: random search,
//! grid search, and Gaussian-process Bayesian optimization with constant-liar
//! batching.

use crate::acquisition::{self, AcquisitionError, AcquisitionSpec, LieStrategy};
use crate::gp::{self, GpError, GpModel, KernelHyper};
use crate::space::{Point, SearchSpace, SpaceError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("grid exhausted: requested {requested} initial points, grid has {available}")]
    GridExhausted { requested: usize, available: usize },
    #[error("strategy has no completed trials yet")]
    NoCompletedTrials,
    #[error("trial {0} reports a point this strategy never issued")]
    UnknownTrial(u64),
    #[error("trial {0} already told")]
    DuplicateTell(u64),
    #[error("trial {0} is not completed")]
    TrialNotCompleted(u64),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Grid,
    Bayesian {
        #[serde(default)]
        acquisition: AcquisitionSpec,
        #[serde(default)]
        lie: LieStrategy,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Dispatched,
    Completed,
}

/// One dispatched point with its observed value and timing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: u64,
    pub point: Point,
    pub value: f64,
    pub eval_duration_s: f64,
    pub agent_id: u32,
    pub state: TrialState,
}

impl Trial {
    pub fn completed(trial_id: u64, point: Point, value: f64, eval_duration_s: f64, agent_id: u32) -> Self {
        Trial {
            trial_id,
            point,
            value,
            eval_duration_s,
            agent_id,
            state: TrialState::Completed,
        }
    }
}

enum Inner {
    Random,
    Grid { cells: Vec<Point>, cursor: usize },
    Bayesian {
        acquisition: AcquisitionSpec,
        lie: LieStrategy,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        model: Option<GpModel>,
    },
}

/// A strategy instance owned by one coordinator loop; ask/tell are serialized
/// by the owner.
pub struct Strategy {
    space: SearchSpace,
    rng: ChaCha8Rng,
    inner: Inner,
    pending: Vec<Point>,
    completed: Vec<(u64, Point, f64)>,
    told_ids: Vec<u64>,
    best: Option<(u64, Point, f64)>,
}

impl Strategy {
    pub fn new(kind: &StrategyKind, space: SearchSpace, seed: u64) -> Result<Self, StrategyError> {
        let inner = match kind {
            StrategyKind::Random => Inner::Random,
            StrategyKind::Grid => Inner::Grid {
                cells: space.grid_points()?,
                cursor: 0,
            },
            StrategyKind::Bayesian { acquisition, lie } => Inner::Bayesian {
                acquisition: *acquisition,
                lie: *lie,
                inputs: Vec::new(),
                targets: Vec::new(),
                model: None,
            },
        };
        Ok(Strategy {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            inner,
            pending: Vec::new(),
            completed: Vec::new(),
            told_ids: Vec::new(),
            best: None,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn n_completed(&self) -> usize {
        self.completed.len()
    }

    /// Initial points per Algorithm 1: uniform samples for Random/Bayesian,
    /// the first `num_ips` grid cells for Grid.
    pub fn initial_points(&mut self, num_ips: usize) -> Result<Vec<Point>, StrategyError> {
        assert!(num_ips >= 1, "num_ips must be >= 1");
        let points = match &mut self.inner {
            Inner::Random | Inner::Bayesian { .. } => (0..num_ips)
                .map(|_| self.space.sample_uniform(&mut self.rng))
                .collect::<Vec<_>>(),
            Inner::Grid { cells, cursor } => {
                if *cursor + num_ips > cells.len() {
                    return Err(StrategyError::GridExhausted {
                        requested: num_ips,
                        available: cells.len() - *cursor,
                    });
                }
                let pts = cells[*cursor..*cursor + num_ips].to_vec();
                *cursor += num_ips;
                pts
            }
        };
        self.pending.extend(points.iter().cloned());
        Ok(points)
    }

    /// Next batch of at most `n` candidate points.
    pub fn ask(&mut self, n: usize) -> Result<Vec<Point>, StrategyError> {
        assert!(n >= 1, "ask size must be >= 1");
        let points = match &mut self.inner {
            Inner::Random => (0..n)
                .map(|_| self.space.sample_uniform(&mut self.rng))
                .collect::<Vec<_>>(),
            Inner::Grid { cells, cursor } => {
                let take = n.min(cells.len() - *cursor);
                let pts = cells[*cursor..*cursor + take].to_vec();
                *cursor += take;
                pts
            }
            Inner::Bayesian {
                acquisition,
                lie,
                model,
                ..
            } => {
                let model = model.as_ref().ok_or(StrategyError::NoCompletedTrials)?;
                if n == 1 {
                    vec![acquisition::propose(model, &self.space, acquisition, &mut self.rng)?]
                } else {
                    acquisition::propose_batch(
                        model,
                        &self.space,
                        acquisition,
                        n,
                        *lie,
                        &mut self.rng,
                    )?
                }
            }
        };
        self.pending.extend(points.iter().cloned());
        Ok(points)
    }

    /// Records a completed trial. Bayesian refits the GP, re-selecting
    /// hyperparameters once two observations exist.
    pub fn tell(&mut self, trial: &Trial) -> Result<(), StrategyError> {
        if trial.state != TrialState::Completed {
            return Err(StrategyError::TrialNotCompleted(trial.trial_id));
        }
        if self.told_ids.contains(&trial.trial_id) {
            return Err(StrategyError::DuplicateTell(trial.trial_id));
        }
        let pos = self
            .pending
            .iter()
            .position(|p| *p == trial.point)
            .ok_or(StrategyError::UnknownTrial(trial.trial_id))?;
        self.pending.remove(pos);
        self.told_ids.push(trial.trial_id);
        self.completed
            .push((trial.trial_id, trial.point.clone(), trial.value));

        let better = match &self.best {
            None => true,
            Some((_, _, v)) => trial.value < *v,
        };
        if better {
            self.best = Some((trial.trial_id, trial.point.clone(), trial.value));
        }

        if let Inner::Bayesian {
            inputs,
            targets,
            model,
            ..
        } = &mut self.inner
        {
            let u = self.space.normalize(&trial.point)?;
            inputs.push(u.0);
            // a failed evaluation arrives as +inf; substitute a finite
            // worst-case so standardization stays well defined
            targets.push(finite_or_penalty(trial.value, targets));
            let d = self.space.dim();
            let hyper = if inputs.len() >= 2 {
                gp::select_hyperparameters(inputs, targets, d)?
            } else {
                KernelHyper::isotropic(1.0, 0.5, 1e-8, d)
            };
            *model = Some(gp::fit(inputs, targets, hyper)?);
        }
        Ok(())
    }

    /// Best completed trial, ties broken by lowest trial id.
    pub fn best(&self) -> Result<(Point, f64), StrategyError> {
        self.best
            .as_ref()
            .map(|(_, p, v)| (p.clone(), *v))
            .ok_or(StrategyError::NoCompletedTrials)
    }
}

fn finite_or_penalty(value: f64, seen: &[f64]) -> f64 {
    if value.is_finite() {
        return value;
    }
    let finite: Vec<f64> = seen.iter().cloned().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return 1e6;
    }
    let worst = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    worst + (worst - best).abs().max(1.0)
}
