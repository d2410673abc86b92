//! Search-space definitions: dimensions, points, sampling, grid enumeration,
//! and unit-cube normalization shared by every strategy.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("dimension `{0}`: continuous bounds must satisfy lo < hi and be finite")]
    BadContinuousBounds(String),
    #[error("dimension `{0}`: discrete values must be non-empty, finite, strictly increasing")]
    BadDiscreteValues(String),
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
    #[error("search space must have at least one dimension")]
    EmptySpace,
    #[error("grid search requires all dimensions discrete; `{0}` is continuous")]
    ContinuousDimensionInGrid(String),
    #[error("point has {got} coordinates, space has {expected} dimensions")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("coordinate {index} = {value} is outside dimension `{name}`")]
    PointOutOfSpace {
        index: usize,
        value: f64,
        name: String,
    },
    #[error("unit coordinate {index} = {value} outside [0, 1]")]
    UnitCoordinateOutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DimensionKind {
    Continuous { lo: f64, hi: f64 },
    Discrete { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimensionKind,
}

impl Dimension {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Dimension {
            name: name.to_string(),
            kind: DimensionKind::Continuous { lo, hi },
        }
    }

    pub fn discrete(name: &str, values: Vec<f64>) -> Self {
        Dimension {
            name: name.to_string(),
            kind: DimensionKind::Discrete { values },
        }
    }

    fn validate(&self) -> Result<(), SpaceError> {
        match &self.kind {
            DimensionKind::Continuous { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(SpaceError::BadContinuousBounds(self.name.clone()));
                }
            }
            DimensionKind::Discrete { values } => {
                let ok = !values.is_empty()
                    && values.iter().all(|v| v.is_finite())
                    && values.windows(2).all(|w| w[0] < w[1]);
                if !ok {
                    return Err(SpaceError::BadDiscreteValues(self.name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        match &self.kind {
            DimensionKind::Continuous { lo, hi } => x >= *lo && x <= *hi,
            DimensionKind::Discrete { values } => values.contains(&x),
        }
    }
}

/// A point in the raw parameter space, one coordinate per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// A point in the unit cube `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPoint(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, SpaceError> {
        if dims.is_empty() {
            return Err(SpaceError::EmptySpace);
        }
        for (i, d) in dims.iter().enumerate() {
            d.validate()?;
            if dims[..i].iter().any(|e| e.name == d.name) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
        }
        Ok(SearchSpace { dims })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn check_point(&self, p: &Point) -> Result<(), SpaceError> {
        if p.0.len() != self.dims.len() {
            return Err(SpaceError::DimensionMismatch {
                got: p.0.len(),
                expected: self.dims.len(),
            });
        }
        for (i, (x, d)) in p.0.iter().zip(&self.dims).enumerate() {
            if !d.contains(*x) {
                return Err(SpaceError::PointOutOfSpace {
                    index: i,
                    value: *x,
                    name: d.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Draws one point with each coordinate uniform over its dimension.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Point {
        let coords = self
            .dims
            .iter()
            .map(|d| match &d.kind {
                DimensionKind::Continuous { lo, hi } => lo + rng.gen::<f64>() * (hi - lo),
                DimensionKind::Discrete { values } => values[rng.gen_range(0..values.len())],
            })
            .collect();
        Point(coords)
    }

    /// Total number of grid cells, if every dimension is discrete.
    pub fn grid_size(&self) -> Option<usize> {
        self.dims
            .iter()
            .map(|d| match &d.kind {
                DimensionKind::Discrete { values } => Some(values.len()),
                DimensionKind::Continuous { .. } => None,
            })
            .product()
    }

    /// Full Cartesian product in lexicographic order of dimension indices
    /// (first dimension slowest).
    pub fn grid_points(&self) -> Result<Vec<Point>, SpaceError> {
        let mut value_sets = Vec::with_capacity(self.dims.len());
        for d in &self.dims {
            match &d.kind {
                DimensionKind::Discrete { values } => value_sets.push(values.as_slice()),
                DimensionKind::Continuous { .. } => {
                    return Err(SpaceError::ContinuousDimensionInGrid(d.name.clone()))
                }
            }
        }
        let total: usize = value_sets.iter().map(|v| v.len()).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; value_sets.len()];
        for _ in 0..total {
            points.push(Point(
                idx.iter().zip(&value_sets).map(|(&i, vs)| vs[i]).collect(),
            ));
            for j in (0..idx.len()).rev() {
                idx[j] += 1;
                if idx[j] < value_sets[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(points)
    }

    /// Maps a raw point into the unit cube. Discrete coordinates map by index
    /// position; a single-value dimension maps to 0.5.
    pub fn normalize(&self, p: &Point) -> Result<UnitPoint, SpaceError> {
        self.check_point(p)?;
        let u = p
            .0
            .iter()
            .zip(&self.dims)
            .map(|(x, d)| match &d.kind {
                DimensionKind::Continuous { lo, hi } => (x - lo) / (hi - lo),
                DimensionKind::Discrete { values } => {
                    if values.len() == 1 {
                        0.5
                    } else {
                        let i = values.iter().position(|v| v == x).unwrap();
                        i as f64 / (values.len() - 1) as f64
                    }
                }
            })
            .collect();
        Ok(UnitPoint(u))
    }

    /// Inverse of [`normalize`](Self::normalize); discrete coordinates snap
    /// to the nearest index.
    pub fn denormalize(&self, u: &UnitPoint) -> Result<Point, SpaceError> {
        if u.0.len() != self.dims.len() {
            return Err(SpaceError::DimensionMismatch {
                got: u.0.len(),
                expected: self.dims.len(),
            });
        }
        let mut coords = Vec::with_capacity(self.dims.len());
        for (i, (ui, d)) in u.0.iter().zip(&self.dims).enumerate() {
            if !(*ui >= 0.0 && *ui <= 1.0) {
                return Err(SpaceError::UnitCoordinateOutOfRange {
                    index: i,
                    value: *ui,
                });
            }
            coords.push(match &d.kind {
                DimensionKind::Continuous { lo, hi } => lo + ui * (hi - lo),
                DimensionKind::Discrete { values } => {
                    let idx = (ui * (values.len() - 1) as f64).round() as usize;
                    values[idx]
                }
            });
        }
        Ok(Point(coords))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Table II fixture: turning rate, view height, satellite count.
    pub fn table2_space() -> SearchSpace {
        crate::objective::table2_space()
    }

    fn unit_interval() -> SearchSpace {
        SearchSpace::new(vec![Dimension::continuous("x", 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn invalid_spaces_rejected() {
        assert_eq!(SearchSpace::new(vec![]), Err(SpaceError::EmptySpace));
        assert!(matches!(
            SearchSpace::new(vec![Dimension::continuous("x", 3.0, 3.0)]),
            Err(SpaceError::BadContinuousBounds(_))
        ));
        assert!(matches!(
            SearchSpace::new(vec![Dimension::discrete("x", vec![2.0, 2.0])]),
            Err(SpaceError::BadDiscreteValues(_))
        ));
        assert!(matches!(
            SearchSpace::new(vec![
                Dimension::continuous("x", 0.0, 1.0),
                Dimension::continuous("x", 0.0, 1.0)
            ]),
            Err(SpaceError::DuplicateName(_))
        ));
    }

    #[test]
    fn sample_uniform_maps_linearly() {
        // degenerate "rng" is emulated by checking the linear map directly on
        // a real rng draw
        let space = SearchSpace::new(vec![Dimension::continuous("x", 0.0, 10.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u: f64 = rng.gen();
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let p = space.sample_uniform(&mut rng2);
        assert_eq!(p.0[0], u * 10.0);
    }

    #[test]
    fn sample_uniform_discrete_in_set() {
        let space = SearchSpace::new(vec![Dimension::discrete(
            "satellites",
            vec![2.0, 3.0, 4.0, 5.0, 6.0],
        )])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let p = space.sample_uniform(&mut rng);
            assert!(space.check_point(&p).is_ok());
        }
    }

    #[test]
    fn sample_uniform_mean_matches_uniform_law() {
        let space = unit_interval();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| space.sample_uniform(&mut rng).0[0]).sum::<f64>() / n as f64;
        assert!((0.47..=0.53).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn grid_points_table2_has_270_cells() {
        let g = table2_space().grid_points().unwrap();
        assert_eq!(g.len(), 270);
        // all distinct, all in space
        for (i, p) in g.iter().enumerate() {
            assert!(table2_space().check_point(p).is_ok());
            assert!(!g[..i].contains(p));
        }
    }

    #[test]
    fn grid_points_singleton_and_lexicographic() {
        let s = SearchSpace::new(vec![Dimension::discrete("x", vec![1.0])]).unwrap();
        assert_eq!(s.grid_points().unwrap(), vec![Point(vec![1.0])]);

        let s = SearchSpace::new(vec![
            Dimension::discrete("a", vec![0.0, 1.0]),
            Dimension::discrete("b", vec![0.0, 1.0]),
        ])
        .unwrap();
        let g = s.grid_points().unwrap();
        assert_eq!(
            g,
            vec![
                Point(vec![0.0, 0.0]),
                Point(vec![0.0, 1.0]),
                Point(vec![1.0, 0.0]),
                Point(vec![1.0, 1.0]),
            ]
        );
    }

    #[test]
    fn grid_rejects_continuous() {
        let s = SearchSpace::new(vec![Dimension::continuous("x", 0.0, 1.0)]).unwrap();
        assert!(matches!(
            s.grid_points(),
            Err(SpaceError::ContinuousDimensionInGrid(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let s = SearchSpace::new(vec![Dimension::continuous("x", 0.0, 10.0)]).unwrap();
        assert_eq!(s.normalize(&Point(vec![5.0])).unwrap().0, vec![0.5]);

        // Table I "Train to Topic Weight" values 1..=10
        let vals: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = SearchSpace::new(vec![Dimension::discrete("w", vals)]).unwrap();
        assert_eq!(s.normalize(&Point(vec![1.0])).unwrap().0, vec![0.0]);

        let s = SearchSpace::new(vec![Dimension::continuous("x", -5.0, 5.0)]).unwrap();
        assert_eq!(s.normalize(&Point(vec![-5.0])).unwrap().0, vec![0.0]);
    }

    #[test]
    fn normalize_out_of_space() {
        let s = SearchSpace::new(vec![Dimension::continuous("x", 0.0, 1.0)]).unwrap();
        assert!(matches!(
            s.normalize(&Point(vec![2.0])),
            Err(SpaceError::PointOutOfSpace { .. })
        ));
    }

    #[test]
    fn denormalize_examples() {
        let s = SearchSpace::new(vec![Dimension::continuous("x", 0.0, 10.0)]).unwrap();
        assert_eq!(s.denormalize(&UnitPoint(vec![0.25])).unwrap().0, vec![2.5]);

        // Table I "Paper to Paper Weight" 100..=500
        let vals: Vec<f64> = (100..=500).map(f64::from).collect();
        let s = SearchSpace::new(vec![Dimension::discrete("w", vals)]).unwrap();
        assert_eq!(s.denormalize(&UnitPoint(vec![0.0])).unwrap().0, vec![100.0]);

        // Table I "Simulation Steps" {5,7,9,11,13}: round(0.6 * 4) = 2 -> 9
        let s =
            SearchSpace::new(vec![Dimension::discrete("steps", vec![5.0, 7.0, 9.0, 11.0, 13.0])])
                .unwrap();
        assert_eq!(s.denormalize(&UnitPoint(vec![0.6])).unwrap().0, vec![9.0]);
    }

    #[test]
    fn single_value_dimension_normalizes_to_half() {
        let s = SearchSpace::new(vec![Dimension::discrete("x", vec![3.0])]).unwrap();
        assert_eq!(s.normalize(&Point(vec![3.0])).unwrap().0, vec![0.5]);
        assert_eq!(s.denormalize(&UnitPoint(vec![0.5])).unwrap().0, vec![3.0]);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_identity(seed in 0u64..1000) {
            let space = SearchSpace::new(vec![
                Dimension::continuous("a", -5.0, 5.0),
                Dimension::discrete("b", vec![5.0, 7.0, 9.0, 11.0, 13.0]),
                Dimension::continuous("c", 100.0, 500.0),
            ]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = space.sample_uniform(&mut rng);
            let back = space.denormalize(&space.normalize(&p).unwrap()).unwrap();
            for (x, y) in p.0.iter().zip(&back.0) {
                let tol = 1e-12 * x.abs().max(1.0);
                proptest::prop_assert!((x - y).abs() <= tol);
            }
            // discrete dim must round-trip exactly
            proptest::prop_assert_eq!(p.0[1], back.0[1]);
        }
    }

    #[test]
    fn fuzz_sample_uniform_invariants() {
        let space = SearchSpace::new(vec![
            Dimension::continuous("a", -1.0, 1.0),
            Dimension::discrete("b", vec![0.0, 0.5, 10.0]),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            let p = space.sample_uniform(&mut rng);
            assert!(space.check_point(&p).is_ok());
        }
    }
}
