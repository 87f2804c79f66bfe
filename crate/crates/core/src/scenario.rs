//! Synthetic data generators for the replicate studies and their true densities.

use nalgebra::DVector;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::dist::{mvn_from_normals, mvn_logpdf_unchecked, standard_normals};
use crate::mathcore::{RngStream, SpdMatrix};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Equal-weight mixture of `N((−2,−2), [[1, .85], [.85, 1]])` and `N((2,2), I)`.
    Mog2d,
    /// Univariate Student t with 2 degrees of freedom.
    StudentT,
}

impl ScenarioKind {
    pub fn dim(self) -> usize {
        match self {
            ScenarioKind::Mog2d => 2,
            ScenarioKind::StudentT => 1,
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mog2d" => Ok(ScenarioKind::Mog2d),
            "student_t" => Ok(ScenarioKind::StudentT),
            _ => Err(Error::InvalidParameter(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        Ok(())
    }
}

fn mog2d_components() -> [(Vec<f64>, SpdMatrix); 2] {
    [
        (
            vec![-2.0, -2.0],
            SpdMatrix::from_rows(&[vec![1.0, 0.85], vec![0.85, 1.0]]).expect("valid covariance"),
        ),
        (vec![2.0, 2.0], SpdMatrix::identity(2)),
    ]
}

/// Draws `n` observations from the scenario, multiplied by `c`.
pub fn simulate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, 0);
    let d = spec.kind.dim();
    let mut values = Vec::with_capacity(spec.n * d);
    match spec.kind {
        ScenarioKind::Mog2d => {
            let comps = mog2d_components();
            let means: Vec<DVector<f64>> = comps.iter().map(|(m, _)| DVector::from_column_slice(m)).collect();
            for _ in 0..spec.n {
                let k = usize::from(rng.uniform() >= 0.5);
                let z = standard_normals(2, &mut rng);
                let x = mvn_from_normals(&means[k], &comps[k].1, &z);
                values.extend(x.iter().map(|v| v * spec.c));
            }
        }
        ScenarioKind::StudentT => {
            let t = StudentT::new(2.0).expect("valid degrees of freedom");
            for _ in 0..spec.n {
                let x: f64 = t.sample(&mut rng);
                values.push(x * spec.c);
            }
        }
    }
    Dataset::new(spec.n, d, values)
}

/// Density of `c X` for the scenario's `X`.
pub fn true_density(kind: ScenarioKind, c: f64, x: &[f64]) -> f64 {
    let d = kind.dim();
    let y: Vec<f64> = x.iter().map(|v| v / c).collect();
    let f = match kind {
        ScenarioKind::Mog2d => mog2d_components()
            .iter()
            .map(|(m, s)| 0.5 * mvn_logpdf_unchecked(&y, m, s).exp())
            .sum::<f64>(),
        ScenarioKind::StudentT => (1.0 + y[0] * y[0] / 2.0).powf(-1.5) / (2.0 * 2f64.sqrt()),
    };
    f / c.powi(d as i32)
}
