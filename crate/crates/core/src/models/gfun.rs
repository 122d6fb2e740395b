use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square-integrable weight `g` on `[0, T)` defining an observed functional
/// `∫ g dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditioningFunction {
    /// `1` on `[0, T)`.
    Indicator,
    /// `(T - t) / T` on `[0, T)`.
    LinearDecay,
    /// Left-constant interpolation: `values[i]` on `[grid[i], grid[i+1])`.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl ConditioningFunction {
    pub fn eval(&self, t: f64, horizon: f64) -> f64 {
        if t < 0.0 || t >= horizon {
            return 0.0;
        }
        match self {
            ConditioningFunction::Indicator => 1.0,
            ConditioningFunction::LinearDecay => (horizon - t) / horizon,
            ConditioningFunction::Tabulated { grid, values } => {
                let i = grid.partition_point(|&u| u <= t);
                if i == 0 {
                    0.0
                } else {
                    values[i - 1]
                }
            }
        }
    }

    /// Interior points where the function may jump.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            ConditioningFunction::Tabulated { grid, .. } if grid.len() > 2 => &grid[1..grid.len() - 1],
            _ => &[],
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let ConditioningFunction::Tabulated { grid, values } = self else {
            return Ok(());
        };
        if grid.len() < 2 {
            return Err(Error::InvalidInput("tabulated g needs at least two grid points".into()));
        }
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if grid[0] != 0.0 || (grid[grid.len() - 1] - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "tabulated g grid must run from 0 to T = {horizon}"
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("tabulated g grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("tabulated g values must be finite".into()));
        }
        Ok(())
    }
}

/// Ordered conditioning functions together with the observed values `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSet {
    pub functions: Vec<ConditioningFunction>,
    pub x: Vec<f64>,
}

impl ConditioningSet {
    pub fn new(functions: Vec<ConditioningFunction>, x: Vec<f64>) -> Result<Self> {
        let set = ConditioningSet { functions, x };
        if set.functions.is_empty() {
            return Err(Error::InvalidInput("at least one conditioning function is required".into()));
        }
        if set.x.len() != set.functions.len() {
            return Err(Error::DimensionMismatch {
                expected: set.functions.len(),
                found: set.x.len(),
            });
        }
        if set.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observed values must be finite".into()));
        }
        Ok(set)
    }

    /// The two functions used throughout the worked examples.
    pub fn indicator_and_decay(x: [f64; 2]) -> Self {
        ConditioningSet {
            functions: vec![ConditioningFunction::Indicator, ConditioningFunction::LinearDecay],
            x: x.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        ConditioningSet::new(self.functions.clone(), self.x.clone())?;
        self.functions.iter().try_for_each(|g| g.validate(horizon))
    }

    pub fn with_x(&self, x: Vec<f64>) -> Result<Self> {
        ConditioningSet::new(self.functions.clone(), x)
    }
}
