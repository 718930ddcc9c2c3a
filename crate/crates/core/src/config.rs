//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! [grid]
//! d = 3
//! n = 17
//! L = 4.0
//! [potential]
//! kind = "power"
//! coefficient = 1.0
//! exponent = 2.0
//! [weight]
//! kind = "power"
//! alpha = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FamilyPolicy, Grid, ScalarField};
use crate::ladder::Ladders;
use crate::oscillation::{Symbol, SymbolKind};
use crate::potentials::{CriticalRadiusField, Potential, PotentialKind, DEFAULT_RHO_TOL};
use crate::riesz::{OperatorOptions, Transform, DEFAULT_DENSE_CAP};
use crate::verify::{DEFAULT_LAMBDA_POINTS, DEFAULT_SUITE_SIZE};
use crate::weights::{Weight, WeightKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            d: 3,
            n: 17,
            half_width: 4.0,
        }
    }
}

impl GridSection {
    /// Parses `d,n,L`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("expected d,n,L, got {text:?}")));
        }
        let bad = |what: &str| Error::Parse(format!("bad {what} in {text:?}"));
        Ok(GridSection {
            d: parts[0].parse().map_err(|_| bad("d"))?,
            n: parts[1].parse().map_err(|_| bad("n"))?,
            half_width: parts[2].parse().map_err(|_| bad("L"))?,
        })
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.d, self.half_width, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSection {
    #[serde(flatten)]
    pub kind: PotentialKind,
    /// Sample file for `kind = "samples"` (text or binary field format).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            kind: PotentialKind::Constant { value: 1.0 },
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSection {
    #[serde(flatten)]
    pub kind: WeightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for WeightSection {
    fn default() -> Self {
        WeightSection {
            kind: WeightKind::Constant { value: 1.0 },
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSection {
    #[serde(flatten)]
    pub kind: SymbolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for SymbolSection {
    fn default() -> Self {
        SymbolSection {
            kind: SymbolKind::Log,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub p: f64,
    pub kappa: f64,
    pub theta: f64,
    /// Commutator orders to run.
    pub orders: Vec<u32>,
    pub transforms: Vec<Transform>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            p: 2.0,
            kappa: 0.3,
            theta: 1.0,
            orders: vec![1, 2],
            transforms: vec![Transform::Riesz, Transform::Dual],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub count: usize,
    pub lambda_points: usize,
    /// Explicit λ levels for the endpoint suite; empty means per-output default.
    pub lambdas: Vec<f64>,
}

impl Default for SuiteSection {
    fn default() -> Self {
        SuiteSection {
            count: DEFAULT_SUITE_SIZE,
            lambda_points: DEFAULT_LAMBDA_POINTS,
            lambdas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoSection {
    pub tolerance: f64,
}

impl Default for RhoSection {
    fn default() -> Self {
        RhoSection {
            tolerance: DEFAULT_RHO_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub dense_cap: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for OperatorSection {
    fn default() -> Self {
        OperatorSection {
            dense_cap: DEFAULT_DENSE_CAP,
            cache_dir: None,
        }
    }
}

impl OperatorSection {
    pub fn options(&self) -> OperatorOptions {
        OperatorOptions {
            dense_cap: self.dense_cap,
            cache_dir: self.cache_dir.clone(),
        }
    }
}

fn default_family() -> FamilyPolicy {
    FamilyPolicy::geometric(2, 0.75, 3)
        .with_boundary(true)
        .with_box_ball(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub grid: GridSection,
    pub potential: PotentialSection,
    pub weight: WeightSection,
    pub symbol: SymbolSection,
    pub params: ParamsSection,
    pub family: FamilyPolicy,
    pub suite: SuiteSection,
    pub ladders: Ladders,
    pub rho: RhoSection,
    pub operator: OperatorSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            grid: GridSection::default(),
            potential: PotentialSection::default(),
            weight: WeightSection::default(),
            symbol: SymbolSection::default(),
            params: ParamsSection::default(),
            family: default_family(),
            suite: SuiteSection::default(),
            ladders: Ladders::default(),
            rho: RhoSection::default(),
            operator: OperatorSection::default(),
        }
    }
}

fn read_samples(path: &Option<PathBuf>, grid: &Grid, what: &str) -> Result<ScalarField> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{what} samples need a path")))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let field = match ScalarField::from_bytes(&bytes) {
        Ok(f) => f,
        Err(_) => {
            let text = String::from_utf8(bytes).map_err(|_| {
                Error::Parse(format!("{} is neither text nor binary", path.display()))
            })?;
            ScalarField::from_text(&text)?
        }
    };
    if field.grid() != grid {
        return Err(Error::GridMismatch);
    }
    Ok(field)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid.build()
    }

    pub fn potential(&self) -> Result<Potential> {
        let grid = self.grid()?;
        match self.potential.kind {
            PotentialKind::Samples => {
                Potential::from_samples(read_samples(&self.potential.path, &grid, "potential")?)
            }
            ref kind => Potential::new(grid, kind.clone()),
        }
    }

    pub fn weight(&self, rho: Option<&CriticalRadiusField>) -> Result<Weight> {
        let grid = self.grid()?;
        match self.weight.kind {
            WeightKind::Samples => {
                Weight::from_samples(read_samples(&self.weight.path, &grid, "weight")?)
            }
            ref kind => Weight::new(grid, kind.clone(), rho),
        }
    }

    pub fn symbol(&self) -> Result<Symbol> {
        let grid = self.grid()?;
        match self.symbol.kind {
            SymbolKind::Samples => {
                Symbol::from_samples(read_samples(&self.symbol.path, &grid, "symbol")?)
            }
            ref kind => Symbol::new(grid, kind.clone()),
        }
    }
}
