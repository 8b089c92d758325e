use std::collections::BTreeMap;

use rhobar_core::ctools::{CostSpec, Grid, Interval};
use rhobar_core::equivariant::{MeanFunction, Potential, UnivariatePiece};
use rhobar_core::nalgebra::DMatrix;
use rhobar_core::{Alphabet, SourceSpec, DEFAULT_ENUMERATION_CAP};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sources: BTreeMap<String, SourceConf>,
    #[serde(default)]
    pub potentials: BTreeMap<String, PotentialConf>,
    #[serde(default)]
    pub costs: BTreeMap<String, CostConf>,
    #[serde(default)]
    pub tasks: Vec<TaskConf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default = "default_cap")]
    pub enumeration: u64,
}

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

impl Default for Caps {
    fn default() -> Self {
        Self { enumeration: default_cap() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub sandwich: f64,
    pub superadditivity: f64,
    pub concavity: f64,
    pub curvature: f64,
    pub residual: f64,
    pub marginal: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { sandwich: 1e-8, superadditivity: 1e-8, concavity: 1e-9, curvature: 1e-4, residual: 1e-8, marginal: 1e-12 }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<(), CliError> {
        let named = [
            ("sandwich", self.sandwich),
            ("superadditivity", self.superadditivity),
            ("concavity", self.concavity),
            ("curvature", self.curvature),
            ("residual", self.residual),
            ("marginal", self.marginal),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::validation(format!("tolerance `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AlphabetConf {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

impl AlphabetConf {
    fn build(&self) -> rhobar_core::Result<Alphabet> {
        match self {
            Self::Scalar(v) => Alphabet::scalar(v),
            Self::Vector(v) => Alphabet::new(v.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConf {
    Iid { alphabet: AlphabetConf, pmf: Vec<f64> },
    Markov { alphabet: AlphabetConf, transition: Vec<Vec<f64>> },
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err("matrix rows must be nonempty and of equal length".into());
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl SourceConf {
    pub fn build(&self) -> Result<SourceSpec, String> {
        match self {
            Self::Iid { alphabet, pmf } => {
                SourceSpec::iid(alphabet.build().map_err(|e| e.to_string())?, pmf.clone()).map_err(|e| e.to_string())
            }
            Self::Markov { alphabet, transition } => {
                SourceSpec::markov(alphabet.build().map_err(|e| e.to_string())?, matrix(transition)?)
                    .map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConf {
    ArQuadratic {
        eps: f64,
    },
    Quadratic {
        matrix: Vec<Vec<f64>>,
        #[serde(default = "one")]
        dim: usize,
    },
    SumOfUnivariate {
        pieces: Vec<UnivariatePiece>,
        #[serde(default = "one")]
        dim: usize,
    },
    MeanBased {
        order: usize,
        mean: MeanFunction,
    },
}

fn one() -> usize {
    1
}

impl PotentialConf {
    pub fn build(&self) -> Result<Potential, String> {
        let r = match self {
            Self::ArQuadratic { eps } => Potential::ar_quadratic(*eps),
            Self::Quadratic { matrix: m, dim } => Potential::quadratic(matrix(m)?, *dim),
            Self::SumOfUnivariate { pieces, dim } => Potential::sum_of_univariate(pieces.clone(), *dim),
            Self::MeanBased { order, mean } => Potential::mean_based(*order, *mean),
        };
        r.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConf {
    Squared {
        #[serde(default)]
        half: bool,
    },
    PPower {
        p: f64,
        #[serde(default)]
        domains: Option<[[f64; 2]; 2]>,
    },
    LogDistance {
        domains: [[f64; 2]; 2],
    },
    Hamming,
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
        values: Vec<f64>,
    },
}

fn domains(d: &[[f64; 2]; 2]) -> rhobar_core::Result<(Interval, Interval)> {
    Ok((Interval::new(d[0][0], d[0][1])?, Interval::new(d[1][0], d[1][1])?))
}

impl CostConf {
    pub fn build(&self) -> Result<CostSpec, String> {
        let r = match self {
            Self::Squared { half: true } => Ok(CostSpec::squared_half()),
            Self::Squared { half: false } => Ok(CostSpec::squared()),
            Self::PPower { p, domains: d } => match d {
                Some(d) => domains(d).and_then(|d| CostSpec::p_power(*p, Some(d))),
                None => CostSpec::p_power(*p, None),
            },
            Self::LogDistance { domains: d } => domains(d).and_then(|(a, b)| CostSpec::log_distance(a, b)),
            Self::Hamming => Ok(CostSpec::hamming()),
            Self::Tabulated { xs, ys, values } => CostSpec::tabulated(xs.clone(), ys.clone(), values.clone()),
        };
        r.map_err(|e| e.to_string())
    }
}

/// Grid as explicit points or `count` points spread over `[lo, hi]`
/// (strictly inside when `interior` is set).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridConf {
    Points(Vec<f64>),
    Range {
        lo: f64,
        hi: f64,
        count: usize,
        #[serde(default)]
        interior: bool,
    },
}

impl GridConf {
    pub fn build(&self) -> rhobar_core::Result<Grid> {
        match self {
            Self::Points(p) => Grid::new(p.clone()),
            Self::Range { lo, hi, count, interior: false } => Grid::uniform(*lo, *hi, *count),
            Self::Range { lo, hi, count, interior: true } => Grid::interior(Interval::new(*lo, *hi)?, *count),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    #[default]
    Convex,
    CConcave,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Stable,
    Violated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConf {
    pub rows: usize,
    pub cols: usize,
    pub mass: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    RhoSequence {
        left: String,
        right: String,
        cost: String,
        n_max: usize,
    },
    Couple {
        source: String,
        potential: String,
        cost: String,
        #[serde(default)]
        code: CodeKind,
        #[serde(default = "default_n_max")]
        n_max: usize,
        #[serde(default)]
        mc_samples: Option<usize>,
    },
    Ctransform {
        cost: String,
        xs: GridConf,
        ys: GridConf,
        f: Vec<f64>,
    },
    Curvature {
        cost: String,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Stability {
        cost: String,
        xs: GridConf,
        ys: GridConf,
        n: usize,
        trials: usize,
        #[serde(default)]
        expect: Option<Expectation>,
    },
    Field {
        left: String,
        right: String,
        cost: String,
        d: usize,
        sites: Vec<Vec<i64>>,
    },
    ArInverse {
        eps: f64,
        s_max: usize,
        #[serde(default)]
        t_max: Option<usize>,
    },
    Glue {
        p12: JointConf,
        p23: JointConf,
    },
}

fn default_n_max() -> usize {
    3
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::RhoSequence { .. } => "rho_sequence",
            Self::Couple { .. } => "couple",
            Self::Ctransform { .. } => "ctransform",
            Self::Curvature { .. } => "curvature",
            Self::Stability { .. } => "stability",
            Self::Field { .. } => "field",
            Self::ArInverse { .. } => "ar_inverse",
            Self::Glue { .. } => "glue",
        }
    }

    fn references(&self) -> Vec<(&'static str, &str)> {
        match self {
            Self::RhoSequence { left, right, cost, .. } | Self::Field { left, right, cost, .. } => {
                vec![("source", left), ("source", right), ("cost", cost)]
            }
            Self::Couple { source, potential, cost, .. } => {
                vec![("source", source), ("potential", potential), ("cost", cost)]
            }
            Self::Ctransform { cost, .. } | Self::Curvature { cost, .. } | Self::Stability { cost, .. } => {
                vec![("cost", cost)]
            }
            Self::ArInverse { .. } | Self::Glue { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskConf {
    pub name: String,
    pub spec: TaskSpec,
    /// The task table as written, echoed into the report.
    pub raw: toml::Value,
}

impl<'de> Deserialize<'de> for TaskConf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = toml::Value::deserialize(d)?;
        let mut table = raw.as_table().cloned().ok_or_else(|| D::Error::custom("task must be a table"))?;
        let name = match table.remove("name") {
            Some(toml::Value::String(s)) => s,
            Some(_) => return Err(D::Error::custom("task name must be a string")),
            None => return Err(D::Error::custom("task is missing `name`")),
        };
        let spec = TaskSpec::deserialize(toml::Value::Table(table))
            .map_err(|e| D::Error::custom(format!("task `{name}`: {}", e.message())))?;
        Ok(Self { name, spec, raw })
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::validation(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.tolerances.validate()?;
        if self.caps.enumeration == 0 {
            return Err(CliError::validation("enumeration cap must be positive"));
        }
        let mut names = std::collections::HashSet::new();
        for task in &self.tasks {
            if !names.insert(task.name.as_str()) {
                return Err(CliError::validation(format!("duplicate task name `{}`", task.name)));
            }
            for (what, reference) in task.spec.references() {
                let known = match what {
                    "source" => self.sources.contains_key(reference),
                    "potential" => self.potentials.contains_key(reference),
                    _ => self.costs.contains_key(reference),
                };
                if !known {
                    return Err(CliError::validation(format!(
                        "task `{}` references unknown {what} `{reference}`",
                        task.name
                    )));
                }
            }
        }
        Ok(())
    }
}
