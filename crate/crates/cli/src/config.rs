//! Declarative experiment configuration. Unknown keys are rejected so a
//! typo'd preset fails loudly instead of silently running defaults.

use serde::{Deserialize, Serialize};

use bsdex_core::error::{Error, Result};
use bsdex_core::grid::{concat_grids, tavella_randall_grid, uniform_grid, Grid1D, TensorGrid};
use bsdex_core::integrators::BackwardProblem;
use bsdex_core::presets::{self, Oracle};
use bsdex_core::sparsegrid::AxisFamily;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentMeta,
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: Vec<GridSpec>,
    #[serde(default)]
    pub solve: Option<SolveSpec>,
    #[serde(default)]
    pub sparse: Option<SparseSpec>,
    #[serde(default)]
    pub lsmc: Option<LsmcSpec>,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMeta {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Uniform {
        left: f64,
        center: f64,
        right: f64,
        half_count: usize,
    },
    TavellaRandall {
        left: f64,
        center: f64,
        right: f64,
        half_count: usize,
        g1: f64,
        g2: f64,
    },
    Concat {
        parts: Vec<GridSpec>,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        match self {
            GridSpec::Uniform {
                left,
                center,
                right,
                half_count,
            } => uniform_grid(*left, *center, *right, *half_count),
            GridSpec::TavellaRandall {
                left,
                center,
                right,
                half_count,
                g1,
                g2,
            } => tavella_randall_grid(*left, *center, *right, *half_count, *g1, *g2),
            GridSpec::Concat { parts } => {
                if parts.len() < 2 {
                    return Err(Error::invalid("concat grid needs at least two parts"));
                }
                let mut acc = parts[0].build()?;
                for part in &parts[1..] {
                    acc = concat_grids(&acc, &part.build()?)?;
                }
                Ok(acc)
            }
        }
    }
}

/// Level-parameterized axis for sparse-grid runs (the level fixes the node
/// count, so no half_count here).
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisSpec {
    Uniform {
        left: f64,
        center: f64,
        right: f64,
    },
    TavellaRandall {
        left: f64,
        center: f64,
        right: f64,
        g1: f64,
        g2: f64,
    },
}

impl AxisSpec {
    pub fn family(&self) -> AxisFamily {
        match self {
            AxisSpec::Uniform {
                left,
                center,
                right,
            } => AxisFamily::uniform(*left, *center, *right),
            AxisSpec::TavellaRandall {
                left,
                center,
                right,
                g1,
                g2,
            } => AxisFamily::tavella_randall(*left, *center, *right, *g1, *g2),
        }
    }

    /// Fixed grid at a given node budget, used for the error-evaluation grid.
    pub fn build(&self, half_count: usize) -> Result<Grid1D> {
        match self {
            AxisSpec::Uniform {
                left,
                center,
                right,
            } => uniform_grid(*left, *center, *right, half_count),
            AxisSpec::TavellaRandall {
                left,
                center,
                right,
                g1,
                g2,
            } => tavella_randall_grid(*left, *center, *right, half_count, *g1, *g2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub schemes: Vec<String>,
    pub n_steps: Vec<usize>,
    #[serde(default = "default_krylov_m")]
    pub krylov_m: usize,
}

fn default_krylov_m() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SparseSpec {
    pub q: Vec<usize>,
    pub axes: Vec<AxisSpec>,
    pub scheme: String,
    pub n_steps: Vec<usize>,
    #[serde(default = "default_krylov_m")]
    pub krylov_m: usize,
    /// Node budget per axis for the error-evaluation grid (half counts).
    #[serde(default)]
    pub window_grid_half_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LsmcSpec {
    pub n_paths: usize,
    pub n_steps: usize,
    pub degree: usize,
    pub runs: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Per-axis closed window bounds for the sup-error column.
    #[serde(default)]
    pub window: Vec<(f64, f64)>,
    #[serde(default = "default_oracle")]
    pub oracle: String,
}

fn default_oracle() -> String {
    "none".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<String>,
    /// Optional trajectory dump (first scheme/step-count entry only).
    #[serde(default)]
    pub trajectory_path: Option<String>,
    #[serde(default)]
    pub trajectory_node_stride: Option<usize>,
}

/// Model selection plus optional per-field overrides of the reference
/// parameters.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BsLinear {
        horizon: Option<f64>,
        strike: Option<f64>,
        rate: Option<f64>,
        mu: Option<f64>,
        sigma: Option<f64>,
    },
    BsNonlinear {
        horizon: Option<f64>,
        strike: Option<f64>,
        rate: Option<f64>,
        borrow_rate: Option<f64>,
        mu: Option<f64>,
        sigma: Option<f64>,
    },
    HestonSabr {
        horizon: Option<f64>,
        strike: Option<f64>,
        rate: Option<f64>,
        borrow_rate: Option<f64>,
        b: Option<f64>,
        beta: Option<f64>,
        eta: Option<f64>,
        theta: Option<f64>,
        alpha: Option<f64>,
        rho: Option<f64>,
    },
    HypHyp {
        horizon: Option<f64>,
        k1: Option<f64>,
        k2: Option<f64>,
        rate: Option<f64>,
        borrow_rate: Option<f64>,
        b: Option<f64>,
        beta: Option<f64>,
        kappa: Option<f64>,
        sigma0: Option<f64>,
        alpha: Option<f64>,
        rho: Option<f64>,
    },
    Sabr {
        horizon: Option<f64>,
        strike: Option<f64>,
        rate: Option<f64>,
        alpha: Option<f64>,
        beta: Option<f64>,
        rho: Option<f64>,
    },
    BasketHestonSabr {},
}

fn merge<T: Copy>(field: Option<T>, default: T) -> T {
    field.unwrap_or(default)
}

impl ModelSpec {
    /// Builds the backward problem on a given grid.
    pub fn problem(&self, grid: &TensorGrid) -> Result<BackwardProblem> {
        match self {
            ModelSpec::BsLinear { .. } => presets::bs_linear_problem(grid, &self.bs_linear()?),
            ModelSpec::BsNonlinear { .. } => {
                presets::nonlinear_rates_problem(grid, &self.bs_nonlinear()?)
            }
            ModelSpec::HestonSabr { .. } => {
                presets::heston_sabr_problem(grid, &self.heston_sabr()?)
            }
            ModelSpec::HypHyp { .. } => presets::hyphyp_problem(grid, &self.hyphyp()?),
            ModelSpec::Sabr { .. } => presets::sabr_problem(grid, &self.sabr()?),
            ModelSpec::BasketHestonSabr {} => {
                presets::basket_problem(grid, &presets::BasketParams::default())
            }
        }
    }

    pub fn oracle(&self, kind: &str) -> Result<Oracle> {
        match kind {
            "none" => Ok(Oracle::None),
            "bs_analytic" => match self {
                ModelSpec::BsLinear { .. } => Ok(presets::bs_linear_oracle(&self.bs_linear()?)),
                _ => Err(Error::invalid(
                    "bs_analytic oracle only applies to the bs_linear model",
                )),
            },
            "hagan" => match self {
                ModelSpec::Sabr { .. } => Ok(presets::sabr_oracle(&self.sabr()?)),
                _ => Err(Error::invalid("hagan oracle only applies to the sabr model")),
            },
            other => Err(Error::invalid(format!("unknown oracle `{other}`"))),
        }
    }

    pub fn bs_linear(&self) -> Result<presets::BsLinearParams> {
        if let ModelSpec::BsLinear {
            horizon,
            strike,
            rate,
            mu,
            sigma,
        } = self
        {
            let d = presets::BsLinearParams::default();
            Ok(presets::BsLinearParams {
                horizon: merge(*horizon, d.horizon),
                strike: merge(*strike, d.strike),
                rate: merge(*rate, d.rate),
                mu: merge(*mu, d.mu),
                sigma: merge(*sigma, d.sigma),
            })
        } else {
            Err(Error::invalid("model is not bs_linear"))
        }
    }

    pub fn bs_nonlinear(&self) -> Result<presets::NonlinearRatesParams> {
        if let ModelSpec::BsNonlinear {
            horizon,
            strike,
            rate,
            borrow_rate,
            mu,
            sigma,
        } = self
        {
            let d = presets::NonlinearRatesParams::default();
            Ok(presets::NonlinearRatesParams {
                horizon: merge(*horizon, d.horizon),
                strike: merge(*strike, d.strike),
                rate: merge(*rate, d.rate),
                borrow_rate: merge(*borrow_rate, d.borrow_rate),
                mu: merge(*mu, d.mu),
                sigma: merge(*sigma, d.sigma),
            })
        } else {
            Err(Error::invalid("model is not bs_nonlinear"))
        }
    }

    pub fn heston_sabr(&self) -> Result<presets::HestonSabrParams> {
        if let ModelSpec::HestonSabr {
            horizon,
            strike,
            rate,
            borrow_rate,
            b,
            beta,
            eta,
            theta,
            alpha,
            rho,
        } = self
        {
            let d = presets::HestonSabrParams::default();
            Ok(presets::HestonSabrParams {
                horizon: merge(*horizon, d.horizon),
                strike: merge(*strike, d.strike),
                rate: merge(*rate, d.rate),
                borrow_rate: merge(*borrow_rate, d.borrow_rate),
                b: merge(*b, d.b),
                beta: merge(*beta, d.beta),
                eta: merge(*eta, d.eta),
                theta: merge(*theta, d.theta),
                alpha: merge(*alpha, d.alpha),
                rho: merge(*rho, d.rho),
                s0: d.s0,
                v0: d.v0,
            })
        } else {
            Err(Error::invalid("model is not heston_sabr"))
        }
    }

    pub fn hyphyp(&self) -> Result<presets::HypHypParams> {
        if let ModelSpec::HypHyp {
            horizon,
            k1,
            k2,
            rate,
            borrow_rate,
            b,
            beta,
            kappa,
            sigma0,
            alpha,
            rho,
        } = self
        {
            let d = presets::HypHypParams::default();
            Ok(presets::HypHypParams {
                horizon: merge(*horizon, d.horizon),
                k1: merge(*k1, d.k1),
                k2: merge(*k2, d.k2),
                rate: merge(*rate, d.rate),
                borrow_rate: merge(*borrow_rate, d.borrow_rate),
                b: merge(*b, d.b),
                beta: merge(*beta, d.beta),
                kappa: merge(*kappa, d.kappa),
                sigma0: merge(*sigma0, d.sigma0),
                alpha: merge(*alpha, d.alpha),
                rho: merge(*rho, d.rho),
                s0: d.s0,
                v0: d.v0,
            })
        } else {
            Err(Error::invalid("model is not hyphyp"))
        }
    }

    pub fn sabr(&self) -> Result<presets::SabrParams> {
        if let ModelSpec::Sabr {
            horizon,
            strike,
            rate,
            alpha,
            beta,
            rho,
        } = self
        {
            let d = presets::SabrParams::default();
            Ok(presets::SabrParams {
                horizon: merge(*horizon, d.horizon),
                strike: merge(*strike, d.strike),
                rate: merge(*rate, d.rate),
                alpha: merge(*alpha, d.alpha),
                beta: merge(*beta, d.beta),
                rho: merge(*rho, d.rho),
                f0: d.f0,
                v0: d.v0,
            })
        } else {
            Err(Error::invalid("model is not sabr"))
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        if let Some(solve) = &self.solve {
            if solve.n_steps.is_empty() {
                return Err(Error::invalid("solve.n_steps must not be empty"));
            }
            if solve.schemes.is_empty() {
                return Err(Error::invalid("solve.schemes must not be empty"));
            }
            if self.grid.is_empty() {
                return Err(Error::invalid("a [solve] run needs [[grid]] axes"));
            }
        }
        if let Some(sparse) = &self.sparse {
            if sparse.q.is_empty() || sparse.n_steps.is_empty() {
                return Err(Error::invalid("sparse.q and sparse.n_steps must not be empty"));
            }
            if sparse.axes.is_empty() {
                return Err(Error::invalid("sparse.axes must not be empty"));
            }
        }
        if let Some(lsmc) = &self.lsmc {
            if lsmc.runs == 0 || lsmc.n_paths == 0 || lsmc.n_steps == 0 {
                return Err(Error::invalid("lsmc block needs positive runs/paths/steps"));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<TensorGrid> {
        let axes: Result<Vec<Grid1D>> = self.grid.iter().map(|g| g.build()).collect();
        TensorGrid::new(axes?)
    }
}
