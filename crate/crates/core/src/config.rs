//! Declarative run configuration.
//!
//! One TOML document names the experiment, the environment, the kernel,
//! and the numeric parameters. All randomness is seeded explicitly; there
//! are no wall-clock defaults anywhere, so identical configs reproduce
//! identical outputs.

use serde::{Deserialize, Serialize};

use crate::catalog::TestFunction;
use crate::environment::{MarkDistribution, MarkedConfiguration};
use crate::error::{Error, Result};
use crate::exclusion::{suggest_slice_length, Profile};
use crate::rates::RateKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sample,
    Diagnostics,
    EffectiveD,
    Homogenize,
    Semigroup,
    Msd,
    Exclusion,
    Duality,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Diagnostics => "diagnostics",
            ExperimentKind::EffectiveD => "effective-d",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::Semigroup => "semigroup",
            ExperimentKind::Msd => "msd",
            ExperimentKind::Exclusion => "exclusion",
            ExperimentKind::Duality => "duality",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Poisson {
        d: usize,
        l: f64,
        m: f64,
        marks: MarkDistribution,
    },
    DilutedLattice {
        d: usize,
        l: u32,
        p: f64,
        marks: MarkDistribution,
    },
}

impl EnvironmentSpec {
    pub fn dim(&self) -> usize {
        match self {
            EnvironmentSpec::Poisson { d, .. } => *d,
            EnvironmentSpec::DilutedLattice { d, .. } => *d,
        }
    }

    pub fn box_side(&self) -> f64 {
        match self {
            EnvironmentSpec::Poisson { l, .. } => *l,
            EnvironmentSpec::DilutedLattice { l, .. } => f64::from(*l),
        }
    }

    pub fn nominal_intensity(&self) -> f64 {
        match self {
            EnvironmentSpec::Poisson { m, .. } => *m,
            EnvironmentSpec::DilutedLattice { p, .. } => *p,
        }
    }

    pub fn marks(&self) -> &MarkDistribution {
        match self {
            EnvironmentSpec::Poisson { marks, .. } => marks,
            EnvironmentSpec::DilutedLattice { marks, .. } => marks,
        }
    }

    pub fn sample(&self, seed: u64) -> Result<MarkedConfiguration> {
        match self {
            EnvironmentSpec::Poisson { d, l, m, marks } => {
                MarkedConfiguration::sample_poisson(*d, *l, *m, marks, seed)
            }
            EnvironmentSpec::DilutedLattice { d, l, p, marks } => {
                MarkedConfiguration::sample_diluted_lattice(*d, *l, *p, marks, seed)
            }
        }
    }

    /// Same law on a differently sized box (for eps ladders).
    pub fn with_box_side(&self, side: f64) -> EnvironmentSpec {
        let mut out = self.clone();
        match &mut out {
            EnvironmentSpec::Poisson { l, .. } => *l = side,
            EnvironmentSpec::DilutedLattice { l, .. } => *l = side.round().max(1.0) as u32,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.marks().validate()?;
        match self {
            EnvironmentSpec::Poisson { d, l, m, .. } => {
                if !(1..=3).contains(d) {
                    return Err(Error::Config("environment.d must be 1, 2 or 3".into()));
                }
                if !(*l > 0.0) {
                    return Err(Error::Config("environment.l must be > 0".into()));
                }
                if !(*m >= 0.0) {
                    return Err(Error::Config("environment.m must be >= 0".into()));
                }
            }
            EnvironmentSpec::DilutedLattice { d, l, p, .. } => {
                if !(1..=3).contains(d) {
                    return Err(Error::Config("environment.d must be 1, 2 or 3".into()));
                }
                if *l == 0 {
                    return Err(Error::Config("environment.l must be >= 1".into()));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config("environment.p must be in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Mott {
        gamma: f64,
        beta: f64,
        r_cut: Option<f64>,
    },
    ConstantRange {
        c0: f64,
        r: f64,
        r_cut: Option<f64>,
    },
    Table {
        entries: Vec<(u32, u32, f64)>,
        r_cut: f64,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<RateKernel> {
        match self {
            KernelSpec::Mott { gamma, beta, r_cut } => {
                let kernel = RateKernel::mott(*gamma, *beta)?;
                match r_cut {
                    Some(cut) => kernel.with_cutoff(*cut),
                    None => Ok(kernel),
                }
            }
            KernelSpec::ConstantRange { c0, r, r_cut } => {
                let kernel = RateKernel::constant_range(*c0, *r)?;
                match r_cut {
                    Some(cut) => kernel.with_cutoff(*cut),
                    None => Ok(kernel),
                }
            }
            KernelSpec::Table { entries, r_cut } => RateKernel::table(
                entries.iter().map(|(i, j, c)| ((*i, *j), *c)),
                *r_cut,
            ),
        }
    }
}

/// Numeric parameters; unset options fall back to documented defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub eps_list: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub t: Option<f64>,
    /// Catalog ids of the test functions used in pairings.
    pub phi: Option<Vec<String>>,
    /// Catalog id of the resolvent datum.
    pub f: Option<String>,
    /// Macroscopic torus side for eps ladders.
    pub macro_side: Option<f64>,
    pub grid_n: Option<usize>,
    pub lambda_reg: Option<f64>,
    pub tol: Option<f64>,
    pub rank_tol: Option<f64>,
    /// Slice length for the percolation diagnostic; defaults to the
    /// subcritical suggestion.
    pub t0: Option<f64>,
    pub n_samples: Option<usize>,
    pub n_schedules: Option<usize>,
    pub n_checkpoints: Option<usize>,
    /// Seeds spent on the corrector-based effective-matrix estimate that
    /// eps ladders compare against.
    pub d_seeds: Option<usize>,
    pub horizon: Option<f64>,
    pub rho0: Option<Profile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub environment: EnvironmentSpec,
    pub kernel: KernelSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub params: Params,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_GRID_N: usize = 128;
pub const DEFAULT_SLICE_SAFETY: f64 = 0.25;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse failure: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        self.kernel
            .build()
            .map_err(|e| Error::Config(format!("kernel: {e}")))?;
        if self.seeds.is_empty() {
            return Err(Error::Config(
                "seeds must be explicit and nonempty (no wall-clock defaults)".into(),
            ));
        }
        if let Some(eps_list) = &self.params.eps_list {
            if eps_list.is_empty() {
                return Err(Error::Config("eps_list must be nonempty".into()));
            }
            if eps_list.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::Config("eps_list entries must be > 0".into()));
            }
            for w in eps_list.windows(2) {
                if w[1] >= w[0] {
                    return Err(Error::Config(
                        "eps_list must be strictly decreasing".into(),
                    ));
                }
            }
        }
        let dim = self.environment.dim();
        for id in self.params.phi.iter().flatten() {
            if TestFunction::by_id(id, dim, 1.0).is_none() {
                return Err(Error::Config(format!(
                    "unknown test function id `{id}` (catalog: {:?})",
                    TestFunction::catalog_ids()
                )));
            }
        }
        if let Some(id) = &self.params.f {
            if TestFunction::by_id(id, dim, 1.0).is_none() {
                return Err(Error::Config(format!(
                    "unknown test function id `{id}` (catalog: {:?})",
                    TestFunction::catalog_ids()
                )));
            }
        }
        if let Some(rho0) = &self.params.rho0 {
            rho0.validate()
                .map_err(|e| Error::Config(format!("rho0: {e}")))?;
        }
        if let Some(lambda) = self.params.lambda {
            if !(lambda > 0.0) {
                return Err(Error::Config("lambda must be > 0".into()));
            }
        }
        if let Some(t) = self.params.t {
            if !(t >= 0.0) {
                return Err(Error::Config("t must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn tol(&self) -> f64 {
        self.params.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn rank_tol(&self) -> f64 {
        self.params.rank_tol.unwrap_or(DEFAULT_RANK_TOL)
    }

    pub fn grid_n(&self) -> usize {
        self.params.grid_n.unwrap_or(DEFAULT_GRID_N)
    }

    pub fn macro_side(&self) -> f64 {
        self.params.macro_side.unwrap_or(2.0)
    }

    pub fn lambda_reg(&self) -> f64 {
        self.params.lambda_reg.unwrap_or(0.0)
    }

    /// Test functions instantiated on a torus of the given side.
    pub fn phis(&self, side: f64) -> Vec<(String, TestFunction)> {
        let dim = self.environment.dim();
        let ids: Vec<String> = self
            .params
            .phi
            .clone()
            .unwrap_or_else(|| vec!["gauss".to_string()]);
        ids.into_iter()
            .map(|id| {
                let f = TestFunction::by_id(&id, dim, side).expect("validated id");
                (id, f)
            })
            .collect()
    }

    pub fn datum(&self, side: f64) -> TestFunction {
        let id = self.params.f.clone().unwrap_or_else(|| "gauss".to_string());
        TestFunction::by_id(&id, self.environment.dim(), side).expect("validated id")
    }

    /// Parse-only report of every derived default the run would use.
    pub fn defaults_report(&self) -> Result<serde_json::Value> {
        let kernel = self.kernel.build()?;
        let dim = self.environment.dim();
        let side = self.macro_side();
        let t0_suggestion = suggest_slice_length(
            &kernel,
            dim,
            self.environment.nominal_intensity(),
            DEFAULT_SLICE_SAFETY,
        );
        let phis: Vec<serde_json::Value> = self
            .phis(side)
            .iter()
            .map(|(id, f)| serde_json::json!({ "id": id, "form": f.describe() }))
            .collect();
        Ok(serde_json::json!({
            "experiment": self.experiment.name(),
            "r_cut": kernel.r_cut(),
            "t0": self.params.t0,
            "t0_suggestion": t0_suggestion,
            "t0_suggestion_note": if t0_suggestion.is_none() {
                "no envelope available for this kernel kind; slice length must be set by hand"
            } else {
                "from the subcritical criterion m * t0 * int g < 1 with safety 0.25"
            },
            "grid_n": self.grid_n(),
            "grid_h": side / self.grid_n() as f64,
            "macro_side": side,
            "tol": self.tol(),
            "rank_tol": self.rank_tol(),
            "lambda_reg": self.lambda_reg(),
            "phi_catalog": phis,
            "f": self.datum(side).describe(),
            "seeds": self.seeds,
        }))
    }
}
