//! Run configuration: a TOML file with one table per module, overridable by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sheetlab::{
    DiagConfig, GridSpec, LatticePoint, NoiseFamily, Nonlinearity, QuadSpec, SolutionStudy,
    SolveConfig, WosConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub workers: Option<usize>,
    pub strict: bool,
    pub grid: GridSection,
    pub noise: NoiseSection,
    pub diag: DiagSection,
    pub green: GreenSection,
    pub solver: SolverSection,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: PathBuf::from("sheetlab-out"),
            workers: None,
            strict: false,
            grid: GridSection::default(),
            noise: NoiseSection::default(),
            diag: DiagSection::default(),
            green: GreenSection::default(),
            solver: SolverSection::default(),
            study: StudySection::default(),
        }
    }
}

/// Uniform grid on `[0, length]^d` with `cells` cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub cells: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            d: 2,
            cells: 8,
            length: 1.0,
        }
    }
}

/// Driver used by `simulate` and `poisson-solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub family: String,
    pub n: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            family: "donsker".into(),
            n: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagSection {
    /// fdd | variance | moment | tightness
    pub experiment: String,
    pub family: String,
    /// indicator | green
    pub integrand: String,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub moment: u32,
    pub q: f64,
    pub significance: f64,
    /// Probe points; empty means the top corner of the domain.
    pub probes: Vec<Vec<f64>>,
    pub projections: usize,
    pub refine: usize,
    pub exclusion: f64,
    pub sheet_resolution: Option<usize>,
    pub accept_fraction: f64,
    pub ratio_factor: f64,
}

impl Default for DiagSection {
    fn default() -> Self {
        DiagSection {
            experiment: "fdd".into(),
            family: "donsker".into(),
            integrand: "indicator".into(),
            n_list: vec![4, 16, 64],
            replicates: 1000,
            moment: 2,
            q: 1.0,
            significance: 0.01,
            probes: vec![],
            projections: 10,
            refine: 1,
            exclusion: 0.0,
            sheet_resolution: None,
            accept_fraction: 0.8,
            ratio_factor: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenSection {
    /// Modes per axis; defaults to 64 in 2D and 32 in 3D.
    pub kmax: Option<usize>,
    /// `[x, y]` pairs for `green-table`; empty means a built-in interior set.
    pub pairs: Vec<[Vec<f64>; 2]>,
    /// Walk-on-spheres walks per pair; 0 skips the Monte Carlo column.
    pub walks: usize,
    pub delta: f64,
    pub max_steps: usize,
}

impl Default for GreenSection {
    fn default() -> Self {
        let wos = WosConfig::default();
        GreenSection {
            kmax: None,
            pairs: vec![],
            walks: 0,
            delta: wos.delta,
            max_steps: wos.max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// zero | constant:c | linear:λ | tanh:s
    pub nonlinearity: String,
    /// Constant source term `g`.
    pub g: f64,
    /// contraction | relaxed
    pub method: String,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub relaxation: f64,
    pub patience: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolveConfig::default();
        SolverSection {
            nonlinearity: "tanh:1".into(),
            g: 1.0,
            method: "contraction".into(),
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            relaxation: s.relaxation,
            patience: s.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub family: String,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    /// Probe points; empty means the centre of the domain.
    pub probes: Vec<Vec<f64>>,
    pub significance: f64,
    pub sheet_resolution: usize,
    pub trend_fraction: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            family: "donsker".into(),
            n_list: vec![4, 16, 64],
            replicates: 2000,
            probes: vec![],
            significance: 0.01,
            sheet_resolution: 128,
            trend_fraction: 0.8,
        }
    }
}

/// A configuration problem, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn field<T, E: std::fmt::Display>(name: &str, r: Result<T, E>) -> Result<T, ConfigError> {
    r.map_err(|e| ConfigError(format!("field `{name}`: {e}")))
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        let g = &self.grid;
        field(
            "grid",
            GridSpec::new(vec![g.length; g.d], vec![g.cells; g.d]),
        )
    }

    pub fn family(name: &str, value: &str) -> Result<NoiseFamily, ConfigError> {
        field(name, value.parse())
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, ConfigError> {
        field("solver.nonlinearity", self.solver.nonlinearity.parse())
    }

    pub fn solve_config(&self) -> Result<SolveConfig, ConfigError> {
        let s = &self.solver;
        let cfg = SolveConfig {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            relaxation: s.relaxation,
            patience: s.patience,
        };
        field("solver", cfg.validate())?;
        Ok(cfg)
    }

    pub fn wos_config(&self) -> WosConfig {
        WosConfig {
            walks: self.green.walks,
            delta: self.green.delta,
            max_steps: self.green.max_steps,
        }
    }

    pub fn diag_config(&self) -> Result<DiagConfig, ConfigError> {
        let grid = self.grid()?;
        let s = &self.diag;
        let mut cfg = DiagConfig::new(grid.clone(), s.n_list.clone());
        cfg.replicates = s.replicates;
        cfg.moment = s.moment;
        cfg.q = s.q;
        cfg.significance = s.significance;
        if !s.probes.is_empty() {
            cfg.probes = s
                .probes
                .iter()
                .map(|p| LatticePoint::new(p.clone()))
                .collect();
        }
        for p in &cfg.probes {
            field("diag.probes", grid.node_index(p))?;
        }
        cfg.projections = s.projections;
        cfg.quad = field(
            "diag.refine/exclusion",
            QuadSpec::new(s.refine, s.exclusion),
        )?;
        cfg.sheet_resolution = s.sheet_resolution;
        cfg.accept_fraction = s.accept_fraction;
        cfg.ratio_factor = s.ratio_factor;
        field("diag", cfg.validate())?;
        Ok(cfg)
    }

    pub fn study(&self, grid: &GridSpec) -> Result<SolutionStudy, ConfigError> {
        let s = &self.study;
        let probes = if s.probes.is_empty() {
            vec![LatticePoint::new(
                grid.lengths().iter().map(|t| t / 2.0).collect::<Vec<_>>(),
            )]
        } else {
            s.probes
                .iter()
                .map(|p| LatticePoint::new(p.clone()))
                .collect()
        };
        let study = SolutionStudy {
            family: Self::family("study.family", &s.family)?,
            n_list: s.n_list.clone(),
            probes,
            replicates: s.replicates,
            significance: s.significance,
            sheet_resolution: s.sheet_resolution,
            trend_fraction: s.trend_fraction,
        };
        field("study", study.validate(grid))?;
        Ok(study)
    }
}
