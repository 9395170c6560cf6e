//! Experiment configuration: defaults, `key=value` files and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use subdiff_core::mg::{MgConfig, SmootherKind};
use subdiff_core::problems::DIFFUSIVITY;
use subdiff_core::{Error, Result};

pub const DEFAULT_ALPHAS: [f64; 3] = [0.2, 0.5, 0.8];
pub const DEFAULT_STEPS: [usize; 6] = [10, 20, 40, 80, 160, 320];
pub const DESK_K: usize = 64;
pub const FULL_SCALE_K: usize = 128;
pub const DEFAULT_REF_STEPS: usize = 5120;
/// The reference must be at least this many times finer than the finest run.
pub const REF_REFINEMENT: usize = 16;
pub const DEFAULT_SEED: u64 = 20_190_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleKind {
    /// Zero initial data, smooth source.
    One,
    /// Discontinuous initial data, no source.
    Two,
    /// Smooth initial data `(1-x²)(1-y²)` with the Ritz projection.
    Custom,
}

impl ExampleKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::One => "example1",
            Self::Two => "example2",
            Self::Custom => "custom",
        }
    }
}

impl FromStr for ExampleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" | "1" => Ok(Self::One),
            "example2" | "2" => Ok(Self::Two),
            "custom" => Ok(Self::Custom),
            _ => Err(Error::Config(format!("unknown example '{s}'"))),
        }
    }
}

/// One table row: how many inner iterations each step gets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Exact,
    Fixed(usize),
    Log { a: usize, b: usize },
    /// Theory schedules take `(c₀, κ)` from a contraction measurement.
    TheorySmooth(f64),
    TheoryNonsmooth(f64),
}

impl ScheduleSpec {
    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Exact)
    }

    pub fn needs_contraction(&self) -> bool {
        matches!(self, Self::TheorySmooth(_) | Self::TheoryNonsmooth(_))
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => write!(f, "exact"),
            Self::Fixed(m) => write!(f, "fixed:{m}"),
            Self::Log { a, b } => write!(f, "log:{a},{b}"),
            Self::TheorySmooth(d) => write!(f, "theory-smooth:{d}"),
            Self::TheoryNonsmooth(d) => write!(f, "theory-nonsmooth:{d}"),
        }
    }
}

fn parse_num<T: FromStr>(what: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {what} from '{s}'")))
}

impl FromStr for ScheduleSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let spec = match kind {
            "exact" if arg.is_empty() => Self::Exact,
            "fixed" => Self::Fixed(parse_num("iteration count", arg)?),
            "log" => {
                let (a, b) = arg
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("log schedule needs 'a,b', got '{arg}'")))?;
                Self::Log { a: parse_num("a", a)?, b: parse_num("b", b)? }
            }
            "theory-smooth" => Self::TheorySmooth(parse_num("delta", arg)?),
            "theory-nonsmooth" => Self::TheoryNonsmooth(parse_num("delta", arg)?),
            _ => return Err(Error::Config(format!("unknown schedule '{s}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ScheduleSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed(0) => Err(Error::Config("fixed schedule needs m >= 1".into())),
            Self::Log { a, b } if a + b == 0 => Err(Error::Config("log schedule needs a + b >= 1".into())),
            Self::TheorySmooth(d) | Self::TheoryNonsmooth(d) if !(d > 0.0 && d < 1.0) => {
                Err(Error::Config(format!("delta {d} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceMode {
    /// Backward Euler with this many steps, solved directly.
    FineBackwardEuler { steps: usize },
    /// Final-time nodal values read from a CSV file (`alpha,node,value`).
    External(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            _ => Err(Error::Config(format!("unknown format '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherChoice {
    Jacobi,
    GaussSeidel,
}

impl FromStr for SmootherChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" => Ok(Self::Jacobi),
            "gs" | "gauss-seidel" => Ok(Self::GaussSeidel),
            _ => Err(Error::Config(format!("unknown smoother '{s}'"))),
        }
    }
}

/// Jacobi damping used unless overridden.
pub const DEFAULT_OMEGA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: ExampleKind,
    pub alphas: Vec<f64>,
    pub steps: Vec<usize>,
    pub k: usize,
    pub coarsest: usize,
    pub diffusivity: f64,
    pub smoother: SmootherChoice,
    /// Jacobi damping; ignored by Gauss–Seidel.
    pub omega: f64,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    pub schedules: Vec<ScheduleSpec>,
    pub startup_exact: usize,
    pub reference: ReferenceMode,
    pub format: OutputFormat,
    pub seed: u64,
    /// Random starts and V-cycles per contraction measurement.
    pub contraction_trials: usize,
    pub contraction_cycles: usize,
}

impl ExperimentConfig {
    pub fn new(example: ExampleKind) -> Self {
        let schedules = match example {
            ExampleKind::One => vec![
                ScheduleSpec::Fixed(1),
                ScheduleSpec::Fixed(2),
                ScheduleSpec::Fixed(3),
                ScheduleSpec::Exact,
            ],
            ExampleKind::Two => vec![
                ScheduleSpec::Log { a: 3, b: 0 },
                ScheduleSpec::Log { a: 3, b: 3 },
                ScheduleSpec::Log { a: 3, b: 6 },
                ScheduleSpec::Exact,
            ],
            ExampleKind::Custom => vec![ScheduleSpec::TheorySmooth(0.1), ScheduleSpec::Exact],
        };
        let mg = MgConfig::default();
        Self {
            example,
            alphas: DEFAULT_ALPHAS.to_vec(),
            steps: DEFAULT_STEPS.to_vec(),
            k: DESK_K,
            coarsest: mg.coarsest,
            diffusivity: DIFFUSIVITY,
            smoother: SmootherChoice::GaussSeidel,
            omega: DEFAULT_OMEGA,
            pre_sweeps: mg.pre_sweeps,
            post_sweeps: mg.post_sweeps,
            schedules,
            startup_exact: 2,
            reference: ReferenceMode::FineBackwardEuler { steps: DEFAULT_REF_STEPS },
            format: OutputFormat::Csv,
            seed: DEFAULT_SEED,
            contraction_trials: 4,
            contraction_cycles: 12,
        }
    }

    pub fn smoother_kind(&self) -> SmootherKind {
        match self.smoother {
            SmootherChoice::Jacobi => SmootherKind::DampedJacobi { omega: self.omega },
            SmootherChoice::GaussSeidel => SmootherKind::GaussSeidelForward,
        }
    }

    pub fn mg_config(&self) -> MgConfig {
        MgConfig {
            smoother: self.smoother_kind(),
            pre_sweeps: self.pre_sweeps,
            post_sweeps: self.post_sweeps,
            coarsest: self.coarsest,
        }
    }

    /// Full check, including the reference resolution.
    pub fn validate(&self) -> Result<()> {
        self.validate_study()?;
        if let ReferenceMode::FineBackwardEuler { steps } = self.reference {
            let finest = *self.steps.last().expect("checked non-empty");
            if steps < REF_REFINEMENT * finest {
                return Err(Error::Config(format!(
                    "reference N={steps} must be at least {REF_REFINEMENT} x finest N={finest}"
                )));
            }
        }
        Ok(())
    }

    /// Checks everything except the reference solution.
    pub fn validate_study(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("no alpha values given".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("alpha {a} outside (0, 1)")));
        }
        if self.steps.is_empty() || self.steps[0] == 0 {
            return Err(Error::Config("N list must be non-empty and positive".into()));
        }
        if self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("N list must be strictly increasing".into()));
        }
        if self.schedules.is_empty() {
            return Err(Error::Config("no schedule rows given".into()));
        }
        for s in &self.schedules {
            s.validate()?;
        }
        if self.startup_exact == 0 {
            return Err(Error::Config("at least one start-up step must be exact".into()));
        }
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return Err(Error::Config(format!("diffusivity {} must be positive", self.diffusivity)));
        }
        SmootherKind::jacobi(self.omega)?;
        if self.pre_sweeps + self.post_sweeps == 0 {
            return Err(Error::Config("V-cycle needs at least one smoothing sweep".into()));
        }
        let mut k = self.k;
        while k > self.coarsest && k.is_multiple_of(2) {
            k /= 2;
        }
        if k != self.coarsest || self.k == self.coarsest || self.coarsest < 2 || !self.coarsest.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "K={} is not K0={} times a positive power of two",
                self.k, self.coarsest
            )));
        }
        if self.contraction_trials == 0 || self.contraction_cycles < 2 {
            return Err(Error::Config("contraction probe needs >= 1 trial and >= 2 cycles".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Keys mirror the command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
        match key.trim() {
            "example" => self.example = value.parse()?,
            "alpha" => self.alphas = list().map(|s| parse_num("alpha", s)).collect::<Result<_>>()?,
            "N" => self.steps = list().map(|s| parse_num("N", s)).collect::<Result<_>>()?,
            "K" => self.k = parse_num("K", value)?,
            "K0" => self.coarsest = parse_num("K0", value)?,
            "cA" => self.diffusivity = parse_num("cA", value)?,
            "smoother" => self.smoother = value.parse()?,
            "omega" => self.omega = parse_num("omega", value)?,
            "nu1" => self.pre_sweeps = parse_num("nu1", value)?,
            "nu2" => self.post_sweeps = parse_num("nu2", value)?,
            // log schedules contain commas, so rows are separated by ';'
            "schedule" => {
                self.schedules = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "startup-exact" => self.startup_exact = parse_num("startup-exact", value)?,
            "ref-N" => self.reference = ReferenceMode::FineBackwardEuler { steps: parse_num("ref-N", value)? },
            "ref-file" => self.reference = ReferenceMode::External(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "seed" => self.seed = parse_num("seed", value)?,
            "trials" => self.contraction_trials = parse_num("trials", value)?,
            "cycles" => self.contraction_cycles = parse_num("cycles", value)?,
            "paper-scale" => {
                if parse_num::<bool>("paper-scale", value)? {
                    self.apply_full_scale();
                }
            }
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_full_scale(&mut self) {
        self.k = FULL_SCALE_K;
        self.reference = ReferenceMode::FineBackwardEuler { steps: DEFAULT_REF_STEPS };
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// `# key=value` metadata lines written ahead of every table.
    pub fn header_lines(&self) -> Vec<String> {
        let smoother = match self.smoother {
            SmootherChoice::Jacobi => format!("jacobi omega={}", self.omega),
            SmootherChoice::GaussSeidel => "gs".to_string(),
        };
        let reference = match &self.reference {
            ReferenceMode::FineBackwardEuler { steps } => format!("backward-euler N_ref={steps}"),
            ReferenceMode::External(p) => format!("file {}", p.display()),
        };
        vec![
            format!("example={}", self.example.name()),
            format!("K={} K0={} cA={} T=1", self.k, self.coarsest, self.diffusivity),
            format!("smoother={smoother} nu1={} nu2={}", self.pre_sweeps, self.post_sweeps),
            format!("startup_exact={}", self.startup_exact),
            format!("reference={reference}"),
            format!("seed={}", self.seed),
        ]
    }
}
