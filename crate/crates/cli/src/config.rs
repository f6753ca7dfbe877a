use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// Environment variable naming the output directory when neither the flag
/// nor the configuration file sets one.
pub const OUT_DIR_ENV: &str = "BBM_LAB_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "bbm-lab-out";

#[derive(Debug, Parser)]
#[command(name = "bbm-lab", version, about = "Numerical experiments for branching Brownian motion with decreasing variance")]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for result files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// A subcommand with its options. After [`parse_config`] every option with a
/// default is filled in, and the TOML form of this value is the persisted run
/// configuration.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Tabulate Airy zeros and eigenbasis diagnostics.
    ValidateAiry(AiryArgs),
    /// Front predictor curves for a variance profile.
    Predict(PredictArgs),
    /// Spectral solve of the canonical Airy-type PDE.
    SolveAiry(SolveAiryArgs),
    /// FKPP front medians over a list of horizons.
    SolveFkpp(FkppArgs),
    /// Monte Carlo of branching Brownian motion with pruning.
    SimulateBbm(BbmArgs),
    /// Gibbs measure of homogeneous branching Brownian motion.
    Gibbs(GibbsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ValidateAiry(_) => "validate-airy",
            Command::Predict(_) => "predict",
            Command::SolveAiry(_) => "solve-airy",
            Command::SolveFkpp(_) => "solve-fkpp",
            Command::SimulateBbm(_) => "simulate-bbm",
            Command::Gibbs(_) => "gibbs",
        }
    }

    /// Master seed of Monte Carlo commands.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::SimulateBbm(a) => a.seed,
            Command::Gibbs(a) => a.seed,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AiryArgs {
    /// Number of modes to tabulate.
    #[arg(long)]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PredictArgs {
    /// Registry name (linear2, linear:a,b, power:a,b,p, exp:a,b,k, const:c) or table file.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Horizon T.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Barrier offset; adds the glued barrier samples.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<f64>,
    /// Number of equally spaced sample times on [0, T].
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialData {
    /// Unit mass at x0.
    Delta,
    /// x exp(-4 (x - 1)^2).
    Bump,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SolveAiryArgs {
    /// const:c, affine:a,b or canonical:T:qt|leading:<sigma>.
    #[arg(long)]
    pub q: Option<String>,
    /// Small parameter of the rescaled equation.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Final time in (0, 1].
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, value_enum)]
    pub initial: Option<InitialData>,
    /// Location of the unit mass for delta initial data.
    #[arg(long)]
    pub x0: Option<f64>,
    /// Number of Airy modes kept.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Also run the finite-difference solver (bump initial data only).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub oracle: Option<bool>,
    /// Extra times at which the field is written.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
    /// Spatial step of the finite-difference solver.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Time step of the finite-difference solver.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FkppArgs {
    /// Variance profile, as for predict.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Comma-separated horizons.
    #[arg(long = "T", value_delimiter = ',')]
    #[serde(rename = "T")]
    pub horizons: Option<Vec<f64>>,
    /// Offspring law: a fixed count or k:p pairs, e.g. 2:0.5,3:0.5.
    #[arg(long)]
    pub law: Option<String>,
    /// Spatial step.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Window length behind the front.
    #[arg(long)]
    pub left_pad: Option<f64>,
    /// Window length ahead of the front.
    #[arg(long)]
    pub right_pad: Option<f64>,
    /// Keep the grid fixed instead of following the front.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fixed_window: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneRef {
    /// Depth below the replica's leading particle.
    Leader,
    /// Depth below the predictor curve.
    Gamma,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BbmArgs {
    /// Variance profile, as for predict.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Horizon T.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Number of independent replicas.
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Pruning depth, or `none`.
    #[arg(long, value_parser = Level::from_str)]
    pub prune_depth: Option<Level>,
    #[arg(long, value_enum)]
    pub prune_reference: Option<PruneRef>,
    /// Comma-separated barrier offsets, ascending.
    #[arg(long = "K-list", value_delimiter = ',')]
    #[serde(rename = "K-list")]
    pub k_list: Option<Vec<f64>>,
    /// Master seed; replica i uses its own derived stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Offspring law, as for solve-fkpp.
    #[arg(long)]
    pub law: Option<String>,
    /// Observation step for barrier crossings.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Offset of the glued barrier used for the N_T count.
    #[arg(long = "zeta-K")]
    #[serde(rename = "zeta-K")]
    pub zeta_k: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GibbsArgs {
    /// Observation time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Number of independent replicas.
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Master seed; replica i uses its own derived stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Removal level, or `none`.
    #[arg(long, value_parser = Level::from_str)]
    pub floor: Option<Level>,
    /// Offspring law, as for solve-fkpp.
    #[arg(long)]
    pub law: Option<String>,
    /// Second moment of the derivative martingale killed at 0, started from --x.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub killed: Option<bool>,
    /// Starting point for --killed.
    #[arg(long)]
    pub x: Option<f64>,
}

/// A real level that can be switched off with `none`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level(pub Option<f64>);

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Level(None));
        }
        s.parse::<f64>()
            .map(|v| Level(Some(v)))
            .map_err(|_| format!("expected a number or 'none', got '{s}'"))
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("none"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Level(Some(v))),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Contents of a configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub validate_airy: Option<AiryArgs>,
    pub predict: Option<PredictArgs>,
    pub solve_airy: Option<SolveAiryArgs>,
    pub solve_fkpp: Option<FkppArgs>,
    pub simulate_bbm: Option<BbmArgs>,
    pub gibbs: Option<GibbsArgs>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))
    }
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// The persisted form: a configuration file that reproduces this run.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.command).expect("options serialize to TOML")
    }

    /// SHA-256 of [`Self::to_toml`], hex encoded. The output directory is not part of it.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Field-wise merge: for every key the first layer that sets it wins.
fn overlay<T: Serialize + DeserializeOwned>(layers: &[&T]) -> T {
    let mut merged = serde_json::Map::new();
    for layer in layers.iter().rev() {
        let serde_json::Value::Object(map) = serde_json::to_value(layer).expect("options serialize") else {
            unreachable!("option structs serialize to maps")
        };
        merged.extend(map.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(serde_json::Value::Object(merged)).expect("merged options deserialize")
}

fn require<T>(value: &Option<T>, flag: &str) -> Result<(), CliError> {
    match value {
        Some(_) => Ok(()),
        None => Err(CliError::Usage(format!("missing required option {flag}"))),
    }
}

fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: Option<&T>, defaults: &T) -> T {
    match file {
        Some(f) => overlay(&[cli, f, defaults]),
        None => overlay(&[cli, defaults]),
    }
}

/// Applies the file and the defaults under the command-line values and checks
/// required and conflicting options.
pub fn parse_config(cli: Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let command = match &cli.command {
        Command::ValidateAiry(a) => {
            let d = AiryArgs { modes: Some(20) };
            Command::ValidateAiry(merge(a, file.validate_airy.as_ref(), &d))
        }
        Command::Predict(a) => {
            let d = PredictArgs {
                sigma: Some("linear2".into()),
                samples: Some(101),
                ..Default::default()
            };
            let m = merge(a, file.predict.as_ref(), &d);
            require(&m.horizon, "--T")?;
            Command::Predict(m)
        }
        Command::SolveAiry(a) => {
            let d = SolveAiryArgs {
                initial: Some(InitialData::Bump),
                x0: Some(1.0),
                truncation: Some(40),
                oracle: Some(false),
                snapshots: Some(Vec::new()),
                ..Default::default()
            };
            let m = merge(a, file.solve_airy.as_ref(), &d);
            require(&m.q, "--q")?;
            require(&m.epsilon, "--epsilon")?;
            require(&m.t, "--t")?;
            if m.oracle == Some(true) && m.initial == Some(InitialData::Delta) {
                return Err(CliError::Usage("--oracle needs --initial bump".into()));
            }
            Command::SolveAiry(m)
        }
        Command::SolveFkpp(a) => {
            let d = FkppArgs {
                sigma: Some("linear2".into()),
                law: Some("2".into()),
                dx: Some(0.05),
                dt: Some(0.02),
                left_pad: Some(50.0),
                fixed_window: Some(false),
                ..Default::default()
            };
            let m = merge(a, file.solve_fkpp.as_ref(), &d);
            require(&m.horizons, "--T")?;
            Command::SolveFkpp(m)
        }
        Command::SimulateBbm(a) => {
            let d = BbmArgs {
                sigma: Some("linear2".into()),
                replicas: Some(1000),
                prune_depth: Some(Level(Some(10.0))),
                prune_reference: Some(PruneRef::Leader),
                k_list: Some(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
                seed: Some(0),
                law: Some("2".into()),
                dt: Some(bbm_lab::bbm::DEFAULT_DT),
                ..Default::default()
            };
            let m = merge(a, file.simulate_bbm.as_ref(), &d);
            require(&m.horizon, "--T")?;
            Command::SimulateBbm(m)
        }
        Command::Gibbs(a) => {
            let d = GibbsArgs {
                replicas: Some(200),
                seed: Some(0),
                law: Some("2".into()),
                killed: Some(false),
                ..Default::default()
            };
            let mut m = merge(a, file.gibbs.as_ref(), &d);
            require(&m.t, "--t")?;
            match (m.killed, m.x, m.floor) {
                (Some(true), None, _) => return Err(CliError::Usage("--killed needs --x".into())),
                (Some(true), _, Some(_)) => return Err(CliError::Usage("--floor does not apply with --killed".into())),
                (Some(false), Some(_), _) => return Err(CliError::Usage("--x is only used with --killed".into())),
                (Some(false), _, None) => m.floor = Some(Level(Some(bbm_lab::gibbs::DEFAULT_FLOOR))),
                _ => {}
            }
            Command::Gibbs(m)
        }
    };
    let out_dir = cli
        .out_dir
        .or(file.out_dir)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(RunConfig { command, out_dir })
}
