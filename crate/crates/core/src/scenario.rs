//! Scenario files, bundled reference scenarios and parameter sweeps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{ComputeConfig, ProblemInstance};
use crate::linkbudget::{LinkConfig, RateTable, RateTableError};
use crate::optimizer::SolverSettings;
use crate::orbital::{gtfp, image_size_bits, Constellation, ConstellationConfig, ImagingConfig, OrbitError};
use crate::topology::{build_snapshots, DestinationRule, IslEnforcement, TopologySnapshot};

const LAPALMA_PROFILE: &str = include_str!("../data/lapalma.txt");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("override `{0}` must look like key=value")]
    BadOverride(String),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error(transparent)]
    RateTable(#[from] RateTableError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Task {
    pub source_sat: usize,
    pub start_time_s: f64,
    pub frame_widths: Vec<u32>,
}

impl Default for Task {
    fn default() -> Self {
        Self {
            source_sat: 0,
            start_time_s: 0.0,
            frame_widths: vec![1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    /// The source satellite holds the ground link.
    VdEqualsV0,
    /// The ground link sits `dest_offset_hops` ahead of the source.
    VdOffset,
    /// Destination chosen geometrically per slot.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub mode: TopologyMode,
    pub dest_offset_hops: usize,
    pub isl_enforcement: IslEnforcement,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            mode: TopologyMode::VdEqualsV0,
            dest_offset_hops: 5,
            isl_enforcement: IslEnforcement::SourceEdges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub constellation: ConstellationConfig,
    pub imaging: ImagingConfig,
    pub compute: ComputeConfig,
    pub link: LinkConfig,
    pub task: Task,
    pub topology: TopologyConfig,
    pub optimizer: SolverSettings,
    /// CSV with `spectral_efficiency,snr_min_db`; the built-in table if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_table: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            constellation: ConstellationConfig::default(),
            imaging: ImagingConfig::default(),
            compute: ComputeConfig::default(),
            link: LinkConfig::default(),
            task: Task::default(),
            topology: TopologyConfig::default(),
            optimizer: SolverSettings::default(),
            rate_table: None,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let c = &self.constellation;
        if c.n_sats == 0 {
            return Err(invalid("constellation.n_sats", "must be at least 1"));
        }
        positive("constellation.altitude_m", c.altitude_m)?;
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&c.min_elevation_rad) {
            return Err(invalid("constellation.min_elevation_rad", "must lie in [0, π/2)"));
        }
        let img = &self.imaging;
        for (f, v) in [
            ("imaging.width_px", img.width_px),
            ("imaging.height_px", img.height_px),
            ("imaging.bits_per_px", img.bits_per_px),
        ] {
            if v == 0 {
                return Err(invalid(f, "must be positive"));
            }
        }
        if img.height_px >= img.width_px {
            return Err(invalid("imaging.height_px", "must be smaller than width_px"));
        }
        positive("imaging.gsd_m", img.gsd_m)?;
        let cp = &self.compute;
        positive("compute.f_cpu_hz", cp.f_cpu_hz)?;
        if cp.n_cores == 0 {
            return Err(invalid("compute.n_cores", "must be positive"));
        }
        positive("compute.p_proc_max_w", cp.p_proc_max_w)?;
        positive("compute.epsilon", cp.epsilon)?;
        if cp.rho_max.is_nan() || cp.rho_max <= 1.0 {
            return Err(invalid("compute.rho_max", "must exceed 1"));
        }
        let l = &self.link;
        positive("link.tx_power_rf_w", l.tx_power_rf_w)?;
        if l.amp_inefficiency_rf.is_nan() || l.amp_inefficiency_rf < 1.0 {
            return Err(invalid("link.amp_inefficiency_rf", "must be at least 1"));
        }
        positive("link.carrier_hz", l.carrier_hz)?;
        positive("link.bandwidth_hz", l.bandwidth_hz)?;
        positive("link.isl_rate_bps", l.isl_rate_bps)?;
        positive("link.isl_power_w", l.isl_power_w)?;
        if !(0.0..=1.0).contains(&l.isl_tx_fraction) {
            return Err(invalid("link.isl_tx_fraction", "must lie in [0, 1]"));
        }
        if self.task.frame_widths.is_empty() {
            return Err(invalid("task.frame_widths", "needs at least one frame"));
        }
        if self.task.source_sat >= c.n_sats {
            return Err(invalid(
                "task.source_sat",
                format!(
                    "satellite {} does not exist in a ring of {}",
                    self.task.source_sat, c.n_sats
                ),
            ));
        }
        if !self.task.start_time_s.is_finite() {
            return Err(invalid("task.start_time_s", "must be finite"));
        }
        let o = &self.optimizer;
        positive("optimizer.delta", o.delta)?;
        positive("optimizer.tau_proc", o.tau_proc)?;
        positive("optimizer.alpha0", o.alpha0)?;
        if !(o.beta > 0.0 && o.beta < 1.0) {
            return Err(invalid("optimizer.beta", "must lie in (0, 1)"));
        }
        if o.alpha_max.is_nan() || o.alpha_max < o.alpha0 {
            return Err(invalid("optimizer.alpha_max", "must be at least alpha0"));
        }
        if !(o.backtrack > 0.0 && o.backtrack < 1.0) {
            return Err(invalid("optimizer.backtrack", "must lie in (0, 1)"));
        }
        if !(o.armijo > 0.0 && o.armijo < 1.0) {
            return Err(invalid("optimizer.armijo", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Sets one leaf, e.g. `link.isl_tx_fraction=0.1` or
    /// `task.frame_widths=[20,0,0]`. The value is read as TOML and falls
    /// back to a plain string.
    pub fn apply_override(&self, assignment: &str) -> Result<Self, ScenarioError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ScenarioError::BadOverride(assignment.into()))?;
        let key = key.trim();
        let raw = raw.trim();
        if key.is_empty() {
            return Err(ScenarioError::BadOverride(assignment.into()));
        }
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.into()));
        let mut root = toml::Value::try_from(self).expect("scenario serializes");
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for part in &parts[..parts.len() - 1] {
            node = node
                .as_table_mut()
                .and_then(|t| t.get_mut(*part))
                .ok_or_else(|| invalid(key, "no such section"))?;
        }
        let table = node.as_table_mut().ok_or_else(|| invalid(key, "not a section"))?;
        let leaf = parts[parts.len() - 1];
        // Integers are accepted where floats are expected.
        let value = match (table.get(leaf), value) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(leaf.into(), value);
        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse {
            path: format!("--override {key}"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_rate_table(&self) -> Result<RateTable, ScenarioError> {
        Ok(match &self.rate_table {
            Some(p) => RateTable::load(p)?,
            None => RateTable::default(),
        })
    }

    pub fn image_bits(&self) -> f64 {
        image_size_bits(&self.imaging) as f64
    }

    pub fn slot_len_s(&self) -> Result<f64, ScenarioError> {
        Ok(gtfp(
            self.imaging.height_px,
            self.imaging.gsd_m,
            self.constellation.altitude_m,
        )?)
    }

    /// Ring geometry with the destination placement of the topology mode.
    pub fn constellation(&self) -> Result<(Constellation, DestinationRule), ScenarioError> {
        let n = self.constellation.n_sats;
        let base = Constellation::new(self.constellation.clone())?;
        let v0 = self.task.source_sat;
        Ok(match self.topology.mode {
            TopologyMode::VdEqualsV0 => (base.with_anchor(v0), DestinationRule::Fixed(v0)),
            TopologyMode::VdOffset => {
                let d = (v0 + self.topology.dest_offset_hops) % n;
                (base.with_anchor(d), DestinationRule::Fixed(d))
            }
            TopologyMode::Dynamic => (base, DestinationRule::Geometric),
        })
    }

    pub fn snapshots(&self, table: &RateTable) -> Result<Vec<TopologySnapshot>, ScenarioError> {
        let (c, rule) = self.constellation()?;
        Ok(build_snapshots(
            &c,
            &self.link,
            table,
            self.task.source_sat,
            self.task.start_time_s,
            self.slot_len_s()?,
            self.task.frame_widths.len(),
            rule,
        ))
    }

    pub fn problem_with(&self, table: &RateTable) -> Result<ProblemInstance, ScenarioError> {
        let snaps = self.snapshots(table)?;
        let edges = snaps[0].enforced_edges(self.topology.isl_enforcement);
        Ok(ProblemInstance::new(
            snaps,
            self.task.frame_widths.clone(),
            self.image_bits(),
            self.slot_len_s()?,
            self.compute.clone(),
            self.link.clone(),
            edges,
        ))
    }

    pub fn problem(&self) -> Result<ProblemInstance, ScenarioError> {
        self.problem_with(&self.load_rate_table()?)
    }

    /// The same scenario restricted to frame `k` alone, starting at its slot.
    pub fn single_frame(&self, k: usize) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        out.task.start_time_s = self.task.start_time_s + k as f64 * self.slot_len_s()?;
        out.task.frame_widths = vec![self.task.frame_widths[k]];
        Ok(out)
    }
}

/// Reads and validates a scenario file. A relative rate-table path is taken
/// relative to the scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg = ScenarioConfig::from_toml_str(&text, &path.display().to_string())?;
    if let Some(rt) = &cfg.rate_table {
        if rt.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.rate_table = Some(dir.join(rt));
            }
        }
    }
    Ok(cfg)
}

/// Parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Width of every frame.
    Width,
    /// Number of frames: the first frame keeps its width, the rest are empty.
    Frames,
    Eta,
    Gsd,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Width => "W",
            SweepParam::Frames => "K",
            SweepParam::Eta => "eta",
            SweepParam::Gsd => "gsd",
        }
    }

    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, ScenarioError> {
        let mut out = cfg.clone();
        match self {
            SweepParam::Width => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(invalid("task.frame_widths", "widths are whole numbers"));
                }
                for w in out.task.frame_widths.iter_mut() {
                    *w = value as u32;
                }
            }
            SweepParam::Frames => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(invalid("task.frame_widths", "frame count is a positive whole number"));
                }
                let first = cfg.task.frame_widths[0];
                out.task.frame_widths = vec![0; value as usize];
                out.task.frame_widths[0] = first;
            }
            SweepParam::Eta => out.link.isl_tx_fraction = value,
            SweepParam::Gsd => out.imaging.gsd_m = value,
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// Parses `W=1..40`, `K=1..5`, `eta=0.1,1` or `gsd=0.5`.
    pub fn parse(spec: &str) -> Result<Self, ScenarioError> {
        let bad = || ScenarioError::BadOverride(spec.into());
        let (name, range) = spec.split_once('=').ok_or_else(bad)?;
        let param = match name.trim() {
            "W" | "w" | "width" => SweepParam::Width,
            "K" | "k" | "frames" => SweepParam::Frames,
            "eta" => SweepParam::Eta,
            "gsd" | "d_gsd" => SweepParam::Gsd,
            other => return Err(invalid(other, "sweepable parameters are W, K, eta, gsd")),
        };
        let range = range.trim();
        let values = if let Some((a, b)) = range.split_once("..") {
            let a: i64 = a.trim().parse().map_err(|_| bad())?;
            // Ranges include both ends; `a..=b` is accepted as a synonym.
            let b = b.strip_prefix('=').unwrap_or(b);
            let b: i64 = b.trim().parse().map_err(|_| bad())?;
            (a..=b).map(|v| v as f64).collect()
        } else {
            range
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?
        };
        if values.is_empty() {
            return Err(bad());
        }
        Ok(Self { param, values })
    }
}

#[derive(Debug, Clone)]
pub struct BuiltinScenario {
    pub name: String,
    pub description: String,
    pub config: ScenarioConfig,
    pub sweep: Option<Sweep>,
}

/// Frame widths of the bundled La Palma pass.
pub fn lapalma_widths() -> Vec<u32> {
    LAPALMA_PROFILE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().expect("bundled profile is numeric"))
        .collect()
}

fn eta_label(eta: f64) -> &'static str {
    if eta == 1.0 {
        "eta1"
    } else {
        "eta0.1"
    }
}

pub fn builtin_scenarios() -> Vec<BuiltinScenario> {
    let mut out = Vec::new();
    for (mode, tag) in [(TopologyMode::VdEqualsV0, "v0"), (TopologyMode::VdOffset, "v5")] {
        for eta in [1.0, 0.1] {
            let mut cfg = ScenarioConfig::default();
            cfg.topology.mode = mode;
            cfg.link.isl_tx_fraction = eta;
            cfg.name = format!("sweep-{tag}-{}", eta_label(eta));
            out.push(BuiltinScenario {
                name: cfg.name.clone(),
                description: format!("single frame, W = 0..40, destination {tag}, eta = {eta}"),
                config: cfg,
                sweep: Some(Sweep {
                    param: SweepParam::Width,
                    values: (0..=40).map(f64::from).collect(),
                }),
            });
        }
    }
    for (mode, tag) in [(TopologyMode::VdEqualsV0, "v0"), (TopologyMode::VdOffset, "v5")] {
        for w0 in [5u32, 10, 15, 20] {
            let mut cfg = ScenarioConfig::default();
            cfg.topology.mode = mode;
            cfg.task.frame_widths = vec![w0];
            cfg.name = format!("empty-{tag}-w{w0}");
            out.push(BuiltinScenario {
                name: cfg.name.clone(),
                description: format!("one frame of {w0} images followed by empty frames, K = 1..5, destination {tag}"),
                config: cfg,
                sweep: Some(Sweep {
                    param: SweepParam::Frames,
                    values: (1..=5).map(f64::from).collect(),
                }),
            });
        }
    }
    for eta in [1.0, 0.1] {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.mode = TopologyMode::VdOffset;
        cfg.link.isl_tx_fraction = eta;
        cfg.task.frame_widths = lapalma_widths();
        cfg.name = if eta == 1.0 {
            "lapalma".into()
        } else {
            "lapalma-eta0.1".into()
        };
        out.push(BuiltinScenario {
            name: cfg.name.clone(),
            description: format!("82-frame pass over La Palma, destination v5, eta = {eta}"),
            config: cfg,
            sweep: None,
        });
    }
    out
}

pub fn builtin(name: &str) -> Option<BuiltinScenario> {
    builtin_scenarios().into_iter().find(|b| b.name == name)
}

/// A builtin name or a path to a scenario file.
pub fn resolve(name_or_path: &str) -> Result<BuiltinScenario, ScenarioError> {
    if let Some(b) = builtin(name_or_path) {
        return Ok(b);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let config = load_scenario(path)?;
        return Ok(BuiltinScenario {
            name: config.name.clone(),
            description: path.display().to_string(),
            config,
            sweep: None,
        });
    }
    Err(ScenarioError::Unknown(name_or_path.into()))
}
