//! TOML configuration with `[cache]`, `[model]`, `[sim]` and `[output]`
//! sections. Every key is optional. `--set section.key=value` overrides are
//! applied to the parsed table before it is validated.

use std::path::{Path, PathBuf};

use ladder_kv::{
    KvCache, LadderConfig, PatternKind, PositionMode, Protocol, SimConfig, ToyModelConfig,
};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_RATIOS: [f64; 4] = [0.125, 0.25, 0.375, 0.5];
pub const DEFAULT_SWEEP_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub layers: usize,
    /// Defaults to a quarter of the layers.
    pub span: Option<usize>,
    /// Defaults to half the span.
    pub overlap: Option<usize>,
    pub segment_width: usize,
    pub sinks: usize,
    /// Defaults to `segment_width`.
    pub recent_exempt: Option<usize>,
    pub budget: usize,
    pub policy: String,
}

impl Default for CacheSection {
    fn default() -> Self {
        Self {
            layers: 32,
            span: None,
            overlap: None,
            segment_width: ladder_kv::pattern::DEFAULT_SEGMENT_WIDTH,
            sinks: ladder_kv::pattern::DEFAULT_SINKS,
            recent_exempt: None,
            budget: 512,
            policy: "ladder".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Numeric mode (toy model payloads) instead of structural.
    pub enabled: bool,
    pub heads: usize,
    pub head_dim: usize,
    pub seed: u64,
    /// `absolute`, `relative` or `none`.
    pub position_mode: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            enabled: false,
            heads: 2,
            head_dim: 16,
            seed: 0,
            position_mode: "absolute".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub steps: usize,
    /// `token` or `sliding`.
    pub protocol: String,
    pub window: usize,
    pub snapshot_every: usize,
    pub record_appends: bool,
    /// Grid width for `render` and `sweep`.
    pub slots: usize,
    pub sweep_n: usize,
    pub seed: u64,
    pub ratios: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            steps: 16384,
            protocol: "token".into(),
            window: ladder_kv::simulator::DEFAULT_WINDOW,
            snapshot_every: ladder_kv::simulator::DEFAULT_SNAPSHOT_EVERY,
            record_appends: false,
            slots: 4096,
            sweep_n: 1500,
            seed: DEFAULT_SWEEP_SEED,
            ratios: DEFAULT_RATIOS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub trace: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
    /// Write the `<trace>.survival.csv` sidecar.
    pub survival: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trace: None,
            svg: None,
            sweep: None,
            survival: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub cache: CacheSection,
    pub model: ModelSection,
    pub sim: SimSection,
    pub output: OutputSection,
}

impl FileConfig {
    /// Reads `path` (defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn ladder(&self) -> LadderConfig {
        let c = &self.cache;
        let span = c.span.unwrap_or((c.layers / 4).max(1));
        LadderConfig {
            layers: c.layers,
            span,
            overlap: c.overlap.unwrap_or(span / 2),
            segment_width: c.segment_width,
            sinks: c.sinks,
            recent_exempt: c.recent_exempt.unwrap_or(c.segment_width),
            budget: c.budget,
        }
    }

    pub fn policy(&self) -> Result<PatternKind, CliError> {
        parse_policy(&self.cache.policy)
    }

    pub fn model(&self) -> Result<Option<ToyModelConfig>, CliError> {
        if !self.model.enabled {
            return Ok(None);
        }
        let m = &self.model;
        let position_mode = match m.position_mode.as_str() {
            "absolute" => PositionMode::AbsoluteOriginal,
            "relative" => PositionMode::CacheRelative,
            "none" => PositionMode::None,
            other => {
                return Err(CliError::Config(format!(
                    "unknown position_mode `{other}` (expected absolute, relative or none)"
                )))
            }
        };
        Ok(Some(ToyModelConfig {
            layers: self.cache.layers,
            heads: m.heads,
            head_dim: m.head_dim,
            seed: m.seed,
            position_mode,
        }))
    }

    /// Simulation settings for `policy`, fully validated, including whether
    /// the cache accepts the geometry.
    pub fn sim_config(&self, policy: PatternKind) -> Result<SimConfig, CliError> {
        let s = &self.sim;
        let protocol = match s.protocol.as_str() {
            "token" => Protocol::TokenByToken,
            "sliding" => Protocol::SlidingWindow(s.window),
            other => {
                return Err(CliError::Config(format!(
                    "unknown protocol `{other}` (expected token or sliding)"
                )))
            }
        };
        let sim = SimConfig {
            cache: self.ladder(),
            policy,
            model: self.model()?,
            steps: s.steps,
            protocol,
            snapshot_every: s.snapshot_every,
            record_survival: self.output.survival,
            record_appends: s.record_appends,
        };
        sim.validate()?;
        KvCache::new(sim.cache, policy, 0)?;
        Ok(sim)
    }

    pub fn check_ratios(&self) -> Result<(), CliError> {
        if self.sim.ratios.is_empty() {
            return Err(CliError::Config("sim.ratios must not be empty".into()));
        }
        if let Some(r) = self.sim.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(CliError::Config(format!("ratio {r} must lie in (0, 1]")));
        }
        Ok(())
    }
}

pub fn parse_policy(name: &str) -> Result<PatternKind, CliError> {
    name.parse().map_err(|_| {
        CliError::Config(format!(
            "unknown policy `{name}` (expected ladder, streaming, full or random:<seed>)"
        ))
    })
}

/// Applies `section.key=value`. The value is read as a TOML value and falls
/// back to a plain string, so `cache.policy=streaming` needs no quotes.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let bad = || CliError::Config(format!("override `{item}` is not section.key=value"));
    let (path, raw) = item.split_once('=').ok_or_else(bad)?;
    let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let section_table = entry
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("`{section}` is not a section")))?;
    section_table.insert(key.to_string(), value);
    Ok(())
}
