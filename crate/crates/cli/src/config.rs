use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hass_core::quality_eval::IouKind;
use hass_core::teacher_sim::DeskSimConfig;
use hass_core::{CategorySet, HardnessSchedule, ScheduleSpec, SynthesisConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub db: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Everything a run depends on. Command-line flags override these fields and
/// the merged result is echoed into each output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub categories: CategorySet,
    pub schedule: ScheduleSpec,
    pub synthesis: SynthesisConfig,
    pub simulation: DeskSimConfig,
    pub iou: IouKind,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            categories: CategorySet::kitti(),
            schedule: ScheduleSpec::default(),
            synthesis: SynthesisConfig::default(),
            simulation: DeskSimConfig::default(),
            iou: IouKind::Bev,
            seed: None,
            workers: None,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.categories.is_empty() {
            bail!("category set is empty");
        }
        self.schedule.resolve()?;
        self.synthesis.validate()?;
        if let Some(w) = &self.synthesis.category_weights {
            if let Some(unknown) = w.keys().find(|c| !self.categories.contains(c)) {
                bail!("weight given for unknown category {unknown:?}");
            }
        }
        self.simulation.generator.validate(&self.categories)?;
        self.simulation.teacher.validate()?;
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        Ok(())
    }

    pub fn schedule(&self) -> anyhow::Result<HardnessSchedule> {
        Ok(self.schedule.resolve()?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Writes `effective_config.json` into `dir`.
    pub fn echo(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join("effective_config.json"), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
