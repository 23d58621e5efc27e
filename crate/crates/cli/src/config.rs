//! Optional TOML configuration. Every key mirrors a command-line flag;
//! flags given on the command line win.
//!
//! ```toml
//! seed = 7
//! jobs = 4
//! out = "results"
//!
//! [run]
//! envs = ["maze:0", "frozenlake:0"]
//! policies = ["long", "window-6", "clip-12to1"]
//! agent = "scripted:p_max=0.9"
//! episodes = 64
//! step_mult = 1.0
//!
//! [cpl_collect]
//! envs = ["maze:0"]
//! chosen = "6"
//! rejected = "inf"
//! k = 20
//! pairs = 1000
//!
//! [attn_report]
//! band = 5
//!
//! [cost_model]
//! policy = "clip-12to1"
//! turns = 120
//! reuse = "on"
//!
//! [suite]
//! name = "main_grid"
//! set = { episodes = "16" }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub cpl_collect: CplSection,
    #[serde(default)]
    pub attn_report: AttnSection,
    #[serde(default)]
    pub cost_model: CostSection,
    #[serde(default)]
    pub suite: SuiteSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub envs: Option<Vec<String>>,
    pub policies: Option<Vec<String>>,
    pub agent: Option<String>,
    pub episodes: Option<usize>,
    pub step_mult: Option<f64>,
    pub view: Option<String>,
    pub init: Option<PathBuf>,
    pub records: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CplSection {
    pub envs: Option<Vec<String>>,
    pub agent: Option<String>,
    pub chosen: Option<String>,
    pub rejected: Option<String>,
    pub k: Option<usize>,
    pub pairs: Option<usize>,
    pub per_episode: Option<usize>,
    pub max_episodes: Option<usize>,
    pub dedup: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttnSection {
    pub input: Option<PathBuf>,
    pub band: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub policy: Option<String>,
    pub turns: Option<usize>,
    pub reuse: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub name: Option<String>,
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub set: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
