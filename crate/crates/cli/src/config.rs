//! Layered configuration: built-in defaults, one TOML file, then environment
//! variables for secrets (API keys are read from the variable named in
//! `gateway.http.api_key_env`, never from the file).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use graphwalk_core::agent::RuntimeConfig;
use graphwalk_core::eval::{ContaminationConfig, EmConvention};
use graphwalk_core::gateway::{
    Gateway, GatewayConfig, HttpBackend, HttpBackendConfig, PromptLibrary, RequestLog, StubBackend, StubScript,
};
use graphwalk_core::kg::{read_triples_file, RemoteSparql, SparqlConfig, TripleFormat};
use graphwalk_core::synth::SynthConfig;
use graphwalk_core::toolbox::{Toolbox, ToolboxConfig};
use graphwalk_core::walk::{read_list, reference_structure_mix, Structure, WalkConfig};
use graphwalk_core::{EntityId, GraphStore, KnowledgeGraph};
use serde::{Deserialize, Serialize};

/// Invalid or inconsistent configuration; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreBackend {
    #[default]
    Memory,
    Sparql,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreSection {
    pub backend: StoreBackend,
    /// Triple files for the in-memory backend (TSV, or N-Triples by extension).
    pub triples: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<TripleFormat>,
    pub sparql: SparqlConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    #[serde(default)]
    pub predicates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicates_file: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds_file: Option<PathBuf>,
    pub d_min: usize,
    pub d_max: usize,
    #[serde(default = "reference_structure_mix")]
    pub structure_mix: BTreeMap<Structure, f64>,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_path: u32,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_attempts() -> u32 {
    100
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayBackend {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewaySection {
    pub backend: GatewayBackend,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stub_script: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    /// JSONL request log.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_file: Option<PathBuf>,
    pub http: HttpBackendConfig,
    /// Models, temperatures, admission and retry policy.
    pub client: GatewayConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub convention: EmConvention,
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            convention: EmConvention::Hit,
            ks: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSection {
    pub bind: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub store: StoreSection,
    pub toolbox: ToolboxConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkSection>,
    pub runtime: RuntimeConfig,
    pub gateway: GatewaySection,
    pub synth: SynthConfig,
    pub eval: EvalSection,
    pub contamination: ContaminationConfig,
    pub service: ServiceSection,
    pub output: OutputSection,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::new(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| ConfigError::new(format!("{}: {}", path.display(), e.0)))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        self.store.triples.iter_mut().for_each(|p| resolve(base, p));
        if let Some(w) = &mut self.walk {
            w.predicates_file.iter_mut().chain(w.seeds_file.iter_mut()).for_each(|p| resolve(base, p));
        }
        let g = &mut self.gateway;
        g.stub_script
            .iter_mut()
            .chain(g.prompts_dir.iter_mut())
            .chain(g.log_file.iter_mut())
            .for_each(|p| resolve(base, p));
        resolve(base, &mut self.output.dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |section: &str, m: String| Err(ConfigError::new(format!("[{section}] {m}")));
        if self.toolbox.top_k == 0 || self.toolbox.per_relation_cap == 0 {
            return err("toolbox", "top_k and per_relation_cap must be positive".into());
        }
        if let Err(m) = self.runtime.validate() {
            return err("runtime", m);
        }
        if let Err(m) = self.synth.validate() {
            return err("synth", m);
        }
        if let Err(m) = self.contamination.validate() {
            return err("contamination", m);
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return err("eval", "ks must be a non-empty list of positive integers".into());
        }
        if self.gateway.client.max_in_flight == 0 || self.gateway.client.retry.max_attempts == 0 {
            return err("gateway", "max_in_flight and retry.max_attempts must be positive".into());
        }
        if let Some(w) = &self.walk {
            // full check needs the predicate and seed files; shape only here
            if w.d_min < 1 || w.d_min > w.d_max {
                return err("walk", format!("need 1 <= d_min <= d_max, got {}..{}", w.d_min, w.d_max));
            }
        }
        Ok(())
    }

    pub fn walk_config(&self) -> Result<WalkConfig, ConfigError> {
        let w = self
            .walk
            .as_ref()
            .ok_or_else(|| ConfigError::new("this command needs a [walk] section"))?;
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map(|t| read_list(&t))
                .map_err(|e| ConfigError::new(format!("{}: {e}", p.display())))
        };
        let mut predicates = w.predicates.clone();
        if let Some(p) = &w.predicates_file {
            predicates.extend(read(p)?);
        }
        let mut seeds = w.seeds.clone();
        if let Some(p) = &w.seeds_file {
            seeds.extend(read(p)?);
        }
        let cfg = WalkConfig {
            predicates,
            seeds: seeds
                .into_iter()
                .map(|s| EntityId::new(s).map_err(|e| ConfigError::new(e.to_string())))
                .collect::<Result<_, _>>()?,
            d_min: w.d_min,
            d_max: w.d_max,
            structure_mix: w.structure_mix.clone(),
            max_attempts_per_path: w.max_attempts_per_path,
            rng_seed: w.rng_seed,
        };
        cfg.validate().map_err(|e| ConfigError::new(format!("[walk] {e}")))?;
        Ok(cfg)
    }

    /// Loads the in-memory store from `store.triples`.
    pub fn memory_store(&self) -> Result<GraphStore, anyhow::Error> {
        if self.store.backend != StoreBackend::Memory {
            return Err(ConfigError::new("this command needs store.backend = \"memory\"").into());
        }
        if self.store.triples.is_empty() {
            return Err(ConfigError::new("[store] triples lists no files").into());
        }
        let mut records = Vec::new();
        for path in &self.store.triples {
            let format = self.store.format.unwrap_or_else(|| TripleFormat::from_path(path));
            records.extend(read_triples_file(path, format)?);
        }
        Ok(GraphStore::from_records(records)?)
    }

    pub fn knowledge_graph(&self) -> Result<Arc<dyn KnowledgeGraph>, anyhow::Error> {
        Ok(match self.store.backend {
            StoreBackend::Memory => Arc::new(self.memory_store()?),
            StoreBackend::Sparql => Arc::new(RemoteSparql::new(self.store.sparql.clone())?),
        })
    }

    pub fn gateway(&self) -> Result<Gateway, anyhow::Error> {
        let g = &self.gateway;
        let mut gateway = match g.backend {
            GatewayBackend::Stub => {
                let script = match &g.stub_script {
                    Some(p) => StubScript::load(p).map_err(|e| ConfigError::new(e.to_string()))?,
                    None => StubScript::default(),
                };
                Gateway::new(Arc::new(StubBackend::new(script)), g.client.clone())
            }
            GatewayBackend::Http => Gateway::new(Arc::new(HttpBackend::new(&g.http)?), g.client.clone()),
        };
        if let Some(dir) = &g.prompts_dir {
            let prompts = PromptLibrary::with_overrides(dir)
                .map_err(|e| ConfigError::new(e.to_string()))?;
            gateway = gateway.with_prompts(prompts);
        }
        if let Some(path) = &g.log_file {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            gateway = gateway.with_log(RequestLog::to_file(path)?);
        }
        Ok(gateway)
    }

    pub fn toolbox(&self, kg: Arc<dyn KnowledgeGraph>, gateway: Option<Arc<Gateway>>) -> Toolbox {
        let toolbox = Toolbox::new(kg, self.toolbox.clone());
        match gateway {
            Some(g) if self.toolbox.rerank => toolbox.with_gateway(g),
            _ => toolbox,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let text = cfg.to_toml();
        assert_eq!(Config::parse(&text).unwrap(), cfg);
        assert_eq!(Config::parse(&text).unwrap().to_toml(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::parse("[runtime]\nmax_turn = 3\n").is_err());
        assert!(Config::parse("[bogus]\n").is_err());
    }

    #[test]
    fn bounds_checked() {
        let cfg = Config::parse("[runtime]\nmax_turns = 0\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = Config::parse("[walk]\nd_min = 5\nd_max = 2\n").unwrap();
        assert!(cfg.validate().is_err());
        assert!(Config::parse("[walk]\nd_min = 2\n").is_err(), "d_max is required");
    }

    #[test]
    fn reference_constants_are_defaults() {
        let cfg = Config::default();
        assert_eq!(cfg.runtime.max_turns, 10);
        assert_eq!(cfg.toolbox.top_k, 20);
        assert_eq!(cfg.toolbox.per_relation_cap, 5);
        assert_eq!(cfg.synth.quality_threshold, 9.0);
        assert_eq!(cfg.contamination.exclusion_threshold, 0.85);
    }

    #[test]
    fn walk_section_with_mix() {
        let cfg = Config::parse(
            "[walk]\nd_min = 1\nd_max = 3\nseeds = [\"ws1946\"]\npredicates = [\"p\"]\n[walk.structure_mix]\n2hop = 1.0\n",
        )
        .unwrap();
        let w = cfg.walk_config().unwrap();
        assert_eq!(w.structure_mix, BTreeMap::from([(Structure::Hop2, 1.0)]));
        let again = Config::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}
