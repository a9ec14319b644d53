//! End-to-end run: enhance, generate, upscale, score, validate.
//!
//! Per-stage seeds are fixed offsets of the run seed: enhance `+0`,
//! generate `+1`. Everything a run produces lands in `output_dir` next to a
//! `manifest.json` describing it.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use artpress_core::enhance::{ChatBackend, EnhanceOptions, Enhancer, Instructions, Method, PromptPair};
use artpress_core::imaging::ImageBuffer;
use artpress_core::product::{validate_for_product, ProductSpec, Verdict};
use artpress_core::quality::{score, QualityScores, DEFAULT_PERIOD};
use artpress_core::ragstore::{Embedder, HashEmbedder, Store, DEFAULT_DIM};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::hex;
use crate::db::ingest;
use crate::error::Error;
use crate::llm::{HttpChatBackend, Limited, RetryPolicy, Retrying, SystemClock, DEFAULT_CONCURRENCY};
use crate::mock::EchoChat;
use crate::png_io::{read_png, write_png};
use crate::remote::{generate_remote, Endpoint, GenerateRequest, RemoteEmbedder};
use crate::upscaler::{UpscalerSpec, DEFAULT_SCALE};

pub const ENHANCE_SEED_OFFSET: u64 = 0;
pub const GENERATE_SEED_OFFSET: u64 = 1;
pub const DEFAULT_SIZE: u32 = 1024;

pub const PAIR_FILE: &str = "pair.json";
pub const GENERATED_FILE: &str = "generated.png";
pub const UPSCALED_FILE: &str = "upscaled.png";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A preset name (`art_print`, `duvet`, `WxH`) or an explicit spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProductArg {
    Named(String),
    Spec(ProductSpec),
}

impl ProductArg {
    pub fn resolve(&self) -> Result<ProductSpec, Error> {
        match self {
            ProductArg::Named(name) => Ok(ProductSpec::parse(name)?),
            ProductArg::Spec(spec) => Ok(ProductSpec::new(spec.name.clone(), spec.min_width, spec.min_height)?),
        }
    }
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}

fn default_size() -> u32 {
    DEFAULT_SIZE
}

fn default_period() -> u32 {
    DEFAULT_PERIOD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub base: String,
    pub method: Method,
    /// Prompt store JSONL; required by `template` and `rag_multishot`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    /// Chat endpoint URL or `mock`; falls back to `ARTPRESS_LLM_URL`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_endpoint: Option<String>,
    /// Generator URL or `mock`; falls back to `ARTPRESS_GEN_URL`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_endpoint: Option<String>,
    /// Embedding endpoint for query vectors; hashed bag-of-words when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_endpoint: Option<String>,
    /// `nearest`, `lanczos` or `remote:<url>`.
    pub upscaler: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<ProductArg>,
    pub seed: u64,
    #[serde(default = "default_size")]
    pub size: u32,
    #[serde(default = "default_period")]
    pub period: u32,
    #[serde(default)]
    pub options: EnhanceOptions,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Loads a config, resolving relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.store = cfg.store.map(|s| base.join(s));
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }
}

/// Builds the chat backend for an endpoint: `mock` echoes in-process,
/// anything else is an HTTP backend with retries and bounded concurrency.
pub fn chat_backend(endpoint: &str, options: &EnhanceOptions) -> Box<dyn ChatBackend + Send + Sync> {
    match Endpoint::parse(endpoint) {
        Endpoint::Mock => Box::new(EchoChat),
        Endpoint::Http(url) => {
            let timeout = Duration::from_secs_f64(options.timeout_secs.max(0.001));
            let http = HttpChatBackend::new(&url, std::env::var(crate::ENV_LLM_API_KEY).ok(), timeout);
            Box::new(Retrying::new(
                Limited::new(http, DEFAULT_CONCURRENCY),
                RetryPolicy::with_retries(options.retries),
            ))
        }
    }
}

pub fn embedder_for(endpoint: Option<&str>, options: &EnhanceOptions) -> Box<dyn Embedder> {
    match endpoint.map(Endpoint::parse) {
        Some(Endpoint::Http(url)) => Box::new(RemoteEmbedder::new(
            &url,
            DEFAULT_DIM,
            Duration::from_secs_f64(options.timeout_secs.max(0.001)),
        )),
        _ => Box::new(HashEmbedder::default()),
    }
}

pub fn load_store(path: &Path, embedder: &dyn Embedder) -> Result<Store, Error> {
    if !path.is_file() {
        return Err(Error::Config(format!("store file not found: {}", path.display())));
    }
    Ok(ingest(path, embedder)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub enhance: u64,
    pub generate: u64,
}

impl Seeds {
    pub fn from_run(run: u64) -> Self {
        Self {
            run,
            enhance: run.wrapping_add(ENHANCE_SEED_OFFSET),
            generate: run.wrapping_add(GENERATE_SEED_OFFSET),
        }
    }
}

/// Configuration echo: everything that determines the outputs, with the
/// store recorded by digest rather than location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInputs {
    pub base: String,
    pub method: Method,
    pub store_sha256: Option<String>,
    pub llm_endpoint: Option<String>,
    pub generator_endpoint: String,
    pub upscaler: UpscalerSpec,
    pub product: Option<ProductSpec>,
    pub size: u32,
    pub period: u32,
    pub options: EnhanceOptions,
    pub instructions_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub elapsed_seconds: f64,
    /// Path relative to the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub width: u32,
    pub height: u32,
    pub period: u32,
    pub blurriness: f64,
    pub pixelation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub inputs: ManifestInputs,
    pub seeds: Seeds,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_model_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<StageFailure>,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn artifact_path(&self, output_dir: &Path, stage: &str) -> Option<PathBuf> {
        self.stage(stage)?.artifact.as_ref().map(|a| output_dir.join(a))
    }
}

/// Everything checked before the output directory is touched.
struct Prepared {
    store: Option<Store>,
    store_sha256: Option<String>,
    embedder: Box<dyn Embedder>,
    backend: Option<Box<dyn ChatBackend + Send + Sync>>,
    generator: Endpoint,
    upscaler: UpscalerSpec,
    product: Option<ProductSpec>,
}

fn prepare(config: &PipelineConfig) -> Result<Prepared, Error> {
    if config.base.trim().is_empty() {
        return Err(Error::Config("base prompt is empty".into()));
    }
    config.options.validate()?;
    if config.period == 0 {
        return Err(Error::Config("period must be at least 1".into()));
    }
    GenerateRequest {
        positive: String::new(),
        negative: String::new(),
        width: config.size,
        height: config.size,
        seed: 0,
    }
    .validate()?;
    let upscaler = UpscalerSpec::parse_cli(&config.upscaler, config.scale)?;
    let product = config.product.as_ref().map(ProductArg::resolve).transpose()?;
    let generator = config
        .generator_endpoint
        .clone()
        .or_else(|| std::env::var(crate::ENV_GEN_URL).ok())
        .ok_or_else(|| Error::Config(format!("no generator endpoint configured and {} is unset", crate::ENV_GEN_URL)))?;

    let embedder = embedder_for(config.embed_endpoint.as_deref(), &config.options);
    let needs_store = matches!(config.method, Method::Template | Method::RagMultishot);
    let (store, store_sha256) = match &config.store {
        Some(path) => {
            let store = load_store(path, embedder.as_ref())?;
            let bytes = std::fs::read(path).map_err(Error::io(path))?;
            (Some(store), Some(sha256_hex(&bytes)))
        }
        None if needs_store => {
            return Err(Error::Config(format!("method {} requires a store", config.method.as_str())))
        }
        None => (None, None),
    };
    let backend = match config.method {
        Method::Template => None,
        _ => {
            let endpoint = config
                .llm_endpoint
                .clone()
                .or_else(|| std::env::var(crate::ENV_LLM_URL).ok())
                .ok_or_else(|| {
                    Error::Config(format!("no chat endpoint configured and {} is unset", crate::ENV_LLM_URL))
                })?;
            Some(chat_backend(&endpoint, &config.options))
        }
    };
    Ok(Prepared {
        store,
        store_sha256,
        embedder,
        backend,
        generator: Endpoint::parse(&generator),
        upscaler,
        product,
    })
}

struct Recorder<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl Recorder<'_> {
    fn push(&mut self, stage: &str, started: Instant, artifact: Option<(&str, Option<&[u8]>)>) {
        self.manifest.stages.push(StageRecord {
            stage: stage.into(),
            elapsed_seconds: started.elapsed().as_secs_f64(),
            artifact: artifact.map(|(name, _)| name.to_string()),
            sha256: artifact.and_then(|(_, bytes)| bytes.map(sha256_hex)),
        });
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<Vec<u8>, Error> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifacts serialize");
        bytes.push(b'\n');
        let path = self.dir.join(name);
        std::fs::write(&path, &bytes).map_err(Error::io(&path))?;
        Ok(bytes)
    }

    fn write_manifest(&self) -> Result<(), Error> {
        self.write_json(MANIFEST_FILE, &self.manifest).map(|_| ())
    }
}

/// Runs every stage. On a stage failure the manifest is still written,
/// with the failing stage and its cause, and the error is returned.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, Error> {
    let run_start = Instant::now();
    let prepared = prepare(config)?;
    let seeds = Seeds::from_run(config.seed);
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;

    let instructions = Instructions::default();
    let mut rec = Recorder {
        dir,
        manifest: RunManifest {
            inputs: ManifestInputs {
                base: config.base.clone(),
                method: config.method,
                store_sha256: prepared.store_sha256.clone(),
                llm_endpoint: config.llm_endpoint.clone(),
                generator_endpoint: prepared.generator.to_string(),
                upscaler: prepared.upscaler.clone(),
                product: prepared.product.clone(),
                size: config.size,
                period: config.period,
                options: config.options.clone(),
                instructions_version: instructions.version.clone(),
            },
            seeds: seeds.clone(),
            stages: Vec::new(),
            generator_model_id: None,
            metrics: None,
            verdict: None,
            error: None,
            elapsed_seconds: 0.0,
        },
    };

    let result = run_stages(config, &prepared, &instructions, &seeds, &mut rec);
    rec.manifest.elapsed_seconds = run_start.elapsed().as_secs_f64();
    if let Err(Error::Stage { stage, source }) = &result {
        rec.manifest.error = Some(StageFailure {
            stage: stage.to_string(),
            cause: source.to_string(),
        });
    }
    rec.write_manifest()?;
    result.map(|()| rec.manifest)
}

fn staged<T>(stage: &'static str, r: Result<T, impl Into<Error>>) -> Result<T, Error> {
    r.map_err(|e| Error::Stage {
        stage,
        source: Box::new(e.into()),
    })
}

fn run_stages(
    config: &PipelineConfig,
    prepared: &Prepared,
    instructions: &Instructions,
    seeds: &Seeds,
    rec: &mut Recorder<'_>,
) -> Result<(), Error> {
    let clock = SystemClock::default();
    let backend: Option<&dyn ChatBackend> = prepared.backend.as_deref().map(|b| b as &dyn ChatBackend);
    let enhancer = Enhancer {
        store: prepared.store.as_ref(),
        embedder: prepared.embedder.as_ref(),
        backend,
        instructions,
        options: config.options.clone(),
        clock: &clock,
    };

    let t = Instant::now();
    let pair: PromptPair = staged("enhance", enhancer.enhance(config.method, &config.base, seeds.enhance))?;
    staged("enhance", rec.write_json(PAIR_FILE, &pair))?;
    // The pair embeds its own latency, so it carries no digest.
    rec.push("enhance", t, Some((PAIR_FILE, None)));

    let t = Instant::now();
    let request = GenerateRequest {
        positive: pair.positive.clone(),
        negative: pair.negative.clone(),
        width: config.size,
        height: config.size,
        seed: seeds.generate,
    };
    let generated = staged("generate", generate_remote(&prepared.generator, &request))?;
    let bytes = staged("generate", write_png(&generated.image, &rec.dir.join(GENERATED_FILE)))?;
    rec.manifest.generator_model_id = Some(generated.model_id.clone());
    rec.push("generate", t, Some((GENERATED_FILE, Some(&bytes))));

    let t = Instant::now();
    let upscaled: ImageBuffer = staged("upscale", prepared.upscaler.upscale(&generated.image))?;
    let bytes = staged("upscale", write_png(&upscaled, &rec.dir.join(UPSCALED_FILE)))?;
    rec.push("upscale", t, Some((UPSCALED_FILE, Some(&bytes))));

    let t = Instant::now();
    let QualityScores { blurriness, pixelation } = staged("metrics", score(&upscaled, config.period))?;
    let metrics = Metrics {
        width: upscaled.width(),
        height: upscaled.height(),
        period: config.period,
        blurriness,
        pixelation,
    };
    let bytes = staged("metrics", rec.write_json(METRICS_FILE, &metrics))?;
    rec.manifest.metrics = Some(metrics);
    rec.push("metrics", t, Some((METRICS_FILE, Some(&bytes))));

    if let Some(product) = &prepared.product {
        let t = Instant::now();
        rec.manifest.verdict = Some(validate_for_product(&upscaled, product));
        rec.push("validate", t, None);
    }
    Ok(())
}

/// Re-hashes every recorded artifact; returns the stages whose file is
/// missing or differs from its digest.
pub fn verify_manifest(manifest: &RunManifest, output_dir: &Path) -> Vec<String> {
    manifest
        .stages
        .iter()
        .filter_map(|s| {
            let path = output_dir.join(s.artifact.as_ref()?);
            let ok = match std::fs::read(&path) {
                Ok(bytes) => s.sha256.as_ref().is_none_or(|d| *d == sha256_hex(&bytes)),
                Err(_) => false,
            };
            (!ok).then(|| s.stage.clone())
        })
        .collect()
}

/// Reads a generated or upscaled artifact back.
pub fn read_artifact(manifest: &RunManifest, output_dir: &Path, stage: &str) -> Result<ImageBuffer, Error> {
    let path = manifest
        .artifact_path(output_dir, stage)
        .ok_or_else(|| Error::Config(format!("manifest has no {stage} artifact")))?;
    Ok(read_png(&path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_offsets() {
        let s = Seeds::from_run(7);
        assert_eq!((s.enhance, s.generate), (7, 8));
        assert_eq!(Seeds::from_run(u64::MAX).generate, 0);
    }

    #[test]
    fn product_arg_forms() {
        let named: ProductArg = serde_json::from_str(r#""art_print""#).unwrap();
        assert_eq!(named.resolve().unwrap(), ProductSpec::art_print());
        let spec: ProductArg =
            serde_json::from_str(r#"{"name":"poster","min_width":3000,"min_height":2000}"#).unwrap();
        assert_eq!(spec.resolve().unwrap().min_height, 2000);
        let zero: ProductArg = serde_json::from_str(r#"{"name":"z","min_width":0,"min_height":1}"#).unwrap();
        assert!(zero.resolve().is_err());
    }

    #[test]
    fn missing_store_fails_before_any_output() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let missing = tmp.path().join("nope.jsonl");
        let config = PipelineConfig {
            base: "cat".into(),
            method: Method::Template,
            store: Some(missing.clone()),
            llm_endpoint: None,
            generator_endpoint: Some("mock".into()),
            embed_endpoint: None,
            upscaler: "nearest".into(),
            scale: 4.0,
            product: None,
            seed: 7,
            size: 64,
            period: 8,
            options: EnhanceOptions::default(),
            output_dir: out.clone(),
        };
        let err = run_pipeline(&config).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains(&missing.display().to_string()));
        assert!(!out.exists());
    }
}
