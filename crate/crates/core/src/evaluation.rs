//! Measurement harness: judge scores, computation time, and hash-based
//! reproducibility, aggregated into a report.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::structured::parse_json;
use crate::backends::{
    complete_structured, image_generate, BackendError, ImageBackend, ImageClient, ImageRequest, ImageResult,
    TextClient, TextRequest, TextResponse, TextTask,
};
use crate::canonical::sha256_hex;
use crate::error::{Error, Result};
use crate::pipeline::{named_style, Backends, MemorySessionStore, Pipeline, PipelineConfig};
use crate::prompt_compiler::scene_hash;
use crate::scene_model::{CompositionTemplate, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub theme_conformity: u8,
    pub artistic_quality: u8,
    pub understandability: u8,
}

pub(crate) const JUDGE_SYSTEM: &str = "You grade illustrations made for a text. \
Reply with JSON only: {\"theme_conformity\": 0-100, \"artistic_quality\": 0-100, \"understandability\": 0-100}.";

/// Asks `judge` for three integer scores in `[0, 100]`. A reply that does
/// not parse, or has a score out of range, is reprompted once.
pub fn judge_scores(
    paper_text: &str,
    scene_or_prompt: &str,
    image_ref: &str,
    judge: &dyn TextClient,
) -> Result<JudgeScores> {
    let user = format!(
        "Source text:\n{paper_text}\n\nImage description:\n{scene_or_prompt}\n\nImage: {image_ref}\n\n\
         Score how well the image conforms to the text's theme, its artistic quality, and how understandable it is."
    );
    let request = TextRequest::new(JUDGE_SYSTEM, user, 0, TextTask::Judge);
    #[derive(Deserialize)]
    struct Raw {
        theme_conformity: serde_json::Value,
        artistic_quality: serde_json::Value,
        understandability: serde_json::Value,
    }
    let score = |name: &str, v: &serde_json::Value| -> std::result::Result<u8, String> {
        match v.as_i64() {
            Some(n) if (0..=100).contains(&n) => Ok(n as u8),
            _ => Err(format!("{name} must be an integer in [0, 100], got {v}")),
        }
    };
    let (scores, _) = complete_structured(judge, &request, |text| {
        let raw: Raw = parse_json(text)?;
        Ok(JudgeScores {
            theme_conformity: score("theme_conformity", &raw.theme_conformity)?,
            artistic_quality: score("artistic_quality", &raw.artistic_quality)?,
            understandability: score("understandability", &raw.understandability)?,
        })
    })?;
    Ok(scores)
}

/// `100 * (largest group of equal hashes) / n` over `n` calls of `run`.
pub fn reproducibility(mut run: impl FnMut() -> Result<String>, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::parse("reproducibility", "n must be at least 2"));
    }
    let mut groups: HashMap<String, usize> = HashMap::new();
    for _ in 0..n {
        *groups.entry(run()?).or_default() += 1;
    }
    let largest = groups.values().copied().max().unwrap_or(0);
    Ok(100.0 * largest as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The full six-stage pipeline.
    Sde,
    /// The input text sent to the image backend unchanged.
    RawPrompt,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Sde => "SDE",
            Strategy::RawPrompt => "Raw prompt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<JudgeScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_reproducibility: Option<f64>,
    pub computation_time_s: f64,
    /// Latency reported by the backends during the timed run.
    pub backend_latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub theme_conformity: f64,
    pub artistic_quality: f64,
    pub understandability: f64,
    pub image_reproducibility: f64,
    pub computation_time_s: f64,
    /// Samples that completed; means are over these.
    pub n_samples: usize,
    pub n_failed: usize,
    pub per_sample: Vec<SampleRecord>,
}

pub const TABLE_ROWS: [&str; 5] = [
    "Theme Conformity",
    "Artistic Quality",
    "Understandability",
    "Image Reproducibility",
    "Computation Time",
];

impl EvalReport {
    /// Plain-text table, one row per metric.
    pub fn table(&self) -> String {
        let values = [
            format!("{:.1}%", self.theme_conformity),
            format!("{:.1}%", self.artistic_quality),
            format!("{:.1}%", self.understandability),
            format!("{:.1}%", self.image_reproducibility),
            format!("{:.2} s", self.computation_time_s),
        ];
        let label_w = TABLE_ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
        let head = self.strategy.label();
        let value_w = values.iter().map(String::len).chain([head.len()]).max().unwrap_or(0);
        let mut out = format!("{:<label_w$} | {:>value_w$}\n", "Metric", head);
        out.push_str(&format!("{}-+-{}\n", "-".repeat(label_w), "-".repeat(value_w)));
        for (row, value) in TABLE_ROWS.iter().zip(&values) {
            out.push_str(&format!("{row:<label_w$} | {value:>value_w$}\n"));
        }
        out.push_str(&format!("samples: {} ok, {} failed\n", self.n_samples, self.n_failed));
        out
    }
}

/// Text client that adds up the latency its inner client reports.
pub struct MeteredTextClient {
    inner: Arc<dyn TextClient>,
    total_ms: Arc<AtomicU64>,
}

impl TextClient for MeteredTextClient {
    fn complete(&self, request: &TextRequest) -> std::result::Result<TextResponse, BackendError> {
        let r = self.inner.complete(request)?;
        self.total_ms.fetch_add(r.latency_ms, Ordering::Relaxed);
        Ok(r)
    }
}

struct MeteredImageBackend {
    inner: Arc<dyn ImageBackend>,
    total_ms: Arc<AtomicU64>,
}

struct MeteredImageClient {
    inner: Box<dyn ImageClient>,
    total_ms: Arc<AtomicU64>,
}

impl ImageClient for MeteredImageClient {
    fn generate(&self, request: &ImageRequest) -> Result<ImageResult> {
        let r = self.inner.generate(request)?;
        self.total_ms.fetch_add(r.latency_ms, Ordering::Relaxed);
        Ok(r)
    }
}

impl ImageBackend for MeteredImageBackend {
    fn client_for(&self, scene: &SceneGraph, template: &CompositionTemplate, out_dir: &Path) -> Box<dyn ImageClient> {
        Box::new(MeteredImageClient {
            inner: self.inner.client_for(scene, template, out_dir),
            total_ms: self.total_ms.clone(),
        })
    }
}

/// Backends whose reported latencies accumulate into one counter.
pub fn metered(backends: &Backends) -> (Backends, Arc<AtomicU64>) {
    let total = Arc::new(AtomicU64::new(0));
    let text = MeteredTextClient {
        inner: backends.text.clone(),
        total_ms: total.clone(),
    };
    let image = MeteredImageBackend {
        inner: backends.image.clone(),
        total_ms: total.clone(),
    };
    (Backends::new(Arc::new(text), Arc::new(image)), total)
}

/// Hash of the image file behind `image_ref`, or of the reference itself
/// when it is not a readable file (e.g. a URL).
fn image_hash(image_ref: &str) -> String {
    match std::fs::read(image_ref) {
        Ok(bytes) => {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(&bytes))
        }
        Err(_) => sha256_hex(image_ref),
    }
}

struct Output {
    hash: String,
    description: String,
    image_ref: String,
}

struct Runner<'a> {
    pipeline: Pipeline,
    strategy: Strategy,
    seed: u64,
    runs_dir: &'a Path,
    counter: usize,
}

impl Runner<'_> {
    fn run(&mut self, text: &str) -> Result<Output> {
        match self.strategy {
            Strategy::Sde => {
                let c = self.pipeline.art_image_creation(text, None, self.seed)?;
                Ok(Output {
                    hash: scene_hash(&c.scene)?,
                    description: c.prompt,
                    image_ref: c.image_ref.unwrap_or_default(),
                })
            }
            Strategy::RawPrompt => {
                // Stub image backends draw a scene; give them an empty one.
                let template = self.pipeline.templates().first().cloned().ok_or(Error::EmptyLibrary)?;
                let style = named_style("flat-infographic").expect("built-in style");
                let mut scene = SceneGraph::empty(&template.id, style);
                scene.seed = self.seed;
                self.counter += 1;
                let dir = self.runs_dir.join("raw").join(format!("run-{}", self.counter));
                let client = self.pipeline_image().client_for(&scene, &template, &dir);
                let result = image_generate(
                    client.as_ref(),
                    &ImageRequest {
                        prompt: text.to_string(),
                        width_px: scene.canvas.width_px,
                        height_px: scene.canvas.height_px,
                        seed: self.seed,
                    },
                )?;
                Ok(Output {
                    hash: image_hash(&result.image_ref),
                    description: text.to_string(),
                    image_ref: result.image_ref,
                })
            }
        }
    }

    fn pipeline_image(&self) -> Arc<dyn ImageBackend> {
        self.pipeline.backends().image.clone()
    }
}

/// Runs `strategy` over every text of `corpus`, judging the first run of
/// each and repeating it `n_repro` times in all for reproducibility.
///
/// Failed samples are recorded and excluded from the means; the call only
/// fails when no sample succeeds.
pub fn benchmark(
    corpus: &[String],
    strategy: Strategy,
    backends: &Backends,
    judge: &dyn TextClient,
    config: &PipelineConfig,
    n_repro: usize,
) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if n_repro < 2 {
        return Err(Error::parse("benchmark", "n_repro must be at least 2"));
    }
    let (backends, latency) = metered(backends);
    let mut runner = Runner {
        pipeline: Pipeline::new(Arc::new(MemorySessionStore::new()), backends, config.clone()),
        strategy,
        seed: config.default_seed,
        runs_dir: &config.runs_dir,
        counter: 0,
    };

    let mut per_sample = Vec::with_capacity(corpus.len());
    let mut first_error = None;
    for (index, text) in corpus.iter().enumerate() {
        latency.store(0, Ordering::Relaxed);
        let started = Instant::now();
        let first = runner.run(text);
        let elapsed = started.elapsed().as_secs_f64();
        let backend_latency_ms = latency.load(Ordering::Relaxed);
        let mut record = SampleRecord {
            index,
            scores: None,
            image_reproducibility: None,
            computation_time_s: elapsed,
            backend_latency_ms,
            output_hash: None,
            image_ref: None,
            error: None,
        };
        let outcome = first.and_then(|out| {
            record.output_hash = Some(out.hash.clone());
            record.image_ref = Some(out.image_ref.clone());
            let scores = judge_scores(text, &out.description, &out.image_ref, judge)?;
            let mut pending = Some(out.hash);
            let repro = reproducibility(
                || match pending.take() {
                    Some(h) => Ok(h),
                    None => runner.run(text).map(|o| o.hash),
                },
                n_repro,
            )?;
            Ok((scores, repro))
        });
        match outcome {
            Ok((scores, repro)) => {
                record.scores = Some(scores);
                record.image_reproducibility = Some(repro);
            }
            Err(e) => {
                tracing::warn!(sample = index, "benchmark sample failed: {e}");
                record.error = Some(e.to_string());
                first_error.get_or_insert(e);
            }
        }
        per_sample.push(record);
    }

    let ok: Vec<&SampleRecord> = per_sample.iter().filter(|r| r.succeeded()).collect();
    if ok.is_empty() {
        return Err(first_error.expect("every sample failed with an error"));
    }
    let mean = |f: &dyn Fn(&SampleRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64;
    let scores = |r: &SampleRecord| r.scores.expect("successful sample has scores");
    Ok(EvalReport {
        strategy,
        theme_conformity: mean(&|r| scores(r).theme_conformity as f64),
        artistic_quality: mean(&|r| scores(r).artistic_quality as f64),
        understandability: mean(&|r| scores(r).understandability as f64),
        image_reproducibility: mean(&|r| r.image_reproducibility.unwrap_or(0.0)),
        computation_time_s: mean(&|r| r.computation_time_s),
        n_samples: ok.len(),
        n_failed: per_sample.len() - ok.len(),
        per_sample,
    })
}
