use std::path::{Path, PathBuf};
use std::process::ExitCode as ProcessExit;

use artpress::bench::{run_and_write, BenchConfig};
use artpress::core::enhance::{EnhanceOptions, Enhancer, Instructions, Method, PromptPair};
use artpress::core::product::{validate_for_product, ProductSpec, Verdict};
use artpress::core::quality::{score, DEFAULT_PERIOD};
use artpress::db::{ingest, write_store};
use artpress::llm::SystemClock;
use artpress::pipeline::{chat_backend, embedder_for, load_store, run_pipeline, PipelineConfig};
use artpress::png_io::{read_png, write_png};
use artpress::remote::{generate_remote, Endpoint, GenerateRequest};
use artpress::report::write_latency_report;
use artpress::upscaler::UpscalerSpec;
use artpress::{Error, ExitCode, ENV_GEN_URL, ENV_LLM_URL};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "artpress", version, about = "Prompt enhancement, generation, upscaling and print validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prompt database maintenance.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Turn a base prompt into a positive/negative prompt pair.
    Enhance {
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        base: String,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Chat endpoint URL or `mock`.
        #[arg(long, env = ENV_LLM_URL)]
        llm_endpoint: Option<String>,
        /// Embedding endpoint URL; hashed bag-of-words when omitted.
        #[arg(long)]
        embed_endpoint: Option<String>,
        /// Write the pair JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Enhance this many times with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        /// Per-method latency CSV over all repeats.
        #[arg(long)]
        latency_out: Option<PathBuf>,
    },
    /// Generate an image from a prompt pair.
    Generate {
        #[arg(long)]
        pair: PathBuf,
        /// Generator URL or `mock`.
        #[arg(long, env = ENV_GEN_URL)]
        endpoint: String,
        #[arg(long, default_value_t = 1024)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Upscale a PNG.
    Upscale {
        #[arg(long = "in")]
        input: PathBuf,
        /// nearest, lanczos or remote:<url>
        #[arg(long)]
        upscaler: String,
        #[arg(long, default_value_t = 4.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print blurriness and pixelation scores.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PERIOD)]
        period: u32,
    },
    /// Benchmark upscalers over a corpus.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the whole pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check an image against a print product's minimum resolution.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        /// art_print, duvet or WxH
        #[arg(long)]
        product: String,
    },
}

#[derive(Subcommand)]
enum DbCommand {
    /// Embed a JSONL prompt file into a store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embed_endpoint: Option<String>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method `{s}`: expected template, llm or rag-multishot"))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

#[derive(Serialize)]
struct VerdictOutput<'a> {
    product: &'a ProductSpec,
    width: u32,
    height: u32,
    #[serde(flatten)]
    verdict: Verdict,
}

fn verdict_exit(verdict: Option<&Verdict>) -> ExitCode {
    match verdict {
        Some(Verdict::Insufficient { .. }) => ExitCode::Insufficient,
        _ => ExitCode::Ok,
    }
}

fn enhance(
    method: Method,
    base: &str,
    store: Option<&Path>,
    seed: u64,
    llm_endpoint: Option<&str>,
    embed_endpoint: Option<&str>,
    repeat: u32,
) -> Result<Vec<PromptPair>, Error> {
    let options = EnhanceOptions::default();
    let embedder = embedder_for(embed_endpoint, &options);
    let store = store.map(|p| load_store(p, embedder.as_ref())).transpose()?;
    let backend = match method {
        Method::Template => None,
        _ => Some(chat_backend(
            llm_endpoint.ok_or_else(|| Error::Config(format!("--llm-endpoint or {ENV_LLM_URL} is required")))?,
            &options,
        )),
    };
    let instructions = Instructions::default();
    let clock = SystemClock::default();
    let enhancer = Enhancer {
        store: store.as_ref(),
        embedder: embedder.as_ref(),
        backend: backend.as_deref().map(|b| b as _),
        instructions: &instructions,
        options,
        clock: &clock,
    };
    (0..repeat.max(1))
        .map(|i| Ok(enhancer.enhance(method, base, seed.wrapping_add(u64::from(i)))?))
        .collect()
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Db {
            command: DbCommand::Ingest { input, out, embed_endpoint },
        } => {
            let embedder = embedder_for(embed_endpoint.as_deref(), &EnhanceOptions::default());
            let store = ingest(&input, embedder.as_ref())?;
            write_store(&store, &out)?;
            eprintln!("ingested {} records into {}", store.len(), out.display());
        }
        Command::Enhance {
            method,
            base,
            store,
            seed,
            llm_endpoint,
            embed_endpoint,
            out,
            repeat,
            latency_out,
        } => {
            let pairs = enhance(
                method,
                &base,
                store.as_deref(),
                seed,
                llm_endpoint.as_deref(),
                embed_endpoint.as_deref(),
                repeat,
            )?;
            if let Some(path) = latency_out {
                write_latency_report(&pairs, &path)?;
            }
            let json = if pairs.len() == 1 {
                serde_json::to_string_pretty(&pairs[0])
            } else {
                serde_json::to_string_pretty(&pairs)
            }
            .expect("pairs serialize");
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(Error::io(&path))?,
                None => println!("{json}"),
            }
        }
        Command::Generate {
            pair,
            endpoint,
            size,
            seed,
            out,
        } => {
            let text = std::fs::read_to_string(&pair).map_err(|e| Error::Config(format!("{}: {e}", pair.display())))?;
            let pair: PromptPair =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", pair.display())))?;
            let request = GenerateRequest {
                positive: pair.positive,
                negative: pair.negative,
                width: size,
                height: size,
                seed,
            };
            let generated = generate_remote(&Endpoint::parse(&endpoint), &request)?;
            write_png(&generated.image, &out)?;
            eprintln!("{} wrote {}", generated.model_id, out.display());
        }
        Command::Upscale {
            input,
            upscaler,
            scale,
            out,
        } => {
            let spec = UpscalerSpec::parse_cli(&upscaler, scale)?;
            let img = read_png(&input)?;
            let upscaled = spec.upscale(&img)?;
            write_png(&upscaled, &out)?;
        }
        Command::Metrics { input, period } => {
            let img = read_png(&input)?;
            print_json(&score(&img, period)?);
        }
        Command::Bench { config } => {
            let config = BenchConfig::load(&config)?;
            let (report, outputs) = run_and_write(&config)?;
            print_json(&report.summary);
            eprintln!("wrote {}", outputs.report_csv.display());
        }
        Command::Run { config } => {
            let config = PipelineConfig::load(&config)?;
            let manifest = run_pipeline(&config)?;
            print_json(&manifest);
            return Ok(verdict_exit(manifest.verdict.as_ref()));
        }
        Command::Validate { input, product } => {
            let spec = ProductSpec::parse(&product)?;
            let img = read_png(&input)?;
            let verdict = validate_for_product(&img, &spec);
            print_json(&VerdictOutput {
                product: &spec,
                width: img.width(),
                height: img.height(),
                verdict,
            });
            return Ok(verdict_exit(Some(&verdict)));
        }
    }
    Ok(ExitCode::Ok)
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("artpress: {e}");
            e.exit_code().into()
        }
    }
}
