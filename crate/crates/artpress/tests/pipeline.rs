use std::path::{Path, PathBuf};

use artpress::core::enhance::{EnhanceOptions, Method, POSITIVE_EXAMPLES_HEADING};
use artpress::core::product::{ProductSpec, Verdict};
use artpress::mock::{MockBehavior, MockServer};
use artpress::pipeline::{
    read_artifact, run_pipeline, verify_manifest, PipelineConfig, ProductArg, RunManifest, GENERATED_FILE,
    MANIFEST_FILE, PAIR_FILE, UPSCALED_FILE,
};
use artpress::Error;
use serde_json::Value;

fn fixture_store() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts.jsonl")
}

fn config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        base: "red fox".into(),
        method: Method::Template,
        store: Some(fixture_store()),
        llm_endpoint: None,
        generator_endpoint: Some("mock".into()),
        embed_endpoint: None,
        upscaler: "nearest".into(),
        scale: 4.0,
        product: None,
        seed: 7,
        size: 128,
        period: 8,
        options: EnhanceOptions::default(),
        output_dir: out.to_path_buf(),
    }
}

/// Manifest JSON with every `elapsed*` key removed.
fn without_timings(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.iter()
                .filter(|(k, _)| !k.starts_with("elapsed"))
                .map(|(k, v)| (k.clone(), without_timings(v)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(without_timings).collect()),
        other => other.clone(),
    }
}

fn manifest_json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ma = run_pipeline(&config(&a)).unwrap();
    let mb = run_pipeline(&config(&b)).unwrap();
    for file in [GENERATED_FILE, UPSCALED_FILE] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_eq!(without_timings(&manifest_json(&a)), without_timings(&manifest_json(&b)));
    assert_eq!(ma.seeds, mb.seeds);
    let up = read_artifact(&ma, &a, "upscale").unwrap();
    assert_eq!((up.width(), up.height()), (512, 512));
    let names: Vec<&str> = ma.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["enhance", "generate", "upscale", "metrics"]);
    assert!(ma.stages.iter().all(|s| s.elapsed_seconds >= 0.0));
}

#[test]
fn manifest_digests_match_files_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let manifest = run_pipeline(&config(&out)).unwrap();
    assert!(verify_manifest(&manifest, &out).is_empty());
    let on_disk: RunManifest = serde_json::from_value(manifest_json(&out)).unwrap();
    assert_eq!(on_disk.stages.len(), manifest.stages.len());
    assert!(out.join(PAIR_FILE).exists());

    std::fs::write(out.join(UPSCALED_FILE), b"tampered").unwrap();
    assert_eq!(verify_manifest(&manifest, &out), ["upscale"]);
}

#[test]
fn different_seeds_give_different_images() {
    let tmp = tempfile::tempdir().unwrap();
    let mut other = config(&tmp.path().join("b"));
    other.seed = 8;
    run_pipeline(&config(&tmp.path().join("a"))).unwrap();
    run_pipeline(&other).unwrap();
    assert_ne!(
        std::fs::read(tmp.path().join("a").join(GENERATED_FILE)).unwrap(),
        std::fs::read(tmp.path().join("b").join(GENERATED_FILE)).unwrap()
    );
}

#[test]
fn product_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(&tmp.path().join("small"));
    cfg.product = Some(ProductArg::Named("art_print".into()));
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(
        m.verdict,
        Some(Verdict::Insufficient {
            required_extra_scale: 6500.0 / 512.0
        })
    );
    assert_eq!(m.stages.last().unwrap().stage, "validate");

    let mut cfg = config(&tmp.path().join("fits"));
    cfg.product = Some(ProductArg::Spec(ProductSpec::new("sticker", 500, 300).unwrap()));
    assert_eq!(run_pipeline(&cfg).unwrap().verdict, Some(Verdict::Ok));
}

#[test]
fn missing_store_is_a_config_error_with_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = config(&out);
    cfg.store = Some(tmp.path().join("absent.jsonl"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("absent.jsonl"));
    assert_eq!(err.exit_code() as u8, 2);
    assert!(!out.exists());
}

#[test]
fn invalid_configs_fail_before_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases: [fn(&mut PipelineConfig); 5] = [
        |c| c.size = 4096,
        |c| c.upscaler = "bicubic".into(),
        |c| c.product = Some(ProductArg::Named("mug".into())),
        |c| c.store = None,
        |c| c.base = "  ".into(),
    ];
    for mutate in cases {
        let mut cfg = config(&out);
        mutate(&mut cfg);
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.exit_code() as u8, 2, "{err}");
        assert!(!out.exists());
    }
}

#[test]
fn stage_failure_is_recorded_in_the_manifest() {
    let server = MockServer::start(MockBehavior {
        always_fail: true,
        ..MockBehavior::default()
    })
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = config(&out);
    cfg.generator_endpoint = Some(server.url().to_string());
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "generate", .. }), "{err}");
    assert_eq!(err.exit_code() as u8, 3);
    let manifest: RunManifest = serde_json::from_value(manifest_json(&out)).unwrap();
    let failure = manifest.error.unwrap();
    assert_eq!(failure.stage, "generate");
    assert!(failure.cause.contains("500"), "{}", failure.cause);
    assert_eq!(manifest.stages.len(), 1);
    assert!(out.join(PAIR_FILE).exists());
    assert!(!out.join(GENERATED_FILE).exists());
}

#[test]
fn multishot_and_llm_methods_through_the_mock_chat() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let tmp = tempfile::tempdir().unwrap();

    let mut cfg = config(&tmp.path().join("multishot"));
    cfg.method = Method::RagMultishot;
    cfg.llm_endpoint = Some("mock".into());
    let m = run_pipeline(&cfg).unwrap();
    let pair: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("multishot").join(PAIR_FILE)).unwrap()).unwrap();
    let positive = pair["positive"].as_str().unwrap();
    assert!(positive.starts_with(POSITIVE_EXAMPLES_HEADING));
    assert!(positive.contains("1. ") && positive.contains("4. ") && !positive.contains("5. "));
    assert_eq!(pair["provenance"].as_array().unwrap().len(), 8);
    assert!(verify_manifest(&m, &tmp.path().join("multishot")).is_empty());

    let mut cfg = config(&tmp.path().join("llm"));
    cfg.method = Method::Llm;
    cfg.store = None;
    cfg.llm_endpoint = Some(server.url().to_string());
    cfg.upscaler = "lanczos".into();
    cfg.scale = 1.5;
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.metrics.as_ref().map(|x| (x.width, x.height)), Some((192, 192)));
    assert_eq!(server.requests(), 2);
}

#[test]
fn config_file_paths_resolve_against_its_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::copy(fixture_store(), tmp.path().join("prompts.jsonl")).unwrap();
    let path = tmp.path().join("run.json");
    std::fs::write(
        &path,
        r#"{"base":"harbor","method":"template","store":"prompts.jsonl","generator_endpoint":"mock",
            "upscaler":"nearest","scale":2,"seed":1,"size":64,"output_dir":"out","product":"100x100"}"#,
    )
    .unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.output_dir, tmp.path().join("out"));
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.verdict, Some(Verdict::Ok));
    assert!(tmp.path().join("out").join(MANIFEST_FILE).exists());
}
