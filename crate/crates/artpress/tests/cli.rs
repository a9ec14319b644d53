use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use artpress::core::imaging::ImageBuffer;
use artpress::png_io::{read_png, write_png};
use serde_json::Value;

fn artpress(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artpress"))
        .args(args)
        .env_remove("ARTPRESS_LLM_URL")
        .env_remove("ARTPRESS_GEN_URL")
        .env_remove("ARTPRESS_UPSCALE_URL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts.jsonl")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_enhance_generate_upscale_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store.jsonl");
    let o = artpress(&["db", "ingest", "--input", s(&fixture()), "--out", s(&store)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first: Value = serde_json::from_str(std::fs::read_to_string(&store).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["vector"].as_array().unwrap().len(), 256);

    let pair = tmp.path().join("pair.json");
    let o = artpress(&[
        "enhance", "--method", "template", "--base", "snowy owl", "--store", s(&store), "--seed", "3", "--out", s(&pair),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p: Value = serde_json::from_str(&std::fs::read_to_string(&pair).unwrap()).unwrap();
    assert!(p["positive"].as_str().unwrap().contains("snowy owl"));
    assert_eq!(p["method"], "template");

    let gen = tmp.path().join("gen.png");
    let o = artpress(&[
        "generate", "--pair", s(&pair), "--endpoint", "mock", "--size", "64", "--seed", "1", "--out", s(&gen),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_png(&gen).unwrap().width(), 64);

    let up = tmp.path().join("up.png");
    let o = artpress(&["upscale", "--in", s(&gen), "--upscaler", "lanczos", "--scale", "2.5", "--out", s(&up)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_png(&up).unwrap().height(), 160);

    let o = artpress(&["metrics", "--in", s(&up), "--period", "4"]);
    assert_eq!(code(&o), 0);
    let m = stdout_json(&o);
    assert!(m["blurriness"].as_f64().unwrap() > 0.0);
    assert!(m["pixelation"].is_number());

    let o = artpress(&["validate", "--in", s(&up), "--product", "150x150"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["verdict"], "ok");
    let o = artpress(&["validate", "--in", s(&up), "--product", "art_print"]);
    assert_eq!(code(&o), 4);
    let v = stdout_json(&o);
    assert_eq!(v["verdict"], "insufficient");
    assert_eq!(v["required_extra_scale"].as_f64().unwrap(), 6500.0 / 160.0);
}

#[test]
fn enhance_repeat_writes_latency_table() {
    let tmp = tempfile::tempdir().unwrap();
    let latency = tmp.path().join("latency.csv");
    let o = artpress(&[
        "enhance", "--method", "rag-multishot", "--base", "harbor", "--store", s(&fixture()), "--llm-endpoint", "mock",
        "--repeat", "3", "--latency-out", s(&latency),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 3);
    let table = std::fs::read_to_string(&latency).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,count,mean_seconds,min_seconds,max_seconds");
    assert!(lines[1].starts_with("rag_multishot,3,"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.jsonl");
    let o = artpress(&["enhance", "--method", "template", "--base", "x", "--store", s(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.jsonl"));

    let o = artpress(&["enhance", "--method", "bogus", "--base", "x"]);
    assert_eq!(code(&o), 2);
    let o = artpress(&["enhance", "--method", "llm", "--base", "x"]);
    assert_eq!(code(&o), 2, "no chat endpoint configured");
    let o = artpress(&["validate", "--in", s(&missing), "--product", "mug"]);
    assert_eq!(code(&o), 2);

    let img = tmp.path().join("i.png");
    write_png(&ImageBuffer::filled(4, 4, [0; 3]).unwrap(), &img).unwrap();
    let o = artpress(&["upscale", "--in", s(&img), "--upscaler", "nearest", "--scale", "1.5", "--out", s(&img)]);
    assert_eq!(code(&o), 2);
    let o = artpress(&["upscale", "--in", s(&img), "--upscaler", "remote:", "--out", s(&img)]);
    assert_eq!(code(&o), 2, "remote: without a URL and without the env var");
}

#[test]
fn backend_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let o = artpress(&["enhance", "--method", "llm", "--base", "x", "--llm-endpoint", &url]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let img = tmp.path().join("i.png");
    write_png(&ImageBuffer::filled(4, 4, [0; 3]).unwrap(), &img).unwrap();
    let remote = format!("remote:{url}");
    let o = artpress(&["upscale", "--in", s(&img), "--upscaler", &remote, "--out", s(&tmp.path().join("o.png"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn run_and_bench_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::copy(fixture(), tmp.path().join("prompts.jsonl")).unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"base":"fox","method":"template","store":"prompts.jsonl","generator_endpoint":"mock",
            "upscaler":"nearest","seed":5,"size":64,"output_dir":"run"}"#,
    )
    .unwrap();
    let o = artpress(&["run", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["seeds"]["generate"], 6);
    assert_eq!(read_png(&tmp.path().join("run/upscaled.png")).unwrap().width(), 256);

    std::fs::create_dir_all(tmp.path().join("corpus")).unwrap();
    std::fs::copy(tmp.path().join("run/generated.png"), tmp.path().join("corpus/a.png")).unwrap();
    let bench = tmp.path().join("bench.json");
    std::fs::write(
        &bench,
        r#"{"corpus_dir":"corpus","output_dir":"bench","scale":2,
            "upscalers":[{"id":"N","kind":"native_nearest"},{"id":"L","kind":"native_lanczos"}]}"#,
    )
    .unwrap();
    let o = artpress(&["bench", "--config", s(&bench)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 2);
    assert!(tmp.path().join("bench/report.csv").exists());

    let o = artpress(&["run", "--config", s(&tmp.path().join("nope.json"))]);
    assert_eq!(code(&o), 2);
}
