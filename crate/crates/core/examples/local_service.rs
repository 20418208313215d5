//! Start the HTTP gateway in the background on an ephemeral port and drive it
//! with the blocking client.

use std::error::Error;

use medaide::gateway::{spawn, BackendConfig, Client, RebuildRequest, ServiceConfig};
use serde_json::json;

fn main() -> Result<(), Box<dyn Error>> {
    let data = tempfile::tempdir()?;
    let docs = data.path().join("docs");
    std::fs::create_dir_all(&docs)?;
    for entry in std::fs::read_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/data/docs"))? {
        let entry = entry?;
        std::fs::copy(entry.path(), docs.join(entry.file_name()))?;
    }

    let config = ServiceConfig {
        listen: "127.0.0.1:0".parse()?,
        data_dir: data.path().to_path_buf(),
        auth_tokens: vec!["example-token".into()],
        backend: BackendConfig::Mock,
        ..ServiceConfig::default()
    };
    let service = spawn(config)?;
    println!("listening on {}", service.base_url());

    let anonymous = Client::new(&service.base_url(), None)?;
    println!("health without a token: {:?}", anonymous.health()?);
    if let Err(e) = anonymous.create_session() {
        println!("session without a token: {e}");
    }

    let client = Client::new(&service.base_url(), Some("example-token".into()))?;
    let built = client.rebuild(&RebuildRequest::default())?;
    println!("rebuilt index: {} chunks, {} dims, {}", built.count, built.dims, built.scheme);

    let csv = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/data/diseases_sample.csv"))?;
    let report = client.ingest("diseases_sample.csv", csv, "kaggle_disease")?;
    println!("ingest kept {} of {}", report.kept, report.input_count());

    let session = client.create_session()?;
    let reply = client.chat(&session, "migraine headache aura")?;
    println!("chat: {} ({} ms)", reply.response, reply.latency_ms);

    let selection = client.select_model(&json!({
        "profile": {"name": "edge", "device_class": "jetson", "vram_bytes": 8_000_000_000u64, "ram_bytes": 8_000_000_000u64},
        "mode": "accuracy"
    }))?;
    println!("selected: {}", selection["chosen"]["name"]);
    Ok(())
}
