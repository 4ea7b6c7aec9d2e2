//! Runs the job service in-process on the planted pool, submits a fusion
//! job over HTTP, polls it to completion and prints the ranking.
//!
//! cargo run -p dq-service --example service_demo

use std::time::Duration;

use dq_service::server::planted_collection_id;
use dq_service::{Service, ServiceConfig};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = tempfile::tempdir()?;
    let config = ServiceConfig {
        data_dir: data.path().to_path_buf(),
        ..ServiceConfig::default()
    };
    let service = Service::planted(config, 3)?;
    let server = dq_service::spawn(service.router(), "127.0.0.1:0".parse()?)?;
    let base = server.url();
    println!("service on {base}");

    let body = json!({
        "collection_id": planted_collection_id(3),
        "method": "fusion",
        "params": {"k": 50},
    });
    let job: Value = ureq::post(&format!("{base}/api/jobs")).send_json(body)?.into_json()?;
    let id = job["id"].as_str().unwrap_or_default().to_string();
    println!("submitted {id}");

    let mut last = String::new();
    let job = loop {
        let job: Value = ureq::get(&format!("{base}/api/jobs/{id}")).call()?.into_json()?;
        let line = format!(
            "{} {} {:.0}%",
            job["state"],
            job["stage"],
            job["progress_percent"].as_f64().unwrap_or(0.0)
        );
        if line != last {
            println!("  {line}");
            last = line;
        }
        if matches!(job["state"].as_str(), Some("FINISHED" | "FAILED")) {
            break job;
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    if job["state"] == "FAILED" {
        return Err(format!("job failed: {}", job["error"]).into());
    }

    let result: dq_core::SelectionResult = ureq::get(&format!("{base}/api/jobs/{id}/result")).call()?.into_json()?;
    print!("{}", result.to_table());

    server.stop()?;
    service.shutdown();
    Ok(())
}
