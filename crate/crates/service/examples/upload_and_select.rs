//! Client for a running `dq serve`: uploads a collection directory, submits
//! a job and prints the ranking once it finishes.
//!
//! dq serve --data-dir /tmp/dq &
//! cargo run -p dq-service --example upload_and_select -- http://127.0.0.1:8080 ./my-collection nqc

use std::path::Path;
use std::time::Duration;

use dq_core::corpus::{CORPUS_FILE, QRELS_FILE, QUERIES_FILE};
use serde_json::{json, Value};

fn multipart(dir: &Path) -> std::io::Result<(String, Vec<u8>)> {
    let boundary = "dq-example-boundary";
    let mut body = Vec::new();
    for name in [CORPUS_FILE, QUERIES_FILE, QRELS_FILE] {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(&std::fs::read(path)?);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    Ok((format!("multipart/form-data; boundary={boundary}"), body))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (Some(base), Some(dir), method) = (args.next(), args.next(), args.next()) else {
        eprintln!("usage: upload_and_select <base-url> <collection-dir> [method]");
        std::process::exit(2);
    };
    let method = method.unwrap_or_else(|| "fusion".into());
    let token = std::env::var("DQ_TOKEN").ok();
    let auth = |req: ureq::Request| match &token {
        Some(t) => req.set("Authorization", &format!("Bearer {t}")),
        None => req,
    };

    let (content_type, body) = multipart(Path::new(&dir))?;
    let created: Value = auth(ureq::post(&format!("{base}/api/collections")))
        .set("Content-Type", &content_type)
        .send_bytes(&body)?
        .into_json()?;
    let collection_id = created["collection_id"].as_str().unwrap_or_default();
    println!("collection {collection_id}");

    let job: Value = auth(ureq::post(&format!("{base}/api/jobs")))
        .send_json(json!({"collection_id": collection_id, "method": method}))?
        .into_json()?;
    let id = job["id"].as_str().unwrap_or_default().to_string();
    println!("job {id}");

    loop {
        let job: Value = ureq::get(&format!("{base}/api/jobs/{id}")).call()?.into_json()?;
        match job["state"].as_str() {
            Some("FINISHED") => break,
            Some("FAILED") => return Err(format!("job failed: {}", job["error"]).into()),
            _ => std::thread::sleep(Duration::from_millis(250)),
        }
    }
    let result: dq_core::SelectionResult = ureq::get(&format!("{base}/api/jobs/{id}/result")).call()?.into_json()?;
    print!("{}", result.to_table());
    Ok(())
}
