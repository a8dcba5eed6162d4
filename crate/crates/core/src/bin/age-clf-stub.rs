//! Scriptable `age-clf/1` plug-in for protocol tests.
//!
//! usage: age-clf-stub [MODE]
//!
//! modes:
//!   all-age               every request is "age" (default)
//!   all-no-age            every request is "no_age"
//!   contains:WORD         "age" iff the lowercased text contains WORD
//!   shuffle:K:SEED        answer in shuffled windows of K requests
//!   unknown-id            answer with an id nobody asked for
//!   garbage:N             the Nth response line is not JSON
//!   crash-after:N         exit after answering N requests
//!   crash-once:PATH       exit on the first request unless PATH exists (then create it)
//!   hang                  read requests and never answer
//!   refuse                reject the handshake

use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "all-age".into());
    let parts: Vec<&str> = mode.split(':').collect();
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut lines = stdin.lock().lines();

    let Some(Ok(hello)) = lines.next() else { return };
    let hello: Value = serde_json::from_str(&hello).unwrap_or(Value::Null);
    if parts[0] == "refuse" || hello["protocol"] != "age-clf/1" {
        let _ = writeln!(out, "{}", json!({"ok": false, "error": "unsupported protocol"}));
        return;
    }
    let _ = writeln!(out, "{}", json!({"ok": true, "name": format!("stub-{mode}")}));
    let _ = out.flush();

    let arg = |i: usize| parts.get(i).copied().unwrap_or("");
    let num = |i: usize| arg(i).parse::<u64>().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(num(2));
    let mut window: Vec<Value> = Vec::new();
    let mut answered = 0u64;

    for line in lines {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let request: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(out, "{}", json!({"error": e.to_string()}));
                let _ = out.flush();
                continue;
            }
        };
        let id = request["id"].clone();
        let text = request["text"].as_str().unwrap_or("").to_lowercase();
        let age = match parts[0] {
            "all-no-age" => false,
            "contains" => text.contains(arg(1)),
            _ => true,
        };
        let (label, score) = if age { ("age", 1.0) } else { ("no_age", -1.0) };
        let mut response = json!({"id": id, "label": label, "score": score});

        match parts[0] {
            "hang" => continue,
            "unknown-id" => response["id"] = json!("no-such-id"),
            "crash-after" if answered >= num(1) => std::process::exit(3),
            "crash-once" => {
                let marker = std::path::Path::new(arg(1));
                if !marker.exists() {
                    let _ = std::fs::write(marker, b"");
                    std::process::exit(4);
                }
            }
            "shuffle" => {
                window.push(response);
                if window.len() as u64 >= num(1).max(1) {
                    window.shuffle(&mut rng);
                    for r in window.drain(..) {
                        let _ = writeln!(out, "{r}");
                    }
                    let _ = out.flush();
                }
                continue;
            }
            _ => {}
        }
        answered += 1;
        if parts[0] == "garbage" && answered == num(1) {
            let _ = writeln!(out, "{{not json");
        } else {
            let _ = writeln!(out, "{response}");
        }
        let _ = out.flush();
    }
    window.shuffle(&mut rng);
    for r in window {
        let _ = writeln!(out, "{r}");
    }
}
