//! Scripted stand-in for an external predictor, used by the test suite.
//!
//! Usage: `mpfn-mock-bridge [uniform|bad-sum|wrong-rows|argmax|error|crash|garbage|small]`

use std::io::{BufRead, Write};

use serde_json::{json, Value};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "uniform".into());
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let reply = match serde_json::from_str::<Value>(&line) {
            Err(_) => json!({"op": "error", "msg": "malformed request"}),
            Ok(req) => match req["op"].as_str() {
                Some("hello") => {
                    let max_context = if mode == "small" { 5 } else { 3000 };
                    let mut h = json!({"op": "hello", "max_context": max_context, "max_features": 100, "max_classes": 10});
                    if mode == "argmax" {
                        h["supports_ensembling"] = json!(false);
                    }
                    h
                }
                Some("shutdown") => break,
                Some("predict") => match mode.as_str() {
                    "crash" => std::process::exit(3),
                    "garbage" => {
                        let _ = writeln!(out, "not json");
                        let _ = out.flush();
                        continue;
                    }
                    "error" => json!({"op": "error", "msg": "model fault"}),
                    _ => predict(&mode, &req),
                },
                _ => json!({"op": "error", "msg": "unknown op"}),
            },
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}

fn predict(mode: &str, req: &Value) -> Value {
    let c = req["n_classes"].as_u64().unwrap_or(2) as usize;
    let queries = req["qry_x"].as_array().cloned().unwrap_or_default();
    let mut rows: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| match mode {
            // one-hot at the position of the largest feature
            "argmax" => {
                let q: Vec<f64> = q
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(Value::as_f64)
                    .collect();
                let mut best = 0;
                for (j, v) in q.iter().enumerate() {
                    if *v > q[best] {
                        best = j;
                    }
                }
                (0..c).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
            }
            "bad-sum" => vec![0.9 / c as f64; c],
            _ => vec![1.0 / c as f64; c],
        })
        .collect();
    if mode == "wrong-rows" {
        rows.pop();
    }
    json!({"op": "probs", "rows": rows})
}
