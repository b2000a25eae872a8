use std::process::{Command, Output};

use serde_json::Value;

fn injcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_injcap")).args(args).env_remove("INJCAP_QUAD_PROFILE").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

/// Checks `value` against the subset of JSON Schema used in the shipped schema:
/// `type`, `enum`, `required`, `properties`, `additionalProperties`, `items`
/// and array length bounds.
fn conforms(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in enum"));
        }
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(v) => v.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let ok = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            "null" => value.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: {value} is not {types:?}"));
        }
    }
    if let (Some(obj), Some(props)) = (value.as_object(), schema.get("properties").and_then(Value::as_object)) {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing {key}"));
            }
        }
        for (k, v) in obj {
            match props.get(k) {
                Some(s) => conforms(v, s, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected {k}"));
                }
                None => {}
            }
        }
    }
    if let (Some(arr), Some(items)) = (value.as_array(), schema.get("items")) {
        if let Some(n) = schema.get("minItems").and_then(Value::as_u64) {
            if (arr.len() as u64) < n {
                return Err(format!("{path}: too few items"));
            }
        }
        if let Some(n) = schema.get("maxItems").and_then(Value::as_u64) {
            if arr.len() as u64 > n {
                return Err(format!("{path}: too many items"));
            }
        }
        for (i, v) in arr.iter().enumerate() {
            conforms(v, items, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/capacity.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn capacity_level1_json() {
    let v = json(&injcap(&["capacity", "--level", "1", "--format", "json"]));
    conforms(&v, &schema(), "$").unwrap();
    assert!((v["alpha_star"].as_f64().unwrap() - 7.6477).abs() < 1e-3);
    assert!((v["params"]["nu"].as_f64().unwrap() - 0.6304).abs() < 5e-4);
    assert!(v["params"]["p2"].is_null() && v["params"]["c3"].is_null());
    assert!(v["seed"].is_null());
}

#[test]
fn partial_level_json_conforms_and_keeps_zero_entries() {
    let v = json(&injcap(&["table", "--level", "2p", "--format", "json", "--seed", "9"]));
    conforms(&v, &schema(), "$").unwrap();
    assert_eq!(v["params"]["p2"].as_f64(), Some(0.0));
    assert!(v["params"]["p3"].is_null());
    assert_eq!(v["seed"].as_u64(), Some(9));
    assert!((v["alpha_star"].as_f64().unwrap() - 7.4486).abs() < 2e-3);
}

#[test]
fn schema_checker_rejects_bad_records() {
    let s = schema();
    let mut v = json(&injcap(&["capacity", "--level", "1", "--format", "json"]));
    v["params"]["nu"] = Value::String("x".into());
    assert!(conforms(&v, &s, "$").is_err());
    v.as_object_mut().unwrap().remove("params");
    assert!(conforms(&v, &s, "$").is_err());
}

#[test]
fn evaluate_at_rounded_level2_point() {
    let args: Vec<&str> =
        "evaluate --level 2 --alpha 6.7157 --p2 0.7772 --q2 0.1914 --c2 8.4313 --gamma-q 3.6568 --gamma-p 0.0684 --nu 0.0533 --format json".split_whitespace().collect();
    let v = json(&injcap(&args));
    assert!(v["psi"].as_f64().unwrap().abs() < 1e-3);
    let res = v["residuals"].as_array().unwrap();
    assert_eq!(res.len(), 6);
    // the inputs carry four or five digits, which limits how small the residuals get
    for r in res {
        assert!(r["value"].as_f64().unwrap().abs() < 5e-3, "{r}");
    }
}

#[test]
fn table_level3_is_byte_identical() {
    let a = injcap(&["table", "--level", "3"]);
    let b = injcap(&["table", "--level", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[0], "3-sfl");
    let alpha: f64 = row.last().unwrap().parse().unwrap();
    assert!((alpha - 6.7004).abs() < 0.02);
}

#[test]
fn capacity_csv_has_header_and_empty_nulls() {
    let o = injcap(&["capacity", "--level", "1", "--format", "csv"]);
    assert!(o.status.success());
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..3], ["level", "alpha_star", "p2"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][2], "");
    assert_eq!(&rows[0][0], "1");
}

#[test]
fn sweep_emits_csv() {
    let o = injcap(&["sweep", "--level", "1", "--from", "7", "--to", "8", "--steps", "5"]);
    assert!(o.status.success());
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["alpha", "psi", "residual_norm"]);
    let psi: Vec<f64> = r.records().map(|x| x.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(psi.len(), 5);
    assert!(psi[0] < 0.0 && psi[4] > 0.0);
}

#[test]
fn empirical_emits_csv() {
    let o = injcap(&["empirical", "--n", "12", "--alphas", "2,12", "--trials", "4", "--seed", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,trials,positive_fraction,median_xi,seed"));
    assert_eq!(lines.count(), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("heuristic"));
}

#[test]
fn quadrature_profile_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_injcap"))
        .args(["capacity", "--level", "2p", "--format", "json"])
        .env("INJCAP_QUAD_PROFILE", "fast")
        .output()
        .unwrap();
    assert_eq!(json(&o)["quad"]["nodes_single"].as_u64(), Some(32));
    let o = Command::new(env!("CARGO_BIN_EXE_injcap"))
        .args(["capacity", "--level", "1"])
        .env("INJCAP_QUAD_PROFILE", "coarse")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn exit_codes() {
    assert_eq!(injcap(&["--help"]).status.code(), Some(0));
    assert_eq!(injcap(&["frobnicate"]).status.code(), Some(4));
    assert_eq!(injcap(&["capacity"]).status.code(), Some(4));
    assert_eq!(injcap(&["evaluate", "--level", "2", "--alpha", "6.7"]).status.code(), Some(4));
    assert_eq!(
        injcap(&["evaluate", "--level", "1", "--alpha", "6.7", "--nu", "0.5", "--c2", "1"]).status.code(),
        Some(4)
    );
    let bad_order: Vec<&str> =
        "evaluate --level 3 --alpha 6.7 --p2 0.5 --p3 0.7 --q2 0.4 --q3 0.1 --c2 1 --c3 1 --gamma-q 1 --gamma-p 0.25 --nu 0.1".split_whitespace().collect();
    let o = injcap(&bad_order);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
    assert_eq!(injcap(&["capacity", "--level", "2p", "--alpha-bracket", "8,10"]).status.code(), Some(2));
}
