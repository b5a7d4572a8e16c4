//! Report emission: JSON with floats at 17 significant digits in field
//! declaration order, and a one-row-per-check CSV summary.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

pub fn to_value<R: Serialize>(report: &R) -> Value {
    serde_json::to_value(report).expect("reports serialize to JSON")
}

/// Pretty JSON; every float is written as `d.ddddddddddddddddde±x`.
pub fn to_json<R: Serialize>(report: &R) -> String {
    let mut out = String::new();
    write_value(&mut out, &to_value(report), 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("f64 number");
                write!(out, "{x:.16e}").expect("write to string");
            } else {
                write!(out, "{n}").expect("write to string");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            let flat = items.iter().all(|i| !i.is_object() && !i.is_array());
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if flat {
                    if i > 0 {
                        out.push(' ');
                    }
                } else {
                    out.push('\n');
                    pad(out, depth + 1);
                }
                write_value(out, item, depth + 1);
            }
            if !flat {
                out.push('\n');
                pad(out, depth);
            }
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(out, depth + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, depth + 1);
            }
            out.push('\n');
            pad(out, depth);
            out.push('}');
        }
    }
}

/// The headline metric of each check: `(name, JSON pointer)`.
fn headline(check: &str) -> Option<(&'static str, &'static str)> {
    Some(match check {
        "compatibility" => ("min_phi_dot_nu", "/worst_phi_deficit/value"),
        "weak_mp" => ("worst_signed_distance", "/worst_signed_distance/value"),
        "strong_mp" => ("interior_margin", "/margin/value"),
        "ell_residuals" => ("min_residual", "/min_residual/value"),
        "supersolution" => ("min_r", "/worst/value"),
        _ => return None,
    })
}

/// `check,pass,status,metric,value,tol`, one row per report.
pub fn csv_summary(reports: &[Value]) -> String {
    let mut out = String::from("check,pass,status,metric,value,tol\n");
    let cell = |v: Option<&Value>| match v {
        Some(Value::Number(n)) if n.is_f64() => format!("{:.16e}", n.as_f64().expect("f64 number")),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Bool(b)) => b.to_string(),
        _ => String::new(),
    };
    for r in reports {
        let check = cell(r.get("check"));
        let (metric, value) = match headline(&check) {
            Some((m, ptr)) => (m, cell(r.pointer(ptr))),
            None => ("", String::new()),
        };
        let tol = cell(r.get("tol").or_else(|| r.get("eps_flat")));
        writeln!(out, "{check},{},{},{metric},{value},{tol}", cell(r.get("pass")), cell(r.get("status"))).expect("write to string");
    }
    out
}
