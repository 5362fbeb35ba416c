use std::fmt::Write;

use super::{element_param, source_param, CircuitSpec, ParamClass, Params, Value};

/// Shortest text for an angle that parses back to exactly `radians`.
/// Degrees are preferred when they survive the round trip.
fn format_angle(radians: f64) -> String {
    let degrees = radians.to_degrees();
    let rounded = (degrees * 1e9).round() / 1e9;
    for candidate in [rounded, degrees] {
        let text = format!("{candidate}");
        if text.parse::<f64>().map(f64::to_radians) == Ok(radians) {
            return format!("{text}deg");
        }
    }
    format!("{radians}")
}

fn format_value(value: &Value, class: Option<ParamClass>) -> String {
    match (value, class) {
        (Value::Number(x), Some(ParamClass::Angle | ParamClass::ScanAngle)) => format_angle(*x),
        (Value::Number(x), Some(ParamClass::Length)) => format!("{x}nm"),
        (Value::Number(x), _) => format!("{x}"),
        (Value::Scan(v), _) => v.symbol().to_string(),
        (Value::Symbol(s), _) => s.clone(),
    }
}

fn write_block(out: &mut String, params: &Params, class: impl Fn(&str) -> Option<ParamClass>) {
    if params.is_empty() {
        return;
    }
    let body: Vec<String> = params
        .iter()
        .map(|(k, v)| format!("{k} = {}", format_value(v, class(k))))
        .collect();
    let _ = write!(out, " {{ {} }}", body.join(", "));
}

/// Canonical text form: sources, elements, detectors, then connections,
/// each in declaration order, one statement per line.
pub fn serialize(spec: &CircuitSpec) -> String {
    let mut out = String::new();
    for s in &spec.sources {
        let _ = write!(out, "source {}", s.name);
        write_block(&mut out, &s.params, source_param);
        out.push('\n');
    }
    for e in &spec.elements {
        let _ = write!(out, "element {} : {}", e.name, e.kind.keyword());
        write_block(&mut out, &e.params, |k| element_param(e.kind, k));
        out.push('\n');
    }
    for d in &spec.detectors {
        let _ = writeln!(out, "detector {} : {}", d.name, d.model);
    }
    for c in &spec.connections {
        let _ = writeln!(out, "connect {} -> {}", c.from, c.to);
    }
    out
}
