//! Byte-stable serialization of the run artifacts.

use ndarray::Array2;
use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub(crate) const SIGNIFICANT_DIGITS: usize = 12;

/// Round to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let r: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    format!("{}", round_sig(x))
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and every float rounded to 12 significant digits.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

/// CSV with a leading `# ...` comment line.
pub(crate) struct CsvTable {
    buf: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub(crate) fn new(comment: &str, header: &[&str]) -> Result<Self> {
        let mut prefix = Vec::new();
        for line in comment.lines() {
            prefix.extend_from_slice(b"# ");
            prefix.extend_from_slice(line.as_bytes());
            prefix.push(b'\n');
        }
        let mut buf = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(prefix);
        buf.write_record(header)?;
        Ok(CsvTable { buf })
    }

    pub(crate) fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.buf.write_record(fields)?;
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<Vec<u8>> {
        self.buf.into_inner().map_err(|e| e.into_error().into())
    }
}

pub struct NetworkVertex<'a> {
    pub id: u32,
    pub name: &'a str,
    pub cluster: Option<usize>,
    pub benchmark: Option<&'a str>,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Complete undirected graph in DOT, weighted by inverse distance
/// `1 / max(E_ij, epsilon)`.
pub fn export_network(
    distances: &Array2<f64>,
    vertices: &[NetworkVertex<'_>],
    epsilon: f64,
    comment: &str,
) -> Vec<u8> {
    let n = vertices.len();
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str("// ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("graph G {\n");
    for v in vertices {
        out.push_str(&format!("  {} [label={}", v.id, quote(v.name)));
        if let Some(c) = v.cluster {
            out.push_str(&format!(", cluster={c}"));
        }
        if let Some(b) = v.benchmark {
            out.push_str(&format!(", benchmark={}", quote(b)));
        }
        out.push_str("];\n");
    }
    for i in 0..n {
        for j in i + 1..n {
            let w = 1.0 / distances[[i, j]].max(epsilon);
            out.push_str(&format!(
                "  {} -- {} [weight={}];\n",
                vertices[i].id,
                vertices[j].id,
                fmt_num(w)
            ));
        }
    }
    out.push_str("}\n");
    out.into_bytes()
}
