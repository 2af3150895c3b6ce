//! Report serialization: a small deterministic JSON emitter (numbers at 17
//! significant digits, exact rationals as strings, fixed key order), CSV and
//! SVG writers, atomic file output, and ingestion of system definitions from
//! JSON.

use crate::error::{Error, Result};
use crate::exact::{big_rat, Exact, ExactPoint};
use crate::ifs::{AffineMap, BoundingBox, IfsSystem, Membership, PointCloud};
use num::rational::BigRational;
use num::ToPrimitive;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// 17-significant-digit rendering, stable across runs and platforms.
pub fn f64_repr(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        // integral values as integers keeps reports readable
        format!("{}", x as i64)
    } else {
        format!("{:.16e}", x)
    }
}

pub fn rational_repr(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn exact_repr(x: &Exact) -> String {
    if x.is_rational() {
        rational_repr(&x.rational)
    } else {
        format!("{}+{}*sqrt3", rational_repr(&x.rational), rational_repr(&x.sqrt3_coeff))
    }
}

/// JSON value with deterministic rendering.
#[derive(Debug, Clone)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => {
                let _ = write!(out, "{b}");
            }
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Num(x) => {
                let _ = write!(out, "{}", f64_repr(*x));
            }
            Json::Str(s) => {
                let _ = write!(out, "\"{}\"", escape(s));
            }
            Json::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                    item.write(out, indent + 1);
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
            Json::Obj(pairs) => {
                if pairs.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                    let _ = write!(out, "\"{}\": ", escape(k));
                    v.write(out, indent + 1);
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
        }
    }
}

fn escape(s: &str) -> String {
    s.chars()
        .flat_map(|c| match c {
            '"' => "\\\"".chars().collect::<Vec<_>>(),
            '\\' => "\\\\".chars().collect(),
            '\n' => "\\n".chars().collect(),
            '\t' => "\\t".chars().collect(),
            c if (c as u32) < 0x20 => format!("\\u{:04x}", c as u32).chars().collect(),
            c => vec![c],
        })
        .collect()
}

/// Report skeleton with the schema version tag.
pub fn report_object(kind: &str, fields: Vec<(String, Json)>) -> Json {
    let mut pairs = vec![
        ("schema".to_string(), Json::Int(1)),
        ("kind".to_string(), Json::Str(kind.to_string())),
    ];
    pairs.extend(fields);
    Json::Obj(pairs)
}

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Point cloud as CSV: coordinates then the generating word.
pub fn cloud_csv(cloud: &PointCloud, n_maps: usize) -> String {
    let dim = cloud.points.first().map(Vec::len).unwrap_or(0);
    let mut out = String::new();
    for i in 0..dim {
        let _ = write!(out, "x{i},");
    }
    out.push_str("word\n");
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p {
            let _ = write!(out, "{},", f64_repr(*c));
        }
        let word = cloud
            .words
            .as_ref()
            .map(|w| w[i].render(n_maps))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{word}");
    }
    out
}

/// Measure atoms as CSV: coordinates then weight.
pub fn measure_csv(m: &crate::measure::DiscreteMeasure) -> String {
    let dim = m.dim();
    let mut out = String::new();
    for i in 0..dim {
        let _ = write!(out, "x{i},");
    }
    out.push_str("weight\n");
    for (p, w) in &m.atoms {
        for c in p {
            let _ = write!(out, "{},", f64_repr(*c));
        }
        let _ = writeln!(out, "{}", f64_repr(*w));
    }
    out
}

/// Minimal scatter-plot SVG at a fixed viewport.
pub fn cloud_svg(cloud: &PointCloud, box_: &BoundingBox) -> String {
    const W: f64 = 1000.0;
    let mut out = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 1000\">\n<!-- kmsf scatter v1 -->\n",
    );
    let span: Vec<f64> = box_
        .lo
        .iter()
        .zip(&box_.hi)
        .map(|(l, h)| (h - l).max(1e-12))
        .collect();
    for p in &cloud.points {
        let x = (p[0] - box_.lo[0]) / span[0] * W;
        let y = if p.len() > 1 {
            W - (p[1] - box_.lo[1]) / span[1] * W
        } else {
            W / 2.0
        };
        let _ = writeln!(out, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"1.5\"/>");
    }
    out.push_str("</svg>\n");
    out
}

fn entry_from_json(v: &serde_json::Value) -> Result<Exact> {
    if let Some(x) = v.as_f64() {
        return Exact::from_f64(x).ok_or_else(|| Error::Config("non-finite entry".into()));
    }
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Config("matrix entries must be numbers or {\"rat\":[p,q]}".into()))?;
    let pair = |key: &str| -> Result<Option<BigRational>> {
        match obj.get(key) {
            None => Ok(None),
            Some(serde_json::Value::Array(a)) if a.len() == 2 => {
                let p = a[0].as_i64().ok_or_else(|| Error::Config("rational parts must be integers".into()))?;
                let q = a[1].as_i64().ok_or_else(|| Error::Config("rational parts must be integers".into()))?;
                if q == 0 {
                    return Err(Error::Config("zero denominator".into()));
                }
                Ok(Some(big_rat(p, q)))
            }
            _ => Err(Error::Config(format!("field {key} must be [numerator, denominator]"))),
        }
    };
    let rational = pair("rat")?.unwrap_or_else(|| big_rat(0, 1));
    let sqrt3 = pair("sqrt3_coeff")?.unwrap_or_else(|| big_rat(0, 1));
    Ok(Exact { rational, sqrt3_coeff: sqrt3 })
}

/// Parses a system definition:
/// `{ "dimension": d, "maps": [{"matrix": [[..]], "translation": [..]}],
///    "box": {"lo": [..], "hi": [..]}, "rational": bool }`.
/// Entries are plain numbers (converted exactly) or `{"rat": [p, q],
/// "sqrt3_coeff": [r, s]}` objects.
pub fn system_from_json(text: &str) -> Result<IfsSystem> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let dim = v["dimension"]
        .as_u64()
        .ok_or_else(|| Error::Config("missing integer field 'dimension'".into()))?
        as usize;
    let rational = v["rational"].as_bool().unwrap_or(false);
    let maps_json = v["maps"]
        .as_array()
        .ok_or_else(|| Error::Config("missing array field 'maps'".into()))?;
    let mut maps = Vec::with_capacity(maps_json.len());
    for m in maps_json {
        let matrix_json = m["matrix"]
            .as_array()
            .ok_or_else(|| Error::Config("map missing 'matrix'".into()))?;
        let mut matrix = Vec::with_capacity(dim);
        for row in matrix_json {
            let row = row
                .as_array()
                .ok_or_else(|| Error::Config("matrix rows must be arrays".into()))?;
            matrix.push(row.iter().map(entry_from_json).collect::<Result<Vec<_>>>()?);
        }
        let trans_json = m["translation"]
            .as_array()
            .ok_or_else(|| Error::Config("map missing 'translation'".into()))?;
        let translation = trans_json.iter().map(entry_from_json).collect::<Result<Vec<_>>>()?;
        maps.push(AffineMap::new(matrix, translation)?);
    }
    let read_vec = |key: &str| -> Result<Vec<f64>> {
        v["box"][key]
            .as_array()
            .ok_or_else(|| Error::Config(format!("box missing '{key}'")))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::Config("box entries must be numbers".into())))
            .collect()
    };
    let box_ = BoundingBox::new(read_vec("lo")?, read_vec("hi")?);
    IfsSystem::from_affine(maps, box_, Membership::CloudDistance, rational, "custom")
}

/// Renders a system back to the ingestion schema with exact fields.
pub fn system_to_json(sys: &IfsSystem) -> Result<Json> {
    let mut maps = Vec::new();
    for j in 0..sys.len() {
        let a = sys.affine(j)?;
        let entry = |x: &Exact| -> Json {
            let rat = |r: &BigRational| {
                Json::Arr(vec![
                    Json::Int(r.numer().to_i64().unwrap_or(0)),
                    Json::Int(r.denom().to_i64().unwrap_or(1)),
                ])
            };
            let mut fields = vec![("rat".to_string(), rat(&x.rational))];
            if !x.is_rational() {
                fields.push(("sqrt3_coeff".to_string(), rat(&x.sqrt3_coeff)));
            }
            Json::Obj(fields)
        };
        maps.push(Json::Obj(vec![
            (
                "matrix".to_string(),
                Json::Arr(
                    a.matrix
                        .iter()
                        .map(|row| Json::Arr(row.iter().map(entry).collect()))
                        .collect(),
                ),
            ),
            (
                "translation".to_string(),
                Json::Arr(a.translation.iter().map(entry).collect()),
            ),
        ]));
    }
    Ok(Json::Obj(vec![
        ("dimension".to_string(), Json::Int(sys.dim() as i64)),
        ("maps".to_string(), Json::Arr(maps)),
        (
            "box".to_string(),
            Json::Obj(vec![
                (
                    "lo".to_string(),
                    Json::Arr(sys.ambient_box.lo.iter().map(|&x| Json::Num(x)).collect()),
                ),
                (
                    "hi".to_string(),
                    Json::Arr(sys.ambient_box.hi.iter().map(|&x| Json::Num(x)).collect()),
                ),
            ]),
        ),
        ("rational".to_string(), Json::Bool(sys.exact_inputs)),
    ]))
}

pub fn exact_point_json(p: &ExactPoint) -> Json {
    Json::Obj(vec![
        (
            "coords".to_string(),
            Json::Arr(p.to_f64().into_iter().map(Json::Num).collect()),
        ),
        (
            "exact".to_string(),
            Json::Arr(p.0.iter().map(|x| Json::Str(exact_repr(x))).collect()),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn json_rendering_is_deterministic() {
        let j = report_object(
            "test",
            vec![
                ("value".into(), Json::Num(0.1 + 0.2)),
                ("list".into(), Json::Arr(vec![Json::Int(1), Json::Bool(false)])),
            ],
        );
        assert_eq!(j.render(), j.render());
        assert!(j.render().contains("3.0000000000000004e-1"));
        assert!(j.render().starts_with("{\n  \"schema\": 1"));
    }

    #[test]
    fn system_json_round_trip() {
        let p = presets::sierpinski().unwrap();
        let rendered = system_to_json(&p.system).unwrap().render();
        let back = system_from_json(&rendered).unwrap();
        assert_eq!(back.len(), 3);
        assert!(back.exact_inputs);
        // exact entries survive the round trip
        for j in 0..3 {
            let orig = p.system.affine(j).unwrap();
            let parsed = back.affine(j).unwrap();
            assert_eq!(orig.matrix, parsed.matrix);
            assert_eq!(orig.translation, parsed.translation);
        }
    }

    #[test]
    fn float_systems_ingest_from_plain_numbers() {
        let text = r#"{
            "dimension": 1,
            "maps": [
                {"matrix": [[0.5]], "translation": [0.0]},
                {"matrix": [[-0.5]], "translation": [1.0]}
            ],
            "box": {"lo": [0.0], "hi": [1.0]}
        }"#;
        let sys = system_from_json(text).unwrap();
        assert_eq!(sys.len(), 2);
        assert!(!sys.exact_inputs);
        assert_eq!(sys.apply_f64(2, &[1.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(system_from_json("not json").is_err());
        assert!(system_from_json("{\"dimension\": 1}").is_err());
        let zero_den = r#"{
            "dimension": 1,
            "maps": [{"matrix": [[{"rat": [1, 0]}]], "translation": [0.0]},
                     {"matrix": [[0.5]], "translation": [0.5]}],
            "box": {"lo": [0.0], "hi": [1.0]}
        }"#;
        assert!(system_from_json(zero_den).is_err());
    }

    #[test]
    fn csv_and_svg_emission() {
        let p = presets::tent().unwrap();
        let cloud = crate::ifs::attractor_approx(&p.system, 3, &[0.0]).unwrap();
        let csv = cloud_csv(&cloud, 2);
        assert!(csv.starts_with("x0,word\n"));
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.contains(",111\n") || csv.contains(",222\n"));
        let svg = cloud_svg(&cloud, &p.system.ambient_box);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 8);
    }
}
