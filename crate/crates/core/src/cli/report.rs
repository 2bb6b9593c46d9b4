//! Reports: one row per run, sorted by seed, plus named checks.
//! The JSON layout is described in `docs/report.schema.json`.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub case: String,
    pub seed: u64,
    pub fields: Vec<(String, Value)>,
}

impl Row {
    pub fn new(case: impl Into<String>, seed: u64) -> Self {
        Row {
            case: case.into(),
            seed,
            fields: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.fields.push((name.to_string(), value.into()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

impl Serialize for Row {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.fields.len() + 2))?;
        map.serialize_entry("case", &self.case)?;
        map.serialize_entry("seed", &self.seed)?;
        for (k, v) in &self.fields {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub config: Value,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl Report {
    pub fn new(experiment: &str, config: Value) -> Self {
        Report {
            experiment: experiment.to_string(),
            config,
            rows: Vec::new(),
            checks: Vec::new(),
            wall_clock_s: None,
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Stable sort by seed; rows with equal seeds keep their order.
    pub fn canonicalize(&mut self) {
        self.rows.sort_by_key(|r| r.seed);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Rows as CSV. The header is `case,seed` followed by every field name
    /// in order of first appearance; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut cols: Vec<&str> = Vec::new();
        for r in &self.rows {
            for (k, _) in &r.fields {
                if !cols.contains(&k.as_str()) {
                    cols.push(k);
                }
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["case", "seed"];
        header.extend(&cols);
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.case.clone(), r.seed.to_string()];
            for c in &cols {
                rec.push(match r.get(c) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                });
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_union_header_and_seed_order() {
        let mut r = Report::new("x", Value::Null);
        r.rows.push(Row::new("b", 5).with("a", 1).with("b", 2.5));
        r.rows.push(Row::new("a", 2).with("c", true));
        r.canonicalize();
        assert_eq!(r.to_csv(), "case,seed,c,a,b\na,2,true,,\nb,5,,1,2.5\n");
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["rows"][0]["case"], "a");
        assert!(v.get("wall_clock_s").is_none());
    }
}
