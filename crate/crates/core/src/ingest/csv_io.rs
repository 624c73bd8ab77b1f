use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, Normalization, Side, SignalSample, Trace, FEATURE_NAMES, NUM_FEATURES};

const HEADER_TAG: &str = "# haptic-trace v1";

/// Maps the nine canonical feature names to CSV column headers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub fx: String,
    pub fy: String,
    pub fz: String,
    pub vx: String,
    pub vy: String,
    pub vz: String,
    pub px: String,
    pub py: String,
    pub pz: String,
    /// Optional time column; when present it must be strictly increasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    /// Side assumed when the file does not declare one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

impl Default for Schema {
    fn default() -> Self {
        Self::canonical()
    }
}

impl Schema {
    /// Columns named exactly as the canonical features.
    pub fn canonical() -> Self {
        Self {
            fx: "fx".into(),
            fy: "fy".into(),
            fz: "fz".into(),
            vx: "vx".into(),
            vy: "vy".into(),
            vz: "vz".into(),
            px: "px".into(),
            py: "py".into(),
            pz: "pz".into(),
            time: None,
            side: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn feature_columns(&self) -> [&str; NUM_FEATURES] {
        [&self.fx, &self.fy, &self.fz, &self.vx, &self.vy, &self.vz, &self.px, &self.py, &self.pz]
    }
}

pub fn parse_trace(path: impl AsRef<Path>, schema: &Schema) -> Result<Trace, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    parse_trace_str(&text, stem, schema)
}

/// Parses CSV text. Leading `#` lines written by [`trace_to_csv`] restore the
/// trace name, side and normalization record.
pub fn parse_trace_str(text: &str, default_name: &str, schema: &Schema) -> Result<Trace, IngestError> {
    let mut name = default_name.to_string();
    let mut side = schema.side.unwrap_or(Side::Human);
    let mut norm = Normalization::identity();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("name=") {
            name = v.to_string();
        } else if let Some(v) = body.strip_prefix("side=") {
            side = v.parse().map_err(IngestError::Invalid)?;
        } else if let Some(v) = body.strip_prefix("shift=") {
            norm.shift = parse_vector(v)?;
        } else if let Some(v) = body.strip_prefix("scale=") {
            norm.scale = parse_vector(v)?;
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |col: &str| {
        headers.iter().position(|h| h == col).ok_or_else(|| IngestError::MissingColumn(col.to_string()))
    };
    let feature_idx = schema.feature_columns().map(find);
    let mut cols = [0usize; NUM_FEATURES];
    for (k, idx) in feature_idx.into_iter().enumerate() {
        cols[k] = idx?;
    }
    let time_idx = schema.time.as_deref().map(find).transpose()?;

    let mut samples = Vec::new();
    let mut last_time: Option<f64> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |idx: usize, column: &str| -> Result<f64, IngestError> {
            let raw = record.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| IngestError::BadNumber {
                row,
                column: column.to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonFiniteValue { row, column: column.to_string() });
            }
            Ok(v)
        };
        let mut values = [0.0; NUM_FEATURES];
        for k in 0..NUM_FEATURES {
            values[k] = field(cols[k], FEATURE_NAMES[k])?;
        }
        if let (Some(idx), Some(col)) = (time_idx, schema.time.as_deref()) {
            let t = field(idx, col)?;
            if last_time.is_some_and(|prev| t <= prev) {
                return Err(IngestError::NonMonotoneTime { row });
            }
            last_time = Some(t);
        }
        samples.push(SignalSample { t: row as u64, side, values });
    }
    Trace::new(name, side, samples, norm)
}

fn parse_vector(s: &str) -> Result<[f64; NUM_FEATURES], IngestError> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != NUM_FEATURES {
        return Err(IngestError::Invalid(format!("expected {NUM_FEATURES} values in `{s}`")));
    }
    let mut out = [0.0; NUM_FEATURES];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| IngestError::Invalid(format!("bad number `{p}` in header")))?;
    }
    Ok(out)
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";")
}

/// Canonical CSV: metadata comment lines, then `t,fx,...,pz`. Values use the
/// shortest representation that round-trips exactly.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::new();
    out.push_str(HEADER_TAG);
    out.push('\n');
    out.push_str(&format!("# name={}\n# side={}\n", trace.name(), trace.side()));
    out.push_str(&format!("# shift={}\n# scale={}\n", join(&trace.norm().shift), join(&trace.norm().scale)));
    out.push('t');
    for name in FEATURE_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for s in trace.samples() {
        out.push_str(&s.t.to_string());
        for v in s.values {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), IngestError> {
    std::fs::write(path, trace_to_csv(trace))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "fx,fy,fz,vx,vy,vz,px,py,pz";

    #[test]
    fn zero_rows_parse() {
        let text = format!("{HEADER}\n0,0,0,0,0,0,0,0,0\n0,0,0,0,0,0,0,0,0\r\n0,0,0,0,0,0,0,0,0\n");
        let t = parse_trace_str(&text, "z", &Schema::canonical()).unwrap();
        assert_eq!(t.len(), 3);
        assert!(matches!(super::super::make_windows(&t, 10, 10), Err(IngestError::TooShort { .. })));
    }

    #[test]
    fn nan_is_rejected_with_row() {
        let text = format!("{HEADER}\n0,0,0,0,0,0,0,0,0\n0,0,0,0,NaN,0,0,0,0\n");
        match parse_trace_str(&text, "n", &Schema::canonical()) {
            Err(IngestError::NonFiniteValue { row, column }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "vy");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let text = "fx,fy,fz,vx,vy,vz,px,py\n0,0,0,0,0,0,0,0\n";
        match parse_trace_str(text, "m", &Schema::canonical()) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "pz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_maps_columns_and_checks_time() {
        let schema: Schema = serde_json::from_str(
            r#"{"fx":"Force_X","fy":"Force_Y","fz":"Force_Z","vx":"Vel_X","vy":"Vel_Y","vz":"Vel_Z",
                "px":"Pos_X","py":"Pos_Y","pz":"Pos_Z","time":"time","side":"robot"}"#,
        )
        .unwrap();
        let header = "time,Pos_X,Pos_Y,Pos_Z,Vel_X,Vel_Y,Vel_Z,Force_X,Force_Y,Force_Z";
        let ok = format!("{header}\n0.001,7,8,9,4,5,6,1,2,3\n0.002,7,8,9,4,5,6,1,2,3\n");
        let t = parse_trace_str(&ok, "s", &schema).unwrap();
        assert_eq!(t.side(), Side::Robot);
        assert_eq!(t.samples()[0].values, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let bad = format!("{header}\n0.002,7,8,9,4,5,6,1,2,3\n0.002,7,8,9,4,5,6,1,2,3\n");
        assert!(matches!(parse_trace_str(&bad, "s", &schema), Err(IngestError::NonMonotoneTime { row: 2 })));
    }

    #[test]
    fn unknown_schema_keys_are_rejected() {
        assert!(Schema::from_json(r#"{"fx":"a","bogus":"b"}"#).is_err());
    }
}
