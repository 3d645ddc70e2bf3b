//! Learning-curve rows and their on-disk CSV schema.
//!
//! The column set is a wire contract consumed by the report stage (and by
//! anything downstream plotting these runs), so the header is pinned exactly.

use std::fs;
use std::path::Path;

use super::HarnessError;

/// Exact CSV header, in column order.
pub const CURVE_HEADER: [&str; 10] = [
    "trial_id",
    "parent_env",
    "child_env",
    "k",
    "mode",
    "run",
    "env_steps",
    "eval_return_mean",
    "eval_return_std",
    "wall_clock_seconds",
];

/// One evaluation point. Parent (scratch) trials leave `k` empty and carry
/// mode "scratch" with parent_env == child_env.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub trial_id: String,
    pub parent_env: String,
    pub child_env: String,
    pub k: Option<usize>,
    pub mode: String,
    pub run: u32,
    pub env_steps: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
}

impl LearningCurve {
    pub fn new() -> Self {
        Self::default()
    }

    /// Env-steps axis must be strictly increasing within a trial.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].env_steps < w[1].env_steps)
    }

    /// Writes atomically (temp file + rename).
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let tmp = path.with_extension("csv.tmp");
        {
            let mut w = csv::Writer::from_path(&tmp)?;
            w.write_record(CURVE_HEADER)?;
            for r in &self.rows {
                w.write_record([
                    r.trial_id.as_str(),
                    r.parent_env.as_str(),
                    r.child_env.as_str(),
                    &r.k.map(|k| k.to_string()).unwrap_or_default(),
                    r.mode.as_str(),
                    &r.run.to_string(),
                    &r.env_steps.to_string(),
                    &r.eval_return_mean.to_string(),
                    &r.eval_return_std.to_string(),
                    &r.wall_clock_seconds.to_string(),
                ])?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, HarnessError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        {
            let headers = reader.headers()?;
            let expected: Vec<&str> = CURVE_HEADER.to_vec();
            let found: Vec<&str> = headers.iter().collect();
            if found != expected {
                return Err(HarnessError::BadCurveFile(format!(
                    "{}: header {:?} does not match schema",
                    path.display(),
                    found
                )));
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("").to_string();
            let parse_f = |i: usize| -> Result<f64, HarnessError> {
                record.get(i).unwrap_or("").parse().map_err(|_| {
                    HarnessError::BadCurveFile(format!(
                        "{}: bad float in column {}",
                        path.display(),
                        CURVE_HEADER[i]
                    ))
                })
            };
            let k_field = field(3);
            rows.push(CurveRow {
                trial_id: field(0),
                parent_env: field(1),
                child_env: field(2),
                k: if k_field.is_empty() {
                    None
                } else {
                    Some(k_field.parse().map_err(|_| {
                        HarnessError::BadCurveFile(format!("{}: bad k", path.display()))
                    })?)
                },
                mode: field(4),
                run: field(5).parse().map_err(|_| {
                    HarnessError::BadCurveFile(format!("{}: bad run", path.display()))
                })?,
                env_steps: field(6).parse().map_err(|_| {
                    HarnessError::BadCurveFile(format!("{}: bad env_steps", path.display()))
                })?,
                eval_return_mean: parse_f(7)?,
                eval_return_std: parse_f(8)?,
                wall_clock_seconds: parse_f(9)?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> LearningCurve {
        LearningCurve {
            rows: vec![
                CurveRow {
                    trial_id: "parent-corridor--run0".into(),
                    parent_env: "corridor".into(),
                    child_env: "corridor".into(),
                    k: None,
                    mode: "scratch".into(),
                    run: 0,
                    env_steps: 0,
                    eval_return_mean: -0.125,
                    eval_return_std: 0.25,
                    wall_clock_seconds: 0.5,
                },
                CurveRow {
                    trial_id: "parent-corridor--run0".into(),
                    parent_env: "corridor".into(),
                    child_env: "corridor".into(),
                    k: None,
                    mode: "scratch".into(),
                    run: 0,
                    env_steps: 5000,
                    eval_return_mean: 0.6000000000000001,
                    eval_return_std: 0.1,
                    wall_clock_seconds: 11.25,
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip_preserves_rows_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let curve = sample_rows();
        curve.write_csv(&path).unwrap();
        let back = LearningCurve::read_csv(&path).unwrap();
        assert_eq!(back.rows, curve.rows);
    }

    #[test]
    fn header_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        sample_rows().write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            "trial_id,parent_env,child_env,k,mode,run,env_steps,eval_return_mean,eval_return_std,wall_clock_seconds"
        );
    }

    #[test]
    fn monotone_check() {
        let mut curve = sample_rows();
        assert!(curve.is_monotone());
        curve.rows[1].env_steps = 0;
        assert!(!curve.is_monotone());
    }

    #[test]
    fn rejects_foreign_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(
            LearningCurve::read_csv(&path),
            Err(HarnessError::BadCurveFile(_))
        ));
    }
}
