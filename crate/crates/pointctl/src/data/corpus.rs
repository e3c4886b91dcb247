//! CSV corpus reading and writing.
//!
//! One file holds every trial of one (participant, distance, width,
//! direction) condition. Columns are exactly `trial_id, frame, time_s, pos_m`
//! with a mandatory header; sampling must be uniform at 2 ms. Condition
//! metadata lives in the file name as
//! `<participant>__d<distance_m>__w<width_m>__<left|right>.csv`, or is
//! supplied by the caller for corpora with other naming schemes.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lindyn::DEFAULT_STEP_S;

use super::{Direction, RawTrial, TrialMeta};

const HEADER: [&str; 4] = ["trial_id", "frame", "time_s", "pos_m"];
/// Tolerance on sampling uniformity, seconds.
const STEP_TOL_S: f64 = 1e-9;

/// Parse condition metadata out of a corpus file name.
pub fn parse_corpus_filename(name: &str) -> Result<TrialMeta> {
    let stem = name.strip_suffix(".csv").unwrap_or(name);
    let parts: Vec<&str> = stem.split("__").collect();
    let fail = || {
        Error::Data(format!(
            "cannot parse condition from file name '{name}' \
             (expected <participant>__d<distance_m>__w<width_m>__<left|right>.csv)"
        ))
    };
    if parts.len() != 4 {
        return Err(fail());
    }
    let distance_m: f64 = parts[1].strip_prefix('d').ok_or_else(fail)?.parse().map_err(|_| fail())?;
    let width_m: f64 = parts[2].strip_prefix('w').ok_or_else(fail)?.parse().map_err(|_| fail())?;
    let direction = Direction::parse(parts[3]).map_err(|_| fail())?;
    if !(distance_m.is_finite() && distance_m > 0.0 && width_m.is_finite() && width_m > 0.0) {
        return Err(fail());
    }
    Ok(TrialMeta {
        participant: parts[0].to_string(),
        distance_m,
        width_m,
        direction,
    })
}

struct TrialBuilder {
    trial_id: String,
    first_line: u64,
    times: Vec<f64>,
    positions: Vec<f64>,
}

fn parse_field<T: std::str::FromStr>(s: &str, column: &str, line: u64) -> Result<T> {
    s.trim().parse().map_err(|_| {
        Error::Data(format!("line {line}: cannot parse {column} value '{s}'"))
    })
}

fn load_file(path: &Path, meta_override: Option<&TrialMeta>) -> Result<Vec<RawTrial>> {
    let meta = match meta_override {
        Some(m) => m.clone(),
        None => {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Data(format!("invalid corpus path {}", path.display())))?;
            parse_corpus_filename(name)?
        }
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != HEADER {
        return Err(Error::Data(format!(
            "{}: expected header '{}', found '{}'",
            path.display(),
            HEADER.join(","),
            got.join(",")
        )));
    }

    // Trials keep file order; rows of one trial may be interleaved as long
    // as each trial's own frames stay sequential.
    let mut order: Vec<TrialBuilder> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != HEADER.len() {
            return Err(Error::Data(format!(
                "line {line}: expected {} columns, found {}",
                HEADER.len(),
                record.len()
            )));
        }
        let trial_id = record[0].to_string();
        let frame: usize = parse_field(&record[1], "frame", line)?;
        let time_s: f64 = parse_field(&record[2], "time_s", line)?;
        let pos_m: f64 = parse_field(&record[3], "pos_m", line)?;
        if !time_s.is_finite() || !pos_m.is_finite() {
            return Err(Error::Data(format!("line {line}: non-finite sample")));
        }

        let slot = *index.entry(trial_id.clone()).or_insert_with(|| {
            order.push(TrialBuilder {
                trial_id,
                first_line: line,
                times: Vec::new(),
                positions: Vec::new(),
            });
            order.len() - 1
        });
        let b = &mut order[slot];
        if frame != b.times.len() {
            return Err(Error::Data(format!(
                "line {line}: trial '{}' expected frame {}, found {frame}",
                b.trial_id,
                b.times.len()
            )));
        }
        if let Some(&prev) = b.times.last() {
            let dt = time_s - prev;
            if dt == 0.0 {
                return Err(Error::Data(format!(
                    "line {line}: trial '{}' repeats timestamp {time_s}",
                    b.trial_id
                )));
            }
            if dt < 0.0 {
                return Err(Error::Data(format!(
                    "line {line}: trial '{}' timestamps not increasing ({prev} then {time_s})",
                    b.trial_id
                )));
            }
            if (dt - DEFAULT_STEP_S).abs() > STEP_TOL_S {
                return Err(Error::Data(format!(
                    "line {line}: trial '{}' step {dt} deviates from uniform {DEFAULT_STEP_S} s",
                    b.trial_id
                )));
            }
        }
        b.times.push(time_s);
        b.positions.push(pos_m);
    }

    if order.is_empty() {
        return Err(Error::Data(format!("{}: no trials", path.display())));
    }
    order
        .into_iter()
        .map(|b| {
            if b.positions.len() < 2 {
                return Err(Error::Data(format!(
                    "line {}: trial '{}' has fewer than 2 samples",
                    b.first_line, b.trial_id
                )));
            }
            // First gap defines the stored step; uniformity was checked above.
            let h = b.times[1] - b.times[0];
            Ok(RawTrial {
                meta: meta.clone(),
                trial_id: b.trial_id,
                h,
                positions: b.positions,
                discarded: false,
            })
        })
        .collect()
}

/// Load a corpus file, or every `*.csv` file in a directory (sorted by name).
/// Without `meta_override` the condition is parsed from each file name.
pub fn load_corpus(path: &Path, meta_override: Option<&TrialMeta>) -> Result<Vec<RawTrial>> {
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Data(format!(
                "{}: no .csv corpus files",
                path.display()
            )));
        }
        let mut trials = Vec::new();
        for file in files {
            trials.extend(load_file(&file, meta_override)?);
        }
        Ok(trials)
    } else {
        load_file(path, meta_override)
    }
}

/// Write trials of one condition to a corpus CSV. Timestamps restart at 0 per
/// trial; values round-trip exactly through `load_corpus`.
pub fn write_corpus(path: &Path, trials: &[RawTrial]) -> Result<()> {
    if trials.is_empty() {
        return Err(Error::Data("refusing to write an empty corpus".into()));
    }
    for t in trials {
        if t.meta != trials[0].meta {
            return Err(Error::Data(format!(
                "corpus file holds one condition, but trial '{}' differs",
                t.trial_id
            )));
        }
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    writer.write_record(HEADER)?;
    for t in trials {
        for (n, p) in t.positions.iter().enumerate() {
            writer.write_record([
                t.trial_id.as_str(),
                &n.to_string(),
                &format!("{}", n as f64 * t.h),
                &format!("{p}"),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn meta() -> TrialMeta {
        TrialMeta {
            participant: "p1".into(),
            distance_m: 0.212,
            width_m: 0.0141,
            direction: Direction::Right,
        }
    }

    fn write_temp(content: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let mut f = std::fs::File::create(dir.path().join("p1__d0.212__w0.0141__right.csv")).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        dir
    }

    #[test]
    fn filename_parsing() {
        let m = parse_corpus_filename("p1__d0.212__w0.0141__right.csv").unwrap();
        assert_eq!(m, meta());
        assert!(parse_corpus_filename("nounderscores.csv").is_err());
        assert!(parse_corpus_filename("p1__x0.2__w0.01__left.csv").is_err());
        assert!(parse_corpus_filename("p1__d0.2__w0.01__up.csv").is_err());
    }

    #[test]
    fn well_formed_file_loads() {
        let dir = write_temp(
            "trial_id,frame,time_s,pos_m\n\
             a,0,0,0.0\n\
             a,1,0.002,0.001\n\
             a,2,0.004,0.003\n",
        );
        let trials = load_corpus(dir.path(), None).unwrap();
        assert_eq!(trials.len(), 1);
        assert_eq!(trials[0].positions, vec![0.0, 0.001, 0.003]);
        assert_eq!(trials[0].meta, meta());
        assert!((trials[0].h - 0.002).abs() < 1e-12);
    }

    #[test]
    fn duplicated_timestamp_names_the_row() {
        let dir = write_temp(
            "trial_id,frame,time_s,pos_m\n\
             a,0,0,0.0\n\
             a,1,0,0.001\n",
        );
        let err = load_corpus(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("repeats timestamp"), "{err}");
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = write_temp(
            "trial_id,frame,time_s,pos_m\n\
             a,0,0,0.0\n\
             a,one,0.002,0.001\n",
        );
        let err = load_corpus(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        let dir = write_temp(
            "trial_id,frame,time_s,pos_m\n\
             a,0,0,0.0\n\
             a,1,0.005,0.001\n",
        );
        let err = load_corpus(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains("deviates from uniform"), "{err}");
    }

    #[test]
    fn missing_columns_rejected() {
        let dir = write_temp("trial_id,frame,time_s\na,0,0\n");
        let err = load_corpus(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains("expected header"), "{err}");
    }

    #[test]
    fn empty_file_rejected() {
        let dir = write_temp("trial_id,frame,time_s,pos_m\n");
        let err = load_corpus(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains("no trials"), "{err}");
    }

    #[test]
    fn round_trip_is_identity_on_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p1__d0.212__w0.0141__right.csv");
        let trials: Vec<RawTrial> = (0..3)
            .map(|i| RawTrial {
                meta: meta(),
                trial_id: format!("t{i}"),
                h: 0.002,
                positions: (0..40)
                    .map(|n| 0.1 * (0.3 * (n as f64 + i as f64)).sin())
                    .collect(),
                discarded: false,
            })
            .collect();
        write_corpus(&path, &trials).unwrap();
        let loaded = load_corpus(&path, None).unwrap();
        assert_eq!(loaded.len(), trials.len());
        for (a, b) in loaded.iter().zip(&trials) {
            assert_eq!(a.trial_id, b.trial_id);
            assert_eq!(a.positions, b.positions);
            assert_eq!(a.meta, b.meta);
        }
    }

    #[test]
    fn meta_override_beats_filename() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arbitrary-name.csv");
        std::fs::write(&path, "trial_id,frame,time_s,pos_m\na,0,0,0\na,1,0.002,0.01\n").unwrap();
        assert!(load_corpus(&path, None).is_err());
        let m = meta();
        let trials = load_corpus(&path, Some(&m)).unwrap();
        assert_eq!(trials[0].meta, m);
    }
}
