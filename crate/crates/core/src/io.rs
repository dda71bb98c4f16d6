//! On-disk form of observed datasets: a CSV of rows plus a JSON sidecar.
//!
//! The CSV header is `role,a,y,x1,...,xp` with `role` either `trial` or
//! `external`; `a` and `y` are empty on external rows. The sidecar carries
//! the (redacted) design, `k`, the treatment probability and, for nested
//! designs only, the count of unsampled non-randomized units.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{Arm, DesignSpec, ObservedDataset, ObservedRecord, TreatmentProb};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub design: DesignSpec,
    pub k: usize,
    pub treatment_prob: TreatmentProb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_unsampled_nonrandomized: Option<usize>,
}

impl Sidecar {
    pub fn of(data: &ObservedDataset) -> Self {
        Self {
            design: data.design().redacted(),
            k: data.k(),
            treatment_prob: data.treatment_prob(),
            n_unsampled_nonrandomized: data.n_unsampled_nonrandomized(),
        }
    }
}

/// Sidecar location for a dataset CSV: `data.csv` -> `data.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_rows<W: Write>(data: &ObservedDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["role".to_string(), "a".into(), "y".into()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in data.records() {
        row.clear();
        match r {
            ObservedRecord::TrialParticipant { a, y, .. } => {
                row.push("trial".into());
                row.push(a.index().to_string());
                row.push(y.to_string());
            }
            ObservedRecord::SampledNonRandomized { .. } => {
                row.push("external".into());
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.extend(r.x().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses dataset rows; returns them with the covariate dimension.
pub fn read_rows<R: Read>(input: R) -> Result<(Vec<ObservedRecord>, usize)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let fixed = ["role", "a", "y"];
    if header.len() < 3 || header.iter().take(3).ne(fixed) {
        return Err(Error::invalid("dataset header must start with role,a,y"));
    }
    let p = header.len() - 3;
    for (j, name) in header.iter().skip(3).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(Error::invalid(format!(
                "column {} should be x{}, found '{name}'",
                j + 4,
                j + 1
            )));
        }
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |field: &str, s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| {
                Error::invalid(format!("line {line}: cannot parse {field} value '{s}'"))
            })
        };
        let x = (0..p)
            .map(|j| num(&format!("x{}", j + 1), &rec[j + 3]))
            .collect::<Result<Vec<f64>>>()?;
        match &rec[0] {
            "trial" => {
                let a = match rec[1].trim() {
                    "0" => Arm::Control,
                    "1" => Arm::Treated,
                    other => {
                        return Err(Error::invalid(format!(
                            "line {line}: arm must be 0 or 1, got '{other}'"
                        )))
                    }
                };
                let y = num("y", &rec[2])?;
                records.push(ObservedRecord::TrialParticipant { x, a, y });
            }
            "external" => {
                if !rec[1].is_empty() || !rec[2].is_empty() {
                    return Err(Error::invalid(format!(
                        "line {line}: external rows carry no treatment or outcome"
                    )));
                }
                records.push(ObservedRecord::SampledNonRandomized { x });
            }
            other => {
                return Err(Error::invalid(format!(
                    "line {line}: unknown role '{other}'"
                )))
            }
        }
    }
    Ok((records, p))
}

/// Writes `csv_path` and its sidecar.
pub fn save_dataset(data: &ObservedDataset, csv_path: &Path) -> Result<()> {
    write_rows(data, BufWriter::new(File::create(csv_path)?))?;
    let mut side = BufWriter::new(File::create(sidecar_path(csv_path))?);
    serde_json::to_writer_pretty(&mut side, &Sidecar::of(data))?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(())
}

pub fn load_dataset(csv_path: &Path) -> Result<ObservedDataset> {
    let side: Sidecar =
        serde_json::from_reader(BufReader::new(File::open(sidecar_path(csv_path))?))?;
    let (records, p) = read_rows(BufReader::new(File::open(csv_path)?))?;
    let data = ObservedDataset::new(
        records,
        side.n_unsampled_nonrandomized,
        side.design,
        p,
        side.treatment_prob,
    )?;
    if data.k() != side.k {
        return Err(Error::invalid(format!(
            "sidecar k = {} disagrees with the design's auxiliary split {}",
            side.k,
            data.k()
        )));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ObservedDataset {
        let rows = vec![
            ObservedRecord::TrialParticipant {
                x: vec![0.1, -2.0],
                a: Arm::Treated,
                y: 1.0 / 3.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![1e-300, 5.5],
                a: Arm::Control,
                y: -0.7,
            },
            ObservedRecord::SampledNonRandomized { x: vec![0.3, 0.0] },
        ];
        ObservedDataset::new(
            rows,
            Some(7),
            DesignSpec::subsampled(0.25),
            2,
            TreatmentProb::default(),
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        write_rows(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("role,a,y,x1,x2\ntrial,1,"));
        assert!(text.contains("\nexternal,,,0.3,0\n"));
        let (rows, p) = read_rows(&buf[..]).unwrap();
        assert_eq!(p, 2);
        assert_eq!(rows, ds.records());
    }

    #[test]
    fn sidecar_field_order() {
        let s = serde_json::to_string(&Sidecar::of(&sample())).unwrap();
        assert_eq!(
            s,
            r#"{"design":{"variant":"subsampled_nested","c":0.25},"k":0,"treatment_prob":0.5,"n_unsampled_nonrandomized":7}"#
        );
    }

    #[test]
    fn non_nested_sidecar_has_no_tally_or_fraction() {
        let rows = sample().records().to_vec();
        let ds = ObservedDataset::new(
            rows,
            None,
            DesignSpec::non_nested(0.2).unwrap(),
            2,
            TreatmentProb::default(),
        )
        .unwrap();
        let s = serde_json::to_string(&Sidecar::of(&ds)).unwrap();
        assert_eq!(
            s,
            r#"{"design":{"variant":"non_nested"},"k":0,"treatment_prob":0.5}"#
        );
    }

    #[test]
    fn bad_rows_name_the_line() {
        let text = "role,a,y,x1\ntrial,1,2.0,0.5\ntrial,2,1.0,0.1\n";
        let err = read_rows(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "role,a,y,x1\nexternal,,1.0,0.5\n";
        assert!(read_rows(text.as_bytes()).is_err());
        assert!(read_rows("role,y,a,x1\n".as_bytes()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = sample();
        save_dataset(&ds, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }
}
