//! Channel trace files.
//!
//! A trace is a comma separated text file with a header row (`t,ch1,ch2,...`)
//! followed by one row per timeslot: the slot index, counting from 1 without
//! gaps, then one column per channel. Lines starting with `#` are comments.
//! The `binary` schema holds success indicators (0 or 1); the `snr` schema
//! holds SNR readings in dB, turned into successes by per-channel
//! thresholds (`snr >= threshold` succeeds).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::ChannelModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSchema {
    Binary,
    Snr,
}

impl std::str::FromStr for TraceSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(TraceSchema::Binary),
            "snr" => Ok(TraceSchema::Snr),
            other => Err(Error::arg(format!("unknown trace schema {other:?}"))),
        }
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

/// Reads every row as reals, checking that all rows have the same width.
pub fn read_numeric(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(read_lines(path)?.into_iter().map(|(_, row)| row).collect())
}

/// Channel columns of every row paired with its 1-based source line.
fn read_lines(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, raw)| (i as u64 + 1, raw.trim()))
        .filter(|(_, raw)| !raw.is_empty() && !raw.starts_with('#'));
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "trace has no header"))?;
    let width = header.split(',').count();
    if header.split(',').next().map(str::trim) != Some("t") || width < 2 {
        return Err(parse_err(
            path,
            header_line,
            "header must be `t` followed by one name per channel",
        ));
    }
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    for (line, raw) in lines {
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("{} columns, expected {width}", fields.len()),
            ));
        }
        let slot = rows.len() as u64 + 1;
        if fields[0].parse::<u64>().ok() != Some(slot) {
            return Err(parse_err(
                path,
                line,
                format!("slot {:?}, expected {slot}", fields[0]),
            ));
        }
        let row = fields[1..]
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_err(
                            path,
                            line,
                            format!("column {}: {field:?} is not a number", c + 2),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, row));
    }
    if rows.is_empty() {
        return Err(parse_err(path, header_line, "trace has no rows"));
    }
    Ok(rows)
}

/// Reads a trace into a binary success table.
pub fn read_table(
    path: &Path,
    schema: TraceSchema,
    thresholds: Option<&[f64]>,
) -> Result<Vec<Vec<u8>>> {
    let lines = read_lines(path)?;
    match schema {
        TraceSchema::Binary => lines
            .iter()
            .map(|(line, row)| {
                row.iter()
                    .map(|&v| {
                        if v == 0.0 || v == 1.0 {
                            Ok(v as u8)
                        } else {
                            Err(parse_err(path, *line, format!("{v} is not 0 or 1")))
                        }
                    })
                    .collect()
            })
            .collect(),
        TraceSchema::Snr => {
            let thr = thresholds
                .ok_or_else(|| Error::config("an snr trace needs one threshold per column"))?;
            let rows: Vec<Vec<f64>> = lines.into_iter().map(|(_, row)| row).collect();
            if thr.len() != rows[0].len() {
                return Err(Error::config(format!(
                    "{} thresholds for {} columns",
                    thr.len(),
                    rows[0].len()
                )));
            }
            Ok(binarize(&rows, thr))
        }
    }
}

pub fn binarize(snr: &[Vec<f64>], thresholds: &[f64]) -> Vec<Vec<u8>> {
    snr.iter()
        .map(|row| {
            row.iter()
                .zip(thresholds)
                .map(|(v, t)| u8::from(v >= t))
                .collect()
        })
        .collect()
}

/// Loads a trace as a channel model whose row 1 is file row `offset + 1`,
/// wrapping around the end of the file.
pub fn load_trace(
    path: &Path,
    schema: TraceSchema,
    thresholds: Option<&[f64]>,
    offset: usize,
) -> Result<ChannelModel> {
    let mut rows = read_table(path, schema, thresholds)?;
    let n = rows.len();
    rows.rotate_left(offset % n);
    Ok(ChannelModel::Trace { rows })
}

pub fn column_means(rows: &[Vec<u8>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    (0..k)
        .map(|c| rows.iter().map(|r| r[c] as f64).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Per-column thresholds whose binarized success rate is as close as the
/// data allows to `targets`.
///
/// With `n` rows, the success rate can only be a multiple of `1/n` (less
/// with repeated readings), so the result is within `1/(2n)` of the target
/// when readings are distinct.
pub fn calibrate_thresholds(snr: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    let k = snr.first().map_or(0, Vec::len);
    if targets.len() != k {
        return Err(Error::arg(format!(
            "{} targets for {k} columns",
            targets.len()
        )));
    }
    let n = snr.len();
    targets
        .iter()
        .enumerate()
        .map(|(c, &target)| {
            if !(0.0..=1.0).contains(&target) {
                return Err(Error::arg(format!("target rate {target} outside [0, 1]")));
            }
            let mut col: Vec<f64> = snr.iter().map(|r| r[c]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            let want = (target * n as f64).round() as usize;
            Ok(match want {
                0 => col[0] + 1.0,
                m => col[m - 1],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn rotation() {
        let f = file("t,a,b\n1,1,0\n2,0,1\n3,1,1\n");
        let ChannelModel::Trace { rows } =
            load_trace(f.path(), TraceSchema::Binary, None, 1).unwrap()
        else {
            panic!()
        };
        assert_eq!(rows, vec![vec![0, 1], vec![1, 1], vec![1, 0]]);
        let ChannelModel::Trace { rows } =
            load_trace(f.path(), TraceSchema::Binary, None, 4).unwrap()
        else {
            panic!()
        };
        assert_eq!(rows[0], vec![0, 1]);
    }

    #[test]
    fn snr_threshold() {
        let f = file("# snr in dB\nt,snr_db_1,snr_db_2\n1, 25.0, 15.0\n2, 20.0, 30.0\n");
        let t = read_table(f.path(), TraceSchema::Snr, Some(&[20.0, 20.0])).unwrap();
        assert_eq!(t, vec![vec![1, 0], vec![1, 1]]);
        assert!(read_table(f.path(), TraceSchema::Snr, None).is_err());
        assert!(read_table(f.path(), TraceSchema::Snr, Some(&[20.0])).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("t,a,b\n1,1,0\n2,0,1\n3,1\n", 4),
            ("t,a,b\n1,1,0\n# note\n\n2,0,x\n", 5),
            ("t,a,b\n1,1,0\n2,0,2\n", 3),
            ("# comment\nt,a,b\n1,1,0\n\n2,0.5,1\n", 5),
            ("t,a,b\n1,1,0\n3,0,1\n", 3),
            ("1,1,0\n2,0,1\n", 1),
            ("t,a\n", 1),
        ];
        for (text, line) in cases {
            let f = file(text);
            match read_table(f.path(), TraceSchema::Binary, None) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(
            read_table(
                Path::new("/nonexistent/trace.csv"),
                TraceSchema::Binary,
                None
            ),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn calibration_hits_targets() {
        let targets = [0.5402, 0.9059, 0.9012];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let snr: Vec<Vec<f64>> = (0..30_000)
            .map(|_| {
                (0..3)
                    .map(|c| 15.0 + 5.0 * c as f64 + 8.0 * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let thr = calibrate_thresholds(&snr, &targets).unwrap();
        let means = column_means(&binarize(&snr, &thr));
        for (m, t) in means.iter().zip(targets) {
            assert!((m - t).abs() <= 1e-4, "{m} vs {t}");
        }
    }

    #[test]
    fn calibration_edges() {
        let snr = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        assert_eq!(
            column_means(&binarize(
                &snr,
                &calibrate_thresholds(&snr, &[0.0]).unwrap()
            )),
            vec![0.0]
        );
        assert_eq!(
            column_means(&binarize(
                &snr,
                &calibrate_thresholds(&snr, &[1.0]).unwrap()
            )),
            vec![1.0]
        );
        assert_eq!(
            column_means(&binarize(
                &snr,
                &calibrate_thresholds(&snr, &[0.5]).unwrap()
            )),
            vec![0.5]
        );
        assert!(calibrate_thresholds(&snr, &[1.5]).is_err());
    }
}
