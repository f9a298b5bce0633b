//! Per-tick trajectory records and their CSV form.
//!
//! Floats are written with 17 significant digits, which reads back to the
//! identical `f64`.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::Leg;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Record {
    pub t: f64,
    pub com: [f64; 3],
    /// Continuous (unwrapped) yaw.
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
    pub cmd_com: [f64; 3],
    pub v_cmd: f64,
    pub omega_cmd: f64,
    pub contact: [bool; 4],
    /// Ground contact of each ball, world frame.
    pub feet: [[f64; 3]; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub records: Vec<Record>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = [
        "t[s]",
        "com_x[m]",
        "com_y[m]",
        "com_z[m]",
        "yaw[rad]",
        "roll[rad]",
        "pitch[rad]",
        "cmd_com_x[m]",
        "cmd_com_y[m]",
        "cmd_com_z[m]",
        "v_cmd[m/s]",
        "omega_cmd[rad/s]",
    ]
    .map(String::from)
    .to_vec();
    for leg in Leg::ALL {
        let n = leg.name();
        h.push(format!("{n}_contact[0/1]"));
        for axis in ["x", "y", "z"] {
            h.push(format!("{n}_foot_{axis}[m]"));
        }
    }
    h
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

impl Record {
    fn fields(&self) -> Vec<String> {
        let mut f = vec![fmt(self.t)];
        f.extend(self.com.map(fmt));
        f.extend([self.yaw, self.roll, self.pitch].map(fmt));
        f.extend(self.cmd_com.map(fmt));
        f.extend([self.v_cmd, self.omega_cmd].map(fmt));
        for i in 0..4 {
            f.push(if self.contact[i] { "1" } else { "0" }.to_string());
            f.extend(self.feet[i].map(fmt));
        }
        f
    }

    fn parse(row: usize, rec: &csv::StringRecord) -> Result<Self, LogError> {
        let bad = |message: String| LogError::Row { row, message };
        if rec.len() != 28 {
            return Err(bad(format!("{} fields, expected 28", rec.len())));
        }
        let num = |i: usize| -> Result<f64, LogError> {
            rec[i].trim().parse::<f64>().map_err(|e| bad(format!("column {i}: {e}")))
        };
        let mut r = Record {
            t: num(0)?,
            com: [num(1)?, num(2)?, num(3)?],
            yaw: num(4)?,
            roll: num(5)?,
            pitch: num(6)?,
            cmd_com: [num(7)?, num(8)?, num(9)?],
            v_cmd: num(10)?,
            omega_cmd: num(11)?,
            ..Default::default()
        };
        for leg in 0..4 {
            let base = 12 + 4 * leg;
            r.contact[leg] = match rec[base].trim() {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("contact flag {other:?}"))),
            };
            r.feet[leg] = [num(base + 1)?, num(base + 2)?, num(base + 3)?];
        }
        Ok(r)
    }
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header())?;
        for r in &self.records {
            w.write_record(r.fields())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LogError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let found: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        let expected = header();
        if found != expected {
            return Err(LogError::Header {
                expected: expected.join(","),
                found: found.join(","),
            });
        }
        let mut records = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (i, rec) in rd.records().enumerate() {
            let r = Record::parse(i + 1, &rec?)?;
            if !(r.t > last_t) {
                return Err(LogError::Row {
                    row: i + 1,
                    message: "time is not strictly increasing".into(),
                });
            }
            last_t = r.t;
            records.push(r);
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), LogError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryLog {
        let records = (0..5)
            .map(|i| Record {
                t: i as f64 * 1e-3,
                com: [0.1 / 3.0 * i as f64, -1e-17, 0.29],
                yaw: 0.7e-3 * i as f64,
                contact: [i % 2 == 0, true, false, i % 2 == 1],
                feet: [[std::f64::consts::PI, -0.0, 1e300], [0.0; 3], [1.0; 3], [-2.5e-9; 3]],
                ..Default::default()
            })
            .collect();
        TrajectoryLog { records }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = sample();
        let bytes = log.to_csv_bytes();
        let back = TrajectoryLog::read_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_csv_bytes(), bytes);
    }

    #[test]
    fn header_has_fixed_order() {
        let h = header();
        assert_eq!(h.len(), 28);
        assert_eq!(h[0], "t[s]");
        assert_eq!(h[11], "omega_cmd[rad/s]");
        assert_eq!(h[12], "FR_contact[0/1]");
        assert_eq!(h[27], "BL_foot_z[m]");
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(
            TrajectoryLog::read_csv("a,b\n1,2\n".as_bytes()),
            Err(LogError::Header { .. })
        ));
        let mut bytes = sample().to_csv_bytes();
        bytes.extend_from_slice(b"oops\n");
        assert!(TrajectoryLog::read_csv(bytes.as_slice()).is_err());
    }
}
