//! File formats: trajectory CSV plus shared helpers (atomic writes, TOML
//! key/value configs, CSV field parsing).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{Action, Frame, VehicleState, EGO_ID, VEHICLE_LENGTH, VEHICLE_WIDTH};

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t", "agent_id", "lane", "x", "y", "vx", "vy", "heading", "steer", "long", "collision",
];

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Contract(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a TOML key/value file into a config struct.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    from_toml_str(&text)
}

pub fn from_toml_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count() as u64)
            .unwrap_or(0);
        Error::Parse {
            line,
            msg: e.message().to_string(),
        }
    })
}

pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Contract(format!("toml serialisation: {e}")))
}

pub fn save_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, to_toml_string(value)?.as_bytes())
}

/// Render a CSV document from a header and pre-formatted rows.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Read a CSV file, checking the header, and hand back `(line, record)` pairs.
pub fn read_csv_records(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let found = rdr.headers()?.clone();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != *b) {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line, rec));
    }
    Ok(out)
}

pub fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse::<T>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {name}: `{raw}`"),
    })
}

pub fn parse_bool(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<bool> {
    match rec.get(idx).unwrap_or("") {
        "1" | "true" | "True" => Ok(true),
        "0" | "false" | "False" => Ok(false),
        raw => Err(Error::Parse {
            line,
            msg: format!("invalid {name}: `{raw}`"),
        }),
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn vehicle_row(t: usize, v: &VehicleState, action: Action, collision: bool) -> Vec<String> {
    vec![
        t.to_string(),
        v.id.to_string(),
        v.lane.to_string(),
        fmt_f64(v.x),
        fmt_f64(v.y),
        fmt_f64(v.vx),
        fmt_f64(v.vy),
        fmt_f64(v.heading),
        fmt_f64(action.steer),
        fmt_f64(action.longitudinal),
        u8::from(collision).to_string(),
    ]
}

/// Serialise frames to trajectory CSV text (one row per agent per step,
/// ego first).
pub fn trajectory_csv(frames: &[Frame]) -> Result<Vec<u8>> {
    let rows = frames.iter().flat_map(|f| {
        std::iter::once(vehicle_row(f.t, &f.ego, f.action, f.collision)).chain(
            f.others
                .iter()
                .map(move |v| vehicle_row(f.t, v, Action::NEUTRAL, f.collision)),
        )
    });
    csv_bytes(&TRAJECTORY_HEADER, rows)
}

pub fn write_trajectory(frames: &[Frame], path: &Path) -> Result<()> {
    write_atomic(path, &trajectory_csv(frames)?)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Frame>> {
    let records = read_csv_records(path, &TRAJECTORY_HEADER)?;
    let mut frames: Vec<Frame> = Vec::new();
    let mut pending: Option<(usize, Option<(VehicleState, Action, bool)>, Vec<VehicleState>)> = None;

    let flush = |pending: Option<(usize, Option<(VehicleState, Action, bool)>, Vec<VehicleState>)>,
                 frames: &mut Vec<Frame>|
     -> Result<()> {
        if let Some((t, ego, others)) = pending {
            let (ego, action, collision) = ego.ok_or_else(|| {
                Error::Validation(format!("step {t} has no ego row (agent_id {EGO_ID})"))
            })?;
            frames.push(Frame {
                t,
                ego,
                others,
                action,
                collision,
            });
        }
        Ok(())
    };

    for (line, rec) in records {
        let t: usize = parse_field(&rec, 0, line, "t")?;
        let id: u32 = parse_field(&rec, 1, line, "agent_id")?;
        let lane: usize = parse_field(&rec, 2, line, "lane")?;
        let mut vals = [0.0f64; 7];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_field(&rec, 3 + k, line, TRAJECTORY_HEADER[3 + k])?;
        }
        let collision = parse_bool(&rec, 10, line, "collision")?;
        let vehicle = VehicleState {
            id,
            lane,
            x: vals[0],
            y: vals[1],
            vx: vals[2],
            vy: vals[3],
            heading: vals[4],
            length: VEHICLE_LENGTH,
            width: VEHICLE_WIDTH,
        };

        let same_step = matches!(&pending, Some((pt, _, _)) if *pt == t);
        if !same_step {
            let prev_t = pending.as_ref().map(|p| p.0).or(frames.last().map(|f| f.t));
            if let Some(prev) = prev_t {
                if t <= prev {
                    return Err(Error::Validation(format!(
                        "non-monotone t at line {line}: {t} follows {prev}"
                    )));
                }
            }
            flush(pending.take(), &mut frames)?;
            pending = Some((t, None, Vec::new()));
        }
        let slot = pending.as_mut().expect("pending frame");
        if id == EGO_ID {
            if slot.1.is_some() {
                return Err(Error::Validation(format!(
                    "duplicate ego row for step {t} at line {line}"
                )));
            }
            slot.1 = Some((vehicle, Action::new(vals[5], vals[6]), collision));
        } else {
            slot.2.push(vehicle);
        }
    }
    flush(pending, &mut frames)?;
    Ok(frames)
}
