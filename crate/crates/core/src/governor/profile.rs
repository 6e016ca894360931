//! Profile CSV reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{OperatingPoint, PlatformProfile};
use crate::error::{Error, Result};

pub const PROFILE_HEADER: [&str; 7] = [
    "platform",
    "core",
    "freq_hz",
    "config_pct",
    "latency_ms",
    "power_mw",
    "accuracy",
];

/// Maps `config_pct` to a width for a four-group model.
fn pct_to_k(pct: &str, line: usize) -> Result<usize> {
    match pct.trim() {
        "25" => Ok(1),
        "50" => Ok(2),
        "75" => Ok(3),
        "100" => Ok(4),
        other => Err(Error::ProfileParse {
            line,
            reason: format!("config_pct must be one of 25, 50, 75, 100; got {other:?}"),
        }),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::ProfileParse { line, reason: e.to_string() }
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| Error::ProfileParse {
        line,
        reason: format!("{name}: not a number: {field:?}"),
    })
}

/// Parses profile CSV text. Line numbers in errors are 1-based and count the
/// header.
pub fn parse_profile(name: &str, text: &str) -> Result<PlatformProfile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().map(str::trim).ne(PROFILE_HEADER) {
        return Err(Error::ProfileParse {
            line: 1,
            reason: format!("expected header {}", PROFILE_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let freq_hz = rec[2].trim().parse::<u64>().map_err(|_| Error::ProfileParse {
            line,
            reason: format!("freq_hz: not an integer: {:?}", &rec[2]),
        })?;
        let latency_ms = parse_f64(&rec[4], line, "latency_ms")?.ok_or_else(|| Error::ProfileParse {
            line,
            reason: "latency_ms is required".into(),
        })?;
        points.push(OperatingPoint {
            platform: rec[0].trim().to_string(),
            core: rec[1].trim().to_string(),
            freq_hz,
            config_k: pct_to_k(&rec[3], line)?,
            latency_ms,
            power_mw: parse_f64(&rec[5], line, "power_mw")?,
            accuracy: parse_f64(&rec[6], line, "accuracy")?,
        });
    }
    PlatformProfile::new(name, points)
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<PlatformProfile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("profile");
    parse_profile(name, &text)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the profile in the CSV layout read by [`parse_profile`]. Only
/// widths 1 to 4 are representable.
pub fn write_profile(profile: &PlatformProfile, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(PROFILE_HEADER).map_err(io)?;
    for p in &profile.points {
        if !(1..=4).contains(&p.config_k) {
            return Err(Error::Config(format!("width k={} has no config_pct column value", p.config_k)));
        }
        w.write_record([
            p.platform.clone(),
            p.core.clone(),
            p.freq_hz.to_string(),
            (p.config_k * 25).to_string(),
            p.latency_ms.to_string(),
            fmt_opt(p.power_mw),
            fmt_opt(p.accuracy),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_profile(profile: &PlatformProfile, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_profile(profile, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}
