//! CSV and model-file reading and writing.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use intkrige::kriging::IntervalSample;
use intkrige::snowload::{StationRecord, YearlyMax};
use intkrige::variogram::format_sig;
use intkrige::{Interval, Location, VariogramModel};

pub const SIG_DIGITS: usize = 9;

pub fn fmt(x: f64) -> String {
    format_sig(x, SIG_DIGITS)
}

/// `path` or standard output when `None`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn csv_writer(w: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Header-indexed CSV rows with the file line of each row.
struct Table {
    path: String,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let text = fs::read(path).with_context(|| format!("reading {name}"))?;
        // The reader's own line count skips blank lines; count from the
        // byte offset instead, past any blank lines the record starts on.
        let line_at = |byte: u64| {
            let mut b = byte as usize;
            while b < text.len() && matches!(text[b], b'\n' | b'\r') {
                b += 1;
            }
            1 + text[..b].iter().filter(|&&c| c == b'\n').count() as u64
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_slice());
        let headers = rdr
            .headers()
            .with_context(|| format!("{name}:1: unreadable header"))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| line_at(p.byte()));
                anyhow!("{name}:{line}: {e}")
            })?;
            let line = rec.position().map_or(0, |p| line_at(p.byte()));
            rows.push((line, rec));
        }
        Ok(Self {
            path: name,
            headers,
            rows,
        })
    }

    /// Index of the first header among `names`.
    fn column(&self, names: &[&str]) -> Option<usize> {
        names
            .iter()
            .find_map(|n| self.headers.iter().position(|h| h == n))
    }

    fn require(&self, names: &[&str]) -> Result<usize> {
        self.column(names)
            .ok_or_else(|| anyhow!("{}:1: missing column '{}'", self.path, names.join("' or '")))
    }

    fn err(&self, line: u64, msg: impl std::fmt::Display) -> anyhow::Error {
        anyhow!("{}:{line}: {msg}", self.path)
    }

    fn number(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let raw = rec.get(col).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| {
            self.err(
                line,
                format!("column '{}': not a number: '{raw}'", self.headers[col]),
            )
        })?;
        if !v.is_finite() {
            return Err(self.err(
                line,
                format!("column '{}': non-finite value", self.headers[col]),
            ));
        }
        Ok(v)
    }

    fn optional(
        &self,
        line: u64,
        rec: &csv::StringRecord,
        col: Option<usize>,
    ) -> Result<Option<f64>> {
        match col {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => self.number(line, rec, c).map(Some),
            _ => Ok(None),
        }
    }
}

/// Interval samples from `x,y,elev_m,lower,upper`; design-interval files
/// (`lon,lat,...,lower_kpa,upper_kpa`) are accepted as well. A missing or
/// empty elevation reads as 0.
pub fn read_samples(path: &Path) -> Result<Vec<IntervalSample>> {
    let t = Table::read(path)?;
    let x = t.require(&["x", "lon"])?;
    let y = t.require(&["y", "lat"])?;
    let e = t.column(&["elev_m", "elevation"]);
    let lo = t.require(&["lower", "lower_kpa"])?;
    let hi = t.require(&["upper", "upper_kpa"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let loc = Location::new(
            t.number(*line, rec, x)?,
            t.number(*line, rec, y)?,
            t.optional(*line, rec, e)?.unwrap_or(0.0),
        )
        .map_err(|err| t.err(*line, err))?;
        let value = Interval::new(t.number(*line, rec, lo)?, t.number(*line, rec, hi)?)
            .map_err(|err| t.err(*line, err))?;
        out.push(IntervalSample::new(loc, value));
    }
    if out.is_empty() {
        bail!("{}: no samples", t.path);
    }
    Ok(out)
}

pub fn write_samples(path: Option<&Path>, samples: &[IntervalSample]) -> Result<()> {
    let mut w = csv_writer(sink(path)?);
    w.write_record(["x", "y", "elev_m", "lower", "upper"])?;
    for s in samples {
        w.write_record([
            fmt(s.loc.x),
            fmt(s.loc.y),
            fmt(s.loc.elevation),
            fmt(s.value.lower()),
            fmt(s.value.upper()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Prediction targets from `x,y[,elev_m]`.
pub fn read_targets(path: &Path) -> Result<Vec<Location>> {
    let t = Table::read(path)?;
    let x = t.require(&["x", "lon"])?;
    let y = t.require(&["y", "lat"])?;
    let e = t.column(&["elev_m", "elevation"]);
    t.rows
        .iter()
        .map(|(line, rec)| {
            Location::new(
                t.number(*line, rec, x)?,
                t.number(*line, rec, y)?,
                t.optional(*line, rec, e)?.unwrap_or(0.0),
            )
            .map_err(|err| t.err(*line, err))
        })
        .collect()
}

/// Stations from `id,lon,lat,elev_m,year,day_of_season,depth_cm,load_kpa`,
/// one row per season, in order of first appearance. An empty `load_kpa`
/// means the load comes from the depth conversions.
pub fn read_stations(path: &Path) -> Result<Vec<StationRecord>> {
    let t = Table::read(path)?;
    let cols = [
        "id",
        "lon",
        "lat",
        "elev_m",
        "year",
        "day_of_season",
        "depth_cm",
    ]
    .map(|c| t.require(&[c]))
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let [id, lon, lat, elev, year, day, depth] = cols[..] else {
        unreachable!("seven columns");
    };
    let load = t.column(&["load_kpa"]);
    let mut stations: Vec<StationRecord> = Vec::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let name = rec.get(id).unwrap_or("").to_string();
        if name.is_empty() {
            return Err(t.err(line, "empty station id"));
        }
        let loc = Location::new(
            t.number(line, rec, lon)?,
            t.number(line, rec, lat)?,
            t.number(line, rec, elev)?,
        )
        .map_err(|err| t.err(line, err))?;
        let whole = |col: usize| -> Result<i32> {
            let v = t.number(line, rec, col)?;
            if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                return Err(t.err(
                    line,
                    format!("column '{}': expected an integer", t.headers[col]),
                ));
            }
            Ok(v as i32)
        };
        let season = YearlyMax {
            year: whole(year)?,
            depth_cm: t.number(line, rec, depth)?,
            day: whole(day)?,
            direct_load: t.optional(line, rec, load)?,
        };
        match stations.iter_mut().find(|s| s.id == name) {
            Some(s) if s.loc != loc => {
                return Err(t.err(
                    line,
                    format!("station {name}: location differs from its earlier rows"),
                ))
            }
            Some(s) => s.yearly.push(season),
            None => stations.push(StationRecord {
                id: name,
                loc,
                yearly: vec![season],
            }),
        }
    }
    if stations.is_empty() {
        bail!("{}: no station rows", t.path);
    }
    Ok(stations)
}

/// Fitted models, one `channel family nugget partial_sill range` per line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFile {
    pub center: VariogramModel,
    pub radius: VariogramModel,
    pub cross: Option<VariogramModel>,
}

pub fn write_models(path: &Path, m: &ModelFile) -> Result<()> {
    let mut text = format!("center {}\nradius {}\n", m.center, m.radius);
    if let Some(c) = m.cross {
        text.push_str(&format!("cross {c}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_models(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut center, mut radius, mut cross) = (None, None, None);
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: &dyn std::fmt::Display| anyhow!("{}:{}: {e}", path.display(), k + 1);
        let (channel, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| at(&"expected 'channel family nugget partial_sill range'"))?;
        let model: VariogramModel = rest.parse().map_err(|e| at(&e))?;
        let slot = match channel {
            "center" => &mut center,
            "radius" => &mut radius,
            "cross" => &mut cross,
            other => return Err(at(&format!("unknown channel '{other}'"))),
        };
        if slot.replace(model).is_some() {
            return Err(at(&format!("duplicate {channel} model")));
        }
    }
    Ok(ModelFile {
        center: center.ok_or_else(|| anyhow!("{}: no center model", path.display()))?,
        radius: radius.ok_or_else(|| anyhow!("{}: no radius model", path.display()))?,
        cross,
    })
}
