//! File formats.
//!
//! Grid-CSV: first line `rows,cols`; any number of `#` comment lines holding
//! space-separated `key=value` metadata; then `rows` lines of `cols`
//! comma-separated values written with 17 significant digits
//! (`d.dddddddddddddddde±x`), row-major, `\n` line endings. Seventeen digits
//! round-trip every `f64` exactly.
//!
//! Graymap: binary 16-bit PGM (`P5`, maxval 65535, big-endian samples),
//! min–max normalised per image, with the normalisation range in a header
//! comment `# min=<v> max=<v>`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Result, SedsError};
use crate::grid::ImageGrid;
use crate::optics::SpotKernel;
use crate::scan::{MeasurementGrid, ScanMode};

/// Shortest fixed-width scientific form with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A Grid-CSV file as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

pub fn write_grid_csv<W: Write>(
    mut w: W,
    rows: usize,
    cols: usize,
    values: &[f64],
    metadata: &[(&str, String)],
) -> std::io::Result<()> {
    assert_eq!(values.len(), rows * cols);
    writeln!(w, "{rows},{cols}")?;
    if !metadata.is_empty() {
        let fields: Vec<String> = metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(w, "# {}", fields.join(" "))?;
    }
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_grid_csv<R: BufRead>(r: R) -> Result<CsvGrid> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| SedsError::Parse("empty grid file".into()))??;
    let (rows, cols) = header
        .trim()
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        .ok_or_else(|| SedsError::Parse(format!("bad header `{header}`")))?;
    let mut metadata = BTreeMap::new();
    let mut values = Vec::with_capacity(rows * cols);
    let mut data_rows = 0usize;
    for line in lines {
        let line = line?;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            for field in comment.split_whitespace() {
                if let Some((k, v)) = field.split_once('=') {
                    metadata.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        data_rows += 1;
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|e| SedsError::Parse(format!("value `{tok}` in row {data_rows}: {e}")))?;
            values.push(v);
        }
        if values.len() - before != cols {
            return Err(SedsError::Parse(format!(
                "row {data_rows} has {} values, expected {cols}",
                values.len() - before
            )));
        }
    }
    if data_rows != rows {
        return Err(SedsError::Parse(format!("expected {rows} rows, found {data_rows}")));
    }
    Ok(CsvGrid {
        rows,
        cols,
        values,
        metadata,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_image_csv(path: &Path, image: &ImageGrid) -> Result<()> {
    let mut w = create(path)?;
    write_grid_csv(&mut w, image.rows(), image.cols(), image.values(), &[])?;
    w.flush()?;
    Ok(())
}

/// Reads an image; `allow_negative` admits reconstructions.
pub fn load_image_csv(path: &Path, allow_negative: bool) -> Result<ImageGrid> {
    let g = read_grid_csv(open(path)?)?;
    if allow_negative {
        ImageGrid::from_solution(g.rows, g.cols, g.values)
    } else {
        ImageGrid::new(g.rows, g.cols, g.values)
    }
}

pub fn save_spot_csv(path: &Path, spot: &SpotKernel) -> Result<()> {
    let mut w = create(path)?;
    let k = spot.size_px();
    write_grid_csv(&mut w, k, k, spot.values(), &[("kind", "spot".to_string())])?;
    w.flush()?;
    Ok(())
}

pub fn load_spot_csv(path: &Path) -> Result<SpotKernel> {
    let g = read_grid_csv(open(path)?)?;
    if g.rows != g.cols {
        return Err(SedsError::InvalidGrid(format!(
            "spot must be square, got {}x{}",
            g.rows, g.cols
        )));
    }
    SpotKernel::new(g.rows, g.values)
}

pub fn measurement_metadata(s: &MeasurementGrid) -> Vec<(&'static str, String)> {
    vec![
        ("mode", s.mode().to_string()),
        ("margin_px", s.margin_px().to_string()),
        ("spot_size_px", s.spot_size_px().to_string()),
        ("bc", s.bc().to_string()),
    ]
}

pub fn write_measurement_csv<W: Write>(w: W, s: &MeasurementGrid) -> std::io::Result<()> {
    write_grid_csv(w, s.rows(), s.cols(), s.values(), &measurement_metadata(s))
}

pub fn read_measurement_csv<R: BufRead>(r: R) -> Result<MeasurementGrid> {
    let g = read_grid_csv(r)?;
    let field = |key: &str| {
        g.metadata
            .get(key)
            .ok_or_else(|| SedsError::Parse(format!("measurement file lacks `{key}` metadata")))
    };
    let mode: ScanMode = field("mode")?.parse()?;
    let margin = field("margin_px")?
        .parse()
        .map_err(|e| SedsError::Parse(format!("margin_px: {e}")))?;
    let spot = field("spot_size_px")?
        .parse()
        .map_err(|e| SedsError::Parse(format!("spot_size_px: {e}")))?;
    let bc = field("bc")?.parse()?;
    MeasurementGrid::new(g.rows, g.cols, g.values, mode, margin, spot, bc)
}

pub fn save_measurement_csv(path: &Path, s: &MeasurementGrid) -> Result<()> {
    let mut w = create(path)?;
    write_measurement_csv(&mut w, s)?;
    w.flush()?;
    Ok(())
}

pub fn load_measurement_csv(path: &Path) -> Result<MeasurementGrid> {
    read_measurement_csv(open(path)?)
}

/// 16-bit binary graymap of `values`, min–max normalised. A flat image maps
/// to all zeros.
pub fn write_pgm16<W: Write>(mut w: W, rows: usize, cols: usize, values: &[f64]) -> std::io::Result<()> {
    assert_eq!(values.len(), rows * cols);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    write!(w, "P5\n# min={} max={}\n{cols} {rows}\n65535\n", format_f64(lo), format_f64(hi))?;
    let mut buf = Vec::with_capacity(values.len() * 2);
    for v in values {
        let level = if span > 0.0 {
            ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        buf.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&buf)
}

pub fn save_pgm16(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    write_pgm16(&mut w, rows, cols, values)?;
    w.flush()?;
    Ok(())
}

/// `key=value` lines, in the given order.
pub fn format_kv(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
