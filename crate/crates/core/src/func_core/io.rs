//! Curve CSV files.
//!
//! Canonical (wide) layout: the header row holds the grid points, every
//! following row is one curve. The long layout `curve_id,t,value` is also
//! accepted and pivoted to the wide form on read.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{FunctionalSample, Grid};
use crate::error::{Error, Result};

fn csv_err(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

fn parse_f64(field: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| csv_err(line, format!("cannot parse {what} `{field}` as a number")))?;
    if !v.is_finite() {
        return Err(csv_err(line, format!("non-finite {what} `{field}`")));
    }
    Ok(v)
}

pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<FunctionalSample> {
    let file = std::fs::File::open(path)?;
    read_curve_csv_from(file)
}

pub fn read_curve_csv_from<R: Read>(reader: R) -> Result<FunctionalSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    let Some((hline, header)) = records.first() else {
        return Err(csv_err(1, "empty file"));
    };
    let names: Vec<String> = header.iter().map(|f| f.to_ascii_lowercase()).collect();
    if names == ["curve_id", "t", "value"] {
        return read_long(&records[1..]);
    }

    let points = header
        .iter()
        .map(|f| parse_f64(f, *hline, "grid point"))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::from_points(&points).map_err(|e| csv_err(*hline, e.to_string()))?;
    let r = grid.resolution();
    let mut data = Vec::with_capacity(r * (records.len() - 1));
    for (line, rec) in &records[1..] {
        if rec.len() != r {
            return Err(csv_err(*line, format!("expected {r} values, found {}", rec.len())));
        }
        for f in rec.iter() {
            data.push(parse_f64(f, *line, "value")?);
        }
    }
    if data.is_empty() {
        return Err(csv_err(*hline, "no curves after the header row"));
    }
    FunctionalSample::from_flat(grid, data)
}

fn read_long(records: &[(u64, csv::StringRecord)]) -> Result<FunctionalSample> {
    units_on_common_grid(collect_units(records)?)
}

/// Observations of one unit (a year, a station, ...) in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawUnit {
    pub id: String,
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
}

fn collect_units(records: &[(u64, csv::StringRecord)]) -> Result<Vec<RawUnit>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, RawUnit> = HashMap::new();
    for (line, rec) in records {
        if rec.len() != 3 {
            return Err(csv_err(*line, format!("expected 3 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        let t = parse_f64(&rec[1], *line, "position")?;
        let v = parse_f64(&rec[2], *line, "value")?;
        let unit = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            RawUnit {
                id,
                positions: Vec::new(),
                values: Vec::new(),
            }
        });
        unit.positions.push(t);
        unit.values.push(v);
    }
    if order.is_empty() {
        return Err(csv_err(1, "no observations in long-format file"));
    }
    Ok(order.iter().map(|id| by_id.remove(id).expect("id recorded")).collect())
}

/// Long-format raw observations `unit_id,position,value`, one unit per id in
/// order of first appearance. A non-numeric first row is taken as a header.
pub fn read_raw_observations_from<R: Read>(reader: R) -> Result<Vec<RawUnit>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    if let Some((_, first)) = records.first() {
        if first.len() == 3 && first[1].trim().parse::<f64>().is_err() {
            records.remove(0);
        }
    }
    let units = collect_units(&records)?;
    for u in &units {
        if let Some(t) = u.positions.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidParameter(format!(
                "unit `{}` has position {t} outside [0, 1]",
                u.id
            )));
        }
    }
    Ok(units)
}

pub fn read_raw_observations(path: impl AsRef<Path>) -> Result<Vec<RawUnit>> {
    read_raw_observations_from(std::fs::File::open(path)?)
}

/// Units observed at identical positions, taken as curves on that grid.
pub fn units_on_common_grid(mut units: Vec<RawUnit>) -> Result<FunctionalSample> {
    let mut grid: Option<(Grid, Vec<f64>)> = None;
    let mut data = Vec::new();
    for unit in &mut units {
        let mut obs: Vec<(f64, f64)> = unit
            .positions
            .iter()
            .copied()
            .zip(unit.values.iter().copied())
            .collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ts: Vec<f64> = obs.iter().map(|o| o.0).collect();
        let id = &unit.id;
        match &grid {
            None => {
                let g = Grid::from_points(&ts).map_err(|e| Error::InvalidGrid(format!("curve `{id}`: {e}")))?;
                grid = Some((g, ts));
            }
            Some((_, reference)) => {
                if reference != &ts {
                    return Err(Error::InvalidGrid(format!(
                        "curve `{id}` is not observed on the same grid as the first curve"
                    )));
                }
            }
        }
        data.extend(obs.iter().map(|o| o.1));
    }
    let (g, _) = grid.ok_or(Error::EmptySample)?;
    FunctionalSample::from_flat(g, data)
}

pub fn write_curve_csv(path: impl AsRef<Path>, sample: &FunctionalSample) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_curve_csv_to(std::io::BufWriter::new(file), sample)
}

/// Values are written in shortest round-trip form, so reading back is lossless.
pub fn write_curve_csv_to<W: Write>(writer: W, sample: &FunctionalSample) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_csv = |e: csv::Error| csv_err(0, e.to_string());
    wtr.write_record(sample.grid().points().iter().map(|p| p.to_string()))
        .map_err(to_csv)?;
    for c in sample.curves() {
        wtr.write_record(c.iter().map(|v| v.to_string())).map_err(to_csv)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_observations_keep_unit_order_and_skip_a_header() {
        let text = "unit_id,position,value\nb,0.0,1\na,0.5,2\nb,1.0,3\n";
        let units = read_raw_observations_from(text.as_bytes()).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].id, "b");
        assert_eq!(units[0].positions, vec![0.0, 1.0]);
        assert_eq!(units[0].values, vec![1.0, 3.0]);
        assert_eq!(units[1].values, vec![2.0]);

        let headless = read_raw_observations_from("x,0.25,1\n".as_bytes()).unwrap();
        assert_eq!(headless[0].positions, vec![0.25]);
        assert!(read_raw_observations_from("x,1.5,1\n".as_bytes()).is_err());
        match read_raw_observations_from("x,0.5,1\ny,0.5,oops\n".as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn units_on_a_common_grid_become_curves() {
        let text = "u,0,1\nu,1,2\nu,0.5,5\nv,0.5,0\nv,0,0\nv,1,1\n";
        let s = units_on_common_grid(read_raw_observations_from(text.as_bytes()).unwrap()).unwrap();
        assert_eq!(s.as_flat(), &[1.0, 5.0, 2.0, 0.0, 0.0, 1.0]);
        let uneven = "u,0,1\nu,1,2\nv,0,0\nv,0.5,1\n";
        assert!(units_on_common_grid(read_raw_observations_from(uneven.as_bytes()).unwrap()).is_err());
    }

    #[test]
    fn wide_round_trip_is_lossless() {
        let g = Grid::new(7).unwrap();
        let rows = vec![
            (0..7).map(|i| (i as f64).sin() / 3.0).collect::<Vec<_>>(),
            (0..7).map(|i| 1e-7 * i as f64 - 2.5).collect(),
        ];
        let s = FunctionalSample::from_rows(g, rows).unwrap();
        let mut buf = Vec::new();
        write_curve_csv_to(&mut buf, &s).unwrap();
        let back = read_curve_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn long_format_is_pivoted() {
        let text = "curve_id,t,value\nb,1,4\na,0,1\na,0.5,2\nb,0,3\na,1,2.5\nb,0.5,3.5\n";
        let s = read_curve_csv_from(text.as_bytes()).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.curve(0), &[3.0, 3.5, 4.0]);
        assert_eq!(s.curve(1), &[1.0, 2.0, 2.5]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "0,0.5,1\n1,2,3\n4,oops,6\n";
        match read_curve_csv_from(text.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "0,0.5,1\n1,2\n";
        match read_curve_csv_from(text.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "0,0.3,1\n1,2,3\n";
        assert!(matches!(
            read_curve_csv_from(text.as_bytes()),
            Err(Error::Csv { line: 1, .. })
        ));
    }
}
