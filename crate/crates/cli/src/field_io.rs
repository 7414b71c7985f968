//! Field CSV files: one row per (date, site), date-major, with every float
//! written in its shortest exact decimal form.

use std::path::Path;

use maxstorm::dependence::LagSite;
use maxstorm::{PlanarSite, SpaceTimeField, SphereSite};

use crate::error::{CliError, CliResult};

pub const PLANAR_HEADER: [&str; 4] = ["t", "x1", "x2", "value"];
pub const SPHERE_HEADER: [&str; 5] = ["t", "vx", "vy", "vz", "value"];

/// A site type with a CSV column layout.
pub trait FieldSite: LagSite + PartialEq {
    fn header() -> &'static [&'static str];
    fn coords(&self) -> Vec<f64>;
    fn from_coords(c: &[f64]) -> maxstorm::Result<Self>;
}

impl FieldSite for PlanarSite {
    fn header() -> &'static [&'static str] {
        &PLANAR_HEADER
    }
    fn coords(&self) -> Vec<f64> {
        vec![self.x1, self.x2]
    }
    fn from_coords(c: &[f64]) -> maxstorm::Result<Self> {
        PlanarSite::new(c[0], c[1])
    }
}

impl FieldSite for SphereSite {
    fn header() -> &'static [&'static str] {
        &SPHERE_HEADER
    }
    fn coords(&self) -> Vec<f64> {
        self.vector().to_vec()
    }
    fn from_coords(c: &[f64]) -> maxstorm::Result<Self> {
        SphereSite::new([c[0], c[1], c[2]])
    }
}

/// A field file of either geometry, as told by its header.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyField {
    Planar(SpaceTimeField<PlanarSite>),
    Sphere(SpaceTimeField<SphereSite>),
}

/// `Debug` formatting of `f64` is the shortest string that parses back to
/// the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

pub fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Parse {
            path: path.to_path_buf(),
            line: line.unwrap_or(0),
            reason: format!("{other:?}"),
        },
    }
}

pub fn write_field<S: FieldSite>(path: &Path, field: &SpaceTimeField<S>) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(S::header()).map_err(|e| csv_error(path, e))?;
    for (d, &t) in field.dates().iter().enumerate() {
        for (m, site) in field.sites().iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(site.coords().into_iter().map(fmt_f64));
            row.push(fmt_f64(field.value(d, m)));
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_rows<S: FieldSite>(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> CliResult<SpaceTimeField<S>> {
    let n_coords = S::header().len() - 2;
    let mut sites: Vec<S> = Vec::new();
    let mut dates: Vec<i64> = Vec::new();
    let mut values = Vec::new();
    let mut in_block = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| CliError::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        if rec.len() != n_coords + 2 {
            return Err(bad(format!("expected {} columns, found {}", n_coords + 2, rec.len())));
        }
        let t: i64 = rec[0].trim().parse().map_err(|_| bad(format!("date {:?} is not an integer", &rec[0])))?;
        let nums = (1..=n_coords + 1)
            .map(|i| rec[i].trim().parse::<f64>().map_err(|_| bad(format!("{:?} is not a number", &rec[i]))))
            .collect::<CliResult<Vec<f64>>>()?;
        let site = S::from_coords(&nums[..n_coords]).map_err(|e| bad(e.to_string()))?;
        let value = nums[n_coords];
        if !(value > 0.0 && value.is_finite()) {
            return Err(bad(format!("value must be positive and finite, got {value}")));
        }
        match dates.last() {
            None => dates.push(t),
            Some(&last) if t == last => {}
            Some(&last) if t < last => return Err(bad(format!("date {t} after date {last}: rows must be date-ordered"))),
            Some(&last) => {
                if dates.len() > 1 && in_block != sites.len() {
                    return Err(bad(format!("date {last} has {in_block} sites, expected {}", sites.len())));
                }
                dates.push(t);
                in_block = 0;
            }
        }
        // the first date fixes the site list; later dates must repeat it
        if dates.len() == 1 {
            sites.push(site);
        } else if in_block >= sites.len() || sites[in_block] != site {
            return Err(bad(format!(
                "site {:?} does not match position {in_block} of the first date's site list",
                site.coords()
            )));
        }
        in_block += 1;
        values.push(value);
    }
    if dates.is_empty() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: "no data rows".into(),
        });
    }
    if dates.len() > 1 && in_block != sites.len() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("last date has {in_block} sites, expected {}", sites.len()),
        });
    }
    SpaceTimeField::new(sites, dates, values).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })
}

pub fn read_field(path: &Path) -> CliResult<AnyField> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header == PLANAR_HEADER {
        parse_rows(path, &mut rdr).map(AnyField::Planar)
    } else if header == SPHERE_HEADER {
        parse_rows(path, &mut rdr).map(AnyField::Sphere)
    } else {
        Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!(
                "header {:?} is neither {} nor {}",
                header.join(","),
                PLANAR_HEADER.join(","),
                SPHERE_HEADER.join(",")
            ),
        })
    }
}

pub fn read_planar_field(path: &Path) -> CliResult<SpaceTimeField<PlanarSite>> {
    match read_field(path)? {
        AnyField::Planar(f) => Ok(f),
        AnyField::Sphere(_) => Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: "expected a planar field (t,x1,x2,value)".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar() -> SpaceTimeField<PlanarSite> {
        let sites = vec![PlanarSite { x1: 0.1, x2: -2.5e-8 }, PlanarSite { x1: 1.0 / 3.0, x2: 7.0 }];
        SpaceTimeField::new(sites, vec![1, 2, 5], vec![0.3, 1e-7, 2.0 / 3.0, 1e300, 4.0, 0.1 + 0.2]).unwrap()
    }

    #[test]
    fn planar_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_field(&p, &planar()).unwrap();
        assert_eq!(read_field(&p).unwrap(), AnyField::Planar(planar()));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x1,x2,value\n1,0.1,-2.5e-8,0.3\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn sphere_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let sites = vec![
            SphereSite::from_angles(0.3, 1.1).unwrap(),
            SphereSite::from_angles(2.0, -0.4).unwrap(),
        ];
        let f = SpaceTimeField::new(sites, vec![1], vec![0.5, 2.5]).unwrap();
        write_field(&p, &f).unwrap();
        assert_eq!(read_field(&p).unwrap(), AnyField::Sphere(f));
    }

    fn parse_err(body: &str) -> (u64, String) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, body).unwrap();
        match read_field(&p).unwrap_err() {
            CliError::Parse { line, reason, .. } => (line, reason),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_cite_lines() {
        assert_eq!(parse_err("t,x1,x2,value\n1,0,0,1.0\n1,1,0,abc\n").0, 3);
        assert_eq!(parse_err("t,x1,x2,value\n1,0,0,1.0\n1,1,0,-2\n").0, 3);
        assert_eq!(parse_err("t,x1,x2,value\n2,0,0,1.0\n1,0,0,1.0\n").0, 3);
        assert_eq!(parse_err("t,x1,x2,value\n1,0,0,1.0\n2,5,0,1.0\n").0, 3);
        assert_eq!(parse_err("a,b\n1,2\n").0, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_field(Path::new("/nonexistent/field.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("/nonexistent/field.csv"));
    }
}
