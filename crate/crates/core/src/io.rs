//! Binary container, CSV tables and PGM images.
//!
//! Container layout, all little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `PHCM` |
//! | 2 | version (u16) |
//! | 1 | kind: 0 model, 1 measurements, 2 factorization |
//! | 1 | directionality: 0 none, 1 unidirectional, 2 bidirectional |
//! | 8 × 4 | rows, cols, rank, truth length (u64) |
//! | 32 | model fingerprint |
//! | 8 | rpm (f64) |
//! | 8 | snr_db (f64) |
//!
//! The payload is a run of complex values stored as interleaved re/im f32:
//! the row-major matrix for a model; `y` then the truth for measurements;
//! singular values (im = 0), then `U` (rows × rank) and `V` (cols × rank)
//! row-major for a factorization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{Directionality, Fingerprint, ForwardModel, MeasurementSet};
use crate::geometry::SceneGrid;
use crate::linalg::CMatrix;
use crate::recon::SvdFactorization;

pub const MAGIC: [u8; 4] = *b"PHCM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 88;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Model = 0,
    Measurements = 1,
    Factorization = 2,
}

impl ContainerKind {
    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Self::Model),
            1 => Ok(Self::Measurements),
            2 => Ok(Self::Factorization),
            _ => Err(Error::Format(format!("unknown container kind {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerHeader {
    pub kind: ContainerKind,
    pub directionality: Option<Directionality>,
    pub rows: u64,
    pub cols: u64,
    pub rank: u64,
    pub truth_len: u64,
    pub fingerprint: Fingerprint,
    pub rpm: f64,
    pub snr_db: f64,
}

impl ContainerHeader {
    fn payload_values(&self) -> Result<u64> {
        let n = match self.kind {
            ContainerKind::Model => self.rows.checked_mul(self.cols),
            ContainerKind::Measurements => self.rows.checked_add(self.truth_len),
            ContainerKind::Factorization => self
                .rows
                .checked_add(self.cols)
                .and_then(|v| v.checked_mul(self.rank))
                .and_then(|v| v.checked_add(self.rank)),
        };
        n.ok_or_else(|| Error::Format("container dimensions overflow".into()))
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6] = self.kind as u8;
        b[7] = self.directionality.map_or(0, Directionality::code);
        for (i, v) in [self.rows, self.cols, self.rank, self.truth_len].iter().enumerate() {
            b[8 + 8 * i..16 + 8 * i].copy_from_slice(&v.to_le_bytes());
        }
        b[40..72].copy_from_slice(&self.fingerprint.0);
        b[72..80].copy_from_slice(&self.rpm.to_le_bytes());
        b[80..88].copy_from_slice(&self.snr_db.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[0..4] != MAGIC {
            return Err(Error::Format("not a PHCM container".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let directionality = match b[7] {
            0 => None,
            c => Some(Directionality::from_code(c).ok_or_else(|| Error::Format(format!("unknown directionality {c}")))?),
        };
        let u = |i: usize| u64::from_le_bytes(b[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let f = |at: usize| f64::from_le_bytes(b[at..at + 8].try_into().unwrap());
        Ok(Self {
            kind: ContainerKind::from_code(b[6])?,
            directionality,
            rows: u(0),
            cols: u(1),
            rank: u(2),
            truth_len: u(3),
            fingerprint: Fingerprint(b[40..72].try_into().unwrap()),
            rpm: f(72),
            snr_db: f(80),
        })
    }
}

fn write_values<W: Write>(w: &mut W, values: impl IntoIterator<Item = Complex64>) -> Result<()> {
    for z in values {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_values<R: Read>(r: &mut R, n: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

fn read_header<R: Read>(r: &mut R, expected: ContainerKind) -> Result<ContainerHeader> {
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let h = ContainerHeader::from_bytes(&b)?;
    if h.kind != expected {
        return Err(Error::Format(format!("expected a {expected:?} container, found {:?}", h.kind)));
    }
    h.payload_values()?;
    Ok(h)
}

fn expect_end<R: Read>(r: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

fn usize_of(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} does not fit in memory")))
}

pub fn write_model<W: Write>(w: &mut W, model: &ForwardModel) -> Result<()> {
    let h = ContainerHeader {
        kind: ContainerKind::Model,
        directionality: Some(model.directionality),
        rows: model.rows() as u64,
        cols: model.cols() as u64,
        rank: 0,
        truth_len: 0,
        fingerprint: model.fingerprint,
        rpm: model.rpm,
        snr_db: f64::INFINITY,
    };
    w.write_all(&h.to_bytes())?;
    write_values(w, model.matrix.as_slice().iter().copied())
}

/// Header and sensing matrix; the grid and timing come from the caller's config.
pub fn read_model<R: Read>(r: &mut R) -> Result<(ContainerHeader, CMatrix)> {
    let h = read_header(r, ContainerKind::Model)?;
    let (rows, cols) = (usize_of(h.rows)?, usize_of(h.cols)?);
    let data = read_values(r, rows * cols)?;
    expect_end(r)?;
    Ok((h, CMatrix::from_vec(rows, cols, data)?))
}

pub fn write_measurements<W: Write>(w: &mut W, m: &MeasurementSet) -> Result<()> {
    let truth = m.truth.as_deref().unwrap_or(&[]);
    let h = ContainerHeader {
        kind: ContainerKind::Measurements,
        directionality: None,
        rows: m.y.len() as u64,
        cols: truth.len() as u64,
        rank: 0,
        truth_len: truth.len() as u64,
        fingerprint: m.fingerprint,
        rpm: m.rpm,
        snr_db: m.snr_db,
    };
    w.write_all(&h.to_bytes())?;
    write_values(w, m.y.iter().chain(truth).copied())
}

pub fn read_measurements<R: Read>(r: &mut R) -> Result<MeasurementSet> {
    let h = read_header(r, ContainerKind::Measurements)?;
    let y = read_values(r, usize_of(h.rows)?)?;
    let truth = read_values(r, usize_of(h.truth_len)?)?;
    expect_end(r)?;
    Ok(MeasurementSet {
        y,
        truth: (!truth.is_empty()).then_some(truth),
        rpm: h.rpm,
        snr_db: h.snr_db,
        fingerprint: h.fingerprint,
    })
}

pub fn write_factorization<W: Write>(w: &mut W, f: &SvdFactorization) -> Result<()> {
    let h = ContainerHeader {
        kind: ContainerKind::Factorization,
        directionality: None,
        rows: f.u.rows() as u64,
        cols: f.v.rows() as u64,
        rank: f.s.len() as u64,
        truth_len: 0,
        fingerprint: f.fingerprint,
        rpm: 0.0,
        snr_db: f64::INFINITY,
    };
    w.write_all(&h.to_bytes())?;
    write_values(w, f.s.iter().map(|&s| Complex64::new(s, 0.0)))?;
    write_values(w, f.u.as_slice().iter().copied())?;
    write_values(w, f.v.as_slice().iter().copied())
}

pub fn read_factorization<R: Read>(r: &mut R) -> Result<SvdFactorization> {
    let h = read_header(r, ContainerKind::Factorization)?;
    let (rows, cols, rank) = (usize_of(h.rows)?, usize_of(h.cols)?, usize_of(h.rank)?);
    let s = read_values(r, rank)?.into_iter().map(|z| z.re).collect();
    let u = CMatrix::from_vec(rows, rank, read_values(r, rows * rank)?)?;
    let v = CMatrix::from_vec(cols, rank, read_values(r, cols * rank)?)?;
    expect_end(r)?;
    Ok(SvdFactorization { u, s, v, fingerprint: h.fingerprint })
}

/// The factorization exactly as it reads back from a container.
pub fn stored_precision(f: &SvdFactorization) -> Result<SvdFactorization> {
    let mut buf = Vec::new();
    write_factorization(&mut buf, f)?;
    read_factorization(&mut buf.as_slice())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(Error::from)
}

pub fn save_model(path: &Path, model: &ForwardModel) -> Result<()> {
    let mut w = create(path)?;
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ContainerHeader, CMatrix)> {
    read_model(&mut open(path)?)
}

pub fn save_measurements(path: &Path, m: &MeasurementSet) -> Result<()> {
    let mut w = create(path)?;
    write_measurements(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_measurements(path: &Path) -> Result<MeasurementSet> {
    read_measurements(&mut open(path)?)
}

pub fn save_factorization(path: &Path, f: &SvdFactorization) -> Result<()> {
    let mut w = create(path)?;
    write_factorization(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn load_factorization(path: &Path) -> Result<SvdFactorization> {
    read_factorization(&mut open(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// CSV writer with CRLF line endings.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w)
}

/// Writes a header and rows of already formatted fields.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header).map_err(csv_error)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Shape(format!("row has {} fields, header has {}", r.len(), header.len())));
        }
        out.write_record(r).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_table(create(path)?, header, rows)
}

pub const IMAGE_CSV_HEADER: [&str; 3] = ["azimuth_deg", "elevation_deg", "intensity"];

/// One row per grid point, elevation-major like the grid itself.
pub fn image_rows(grid: &SceneGrid, intensity: &[f64]) -> Result<Vec<Vec<String>>> {
    if intensity.len() != grid.len() {
        return Err(Error::Shape(format!("{} intensities for {} grid points", intensity.len(), grid.len())));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (e, el) in grid.elevation_deg.iter().enumerate() {
        for (a, az) in grid.azimuth_deg.iter().enumerate() {
            rows.push(vec![az.to_string(), el.to_string(), intensity[grid.index(a, e)].to_string()]);
        }
    }
    Ok(rows)
}

pub fn save_image_csv(path: &Path, grid: &SceneGrid, intensity: &[f64]) -> Result<()> {
    save_table(path, &IMAGE_CSV_HEADER, &image_rows(grid, intensity)?)
}

/// Reads an image CSV back onto `grid`; every grid point must appear exactly once.
pub fn load_image_csv(path: &Path, grid: &SceneGrid) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(csv_error)?;
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != IMAGE_CSV_HEADER {
        return Err(Error::Format(format!("image CSV header must be {}", IMAGE_CSV_HEADER.join(","))));
    }
    let mut out = vec![f64::NAN; grid.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::Format(format!("bad number {:?}", &rec[i])))
        };
        let (az, el, v) = (num(0)?, num(1)?, num(2)?);
        let j = grid.point_index(az, el).map_err(|_| Error::Mismatch(format!("({az}, {el}) is not on the grid")))?;
        if !out[j].is_nan() {
            return Err(Error::Mismatch(format!("grid point ({az}, {el}) appears twice")));
        }
        out[j] = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::Mismatch("reference image does not cover the grid".into()));
    }
    Ok(out)
}

/// Lower display bound; intensities are peak-normalized and clamped to `[PGM_FLOOR, 1]`.
pub const PGM_FLOOR: f64 = 0.1;

/// 8-bit binary graymap, azimuth across, highest elevation on the top row.
pub fn write_pgm<W: Write>(mut w: W, grid: &SceneGrid, intensity: &[f64]) -> Result<()> {
    if intensity.len() != grid.len() {
        return Err(Error::Shape(format!("{} intensities for {} grid points", intensity.len(), grid.len())));
    }
    let peak = intensity.iter().copied().fold(0.0, f64::max);
    let (width, height) = (grid.n_azimuth(), grid.n_elevation());
    write!(w, "P5\n{width} {height}\n255\n")?;
    let mut bytes = Vec::with_capacity(width * height);
    for e in (0..height).rev() {
        for a in 0..width {
            let v = if peak > 0.0 { (intensity[grid.index(a, e)] / peak).clamp(PGM_FLOOR, 1.0) } else { PGM_FLOOR };
            bytes.push((255.0 * (v - PGM_FLOOR) / (1.0 - PGM_FLOOR)).round() as u8);
        }
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn save_pgm(path: &Path, grid: &SceneGrid, intensity: &[f64]) -> Result<()> {
    write_pgm(create(path)?, grid, intensity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_scene_grid;
    use crate::recon::factorize_matrix;

    fn fp(b: u8) -> Fingerprint {
        Fingerprint([b; 32])
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn header_round_trip() {
        let h = ContainerHeader {
            kind: ContainerKind::Model,
            directionality: Some(Directionality::Bidirectional),
            rows: 3,
            cols: 4,
            rank: 0,
            truth_len: 0,
            fingerprint: fp(7),
            rpm: 600.0,
            snr_db: 30.0,
        };
        let b = h.to_bytes();
        assert_eq!(&b[0..4], b"PHCM");
        assert_eq!(ContainerHeader::from_bytes(&b).unwrap(), h);
    }

    #[test]
    fn measurements_round_trip_at_f32() {
        let m = MeasurementSet {
            y: vec![c(0.5, -0.25), c(1.0, 2.0), c(-3.0, 0.125)],
            truth: Some(vec![c(1.0, 0.0), c(0.0, 1.0)]),
            rpm: 600.0,
            snr_db: f64::INFINITY,
            fingerprint: fp(3),
        };
        let mut buf = Vec::new();
        write_measurements(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 5 * 8);
        assert_eq!(read_measurements(&mut buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn wrong_kind_and_truncation_rejected() {
        let m = MeasurementSet { y: vec![c(1.0, 0.0)], truth: None, rpm: 1.0, snr_db: 0.0, fingerprint: fp(0) };
        let mut buf = Vec::new();
        write_measurements(&mut buf, &m).unwrap();
        assert!(matches!(read_factorization(&mut buf.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_measurements(&mut &buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_measurements(&mut long.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_measurements(&mut bad.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn stored_factorization_is_a_fixed_point() {
        let a = CMatrix::from_fn(6, 4, |r, k| c((r as f64 + 1.0).ln() * (k as f64 + 0.5), (r * k) as f64 * 0.1));
        let f = factorize_matrix(&a, fp(9)).unwrap();
        let once = stored_precision(&f).unwrap();
        assert_eq!(stored_precision(&once).unwrap(), once);
        assert!((once.s[0] - f.s[0]).abs() < 1e-6 * f.s[0]);
    }

    #[test]
    fn csv_uses_crlf_and_quotes() {
        let mut out = Vec::new();
        write_table(&mut out, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b\r\n1,\"x,y\"\r\n");
    }

    #[test]
    fn image_csv_round_trip() {
        let grid = build_scene_grid(5.0, -1.0, 1.0, 0.5, &[0.0, 2.0]).unwrap();
        let v: Vec<f64> = (0..grid.len()).map(|i| i as f64 * 0.1).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.csv");
        save_image_csv(&p, &grid, &v).unwrap();
        assert_eq!(load_image_csv(&p, &grid).unwrap(), v);
        let other = build_scene_grid(5.0, -1.0, 1.5, 0.5, &[0.0, 2.0]).unwrap();
        assert!(matches!(load_image_csv(&p, &other), Err(Error::Mismatch(_))));
    }

    #[test]
    fn pgm_layout_and_clamp() {
        let grid = build_scene_grid(5.0, 0.0, 2.0, 1.0, &[0.0, 1.0]).unwrap();
        // bottom row (el 0): 0, 0.55, 1 of peak; top row all tiny
        let v = vec![0.0, 0.55, 1.0, 0.01, 0.02, 0.03];
        let mut out = Vec::new();
        write_pgm(&mut out, &grid, &v).unwrap();
        let head = b"P5\n3 2\n255\n";
        assert_eq!(&out[..head.len()], head);
        assert_eq!(&out[head.len()..], &[0, 0, 0, 0, 128, 255]);
    }
}
