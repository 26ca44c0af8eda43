//! Matrix files and polytope JSON documents.
//!
//! Matrices are stored either as CSV (first line `# rows,cols`, then one
//! comma-separated row per line) or as raw little-endian `f64` with an
//! 8-byte header of two `u32` (rows, cols) followed by row-major data. The
//! format is chosen by the file extension.
//!
//! Polytope documents look like
//!
//! ```json
//! {"dim": 3, "kind": "special", "special": "binf"}
//! {"dim": 2, "kind": "hform", "normals": [[1, 0], [-1, 0], [0, 1], [0, -1]], "offsets": [1, 1, 1, 1]}
//! {"dim": 2, "kind": "vform", "vertices": [[0, 0], [1, 0], [0, 1]]}
//! {"dim": 3, "kind": "featurespec", "constraints": [{"type": "box", "index": 0, "lo": -1, "hi": 1}]}
//! ```
//!
//! with an optional `"mvie": {"c": [[..]], "g": [..]}` sidecar. V-form
//! vertices are listed one point per entry.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::serde_rows;
use crate::mvie::Ellipsoid;
use crate::polytope::{FeatureConstraint, FeatureSpec, HalfspaceForm, Polytope, Representation, SpecialKind, VertexForm};
use crate::{Matrix, Vector};

/// Reads a `.csv` or `.f64` matrix file.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    match extension(path).as_str() {
        "csv" => read_csv(path),
        "f64" => read_f64(path),
        other => Err(Error::InvalidInput(format!("unsupported matrix extension '{other}' ({})", path.display()))),
    }
}

/// Writes a matrix, choosing the format from the extension.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    match extension(path).as_str() {
        "csv" => write_csv(path, m),
        "f64" => write_f64(path, m),
        other => Err(Error::InvalidInput(format!("unsupported matrix extension '{other}' ({})", path.display()))),
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

pub fn write_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# {},{}", m.nrows(), m.ncols())?;
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        for i in 0..m.nrows() {
            w.write_record(m.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let shape = text
        .lines()
        .next()
        .and_then(|l| l.trim().strip_prefix('#'))
        .map(parse_shape)
        .transpose()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number '{f}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = serde_rows::from_rows(&rows).ok_or_else(|| Error::InvalidInput("ragged CSV rows".into()))?;
    if let Some((r, c)) = shape {
        if (r, c) != m.shape() {
            return Err(Error::InvalidInput(format!(
                "CSV header says {r}x{c} but the file holds {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(m)
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidInput(format!("bad CSV shape header '{s}'"));
    let (r, c) = s.trim().split_once(',').ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

pub fn write_f64(path: &Path, m: &Matrix) -> Result<()> {
    let (r, c) = m.shape();
    let r32 = u32::try_from(r).map_err(|_| Error::InvalidInput("too many rows for .f64".into()))?;
    let c32 = u32::try_from(c).map_err(|_| Error::InvalidInput("too many columns for .f64".into()))?;
    let mut buf = Vec::with_capacity(8 + 8 * r * c);
    buf.extend_from_slice(&r32.to_le_bytes());
    buf.extend_from_slice(&c32.to_le_bytes());
    for i in 0..r {
        for j in 0..c {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_f64(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::InvalidInput("truncated .f64 header".into()));
    }
    let r = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let c = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != 8 * r * c {
        return Err(Error::InvalidInput(format!(
            ".f64 payload has {} bytes, expected {} for {r}x{c}",
            body.len(),
            8 * r * c
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Ok(Matrix::from_row_slice(r, c, &data))
}

/// JSON document describing a polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeDoc {
    pub dim: usize,
    #[serde(flatten)]
    pub body: PolytopeBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mvie: Option<Ellipsoid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolytopeBody {
    Special { special: SpecialKind },
    Hform { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    Vform { vertices: Vec<Vec<f64>> },
    Featurespec { constraints: Vec<FeatureConstraint> },
}

impl PolytopeDoc {
    pub fn from_polytope(p: &Polytope, mvie: Option<Ellipsoid>) -> Self {
        let body = if let Some(kind) = p.special_kind() {
            PolytopeBody::Special { special: kind }
        } else {
            match p.representation() {
                Representation::Halfspace(h) => PolytopeBody::Hform {
                    normals: serde_rows::to_rows(h.normals()),
                    offsets: h.offsets().iter().copied().collect(),
                },
                Representation::Vertex(v) => PolytopeBody::Vform {
                    vertices: serde_rows::to_rows(&v.vertices().transpose()),
                },
                Representation::Feature(f) => PolytopeBody::Featurespec { constraints: f.constraints.clone() },
            }
        };
        Self { dim: p.dim(), body, mvie }
    }

    pub fn to_polytope(&self) -> Result<Polytope> {
        let p = match &self.body {
            PolytopeBody::Special { special } => Polytope::special(*special, self.dim)?,
            PolytopeBody::Hform { normals, offsets } => {
                let a = matrix_from_rows(normals, self.dim, "normals")?;
                Polytope::from_halfspaces(HalfspaceForm::new(a, Vector::from_column_slice(offsets))?)
            }
            PolytopeBody::Vform { vertices } => {
                let v = matrix_from_rows(vertices, self.dim, "vertices")?;
                Polytope::from_vertices(VertexForm::new(v.transpose())?)
            }
            PolytopeBody::Featurespec { constraints } => {
                Polytope::from_feature_spec(FeatureSpec::new(self.dim, constraints.clone())?)?
            }
        };
        if let Some(e) = &self.mvie {
            if e.dim() != self.dim {
                return Err(Error::InvalidInput("mvie sidecar has the wrong dimension".into()));
            }
        }
        Ok(p)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<Matrix> {
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput(format!("every entry of '{what}' must have {dim} numbers")));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("'{what}' is empty")));
    }
    serde_rows::from_rows(rows).ok_or_else(|| Error::InvalidInput(format!("ragged '{what}'")))
}

pub fn read_polytope(path: &Path) -> Result<(Polytope, Option<Ellipsoid>)> {
    let doc: PolytopeDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok((doc.to_polytope()?, doc.mvie))
}

pub fn write_polytope(path: &Path, p: &Polytope, mvie: Option<Ellipsoid>) -> Result<()> {
    let doc = PolytopeDoc::from_polytope(p, mvie);
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Resolves a command-line polytope argument: a special name (`binf`, `b1`,
/// `binfplus`, `b1plus`) with `dim`, `pex`, `hexagon`, or a path to a JSON
/// document.
pub fn resolve_polytope(arg: &str, dim: Option<usize>) -> Result<(Polytope, Option<Ellipsoid>)> {
    if arg.eq_ignore_ascii_case("pex") {
        return Ok((Polytope::pex(), None));
    }
    if arg.eq_ignore_ascii_case("hexagon") {
        let v = VertexForm::new(crate::checks::hexagon_vertices())?;
        return Ok((Polytope::from_vertices(v), None));
    }
    if let Ok(kind) = arg.parse::<SpecialKind>() {
        let r = dim.ok_or_else(|| Error::InvalidInput(format!("'{arg}' needs a dimension (--dim or --rank)")))?;
        return Ok((Polytope::special(kind, r)?, None));
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::InvalidInput(format!("'{arg}' is neither a known polytope nor a readable file")));
    }
    let (p, e) = read_polytope(path)?;
    if let Some(r) = dim {
        if r != p.dim() {
            return Err(Error::InvalidInput(format!("polytope file has dimension {}, expected {r}", p.dim())));
        }
    }
    Ok((p, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
