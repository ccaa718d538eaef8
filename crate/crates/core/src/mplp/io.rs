//! Versioned JSON document for explicit solutions.
//!
//! Matrices are arrays of rows. Floats are written in scientific notation
//! with 17 significant digits, so loading reproduces every value bit for bit.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use super::geometry::{self, Poly, RowKind};
use super::{CriticalRegion, MpError, MpLp, MpSolution, MIN_RADIUS};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    theta_dim: usize,
    x_dim: usize,
    problem: ProblemDoc,
    regions: Vec<RegionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct ProblemDoc {
    c: Vec<f64>,
    H: Vec<Vec<f64>>,
    A: Vec<Vec<f64>>,
    b: Vec<f64>,
    F: Vec<Vec<f64>>,
    A_eq: Vec<Vec<f64>>,
    b_eq: Vec<f64>,
    F_eq: Vec<Vec<f64>>,
    A_theta: Vec<Vec<f64>>,
    b_theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RegionDoc {
    E: Vec<Vec<f64>>,
    f: Vec<f64>,
    A_aff: Vec<Vec<f64>>,
    b_aff: Vec<f64>,
    G: Vec<Vec<f64>>,
    g: Vec<f64>,
    active_set: Vec<usize>,
    cheb_center: Vec<f64>,
    cheb_radius: f64,
}

struct Precise;

impl Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn save_mp<W: Write>(sol: &MpSolution, sink: W) -> Result<(), MpError> {
    let p = &sol.problem;
    let doc = Document {
        format_version: FORMAT_VERSION,
        theta_dim: sol.theta_dim(),
        x_dim: sol.x_dim(),
        problem: ProblemDoc {
            c: vec(&p.c),
            H: rows(&p.h),
            A: rows(&p.a),
            b: vec(&p.b),
            F: rows(&p.f),
            A_eq: rows(&p.a_eq),
            b_eq: vec(&p.b_eq),
            F_eq: rows(&p.f_eq),
            A_theta: rows(&p.a_theta),
            b_theta: vec(&p.b_theta),
        },
        regions: sol
            .regions
            .iter()
            .map(|r| RegionDoc {
                E: rows(&r.e),
                f: vec(&r.f),
                A_aff: rows(&r.a_aff),
                b_aff: vec(&r.b_aff),
                G: rows(&r.dual_g),
                g: vec(&r.dual_c),
                active_set: r.active_set.clone(),
                cheb_center: vec(&r.cheb_center),
                cheb_radius: r.cheb_radius,
            })
            .collect(),
    };
    let mut ser = serde_json::Serializer::with_formatter(sink, Precise);
    doc.serialize(&mut ser).map_err(|e| MpError::Format { path: String::new(), message: e.to_string() })?;
    ser.into_inner().flush()?;
    Ok(())
}

fn bad(path: impl Into<String>, message: impl Into<String>) -> MpError {
    MpError::Format { path: path.into(), message: message.into() }
}

fn matrix(path: &str, data: &[Vec<f64>], nrows: Option<usize>, ncols: usize) -> Result<DMatrix<f64>, MpError> {
    if let Some(m) = nrows {
        if data.len() != m {
            return Err(bad(path, format!("expected {m} rows, found {}", data.len())));
        }
    }
    for (i, r) in data.iter().enumerate() {
        if r.len() != ncols {
            return Err(bad(format!("{path}[{i}]"), format!("expected {ncols} columns, found {}", r.len())));
        }
    }
    Ok(DMatrix::from_fn(data.len(), ncols, |i, j| data[i][j]))
}

fn vector(path: &str, data: &[f64], len: usize) -> Result<DVector<f64>, MpError> {
    if data.len() != len {
        return Err(bad(path, format!("expected {len} entries, found {}", data.len())));
    }
    Ok(DVector::from_column_slice(data))
}

pub fn load_mp<R: Read>(source: R) -> Result<MpSolution, MpError> {
    let mut de = serde_json::Deserializer::from_reader(source);
    let doc: Document = serde_path_to_error::deserialize(&mut de).map_err(|e| bad(e.path().to_string(), e.inner().to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(bad("format_version", format!("unsupported version {}, expected {FORMAT_VERSION}", doc.format_version)));
    }
    let (n, q) = (doc.x_dim, doc.theta_dim);
    let pd = &doc.problem;
    let m = pd.A.len();
    let me = pd.A_eq.len();
    let problem = MpLp {
        c: vector("problem.c", &pd.c, n)?,
        h: matrix("problem.H", &pd.H, Some(n), q)?,
        a: matrix("problem.A", &pd.A, None, n)?,
        b: vector("problem.b", &pd.b, m)?,
        f: matrix("problem.F", &pd.F, Some(m), q)?,
        a_eq: matrix("problem.A_eq", &pd.A_eq, None, n)?,
        b_eq: vector("problem.b_eq", &pd.b_eq, me)?,
        f_eq: matrix("problem.F_eq", &pd.F_eq, Some(me), q)?,
        a_theta: matrix("problem.A_theta", &pd.A_theta, None, q)?,
        b_theta: vector("problem.b_theta", &pd.b_theta, pd.A_theta.len())?,
    };
    problem.validate().map_err(|e| bad("problem", e.to_string()))?;
    problem.theta_bounds().map_err(|e| bad("problem.A_theta", e.to_string()))?;

    if doc.regions.is_empty() {
        return Err(bad("regions", "a solution holds at least one region"));
    }
    let mut regions = Vec::with_capacity(doc.regions.len());
    for (v, rd) in doc.regions.iter().enumerate() {
        let path = |field: &str| format!("regions[{v}].{field}");
        let k = rd.active_set.len();
        let e = matrix(&path("E"), &rd.E, None, q)?;
        let f = vector(&path("f"), &rd.f, rd.E.len())?;
        for i in 0..e.nrows() {
            if (e.row(i).norm() - 1.0).abs() > 1e-9 {
                return Err(bad(format!("{}[{i}]", path("E")), "row is not unit length"));
            }
        }
        if rd.active_set.iter().any(|&i| i >= m + me) || rd.active_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad(path("active_set"), "indices must be increasing and refer to existing rows"));
        }
        if rd.cheb_radius.is_nan() || rd.cheb_radius <= MIN_RADIUS {
            return Err(bad(path("cheb_radius"), format!("radius {} is not above {MIN_RADIUS}", rd.cheb_radius)));
        }
        let center = vector(&path("cheb_center"), &rd.cheb_center, q)?;
        let mut poly = Poly::default();
        for i in 0..e.nrows() {
            poly.push(e.row(i).iter().copied().collect(), f[i], RowKind::Cut);
        }
        if !poly.contains(center.as_slice(), 1e-9) {
            return Err(bad(path("cheb_center"), "center lies outside the region"));
        }
        let (bbox_lo, bbox_hi) = geometry::bounding_box(&poly, q);
        regions.push(CriticalRegion {
            e,
            f,
            a_aff: matrix(&path("A_aff"), &rd.A_aff, Some(n), q)?,
            b_aff: vector(&path("b_aff"), &rd.b_aff, n)?,
            dual_g: matrix(&path("G"), &rd.G, Some(k), q)?,
            dual_c: vector(&path("g"), &rd.g, k)?,
            active_set: rd.active_set.clone(),
            cheb_center: center,
            cheb_radius: rd.cheb_radius,
            bbox_lo,
            bbox_hi,
        });
    }
    Ok(MpSolution { problem, regions })
}
