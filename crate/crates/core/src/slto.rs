//! Checks that a unitary is a semi-local thermal operation: it conserves
//! total energy, conserves the weighted bath energy `β₁H₁ + β₂H₂`, and fixes
//! the semi-Gibbs state of the baths.
//!
//! Matrices are exchanged as text. The first line is
//! `dim=<N> layout=d1,d2,.. [baths=i,j]`, followed by `N` rows of `N`
//! whitespace-separated complex entries written `re+imj` (parentheses,
//! pure real and pure imaginary entries are accepted).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{
    commutator_norm, partial_trace, DensityMatrix, Operator, Spectrum, SubsystemLayout, C64, PHYSICS_TOL,
};

/// Energies closer than this are treated as one sector.
const SECTOR_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    pub layout: SubsystemLayout,
    /// Factor indices of the two baths, if declared.
    pub baths: Option<(usize, usize)>,
    pub matrix: DMatrix<C64>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_real(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_error(line, format!("invalid number `{s}`")))
}

/// Parses one complex token such as `1.5-2e-3j`, `(0+1j)`, `-j` or `4`.
pub fn parse_complex(token: &str, line: usize) -> Result<C64> {
    let t = token.trim();
    let t = t.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(t);
    if t.is_empty() {
        return Err(parse_error(line, "empty matrix entry"));
    }
    let Some(body) = t.strip_suffix('j').or_else(|| t.strip_suffix('i')) else {
        return Ok(C64::new(parse_real(t, line)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |s: &str| -> Result<f64> {
        match s {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => parse_real(s, line),
        }
    };
    match split {
        Some(k) => Ok(C64::new(parse_real(&body[..k], line)?, imag(&body[k..])?)),
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}

fn parse_header(line: &str) -> Result<(usize, SubsystemLayout, Option<(usize, usize)>)> {
    let mut dim = None;
    let mut dims = None;
    let mut baths = None;
    for field in line.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_error(1, format!("malformed header field `{field}`")))?;
        let list = |v: &str| -> Result<Vec<usize>> {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_error(1, format!("invalid integer `{x}` in `{field}`")))
                })
                .collect()
        };
        match key {
            "dim" => {
                dim = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| parse_error(1, format!("invalid dim `{value}`")))?,
                )
            }
            "layout" => dims = Some(list(value)?),
            "baths" => {
                let b = list(value)?;
                if b.len() != 2 {
                    return Err(parse_error(1, "baths must name exactly two factors"));
                }
                baths = Some((b[0], b[1]));
            }
            _ => return Err(parse_error(1, format!("unknown header field `{key}`"))),
        }
    }
    let dim = dim.ok_or_else(|| parse_error(1, "header is missing dim="))?;
    let layout = SubsystemLayout::new(dims.unwrap_or_else(|| vec![dim])).map_err(|e| parse_error(1, e.to_string()))?;
    if layout.total_dim() != dim {
        return Err(parse_error(
            1,
            format!("layout {:?} does not multiply to dim {dim}", layout.dims()),
        ));
    }
    if let Some((i, j)) = baths {
        if i == j || i >= layout.dims().len() || j >= layout.dims().len() {
            return Err(parse_error(
                1,
                format!("bath factors ({i}, {j}) are not two distinct layout factors"),
            ));
        }
    }
    Ok((dim, layout, baths))
}

/// Reads a matrix file. Blank lines and lines starting with `#` are skipped.
pub fn read_matrix(text: &str) -> Result<MatrixFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| parse_error(1, "empty matrix file"))?;
    let (dim, layout, baths) = parse_header(header)?;
    let mut matrix = DMatrix::<C64>::zeros(dim, dim);
    let mut rows = 0;
    for (lineno, line) in lines {
        if rows == dim {
            return Err(parse_error(lineno, format!("more than {dim} rows")));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != dim {
            return Err(parse_error(
                lineno,
                format!("expected {dim} entries, found {}", tokens.len()),
            ));
        }
        for (c, tok) in tokens.iter().enumerate() {
            matrix[(rows, c)] = parse_complex(tok, lineno)?;
        }
        rows += 1;
    }
    if rows != dim {
        return Err(parse_error(
            text.lines().count().max(1),
            format!("expected {dim} rows, found {rows}"),
        ));
    }
    Ok(MatrixFile { layout, baths, matrix })
}

/// Writes a matrix in the exchange format with round-trip exact entries.
pub fn write_matrix(matrix: &DMatrix<C64>, layout: &SubsystemLayout, baths: Option<(usize, usize)>) -> Result<String> {
    layout.check(matrix.nrows())?;
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::Shape("matrix must be square".into()));
    }
    let dims: Vec<String> = layout.dims().iter().map(|d| d.to_string()).collect();
    let mut out = format!("dim={} layout={}", matrix.nrows(), dims.join(","));
    if let Some((i, j)) = baths {
        let _ = write!(out, " baths={i},{j}");
    }
    out.push('\n');
    for r in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|c| {
                let z = matrix[(r, c)];
                format!(
                    "{:e}{}{:e}j",
                    z.re,
                    if z.im.is_sign_negative() { '-' } else { '+' },
                    z.im.abs()
                )
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Energy-sector structure of `U` with respect to a diagonal Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SectorStructure {
    pub sectors: usize,
    /// Largest `|U_ij|` between states of different sectors.
    pub leakage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SltoReport {
    pub dim: usize,
    pub unitarity_residual: f64,
    /// `‖[U, H₁ + H₂ + H_S]‖_max`.
    pub energy_residual: f64,
    /// `‖[U, β₁H₁ + β₂H₂]‖_max`.
    pub weighted_residual: f64,
    /// `‖Tr_rest(UγU†) - Tr_rest(γ)‖_max` with `γ ∝ e^{-β₁H₁-β₂H₂}`, the
    /// rest being every factor other than the baths (the full state when
    /// no baths are declared).
    pub fixed_point_residual: f64,
    pub energy_sectors: Option<SectorStructure>,
    pub weighted_sectors: Option<SectorStructure>,
    pub threshold: f64,
    pub passed: bool,
}

/// Inputs are full-space operators: `h1` and `h2` act on the two bath sides
/// and `hs` (optional) on the rest without a temperature weight.
pub struct SltoInputs<'a> {
    pub unitary: &'a Operator,
    pub h1: &'a Operator,
    pub h2: &'a Operator,
    pub hs: Option<&'a Operator>,
    pub layout: &'a SubsystemLayout,
    pub baths: Option<(usize, usize)>,
    pub beta1: f64,
    pub beta2: f64,
}

fn sector_structure(u: &Operator, h: &Operator) -> Option<SectorStructure> {
    if !h.is_diagonal() {
        return None;
    }
    let e: Vec<f64> = h.diagonal().iter().map(|z| z.re).collect();
    let mut sorted = e.clone();
    sorted.sort_by(f64::total_cmp);
    let sectors = 1 + sorted
        .windows(2)
        .filter(|w| w[1] - w[0] > SECTOR_TOL * w[0].abs().max(1.0))
        .count();
    let m = u.matrix();
    let mut leakage = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if (e[i] - e[j]).abs() > SECTOR_TOL * e[i].abs().max(1.0) {
                leakage = leakage.max(m[(i, j)].norm());
            }
        }
    }
    Some(SectorStructure { sectors, leakage })
}

pub fn verify_slto(inputs: &SltoInputs<'_>) -> Result<SltoReport> {
    let u = inputs.unitary;
    let dim = u.dim();
    inputs.layout.check(dim)?;
    for (name, h) in [("H1", inputs.h1), ("H2", inputs.h2)]
        .into_iter()
        .chain(inputs.hs.map(|h| ("HS", h)))
    {
        if h.dim() != dim {
            return Err(Error::Shape(format!(
                "{name} has dimension {}, unitary has {dim}",
                h.dim()
            )));
        }
        if !h.is_hermitian() {
            return Err(Error::NotHermitian {
                deviation: h.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max),
            });
        }
    }
    if !(inputs.beta1 > 0.0 && inputs.beta2 > 0.0) {
        return Err(Error::Argument("inverse temperatures must be positive".into()));
    }
    let mut total = inputs.h1.combine(1.0, inputs.h2, 1.0)?;
    if let Some(hs) = inputs.hs {
        total = total.combine(1.0, hs, 1.0)?;
    }
    let weighted = inputs.h1.combine(inputs.beta1, inputs.h2, inputs.beta2)?;
    let energy_residual = commutator_norm(u, &total)?;
    let weighted_residual = commutator_norm(u, &weighted)?;

    let spectrum = Spectrum::of(&weighted)?;
    let shift = spectrum.eigenvalues().first().copied().unwrap_or(0.0);
    let unnormalized = spectrum.apply_function(|x| (-(x - shift)).exp());
    let z: f64 = unnormalized.diagonal().iter().map(|d| d.re).sum();
    let gamma = DensityMatrix::new(unnormalized.matrix() / C64::new(z, 0.0))?;
    let evolved = gamma.conjugate(u)?;
    let fixed_point_residual = match inputs.baths {
        Some((i, j)) => {
            let keep = if i < j { [i, j] } else { [j, i] };
            let before = partial_trace(&gamma, inputs.layout, &keep)?;
            let after = partial_trace(&evolved, inputs.layout, &keep)?;
            (after.matrix() - before.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }
        None => (evolved.matrix() - gamma.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    };

    let unitarity_residual = u.unitarity_defect();
    let threshold = PHYSICS_TOL;
    let passed = [
        unitarity_residual,
        energy_residual,
        weighted_residual,
        fixed_point_residual,
    ]
    .iter()
    .all(|r| *r <= threshold);
    Ok(SltoReport {
        dim,
        unitarity_residual,
        energy_residual,
        weighted_residual,
        fixed_point_residual,
        energy_sectors: sector_structure(u, &total),
        weighted_sectors: sector_structure(u, &weighted),
        threshold,
        passed,
    })
}

/// Haar-distributed unitary from the QR decomposition of a complex Gaussian
/// matrix, with the phases of `R`'s diagonal moved into `Q`.
pub fn random_unitary(dim: usize, seed: u64) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<C64>::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for row in 0..dim {
            q[(row, c)] *= phase;
        }
    }
    Operator::new(q).expect("square matrix")
}
