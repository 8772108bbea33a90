//! Edge and covariate files.
//!
//! Edge file: header `i1,...,iD,y`, one integer row per cell with `y ≥ 0`.
//! Lines starting with `#` are comments; `# dims=n1,...,nD` fixes the grid,
//! otherwise each dimension is the largest node id seen in it.
//!
//! Covariate file: header `i1,...,iD,x1,...,xp`, one row per edge.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::covariates::{DenseCovariates, SparseCovariates};
use crate::error::{file_error, PolyadsError, Result};
use crate::graph::{EdgeIndex, SparseCountGraph};

/// Parsed edge file.
#[derive(Clone, Debug)]
pub struct EdgeTable {
    pub dims: Vec<u32>,
    pub edges: Vec<(Vec<u32>, u64)>,
}

impl EdgeTable {
    pub fn into_graph(self) -> Result<SparseCountGraph> {
        SparseCountGraph::new(&self.dims, self.edges)
    }
}

fn reader(source: &str, input: impl Read) -> csv::Reader<impl Read> {
    let _ = source;
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input)
}

fn csv_error(source: &str, e: csv::Error) -> PolyadsError {
    let location = match e.position() {
        Some(p) => format!("{source}:{}", p.line()),
        None => source.to_string(),
    };
    PolyadsError::parse(location, e.to_string())
}

fn check_index_header(source: &str, header: &csv::StringRecord, d: usize) -> Result<()> {
    for k in 0..d {
        let want = format!("i{}", k + 1);
        if header.get(k) != Some(want.as_str()) {
            return Err(PolyadsError::parse(
                format!("{source}:1"),
                format!(
                    "column {} must be named {want}, found {:?}",
                    k + 1,
                    header.get(k).unwrap_or("")
                ),
            ));
        }
    }
    Ok(())
}

fn parse_node(source: &str, line: u64, field: &str) -> Result<u32> {
    match field.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(PolyadsError::parse(
            format!("{source}:{line}"),
            format!("node id {field:?} is not a positive integer"),
        )),
    }
}

/// Extracts `# dims=...` from comment lines.
fn dims_comment(text: &str, source: &str) -> Result<Option<Vec<u32>>> {
    for (k, line) in text.lines().enumerate() {
        let Some(rest) = line.trim().strip_prefix('#') else {
            continue;
        };
        if let Some(list) = rest.trim().strip_prefix("dims=") {
            let dims = list
                .split(',')
                .map(|v| v.trim().parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| {
                    PolyadsError::parse(format!("{source}:{}", k + 1), format!("bad dims: {e}"))
                })?;
            return Ok(Some(dims));
        }
    }
    Ok(None)
}

pub fn parse_edges(text: &str, source: &str) -> Result<EdgeTable> {
    let declared = dims_comment(text, source)?;
    let mut rdr = reader(source, text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    if header.len() < 3 || header.get(header.len() - 1) != Some("y") {
        return Err(PolyadsError::parse(
            format!("{source}:1"),
            "header must be i1,...,iD,y with D ≥ 2",
        ));
    }
    let d = header.len() - 1;
    check_index_header(source, &header, d)?;
    let mut edges = Vec::new();
    let mut maxima = vec![0u32; d];
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(source, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let mut coords = Vec::with_capacity(d);
        for k in 0..d {
            let c = parse_node(source, line, &row[k])?;
            maxima[k] = maxima[k].max(c);
            coords.push(c);
        }
        let y = row[d].parse::<u64>().map_err(|_| {
            PolyadsError::parse(
                format!("{source}:{line}"),
                format!("count {:?} is not a nonnegative integer", &row[d]),
            )
        })?;
        edges.push((coords, y));
    }
    let dims = match declared {
        Some(dims) => {
            if dims.len() != d {
                return Err(PolyadsError::parse(
                    source.to_string(),
                    format!(
                        "dims comment lists {} dimensions, header has {d}",
                        dims.len()
                    ),
                ));
            }
            dims
        }
        None => maxima.iter().map(|&m| m.max(1)).collect(),
    };
    Ok(EdgeTable { dims, edges })
}

pub fn read_edges(path: &Path) -> Result<EdgeTable> {
    let text = std::fs::read_to_string(path).map_err(file_error(path))?;
    parse_edges(&text, &path.display().to_string())
}

pub fn parse_covariates(
    input: impl Read,
    source: &str,
    d: usize,
) -> Result<(Vec<String>, SparseCovariates)> {
    let mut rdr = reader(source, input);
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    if header.len() <= d {
        return Err(PolyadsError::parse(
            format!("{source}:1"),
            format!("header must be i1,...,i{d},x1,...,xp with p ≥ 1"),
        ));
    }
    check_index_header(source, &header, d)?;
    let names: Vec<String> = header.iter().skip(d).map(str::to_string).collect();
    let p = names.len();
    let mut cov = SparseCovariates::new(p);
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(source, e))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != d + p {
            return Err(PolyadsError::parse(
                format!("{source}:{line}"),
                format!("expected {} fields, found {}", d + p, row.len()),
            ));
        }
        let coords = (0..d)
            .map(|k| parse_node(source, line, &row[k]))
            .collect::<Result<Vec<_>>>()?;
        let x = (d..d + p)
            .map(|k| {
                row[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        PolyadsError::parse(
                            format!("{source}:{line}"),
                            format!("{:?} is not a finite number", &row[k]),
                        )
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        cov.insert(EdgeIndex::from(coords), x)
            .map_err(|e| PolyadsError::parse(format!("{source}:{line}"), e.to_string()))?;
    }
    Ok((names, cov))
}

pub fn read_covariates(path: &Path, d: usize) -> Result<(Vec<String>, SparseCovariates)> {
    let file = File::open(path).map_err(file_error(path))?;
    parse_covariates(BufReader::new(file), &path.display().to_string(), d)
}

fn index_header(d: usize) -> String {
    (1..=d)
        .map(|k| format!("i{k}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_edges(graph: &SparseCountGraph, mut out: impl Write) -> Result<()> {
    let dims: Vec<String> = graph.dims().iter().map(|n| n.to_string()).collect();
    writeln!(out, "# dims={}", dims.join(","))?;
    writeln!(out, "{},y", index_header(graph.d()))?;
    for (e, y) in graph.edges() {
        let coords: Vec<String> = e.iter().map(|c| c.to_string()).collect();
        writeln!(out, "{},{y}", coords.join(","))?;
    }
    Ok(())
}

/// Writes every cell of a dense provider.
pub fn write_dense_covariates(
    cov: &DenseCovariates,
    names: &[String],
    mut out: impl Write,
) -> Result<()> {
    let dims = cov.dims();
    let d = dims.len();
    writeln!(out, "{},{}", index_header(d), names.join(","))?;
    let p = names.len();
    let mut coords = vec![1u32; d];
    for chunk in cov.values().chunks(p.max(1)) {
        let c: Vec<String> = coords.iter().map(|v| v.to_string()).collect();
        let x: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{},{}", c.join(","), x.join(","))?;
        for k in (0..d).rev() {
            if coords[k] < dims[k] {
                coords[k] += 1;
                break;
            }
            coords[k] = 1;
        }
    }
    Ok(())
}

/// Rows `(beta, var)` for meta-analysis.
pub fn read_meta_rows(path: &Path) -> Result<Vec<(f64, f64)>> {
    let source = path.display().to_string();
    let file = File::open(path).map_err(file_error(path))?;
    let mut rdr = reader(&source, BufReader::new(file));
    let header = rdr.headers().map_err(|e| csv_error(&source, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(bi), Some(vi)) = (col("beta"), col("var")) else {
        return Err(PolyadsError::parse(
            format!("{source}:1"),
            "header must contain beta and var",
        ));
    };
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(&source, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |k: usize| {
            row.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    PolyadsError::parse(
                        format!("{source}:{line}"),
                        format!("field {} is not a number", k + 1),
                    )
                })
        };
        rows.push((num(bi)?, num(vi)?));
    }
    Ok(rows)
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let source = path.display().to_string();
    let file = BufReader::new(File::open(path).map_err(file_error(path))?);
    let mut out = Vec::new();
    for (k, line) in file.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((key, value)) = t.split_once('=') else {
            return Err(PolyadsError::parse(
                format!("{source}:{}", k + 1),
                "expected key=value",
            ));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::CovariateProvider;

    #[test]
    fn edges_round_trip() {
        let g = SparseCountGraph::new(&[3, 4], [([1, 2], 5u64), ([3, 4], 1)]).unwrap();
        let mut buf = Vec::new();
        write_edges(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = parse_edges(&text, "mem").unwrap();
        assert_eq!(back.dims, vec![3, 4]);
        assert!(back.into_graph().unwrap().edges().eq(g.edges()));
    }

    #[test]
    fn dims_inferred_without_comment() {
        let t = parse_edges("i1,i2,i3,y\n1,2,3,4\n2,1,1,0\n", "mem").unwrap();
        assert_eq!(t.dims, vec![2, 2, 3]);
        assert_eq!(t.into_graph().unwrap().num_edges(), 1);
    }

    #[test]
    fn bad_rows_report_line() {
        let err = parse_edges("i1,i2,y\n1,2,3\n1,x,3\n", "f.csv").unwrap_err();
        match err {
            PolyadsError::Parse { location, .. } => assert_eq!(location, "f.csv:3"),
            e => panic!("{e}"),
        }
        assert!(parse_edges("a,b,y\n", "f").is_err());
        assert!(parse_edges("i1,i2,y\n1,2,-1\n", "f").is_err());
    }

    #[test]
    fn covariate_file() {
        let (names, cov) =
            parse_covariates("i1,i2,dist,same\n1,1,0.5,1\n2,1,1.5,0\n".as_bytes(), "c", 2).unwrap();
        assert_eq!(names, vec!["dist", "same"]);
        let mut out = [0.0; 2];
        assert!(cov.fill(&[2, 1], &mut out));
        assert_eq!(out, [1.5, 0.0]);
        assert!(!cov.fill(&[2, 2], &mut out));
        assert!(parse_covariates("i1,i2,x\n1,1,nan\n".as_bytes(), "c", 2).is_err());
    }
}
