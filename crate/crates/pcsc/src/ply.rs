//! ASCII PLY reader/writer for xyz point clouds.
//!
//! Written files use `element vertex` with `property float x/y/z` and round
//! trip losslessly at 32-bit float precision, point order preserved. The
//! reader accepts extra vertex properties (normals, colors) and ignores
//! them; every parse error carries the offending line number.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl PlyError {
    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        PlyError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PlyError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes points as ASCII PLY. Coordinates are emitted with enough digits to
/// reproduce the exact f32 values on read-back.
pub fn write_cloud(path: &Path, points: &[[f32; 3]]) -> Result<(), PlyError> {
    let mut out = String::with_capacity(64 + points.len() * 24);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", points.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in points {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    // Write-temp-then-rename so concurrent readers never see partial files.
    let tmp = path.with_extension("ply.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| PlyError::io(&tmp, e))?;
    f.write_all(out.as_bytes()).map_err(|e| PlyError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| PlyError::io(path, e))?;
    Ok(())
}

/// Reads an ASCII PLY file, returning the xyz coordinates of its vertices.
pub fn read_cloud(path: &Path) -> Result<Vec<[f32; 3]>, PlyError> {
    let text = fs::read_to_string(path).map_err(|e| PlyError::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let mut next_line = || lines.next().map(|(i, l)| (i + 1, l.trim()));

    match next_line() {
        Some((_, "ply")) => {}
        Some((n, other)) => {
            return Err(PlyError::parse(path, n, format!("expected 'ply', got '{other}'")))
        }
        None => return Err(PlyError::parse(path, 1, "empty file")),
    }
    match next_line() {
        Some((_, "format ascii 1.0")) => {}
        Some((n, other)) => {
            return Err(PlyError::parse(
                path,
                n,
                format!("unsupported format line '{other}' (only 'format ascii 1.0')"),
            ))
        }
        None => return Err(PlyError::parse(path, 2, "truncated header")),
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex_element = false;
    // Column index within a vertex row for each coordinate.
    let mut col = 0usize;
    let mut xyz_cols: [Option<usize>; 3] = [None, None, None];

    let header_end_line = loop {
        let (n, line) = match next_line() {
            Some(v) => v,
            None => return Err(PlyError::parse(path, 0, "header missing end_header")),
        };
        if line == "end_header" {
            break n;
        }
        if line.starts_with("comment") || line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("element") => {
                let kind = tok
                    .next()
                    .ok_or_else(|| PlyError::parse(path, n, "element without a name"))?;
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| PlyError::parse(path, n, "element without a count"))?;
                if kind == "vertex" {
                    if vertex_count.is_some() {
                        return Err(PlyError::parse(path, n, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                    col = 0;
                } else {
                    if vertex_count.is_none() {
                        return Err(PlyError::parse(
                            path,
                            n,
                            format!("unsupported leading element '{kind}'"),
                        ));
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue;
                }
                let ty = tok
                    .next()
                    .ok_or_else(|| PlyError::parse(path, n, "property without a type"))?;
                if ty == "list" {
                    return Err(PlyError::parse(path, n, "list property on vertex element"));
                }
                let name = tok
                    .next()
                    .ok_or_else(|| PlyError::parse(path, n, "property without a name"))?;
                let slot = match name {
                    "x" => Some(0),
                    "y" => Some(1),
                    "z" => Some(2),
                    _ => None,
                };
                if let Some(slot) = slot {
                    if !matches!(ty, "float" | "float32" | "double" | "float64") {
                        return Err(PlyError::parse(
                            path,
                            n,
                            format!("coordinate '{name}' has non-float type '{ty}'"),
                        ));
                    }
                    xyz_cols[slot] = Some(col);
                }
                col += 1;
            }
            Some(other) => {
                return Err(PlyError::parse(path, n, format!("unknown header keyword '{other}'")))
            }
            None => {}
        }
    };

    let vertex_count =
        vertex_count.ok_or_else(|| PlyError::parse(path, header_end_line, "no vertex element"))?;
    let cols = [
        xyz_cols[0].ok_or_else(|| PlyError::parse(path, header_end_line, "missing property x"))?,
        xyz_cols[1].ok_or_else(|| PlyError::parse(path, header_end_line, "missing property y"))?,
        xyz_cols[2].ok_or_else(|| PlyError::parse(path, header_end_line, "missing property z"))?,
    ];

    let mut points = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let (n, line) = match next_line() {
            Some(v) => v,
            None => {
                return Err(PlyError::parse(
                    path,
                    header_end_line,
                    format!("body truncated: expected {vertex_count} vertices, got {}", points.len()),
                ))
            }
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let mut p = [0f32; 3];
        for (slot, &c) in cols.iter().enumerate() {
            let field = fields.get(c).ok_or_else(|| {
                PlyError::parse(path, n, format!("vertex row has only {} fields", fields.len()))
            })?;
            p[slot] = field
                .parse::<f32>()
                .map_err(|_| PlyError::parse(path, n, format!("bad float '{field}'")))?;
        }
        points.push(p);
    }
    Ok(points)
}
