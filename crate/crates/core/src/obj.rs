//! Wavefront OBJ subset: `v`, `vn`, `f` (fan-triangulated) and `l` records.
//! Other record types (`o`, `g`, `vt`, `s`, `usemtl`, ...) are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::TriMesh;

#[derive(Debug, Error)]
pub enum ObjError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError::Parse {
        line,
        message: message.into(),
    }
}

/// Parsed OBJ content. `lines` holds polyline segments as vertex index pairs.
#[derive(Debug, Clone, Default)]
pub struct ObjData {
    pub mesh: TriMesh,
    pub lines: Vec<[usize; 2]>,
    pub objects: Vec<String>,
}

fn resolve_index(token: &str, count: usize, line: usize) -> Result<usize, ObjError> {
    let raw: i64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("bad index {token:?}")))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        return Err(parse_err(line, "index 0 is invalid"));
    };
    if idx < 0 || idx as usize >= count {
        return Err(parse_err(line, format!("index {raw} out of range")));
    }
    Ok(idx as usize)
}

fn parse_vec3<'a>(mut it: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec3, ObjError> {
    let mut v = [0.0; 3];
    for c in &mut v {
        let tok = it.next().ok_or_else(|| parse_err(line, "expected 3 coordinates"))?;
        *c = tok
            .parse()
            .map_err(|_| parse_err(line, format!("bad coordinate {tok:?}")))?;
    }
    Ok(Vec3::from(v))
}

pub fn parse_obj(text: &str) -> Result<ObjData, ObjError> {
    let mut data = ObjData::default();
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        let mut it = content.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => data.mesh.vertices.push(parse_vec3(it, line)?),
            "vn" => data.mesh.normals.push(parse_vec3(it, line)?),
            "f" => {
                let count = data.mesh.vertices.len();
                let idx = it
                    .map(|t| resolve_index(t.split('/').next().unwrap_or(""), count, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(line, "face needs at least 3 vertices"));
                }
                for w in 1..idx.len() - 1 {
                    data.mesh.triangles.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            "l" => {
                let count = data.mesh.vertices.len();
                let idx = it
                    .map(|t| resolve_index(t.split('/').next().unwrap_or(""), count, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 2 {
                    return Err(parse_err(line, "line needs at least 2 vertices"));
                }
                data.lines.extend(idx.windows(2).map(|w| [w[0], w[1]]));
            }
            "o" => data.objects.push(it.collect::<Vec<_>>().join(" ")),
            _ => {}
        }
    }
    Ok(data)
}

pub fn read_obj(path: &Path) -> Result<ObjData, ObjError> {
    let text = fs::read_to_string(path).map_err(|source| ObjError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_obj(&text)
}

/// Incremental OBJ text builder; indices passed in are 0-based and global.
#[derive(Debug, Default)]
pub struct ObjWriter {
    out: String,
    vertices: usize,
}

impl ObjWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.out, "# {text}");
    }

    pub fn object(&mut self, name: &str) {
        let _ = writeln!(self.out, "o {name}");
    }

    /// Returns the 0-based index of the new vertex.
    pub fn vertex(&mut self, v: &Vec3) -> usize {
        let _ = writeln!(self.out, "v {} {} {}", v.x, v.y, v.z);
        self.vertices += 1;
        self.vertices - 1
    }

    pub fn face(&mut self, idx: &[usize]) {
        self.out.push('f');
        for i in idx {
            let _ = write!(self.out, " {}", i + 1);
        }
        self.out.push('\n');
    }

    pub fn line(&mut self, a: usize, b: usize) {
        let _ = writeln!(self.out, "l {} {}", a + 1, b + 1);
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub fn mesh_to_obj(mesh: &TriMesh) -> String {
    let mut w = ObjWriter::new();
    write_mesh(&mut w, mesh);
    w.finish()
}

pub fn write_mesh(w: &mut ObjWriter, mesh: &TriMesh) {
    let base = w.vertex_count();
    for v in &mesh.vertices {
        w.vertex(v);
    }
    for t in &mesh.triangles {
        w.face(&[base + t[0], base + t[1], base + t[2]]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_is_fan_triangulated() {
        let text = "o quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
        let d = parse_obj(text).unwrap();
        assert_eq!(d.mesh.vertices.len(), 4);
        assert_eq!(d.mesh.normals.len(), 1);
        assert_eq!(d.mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(d.objects, vec!["quad".to_string()]);
    }

    #[test]
    fn negative_indices_and_lines() {
        let d = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\nl 1 2 3\n").unwrap();
        assert_eq!(d.mesh.triangles, vec![[0, 1, 2]]);
        assert_eq!(d.lines, vec![[0, 1], [1, 2]]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_obj("v 0 0 0\nf 1 2 3\n") {
            Err(ObjError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_obj("v 0 x 0\n").is_err());
    }

    #[test]
    fn writer_round_trip() {
        let mesh = TriMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            normals: vec![],
            triangles: vec![[0, 1, 2]],
        };
        let back = parse_obj(&mesh_to_obj(&mesh)).unwrap();
        assert_eq!(back.mesh.vertices, mesh.vertices);
        assert_eq!(back.mesh.triangles, mesh.triangles);
    }
}
