//! MEDIT `.mesh` and TetGen `.node`/`.ele` readers, and the canonical MEDIT
//! writer.

use std::fmt::Write as _;
use std::path::Path;

use super::TetMesh;
use crate::{Error, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Medit,
    Tetgen,
}

/// Vertex coordinates and 0-based connectivity exactly as read from a file,
/// before any validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
}

impl RawMesh {
    pub fn into_mesh(self) -> Result<TetMesh> {
        TetMesh::new(self.vertices, self.tets)
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedFile(msg.into())
}

struct Tokens<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = &'a str> + 'a>>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = &'a str>> = Box::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace),
        );
        Tokens {
            inner: it.peekable(),
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        self.inner.next()
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next()
            .ok_or_else(|| malformed(format!("unexpected end of file, expected {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.expect(what)?;
        tok.parse()
            .map_err(|_| malformed(format!("expected {what}, found `{tok}`")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let tok = self.expect(what)?;
        tok.parse()
            .map_err(|_| malformed(format!("expected {what}, found `{tok}`")))
    }
}

/// Parses an ASCII MEDIT file. Sections other than `Vertices` and
/// `Tetrahedra` are skipped; reference tags are ignored.
pub fn parse_medit(text: &str) -> Result<RawMesh> {
    let mut tok = Tokens::new(text);
    let mut raw = RawMesh::default();
    let mut seen_vertices = false;
    let mut seen_tets = false;
    let mut ended = false;

    while let Some(kw) = tok.next() {
        match kw.to_ascii_lowercase().as_str() {
            "meshversionformatted" => {
                tok.usize("format version")?;
            }
            "dimension" => {
                let d = tok.usize("dimension")?;
                if d != 3 {
                    return Err(malformed(format!("unsupported dimension {d}")));
                }
            }
            "vertices" => {
                let n = tok.usize("vertex count")?;
                raw.vertices.reserve(n);
                for _ in 0..n {
                    let x = tok.f64("x coordinate")?;
                    let y = tok.f64("y coordinate")?;
                    let z = tok.f64("z coordinate")?;
                    tok.expect("vertex reference")?;
                    raw.vertices.push(Vec3::new(x, y, z));
                }
                seen_vertices = true;
            }
            "tetrahedra" => {
                let m = tok.usize("tetrahedron count")?;
                raw.tets.reserve(m);
                for _ in 0..m {
                    let mut tet = [0; 4];
                    for slot in &mut tet {
                        let i = tok.usize("vertex index")?;
                        if i == 0 {
                            return Err(malformed("MEDIT indices are 1-based"));
                        }
                        *slot = i - 1;
                    }
                    tok.expect("tetrahedron reference")?;
                    raw.tets.push(tet);
                }
                seen_tets = true;
            }
            "end" => {
                ended = true;
                break;
            }
            other => {
                let width = match other {
                    "edges" => 3,
                    "triangles" => 4,
                    "quadrilaterals" => 5,
                    "hexahedra" => 9,
                    "corners" | "ridges" | "requiredvertices" | "requirededges"
                    | "requiredtriangles" => 1,
                    "normals" | "tangents" => 3,
                    _ => return Err(malformed(format!("unknown keyword `{kw}`"))),
                };
                let count = tok.usize("section size")?;
                for _ in 0..count * width {
                    tok.expect("section entry")?;
                }
            }
        }
    }

    if !ended {
        return Err(malformed("missing `End`"));
    }
    if !seen_vertices || !seen_tets {
        return Err(malformed("missing `Vertices` or `Tetrahedra` section"));
    }
    Ok(raw)
}

/// Parses a TetGen `.node`/`.ele` pair. Indexing base is taken from the first
/// id of each file.
pub fn parse_tetgen(node: &str, ele: &str) -> Result<RawMesh> {
    let mut tok = Tokens::new(node);
    let n = tok.usize("node count")?;
    let dim = tok.usize("dimension")?;
    if dim != 3 {
        return Err(malformed(format!("unsupported dimension {dim}")));
    }
    let n_attr = tok.usize("attribute count")?;
    let n_marker = tok.usize("boundary marker flag")?;
    let mut vertices = Vec::with_capacity(n);
    let mut node_base = None;
    for k in 0..n {
        let id = tok.usize("node id")?;
        let base = *node_base.get_or_insert(id);
        if id != k + base {
            return Err(malformed(format!("node ids are not consecutive at `{id}`")));
        }
        let x = tok.f64("x coordinate")?;
        let y = tok.f64("y coordinate")?;
        let z = tok.f64("z coordinate")?;
        for _ in 0..n_attr + n_marker.min(1) {
            tok.expect("node attribute")?;
        }
        vertices.push(Vec3::new(x, y, z));
    }
    let node_base = node_base.unwrap_or(0);
    if node_base > 1 {
        return Err(malformed("node ids must start at 0 or 1"));
    }

    let mut tok = Tokens::new(ele);
    let m = tok.usize("element count")?;
    let per = tok.usize("nodes per element")?;
    if per != 4 {
        return Err(malformed(format!("only linear tetrahedra supported, got {per} nodes")));
    }
    let n_attr = tok.usize("region attribute flag")?;
    let mut tets = Vec::with_capacity(m);
    for _ in 0..m {
        tok.usize("element id")?;
        let mut tet = [0; 4];
        for slot in &mut tet {
            let i = tok.usize("vertex index")?;
            *slot = i
                .checked_sub(node_base)
                .ok_or_else(|| malformed(format!("vertex index {i} below base {node_base}")))?;
        }
        for _ in 0..n_attr {
            tok.expect("element attribute")?;
        }
        tets.push(tet);
    }
    Ok(RawMesh { vertices, tets })
}

/// Parses and validates a mesh. For TetGen input, `bytes` holds the `.node`
/// contents and `ele` the `.ele` contents.
pub fn parse_mesh(bytes: &[u8], ele: Option<&[u8]>, format: MeshFormat) -> Result<TetMesh> {
    let text = std::str::from_utf8(bytes).map_err(|_| malformed("file is not UTF-8"))?;
    let raw = match format {
        MeshFormat::Medit => parse_medit(text)?,
        MeshFormat::Tetgen => {
            let ele = ele.ok_or_else(|| malformed("TetGen input needs an .ele file"))?;
            let ele = std::str::from_utf8(ele).map_err(|_| malformed("file is not UTF-8"))?;
            parse_tetgen(text, ele)?
        }
    };
    raw.into_mesh()
}

/// Reads a `.mesh` file, or a TetGen pair given either the `.node` or `.ele`
/// path.
pub fn read_mesh(path: &Path) -> Result<TetMesh> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("node") | Some("ele") => {
            let node = std::fs::read(path.with_extension("node"))?;
            let ele = std::fs::read(path.with_extension("ele"))?;
            parse_mesh(&node, Some(&ele), MeshFormat::Tetgen)
        }
        _ => parse_mesh(&std::fs::read(path)?, None, MeshFormat::Medit),
    }
}

/// Canonical MEDIT writer: coordinates with 17 significant digits, 1-based
/// indices, zero reference tags.
pub fn write_medit(vertices: &[Vec3], tets: &[[usize; 4]]) -> String {
    let mut out = String::with_capacity(64 * (vertices.len() + tets.len()) + 64);
    out.push_str("MeshVersionFormatted 2\nDimension 3\n");
    let _ = writeln!(out, "Vertices\n{}", vertices.len());
    for v in vertices {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e} 0", v.x, v.y, v.z);
    }
    let _ = writeln!(out, "Tetrahedra\n{}", tets.len());
    for t in tets {
        let _ = writeln!(out, "{} {} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
    }
    out.push_str("End\n");
    out
}
