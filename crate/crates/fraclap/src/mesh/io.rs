//! Plain-text mesh format (FRACMESH 1).
//!
//! ```text
//! FRACMESH 1
//! nodes <N_N>
//! <x> <y>            repeated N_N times
//! triangles <N_T> <n_aux>
//! <i0> <i1> <i2>     repeated N_T times, 0-based, auxiliary last
//! boundary <count>
//! <node index> ...
//! free <count>
//! <node index> ...
//! ball_radius <R>
//! ```

use super::{Mesh, MeshError};
use std::io::{BufRead, Write};
use std::path::Path;

struct LineReader<R: BufRead> {
    inner: R,
    pub line: usize,
}

impl<R: BufRead> LineReader<R> {
    fn next_line(&mut self) -> Result<String, MeshError> {
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = self.inner.read_line(&mut buf)?;
            self.line += 1;
            if n == 0 {
                return Err(MeshError::Parse {
                    line: self.line,
                    msg: "unexpected end of file".into(),
                });
            }
            if !buf.trim().is_empty() {
                return Ok(buf.trim().to_string());
            }
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn expect_keyword<'a>(
    line: &'a str,
    lineno: usize,
    keyword: &str,
) -> Result<Vec<&'a str>, MeshError> {
    let mut it = line.split_whitespace();
    match it.next() {
        Some(k) if k == keyword => Ok(it.collect()),
        other => Err(parse_err(
            lineno,
            format!("expected '{keyword}', found '{}'", other.unwrap_or("")),
        )),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, lineno: usize, what: &str) -> Result<T, MeshError> {
    tok.parse()
        .map_err(|_| parse_err(lineno, format!("invalid {what}: '{tok}'")))
}

/// Read `count` whitespace-separated indices, allowed to span lines.
fn read_indices<R: BufRead>(
    rd: &mut LineReader<R>,
    count: usize,
    n_nodes: usize,
) -> Result<Vec<usize>, MeshError> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let line = rd.next_line()?;
        for tok in line.split_whitespace() {
            if out.len() == count {
                return Err(parse_err(rd.line, "more indices than declared"));
            }
            let idx: usize = parse_num(tok, rd.line, "node index")?;
            if idx >= n_nodes {
                return Err(parse_err(rd.line, format!("node index {idx} out of range")));
            }
            out.push(idx);
        }
    }
    Ok(out)
}

pub fn load_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let file = std::fs::File::open(path)?;
    let mut rd = LineReader {
        inner: std::io::BufReader::new(file),
        line: 0,
    };

    let header = rd.next_line()?;
    if header.split_whitespace().collect::<Vec<_>>() != ["FRACMESH", "1"] {
        return Err(parse_err(rd.line, "expected header 'FRACMESH 1'"));
    }

    let line = rd.next_line()?;
    let rest = expect_keyword(&line, rd.line, "nodes")?;
    let n_nodes: usize = parse_num(
        rest.first().ok_or_else(|| parse_err(rd.line, "missing node count"))?,
        rd.line,
        "node count",
    )?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let line = rd.next_line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(rd.line, "expected two coordinates"));
        }
        let x: f64 = parse_num(toks[0], rd.line, "coordinate")?;
        let y: f64 = parse_num(toks[1], rd.line, "coordinate")?;
        nodes.push([x, y]);
    }

    let line = rd.next_line()?;
    let rest = expect_keyword(&line, rd.line, "triangles")?;
    if rest.len() != 2 {
        return Err(parse_err(rd.line, "expected 'triangles <N_T> <n_aux>'"));
    }
    let n_tri: usize = parse_num(rest[0], rd.line, "triangle count")?;
    let n_aux: usize = parse_num(rest[1], rd.line, "auxiliary count")?;
    if n_aux > n_tri {
        return Err(parse_err(rd.line, "n_aux exceeds triangle count"));
    }
    let mut triangles = Vec::with_capacity(n_tri);
    for _ in 0..n_tri {
        let line = rd.next_line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(rd.line, "expected three node indices"));
        }
        let mut t = [0usize; 3];
        for (slot, tok) in t.iter_mut().zip(toks.iter()) {
            let idx: usize = parse_num(tok, rd.line, "node index")?;
            if idx >= n_nodes {
                return Err(parse_err(rd.line, format!("node index {idx} out of range")));
            }
            *slot = idx;
        }
        triangles.push(t);
    }

    let line = rd.next_line()?;
    let rest = expect_keyword(&line, rd.line, "boundary")?;
    let nb: usize = parse_num(
        rest.first().ok_or_else(|| parse_err(rd.line, "missing count"))?,
        rd.line,
        "boundary count",
    )?;
    let boundary_nodes = read_indices(&mut rd, nb, n_nodes)?;

    let line = rd.next_line()?;
    let rest = expect_keyword(&line, rd.line, "free")?;
    let nf: usize = parse_num(
        rest.first().ok_or_else(|| parse_err(rd.line, "missing count"))?,
        rd.line,
        "free count",
    )?;
    let free_nodes = read_indices(&mut rd, nf, n_nodes)?;

    let line = rd.next_line()?;
    let rest = expect_keyword(&line, rd.line, "ball_radius")?;
    let ball_radius: f64 = parse_num(
        rest.first().ok_or_else(|| parse_err(rd.line, "missing radius"))?,
        rd.line,
        "ball radius",
    )?;
    if !(ball_radius > 0.0) {
        return Err(parse_err(rd.line, "ball radius must be positive"));
    }

    let mesh = Mesh {
        nodes,
        triangles,
        n_aux,
        boundary_nodes,
        free_nodes,
        ball_radius,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "FRACMESH 1")?;
    writeln!(f, "nodes {}", mesh.nodes.len())?;
    for p in &mesh.nodes {
        writeln!(f, "{} {}", p[0], p[1])?;
    }
    writeln!(f, "triangles {} {}", mesh.triangles.len(), mesh.n_aux)?;
    for t in &mesh.triangles {
        writeln!(f, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(f, "boundary {}", mesh.boundary_nodes.len())?;
    writeln!(f, "{}", join_indices(&mesh.boundary_nodes))?;
    writeln!(f, "free {}", mesh.free_nodes.len())?;
    writeln!(f, "{}", join_indices(&mesh.free_nodes))?;
    writeln!(f, "ball_radius {}", mesh.ball_radius)?;
    f.flush()?;
    Ok(())
}

fn join_indices(v: &[usize]) -> String {
    v.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
