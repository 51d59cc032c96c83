//! Text edge lists, text/binary feature files and label files.
//!
//! Edge list: header `n_vertices <n>`, then `i j w` per undirected edge.
//! Features: header `M d` then `M` rows of `d` reals, or the binary layout
//! `SSLFEAT\0`, `u32` rows, `u32` dim (all little endian), then row-major
//! `f64` data. Labels: `index class` per line.
//!
//! Blank lines and lines starting with `#` are ignored by every reader.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{FeatureMatrix, Graph, LabelSet};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"SSLFEAT\0";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn content_lines<R: BufRead>(r: R) -> impl Iterator<Item = Result<(usize, String)>> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
        Err(e) => Some(Err(e.into())),
    })
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

pub fn write_graph<W: Write>(g: &Graph, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "n_vertices {}", g.n_vertices())?;
    for (i, j, wt) in g.edges() {
        writeln!(w, "{i} {j} {wt}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge list. An edge may be listed once, as `i j` or `j i`, or
/// in both orientations with identical weights; anything else is an error.
pub fn read_graph<R: Read>(r: R) -> Result<Graph> {
    let mut lines = content_lines(BufReader::new(r));
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty edge list"))??;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("n_vertices") {
        return Err(parse_err(hl, "expected header `n_vertices <n>`"));
    }
    let n: usize = field(toks.next(), hl, "vertex count")?;
    // (min, max) -> (weight, orientation seen: 0 = i<j, 1 = i>j, 2 = both)
    let mut seen: HashMap<(usize, usize), (f64, u8, usize)> = HashMap::new();
    let mut order = Vec::new();
    for item in lines {
        let (ln, line) = item?;
        let mut t = line.split_whitespace();
        let i: usize = field(t.next(), ln, "source vertex")?;
        let j: usize = field(t.next(), ln, "target vertex")?;
        let w: f64 = field(t.next(), ln, "weight")?;
        if t.next().is_some() {
            return Err(parse_err(ln, "trailing tokens"));
        }
        if i >= n || j >= n {
            return Err(parse_err(ln, format!("vertex index out of range (n = {n})")));
        }
        if i == j {
            return Err(parse_err(ln, format!("self-loop at vertex {i}")));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(parse_err(ln, format!("invalid weight {w}")));
        }
        let key = (i.min(j), i.max(j));
        let orient = u8::from(i > j);
        match seen.get_mut(&key) {
            None => {
                seen.insert(key, (w, orient, ln));
                order.push(key);
            }
            Some((w0, o, first)) => {
                if *o == 2 || *o == orient {
                    return Err(parse_err(ln, format!("edge ({}, {}) repeated (first on line {first})", key.0, key.1)));
                }
                if *w0 != w {
                    return Err(parse_err(
                        ln,
                        format!("non-symmetric edge ({}, {}): weights {} and {w}", key.0, key.1, *w0),
                    ));
                }
                *o = 2;
            }
        }
    }
    Graph::from_edges(n, order.into_iter().map(|k| (k.0, k.1, seen[&k].0)))
}

pub fn save_graph(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    write_graph(g, File::create(path)?)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    read_graph(File::open(path)?)
}

pub fn write_features_text<W: Write>(f: &FeatureMatrix, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{} {}", f.rows(), f.dim())?;
    for i in 0..f.rows() {
        let row: Vec<String> = f.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features_binary<W: Write>(f: &FeatureMatrix, w: W) -> Result<()> {
    let rows = u32::try_from(f.rows()).map_err(|_| Error::invalid("too many rows for binary format"))?;
    let dim = u32::try_from(f.dim()).map_err(|_| Error::invalid("dimension too large for binary format"))?;
    let mut w = BufWriter::new(w);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    for v in f.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads either feature format, detected from the first bytes.
pub fn read_features<R: Read>(r: R) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(r);
    let head = r.fill_buf()?;
    if head.starts_with(FEATURE_MAGIC) {
        read_features_binary(r)
    } else {
        read_features_text(r)
    }
}

fn read_features_binary<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| parse_err(0, "truncated binary header"))?;
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * dim * 8 {
        return Err(parse_err(0, format!("expected {} data bytes, found {}", rows * dim * 8, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    FeatureMatrix::new(rows, dim, data)
}

fn read_features_text<R: BufRead>(r: R) -> Result<FeatureMatrix> {
    let mut lines = content_lines(r);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty feature file"))??;
    let mut t = header.split_whitespace();
    let rows: usize = field(t.next(), hl, "row count")?;
    let dim: usize = field(t.next(), hl, "dimension")?;
    if t.next().is_some() {
        return Err(parse_err(hl, "header must be `M d`"));
    }
    let mut data = Vec::with_capacity(rows * dim);
    let mut got = 0;
    for item in lines {
        let (ln, line) = item?;
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(field::<f64>(Some(tok), ln, "feature value")?);
        }
        if data.len() - before != dim {
            return Err(parse_err(ln, format!("expected {dim} values, found {}", data.len() - before)));
        }
        got += 1;
    }
    if got != rows {
        return Err(parse_err(hl, format!("header declares {rows} rows, file has {got}")));
    }
    FeatureMatrix::new(rows, dim, data)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    read_features(File::open(path)?)
}

/// Hex SHA-256 of the little-endian data bytes, prefixed by the shape.
pub fn feature_checksum(f: &FeatureMatrix) -> String {
    let mut h = Sha256::new();
    h.update((f.rows() as u64).to_le_bytes());
    h.update((f.dim() as u64).to_le_bytes());
    for v in f.data() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_labels<W: Write>(labels: &LabelSet, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for &(v, c) in labels.entries() {
        writeln!(w, "{v} {c}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `index class` lines. The class count is the largest class + 1
/// unless `num_classes` is given.
pub fn read_labels<R: Read>(r: R, num_classes: Option<usize>) -> Result<LabelSet> {
    let mut entries = Vec::new();
    for item in content_lines(BufReader::new(r)) {
        let (ln, line) = item?;
        let mut t = line.split_whitespace();
        let v: usize = field(t.next(), ln, "vertex index")?;
        let c: usize = field(t.next(), ln, "class id")?;
        if t.next().is_some() {
            return Err(parse_err(ln, "trailing tokens"));
        }
        entries.push((v, c));
    }
    let k = num_classes.unwrap_or_else(|| entries.iter().map(|&(_, c)| c + 1).max().unwrap_or(0));
    LabelSet::new(entries, k)
}

/// Reads a full ground-truth labeling: one `index class` line per vertex.
pub fn read_ground_truth<R: Read>(r: R, n: usize) -> Result<Vec<usize>> {
    let ls = read_labels(r, None)?;
    if ls.len() != n {
        return Err(Error::invalid(format!("ground truth covers {} of {n} vertices", ls.len())));
    }
    let mut y = vec![usize::MAX; n];
    for &(v, c) in ls.entries() {
        if v >= n {
            return Err(Error::invalid(format!("ground-truth vertex {v} out of range")));
        }
        y[v] = c;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_barbell;

    #[test]
    fn graph_round_trip() {
        let g = Graph::from_edges(4, [(0, 1, 0.1), (1, 2, 1.0 / 3.0), (0, 3, 2.5e-17)]).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(read_graph(&buf[..]).unwrap(), g);
        let b = gen_barbell(4).unwrap();
        let mut buf = Vec::new();
        write_graph(&b, &mut buf).unwrap();
        assert_eq!(read_graph(&buf[..]).unwrap(), b);
    }

    #[test]
    fn graph_parse_errors() {
        let bad = [
            "3\n0 1 1\n",
            "n_vertices 3\n0 3 1\n",
            "n_vertices 3\n0 1 1\n1 0 2\n",
            "n_vertices 3\n0 1 1\n0 1 1\n",
            "n_vertices 3\n1 1 1\n",
            "n_vertices 3\n0 1 -1\n",
            "n_vertices 3\n0 1\n",
        ];
        for s in bad {
            assert!(matches!(read_graph(s.as_bytes()), Err(Error::Parse { .. })), "{s:?}");
        }
        let ok = read_graph("n_vertices 3\n# comment\n0 1 1.5\n1 0 1.5\n2 1 1\n".as_bytes()).unwrap();
        assert_eq!(ok.weight(1, 0), 1.5);
        assert_eq!(ok.weight(1, 2), 1.0);
    }

    #[test]
    fn features_round_trip_both_formats() {
        let f = FeatureMatrix::new(2, 3, vec![1.0, -0.5, 1e-300, 0.1, 2.0 / 3.0, 7.0]).unwrap();
        let mut t = Vec::new();
        write_features_text(&f, &mut t).unwrap();
        assert_eq!(read_features(&t[..]).unwrap(), f);
        let mut b = Vec::new();
        write_features_binary(&f, &mut b).unwrap();
        assert_eq!(b.len(), 16 + 6 * 8);
        assert_eq!(read_features(&b[..]).unwrap(), f);
        assert_eq!(feature_checksum(&f).len(), 64);
    }

    #[test]
    fn feature_parse_errors() {
        assert!(read_features("2 2\n1 2\n".as_bytes()).is_err());
        assert!(read_features("1 2\n1 2 3\n".as_bytes()).is_err());
        assert!(read_features("1 2\n1 x\n".as_bytes()).is_err());
        let mut b = FEATURE_MAGIC.to_vec();
        b.extend(1u32.to_le_bytes());
        b.extend(2u32.to_le_bytes());
        b.extend(1.0f64.to_le_bytes());
        assert!(read_features(&b[..]).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let ls = LabelSet::new(vec![(4, 1), (0, 0), (2, 2)], 3).unwrap();
        let mut buf = Vec::new();
        write_labels(&ls, &mut buf).unwrap();
        assert_eq!(read_labels(&buf[..], Some(3)).unwrap(), ls);
    }
}
