//! TU benchmark flat-file format.
//!
//! A dataset `NAME` is a directory holding `NAME_A.txt` (one `i, j` edge per
//! line, 1-indexed global node ids), `NAME_graph_indicator.txt` (graph id of
//! each node), `NAME_graph_labels.txt` (one label per graph) and optionally
//! `NAME_node_labels.txt` (one label per node).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{encode_bundle, DatasetBundle, Graph};

fn read(dir: &Path, name: &str, suffix: &str) -> Result<Option<String>> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    match fs::read_to_string(&path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn require(dir: &Path, name: &str, suffix: &str) -> Result<String> {
    read(dir, name, suffix)?.ok_or_else(|| {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required dataset file missing"),
        )
    })
}

fn parse_ints(text: &str, file: &str) -> Result<Vec<i64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|e| Error::Parse {
                file: file.to_string(),
                line: i + 1,
                msg: format!("{e}: {l:?}"),
            })
        })
        .collect()
}

/// Maps arbitrary integer labels onto `0..k` in ascending order.
fn contiguous(raw: &[i64]) -> (Vec<usize>, usize) {
    let distinct: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mapped = raw
        .iter()
        .map(|v| distinct.binary_search(v).expect("present"))
        .collect();
    (mapped, distinct.len())
}

pub fn load_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let a_file = format!("{name}_A.txt");
    let ind_file = format!("{name}_graph_indicator.txt");
    let gl_file = format!("{name}_graph_labels.txt");
    let nl_file = format!("{name}_node_labels.txt");

    let indicator = parse_ints(&require(dir, name, "graph_indicator")?, &ind_file)?;
    let graph_labels = parse_ints(&require(dir, name, "graph_labels")?, &gl_file)?;
    let edges_text = require(dir, name, "A")?;
    let node_labels = read(dir, name, "node_labels")?
        .map(|t| parse_ints(&t, &nl_file))
        .transpose()?;

    let num_graphs = graph_labels.len();
    let total_nodes = indicator.len();
    let mut graph_of = Vec::with_capacity(total_nodes);
    let mut local = Vec::with_capacity(total_nodes);
    let mut sizes = vec![0usize; num_graphs];
    for (i, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > num_graphs {
            return Err(Error::Validation(format!(
                "{ind_file} line {}: graph id {g} outside 1..={num_graphs}",
                i + 1
            )));
        }
        let g = g as usize - 1;
        graph_of.push(g);
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    if let Some(nl) = &node_labels {
        if nl.len() != total_nodes {
            return Err(Error::Validation(format!(
                "{nl_file} has {} entries for {total_nodes} nodes",
                nl.len()
            )));
        }
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (i, line) in edges_text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            file: a_file.clone(),
            line: line_no,
            msg,
        };
        let mut parts = line.split(',').map(str::trim);
        let mut endpoint = || -> Result<usize> {
            let tok = parts.next().ok_or_else(|| parse_err(format!("expected 'i, j': {line:?}")))?;
            let v: usize = tok
                .parse()
                .map_err(|e| parse_err(format!("{e}: {tok:?}")))?;
            if v < 1 || v > total_nodes {
                return Err(parse_err(format!("node id {v} outside 1..={total_nodes}")));
            }
            Ok(v - 1)
        };
        let a = endpoint()?;
        let b = endpoint()?;
        if graph_of[a] != graph_of[b] {
            return Err(Error::Validation(format!(
                "{a_file} line {line_no}: edge ({}, {}) joins graphs {} and {}",
                a + 1,
                b + 1,
                graph_of[a] + 1,
                graph_of[b] + 1
            )));
        }
        edges[graph_of[a]].push((local[a], local[b]));
    }

    let (labels, num_classes) = contiguous(&graph_labels);
    let mapped_node_labels = node_labels.as_deref().map(contiguous);
    let mut per_graph_node_labels: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    if let Some((nl, _)) = &mapped_node_labels {
        for (i, &l) in nl.iter().enumerate() {
            per_graph_node_labels[graph_of[i]].push(l);
        }
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let n = sizes[g];
        let mut graph = Graph::from_edges(n, &edges[g], Tensor::zeros(n, 0), labels[g])?;
        if mapped_node_labels.is_some() {
            graph = graph.with_node_labels(std::mem::take(&mut per_graph_node_labels[g]))?;
        }
        graphs.push(graph);
    }
    let (graphs, encoding) = encode_bundle(graphs)?;
    let bundle = DatasetBundle {
        name: name.to_string(),
        graphs,
        num_classes,
        feature_dim: encoding.dim(),
        encoding,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Writes `bundle` as TU flat files named `name` under `dir`. Edges are
/// written in both directions, node labels only when every graph has them.
pub fn write_tu_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut ind = String::new();
    let mut gl = String::new();
    let mut nl = String::new();
    let with_labels = bundle.graphs.iter().all(|g| g.node_labels().is_some());
    let mut base = 0usize;
    for (gi, g) in bundle.graphs.iter().enumerate() {
        for i in 0..g.num_nodes() {
            let _ = writeln!(ind, "{}", gi + 1);
            for &j in g.neighbors(i) {
                let _ = writeln!(a, "{}, {}", base + i + 1, base + j + 1);
            }
        }
        if with_labels {
            for &l in g.node_labels().unwrap_or(&[]) {
                let _ = writeln!(nl, "{l}");
            }
        }
        let _ = writeln!(gl, "{}", g.label());
        base += g.num_nodes();
    }
    let mut files = vec![("A", a), ("graph_indicator", ind), ("graph_labels", gl)];
    if with_labels {
        files.push(("node_labels", nl));
    }
    for (suffix, body) in files {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) {
        // triangle (nodes 1-3) and path (nodes 4-6); one direction only for
        // some edges, plus a duplicate
        fs::write(dir.join("toy_A.txt"), "1, 2\n2, 3\n3, 1\n4, 5\n5, 4\n5, 6\n1, 2\n").unwrap();
        fs::write(dir.join("toy_graph_indicator.txt"), "1\n1\n1\n2\n2\n2\n").unwrap();
        fs::write(dir.join("toy_graph_labels.txt"), "-1\n1\n").unwrap();
        fs::write(dir.join("toy_node_labels.txt"), "0\n2\n2\n0\n5\n0\n").unwrap();
    }

    #[test]
    fn loads_two_graph_fixture() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let b = load_tu_dataset(tmp.path(), "toy").unwrap();
        assert_eq!(b.graphs.len(), 2);
        assert_eq!(b.graphs[0].num_nodes(), 3);
        assert_eq!(b.graphs[1].num_nodes(), 3);
        assert_eq!(b.graphs[0].num_edges(), 3);
        assert_eq!(b.graphs[1].num_edges(), 2);
        assert_eq!(b.num_classes, 2);
        assert_eq!(b.labels(), vec![0, 1]);
        assert_eq!(b.feature_dim, 3);
        assert_eq!(b.graphs[1].node_labels().unwrap(), &[0, 2, 0]);
        for g in &b.graphs {
            for i in 0..g.num_nodes() {
                for &j in g.neighbors(i) {
                    assert!(g.has_edge(j, i));
                }
            }
        }
    }

    #[test]
    fn round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let b = load_tu_dataset(tmp.path(), "toy").unwrap();
        write_tu_dataset(&b, tmp.path(), "toy_copy").unwrap();
        let c = load_tu_dataset(tmp.path(), "toy_copy").unwrap();
        assert_eq!(b.graphs, c.graphs);
        assert_eq!(b.encoding, c.encoding);
    }

    #[test]
    fn missing_file_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_tu_dataset(tmp.path(), "nope"), Err(Error::Io { .. })));
    }

    #[test]
    fn out_of_range_node_reports_line() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::write(tmp.path().join("toy_A.txt"), "1, 2\n2, 9\n").unwrap();
        match load_tu_dataset(tmp.path(), "toy") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_graph_edge_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::write(tmp.path().join("toy_A.txt"), "1, 4\n").unwrap();
        assert!(matches!(load_tu_dataset(tmp.path(), "toy"), Err(Error::Validation(_))));
    }
}
