//! Line-oriented text format for models.
//!
//! ```text
//! # comment
//! mrf <n> <k> <m>
//! g <i> <k values>
//! hd <i> <j> <k*k values, row-major, rows indexed by the label of i>
//! hq <i> <j> <scale> <cap>        truncated quadratic
//! hl <i> <j> <scale> <cap>        truncated linear
//! hs <i> <j> <step> <jump>        two-step stereo cost
//! hp <i> <j> <penalty>            Potts
//! w <i> <j> <weight>              optional; weight of dart i -> j
//! ```
//!
//! Vertex ids are 1-based, labels are 0-based. Each vertex needs exactly one
//! `g` line and there must be exactly `m` edge lines. Without `w` lines the
//! weights are uniform; once any `w` line appears, every dart needs one.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Graph, Model, Orientation, PairwiseCost, WalkWeights};

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

struct Tokens<'a> {
    line: usize,
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        self.iter.next().ok_or_else(|| perr(self.line, format!("missing {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let s = self.next_str(what)?;
        s.parse().map_err(|_| perr(self.line, format!("{what}: expected a nonnegative integer, got {s:?}")))
    }

    fn vertex(&mut self, n: usize, what: &str) -> Result<usize> {
        let v = self.usize(what)?;
        if v == 0 || v > n {
            return Err(perr(self.line, format!("{what} {v} is outside 1..={n}")));
        }
        Ok(v - 1)
    }

    fn real(&mut self, what: &str) -> Result<f64> {
        let s = self.next_str(what)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(perr(self.line, format!("{what}: expected a finite number, got {s:?}"))),
        }
    }

    fn finish(&mut self) -> Result<()> {
        match self.iter.next() {
            None => Ok(()),
            Some(extra) => Err(perr(self.line, format!("unexpected trailing token {extra:?}"))),
        }
    }
}

/// Parses a model. Costs are taken as written; negative entries are allowed
/// and can be removed with [`Model::normalize_nonnegative`].
pub fn parse_model(text: &str) -> Result<Model> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut unary: Vec<Option<Vec<f64>>> = Vec::new();
    let mut edges: Vec<(usize, usize, PairwiseCost, usize)> = Vec::new();
    let mut weights: Vec<(usize, usize, f64, usize)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let mut t = Tokens { line, iter: content.split_whitespace() };
        let Some(tag) = t.iter.next() else { continue };
        if tag == "mrf" {
            if header.is_some() {
                return Err(perr(line, "duplicate header"));
            }
            let n = t.usize("vertex count")?;
            let k = t.usize("label count")?;
            let m = t.usize("edge count")?;
            t.finish()?;
            if k == 0 {
                return Err(perr(line, "label count must be at least 1"));
            }
            header = Some((n, k, m));
            unary = vec![None; n];
            continue;
        }
        let Some((n, k, _)) = header else {
            return Err(perr(line, "expected header `mrf <n> <k> <m>` before any other line"));
        };
        match tag {
            "g" => {
                let i = t.vertex(n, "vertex")?;
                let values = (0..k).map(|_| t.real("unary value")).collect::<Result<Vec<_>>>()?;
                t.finish()?;
                if unary[i].replace(values).is_some() {
                    return Err(perr(line, format!("vertex {} has a second g line", i + 1)));
                }
            }
            "hd" | "hq" | "hl" | "hs" | "hp" => {
                let i = t.vertex(n, "vertex")?;
                let j = t.vertex(n, "vertex")?;
                let cost = match tag {
                    "hd" => {
                        let table = (0..k * k).map(|_| t.real("table value")).collect::<Result<Vec<_>>>()?;
                        if i > j {
                            // Store in canonical orientation (smaller id first).
                            PairwiseCost::Dense((0..k * k).map(|idx| table[(idx % k) * k + idx / k]).collect())
                        } else {
                            PairwiseCost::Dense(table)
                        }
                    }
                    "hq" => PairwiseCost::TruncatedQuadratic { scale: t.real("scale")?, cap: t.real("cap")? },
                    "hl" => PairwiseCost::TruncatedLinear { scale: t.real("scale")?, cap: t.real("cap")? },
                    "hs" => PairwiseCost::StereoTwoStep { step: t.real("step cost")?, jump: t.real("jump cost")? },
                    _ => PairwiseCost::Potts { penalty: t.real("penalty")? },
                };
                t.finish()?;
                cost.validate(k).map_err(|e| perr(line, e.to_string()))?;
                edges.push((i, j, cost, line));
            }
            "w" => {
                let i = t.vertex(n, "vertex")?;
                let j = t.vertex(n, "vertex")?;
                let w = t.real("weight")?;
                t.finish()?;
                if w < 0.0 {
                    return Err(perr(line, "weights must be nonnegative"));
                }
                weights.push((i, j, w, line));
            }
            other => return Err(perr(line, format!("unknown record type {other:?}"))),
        }
    }

    let Some((n, k, m)) = header else {
        return Err(perr(last_line.max(1), "missing header `mrf <n> <k> <m>`"));
    };
    if edges.len() != m {
        return Err(perr(last_line, format!("header declares {m} edges, found {}", edges.len())));
    }
    if let Some(i) = unary.iter().position(Option::is_none) {
        return Err(perr(last_line, format!("vertex {} has no g line", i + 1)));
    }
    let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.0, e.1)).collect();
    let graph = Graph::from_edges(n, &pairs).map_err(|e| perr(last_line, e.to_string()))?;
    let mut pairwise = vec![PairwiseCost::Potts { penalty: 0.0 }; m];
    for (i, j, cost, _) in edges {
        let e = graph.edge_index(i, j).expect("edge was registered");
        pairwise[e] = cost;
    }
    let weights = if weights.is_empty() {
        WalkWeights::uniform(&graph)
    } else {
        let mut values = vec![f64::NAN; graph.num_darts()];
        for (i, j, w, line) in weights {
            let d =
                graph.dart_index(i, j).ok_or_else(|| perr(line, format!("no edge between {} and {}", i + 1, j + 1)))?;
            if !values[d].is_nan() {
                return Err(perr(line, format!("weight {} -> {} given twice", i + 1, j + 1)));
            }
            values[d] = w;
        }
        if let Some(d) = values.iter().position(|v| v.is_nan()) {
            let dart = &graph.darts()[d];
            return Err(perr(
                last_line,
                format!("weight {} -> {} missing; give all darts or none", dart.tail + 1, dart.head + 1),
            ));
        }
        WalkWeights::from_dart_values(&graph, values).map_err(|e| perr(last_line, e.to_string()))?
    };
    let unary = unary.into_iter().flatten().flatten().collect();
    Model::new(graph, k, unary, pairwise, weights).map_err(|e| perr(last_line, e.to_string()))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Serializes a model. Floats use Rust's shortest round-trip formatting, so
/// `parse_model(&write_model(m))` reproduces `m` exactly.
pub fn write_model(model: &Model) -> String {
    let g = model.graph();
    let k = model.k();
    let mut out = format!("mrf {} {} {}\n", g.n(), k, g.m());
    for i in 0..g.n() {
        out.push_str(&format!("g {}", i + 1));
        for v in model.unary(i) {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let (i, j) = (i + 1, j + 1);
        match model.pairwise(e) {
            PairwiseCost::Dense(t) => {
                let _ = write!(out, "hd {i} {j}");
                for v in t {
                    let _ = write!(out, " {v:?}");
                }
                out.push('\n');
            }
            PairwiseCost::TruncatedQuadratic { scale, cap } => {
                let _ = writeln!(out, "hq {i} {j} {scale:?} {cap:?}");
            }
            PairwiseCost::TruncatedLinear { scale, cap } => {
                let _ = writeln!(out, "hl {i} {j} {scale:?} {cap:?}");
            }
            PairwiseCost::StereoTwoStep { step, jump } => {
                let _ = writeln!(out, "hs {i} {j} {step:?} {jump:?}");
            }
            PairwiseCost::Potts { penalty } => {
                let _ = writeln!(out, "hp {i} {j} {penalty:?}");
            }
        }
    }
    if model.weights() != &WalkWeights::uniform(g) {
        for (d, dart) in g.darts().iter().enumerate() {
            let _ = writeln!(out, "w {} {} {:?}", dart.tail + 1, dart.head + 1, model.weights().get(d));
        }
    }
    out
}

pub fn write_model_file(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(model)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Realized pairwise value of edge `{i, j}` from `i`'s side, for tests that
/// read models back.
pub fn edge_value(model: &Model, i: usize, j: usize, a: usize, b: usize) -> Option<f64> {
    let e = model.graph().edge_index(i, j)?;
    let orient = if i < j { Orientation::Forward } else { Orientation::Reverse };
    Some(model.pairwise(e).value(model.k(), orient, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Labeling;
    use crate::problems::cycle_example;

    const ATTRACTIVE: &str = "\
# five-cycle, vertex 1 prefers label 1
mrf 5 2 5
g 1 1 0
g 2 0 0
g 3 0 0
g 4 0 0
g 5 0 0
hp 1 2 1
hp 2 3 1
hp 3 4 1
hp 4 5 1
hp 1 5 1
";

    #[test]
    fn parses_cycle() {
        let m = parse_model(ATTRACTIVE).unwrap();
        assert_eq!(m.unary_table(), cycle_example(false).unary_table());
        assert_eq!(m.pairwise_costs(), cycle_example(false).pairwise_costs());
        assert_eq!(m.weights(), cycle_example(false).weights());
        assert_eq!(m.energy(&Labeling(vec![1; 5])).unwrap(), 0.0);
    }

    #[test]
    fn dense_reverse_orientation_is_transposed() {
        let text = "mrf 2 2 1\ng 1 0 0\ng 2 0 0\nhd 2 1 0 1 2 3\n";
        let m = parse_model(text).unwrap();
        // Row index is the label of vertex 2 (0-based id 1).
        assert_eq!(edge_value(&m, 1, 0, 0, 1), Some(1.0));
        assert_eq!(edge_value(&m, 0, 1, 1, 0), Some(1.0));
        assert_eq!(edge_value(&m, 1, 0, 1, 0), Some(2.0));
    }

    #[test]
    fn round_trip() {
        for m in [cycle_example(false), cycle_example(true)] {
            assert_eq!(parse_model(&write_model(&m)).unwrap(), m);
        }
        let text = "mrf 3 3 2\ng 1 0.1 -2 3e-7\ng 2 0 0 0\ng 3 1 2 3\nhq 1 2 0.5 4\nhs 3 2 1 2.5\n\
                    w 1 2 1\nw 2 1 0.25\nw 2 3 0.75\nw 3 2 1\n";
        let m = parse_model(text).unwrap();
        assert_eq!(parse_model(&write_model(&m)).unwrap(), m);
        assert!((m.weights().row_sum(m.graph(), 1) - 1.0).abs() < 1e-15);
    }

    fn line_of(text: &str) -> usize {
        match parse_model(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("g 1 0 0\n"), 1);
        assert_eq!(line_of("# c\nmrf 2 2 1\ng 1 0 x\n"), 3);
        assert_eq!(line_of("mrf 2 2 1\ng 3 0 0\n"), 2);
        assert_eq!(line_of("mrf 2 2 1\ng 1 0 0\ng 2 0 0\nhs 1 2 5 1\n"), 4);
        assert_eq!(line_of("mrf 2 2 1\ng 1 0 0\ng 2 0 0\nhp 1 2 1 7\n"), 4);
        assert_eq!(line_of("mrf 2 2 1\ng 1 0 0\ng 1 0 0\n"), 3);
        assert_eq!(line_of("mrf 2 2 1\ng 1 0 0\ng 2 0 0\nbogus\n"), 4);
        assert_eq!(line_of("mrf 2 2 1\ng 1 0 0\ng 2 0 0\nhp 1 2 1\nw 1 2 1\n"), 5);
        assert_eq!(line_of("mrf 2 2 1\ng 1 0 0\ng 2 0 0\nhp 1 2 inf\n"), 4);
        assert_eq!(line_of(""), 1);
    }

    #[test]
    fn structural_errors() {
        // Disconnected graph.
        assert!(parse_model("mrf 4 1 2\ng 1 0\ng 2 0\ng 3 0\ng 4 0\nhp 1 2 1\nhp 3 4 1\n").is_err());
        // Edge count mismatch.
        assert!(parse_model("mrf 2 1 2\ng 1 0\ng 2 0\nhp 1 2 1\n").is_err());
        // Weights that do not sum to one.
        let bad = "mrf 3 1 2\ng 1 0\ng 2 0\ng 3 0\nhp 1 2 1\nhp 2 3 1\nw 1 2 1\nw 2 1 0.5\nw 2 3 0.4\nw 3 2 1\n";
        assert!(parse_model(bad).is_err());
    }
}
