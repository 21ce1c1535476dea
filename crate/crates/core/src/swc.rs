//! SWC neuron morphology files.
//!
//! Each non-comment line holds seven whitespace-separated fields:
//! `id type x y z radius parent`, with `parent = -1` marking a root.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spatial::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwcRecord {
    pub id: i64,
    pub type_code: i32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub radius: f64,
    pub parent: i64,
}

impl SwcRecord {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A forest of SWC records, kept sorted by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Morphology {
    records: Vec<SwcRecord>,
}

impl Morphology {
    /// Validates ids, parent links and acyclicity. Errors carry the 1-based
    /// position of the offending record in `records`.
    pub fn new(records: Vec<SwcRecord>) -> Result<Self> {
        let lines: Vec<usize> = (1..=records.len()).collect();
        Self::validated(records, &lines)
    }

    fn validated(records: Vec<SwcRecord>, lines: &[usize]) -> Result<Self> {
        let mut by_id: HashMap<i64, usize> = HashMap::with_capacity(records.len());
        for (k, r) in records.iter().enumerate() {
            if !(r.radius > 0.0 && r.radius.is_finite()) {
                return Err(Error::ParseLine {
                    line: lines[k],
                    reason: format!("radius must be positive, got {}", r.radius),
                });
            }
            if !(r.x.is_finite() && r.y.is_finite() && r.z.is_finite()) {
                return Err(Error::ParseLine {
                    line: lines[k],
                    reason: "coordinates must be finite".into(),
                });
            }
            if by_id.insert(r.id, k).is_some() {
                return Err(Error::ParseLine {
                    line: lines[k],
                    reason: format!("duplicate id {}", r.id),
                });
            }
        }
        for (k, r) in records.iter().enumerate() {
            if r.parent != -1 && !by_id.contains_key(&r.parent) {
                return Err(Error::ParseLine {
                    line: lines[k],
                    reason: format!("parent id {} of node {} does not exist", r.parent, r.id),
                });
            }
            if r.parent == r.id {
                return Err(Error::ParseLine {
                    line: lines[k],
                    reason: format!("node {} is its own parent", r.id),
                });
            }
        }
        // 0 = unvisited, 1 = on current path, 2 = reaches a root
        let mut state = vec![0u8; records.len()];
        for start in 0..records.len() {
            let mut path = Vec::new();
            let mut k = start;
            loop {
                match state[k] {
                    2 => break,
                    1 => {
                        return Err(Error::ParseLine {
                            line: lines[k],
                            reason: format!(
                                "parent links form a cycle through node {}",
                                records[k].id
                            ),
                        })
                    }
                    _ => {}
                }
                state[k] = 1;
                path.push(k);
                match records[k].parent {
                    -1 => break,
                    p => k = by_id[&p],
                }
            }
            for k in path {
                state[k] = 2;
            }
        }
        if !records.is_empty() && !records.iter().any(|r| r.parent == -1) {
            return Err(Error::ParseLine {
                line: lines[0],
                reason: "no root node".into(),
            });
        }
        let mut records = records;
        records.sort_by_key(|r| r.id);
        Ok(Morphology { records })
    }

    pub fn records(&self) -> &[SwcRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.records.iter().map(SwcRecord::position).collect()
    }

    /// Parent-child pairs as indices into `records()`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let index: HashMap<i64, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(k, r)| (r.id, k))
            .collect();
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.parent != -1)
            .map(|(k, r)| (index[&r.parent], k))
            .collect()
    }

    /// Removes the subtree rooted at `id` (the node and all its descendants).
    pub fn without_subtree(&self, id: i64) -> Morphology {
        let mut children: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for r in &self.records {
            children.entry(r.parent).or_default().push(r.id);
        }
        let mut doomed = std::collections::HashSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if doomed.insert(n) {
                if let Some(c) = children.get(&n) {
                    stack.extend(c);
                }
            }
        }
        Morphology {
            records: self
                .records
                .iter()
                .filter(|r| !doomed.contains(&r.id))
                .copied()
                .collect(),
        }
    }
}

fn parse_field<T: std::str::FromStr>(tok: &str, name: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::ParseLine {
        line,
        reason: format!("field `{name}` is not numeric: {tok:?}"),
    })
}

/// Parses SWC text. Errors name the 1-based line number.
pub fn parse_swc(text: &str) -> Result<Morphology> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 7 {
            return Err(Error::ParseLine {
                line: line_no,
                reason: format!(
                    "expected 7 fields (id type x y z radius parent), got {}",
                    toks.len()
                ),
            });
        }
        records.push(SwcRecord {
            id: parse_field(toks[0], "id", line_no)?,
            type_code: parse_field(toks[1], "type", line_no)?,
            x: parse_field(toks[2], "x", line_no)?,
            y: parse_field(toks[3], "y", line_no)?,
            z: parse_field(toks[4], "z", line_no)?,
            radius: parse_field(toks[5], "radius", line_no)?,
            parent: parse_field(toks[6], "parent", line_no)?,
        });
        lines.push(line_no);
    }
    Morphology::validated(records, &lines)
}

/// One record per line, space-separated, ids ascending. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_swc(m: &Morphology) -> String {
    let mut out = String::new();
    for r in &m.records {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            r.id, r.type_code, r.x, r.y, r.z, r.radius, r.parent
        )
        .expect("writing to a String");
    }
    out
}

/// Subdivides every parent-child segment so consecutive points are at most
/// `step` apart. Inserted points are evenly spaced, take the child's type and a
/// linearly interpolated radius, and get fresh ids above the current maximum.
pub fn resample(m: &Morphology, step: f64) -> Result<Morphology> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param(
            "step",
            format!("must be positive, got {step}"),
        ));
    }
    let mut next_id = m.records.iter().map(|r| r.id).max().unwrap_or(0) + 1;
    let index: HashMap<i64, usize> = m
        .records
        .iter()
        .enumerate()
        .map(|(k, r)| (r.id, k))
        .collect();
    let mut out = m.records.clone();
    for k in 0..m.records.len() {
        let child = m.records[k];
        if child.parent == -1 {
            continue;
        }
        let parent = m.records[index[&child.parent]];
        let len = crate::spatial::dist_sq(&parent.position(), &child.position()).sqrt();
        let pieces = (len / step).ceil() as i64;
        if pieces <= 1 {
            continue;
        }
        let mut prev = parent.id;
        for s in 1..pieces {
            let t = s as f64 / pieces as f64;
            out.push(SwcRecord {
                id: next_id,
                type_code: child.type_code,
                x: parent.x + t * (child.x - parent.x),
                y: parent.y + t * (child.y - parent.y),
                z: parent.z + t * (child.z - parent.z),
                radius: parent.radius + t * (child.radius - parent.radius),
                parent: prev,
            });
            prev = next_id;
            next_id += 1;
        }
        // originals keep their slots; inserted points are appended after them
        out[k].parent = prev;
    }
    Morphology::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: i64, x: f64, y: f64, z: f64, parent: i64) -> SwcRecord {
        SwcRecord {
            id,
            type_code: 3,
            x,
            y,
            z,
            radius: 1.0,
            parent,
        }
    }

    #[test]
    fn single_root() {
        let m = parse_swc("1 2 0.0 0.0 0.0 1.0 -1").unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.records()[0].type_code, 2);
        assert_eq!(m.records()[0].parent, -1);
    }

    #[test]
    fn comments_only() {
        let m = parse_swc("# header\n#  another\n\n").unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn dangling_parent_names_line() {
        let err = parse_swc("# c\n1 1 0 0 0 1 -1\n2 3 1 0 0 1 99\n").unwrap_err();
        match err {
            Error::ParseLine { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("99"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_swc("1 1 0 0 0 1"),
            Err(Error::ParseLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_swc("1 1 0 a 0 1 -1"),
            Err(Error::ParseLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_swc("1 1 0 0 0 1 -1\n1 1 0 0 0 1 -1"),
            Err(Error::ParseLine { line: 2, .. })
        ));
        let cyc = parse_swc("1 1 0 0 0 1 -1\n2 1 0 0 0 1 3\n3 1 0 0 0 1 2\n").unwrap_err();
        assert!(cyc.to_string().contains("cycle"), "{cyc}");
        assert!(parse_swc("1 1 0 0 0 0 -1").is_err());
    }

    #[test]
    fn write_sorts_by_id() {
        let m = Morphology::new(vec![rec(2, 1.0, 0.0, 0.0, 1), rec(1, 0.0, 0.0, 0.0, -1)]).unwrap();
        assert_eq!(write_swc(&m), "1 3 0 0 0 1 -1\n2 3 1 0 0 1 1\n");
        assert_eq!(parse_swc(&write_swc(&m)).unwrap(), m);
    }

    #[test]
    fn resample_short_segment_unchanged() {
        let m = Morphology::new(vec![rec(1, 0.0, 0.0, 0.0, -1), rec(2, 1.0, 0.0, 0.0, 1)]).unwrap();
        assert_eq!(resample(&m, 2.0).unwrap(), m);
    }

    #[test]
    fn resample_inserts_evenly() {
        let m = Morphology::new(vec![rec(1, 0.0, 0.0, 0.0, -1), rec(2, 4.0, 0.0, 0.0, 1)]).unwrap();
        let r = resample(&m, 1.0).unwrap();
        assert_eq!(r.len(), 5);
        let xs: Vec<f64> = r.records()[2..].iter().map(|r| r.x).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
        // child now hangs off the last inserted point
        assert_eq!(r.records()[1].parent, 5);
        assert_eq!(r.segments().len(), 4);
        assert!(resample(&m, 0.0).is_err());
    }

    #[test]
    fn without_subtree_drops_descendants() {
        let m = Morphology::new(vec![
            rec(1, 0.0, 0.0, 0.0, -1),
            rec(2, 1.0, 0.0, 0.0, 1),
            rec(3, 2.0, 0.0, 0.0, 2),
            rec(4, 0.0, 1.0, 0.0, 1),
        ])
        .unwrap();
        let cut = m.without_subtree(2);
        assert_eq!(
            cut.records().iter().map(|r| r.id).collect::<Vec<_>>(),
            vec![1, 4]
        );
    }
}
