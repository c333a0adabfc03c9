//! CSV and JSON formats for joints, datasets and marginal sets.
//!
//! * joint CSV: header `x1,...,xp,y,prob`, missing atoms are zero.
//! * dataset CSV: header `x1,...,xp,y`, one sample per row.
//! * generic joint CSV: header `x,y,prob` over two arbitrary finite
//!   alphabets, 0-based labels, missing cells are zero.
//! * marginals JSON: `{"p", "m", "xx": {"i,j": [...]}, "xy": {"i": [...]}}`
//!   with 1-based variable indices and row-major tables.
//!
//! CSV files carry no alphabet size; unless one is given it is inferred as
//! the largest X-label plus one (at least 2).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AlphabetSpec, Dataset, DiscreteJoint, PairwiseMarginalSet};
use crate::error::{Error, Result};
use crate::hgr::GenericJoint;

fn parse_header(headers: &csv::StringRecord, trailing: &[&str]) -> Result<usize> {
    let n = headers.len();
    if n < trailing.len() + 1 {
        return Err(Error::Parse(format!("header has only {n} columns")));
    }
    let p = n - trailing.len();
    for (i, h) in headers.iter().take(p).enumerate() {
        if h.trim() != format!("x{}", i + 1) {
            return Err(Error::Parse(format!(
                "expected column x{}, found {h:?}",
                i + 1
            )));
        }
    }
    for (h, want) in headers.iter().skip(p).zip(trailing) {
        if h.trim() != *want {
            return Err(Error::Parse(format!("expected column {want}, found {h:?}")));
        }
    }
    Ok(p)
}

fn parse_label(field: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad label {field:?}")))
}

fn infer_m(max_label: usize, m: Option<usize>) -> usize {
    m.unwrap_or((max_label + 1).max(2))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn read_joint_csv<R: Read>(r: R, m: Option<usize>) -> Result<DiscreteJoint> {
    let mut rdr = reader(r);
    let p = parse_header(rdr.headers()?, &["y", "prob"])?;
    let mut rows = Vec::new();
    let mut max_label = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let labels = (0..p)
            .map(|i| parse_label(&rec[i], line))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_label(&rec[p], line)?;
        let prob: f64 = rec[p + 1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad probability {:?}", &rec[p + 1])))?;
        max_label = labels.iter().copied().fold(max_label, usize::max);
        rows.push((labels, y, prob));
    }
    let spec = AlphabetSpec::new(p, infer_m(max_label, m))?;
    DiscreteJoint::from_table(spec, &rows)
}

/// Writes every atom in mixed-radix order, `y` varying fastest.
pub fn write_joint_csv<W: Write>(w: W, joint: &DiscreteJoint) -> Result<()> {
    let spec = joint.spec();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=spec.p()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    header.push("prob".into());
    wtr.write_record(&header)?;
    for x in 0..joint.x_states() {
        let labels = spec.decode(x);
        for y in 0..2 {
            let mut rec: Vec<String> = labels.iter().map(ToString::to_string).collect();
            rec.push(y.to_string());
            rec.push(joint.prob(x, y).to_string());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(r: R, m: Option<usize>) -> Result<Dataset> {
    let mut rdr = reader(r);
    let p = parse_header(rdr.headers()?, &["y"])?;
    let mut rows = Vec::new();
    let mut max_label = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let labels = (0..p)
            .map(|i| parse_label(&rec[i], line))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_label(&rec[p], line)?;
        max_label = labels.iter().copied().fold(max_label, usize::max);
        rows.push((labels, y));
    }
    let spec = AlphabetSpec::new(p, infer_m(max_label, m))?;
    Dataset::new(spec, &rows)
}

pub fn write_dataset_csv<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=data.spec().p()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    wtr.write_record(&header)?;
    for (labels, y) in data.rows() {
        let mut rec: Vec<String> = labels.iter().map(ToString::to_string).collect();
        rec.push(y.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Alphabet sizes are the largest labels plus one.
pub fn read_generic_csv<R: Read>(r: R) -> Result<GenericJoint> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?;
    if headers.len() != 3 || &headers[0] != "x" || &headers[1] != "y" || &headers[2] != "prob" {
        return Err(Error::Parse(format!(
            "expected header x,y,prob, found {headers:?}"
        )));
    }
    let mut cells = Vec::new();
    let (mut nx, mut ny) = (0, 0);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let x = parse_label(&rec[0], line)?;
        let y = parse_label(&rec[1], line)?;
        let prob: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad probability {:?}", &rec[2])))?;
        nx = nx.max(x + 1);
        ny = ny.max(y + 1);
        cells.push((x, y, prob));
    }
    GenericJoint::from_triples(nx, ny, &cells)
}

pub fn write_generic_csv<W: Write>(w: W, joint: &GenericJoint) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "y", "prob"])?;
    for x in 0..joint.nx() {
        for y in 0..joint.ny() {
            wtr.write_record(&[
                x.to_string(),
                y.to_string(),
                joint.prob()[(x, y)].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TableRepr {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl TableRepr {
    fn into_matrix(self, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>> {
        let flat = match self {
            TableRepr::Flat(v) => v,
            TableRepr::Nested(rs) => {
                if rs.iter().any(|r| r.len() != cols) {
                    return Err(Error::Parse(format!("table {name}: ragged rows")));
                }
                rs.into_iter().flatten().collect()
            }
        };
        if flat.len() != rows * cols {
            return Err(Error::Parse(format!(
                "table {name}: {} entries, expected {}",
                flat.len(),
                rows * cols
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &flat))
    }
}

#[derive(Deserialize)]
struct MarginalsIn {
    p: usize,
    m: usize,
    #[serde(default)]
    xx: BTreeMap<String, TableRepr>,
    xy: BTreeMap<String, TableRepr>,
}

#[derive(Serialize)]
struct MarginalsOut {
    p: usize,
    m: usize,
    xx: BTreeMap<String, Vec<f64>>,
    xy: BTreeMap<String, Vec<f64>>,
}

fn parse_index(s: &str, p: usize) -> Result<usize> {
    let i: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad variable index {s:?}")))?;
    if i == 0 || i > p {
        return Err(Error::Parse(format!("variable index {i} outside 1..={p}")));
    }
    Ok(i - 1)
}

fn row_major(t: &DMatrix<f64>) -> Vec<f64> {
    t.transpose().as_slice().to_vec()
}

/// Parses a marginals JSON document. The result is not validated.
pub fn read_marginals_json<R: Read>(r: R) -> Result<PairwiseMarginalSet> {
    let raw: MarginalsIn = serde_json::from_reader(r)?;
    let spec = AlphabetSpec::new(raw.p, raw.m)?;
    let mut xy_tables: Vec<Option<DMatrix<f64>>> = vec![None; raw.p];
    for (key, t) in raw.xy {
        let i = parse_index(&key, raw.p)?;
        xy_tables[i] = Some(t.into_matrix(raw.m, 2, &key)?);
    }
    let xy = xy_tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| Error::Parse(format!("missing xy table {}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let mut xx = BTreeMap::new();
    for (key, t) in raw.xx {
        let (a, b) = key
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad pair key {key:?}")))?;
        let (i, j) = (parse_index(a, raw.p)?, parse_index(b, raw.p)?);
        if i == j {
            return Err(Error::Parse(format!("pair key {key:?} repeats a variable")));
        }
        xx.insert((i, j), t.into_matrix(raw.m, raw.m, &key)?);
    }
    PairwiseMarginalSet::from_parts(spec, xx, xy)
}

/// Writes the `i < j` tables only.
pub fn write_marginals_json<W: Write>(w: W, marginals: &PairwiseMarginalSet) -> Result<()> {
    let spec = marginals.spec();
    let mut xx = BTreeMap::new();
    for i in 0..spec.p() {
        for j in (i + 1)..spec.p() {
            if let Some(t) = marginals.pair(i, j) {
                xx.insert(format!("{},{}", i + 1, j + 1), row_major(&t));
            }
        }
    }
    let xy = (0..spec.p())
        .map(|i| (format!("{}", i + 1), row_major(marginals.xy(i))))
        .collect();
    let out = MarginalsOut {
        p: spec.p(),
        m: spec.m(),
        xx,
        xy,
    };
    serde_json::to_writer_pretty(w, &out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{nonadditive_fixture, pairwise_from_joint, random_joint};

    #[test]
    fn joint_csv_round_trip() {
        let j = random_joint(AlphabetSpec::new(3, 3).unwrap(), 5).unwrap();
        let mut buf = Vec::new();
        write_joint_csv(&mut buf, &j).unwrap();
        let back = read_joint_csv(buf.as_slice(), None).unwrap();
        assert_eq!(back, j);
    }

    #[test]
    fn joint_csv_sparse_rows_and_inferred_m() {
        let text =
            "x1,x2,y,prob\n0,0,1,0.1\n1,0,0,0.2\n1,0,1,0.2\n0,1,0,0.1\n0,1,1,0.3\n1,1,0,0.1\n";
        let j = read_joint_csv(text.as_bytes(), None).unwrap();
        assert_eq!(j, nonadditive_fixture());
        let wide = read_joint_csv(text.as_bytes(), Some(3)).unwrap();
        assert_eq!(wide.spec().m(), 3);
    }

    #[test]
    fn joint_csv_errors() {
        let bad_header = "a,y,prob\n0,0,1\n";
        assert!(matches!(
            read_joint_csv(bad_header.as_bytes(), None),
            Err(Error::Parse(_))
        ));
        let bad_prob = "x1,y,prob\n0,0,half\n";
        assert!(matches!(
            read_joint_csv(bad_prob.as_bytes(), None),
            Err(Error::Parse(_))
        ));
        let dup = "x1,y,prob\n0,0,0.5\n0,0,0.5\n";
        assert!(matches!(
            read_joint_csv(dup.as_bytes(), None),
            Err(Error::DuplicateEntry(_))
        ));
        let neg = "x1,y,prob\n0,0,1.5\n1,1,-0.5\n";
        assert!(matches!(
            read_joint_csv(neg.as_bytes(), None),
            Err(Error::NegativeProbability { .. })
        ));
        let bad_y = "x1,y,prob\n0,2,1\n";
        assert!(matches!(
            read_joint_csv(bad_y.as_bytes(), None),
            Err(Error::LabelOutOfRange(_))
        ));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let spec = AlphabetSpec::new(2, 3).unwrap();
        let data =
            Dataset::new(spec, &[(vec![0, 2], 1), (vec![1, 1], 0), (vec![2, 0], 1)]).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &data).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice(), None).unwrap(), data);
        assert!(matches!(
            read_dataset_csv("x1,y\n".as_bytes(), None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn generic_csv_round_trip() {
        let text = "x,y,prob\n0,0,0.25\n2,1,0.5\n1,2,0.25\n";
        let g = read_generic_csv(text.as_bytes()).unwrap();
        assert_eq!((g.nx(), g.ny()), (3, 3));
        assert_eq!(g.prob()[(2, 1)], 0.5);
        let mut buf = Vec::new();
        write_generic_csv(&mut buf, &g).unwrap();
        assert_eq!(read_generic_csv(buf.as_slice()).unwrap(), g);
        assert!(matches!(
            read_generic_csv("x1,y,prob\n".as_bytes()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn marginals_json_round_trip() {
        let m = pairwise_from_joint(&random_joint(AlphabetSpec::new(3, 2).unwrap(), 9).unwrap());
        let mut buf = Vec::new();
        write_marginals_json(&mut buf, &m).unwrap();
        let back = read_marginals_json(buf.as_slice()).unwrap();
        assert!(back.max_abs_diff(&m) == 0.0);
    }

    #[test]
    fn marginals_json_nested_tables() {
        let text = r#"{"p": 2, "m": 2,
            "xx": {"1,2": [[0.1, 0.4], [0.4, 0.1]]},
            "xy": {"1": [[0.1, 0.4], [0.3, 0.2]], "2": [0.2, 0.3, 0.2, 0.3]}}"#;
        let m = read_marginals_json(text.as_bytes()).unwrap();
        assert!(m.max_abs_diff(&pairwise_from_joint(&nonadditive_fixture())) < 1e-15);
    }

    #[test]
    fn marginals_json_errors() {
        let missing_xy = r#"{"p": 2, "m": 2, "xx": {}, "xy": {"1": [0.25, 0.25, 0.25, 0.25]}}"#;
        assert!(matches!(
            read_marginals_json(missing_xy.as_bytes()),
            Err(Error::Parse(_))
        ));
        let bad_key = r#"{"p": 1, "m": 2, "xy": {"0": [0.25, 0.25, 0.25, 0.25]}}"#;
        assert!(matches!(
            read_marginals_json(bad_key.as_bytes()),
            Err(Error::Parse(_))
        ));
        let short = r#"{"p": 1, "m": 2, "xy": {"1": [0.25, 0.25]}}"#;
        assert!(matches!(
            read_marginals_json(short.as_bytes()),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            read_marginals_json("not json".as_bytes()),
            Err(Error::Parse(_))
        ));
    }
}
