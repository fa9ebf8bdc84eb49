//! File formats.
//!
//! - Real-valued series: wide CSV, one row per time, one column per series,
//!   with an optional leading `time`/`t`/`day` column.
//! - Epidemics: either a wide daily-count CSV of the same shape, or an event
//!   list with columns `id,time` (an optional `type` column keeps only
//!   `infection` rows). The format is detected from the header.
//! - Chains, checkpoints and normalization constants: NDJSON.
//! - Summaries: similarity matrix, labels and trace as CSV.

use std::io::{BufRead, Read, Write};

use crate::estimation::SimilarityMatrix;
use crate::kernel::sir::EpiSeries;
use crate::orders::Partition;
use crate::proposal::{NormConstant, NormConstants};
use crate::sampler::ChainRecord;
use crate::{Error, Result};

const INDEX_COLUMNS: [&str; 4] = ["time", "t", "day", "date"];

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// A table of named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct WideTable<V> {
    pub ids: Vec<String>,
    pub columns: Vec<Vec<V>>,
}

fn read_wide<V: std::str::FromStr>(reader: impl Read) -> Result<WideTable<V>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let skip = usize::from(
        header
            .first()
            .is_some_and(|h| INDEX_COLUMNS.contains(&h.to_ascii_lowercase().as_str())),
    );
    let ids: Vec<String> = header[skip..].to_vec();
    if ids.is_empty() {
        return Err(Error::Parse("no series columns in header".into()));
    }
    let mut columns: Vec<Vec<V>> = (0..ids.len()).map(|_| Vec::new()).collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields", row + 2, rec.len())));
        }
        for (c, field) in rec.iter().skip(skip).enumerate() {
            let v = field.parse::<V>().map_err(|_| {
                Error::Parse(format!("row {}, column {}: cannot parse {field:?}", row + 2, ids[c]))
            })?;
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(WideTable { ids, columns })
}

pub fn read_wide_series(reader: impl Read) -> Result<WideTable<f64>> {
    let t = read_wide::<f64>(reader)?;
    if t.columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse("non-finite value in series".into()));
    }
    Ok(t)
}

/// Writes columns as a wide CSV with a leading 1-based `time` column.
pub fn write_wide<V: std::fmt::Display>(writer: impl Write, table: &WideTable<V>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(table.ids.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let len = table.columns.first().map_or(0, Vec::len);
    for row in 0..len {
        let mut rec = vec![(row + 1).to_string()];
        rec.extend(table.columns.iter().map(|c| c[row].to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads epidemic data in either supported shape; `horizon` is required for
/// event lists and checked against daily-count tables when given.
pub fn read_epidemics(reader: impl Read, horizon: Option<usize>) -> Result<(Vec<String>, Vec<EpiSeries>)> {
    let mut buf = String::new();
    std::io::BufReader::new(reader).read_to_string(&mut buf)?;
    let first = buf.lines().next().unwrap_or_default().to_ascii_lowercase();
    let cols: Vec<&str> = first.split(',').map(str::trim).collect();
    if cols.contains(&"id") && cols.contains(&"time") {
        let t = horizon.ok_or_else(|| Error::Config("event lists need an explicit horizon T".into()))?;
        read_event_list(buf.as_bytes(), t)
    } else {
        let table = read_wide::<u32>(buf.as_bytes())?;
        if let Some(t) = horizon {
            if table.columns[0].len() != t {
                return Err(Error::Mismatch(format!(
                    "daily counts cover {} days, expected {t}",
                    table.columns[0].len()
                )));
            }
        }
        let series = table.columns.into_iter().map(EpiSeries::from_counts).collect();
        Ok((table.ids, series))
    }
}

fn read_event_list(reader: impl Read, t: usize) -> Result<(Vec<String>, Vec<EpiSeries>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let id_col = find("id").expect("checked by caller");
    let time_col = find("time").expect("checked by caller");
    let type_col = find("type");
    let mut ids: Vec<String> = Vec::new();
    let mut times: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if let Some(c) = type_col {
            if !rec.get(c).unwrap_or_default().eq_ignore_ascii_case("infection") {
                continue;
            }
        }
        let id = rec.get(id_col).unwrap_or_default().to_string();
        let time: f64 = rec
            .get(time_col)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad time", row + 2)))?;
        let k = match ids.iter().position(|x| *x == id) {
            Some(k) => k,
            None => {
                ids.push(id);
                times.push(Vec::new());
                ids.len() - 1
            }
        };
        times[k].push(time);
    }
    let series = times
        .iter()
        .map(|ts| EpiSeries::from_times(ts, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, series))
}

/// Writes events as `id,time,type` rows.
pub fn write_event_list(writer: impl Write, ids: &[String], events: &[Vec<(f64, &str)>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "time", "type"]).map_err(csv_err)?;
    for (id, evs) in ids.iter().zip(events) {
        for (time, kind) in evs {
            w.write_record([id.as_str(), &time.to_string(), kind]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ndjson<T: serde::Serialize>(mut writer: impl Write, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut writer, it)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_ndjson<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_constants(writer: impl Write, c: &NormConstants) -> Result<()> {
    write_ndjson(writer, &c.entries)
}

pub fn read_constants(reader: impl BufRead) -> Result<NormConstants> {
    let entries: Vec<NormConstant> = read_ndjson(reader)?;
    Ok(NormConstants { entries })
}

pub fn read_chain(reader: impl BufRead) -> Result<Vec<ChainRecord>> {
    read_ndjson(reader)
}

pub fn write_similarity(writer: impl Write, ids: &[String], m: &SimilarityMatrix) -> Result<()> {
    if ids.len() != m.n() {
        return Err(Error::Mismatch("ids do not match matrix size".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ids).map_err(csv_err)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_similarity(reader: impl Read) -> Result<(Vec<String>, SimilarityMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let ids: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(
            rec.iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("bad entry {f:?}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if rows.len() != ids.len() {
        return Err(Error::Parse("similarity matrix is not square".into()));
    }
    Ok((ids, SimilarityMatrix::from_rows(rows)?))
}

/// `id,label` rows with 1-based cluster labels.
pub fn write_labels(writer: impl Write, ids: &[String], p: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "label"]).map_err(csv_err)?;
    for (id, l) in ids.iter().zip(p.labels()) {
        w.write_record([id.as_str(), &(l + 1).to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(reader: impl Read) -> Result<(Vec<String>, Partition)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        let l: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Parse("bad label".into()))?;
        labels.push(l);
    }
    Ok((ids, Partition::from_labels(&labels)))
}

/// `iter,logpost,clusters,accepted` rows.
pub fn write_trace(writer: impl Write, records: &[ChainRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iter", "logpost", "clusters", "accepted"]).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.logpost.to_string(),
            r.partition.k().to_string(),
            u8::from(r.accepted).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::similarity_matrix;
    use crate::orders::RandomOrder;

    #[test]
    fn wide_round_trip() {
        let t = WideTable {
            ids: vec!["a".into(), "b".into()],
            columns: vec![vec![0.1, -2.5, 3.0], vec![1e-9, 0.0, 7.25]],
        };
        let mut buf = Vec::new();
        write_wide(&mut buf, &t).unwrap();
        assert_eq!(read_wide_series(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn wide_without_index_column() {
        let t = read_wide_series("x,y\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(t.ids, vec!["x", "y"]);
        assert_eq!(t.columns[1], vec![2.0, 4.0]);
        assert!(read_wide_series("x,y\n1,oops\n".as_bytes()).is_err());
    }

    #[test]
    fn epidemic_formats_are_detected() {
        let (ids, s) = read_epidemics("day,A,B\n1,3,0\n2,1,5\n".as_bytes(), Some(2)).unwrap();
        assert_eq!(ids, vec!["A", "B"]);
        assert_eq!(s[1].counts(), &[0, 5]);
        let ev = "id,time,type\nA,0.5,infection\nA,1.5,recovery\nB,1.2,infection\nA,1.9,infection\n";
        let (ids, s) = read_epidemics(ev.as_bytes(), Some(2)).unwrap();
        assert_eq!(ids, vec!["A", "B"]);
        assert_eq!(s[0].counts(), &[1, 1]);
        assert_eq!(s[1].counts(), &[0, 1]);
        assert!(read_epidemics(ev.as_bytes(), None).is_err());
    }

    #[test]
    fn chain_and_summaries_round_trip() {
        let rec = ChainRecord {
            iter: 3,
            partition: Partition::from_labels(&[0, 1, 0]),
            orders: vec![RandomOrder::from_bitstring("0101").unwrap(), RandomOrder::one_block(5)],
            logpost: -12.5,
            accepted: true,
        };
        let mut buf = Vec::new();
        write_ndjson(&mut buf, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(read_chain(buf.as_slice()).unwrap(), vec![rec.clone()]);

        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let sim = similarity_matrix(&[rec.partition.clone(), Partition::one_cluster(3)]).unwrap();
        let mut buf = Vec::new();
        write_similarity(&mut buf, &ids, &sim).unwrap();
        assert_eq!(read_similarity(buf.as_slice()).unwrap(), (ids.clone(), sim));

        let mut buf = Vec::new();
        write_labels(&mut buf, &ids, &rec.partition).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), (ids, rec.partition));
    }
}
