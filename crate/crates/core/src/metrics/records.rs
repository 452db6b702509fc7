use std::io::{Read, Write};

use super::{MetricRecord, MetricValue};
use crate::ingest::CaseMeta;

pub const RECORD_COLUMNS: [&str; 10] = [
    "case_id",
    "team",
    "structure",
    "dsc",
    "hd",
    "asd",
    "split",
    "institution",
    "scanner",
    "aop_stratum",
];

#[derive(Debug, thiserror::Error)]
pub enum RecordsCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Field { line: u64, message: String },
}

/// Writes records in the per-case CSV layout. Finite values use six decimals,
/// unbounded ones the literal `inf`.
pub fn write_records_csv(writer: impl Write, records: &[MetricRecord]) -> Result<(), RecordsCsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.case_id(),
            r.team.as_str(),
            r.structure.as_str(),
            &format!("{:.6}", r.dsc),
            &r.hd.to_string(),
            &r.asd.to_string(),
            r.meta.split.as_str(),
            r.meta.institution.as_str(),
            r.meta.scanner.as_str(),
            r.meta.aop_stratum.map(|s| s.as_str()).unwrap_or("unknown"),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records_csv(reader: impl Read) -> Result<Vec<MetricRecord>, RecordsCsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 10];
    for (slot, name) in idx.iter_mut().zip(RECORD_COLUMNS) {
        *slot = headers.iter().position(|h| h.trim() == name).ok_or_else(|| RecordsCsvError::Field {
            line: 1,
            message: format!("missing column `{name}`"),
        })?;
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| RecordsCsvError::Field { line, message };
        let get = |i: usize| row.get(idx[i]).unwrap_or("").trim();
        let mut meta = CaseMeta::new(
            get(0),
            get(6).parse().map_err(bad)?,
            get(7).parse().map_err(bad)?,
            get(8).parse().map_err(bad)?,
        );
        let stratum = get(9);
        if !stratum.is_empty() && stratum != "unknown" {
            meta.aop_stratum = Some(stratum.parse().map_err(bad)?);
        }
        let dsc = match get(3).parse::<MetricValue>().map_err(bad)? {
            MetricValue::Finite(x) if (0.0..=1.0).contains(&x) => x,
            other => return Err(bad(format!("dsc out of range: {other}"))),
        };
        out.push(MetricRecord {
            meta,
            team: get(1).to_string(),
            structure: get(2).parse().map_err(bad)?,
            dsc,
            hd: get(4).parse().map_err(bad)?,
            asd: get(5).parse().map_err(bad)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AopStratum, Institution, Scanner, Split};
    use crate::mask::Structure;

    #[test]
    #[allow(clippy::approx_constant)]
    fn csv_layout_and_round_trip() {
        let mut meta = CaseMeta::new("case_007", Split::Test2, Institution::Jnu, Scanner::ObEye);
        meta.aop_stratum = Some(AopStratum::AtLeast120);
        let recs = vec![
            MetricRecord {
                meta: meta.clone(),
                team: "alpha".into(),
                structure: Structure::Ps,
                dsc: 0.0,
                hd: MetricValue::Unbounded,
                asd: MetricValue::Unbounded,
            },
            MetricRecord {
                meta,
                team: "alpha".into(),
                structure: Structure::Fh,
                dsc: 0.875,
                hd: MetricValue::Finite(2.0_f64.sqrt()),
                asd: MetricValue::Finite(0.5),
            },
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "case_id,team,structure,dsc,hd,asd,split,institution,scanner,aop_stratum\n\
             case_007,alpha,PS,0.000000,inf,inf,Test2,JNU,ObEye,AtLeast120\n\
             case_007,alpha,FH,0.875000,1.414214,0.500000,Test2,JNU,ObEye,AtLeast120\n"
        );
        let back = read_records_csv(text.as_bytes()).unwrap();
        assert_eq!(back[0], recs[0]);
        assert_eq!(back[1].hd, MetricValue::Finite(1.414214));
    }

    #[test]
    fn rejects_bad_values() {
        let text = "case_id,team,structure,dsc,hd,asd,split,institution,scanner,aop_stratum\n\
                    c,t,PS,1.5,1,1,Test2,SMU,ObEye,unknown\n";
        assert!(read_records_csv(text.as_bytes()).is_err());
    }
}
