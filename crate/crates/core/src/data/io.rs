//! JSON-lines dataset files: one header line with config and provenance,
//! then one record per tuple or initial sample.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{InitialSample, OfflineDataset, Provenance, TransitionTuple, WindowConfig};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: WindowConfig,
    provenance: Provenance,
    n: usize,
    n_init: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<O, A> {
    Header(Header),
    Tuple(TransitionTuple<O, A>),
    Init(InitialSample<O, A>),
}

pub fn write_dataset<O, A, W>(ds: &OfflineDataset<O, A>, out: W) -> Result<()>
where
    O: Serialize + Clone,
    A: Serialize + Clone,
    W: Write,
{
    let mut w = BufWriter::new(out);
    let header: Line<O, A> = Line::Header(Header {
        format_version: FORMAT_VERSION,
        config: ds.config,
        provenance: ds.provenance.clone(),
        n: ds.n(),
        n_init: ds.n_init(),
    });
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &ds.tuples {
        serde_json::to_writer(&mut w, &Line::<O, A>::Tuple(t.clone()))?;
        w.write_all(b"\n")?;
    }
    for s in &ds.initial_samples {
        serde_json::to_writer(&mut w, &Line::<O, A>::Init(s.clone()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset<O, A>(ds: &OfflineDataset<O, A>, path: impl AsRef<Path>) -> Result<()>
where
    O: Serialize + Clone,
    A: Serialize + Clone,
{
    write_dataset(ds, std::fs::File::create(path)?)
}

pub fn read_dataset<O, A, R>(input: R) -> Result<OfflineDataset<O, A>>
where
    O: DeserializeOwned + Clone + PartialEq,
    A: DeserializeOwned + Clone + PartialEq,
    R: std::io::Read,
{
    let reader = BufReader::new(input);
    let mut header: Option<Header> = None;
    let mut tuples = Vec::new();
    let mut initial = Vec::new();
    let mut last_line = 0;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        last_line = line_no;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let fmt = |message: String| Error::Format { line: line_no, message };
        let record: Line<O, A> = serde_json::from_str(&text).map_err(|e| fmt(e.to_string()))?;
        match (record, &header) {
            (Line::Header(h), None) => {
                if h.format_version != FORMAT_VERSION {
                    return Err(fmt(format!("unsupported format version {}", h.format_version)));
                }
                h.config.validate().map_err(|e| fmt(e.to_string()))?;
                header = Some(h);
            }
            (Line::Header(_), Some(_)) => return Err(fmt("duplicate header".into())),
            (_, None) => return Err(fmt("first record must be the header".into())),
            (Line::Tuple(t), Some(h)) => {
                t.check(&h.config).map_err(|e| fmt(e.to_string()))?;
                tuples.push(t);
            }
            (Line::Init(s), Some(h)) => {
                if s.z.len() != h.config.m || s.f.len() != h.config.m_f || s.f.actions.len() != h.config.m_f - 1 {
                    return Err(fmt("initial sample does not match the window config".into()));
                }
                initial.push(s);
            }
        }
    }
    let header = header.ok_or(Error::Format {
        line: last_line.max(1),
        message: "missing header".into(),
    })?;
    if tuples.len() != header.n || initial.len() != header.n_init {
        return Err(Error::Format {
            line: last_line,
            message: format!(
                "header declares {} tuples and {} initial samples, found {} and {}",
                header.n,
                header.n_init,
                tuples.len(),
                initial.len()
            ),
        });
    }
    Ok(OfflineDataset {
        config: header.config,
        provenance: header.provenance,
        tuples,
        initial_samples: initial,
    })
}

pub fn load_dataset<O, A>(path: impl AsRef<Path>) -> Result<OfflineDataset<O, A>>
where
    O: DeserializeOwned + Clone + PartialEq,
    A: DeserializeOwned + Clone + PartialEq,
{
    read_dataset(std::fs::File::open(path)?)
}
