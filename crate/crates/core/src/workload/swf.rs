//! Standard Workload Format (v2.2) reader and writer.
//!
//! Field mapping (1-based): 1 job id, 2 submit time, 4 run time, 5 allocated
//! processors (falls back to field 8, requested processors, when -1), 9 requested
//! time (falls back to the run time when -1). Remaining fields are read for
//! validity but not kept.

use std::fmt::Write as _;

use super::{Job, WorkloadError, WorkloadTrace};

const SWF_FIELDS: usize = 18;
const MIN_FIELDS: usize = 9;

#[derive(Clone, Debug, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

/// Result of parsing an SWF document: the trace plus whatever was skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct SwfParse {
    pub trace: WorkloadTrace,
    /// Well-formed lines whose job was filtered out (non-positive runtime or size,
    /// or larger than the machine).
    pub dropped: usize,
    /// Lines that could not be decoded. Parsing continues past them.
    pub errors: Vec<LineError>,
}

struct Header {
    max_procs: Option<u32>,
    computer: Option<String>,
}

fn parse_header(line: &str, header: &mut Header) {
    let body = line.trim_start_matches(';').trim();
    let Some((key, value)) = body.split_once(':') else {
        return;
    };
    let value = value.trim();
    match key.trim() {
        "MaxProcs" => {
            if let Ok(p) = value.parse::<u32>() {
                if p > 0 {
                    header.max_procs = Some(p);
                }
            }
        }
        "MaxNodes" => {
            if header.max_procs.is_none() {
                if let Ok(p) = value.parse::<u32>() {
                    if p > 0 {
                        header.max_procs = Some(p);
                    }
                }
            }
        }
        "Computer" if !value.is_empty() => header.computer = Some(value.to_string()),
        _ => {}
    }
}

enum Decoded {
    Job(Job),
    Dropped,
}

fn decode_line(text: &str) -> Result<Decoded, String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < MIN_FIELDS || tokens.len() > SWF_FIELDS {
        return Err(format!(
            "expected {MIN_FIELDS} to {SWF_FIELDS} fields, found {}",
            tokens.len()
        ));
    }
    let mut fields = [-1.0f64; SWF_FIELDS];
    for (i, tok) in tokens.iter().enumerate() {
        let v: f64 = tok
            .parse()
            .map_err(|_| format!("field {} is not numeric: {tok:?}", i + 1))?;
        if !v.is_finite() {
            return Err(format!("field {} is not finite", i + 1));
        }
        fields[i] = v;
    }
    let id = fields[0];
    if id < 1.0 || id.fract() != 0.0 || id > u64::MAX as f64 {
        return Err(format!("job id {id} is not a positive integer"));
    }
    let submit = fields[1];
    if submit < 0.0 {
        return Err(format!("negative submit time {submit}"));
    }
    let run_time = fields[3];
    let mut procs = fields[4];
    if procs == -1.0 {
        procs = fields[7];
    }
    if run_time <= 0.0 || procs <= 0.0 {
        return Ok(Decoded::Dropped);
    }
    if procs.fract() != 0.0 || procs > u32::MAX as f64 {
        return Err(format!("processor count {procs} is not an integer"));
    }
    let requested = if fields[8] > 0.0 { fields[8] } else { run_time };
    let job = Job::new(id as u64, submit, run_time, requested, procs as u32)
        .map_err(|e| e.to_string())?;
    Ok(Decoded::Job(job))
}

/// Parses SWF text. Malformed lines are reported per line and skipped; a document
/// with no usable job at all is a hard error.
pub fn parse_swf(text: &str) -> Result<SwfParse, WorkloadError> {
    let mut header = Header {
        max_procs: None,
        computer: None,
    };
    let mut jobs = Vec::new();
    let mut dropped = 0;
    let mut errors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with(';') {
            parse_header(line, &mut header);
            continue;
        }
        match decode_line(line) {
            Ok(Decoded::Job(job)) => jobs.push(job),
            Ok(Decoded::Dropped) => dropped += 1,
            Err(reason) => errors.push(LineError {
                line: idx + 1,
                reason,
            }),
        }
    }
    let total_procs = match header.max_procs {
        Some(p) => {
            let before = jobs.len();
            jobs.retain(|j| j.requested_procs <= p);
            dropped += before - jobs.len();
            p
        }
        None => jobs.iter().map(|j| j.requested_procs).max().unwrap_or(0),
    };
    // Duplicate ids keep the first occurrence.
    let mut seen = std::collections::HashSet::new();
    let before = jobs.len();
    jobs.retain(|j| seen.insert(j.id));
    dropped += before - jobs.len();

    if jobs.is_empty() {
        return Err(WorkloadError::NoJobs {
            dropped,
            malformed: errors.len(),
        });
    }
    let name = header.computer.unwrap_or_else(|| "swf".to_string());
    let trace = WorkloadTrace::new(name, total_procs, jobs)?;
    Ok(SwfParse {
        trace,
        dropped,
        errors,
    })
}

fn push_num(out: &mut String, v: f64) {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        let _ = write!(out, "{}", v as i64);
    } else {
        let _ = write!(out, "{v}");
    }
}

/// Serialises a trace as SWF v2.2. Fields the model does not carry are written as -1.
pub fn write_swf(trace: &WorkloadTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "; Version: 2.2");
    let _ = writeln!(out, "; Computer: {}", trace.name);
    let _ = writeln!(out, "; MaxJobs: {}", trace.jobs.len());
    let _ = writeln!(out, "; MaxRecords: {}", trace.jobs.len());
    let _ = writeln!(out, "; MaxProcs: {}", trace.total_procs);
    let _ = writeln!(out, "; MaxNodes: {}", trace.total_procs);
    let _ = writeln!(out, "; Note: cost rates are not part of SWF and are not written");
    for job in &trace.jobs {
        let wait = job.wait_time.unwrap_or(-1.0);
        let procs = f64::from(job.requested_procs);
        let fields: [f64; SWF_FIELDS] = [
            job.id as f64,
            job.submit_time,
            wait,
            job.run_time,
            procs,
            -1.0,
            -1.0,
            procs,
            job.requested_time,
            -1.0,
            1.0,
            -1.0,
            -1.0,
            -1.0,
            -1.0,
            -1.0,
            -1.0,
            -1.0,
        ];
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            push_num(&mut out, *f);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "1 0 0 100 4 -1 -1 4 120 -1 1 1 1 1 1 -1 -1 -1";

    #[test]
    fn maps_swf_fields() {
        let p = parse_swf(LINE).unwrap();
        let j = &p.trace.jobs[0];
        assert_eq!(j.id, 1);
        assert_eq!(j.submit_time, 0.0);
        assert_eq!(j.run_time, 100.0);
        assert_eq!(j.requested_procs, 4);
        assert_eq!(j.requested_time, 120.0);
        assert_eq!(p.trace.total_procs, 4);
    }

    #[test]
    fn falls_back_on_missing_fields() {
        let p = parse_swf("7 5 -1 30 -1 -1 -1 16 -1 -1 1 -1 -1 -1 -1 -1 -1 -1").unwrap();
        let j = &p.trace.jobs[0];
        assert_eq!(j.requested_procs, 16);
        assert_eq!(j.requested_time, 30.0);
    }

    #[test]
    fn comments_and_drops() {
        let text = "; Version: 2.2\n; MaxProcs: 8\n\
                    1 0 0 -1 4 -1 -1 4 120 -1 1 1 1 1 1 -1 -1 -1\n\
                    2 1 0 10 16 -1 -1 16 120 -1 1 1 1 1 1 -1 -1 -1\n\
                    3 2 0 10 2 -1 -1 2 20 -1 1 1 1 1 1 -1 -1 -1\n";
        let p = parse_swf(text).unwrap();
        assert_eq!(p.trace.jobs.len(), 1);
        assert_eq!(p.dropped, 2);
        assert_eq!(p.trace.total_procs, 8);
        assert!(p.errors.is_empty());
    }

    #[test]
    fn malformed_lines_are_recoverable() {
        let text = format!("{LINE}\n2 x 0 10 2\n3 1 2\n");
        let p = parse_swf(&text).unwrap();
        assert_eq!(p.trace.jobs.len(), 1);
        assert_eq!(p.errors.len(), 2);
        assert_eq!(p.errors[0].line, 2);
        assert_eq!(p.errors[1].line, 3);
    }

    #[test]
    fn empty_document_is_an_error() {
        assert!(matches!(
            parse_swf("; Version: 2.2\n"),
            Err(WorkloadError::NoJobs { .. })
        ));
        assert!(matches!(
            parse_swf("1 0 0 -1 4 -1 -1 4 120 -1 1 1 1 1 1 -1 -1 -1"),
            Err(WorkloadError::NoJobs { dropped: 1, .. })
        ));
    }

    #[test]
    fn output_is_sorted_by_submit() {
        let text = "2 50 0 10 1 -1 -1 1 10\n1 10 0 10 1 -1 -1 1 10\n3 10 0 10 1 -1 -1 1 10";
        let p = parse_swf(text).unwrap();
        let ids: Vec<_> = p.trace.jobs.iter().map(|j| j.id).collect();
        assert_eq!(ids, vec![1, 3, 2]);
    }

    #[test]
    fn writer_round_trips() {
        let text = "; MaxProcs: 64\n1 0 0 100 4 -1 -1 4 120\n2 3.5 0 7.25 8 -1 -1 8 9\n";
        let a = parse_swf(text).unwrap().trace;
        let b = parse_swf(&write_swf(&a)).unwrap().trace;
        assert_eq!(a.jobs, b.jobs);
        assert_eq!(a.total_procs, b.total_procs);
    }
}
