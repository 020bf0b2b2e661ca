//! Canonical trace CSV.
//!
//! ```text
//! # horizon=86400
//! job_id,arrival_time,task_index,size
//! 7,12.5,0,3.25
//! ```
//!
//! Lines starting with `#` carry `key=value` metadata. Recognised keys are
//! `horizon` and, for exported synthetic workloads, `source=synthetic`,
//! `arrival_rate`, `scale_a`, `shape_b` and `seed`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{JobSpec, TaskSpec, WeibullParams, Workload, WorkloadSource};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TRACE_HEADER: &str = "job_id,arrival_time,task_index,size";

pub fn ingest_trace<T: Scalar>(path: impl AsRef<Path>) -> Result<Workload<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, path)
}

/// Parses canonical CSV text; `origin` is only used in error messages.
pub fn parse_trace<T: Scalar>(text: &str, origin: &Path) -> Result<Workload<T>> {
    let malformed = |line: usize, message: String| Error::MalformedRow {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut meta: HashMap<String, (usize, String)> = HashMap::new();
    let mut order: Vec<u64> = Vec::new();
    let mut jobs: HashMap<u64, JobSpec<T>> = HashMap::new();
    let mut seen: HashSet<(u64, u32)> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        if let Some(comment) = raw.trim_start().strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    meta.insert(k.to_string(), (idx + 1, v.to_string()));
                }
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    // csv positions point at the start of any skipped comment or blank lines;
    // step past them to name the row itself.
    let line_at = |byte: u64| {
        let byte = (byte as usize).min(text.len());
        let mut line = text[..byte].matches('\n').count() + 1;
        for l in text[byte..].lines() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                break;
            }
            line += 1;
        }
        line
    };
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(malformed(line_at(e.position().map_or(0, |p| p.byte())), e.to_string())),
    };
    if header.is_empty() {
        return Err(Error::EmptyTrace(origin.to_path_buf()));
    }
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(malformed(line_at(0), format!("expected header `{TRACE_HEADER}`")));
    }

    for record in reader.records() {
        let record = record.map_err(|e| {
            malformed(line_at(e.position().map_or(0, |p| p.byte())), e.to_string())
        })?;
        let line = line_at(record.position().map_or(0, |p| p.byte()));
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let fields: Vec<&str> = record.iter().collect();
        if fields.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", fields.len())));
        }
        let job_id: u64 = fields[0]
            .parse()
            .map_err(|_| malformed(line, format!("bad job_id `{}`", fields[0])))?;
        let arrival: T = parse_real(fields[1])
            .ok_or_else(|| malformed(line, format!("bad arrival_time `{}`", fields[1])))?;
        let task_index: u32 = fields[2]
            .parse()
            .map_err(|_| malformed(line, format!("bad task_index `{}`", fields[2])))?;
        let size: T = parse_real(fields[3])
            .ok_or_else(|| malformed(line, format!("bad size `{}`", fields[3])))?;
        if arrival < T::zero() {
            return Err(malformed(line, format!("negative arrival_time {arrival}")));
        }
        if !(size > T::zero()) {
            return Err(malformed(line, format!("size must be positive, got {size}")));
        }
        if !seen.insert((job_id, task_index)) {
            return Err(Error::DuplicateTask {
                path: origin.to_path_buf(),
                line,
                job_id,
                task_index,
            });
        }
        let job = jobs.entry(job_id).or_insert_with(|| {
            order.push(job_id);
            JobSpec {
                job_id,
                arrival_time: arrival,
                tasks: Vec::new(),
            }
        });
        if job.arrival_time != arrival {
            return Err(malformed(
                line,
                format!(
                    "job {job_id} arrival_time {arrival} differs from earlier row ({})",
                    job.arrival_time
                ),
            ));
        }
        job.tasks.push(TaskSpec { task_index, size });
    }

    if order.is_empty() {
        return Err(Error::EmptyTrace(origin.to_path_buf()));
    }
    let meta_real = |key: &str| -> Result<Option<T>> {
        match meta.get(key) {
            None => Ok(None),
            Some((line, v)) => parse_real(v)
                .map(Some)
                .ok_or_else(|| malformed(*line, format!("bad `{key}` value `{v}`"))),
        }
    };
    let horizon = meta_real("horizon")?;
    let source = match meta.get("source").map(|(_, v)| v.as_str()) {
        Some("synthetic") => {
            let missing = |k: &str| malformed(1, format!("synthetic source is missing `{k}`"));
            let arrival_rate = meta_real("arrival_rate")?.ok_or_else(|| missing("arrival_rate"))?;
            let scale_a = meta_real("scale_a")?.ok_or_else(|| missing("scale_a"))?;
            let shape_b = meta_real("shape_b")?.ok_or_else(|| missing("shape_b"))?;
            let seed = match meta.get("seed") {
                Some((line, v)) => v
                    .parse()
                    .map_err(|_| malformed(*line, format!("bad `seed` value `{v}`")))?,
                None => 0,
            };
            WorkloadSource::Synthetic {
                arrival_rate,
                params: WeibullParams::new(scale_a, shape_b)?,
                seed,
            }
        }
        _ => WorkloadSource::Trace,
    };
    let jobs = order
        .into_iter()
        .map(|id| jobs.remove(&id).expect("grouped job"))
        .collect();
    Workload::new(jobs, horizon, source)
}

fn parse_real<T: Scalar>(s: &str) -> Option<T> {
    s.parse::<T>().ok().filter(|v| v.is_finite())
}

/// Renders a workload as canonical CSV with a metadata preamble.
pub fn to_csv_string<T: Scalar>(workload: &Workload<T>) -> String {
    let mut out = String::new();
    out.push_str("# dispatchsim workload\n");
    if let WorkloadSource::Synthetic {
        arrival_rate,
        params,
        seed,
    } = workload.source()
    {
        let _ = writeln!(
            out,
            "# source=synthetic arrival_rate={arrival_rate} scale_a={} shape_b={} seed={seed}",
            params.scale_a, params.shape_b
        );
    }
    let _ = writeln!(out, "# horizon={}", workload.horizon());
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for job in workload.jobs() {
        for task in &job.tasks {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                job.job_id, job.arrival_time, task.task_index, task.size
            );
        }
    }
    out
}

pub fn write_trace<T: Scalar>(workload: &Workload<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::error::write_file(path, to_csv_string(workload))
}
