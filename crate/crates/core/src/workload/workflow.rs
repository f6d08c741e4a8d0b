//! Plain-text workflow descriptions.
//!
//! One task per line, `#` starts a comment:
//!
//! ```text
//! # name   key=value ...
//! task prep  cmd=fetch cores=1 runtime=60
//! task align cmd=bwa   cores=16 runtime=3600 estimate=7200 after=prep
//! task call  cmd=gatk  cores=8  runtime=1800 mem=32 io=4 cost=0.5 after=align
//! ```
//!
//! Required keys: `cores`, `runtime`. Optional: `cmd`, `estimate` (defaults to
//! `runtime`), `submit` (seconds, default 0), `mem`, `io`, `cost`, and `after`
//! (comma-separated task names).

use std::collections::HashSet;

use super::WorkloadError;

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub command: String,
    pub cores: u32,
    pub runtime: f64,
    pub estimate: f64,
    pub submit: f64,
    pub memory: f64,
    pub io: f64,
    pub cost_rate: f64,
    pub after: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkflowDescription {
    pub tasks: Vec<TaskSpec>,
}

fn number(line: usize, key: &str, value: &str) -> Result<f64, WorkloadError> {
    let v: f64 = value.parse().map_err(|_| WorkloadError::Malformed {
        line,
        reason: format!("{key} is not a number: {value:?}"),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(WorkloadError::Malformed {
            line,
            reason: format!("{key} must be finite and nonnegative"),
        });
    }
    Ok(v)
}

pub fn parse_workflow(text: &str) -> Result<WorkflowDescription, WorkloadError> {
    let mut tasks = Vec::new();
    let mut names = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| WorkloadError::Malformed {
            line: line_no,
            reason,
        };
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("task") {
            return Err(malformed("expected `task <name> key=value ...`".into()));
        }
        let name = tokens
            .next()
            .ok_or_else(|| malformed("missing task name".into()))?
            .to_string();
        if name.contains('=') || name.contains(',') {
            return Err(malformed(format!("invalid task name {name:?}")));
        }
        if !names.insert(name.clone()) {
            return Err(malformed(format!("duplicate task {name:?}")));
        }
        let mut spec = TaskSpec {
            name,
            command: String::new(),
            cores: 0,
            runtime: 0.0,
            estimate: 0.0,
            submit: 0.0,
            memory: 0.0,
            io: 0.0,
            cost_rate: 0.0,
            after: Vec::new(),
        };
        let mut estimate = None;
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| malformed(format!("expected key=value, found {tok:?}")))?;
            match key {
                "cmd" => spec.command = value.to_string(),
                "cores" => {
                    spec.cores = value
                        .parse()
                        .map_err(|_| malformed(format!("cores is not an integer: {value:?}")))?
                }
                "runtime" => spec.runtime = number(line_no, key, value)?,
                "estimate" => estimate = Some(number(line_no, key, value)?),
                "submit" => spec.submit = number(line_no, key, value)?,
                "mem" => spec.memory = number(line_no, key, value)?,
                "io" => spec.io = number(line_no, key, value)?,
                "cost" => spec.cost_rate = number(line_no, key, value)?,
                "after" => {
                    spec.after = value
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                other => return Err(malformed(format!("unknown key {other:?}"))),
            }
        }
        if spec.cores == 0 {
            return Err(malformed("cores must be at least 1".into()));
        }
        if spec.runtime <= 0.0 {
            return Err(malformed("runtime must be positive".into()));
        }
        spec.estimate = estimate.unwrap_or(spec.runtime);
        if spec.estimate <= 0.0 {
            return Err(malformed("estimate must be positive".into()));
        }
        tasks.push(spec);
    }
    Ok(WorkflowDescription { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tasks_and_defaults() {
        let w = parse_workflow(
            "# demo\ntask a cores=2 runtime=10\n\ntask b cmd=x cores=4 runtime=5 estimate=8 after=a # tail\n",
        )
        .unwrap();
        assert_eq!(w.tasks.len(), 2);
        assert_eq!(w.tasks[0].estimate, 10.0);
        assert_eq!(w.tasks[1].after, vec!["a".to_string()]);
        assert_eq!(w.tasks[1].command, "x");
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_workflow("task a cores=1 runtime=1\ntask b cores=1 speed=3 runtime=1").unwrap_err();
        assert!(matches!(err, WorkloadError::Malformed { line: 2, .. }));
        assert!(parse_workflow("task a runtime=1").is_err());
        assert!(parse_workflow("task a cores=1 runtime=1\ntask a cores=1 runtime=1").is_err());
        assert!(parse_workflow("job a cores=1 runtime=1").is_err());
    }
}
