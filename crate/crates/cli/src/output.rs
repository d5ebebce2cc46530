use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const TRACE_HEADER: &str = "run_id,iter,agent,elbo,value,potential,policy_tv_delta,exploitability_if_computed";
pub const POLICY_HEADER: &str = "t,agent,state,action,probability";

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One trace line; numbers that were not measured stay empty.
pub struct TraceLine<'a> {
    pub run_id: &'a str,
    pub iter: usize,
    pub agent: usize,
    pub elbo: Option<f64>,
    pub value: Option<f64>,
    pub potential: Option<f64>,
    pub policy_tv_delta: Option<f64>,
    pub exploitability: Option<f64>,
}

pub fn trace_csv(lines: &[TraceLine]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for l in lines {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            l.run_id,
            l.iter,
            l.agent,
            opt(l.elbo),
            opt(l.value),
            opt(l.potential),
            opt(l.policy_tv_delta),
            opt(l.exploitability)
        )
        .unwrap();
    }
    out
}

/// `[t][agent][state][action]`
pub fn policy_csv(policies: &[Vec<Vec<Vec<f64>>>]) -> String {
    let mut out = String::from(POLICY_HEADER);
    out.push('\n');
    for (t, step) in policies.iter().enumerate() {
        for (i, pol) in step.iter().enumerate() {
            for (s, row) in pol.iter().enumerate() {
                for (a, p) in row.iter().enumerate() {
                    writeln!(out, "{t},{i},{s},{a},{}", num(*p)).unwrap();
                }
            }
        }
    }
    out
}

/// Inverse of [`policy_csv`]; every `(t, agent, state, action)` cell must be present.
pub fn parse_policy_csv(text: &str) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == POLICY_HEADER => {}
        _ => bail!("policy file must start with `{POLICY_HEADER}`"),
    }
    let mut cells = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            bail!("policy line {}: expected 5 fields", k + 2);
        }
        let idx: Vec<usize> = f[..4]
            .iter()
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("policy line {}", k + 2))?;
        let p: f64 = f[4].trim().parse().with_context(|| format!("policy line {}", k + 2))?;
        cells.push((idx, p));
    }
    let mut out: Vec<Vec<Vec<Vec<Option<f64>>>>> = Vec::new();
    for (idx, p) in cells {
        let (t, i, s, a) = (idx[0], idx[1], idx[2], idx[3]);
        if out.len() <= t {
            out.resize(t + 1, Vec::new());
        }
        if out[t].len() <= i {
            out[t].resize(i + 1, Vec::new());
        }
        if out[t][i].len() <= s {
            out[t][i].resize(s + 1, Vec::new());
        }
        if out[t][i][s].len() <= a {
            out[t][i][s].resize(a + 1, None);
        }
        out[t][i][s][a] = Some(p);
    }
    out.into_iter()
        .map(|step| {
            step.into_iter()
                .map(|pol| {
                    pol.into_iter()
                        .map(|row| {
                            row.into_iter()
                                .collect::<Option<Vec<f64>>>()
                                .context("policy file has gaps")
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Per-agent gaps against a certificate; `bound` and `pass` stay empty when no certificate applies.
pub fn report_csv(gaps: &[f64], bound: Option<f64>) -> String {
    let mut out = String::from("agent,gap,bound,pass\n");
    for (i, g) in gaps.iter().enumerate() {
        let pass = bound.map(|b| (*g <= b).to_string()).unwrap_or_default();
        writeln!(out, "{i},{},{},{pass}", num(*g), opt(bound)).unwrap();
    }
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}
