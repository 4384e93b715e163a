//! Plain-text MDP tables.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! <states> <actions> <gamma>
//! <s> <a> <r> <p_0> ... <p_{S-1}>      one line per state-action pair
//! terminal <s> [<s> ...]                 optional
//! noise <s> <a> <offset>:<prob> ...      optional, zero-mean reward noise
//! ```
//!
//! States and actions are 0-based. Every pair must appear exactly once.

use std::fmt::Write as _;

use super::{validate_mdp, RewardNoise, TabularMdp};
use crate::{Error, Result};

pub fn parse_mdp(source_name: &str, text: &str) -> Result<TabularMdp> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(err(hline, "header must be `states actions gamma`".into()));
    }
    let num_states: usize = fields[0]
        .parse()
        .map_err(|_| err(hline, format!("bad state count `{}`", fields[0])))?;
    let num_actions: usize = fields[1]
        .parse()
        .map_err(|_| err(hline, format!("bad action count `{}`", fields[1])))?;
    let gamma: f64 = fields[2]
        .parse()
        .map_err(|_| err(hline, format!("bad discount `{}`", fields[2])))?;
    if num_states == 0 || num_actions == 0 {
        return Err(err(hline, "state and action counts must be positive".into()));
    }

    let pairs = num_states * num_actions;
    let mut transition = vec![0.0; pairs * num_states];
    let mut reward = vec![0.0; pairs];
    let mut seen = vec![false; pairs];
    let mut terminal = Vec::new();
    let mut noise = Vec::new();

    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "terminal" => {
                for f in &fields[1..] {
                    terminal.push(
                        f.parse::<usize>()
                            .map_err(|_| err(lineno, format!("bad terminal state `{f}`")))?,
                    );
                }
            }
            "noise" => {
                if fields.len() < 4 {
                    return Err(err(lineno, "noise line needs `noise s a offset:prob ...`".into()));
                }
                let s = parse_index(fields[1], num_states, "state").map_err(|m| err(lineno, m))?;
                let a = parse_index(fields[2], num_actions, "action").map_err(|m| err(lineno, m))?;
                let mut outcomes = Vec::new();
                for f in &fields[3..] {
                    let (o, p) = f
                        .split_once(':')
                        .ok_or_else(|| err(lineno, format!("noise outcome `{f}` is not offset:prob")))?;
                    let o = o.parse::<f64>().map_err(|_| err(lineno, format!("bad offset `{o}`")))?;
                    let p = p
                        .parse::<f64>()
                        .map_err(|_| err(lineno, format!("bad probability `{p}`")))?;
                    outcomes.push((o, p));
                }
                noise.push((s, a, RewardNoise { outcomes }));
            }
            _ => {
                if fields.len() != 3 + num_states {
                    return Err(err(
                        lineno,
                        format!("expected {} fields, found {}", 3 + num_states, fields.len()),
                    ));
                }
                let s = parse_index(fields[0], num_states, "state").map_err(|m| err(lineno, m))?;
                let a = parse_index(fields[1], num_actions, "action").map_err(|m| err(lineno, m))?;
                let idx = s * num_actions + a;
                if seen[idx] {
                    return Err(err(lineno, format!("pair ({s}, {a}) defined twice")));
                }
                seen[idx] = true;
                reward[idx] = fields[2]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad reward `{}`", fields[2])))?;
                for (next, f) in fields[3..].iter().enumerate() {
                    transition[idx * num_states + next] =
                        f.parse().map_err(|_| err(lineno, format!("bad probability `{f}`")))?;
                }
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(err(
            0,
            format!("pair ({}, {}) is missing", missing / num_actions, missing % num_actions),
        ));
    }

    let mut mdp = TabularMdp::new(num_states, num_actions, transition, reward, gamma)?.with_terminal(&terminal)?;
    for (s, a, n) in noise {
        mdp = mdp.with_reward_noise(s, a, n)?;
    }
    let report = validate_mdp(&mdp);
    if !report.is_valid() {
        return Err(Error::InvalidMdp(report));
    }
    Ok(mdp)
}

fn parse_index(field: &str, limit: usize, what: &str) -> std::result::Result<usize, String> {
    match field.parse::<usize>() {
        Ok(i) if i < limit => Ok(i),
        _ => Err(format!("bad {what} `{field}` (expected 0..{limit})")),
    }
}

pub fn write_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", mdp.num_states(), mdp.num_actions(), mdp.discount());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let _ = write!(out, "{s} {a} {}", mdp.expected_reward(s, a));
            for p in mdp.transition_row(s, a) {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
    }
    let terminal: Vec<String> = mdp.terminal_states().map(|s| s.to_string()).collect();
    if !terminal.is_empty() {
        let _ = writeln!(out, "terminal {}", terminal.join(" "));
    }
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            if let Some(noise) = mdp.reward_noise(s, a) {
                let _ = write!(out, "noise {s} {a}");
                for (o, p) in &noise.outcomes {
                    let _ = write!(out, " {o}:{p}");
                }
                out.push('\n');
            }
        }
    }
    out
}
