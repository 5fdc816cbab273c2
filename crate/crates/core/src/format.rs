//! Text formats for distributions, agent models, graphs, and label maps.
//!
//! Distribution:
//! ```text
//! vars X1:2 X2:2 L:2
//! roles obs:X1,X2 latent:L     # agent models only
//! 0 0 0 0.25
//! 1 1 1 0.25
//! ```
//! Unlisted cells are zero. Graph: `nodes A B C` then `edge A B` lines.
//! Label map: `map <observable> <value> <label>` lines. `#` starts a
//! comment everywhere; unknown directives are errors.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::dist::{JointDistribution, VarSpec};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::naturality::AgentModel;
use crate::search::DeterministicLatent;

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

/// `obs` and `latent` lists from a `roles` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    pub observables: Vec<String>,
    pub latents: Vec<String>,
}

fn parse_roles(line: usize, toks: &[&str]) -> Result<Roles> {
    let mut obs = None;
    let mut lat = None;
    for t in toks {
        let (key, list) = t.split_once(':').ok_or_else(|| {
            Error::parse(
                line,
                format!("expected obs:<names> or latent:<names>, found `{t}`"),
            )
        })?;
        let names: Vec<String> = list.split(',').map(str::to_string).collect();
        let slot = match key {
            "obs" => &mut obs,
            "latent" => &mut lat,
            _ => return Err(Error::parse(line, format!("unknown role `{key}`"))),
        };
        if slot.replace(names).is_some() {
            return Err(Error::parse(line, format!("role `{key}` given twice")));
        }
    }
    match (obs, lat) {
        (Some(observables), Some(latents)) => Ok(Roles {
            observables,
            latents,
        }),
        _ => Err(Error::parse(line, "roles line needs both obs: and latent:")),
    }
}

/// Parses a distribution, returning the `roles` line if present.
pub fn parse_distribution_with_roles(text: &str) -> Result<(JointDistribution, Option<Roles>)> {
    let mut it = lines(text).peekable();
    let (vline, vtoks) = it
        .next()
        .ok_or_else(|| Error::parse(1, "empty input; expected `vars ...`"))?;
    if vtoks[0] != "vars" {
        return Err(Error::parse(
            vline,
            format!("expected `vars`, found `{}`", vtoks[0]),
        ));
    }
    if vtoks.len() < 2 {
        return Err(Error::parse(
            vline,
            "`vars` needs at least one name:cardinality",
        ));
    }
    let mut vars = Vec::new();
    for t in &vtoks[1..] {
        let (name, card) = t.split_once(':').ok_or_else(|| {
            Error::parse(vline, format!("expected name:cardinality, found `{t}`"))
        })?;
        let card: usize = card
            .parse()
            .map_err(|_| Error::parse(vline, format!("bad cardinality in `{t}`")))?;
        vars.push(VarSpec::new(name, card));
    }
    // Validates names, cardinalities and table size up front.
    crate::dist::check_layout(&vars).map_err(|e| Error::parse(vline, e.to_string()))?;

    let mut roles = None;
    if let Some((rline, rtoks)) = it.peek() {
        if rtoks[0] == "roles" {
            roles = Some(parse_roles(*rline, &rtoks[1..])?);
            it.next();
        }
    }
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    for (line, toks) in it {
        if toks.len() != vars.len() + 1 {
            return Err(Error::parse(
                line,
                format!("expected {} indices and a probability", vars.len()),
            ));
        }
        let mut a = Vec::with_capacity(vars.len());
        for (t, v) in toks.iter().zip(&vars) {
            let x: usize = t
                .parse()
                .map_err(|_| Error::parse(line, format!("bad index `{t}`")))?;
            if x >= v.cardinality {
                return Err(Error::parse(
                    line,
                    format!(
                        "value {x} out of range for `{}` (cardinality {})",
                        v.name, v.cardinality
                    ),
                ));
            }
            a.push(x);
        }
        let p: f64 = toks[vars.len()]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad probability `{}`", toks[vars.len()])))?;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::parse(line, format!("invalid probability {p}")));
        }
        if !seen.insert(a.clone()) {
            return Err(Error::parse(line, "cell listed twice"));
        }
        cells.push((a, p));
    }
    let end = text.lines().count().max(1);
    let dist =
        JointDistribution::from_cells(vars, cells).map_err(|e| Error::parse(end, e.to_string()))?;
    Ok((dist, roles))
}

/// Parses a distribution; a `roles` line, if present, is accepted and ignored.
pub fn parse_distribution(text: &str) -> Result<JointDistribution> {
    parse_distribution_with_roles(text).map(|(d, _)| d)
}

/// Parses an agent model: a distribution with a `roles` line.
pub fn parse_model(text: &str) -> Result<AgentModel> {
    let (d, roles) = parse_distribution_with_roles(text)?;
    let roles =
        roles.ok_or_else(|| Error::parse(2, "agent models need a `roles` line after `vars`"))?;
    let line = lines(text).nth(1).map_or(2, |(l, _)| l);
    AgentModel::new(d, roles.observables, roles.latents)
        .map_err(|e| Error::parse(line, e.to_string()))
}

fn write_cells(out: &mut String, p: &JointDistribution) {
    for (a, q) in p.cells() {
        for x in a {
            let _ = write!(out, "{x} ");
        }
        let _ = writeln!(out, "{q}");
    }
}

fn write_vars(out: &mut String, p: &JointDistribution) {
    out.push_str("vars");
    for v in p.variables() {
        let _ = write!(out, " {}:{}", v.name, v.cardinality);
    }
    out.push('\n');
}

/// Writes the non-zero cells with round-trip exact probabilities.
pub fn write_distribution(p: &JointDistribution) -> String {
    let mut out = String::new();
    write_vars(&mut out, p);
    write_cells(&mut out, p);
    out
}

pub fn write_model(m: &AgentModel) -> String {
    let mut out = String::new();
    write_vars(&mut out, m.joint());
    let _ = writeln!(
        out,
        "roles obs:{} latent:{}",
        m.observables().join(","),
        m.latents().join(",")
    );
    write_cells(&mut out, m.joint());
    out
}

pub fn parse_dag(text: &str) -> Result<Dag> {
    let mut nodes: Option<(usize, Vec<String>)> = None;
    let mut edges: Vec<(usize, String, String)> = Vec::new();
    for (line, toks) in lines(text) {
        match toks[0] {
            "nodes" => {
                if nodes.is_some() {
                    return Err(Error::parse(line, "`nodes` given twice"));
                }
                nodes = Some((line, toks[1..].iter().map(|s| s.to_string()).collect()));
            }
            "edge" => {
                if toks.len() != 3 {
                    return Err(Error::parse(line, "usage: edge <parent> <child>"));
                }
                if nodes.is_none() {
                    return Err(Error::parse(line, "`edge` before `nodes`"));
                }
                edges.push((line, toks[1].to_string(), toks[2].to_string()));
            }
            other => return Err(Error::parse(line, format!("unknown directive `{other}`"))),
        }
    }
    let (nline, nodes) = nodes.ok_or_else(|| Error::parse(1, "missing `nodes` line"))?;
    Dag::new::<_, &str>(&nodes, &[]).map_err(|e| Error::parse(nline, e.to_string()))?;
    // Re-add edges one by one so errors point at their line.
    let mut so_far: Vec<(String, String)> = Vec::new();
    for (line, p, c) in edges {
        so_far.push((p, c));
        Dag::new(&nodes, &so_far).map_err(|e| Error::parse(line, e.to_string()))?;
    }
    Dag::new(&nodes, &so_far)
}

pub fn write_dag(g: &Dag) -> String {
    let mut out = format!("nodes {}\n", g.nodes().join(" "));
    for (p, c) in g.edges() {
        let _ = writeln!(out, "edge {p} {c}");
    }
    out
}

/// Parses `map <observable> <value> <label>` lines against the observables
/// of `p`; every value of every observable must be mapped exactly once.
pub fn parse_label_map(text: &str, p: &JointDistribution) -> Result<DeterministicLatent> {
    let names: Vec<String> = p.names().map(str::to_string).collect();
    let mut maps: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
    for (line, toks) in lines(text) {
        if toks[0] != "map" {
            return Err(Error::parse(
                line,
                format!("unknown directive `{}`", toks[0]),
            ));
        }
        if toks.len() != 4 {
            return Err(Error::parse(
                line,
                "usage: map <observable> <value> <label>",
            ));
        }
        let i = p
            .index_of(toks[1])
            .map_err(|e| Error::parse(line, e.to_string()))?;
        let card = p.variables()[i].cardinality;
        let v: usize = toks[2]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad value `{}`", toks[2])))?;
        let l: usize = toks[3]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad label `{}`", toks[3])))?;
        if v >= card {
            return Err(Error::parse(
                line,
                format!(
                    "value {v} out of range for `{}` (cardinality {card})",
                    toks[1]
                ),
            ));
        }
        let m = maps.entry(i).or_insert_with(|| vec![None; card]);
        if m[v].replace(l).is_some() {
            return Err(Error::parse(
                line,
                format!("`{}` value {v} mapped twice", toks[1]),
            ));
        }
    }
    let end = text.lines().count().max(1);
    let mut labels = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let m = maps
            .remove(&i)
            .ok_or_else(|| Error::parse(end, format!("no map for observable `{name}`")))?;
        let total: Option<Vec<usize>> = m.iter().copied().collect();
        let total = total.ok_or_else(|| {
            let v = m
                .iter()
                .position(Option::is_none)
                .expect("some value unmapped");
            Error::parse(end, format!("map for `{name}` is missing value {v}"))
        })?;
        labels.push(total);
    }
    DeterministicLatent::new(names, labels)
}

pub fn write_label_map(f: &DeterministicLatent) -> String {
    let mut out = String::new();
    for (i, name) in f.observables().iter().enumerate() {
        for (v, l) in f.labels(i).iter().enumerate() {
            let _ = writeln!(out, "map {name} {v} {l}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::vars;

    #[test]
    fn distribution_roundtrip_is_exact() {
        let p = JointDistribution::from_fn(vars(&[("A", 2), ("B", 3)]), |a| {
            (1 + a[0] + 2 * a[1]) as f64
        })
        .unwrap();
        let q = parse_distribution(&write_distribution(&p)).unwrap();
        assert_eq!(p.max_abs_diff(&q).unwrap(), 0.0);
    }

    #[test]
    fn model_roundtrip() {
        let text = "vars X1:2 X2:2 L:2\nroles obs:X1,X2 latent:L\n0 0 0 0.5\n1 1 1 0.5\n";
        let m = parse_model(text).unwrap();
        assert_eq!(m.latents(), ["L"]);
        assert_eq!(write_model(&m), text);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let cases = [
            ("vars A:2\n0 0.5\n0 0.5\n", 3),
            ("vars A:2\n2 1.0\n", 2),
            ("vars A:2\n0 -1\n", 2),
            ("vars A:2\n0 NaN\n", 2),
            ("vars A:2\n0 inf\n", 2),
            ("# header\nvars A:0\n", 2),
            ("vars A:2 A:2\n", 1),
            ("vars A:2\nroles obs:A\n", 2),
            ("vars A:2\n0 0.5 1\n", 2),
            ("vars A:2\n0 0.3\n", 2),
            ("probs 1\n", 1),
        ];
        for (text, line) in cases {
            match parse_distribution(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn near_normalized_input_is_rescaled() {
        let p = parse_distribution("vars A:2\n0 0.5\n1 0.5000001\n").unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dag_roundtrip_and_errors() {
        let text = "nodes A B C\nedge A B\nedge B C\n";
        let g = parse_dag(text).unwrap();
        assert_eq!(write_dag(&g), text);
        assert!(matches!(
            parse_dag("nodes A B\nedge A B\nedge B A\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_dag("nodes A\nedge A Z\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_dag("edge A B\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn label_maps() {
        let p = JointDistribution::uniform(vars(&[("A", 2), ("B", 2)])).unwrap();
        let text = "map A 0 0\nmap A 1 1\nmap B 0 1\nmap B 1 0\n";
        let f = parse_label_map(text, &p).unwrap();
        assert_eq!(f.labels(1), &[1, 0]);
        assert_eq!(write_label_map(&f), text);
        assert!(matches!(
            parse_label_map("map A 0 0\nmap A 1 1\nmap B 0 1\n", &p),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_label_map("map A 0 0\nmap A 0 1\n", &p),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
