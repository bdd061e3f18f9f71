//! Writer for the CPLEX-style LP text format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{MilpError, MilpProblem, Relation, Sense, VarId, VarKind};

const TERMS_PER_LINE: usize = 8;

/// Writes `problem` to `path` in LP format.
pub fn export_lp_file(problem: &MilpProblem, path: impl AsRef<Path>) -> Result<(), MilpError> {
    let text = write_lp_string(problem)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_lp_string(problem: &MilpProblem) -> Result<String, MilpError> {
    problem.validate()?;
    let var_names = unique_names(problem.variables.iter().map(|v| v.name.as_str()), "x")?;
    let row_names = unique_names(problem.constraints.iter().map(|c| c.name.as_str()), "c")?;

    let mut out = String::new();
    out.push_str("\\ mipred export\n");
    out.push_str(match problem.objective.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, &problem.objective.terms, &var_names);
    let k = problem.objective.constant;
    if k != 0.0 {
        let _ = write!(
            out,
            " {} {}",
            if k < 0.0 { '-' } else { '+' },
            fmt_num(k.abs())
        );
    } else if problem.objective.terms.is_empty() {
        out.push_str(" 0");
    }
    out.push('\n');

    if !problem.constraints.is_empty() {
        out.push_str("Subject To\n");
        for (c, name) in problem.constraints.iter().zip(&row_names) {
            let _ = write!(out, " {name}:");
            if c.terms.is_empty() {
                // Keep the row syntactically valid; it only checks 0 vs rhs.
                let _ = write!(out, " 0 {}", var_names.first().map_or("x0", |s| s.as_str()));
            }
            write_terms(&mut out, &c.terms, &var_names);
            let op = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
        }
    }

    out.push_str("Bounds\n");
    for (v, name) in problem.variables.iter().zip(&var_names) {
        let default = match v.kind {
            VarKind::Binary => v.lower == 0.0 && v.upper == 1.0,
            _ => v.lower == 0.0 && v.upper == f64::INFINITY,
        };
        if default {
            continue;
        }
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else {
            let _ = writeln!(
                out,
                " {} <= {name} <= {}",
                fmt_bound(v.lower),
                fmt_bound(v.upper)
            );
        }
    }

    let binaries: Vec<&String> = problem
        .variables
        .iter()
        .zip(&var_names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            out.push(' ');
            out.push_str(
                &chunk
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            out.push('\n');
        }
    }
    out.push_str("End\n");
    Ok(out)
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)], names: &[String]) {
    for (k, &(v, a)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        if k == 0 && a >= 0.0 {
            let _ = write!(out, " {} {}", fmt_num(a), names[v.0]);
        } else {
            let _ = write!(out, " {sign} {} {}", fmt_num(a.abs()), names[v.0]);
        }
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        fmt_num(v)
    }
}

/// Maps names onto the LP identifier alphabet and rejects collisions.
fn unique_names<'a>(
    names: impl Iterator<Item = &'a str>,
    fallback: &str,
) -> Result<Vec<String>, MilpError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in names.enumerate() {
        let mut s: String = raw
            .chars()
            .map(|c| match c {
                'a'..='z'
                | 'A'..='Z'
                | '0'..='9'
                | '_'
                | '('
                | ')'
                | ','
                | '.'
                | '!'
                | '#'
                | '$'
                | '%'
                | '&'
                | '/'
                | ';'
                | '?'
                | '@'
                | '{'
                | '}'
                | '~'
                | '\'' => c,
                '[' => '(',
                ']' => ')',
                _ => '_',
            })
            .collect();
        if s.is_empty() {
            s = format!("{fallback}{i}");
        }
        if s.starts_with(|c: char| c.is_ascii_digit() || c == '.') || s.eq_ignore_ascii_case("e") {
            s.insert(0, '_');
        }
        if !seen.insert(s.clone()) {
            return Err(MilpError::NameCollision { name: s });
        }
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_problem_layout() {
        let mut p = MilpProblem::new(Sense::Maximize);
        let x = p.add_continuous("x", 0.0, 4.0);
        let y = p.add_binary("y");
        p.add_constraint("c1", [(x, 1.0), (y, 2.0)], Relation::Le, 4.0);
        p.add_constraint("c2", [(x, 1.0), (y, -1.0)], Relation::Ge, -1.5);
        p.set_objective(Sense::Maximize, [(x, 3.0), (y, 2.0)], 0.0);
        let s = write_lp_string(&p).unwrap();
        assert_eq!(
            s,
            "\\ mipred export\nMaximize\n obj: 3 x + 2 y\nSubject To\n c1: 1 x + 2 y <= 4\n c2: 1 x - 1 y >= -1.5\nBounds\n 0 <= x <= 4\nBinaries\n y\nEnd\n"
        );
        assert_eq!(
            s.lines()
                .filter(|l| l.contains("<=") || l.contains(">="))
                .count(),
            3
        );
    }

    #[test]
    fn empty_constraints_write_bounds_only() {
        let mut p = MilpProblem::new(Sense::Minimize);
        let x = p.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_continuous("y", -2.0, f64::INFINITY);
        p.set_objective(Sense::Minimize, [(x, 1.0)], 2.5);
        let s = write_lp_string(&p).unwrap();
        assert!(!s.contains("Subject To"));
        assert!(s.contains("Bounds\n x free\n -2 <= y <= +inf\n"));
        assert!(s.contains(" obj: 1 x + 2.5\n"));
    }

    #[test]
    fn sanitized_collision_is_an_error() {
        let mut p = MilpProblem::new(Sense::Minimize);
        p.add_continuous("a b", 0.0, 1.0);
        p.add_continuous("a_b", 0.0, 1.0);
        assert!(matches!(
            write_lp_string(&p),
            Err(MilpError::NameCollision { .. })
        ));
    }

    #[test]
    fn indexed_names_use_parentheses() {
        let mut p = MilpProblem::new(Sense::Minimize);
        let y = p.add_binary("Y1[p1,c1,m2]");
        p.set_objective(Sense::Minimize, [(y, 1.0)], 0.0);
        assert!(write_lp_string(&p).unwrap().contains("Y1(p1,c1,m2)"));
    }
}
