//! Block-structured text format for the STPA model.
//!
//! ```text
//! # comment
//! hazard H-5:
//!   description: Host UAV unable to provide useful test data
//!   losses: L-3, L-4
//! ```
//!
//! A header line `kind id:` starts at column 1; the following indented
//! `key: value` lines belong to it. Link lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    ControlAction, Hazard, Loss, LossScenario, ModelError, SystemConstraint, TraceabilityGraph,
    UcaCategory, UnsafeControlAction, Waiver,
};

#[derive(Debug)]
struct Block {
    kind: String,
    id: String,
    line: usize,
    props: Vec<(String, String, usize)>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn split_blocks(document: &str) -> Result<Vec<Block>, ModelError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in document.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        if indent == 0 {
            let Some(head) = trimmed.strip_suffix(':') else {
                return Err(syntax(line_no, raw.len() + 1, "block header must end with ':'"));
            };
            let Some((kind, id)) = head.split_once(char::is_whitespace) else {
                return Err(syntax(line_no, 1, "expected `kind id:`"));
            };
            let id = id.trim();
            if id.is_empty() {
                return Err(syntax(line_no, kind.len() + 2, "missing id"));
            }
            blocks.push(Block {
                kind: kind.to_owned(),
                id: id.to_owned(),
                line: line_no,
                props: Vec::new(),
            });
        } else {
            let Some(block) = blocks.last_mut() else {
                return Err(syntax(line_no, indent + 1, "property outside of a block"));
            };
            let Some((key, value)) = trimmed.split_once(':') else {
                return Err(syntax(line_no, indent + 1, "expected `key: value`"));
            };
            block
                .props
                .push((key.trim().to_owned(), value.trim().to_owned(), line_no));
        }
    }
    Ok(blocks)
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

fn check_numbered(id: &str, prefix: &str, line: usize, column: usize) -> Result<(), ModelError> {
    let ok = id
        .strip_prefix(prefix)
        .and_then(|n| n.parse::<u32>().ok())
        .is_some_and(|n| n >= 1);
    if ok {
        Ok(())
    } else {
        Err(syntax(line, column, format!("id `{id}` must look like {prefix}<n> with n >= 1")))
    }
}

struct Props<'a> {
    block: &'a Block,
    map: BTreeMap<&'a str, (&'a str, usize)>,
}

impl<'a> Props<'a> {
    fn new(block: &'a Block, allowed: &[&str]) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (k, v, line) in &block.props {
            if !allowed.contains(&k.as_str()) {
                return Err(syntax(*line, 3, format!("unknown key `{k}` in {} block", block.kind)));
            }
            if map.insert(k.as_str(), (v.as_str(), *line)).is_some() {
                return Err(syntax(*line, 3, format!("key `{k}` given twice")));
            }
        }
        Ok(Self { block, map })
    }

    fn opt(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(|(v, _)| *v)
    }

    fn text(&self, key: &str) -> String {
        self.opt(key).unwrap_or_default().to_owned()
    }

    fn req(&self, key: &str) -> Result<&'a str, ModelError> {
        self.opt(key).ok_or_else(|| {
            syntax(
                self.block.line,
                1,
                format!("{} `{}` is missing `{key}`", self.block.kind, self.block.id),
            )
        })
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map(|(_, l)| *l).unwrap_or(self.block.line)
    }
}

fn insert_unique<V>(map: &mut BTreeMap<String, V>, id: &str, v: V) -> Result<(), ModelError> {
    if map.contains_key(id) {
        return Err(ModelError::DuplicateId(id.to_owned()));
    }
    map.insert(id.to_owned(), v);
    Ok(())
}

/// Parses a model document and verifies referential integrity.
pub fn load_model(document: &str) -> Result<TraceabilityGraph, ModelError> {
    let mut g = TraceabilityGraph::default();
    for b in split_blocks(document)? {
        let id_col = b.kind.len() + 2;
        match b.kind.as_str() {
            "loss" => {
                check_numbered(&b.id, "L-", b.line, id_col)?;
                let p = Props::new(&b, &["description"])?;
                let loss = Loss {
                    id: b.id.clone(),
                    description: p.text("description"),
                };
                insert_unique(&mut g.losses, &b.id, loss)?;
            }
            "hazard" => {
                check_numbered(&b.id, "H-", b.line, id_col)?;
                let p = Props::new(&b, &["description", "losses"])?;
                let hazard = Hazard {
                    id: b.id.clone(),
                    description: p.text("description"),
                    losses: list(p.opt("losses").unwrap_or_default()).into_iter().collect(),
                };
                insert_unique(&mut g.hazards, &b.id, hazard)?;
            }
            "constraint" => {
                check_numbered(&b.id, "SC-", b.line, id_col)?;
                let p = Props::new(&b, &["text", "hazard", "parameters"])?;
                let mut parameters = BTreeMap::new();
                for item in list(p.opt("parameters").unwrap_or_default()) {
                    let line = p.line_of("parameters");
                    let (k, v) = item
                        .split_once('=')
                        .ok_or_else(|| syntax(line, 3, format!("parameter `{item}` needs name=value")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| syntax(line, 3, format!("parameter `{item}` is not numeric")))?;
                    parameters.insert(k.trim().to_owned(), v);
                }
                let c = SystemConstraint {
                    id: b.id.clone(),
                    text: p.text("text"),
                    hazards: list(p.opt("hazard").unwrap_or_default()),
                    parameters,
                };
                insert_unique(&mut g.constraints, &b.id, c)?;
            }
            "action" => {
                let p = Props::new(&b, &["source", "target", "feedbacks"])?;
                let source = p.req("source")?.to_owned();
                let target = p.req("target")?.to_owned();
                if source == target {
                    return Err(syntax(p.line_of("target"), 3, "source and target must differ"));
                }
                let a = ControlAction {
                    name: b.id.clone(),
                    source,
                    target,
                    feedbacks: list(p.opt("feedbacks").unwrap_or_default()),
                };
                insert_unique(&mut g.actions, &b.id, a)?;
            }
            "uca" => {
                check_numbered(&b.id, "UCA-", b.line, id_col)?;
                let p = Props::new(&b, &["action", "category", "context", "hazards", "note"])?;
                let cat_token = p.req("category")?;
                let category = UcaCategory::from_token(cat_token).ok_or_else(|| {
                    syntax(p.line_of("category"), 3, format!("unknown category `{cat_token}`"))
                })?;
                let u = UnsafeControlAction {
                    id: b.id.clone(),
                    action: p.req("action")?.to_owned(),
                    category,
                    context: p.text("context"),
                    hazards: list(p.opt("hazards").unwrap_or_default()).into_iter().collect(),
                    note: p.opt("note").map(str::to_owned),
                };
                insert_unique(&mut g.ucas, &b.id, u)?;
            }
            "scenario" => {
                let p = Props::new(&b, &["class", "ucas", "description"])?;
                let class_str = p.req("class")?;
                let class = class_str
                    .parse::<u8>()
                    .ok()
                    .filter(|c| (1..=4).contains(c))
                    .ok_or_else(|| {
                        syntax(p.line_of("class"), 3, format!("class `{class_str}` must be 1..4"))
                    })?;
                let s = LossScenario {
                    id: b.id.clone(),
                    class,
                    ucas: list(p.opt("ucas").unwrap_or_default()).into_iter().collect(),
                    description: p.text("description"),
                };
                insert_unique(&mut g.scenarios, &b.id, s)?;
            }
            "waiver" => {
                let p = Props::new(&b, &["reason"])?;
                let w = Waiver {
                    action: b.id.clone(),
                    reason: p.text("reason"),
                };
                insert_unique(&mut g.waivers, &b.id, w)?;
            }
            other => return Err(syntax(b.line, 1, format!("unknown block kind `{other}`"))),
        }
    }
    g.check_references()?;
    Ok(g)
}

fn join<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    items.into_iter().map(String::as_str).collect::<Vec<_>>().join(", ")
}

/// Writes a graph back to the document format. Reparsing yields an equal graph.
pub fn serialize_model(g: &TraceabilityGraph) -> String {
    let mut out = String::new();
    // writeln! into a String cannot fail
    for l in g.losses.values() {
        let _ = writeln!(out, "loss {}:\n  description: {}\n", l.id, l.description);
    }
    for h in g.hazards.values() {
        let _ = writeln!(
            out,
            "hazard {}:\n  description: {}\n  losses: {}\n",
            h.id,
            h.description,
            join(&h.losses)
        );
    }
    for c in g.constraints.values() {
        let _ = writeln!(out, "constraint {}:\n  text: {}\n  hazard: {}", c.id, c.text, join(&c.hazards));
        if !c.parameters.is_empty() {
            let params: Vec<String> = c.parameters.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
            let _ = writeln!(out, "  parameters: {}", params.join(", "));
        }
        out.push('\n');
    }
    for a in g.actions.values() {
        let _ = writeln!(
            out,
            "action {}:\n  source: {}\n  target: {}\n  feedbacks: {}\n",
            a.name,
            a.source,
            a.target,
            join(&a.feedbacks)
        );
    }
    for u in g.ucas.values() {
        let _ = writeln!(
            out,
            "uca {}:\n  action: {}\n  category: {}\n  context: {}\n  hazards: {}",
            u.id,
            u.action,
            u.category,
            u.context,
            join(&u.hazards)
        );
        if let Some(note) = &u.note {
            let _ = writeln!(out, "  note: {note}");
        }
        out.push('\n');
    }
    for s in g.scenarios.values() {
        let _ = writeln!(
            out,
            "scenario {}:\n  class: {}\n  ucas: {}\n  description: {}\n",
            s.id,
            s.class,
            join(&s.ucas),
            s.description
        );
    }
    for w in g.waivers.values() {
        let _ = writeln!(out, "waiver {}:\n  reason: {}\n", w.action, w.reason);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_document_is_valid() {
        let g = load_model("").unwrap();
        assert!(g.is_empty());
        assert!(g.check_completeness().all_passed());
        assert!(load_model("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn dangling_loss_reference() {
        let doc = "loss L-1:\n  description: a\n\nhazard H-1:\n  losses: L-1, L-9\n";
        assert_eq!(
            load_model(doc).unwrap_err(),
            ModelError::DanglingReference {
                from: "H-1".into(),
                missing: "L-9".into()
            }
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let doc = "loss L-1:\n  description: a\nloss L-1:\n  description: b\n";
        assert_eq!(load_model(doc).unwrap_err(), ModelError::DuplicateId("L-1".into()));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match load_model("loss L-1:\n  description a\n").unwrap_err() {
            ModelError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 3)),
            e => panic!("unexpected {e:?}"),
        }
        match load_model("loss L-0:\n").unwrap_err() {
            ModelError::Syntax { line, column, .. } => assert_eq!((line, column), (1, 6)),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            load_model("  description: orphan\n").unwrap_err(),
            ModelError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            load_model("scenario S:\n  class: 5\n  ucas:\n").unwrap_err(),
            ModelError::Syntax { line: 2, .. }
        ));
        assert!(matches!(
            load_model("widget W:\n").unwrap_err(),
            ModelError::Syntax { line: 1, .. }
        ));
    }

    #[test]
    fn uca_category_tokens_parse() {
        for c in UcaCategory::ALL {
            assert_eq!(UcaCategory::from_token(c.token()), Some(c));
        }
        assert_eq!(UcaCategory::from_token("sometimes"), None);
    }

    #[test]
    fn bundled_round_trip() {
        let g = super::super::bundled_model();
        let again = load_model(&serialize_model(&g)).unwrap();
        assert_eq!(g, again);
    }

    fn text() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9 ()./-]{0,30}[A-Za-z0-9]".prop_map(|s| s.trim().to_owned())
    }

    prop_compose! {
        fn arb_graph()(
            n_loss in 1usize..5,
            n_haz in 1usize..7,
            n_uca in 0usize..9,
            seed_links in proptest::collection::vec(any::<u32>(), 64),
            descs in proptest::collection::vec(text(), 32),
            params in proptest::collection::vec(-1.0e3f64..1.0e3, 4),
        ) -> TraceabilityGraph {
            let mut g = TraceabilityGraph::default();
            let pick = |i: usize, n: usize| (seed_links[i % seed_links.len()] as usize) % n;
            for i in 1..=n_loss {
                g.losses.insert(format!("L-{i}"), Loss { id: format!("L-{i}"), description: descs[i].clone() });
            }
            for i in 1..=n_haz {
                let losses = (0..=pick(i, 3)).map(|k| format!("L-{}", 1 + pick(i * 7 + k, n_loss))).collect();
                g.hazards.insert(format!("H-{i}"), Hazard { id: format!("H-{i}"), description: descs[i + 5].clone(), losses });
                let mut parameters = BTreeMap::new();
                if i % 2 == 0 {
                    parameters.insert("distance_m".to_string(), params[i % params.len()]);
                }
                g.constraints.insert(format!("SC-{i}"), SystemConstraint {
                    id: format!("SC-{i}"), text: descs[i + 12].clone(), hazards: vec![format!("H-{i}")], parameters,
                });
            }
            for name in ["Alpha cmd", "Beta cmd"] {
                g.actions.insert(name.into(), ControlAction {
                    name: name.into(), source: "Ctl".into(), target: "Plant".into(), feedbacks: vec!["y".into()],
                });
            }
            g.waivers.insert("Beta cmd".into(), Waiver { action: "Beta cmd".into(), reason: descs[20].clone() });
            for i in 1..=n_uca {
                let hazards = (0..=pick(i + 30, 2)).map(|k| format!("H-{}", 1 + pick(i * 11 + k, n_haz))).collect();
                g.ucas.insert(format!("UCA-{i}"), UnsafeControlAction {
                    id: format!("UCA-{i}"),
                    action: "Alpha cmd".into(),
                    category: UcaCategory::ALL[pick(i + 40, 4)],
                    context: descs[(i + 21) % descs.len()].clone(),
                    hazards,
                    note: (i % 3 == 0).then(|| "merged".to_string()),
                });
                g.scenarios.insert(format!("LS-{i}"), LossScenario {
                    id: format!("LS-{i}"), class: 1 + pick(i + 50, 4) as u8,
                    ucas: [format!("UCA-{i}")].into_iter().collect(), description: descs[i].clone(),
                });
            }
            g
        }
    }

    proptest! {
        #[test]
        fn serialize_reparses_identically(g in arb_graph()) {
            let doc = serialize_model(&g);
            let back = load_model(&doc).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
