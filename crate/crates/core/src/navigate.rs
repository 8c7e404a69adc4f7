//! Model-guided tree traversal: turning a question plus a semantic tree into
//! an answer backed by explicit evidence paths.
//!
//! Two strategies share the machinery. Bottom-up ([`leaf_to_root`]) starts
//! from the most similar leaves, widens context by pruning their paths one
//! level at a time, and stops as soon as the model judges the accumulated
//! evidence sufficient. Top-down ([`root_to_leaf`]) descends from the root,
//! asking the model which children matter at each node while similarity-
//! ranked full paths serve as guidance. [`determine_direction`] picks between
//! them per question; [`answer_textual`] is the composed entry point.
//!
//! Every decision that consults the model goes through the gateway's
//! Navigation phase, so a scripted transcript replays a whole traversal
//! deterministically.

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, Phase, cosine};
use crate::prompts;
use crate::tree::{SemanticTree, TreePath, merge_path_entries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigationDirection {
    /// Top-down descent for localized lookups.
    RootToLeaf,
    /// Bottom-up widening for aggregation and comparison questions.
    LeafToRoot,
}

impl NavigationDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            NavigationDirection::RootToLeaf => "root_to_leaf",
            NavigationDirection::LeafToRoot => "leaf_to_root",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraversalConfig {
    /// Leaves kept by similarity ranking before the model filters them
    /// (bottom-up).
    pub shortlist_size: usize,
    /// Full paths shown as guidance during descent, and the fallback pick
    /// count when the leaf filter returns nothing usable.
    pub guidance_size: usize,
    /// Bottom-up context widening stops after this many prune levels.
    pub max_prune_depth: usize,
    /// Rank by embedding similarity when an embedder is configured; with
    /// this off (or no embedder) ranking degrades to tree order.
    pub use_embeddings: bool,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        TraversalConfig {
            shortlist_size: 50,
            guidance_size: 5,
            max_prune_depth: 5,
            use_embeddings: true,
        }
    }
}

/// A finished traversal: the answer plus the evidence snapshot it was judged
/// against, for tracing and audits.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversalOutcome {
    pub answer: String,
    pub direction: NavigationDirection,
    /// The evidence block exactly as the final model call saw it.
    pub evidence: String,
    /// Sufficiency rounds (bottom-up) or nodes expanded (top-down).
    pub visited: u32,
    /// True when the model declared the evidence sufficient; false when the
    /// answer came from the exhaustion fallback.
    pub ready: bool,
}

/// Asks the routing prompt whether the question wants aggregation
/// (bottom-up) or lookup (top-down). Anything but a clear verdict falls back
/// to top-down, the cheaper and more conservative walk.
pub fn determine_direction(
    tree: &SemanticTree,
    question: &str,
    gateway: &Gateway,
) -> Result<NavigationDirection, GatewayError> {
    let skeleton = tree.skeleton().to_json_string();
    let prompt = prompts::fill(
        prompts::CHOOSE_DIRECTION,
        &[("TREE_SKELETON", skeleton.as_str()), ("question", question)],
    );
    let response = gateway.complete(Phase::Navigation, "navigate.direction", "", &prompt)?;
    let upper = response.to_uppercase();
    let bottom = upper.find("BOTTOM_UP");
    let top = upper.find("TOP_DOWN");
    Ok(match (bottom, top) {
        (Some(b), Some(t)) if b < t => NavigationDirection::LeafToRoot,
        (Some(_), None) => NavigationDirection::LeafToRoot,
        _ => NavigationDirection::RootToLeaf,
    })
}

/// Indices of the `k` texts most similar to `query`, best first, ties broken
/// by original order. Without embeddings (disabled, or none configured) this
/// is simply the first `k` indices, keeping every caller total.
pub fn rank_by_similarity(
    gateway: &Gateway,
    query: &str,
    texts: &[String],
    k: usize,
    use_embeddings: bool,
) -> Result<Vec<usize>, GatewayError> {
    let k = k.min(texts.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if !use_embeddings || !gateway.has_embedder() {
        return Ok((0..k).collect());
    }
    let mut batch = Vec::with_capacity(texts.len() + 1);
    batch.push(query.to_string());
    batch.extend_from_slice(texts);
    let vectors = gateway.embed(Phase::Navigation, &batch)?;
    let (query_vec, text_vecs) = vectors.split_first().expect("batch contains the query");
    let mut scored: Vec<(usize, f64)> = text_vecs
        .iter()
        .enumerate()
        // A degenerate vector (empty text) scores 0: never preferred, never
        // fatal.
        .map(|(i, v)| (i, cosine(query_vec, v).unwrap_or(0.0)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Bottom-up traversal: similarity-shortlist the leaves, let the model keep
/// the relevant ones, then widen context by pruning the kept paths level by
/// level until the evidence suffices (or the prune budget runs out and the
/// fallback generator answers from what was gathered).
pub fn leaf_to_root(
    tree: &SemanticTree,
    question: &str,
    gateway: &Gateway,
    cfg: &TraversalConfig,
) -> Result<TraversalOutcome, GatewayError> {
    let leaves = tree.leaves();
    let rendered: Vec<String> = leaves
        .iter()
        .map(|e| format!("{} : {}", e.path, e.value))
        .collect();
    let shortlist =
        rank_by_similarity(gateway, question, &rendered, cfg.shortlist_size, cfg.use_embeddings)?;

    let selected: Vec<usize> = if shortlist.is_empty() {
        Vec::new()
    } else {
        let numbered: String = shortlist
            .iter()
            .enumerate()
            .map(|(n, &i)| format!("{}. {}\n", n + 1, rendered[i]))
            .collect();
        let prompt = prompts::fill(
            prompts::FILTER_LEAVES,
            &[("question", question), ("CANDIDATE_PATHS", numbered.trim_end())],
        );
        let response = gateway.complete(Phase::Navigation, "navigate.filter", "", &prompt)?;
        let picks = parse_number_list(&response, shortlist.len());
        if picks.is_empty() {
            // Unusable filter verdict: keep the top of the similarity
            // ranking rather than stall.
            shortlist.iter().take(cfg.guidance_size).copied().collect()
        } else {
            picks.into_iter().map(|p| shortlist[p]).collect()
        }
    };

    let mut rounds = 0u32;
    let mut evidence = String::new();
    for k in 0..=cfg.max_prune_depth {
        let entries: Vec<(TreePath, SemanticTree)> = selected
            .iter()
            .map(|&i| {
                let path = leaves[i].path.pruned(k);
                let sub = tree
                    .get(&path)
                    .expect("pruned leaf paths resolve in their own tree")
                    .clone();
                (path, sub)
            })
            .collect();
        let merged = merge_path_entries(entries);
        evidence = render_evidence(&merged);
        if evidence.is_empty() {
            break;
        }
        rounds += 1;
        let prompt = prompts::fill(
            prompts::CHECK_SUFFICIENCY,
            &[("question", question), ("EVIDENCE", &evidence)],
        );
        let response = gateway.complete(Phase::Navigation, "navigate.sufficiency", "", &prompt)?;
        if let Some(answer) = parse_ready(&response) {
            return Ok(TraversalOutcome {
                answer,
                direction: NavigationDirection::LeafToRoot,
                evidence,
                visited: rounds,
                ready: true,
            });
        }
        // Once every path has shrunk to its root label further pruning
        // repeats the identical evidence; stop burning calls.
        if merged.iter().all(|(p, _)| p.len() <= 1) {
            break;
        }
    }

    let answer = generate_answer(question, &evidence, gateway)?;
    Ok(TraversalOutcome {
        answer,
        direction: NavigationDirection::LeafToRoot,
        evidence,
        visited: rounds,
        ready: false,
    })
}

/// Top-down traversal: walk from the root, asking the model which children
/// to descend into at every node (with similarity-ranked full paths as
/// guidance). Leaf children become evidence; the walk stops the moment the
/// evidence is judged sufficient.
pub fn root_to_leaf(
    tree: &SemanticTree,
    question: &str,
    gateway: &Gateway,
    cfg: &TraversalConfig,
) -> Result<TraversalOutcome, GatewayError> {
    let leaves = tree.leaves();
    let rendered: Vec<String> = leaves
        .iter()
        .map(|e| format!("{} : {}", e.path, e.value))
        .collect();
    let guide =
        rank_by_similarity(gateway, question, &rendered, cfg.guidance_size, cfg.use_embeddings)?;
    let guidance: String = if guide.is_empty() {
        "(none)".to_string()
    } else {
        guide
            .iter()
            .map(|&i| format!("- {}\n", rendered[i]))
            .collect::<String>()
            .trim_end()
            .to_string()
    };

    let mut gathered: Vec<(TreePath, SemanticTree)> = Vec::new();
    let mut stack: Vec<TreePath> = vec![TreePath::root()];
    let mut visited = 0u32;
    let mut evidence = String::new();
    while let Some(path) = stack.pop() {
        let node = tree.get(&path).expect("stack holds only live paths");
        let Some(children) = node.as_node() else { continue };
        if children.is_empty() {
            continue;
        }
        visited += 1;

        let listed: String = children
            .iter()
            .enumerate()
            .map(|(n, (label, child))| match child {
                SemanticTree::Leaf(v) => format!("{}. {} = {}\n", n + 1, label, v),
                SemanticTree::Node(m) => {
                    format!("{}. {} (subtree, {} children)\n", n + 1, label, m.len())
                }
            })
            .collect();
        let node_name =
            if path.is_empty() { "(root)".to_string() } else { path.to_string() };
        let prompt = prompts::fill(
            prompts::SELECT_CHILDREN,
            &[
                ("NODE_PATH", node_name.as_str()),
                ("GUIDANCE_PATHS", &guidance),
                ("question", question),
                ("CHILDREN", listed.trim_end()),
            ],
        );
        let response = gateway.complete(Phase::Navigation, "navigate.children", "", &prompt)?;
        let picks = parse_number_list(&response, children.len());
        if picks.is_empty() {
            continue;
        }

        let mut grew = false;
        // Push branch picks in reverse so the first-listed child is explored
        // first; collect leaf picks as evidence immediately.
        for &p in picks.iter().rev() {
            let (label, child) = children.get_index(p).expect("picks are in range");
            if child.is_leaf() {
                continue;
            }
            stack.push(path.child(label));
        }
        for &p in &picks {
            let (label, child) = children.get_index(p).expect("picks are in range");
            if child.is_leaf() {
                gathered.push((path.child(label), child.clone()));
                grew = true;
            }
        }
        if !grew {
            continue;
        }
        let merged = merge_path_entries(gathered.clone());
        evidence = render_evidence(&merged);
        let prompt = prompts::fill(
            prompts::CHECK_SUFFICIENCY,
            &[("question", question), ("EVIDENCE", &evidence)],
        );
        let response = gateway.complete(Phase::Navigation, "navigate.sufficiency", "", &prompt)?;
        if let Some(answer) = parse_ready(&response) {
            return Ok(TraversalOutcome {
                answer,
                direction: NavigationDirection::RootToLeaf,
                evidence,
                visited,
                ready: true,
            });
        }
    }

    let answer = generate_answer(question, &evidence, gateway)?;
    Ok(TraversalOutcome {
        answer,
        direction: NavigationDirection::RootToLeaf,
        evidence,
        visited,
        ready: false,
    })
}

/// Full textual pipeline: route the question (unless `force` overrides),
/// then run the chosen traversal.
pub fn answer_textual(
    tree: &SemanticTree,
    question: &str,
    gateway: &Gateway,
    cfg: &TraversalConfig,
    force: Option<NavigationDirection>,
) -> Result<TraversalOutcome, GatewayError> {
    let direction = match force {
        Some(d) => d,
        None => determine_direction(tree, question, gateway)?,
    };
    match direction {
        NavigationDirection::LeafToRoot => leaf_to_root(tree, question, gateway, cfg),
        NavigationDirection::RootToLeaf => root_to_leaf(tree, question, gateway, cfg),
    }
}

/// Last-resort answer from whatever evidence was gathered.
fn generate_answer(
    question: &str,
    evidence: &str,
    gateway: &Gateway,
) -> Result<String, GatewayError> {
    let shown = if evidence.is_empty() { "(no evidence collected)" } else { evidence };
    let prompt = prompts::fill(
        prompts::GENERATE_ANSWER,
        &[("question", question), ("EVIDENCE", shown)],
    );
    let response = gateway.complete(Phase::Navigation, "navigate.generate", "", &prompt)?;
    Ok(response.trim().to_string())
}

/// One line per leaf reachable from the evidence entries:
/// `label / label : value`, with the entry's own path prefixed to leaves of
/// subtree entries.
fn render_evidence(entries: &[(TreePath, SemanticTree)]) -> String {
    let mut out = String::new();
    for (path, sub) in entries {
        match sub {
            SemanticTree::Leaf(v) => {
                out.push_str(&format!("{path} : {v}\n"));
            }
            SemanticTree::Node(_) => {
                for entry in sub.leaves() {
                    out.push_str(&format!("{path} / {} : {}\n", entry.path, entry.value));
                }
            }
        }
    }
    out.trim_end().to_string()
}

/// 1-based numbers anywhere in `text`, deduplicated in order, converted to
/// 0-based indices below `max`. Garbage (including `NONE`) yields nothing.
fn parse_number_list(text: &str, max: usize) -> Vec<usize> {
    let mut picks = Vec::new();
    for token in text.split(|c: char| !c.is_ascii_digit()) {
        if token.is_empty() {
            continue;
        }
        if let Ok(n) = token.parse::<usize>() {
            if n >= 1 && n <= max && !picks.contains(&(n - 1)) {
                picks.push(n - 1);
            }
        }
    }
    picks
}

/// `Some(answer)` when the response declares READY with an answer — either
/// on the same line (`READY: 42`) or the next non-blank line. A READY with
/// no answer, a CONTINUE, or anything else means "keep going".
fn parse_ready(response: &str) -> Option<String> {
    let mut lines = response.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next()?.trim();
    let upper = first.to_uppercase();
    if !upper.starts_with("READY") {
        return None;
    }
    let inline = first[5..].trim_start_matches([':', '-']).trim();
    if !inline.is_empty() {
        return Some(inline.to_string());
    }
    lines.next().map(|l| l.trim().to_string()).filter(|a| !a.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashEmbedder, ScriptedChat};
    use std::sync::Arc;

    fn gateway_with(script: ScriptedChat) -> Gateway {
        Gateway::new(Arc::new(script))
    }

    fn gateway_with_embedder(script: ScriptedChat) -> Gateway {
        Gateway::new(Arc::new(script)).with_embedder(Arc::new(HashEmbedder::default()))
    }

    fn budget_tree() -> SemanticTree {
        SemanticTree::from_json_str(
            r#"{
                "Fixed Expenses": {
                    "Quarter 1": {"Rent": "4,500", "Insurance": "1,200"},
                    "Quarter 2": {"Rent": "4,500", "Insurance": "1,250"}
                },
                "Variable Expenses": {
                    "Quarter 1": {"Supplies": "800"},
                    "Quarter 2": {"Supplies": "950"}
                }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn direction_parsing_maps_verdicts_and_defaults_to_top_down() {
        let cases = [
            ("BOTTOM_UP", NavigationDirection::LeafToRoot),
            ("top_down", NavigationDirection::RootToLeaf),
            ("I think BOTTOM_UP fits best", NavigationDirection::LeafToRoot),
            ("no idea, sorry", NavigationDirection::RootToLeaf),
            ("", NavigationDirection::RootToLeaf),
        ];
        for (response, want) in cases {
            let gateway = gateway_with(ScriptedChat::keyed().any(response));
            let got = determine_direction(&budget_tree(), "total rent?", &gateway).unwrap();
            assert_eq!(got, want, "response {response:?}");
        }
    }

    #[test]
    fn direction_prompt_carries_skeleton_not_values() {
        let gateway = gateway_with(ScriptedChat::keyed().any("TOP_DOWN"));
        determine_direction(&budget_tree(), "total rent?", &gateway).unwrap();
        let prompt = &gateway.log()[0].user;
        assert!(prompt.contains("Rent"), "labels belong in the skeleton");
        assert!(!prompt.contains("4,500"), "leaf payloads must not leak: {prompt}");
    }

    #[test]
    fn ranking_without_embedder_is_first_k() {
        let gateway = gateway_with(ScriptedChat::keyed());
        let texts: Vec<String> = (0..6).map(|i| format!("text {i}")).collect();
        assert_eq!(rank_by_similarity(&gateway, "q", &texts, 3, true).unwrap(), vec![0, 1, 2]);
        assert_eq!(rank_by_similarity(&gateway, "q", &texts, 9, true).unwrap().len(), 6);
        assert!(rank_by_similarity(&gateway, "q", &[], 3, true).unwrap().is_empty());
    }

    #[test]
    fn ranking_with_embedder_puts_the_matching_text_first() {
        let gateway = gateway_with_embedder(ScriptedChat::keyed());
        let texts: Vec<String> = vec![
            "Variable Expenses / Supplies".into(),
            "Fixed Expenses / Quarter 1 / Insurance premium".into(),
            "Fixed Expenses / Quarter 1 / Rent".into(),
        ];
        let order =
            rank_by_similarity(&gateway, "quarterly rent expense", &texts, 3, true).unwrap();
        assert_eq!(order[0], 2, "the rent path must outrank the others: {order:?}");
    }

    #[test]
    fn ranking_breaks_ties_by_original_order() {
        let gateway = gateway_with_embedder(ScriptedChat::keyed());
        let texts: Vec<String> = vec!["same text".into(), "same text".into(), "same text".into()];
        assert_eq!(rank_by_similarity(&gateway, "q", &texts, 2, true).unwrap(), vec![0, 1]);
    }

    #[test]
    fn ranking_disabled_overrides_a_present_embedder() {
        let gateway = gateway_with_embedder(ScriptedChat::keyed());
        let texts: Vec<String> = vec!["b".into(), "a".into()];
        assert_eq!(rank_by_similarity(&gateway, "a", &texts, 2, false).unwrap(), vec![0, 1]);
        assert_eq!(gateway.log_len(), 0, "no embed calls when disabled");
    }

    #[test]
    fn number_list_parsing_is_liberal_but_bounded() {
        assert_eq!(parse_number_list("1, 4, 7", 8), vec![0, 3, 6]);
        assert_eq!(parse_number_list("2 and 3", 4), vec![1, 2]);
        assert_eq!(parse_number_list("3, 3, 3", 4), vec![2]);
        assert_eq!(parse_number_list("0, 9", 4), Vec::<usize>::new());
        assert_eq!(parse_number_list("NONE", 4), Vec::<usize>::new());
        assert_eq!(parse_number_list("", 4), Vec::<usize>::new());
    }

    #[test]
    fn ready_parsing_accepts_both_layouts_and_rejects_empties() {
        assert_eq!(parse_ready("READY\n42"), Some("42".to_string()));
        assert_eq!(parse_ready("READY: 42"), Some("42".to_string()));
        assert_eq!(parse_ready("ready\n  $1,200  "), Some("$1,200".to_string()));
        assert_eq!(parse_ready("CONTINUE"), None);
        assert_eq!(parse_ready("READY"), None);
        assert_eq!(parse_ready("the answer is 42"), None);
        assert_eq!(parse_ready(""), None);
    }

    #[test]
    fn leaf_to_root_stops_at_the_first_sufficient_round() {
        let script = ScriptedChat::keyed()
            .on("retrieval assistant", "2")
            .on("sufficient to answer", "READY\n1,200");
        let gateway = gateway_with(script);
        let out = leaf_to_root(
            &budget_tree(),
            "What is the Quarter 1 insurance cost?",
            &gateway,
            &TraversalConfig::default(),
        )
        .unwrap();
        assert!(out.ready);
        assert_eq!(out.answer, "1,200");
        assert_eq!(out.visited, 1);
        assert!(out.evidence.contains("Insurance : 1,200"), "{}", out.evidence);
        let purposes: Vec<String> = gateway.log().iter().map(|c| c.purpose.clone()).collect();
        assert_eq!(purposes, vec!["navigate.filter", "navigate.sufficiency"]);
    }

    #[test]
    fn leaf_to_root_widens_context_until_ready() {
        // Filter keeps only the Quarter 1 rent leaf; the first sufficiency
        // round sees that single line and declines, the second sees the
        // whole Quarter 1 subtree after one prune level.
        let script = ScriptedChat::keyed()
            .on("retrieval assistant", "1")
            .on_once("sufficient to answer", "CONTINUE")
            .on("sufficient to answer", "READY\n5,700");
        let gateway = gateway_with(script);
        let out = leaf_to_root(
            &budget_tree(),
            "What do the Quarter 1 fixed expenses total?",
            &gateway,
            &TraversalConfig::default(),
        )
        .unwrap();
        assert!(out.ready);
        assert_eq!(out.answer, "5,700");
        assert_eq!(out.visited, 2);
        assert!(
            out.evidence.contains("Insurance : 1,200"),
            "widened evidence must pull in the sibling leaf: {}",
            out.evidence
        );
    }

    #[test]
    fn leaf_to_root_falls_back_after_saturation() {
        // Sufficiency never fires; once paths are pruned to their root
        // labels the loop must stop early and hand off to the generator
        // instead of re-asking with identical evidence.
        let script = ScriptedChat::keyed()
            .on("retrieval assistant", "1, 2")
            .on("sufficient to answer", "CONTINUE")
            .on("expert table analyst", "10,450 total");
        let gateway = gateway_with(script);
        let out = leaf_to_root(
            &budget_tree(),
            "What do all expenses total?",
            &gateway,
            &TraversalConfig::default(),
        )
        .unwrap();
        assert!(!out.ready);
        assert_eq!(out.answer, "10,450 total");
        // Depth-3 paths saturate after three prune levels (k=0,1,2), not
        // the full prune budget.
        assert_eq!(out.visited, 3);
        let generates = gateway
            .log()
            .iter()
            .filter(|c| c.purpose == "navigate.generate")
            .count();
        assert_eq!(generates, 1);
    }

    #[test]
    fn leaf_to_root_survives_an_unusable_filter_verdict() {
        let script = ScriptedChat::keyed()
            .on("retrieval assistant", "whatever looks good to you")
            .on("sufficient to answer", "READY\nok");
        let gateway = gateway_with(script);
        let cfg = TraversalConfig { guidance_size: 2, ..TraversalConfig::default() };
        let out = leaf_to_root(&budget_tree(), "anything?", &gateway, &cfg).unwrap();
        assert!(out.ready);
        // Fallback keeps the first `guidance_size` shortlist entries — with
        // no embedder that is the first two leaves in tree order.
        assert!(out.evidence.contains("Rent : 4,500"), "{}", out.evidence);
        assert!(out.evidence.contains("Insurance : 1,200"), "{}", out.evidence);
        assert!(!out.evidence.contains("Supplies"), "{}", out.evidence);
    }

    #[test]
    fn root_to_leaf_descends_and_stops_early() {
        // Pick branch 1 at the root, then the Quarter 1 branch, then both
        // leaves; sufficiency fires immediately. The Variable Expenses
        // branch must never be expanded.
        let script = ScriptedChat::keyed()
            .on("(root)", "1")
            .on("Fixed Expenses / Quarter 1\"", "1, 2")
            .on("at the node \"Fixed Expenses\"", "1")
            .on("sufficient to answer", "READY\n4,500 rent and 1,200 insurance");
        let gateway = gateway_with(script);
        let out = root_to_leaf(
            &budget_tree(),
            "Quarter 1 fixed expenses?",
            &gateway,
            &TraversalConfig::default(),
        )
        .unwrap();
        assert!(out.ready);
        assert_eq!(out.visited, 3);
        assert!(out.evidence.contains("Rent : 4,500"), "{}", out.evidence);
        let children_calls: Vec<String> = gateway
            .log()
            .iter()
            .filter(|c| c.purpose == "navigate.children")
            .map(|c| c.user.clone())
            .collect();
        assert_eq!(children_calls.len(), 3);
        assert!(
            !children_calls.iter().any(|p| p.contains("at the node \"Variable Expenses\"")),
            "early stop must leave the other branch unvisited"
        );
    }

    #[test]
    fn root_to_leaf_empty_selection_at_root_falls_back() {
        let script = ScriptedChat::keyed()
            .on("navigating a tree-structured table", "NONE")
            .on("expert table analyst", "cannot tell");
        let gateway = gateway_with(script);
        let out = root_to_leaf(
            &budget_tree(),
            "Unanswerable?",
            &gateway,
            &TraversalConfig::default(),
        )
        .unwrap();
        assert!(!out.ready);
        assert_eq!(out.answer, "cannot tell");
        assert_eq!(out.visited, 1);
        assert!(out.evidence.is_empty());
        assert!(gateway.log()[1].user.contains("(no evidence collected)"));
    }

    #[test]
    fn root_to_leaf_backtracks_past_dead_ends() {
        // The root selects both top branches; Fixed Expenses is explored
        // first but its selection comes back NONE, so the walk backtracks
        // into Variable Expenses and finds the supplies leaf.
        let script = ScriptedChat::keyed()
            .on("(root)", "1, 2")
            .on("at the node \"Fixed Expenses\"", "NONE")
            .on("at the node \"Variable Expenses\"", "1")
            .on("Variable Expenses / Quarter 1\"", "1")
            .on("sufficient to answer", "READY\n800");
        let gateway = gateway_with(script);
        let out = root_to_leaf(
            &budget_tree(),
            "Quarter 1 supplies?",
            &gateway,
            &TraversalConfig::default(),
        )
        .unwrap();
        assert!(out.ready);
        assert_eq!(out.answer, "800");
        assert!(out.evidence.contains("Supplies : 800"), "{}", out.evidence);
    }

    #[test]
    fn forced_direction_skips_the_routing_call() {
        let script = ScriptedChat::keyed()
            .on("retrieval assistant", "1")
            .on("sufficient to answer", "READY\nfine");
        let gateway = gateway_with(script);
        let out = answer_textual(
            &budget_tree(),
            "anything",
            &gateway,
            &TraversalConfig::default(),
            Some(NavigationDirection::LeafToRoot),
        )
        .unwrap();
        assert_eq!(out.direction, NavigationDirection::LeafToRoot);
        assert!(
            gateway.log().iter().all(|c| c.purpose != "navigate.direction"),
            "forcing a direction must not consult the router"
        );
    }

    #[test]
    fn routed_traversal_logs_the_direction_call_first() {
        let script = ScriptedChat::keyed()
            .on("query routing assistant", "TOP_DOWN")
            .on("navigating a tree-structured table", "NONE")
            .on("expert table analyst", "n/a");
        let gateway = gateway_with(script);
        let out = answer_textual(
            &budget_tree(),
            "anything",
            &gateway,
            &TraversalConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.direction, NavigationDirection::RootToLeaf);
        assert_eq!(gateway.log()[0].purpose, "navigate.direction");
    }

    #[test]
    fn evidence_rendering_flattens_subtrees_under_their_prefix() {
        let tree = budget_tree();
        let sub = tree.get(&TreePath::from(vec!["Fixed Expenses", "Quarter 1"])).unwrap();
        let entries = vec![
            (TreePath::from(vec!["Fixed Expenses", "Quarter 1"]), sub.clone()),
            (
                TreePath::from(vec!["Variable Expenses", "Quarter 1", "Supplies"]),
                SemanticTree::text("800"),
            ),
        ];
        let rendered = render_evidence(&entries);
        assert_eq!(
            rendered,
            "Fixed Expenses / Quarter 1 / Rent : 4,500\n\
             Fixed Expenses / Quarter 1 / Insurance : 1,200\n\
             Variable Expenses / Quarter 1 / Supplies : 800"
        );
    }
}
