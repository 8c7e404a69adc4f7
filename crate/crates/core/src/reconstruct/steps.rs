//! The individual construction-phase steps: one function per model call,
//! plus the local post-processing each response needs (JSON extraction,
//! placeholder resolution, program execution, backbone checking).

use super::program::{parse_construction, run_construction};
use super::{HierarchySchema, NormalizedHeaders, ReconstructError};
use crate::gateway::{Gateway, Phase, strip_code_fence};
use crate::grid::{CellAddress, Grid};
use crate::prompts;
use crate::tree::{LeafValue, SemanticTree};

use indexmap::IndexMap;

/// Collapses the table's header rows into one canonical name per column.
/// A malformed response earns exactly one corrective re-prompt before the
/// step fails.
pub fn normalize_headers(
    grid: &Grid,
    gateway: &Gateway,
) -> Result<NormalizedHeaders, ReconstructError> {
    let table = grid.compact_serialize();
    let prompt = prompts::fill(prompts::NORMALIZE_HEADERS, &[("TABLE_AS_JSON_STRING", &table)]);
    let first = gateway.complete(Phase::Construction, "construct.headers", "", &prompt)?;
    let detail = match parse_headers(&first, grid.cols()) {
        Ok(headers) => return Ok(headers),
        Err(detail) => detail,
    };
    let retry = format!(
        "{prompt}\n\nYour previous output was invalid: {detail}. Output a single JSON array of \
         exactly {} strings and nothing else.",
        grid.cols()
    );
    let second = gateway.complete(Phase::Construction, "construct.headers.retry", "", &retry)?;
    parse_headers(&second, grid.cols()).map_err(|detail| ReconstructError::MalformedResponse {
        step: "header normalization",
        detail,
    })
}

fn parse_headers(response: &str, cols: usize) -> Result<NormalizedHeaders, String> {
    let body = extract_json(strip_code_fence(response), '[', ']')
        .ok_or_else(|| "no JSON array found".to_string())?;
    let headers: Vec<String> =
        serde_json::from_str(body).map_err(|e| format!("not a JSON string array ({e})"))?;
    if headers.len() != cols {
        return Err(format!("expected {cols} headers, got {}", headers.len()));
    }
    if let Some(i) = headers.iter().position(|h| h.trim().is_empty()) {
        return Err(format!("header for column {} is empty", i + 1));
    }
    Ok(NormalizedHeaders::new(headers))
}

/// Classifies columns into hierarchy keys and value leaves. A response that
/// fails the partition constraints gets one repair round with the violations
/// spelled out.
pub fn identify_hierarchy(
    grid: &Grid,
    headers: &NormalizedHeaders,
    gateway: &Gateway,
) -> Result<HierarchySchema, ReconstructError> {
    let table = grid.compact_serialize();
    let prompt = prompts::fill(
        prompts::IDENTIFY_HIERARCHY,
        &[
            ("TABLE_AS_JSON_STRING", table.as_str()),
            ("NORMALIZED_HEADERS_FROM_STEP_1", &headers.to_json()),
        ],
    );
    let first = gateway.complete(Phase::Construction, "construct.hierarchy", "", &prompt)?;
    let violations = match parse_schema(&first, headers) {
        Ok(schema) => return Ok(schema),
        Err(violations) => violations,
    };
    let repair = format!(
        "{prompt}\n\nYour previous output was invalid: {violations}. Re-emit the complete JSON \
         object with these problems fixed."
    );
    let second = gateway.complete(Phase::Construction, "construct.hierarchy.repair", "", &repair)?;
    parse_schema(&second, headers)
        .map_err(|violations| ReconstructError::SchemaInvalid { violations })
}

fn parse_schema(response: &str, headers: &NormalizedHeaders) -> Result<HierarchySchema, String> {
    let body = extract_json(strip_code_fence(response), '{', '}')
        .ok_or_else(|| "no JSON object found".to_string())?;
    let schema: HierarchySchema =
        serde_json::from_str(body).map_err(|e| format!("not a valid schema object ({e})"))?;
    schema.validate(headers)?;
    Ok(schema)
}

/// Full-table synthesis: the model emits the complete tree as JSON in one
/// response.
pub fn synthesize_direct(
    grid: &Grid,
    headers: &NormalizedHeaders,
    schema: &HierarchySchema,
    gateway: &Gateway,
) -> Result<SemanticTree, ReconstructError> {
    let table = grid.compact_serialize();
    let prompt = prompts::fill(
        prompts::CONSTRUCT_DIRECT,
        &[
            ("TABLE_AS_JSON_STRING", table.as_str()),
            ("NORMALIZED_HEADERS_FROM_STEP_1", &headers.to_json()),
            ("HIERARCHY_DEFINITION_FROM_STEP_2", &schema.to_json()),
        ],
    );
    let response = gateway.complete(Phase::Construction, "construct.tree", "", &prompt)?;
    parse_tree_response(&response).map_err(ReconstructError::MalformedTree)
}

/// Skeleton synthesis for long-celled tables: the model emits the tree with
/// cell addresses in leaf position, and the actual text is filled in locally
/// so long values never round-trip through the model.
pub fn synthesize_recipe(
    grid: &Grid,
    headers: &NormalizedHeaders,
    schema: &HierarchySchema,
    gateway: &Gateway,
) -> Result<(SemanticTree, Vec<String>), ReconstructError> {
    let prompt = prompts::fill(
        prompts::CONSTRUCT_RECIPE,
        &[
            ("TABLE_AS_COORDINATES", &grid.coordinate_view()),
            ("NORMALIZED_HEADERS_FROM_STEP_1", &headers.to_json()),
            ("HIERARCHY_DEFINITION_FROM_STEP_2", &schema.to_json()),
        ],
    );
    let response = gateway.complete(Phase::Construction, "construct.recipe", "", &prompt)?;
    let skeleton = parse_tree_response(&response).map_err(ReconstructError::MalformedTree)?;
    resolve_placeholders(&skeleton, grid)
}

/// Replaces every leaf that is a cell address (`"C7"`) with that cell's
/// text. An address pointing outside the grid is a hard error; leaf text
/// that is not address-shaped is kept verbatim with a warning, since the
/// skeleton was asked to contain addresses only.
pub fn resolve_placeholders(
    skeleton: &SemanticTree,
    grid: &Grid,
) -> Result<(SemanticTree, Vec<String>), ReconstructError> {
    let mut warnings = Vec::new();
    let resolved = resolve_node(skeleton, grid, &mut warnings)?;
    Ok((resolved, warnings))
}

fn resolve_node(
    tree: &SemanticTree,
    grid: &Grid,
    warnings: &mut Vec<String>,
) -> Result<SemanticTree, ReconstructError> {
    match tree {
        SemanticTree::Node(children) => {
            let mut out = IndexMap::new();
            for (label, child) in children {
                out.insert(label.clone(), resolve_node(child, grid, warnings)?);
            }
            Ok(SemanticTree::Node(out))
        }
        SemanticTree::Leaf(LeafValue::Text(text)) if looks_like_address(text) => {
            let addr = match CellAddress::from_a1(text) {
                Ok(addr) => addr,
                Err(_) => {
                    // Address-shaped but unparseable (e.g. row zero); keep it
                    // as literal text rather than invent a value.
                    warnings.push(format!("leaf `{text}` looks like a cell address but is not one"));
                    return Ok(tree.clone());
                }
            };
            match grid.get(addr) {
                Some(text) => Ok(SemanticTree::Leaf(LeafValue::Text(text.to_string()))),
                None => Err(ReconstructError::UnresolvedPlaceholder { address: text.clone() }),
            }
        }
        SemanticTree::Leaf(LeafValue::Text(text)) => {
            warnings.push(format!(
                "skeleton leaf `{text}` is not a cell address; kept verbatim"
            ));
            Ok(tree.clone())
        }
        // Numeric and null leaves are deliberate literals (totals the model
        // computed, genuinely empty cells); pass them through quietly.
        SemanticTree::Leaf(_) => Ok(tree.clone()),
    }
}

/// One-or-more column letters then one-or-more digits, nothing else — the
/// shape [`CellAddress::from_a1`] accepts.
fn looks_like_address(text: &str) -> bool {
    let letters = text.chars().take_while(|c| c.is_ascii_uppercase()).count();
    letters > 0
        && text.len() > letters
        && text[letters..].chars().all(|c| c.is_ascii_digit())
}

/// How many leading rows of a large table the program-synthesis prompt gets
/// to see. Enough to show the header block and a few data rows; the loop
/// bounds come from the stated row count, not the sample.
const PROGRAM_SAMPLE_ROWS: usize = 8;

/// Program synthesis for very large tables: the model writes a small looping
/// construction program from a sample of the rows, and the program is run
/// against the full grid locally.
pub fn synthesize_programmatic(
    grid: &Grid,
    headers: &NormalizedHeaders,
    schema: &HierarchySchema,
    gateway: &Gateway,
) -> Result<(SemanticTree, Vec<String>), ReconstructError> {
    let prompt = prompts::fill(
        prompts::CONSTRUCT_PROGRAM,
        &[
            ("TABLE_SAMPLE", &sample_view(grid, PROGRAM_SAMPLE_ROWS)),
            ("ROW_COUNT", &grid.rows().to_string()),
            ("COL_COUNT", &grid.cols().to_string()),
            ("NORMALIZED_HEADERS_FROM_STEP_1", &headers.to_json()),
            ("HIERARCHY_DEFINITION_FROM_STEP_2", &schema.to_json()),
        ],
    );
    let response = gateway.complete(Phase::Construction, "construct.program", "", &prompt)?;
    let source = strip_code_fence(&response);
    let program =
        parse_construction(source).map_err(|e| ReconstructError::ProgramParse(e.to_string()))?;
    run_construction(&program, grid).map_err(|e| ReconstructError::ProgramRuntime(e.to_string()))
}

/// Coordinate view of the first `rows` rows, same line format as
/// [`Grid::coordinate_view`].
fn sample_view(grid: &Grid, rows: usize) -> String {
    let mut out = String::new();
    for (addr, text) in grid.iter() {
        if addr.row >= rows {
            break;
        }
        if !text.is_empty() {
            out.push_str(&addr.to_a1());
            out.push_str(": ");
            out.push_str(text);
            out.push('\n');
        }
    }
    out
}

/// Asks the model to weave the listed uncovered cells into the tree. The
/// response must keep every existing leaf path intact ("backbone
/// preservation"); if it does not, the supplement is discarded and the
/// original tree is returned with a warning, so a bad repair can never make
/// the tree worse.
pub fn supplement_tree(
    grid: &Grid,
    tree: &SemanticTree,
    unmapped: &[String],
    gateway: &Gateway,
) -> Result<(SemanticTree, Vec<String>), ReconstructError> {
    let mut missing = String::new();
    for a1 in unmapped {
        if let Some(text) = CellAddress::from_a1(a1).ok().and_then(|addr| grid.get(addr)) {
            missing.push_str(a1);
            missing.push_str(": ");
            missing.push_str(text);
            missing.push('\n');
        }
    }
    let table = grid.compact_serialize();
    let prompt = prompts::fill(
        prompts::SUPPLEMENT_COVERAGE,
        &[
            ("TABLE_AS_JSON_STRING", table.as_str()),
            ("CURRENT_TREE", &tree.to_json_string()),
            ("MISSING_CELLS", &missing),
        ],
    );
    let response = gateway.complete(Phase::Construction, "construct.supplement", "", &prompt)?;
    let updated = parse_tree_response(&response).map_err(ReconstructError::MalformedTree)?;
    for entry in tree.leaves() {
        if updated.get(&entry.path).is_err() {
            return Ok((
                tree.clone(),
                vec![format!(
                    "supplement dropped existing path `{}`; keeping the unsupplemented tree",
                    entry.path
                )],
            ));
        }
    }
    Ok((updated, Vec::new()))
}

/// Extracts the tree from a synthesis response: unwrap any code fence, then
/// parse the outermost JSON object (tolerating prose around it).
fn parse_tree_response(response: &str) -> Result<SemanticTree, String> {
    let body = extract_json(strip_code_fence(response), '{', '}')
        .ok_or_else(|| "no JSON object found".to_string())?;
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("invalid JSON ({e})"))?;
    if !value.is_object() {
        return Err("tree root must be a JSON object".to_string());
    }
    Ok(SemanticTree::from_json_value_lenient(&value))
}

/// The span from the first `open` to the last `close`, trimmed — the
/// tolerant way to find a JSON payload inside a chatty response. Returns
/// `None` when either delimiter is missing or they are out of order.
fn extract_json(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let end = text.rfind(close)?;
    if end < start {
        return None;
    }
    Some(text[start..=end].trim())
}
