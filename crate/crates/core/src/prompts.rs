//! Prompt templates for every model-facing step.
//!
//! Templates live as plain-text files under `resources/prompts/` and are compiled
//! in with `include_str!`, so the binary is self-contained and the texts are
//! versioned like code. Slots are written `{NAME}` and filled with [`fill`]; only
//! the names passed to `fill` are substituted, so literal braces in template
//! bodies (the JSON example in the hierarchy prompt, say) pass through untouched.

/// Header normalization: one qualified header per column, parsed from a JSON
/// string array. Slots: `TABLE_AS_JSON_STRING`.
pub const NORMALIZE_HEADERS: &str = include_str!("../resources/prompts/normalize_headers.txt");

/// Hierarchy identification: partition headers into hierarchy keys vs value
/// leaves, with semantic groups. Slots: `TABLE_AS_JSON_STRING`,
/// `NORMALIZED_HEADERS_FROM_STEP_1`.
pub const IDENTIFY_HIERARCHY: &str = include_str!("../resources/prompts/identify_hierarchy.txt");

/// Direct synthesis: the model emits the full JSON tree. Slots:
/// `TABLE_AS_JSON_STRING`, `NORMALIZED_HEADERS_FROM_STEP_1`,
/// `HIERARCHY_DEFINITION_FROM_STEP_2`.
pub const CONSTRUCT_DIRECT: &str = include_str!("../resources/prompts/construct_direct.txt");

/// Recipe synthesis: the model emits a skeleton whose leaves are cell addresses,
/// resolved locally afterwards. Slots: `TABLE_AS_COORDINATES`,
/// `NORMALIZED_HEADERS_FROM_STEP_1`, `HIERARCHY_DEFINITION_FROM_STEP_2`.
pub const CONSTRUCT_RECIPE: &str = include_str!("../resources/prompts/construct_recipe.txt");

/// Programmatic synthesis: the model emits a loop/insert construction program
/// executed over the coordinate space. Slots: `TABLE_SAMPLE`, `ROW_COUNT`,
/// `COL_COUNT`, `NORMALIZED_HEADERS_FROM_STEP_1`,
/// `HIERARCHY_DEFINITION_FROM_STEP_2`.
pub const CONSTRUCT_PROGRAM: &str = include_str!("../resources/prompts/construct_program.txt");

/// Coverage supplement: add the listed missing cells without disturbing the
/// existing hierarchy. Slots: `TABLE_AS_JSON_STRING`, `CURRENT_TREE`,
/// `MISSING_CELLS`.
pub const SUPPLEMENT_COVERAGE: &str = include_str!("../resources/prompts/supplement_coverage.txt");

/// Traversal direction choice: `BOTTOM_UP` vs `TOP_DOWN`. Slots:
/// `TREE_SKELETON`, `question`.
pub const CHOOSE_DIRECTION: &str = include_str!("../resources/prompts/choose_direction.txt");

/// Leaf relevance filter over a numbered shortlist. Slots: `question`,
/// `CANDIDATE_PATHS`.
pub const FILTER_LEAVES: &str = include_str!("../resources/prompts/filter_leaves.txt");

/// Evidence sufficiency check: first line `READY` (answer follows) or
/// `CONTINUE`. Slots: `question`, `EVIDENCE`.
pub const CHECK_SUFFICIENCY: &str = include_str!("../resources/prompts/check_sufficiency.txt");

/// Child selection during top-down descent. Slots: `NODE_PATH`,
/// `GUIDANCE_PATHS`, `question`, `CHILDREN`.
pub const SELECT_CHILDREN: &str = include_str!("../resources/prompts/select_children.txt");

/// Unconditional answer generation from accumulated evidence. Slots:
/// `question`, `EVIDENCE`.
pub const GENERATE_ANSWER: &str = include_str!("../resources/prompts/generate_answer.txt");

/// Tree-query program generation over the structural skeleton. Slots:
/// `EXEMPLARS`, `TREE_SKELETON`, `question`.
pub const QUERY_PROGRAM: &str = include_str!("../resources/prompts/query_program.txt");

/// Self-correction after a failed program: error trace plus a fresh request.
/// Slots: `PREVIOUS_PROGRAM`, `ERROR_TRACE`, `TREE_SKELETON`, `question`.
pub const REPAIR_PROGRAM: &str = include_str!("../resources/prompts/repair_program.txt");

/// Candidate arbitration: strictly a single character `A` or `B`. Slots:
/// `table`, `question`, `answerA`, `answerB`.
pub const SELECT_ANSWER: &str = include_str!("../resources/prompts/select_answer.txt");

/// Correctness judgment against a gold answer: `Correct` or `Incorrect`.
/// Slots: `$question`, `$ground_truth`, `$prediction`.
pub const JUDGE_ANSWER: &str = include_str!("../resources/prompts/judge_answer.txt");

/// Default exemplar catalog for [`QUERY_PROGRAM`]: one selection, one
/// aggregation, one comparison example.
pub const QUERY_EXEMPLARS: &str = r#"Examples:
# Selection: which fixed expenses are budgeted in Quarter 1?
keys(get(["Manufacturing Overhead Budget", "Fixed Expenses", "Quarter 1"]))
# Aggregation: what is the average of the non-null standard errors?
mean(filter_nonnull(values(get(["Std Error"]))))
# Comparison: how many regions have sales above 1000?
count_where(get(["Sales by Region"]), gt("Sales", 1000))"#;

/// Replace each `{name}` slot with its value, all occurrences. Braces that do
/// not spell a listed slot name are left alone.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
