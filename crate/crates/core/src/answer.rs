//! Final answer selection and scoring: reconciling the textual and symbolic
//! answers, judging predictions against references, and the amortized-cost
//! arithmetic reports are built on.

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, Phase};
use crate::prompts;
use crate::quality::normalize_for_match;
use crate::symbolic::NumericNormalizer;
use crate::tree::SemanticTree;

/// Two answers agree when they normalize to the same text (whitespace,
/// case, and unit markers folded) or both parse as numbers within a mixed
/// absolute/relative tolerance of `1e-6` / `1e-4·|b|`. The tolerance keeps
/// rounding noise ("17.53" vs "17.527") from triggering a selector call
/// while real disagreements still do.
pub fn answers_agree(a: &str, b: &str) -> bool {
    if normalize_for_match(a) == normalize_for_match(b) {
        return true;
    }
    let norm = NumericNormalizer::default();
    match (norm.parse(a), norm.parse(b)) {
        (Some(x), Some(y)) => (x - y).abs() <= f64::max(1e-6, 1e-4 * y.abs()),
        _ => false,
    }
}

/// Which pipeline produced the answer that was ultimately kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    Textual,
    Symbolic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionOutcome {
    pub answer: String,
    pub source: AnswerSource,
    /// The two answers agreed (or only one existed), so no selector call was
    /// spent.
    pub agreed: bool,
    /// A selector model call was made for this question.
    pub selector_consulted: bool,
}

/// Adaptive selection between the textual answer and an optional symbolic
/// one. Agreement (or a missing symbolic answer) keeps the textual answer
/// for free; only genuine disagreement pays for a selector call. A selector
/// verdict that is not a clear A or B falls back to the textual answer.
pub fn select_answer(
    tree: &SemanticTree,
    question: &str,
    textual: &str,
    symbolic: Option<&str>,
    gateway: &Gateway,
) -> Result<SelectionOutcome, GatewayError> {
    let Some(symbolic) = symbolic else {
        return Ok(SelectionOutcome {
            answer: textual.to_string(),
            source: AnswerSource::Textual,
            agreed: true,
            selector_consulted: false,
        });
    };
    if answers_agree(textual, symbolic) {
        return Ok(SelectionOutcome {
            answer: textual.to_string(),
            source: AnswerSource::Textual,
            agreed: true,
            selector_consulted: false,
        });
    }
    let table = tree.to_json_string();
    let prompt = prompts::fill(
        prompts::SELECT_ANSWER,
        &[
            ("table", table.as_str()),
            ("question", question),
            ("answerA", textual),
            ("answerB", symbolic),
        ],
    );
    let response = gateway.complete(Phase::Selection, "select.answer", "", &prompt)?;
    let (answer, source) = match parse_choice(&response) {
        Some(AnswerSource::Symbolic) => (symbolic.to_string(), AnswerSource::Symbolic),
        // A clear "A" and an unparseable verdict land in the same place:
        // the textual answer is the default.
        _ => (textual.to_string(), AnswerSource::Textual),
    };
    Ok(SelectionOutcome { answer, source, agreed: false, selector_consulted: true })
}

/// First A/B letter token in the response, however quoted or punctuated.
fn parse_choice(response: &str) -> Option<AnswerSource> {
    for token in response.split(|c: char| !c.is_ascii_alphabetic()) {
        match token {
            "" => continue,
            t if t.eq_ignore_ascii_case("a") => return Some(AnswerSource::Textual),
            t if t.eq_ignore_ascii_case("b") => return Some(AnswerSource::Symbolic),
            _ => return None,
        }
    }
    None
}

/// Grades `prediction` against `reference`. Offline mode uses
/// [`answers_agree`]; otherwise the judge model is asked and anything but a
/// clear Correct/Incorrect verdict counts as incorrect.
pub fn judge(
    question: &str,
    reference: &str,
    prediction: &str,
    gateway: &Gateway,
    offline: bool,
) -> Result<bool, GatewayError> {
    if offline {
        return Ok(answers_agree(prediction, reference));
    }
    let prompt = prompts::fill(
        prompts::JUDGE_ANSWER,
        &[
            ("$question", question),
            ("$ground_truth", reference),
            ("$prediction", prediction),
        ],
    );
    let response = gateway.complete(Phase::Judge, "judge.answer", "", &prompt)?;
    let upper = response.to_uppercase();
    // "INCORRECT" contains "CORRECT": check the negative verdict first.
    if upper.contains("INCORRECT") {
        return Ok(false);
    }
    Ok(upper.contains("CORRECT"))
}

/// Upper-bound grading: correct if either candidate answer passes the
/// judge. Measures what the pipeline knows regardless of which answer the
/// selector keeps. Returns the winning answer (textual on a tie, including
/// the both-wrong tie) and its verdict.
pub fn oracle_select(
    question: &str,
    reference: &str,
    textual: &str,
    symbolic: Option<&str>,
    gateway: &Gateway,
    offline: bool,
) -> Result<(String, bool), GatewayError> {
    if judge(question, reference, textual, gateway, offline)? {
        return Ok((textual.to_string(), true));
    }
    if let Some(symbolic) = symbolic {
        if judge(question, reference, symbolic, gateway, offline)? {
            return Ok((symbolic.to_string(), true));
        }
    }
    Ok((textual.to_string(), false))
}

/// Per-question cost of a table when its one-off construction time is
/// spread over `questions` questions: `t_tree / n + t_qa`. With zero
/// questions there is nothing to amortize over and the construction cost is
/// reported whole.
pub fn amortized_time(t_tree: f64, t_qa: f64, questions: usize) -> f64 {
    if questions == 0 {
        return t_tree + t_qa;
    }
    t_tree / questions as f64 + t_qa
}
