//! Deterministic tag-appending rewrite operator.
//!
//! `polarize("a valley", valence, High)` yields `"a valley «valence:+»"`.
//! Further rewrites append their tag; rewriting a dimension that is already
//! tagged drops the old tag and appends the new one, so the tag sequence
//! always records the order of the latest application per dimension.

use super::{PolarizeError, PolarizerBackend};
use crate::cogspace::{DimensionSpec, Pole};

pub const TEMPLATE_BACKEND_ID: &str = "template-v1";

const OPEN: char = '«';
const CLOSE: char = '»';

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateBackend;

impl PolarizerBackend for TemplateBackend {
    fn backend_id(&self) -> &str {
        TEMPLATE_BACKEND_ID
    }

    fn polarize(
        &self,
        prompt: &str,
        dimension: &DimensionSpec,
        pole: Pole,
    ) -> Result<String, PolarizeError> {
        let (base, mut tags) = parse_template(prompt);
        tags.retain(|(name, _)| name != &dimension.name);
        tags.push((dimension.name.clone(), pole));
        Ok(render(base, &tags))
    }
}

pub fn render(base: &str, tags: &[(String, Pole)]) -> String {
    let mut out = base.to_owned();
    if !tags.is_empty() {
        out.push(' ');
    }
    for (name, pole) in tags {
        out.push(OPEN);
        out.push_str(name);
        out.push(':');
        out.push(pole.symbol());
        out.push(CLOSE);
    }
    out
}

/// Splits a prompt into its base text and trailing template tags, in order.
///
/// Anything that is not a well-formed trailing tag stays in the base.
pub fn parse_template(prompt: &str) -> (&str, Vec<(String, Pole)>) {
    let mut rest = prompt;
    let mut tags = Vec::new();
    while let Some(body) = rest.strip_suffix(CLOSE) {
        let Some(open) = body.rfind(OPEN) else { break };
        let inner = &body[open + OPEN.len_utf8()..];
        let Some((name, sign)) = inner.rsplit_once(':') else {
            break;
        };
        let pole = match sign {
            "+" => Pole::High,
            "-" => Pole::Low,
            _ => break,
        };
        if name.is_empty() || name.contains(CLOSE) {
            break;
        }
        tags.push((name.to_owned(), pole));
        rest = &body[..open];
    }
    tags.reverse();
    (rest.trim_end(), tags)
}
