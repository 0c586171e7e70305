//! Text form of designs: comma-separated pre-order tokens, with
//! parameterized tokens written `name(β)`.
//!
//! Parameters are printed with 17 significant digits, which round-trips
//! every `f64` exactly. Magnitudes in `[1e-5, 1e17)` (and zero) use fixed
//! notation; anything else uses scientific notation.

use crate::error::{Error, Result};
use crate::library::Library;
use crate::scalar::Scalar;
use crate::sequence::Design;

/// 17-significant-digit rendering of `v`.
pub fn format_param(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.16}", v);
    }
    let sci = format!("{:.16e}", v);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, v)
    } else {
        sci
    }
}

pub fn serialize_design<F: Scalar>(design: &Design<F>, library: &Library<F>) -> String {
    let mut parts = Vec::with_capacity(design.len());
    for (&tok, &beta) in design.tokens.iter().zip(&design.betas) {
        let name = &library.tokens()[tok].name;
        if library.is_parameterized(tok) {
            parts.push(format!("{name}({})", format_param(beta.as_f64())));
        } else {
            parts.push(name.clone());
        }
    }
    parts.join(",")
}

fn parse_error(position: usize, token: &str, reason: impl Into<String>) -> Error {
    Error::Parse { position, token: token.to_string(), reason: reason.into() }
}

/// Parses the text form against `library`. `position` in errors is the
/// byte offset of the offending token. Structural validity (arity,
/// constraints) is checked separately by the task.
pub fn parse_design<F: Scalar>(text: &str, library: &Library<F>) -> Result<Design<F>> {
    let mut design = Design::default();
    let mut offset = 0;
    if text.trim().is_empty() {
        return Err(parse_error(0, "", "empty design"));
    }
    for raw in text.split(',') {
        let lead = raw.len() - raw.trim_start().len();
        let position = offset + lead;
        offset += raw.len() + 1;
        let item = raw.trim();
        let (name, param) = match item.find('(') {
            Some(open) => {
                if !item.ends_with(')') {
                    return Err(parse_error(position, item, "missing closing parenthesis"));
                }
                (&item[..open], Some(&item[open + 1..item.len() - 1]))
            }
            None => (item, None),
        };
        let Some(tok) = library.index_of(name) else {
            return Err(parse_error(position, item, "unknown token"));
        };
        let beta = match (library.is_parameterized(tok), param) {
            (true, Some(p)) => {
                let v: f64 = p.trim().parse().map_err(|_| parse_error(position, item, "bad number"))?;
                if !v.is_finite() {
                    return Err(parse_error(position, item, "parameter must be finite"));
                }
                F::lit(v)
            }
            (true, None) => return Err(parse_error(position, item, "parameterized token needs a value")),
            (false, Some(_)) => return Err(parse_error(position, item, "token takes no parameter")),
            (false, None) => F::zero(),
        };
        design.tokens.push(tok);
        design.betas.push(beta);
    }
    Ok(design)
}
