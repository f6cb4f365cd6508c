//! Code selection by short keys (`color:d5`, `surface:3`, `bb:n72`) or file.

use std::path::Path;

use tanner_core::code::{build_color_code, build_surface_code, read_code, BbPreset};
use tanner_core::{CodeFamily, StabilizerCode};

use crate::error::{BenchError, Result};

/// Builds the code named by `key`; anything that is not `family:size` is
/// read as a code file.
pub fn resolve_code(key: &str) -> Result<StabilizerCode> {
    if let Some((family, size)) = key.split_once(':') {
        let digits = size.trim_start_matches(['d', 'n']);
        if let Ok(v) = digits.parse::<usize>() {
            return match family {
                "color" => Ok(build_color_code(v)?),
                "surface" => Ok(build_surface_code(v)?),
                "bb" => {
                    let preset = BbPreset::from_n(v).ok_or_else(|| BenchError::Invalid(format!("no bivariate bicycle code with n = {v}")))?;
                    Ok(preset.build()?)
                }
                other => Err(BenchError::Invalid(format!("unknown code family `{other}`"))),
            };
        }
    }
    let path = Path::new(key);
    if path.exists() {
        return Ok(read_code(&std::fs::read_to_string(path)?)?);
    }
    Err(BenchError::Invalid(format!("`{key}` is neither a code key nor a readable file")))
}

/// Canonical key: distance for color and surface codes, length otherwise.
pub fn code_key(code: &StabilizerCode) -> String {
    match (code.family, code.d) {
        (CodeFamily::Color | CodeFamily::Surface, Some(d)) => format!("{}:d{d}", code.family),
        _ => format!("{}:n{}", code.family, code.n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_round_trip() {
        for key in ["color:d3", "surface:d5", "bb:n72"] {
            assert_eq!(code_key(&resolve_code(key).unwrap()), key);
        }
        assert_eq!(code_key(&resolve_code("color:5").unwrap()), "color:d5");
        assert!(resolve_code("bb:n10").is_err());
        assert!(resolve_code("hexagon:3").is_err());
    }
}
