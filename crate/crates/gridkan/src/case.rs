//! Case files: a TOML document with a schema version and a `[system]` table.

use std::path::Path;

use gridkan_core::acdc::PowerSystem;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Location, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema_version: u32,
    pub system: PowerSystem,
}

/// Parses and validates a case document.
pub fn parse_case(src: &str, origin: &str) -> Result<PowerSystem> {
    let file: CaseFile = toml::from_str(src).map_err(|e| CliError::Config {
        origin: origin.into(),
        location: e.span().map(|s| Location::of_offset(src, s.start)),
        key: String::new(),
        message: e.message().trim_end().to_string(),
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config {
            origin: origin.into(),
            location: None,
            key: "schema_version".into(),
            message: format!("unsupported case schema version {}", file.schema_version),
        });
    }
    file.system.validate().map_err(|e| CliError::Config {
        origin: origin.into(),
        location: None,
        key: "system".into(),
        message: e.to_string(),
    })?;
    Ok(file.system)
}

pub fn load_case(path: &Path) -> Result<PowerSystem> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_case(&src, &path.display().to_string())
}

pub fn case_to_string(sys: &PowerSystem) -> String {
    let file = CaseFile {
        schema_version: SCHEMA_VERSION,
        system: sys.clone(),
    };
    toml::to_string_pretty(&file).expect("power systems serialize to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridkan_core::acdc::builtin_case5;

    #[test]
    fn round_trip() {
        let sys = builtin_case5();
        assert_eq!(parse_case(&case_to_string(&sys), "mem").unwrap(), sys);
    }

    #[test]
    fn invalid_system_is_a_config_error() {
        let mut sys = builtin_case5();
        sys.generators[0].p_min = 5.0;
        let err = parse_case(&case_to_string(&sys), "bad.toml").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().starts_with("bad.toml"), "{err}");
    }
}
