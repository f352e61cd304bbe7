//! Process exit codes.

use cmad::Error;

pub const OK: u8 = 0;
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const INTERNAL: u8 = 3;

/// Bad flags or arguments detected outside the core library.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Configuration problems are usage errors, anything else the core library
/// rejects is a data error, and whatever remains is internal.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::InvalidParameter(_) => USAGE,
                _ => DATA,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return DATA;
        }
    }
    INTERNAL
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_error_kind() {
        let usage = anyhow::Error::new(UsageError("bad flag".into()));
        assert_eq!(exit_code(&usage), USAGE);
        let config: anyhow::Result<()> = Err(Error::Config("k".into())).context("loading config");
        assert_eq!(exit_code(&config.unwrap_err()), USAGE);
        let data: anyhow::Result<()> = Err(Error::Corrupt("x".into())).context("loading model");
        assert_eq!(exit_code(&data.unwrap_err()), DATA);
        let io = anyhow::Error::new(std::io::Error::other("gone"));
        assert_eq!(exit_code(&io), DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("worker panicked")), INTERNAL);
    }
}
