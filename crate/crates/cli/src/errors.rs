use std::fmt;

/// Bad flags, unreadable or inconsistent configuration, missing inputs.
#[derive(Debug)]
pub struct ConfigError(pub String);

/// The twin failed its validation gate.
#[derive(Debug)]
pub struct GateFailure(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for GateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "twin rejected: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}
impl std::error::Error for GateFailure {}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_GATE: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

pub fn exit_code(err: &anyhow::Error) -> u8 {
    use causal_twin::Error as E;
    for cause in err.chain() {
        if cause.is::<GateFailure>() {
            return EXIT_GATE;
        }
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::Parse { .. }
                | E::Schema(_)
                | E::UnknownColumn(_)
                | E::UnknownNode(_)
                | E::Contradiction(_)
                | E::Version { .. }
                | E::Checksum(_)
                | E::Config(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_cause() {
        let gate = anyhow::Error::new(GateFailure("rmsea".into())).context("stage validate");
        assert_eq!(exit_code(&gate), EXIT_GATE);
        let cfg: anyhow::Result<()> = Err(causal_twin::Error::Config("x".into())).context("stage fit");
        assert_eq!(exit_code(&cfg.unwrap_err()), EXIT_CONFIG);
        let rt: anyhow::Result<()> = Err(causal_twin::Error::Numerical("nan".into())).context("stage fit");
        assert_eq!(exit_code(&rt.unwrap_err()), EXIT_RUNTIME);
    }
}
