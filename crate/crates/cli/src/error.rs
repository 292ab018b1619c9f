use std::fmt;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failure = 1,
    InputMissing = 2,
    Diverged = 3,
    BadQuery = 4,
    Unevaluable = 5,
    Bind = 6,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        CliError {
            exit,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<sbsr::Error> for CliError {
    fn from(e: sbsr::Error) -> Self {
        use sbsr::Error as E;
        let exit = match &e {
            E::Io { .. } | E::Manifest { .. } | E::Obj { .. } | E::Format { .. } => {
                Exit::InputMissing
            }
            E::NonFiniteLoss { .. } | E::NonFiniteGradient(_) => Exit::Diverged,
            E::BlankImage | E::UnsupportedImage(_) => Exit::BadQuery,
            E::Empty(_) => Exit::InputMissing,
            _ => Exit::Failure,
        };
        CliError::new(exit, e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
