use std::fmt;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which part of a binary container failed to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    /// The leading magic bytes did not match.
    BadMagic,
    /// The payload ends before the size declared by the header.
    Truncated,
    /// The header disagrees with itself or with the payload length.
    SizeMismatch,
    /// The structured-text header could not be parsed.
    Header,
}

impl FormatErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            FormatErrorKind::BadMagic => "F001",
            FormatErrorKind::Truncated => "F002",
            FormatErrorKind::SizeMismatch => "F003",
            FormatErrorKind::Header => "F004",
        }
    }
}

impl fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FormatErrorKind::BadMagic => "bad magic",
            FormatErrorKind::Truncated => "truncated payload",
            FormatErrorKind::SizeMismatch => "size mismatch",
            FormatErrorKind::Header => "malformed header",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{kind}: {detail}")]
    Format {
        kind: FormatErrorKind,
        detail: String,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(kind: FormatErrorKind, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }

    /// Short machine-readable code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "E101",
            Error::Domain(_) => "E102",
            Error::Length(_) => "E103",
            Error::Contract(_) => "E104",
            Error::Config(_) => "E105",
            Error::Format { kind, .. } => kind.code(),
            Error::Numeric(_) => "N001",
            Error::Io(_) => "IO01",
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
