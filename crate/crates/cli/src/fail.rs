use std::fmt::Display;

/// Command failure carrying its exit code class.
#[derive(Debug)]
pub enum Fail {
    /// Validation or other domain violation: exit 1.
    Domain(String),
    /// Unreadable or malformed input: exit 2.
    Input(String),
    /// Evaluator could not be launched: exit 3.
    Evaluator(String),
}

impl Fail {
    pub fn code(&self) -> i32 {
        match self {
            Fail::Domain(_) => 1,
            Fail::Input(_) => 2,
            Fail::Evaluator(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Fail::Domain(m) | Fail::Input(m) | Fail::Evaluator(m) => m,
        }
    }
}

pub trait OrFail<T> {
    fn input(self, what: &str) -> Result<T, Fail>;
    fn domain(self, what: &str) -> Result<T, Fail>;
}

impl<T, E: Display> OrFail<T> for Result<T, E> {
    fn input(self, what: &str) -> Result<T, Fail> {
        self.map_err(|e| Fail::Input(format!("{what}: {e}")))
    }

    fn domain(self, what: &str) -> Result<T, Fail> {
        self.map_err(|e| Fail::Domain(format!("{what}: {e}")))
    }
}
