use std::path::PathBuf;

use crate::estimators::FitResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last: Box<FitResult>,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: row {row}, column \"{column}\": {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{failed} of {attempted} replicates failed (at least 80% must succeed); first error: {first}")]
    Replicates {
        failed: usize,
        attempted: usize,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_fold(self, fold: usize) -> Error {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }
}

pub(crate) fn ensure_finite_matrix(name: &str, m: &nalgebra::DMatrix<f64>) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::Input(format!(
            "{name} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_finite_vector(name: &str, v: &nalgebra::DVector<f64>) -> Result<()> {
    if let Some(i) = v.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{name} has a non-finite entry at {i}")));
    }
    Ok(())
}
