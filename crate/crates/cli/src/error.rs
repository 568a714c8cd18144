use curveroute::data::DataError;
use curveroute::eval::EvalError;
use curveroute::predictors::PredictorError;
use curveroute::router::RouteError;
use curveroute::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, missing files, unusable checkpoint or policy.
    #[error("{0}")]
    Input(String),
    /// Malformed dataset, coverage gaps, empty training cells.
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::Data(_) => 3,
            Self::Divergence(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => Self::Input(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Data(d) => d.into(),
            SynthError::Invalid(_) => Self::Input(e.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::Divergence { .. } => Self::Divergence(e.to_string()),
            PredictorError::EmptyCell { .. } | PredictorError::UnknownCell { .. } | PredictorError::KTooLarge { .. } => {
                Self::Data(e.to_string())
            }
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<RouteError> for CliError {
    fn from(e: RouteError) -> Self {
        match e {
            RouteError::Predictor(p) => p.into(),
            RouteError::Coverage { .. } | RouteError::EmptySignatures => Self::Data(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Route(r) => r.into(),
            EvalError::Predictor(p) => p.into(),
            EvalError::Data(d) => d.into(),
            EvalError::LambdaGrid | EvalError::Io { .. } | EvalError::Ablation(_) => Self::Input(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}
