//! Error classes mapped to exit codes: usage 1, data 2, numeric 3.

use semla_core::flow::FlowError;
use semla_core::sampler::SampleError;
use semla_core::trainer::TrainError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<semla_core::sdf::SdfError> for CliError {
    fn from(e: semla_core::sdf::SdfError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<semla_core::checkpoint::CheckpointError> for CliError {
    fn from(e: semla_core::checkpoint::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<semla_core::molecule::MoleculeError> for CliError {
    fn from(e: semla_core::molecule::MoleculeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<semla_core::arch::ArchError> for CliError {
    fn from(e: semla_core::arch::ArchError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<semla_core::tensor::TensorError> for CliError {
    fn from(e: semla_core::tensor::TensorError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::NonFinite(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SampleError> for CliError {
    fn from(e: SampleError) -> Self {
        match e {
            SampleError::BadDistribution(_) | SampleError::BadTime { .. } => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}
