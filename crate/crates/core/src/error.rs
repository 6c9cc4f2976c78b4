use crate::autodiff::AutodiffError;
use crate::dosimetry::DosimetryError;
use crate::model::{CheckpointError, ModelError};
use crate::phantom::{DatasetError, PhantomError, TctdError};
use crate::plane::PlaneError;
use crate::training::TrainError;
use crate::triplet::TripletError;

/// Any error the library can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Tctd(#[from] TctdError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dosimetry(#[from] DosimetryError),
    #[error(transparent)]
    Plane(#[from] PlaneError),
}
