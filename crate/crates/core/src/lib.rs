//! Block-diagonal covariance estimation, steerable PCA and Wiener denoising
//! for CTF-corrupted images expanded in a Fourier-Bessel basis.

pub mod basis;
pub mod coeffs;
pub mod covariance;
pub mod ctf;
pub mod denoise;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod pipeline;
pub mod simulate;
pub mod rng;

pub use basis::{build_basis, BasisConfig, BasisSpec, Block, FbIndex};
pub use coeffs::{CoeffVec, RadialWeightVec};
pub use covariance::{
    accumulate, eigenimages, estimate_mean, solve_covariance, Accumulation, BlockDiagHermitian,
    CovarianceSolution, Eigenimage, EstimationReport,
};
pub use denoise::{denoise_batch, wiener_denoise, WienerContext};
pub use ctf::{check_wellposedness, ctf_to_weights, eval_ctf, CtfParams, Filter};
pub use error::{Error, Result};
pub use image::Image;
pub use simulate::{make_dataset, make_phantom, project, whiten, CoeffDataset, Dataset, NoiseModel, Volume};
