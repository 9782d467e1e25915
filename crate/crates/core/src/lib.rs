//! Ultimate precision limits for quantum parameter estimation under
//! finite-dimensional channels given as Kraus-operator families.
//!
//! The central quantity is the Bures angle between the extended channels
//! `K_x (x) I_A` and `K_{x+dx} (x) I_A`. Its cosine is the value of the
//! convex-concave game
//!
//! ```text
//! min_rho max_{||W|| <= 1} 1/2 Tr[rho (K_W + K_W^dag)],
//! K_W = sum_ij w_ij F_i(x)^dag F_j(x + dx),
//! ```
//!
//! whose inner maximum is the trace norm of the `d x d` matrix
//! `M(rho)_ij = Tr[rho F_i(x)^dag F_j(x + dx)]`. The maximal quantum Fisher
//! information follows as `8 (1 - cos B) / dx^2` in the limit `dx -> 0`.
//!
//! Modules:
//! - [`numkit`]: dense complex linear algebra contracts.
//! - [`channels`]: Kraus channels, families and the channel zoo.
//! - [`unitary`]: closed forms for unitary channels.
//! - [`qfi`]: the `M` matrix, pure-probe fidelity and QFI.
//! - [`saddle`]: certified solvers for the game above and optimal probes.
//! - [`ancilla`]: when ancillary systems cannot help.
//! - [`channel_spec`] and [`experiment`]: JSON channel files and the sweeps behind the CLI.

pub mod ancilla;
pub mod channel_spec;
pub mod channels;
pub mod error;
pub mod experiment;
pub mod numkit;
pub mod qfi;
pub mod saddle;
pub mod state;
pub mod unitary;

pub use channels::{ChannelFamily, KrausChannel};
pub use error::{Error, Result};
pub use numkit::{ComplexMatrix, ComplexVector};
pub use state::{von_neumann_entropy, DensityMatrix};
