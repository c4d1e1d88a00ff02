//! Message exchange between verifier, candidate and (in attack scenarios)
//! a man in the middle.

pub mod crypto;
pub mod execution;
pub mod messages;
pub mod session;
pub mod verification;
pub mod wire;

pub use crypto::{CertificateAuthority, Credentials, CryptoProvider, SymbolicCrypto};
pub use execution::{execute_challenges, ChallengeExecutor, ExecutionError};
pub use messages::{ChallengeMessage, JoinRequest, Message, ScheduleChange, ScheduleUpdate};
pub use session::{AbortReason, CandidateSession, Expectation, Outcome, Phase, Verdict, VerifierSession};
pub use verification::{physical_verification, record_response, RecordedSet, VerificationReport};
