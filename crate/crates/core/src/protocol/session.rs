//! Verifier and candidate protocol state machines.
//!
//! Both sides move `idle → identity-verified → challenged → measuring →
//! decided`, or end in `aborted`. Every session produces exactly one
//! terminal outcome; further transitions are errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::challenge::ChallengeSet;

use super::crypto::{verify_certificate, Credentials, CryptoProvider, PublicKey};
use super::messages::{
    challenge_payload, update_payload, ChallengeBody, ChallengeMessage, JoinRequest, ScheduleChange, ScheduleUpdate,
    UpdateBody,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestRejection {
    #[error("request addressed to another verifier")]
    WrongTarget,
    #[error("certificate does not verify or does not match the request")]
    BadCertificate,
    #[error("request signature does not verify")]
    BadSignature,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    #[error("could not decrypt challenge")]
    DecryptionFailed,
    #[error("malformed message")]
    Malformed,
    #[error("challenge addressed to someone else")]
    Misaddressed,
    #[error("challenge signed by an unexpected party")]
    UnexpectedSigner,
    #[error("bad signature")]
    BadSignature,
    #[error("bad signer certificate")]
    BadCertificate,
    #[error("maneuver aborted: {0}")]
    Maneuver(String),
    #[error("simulation horizon reached")]
    Timeout,
}

impl AbortReason {
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::DecryptionFailed => "decryption-failed",
            AbortReason::Malformed => "malformed",
            AbortReason::Misaddressed => "misaddressed",
            AbortReason::UnexpectedSigner => "unexpected-signer",
            AbortReason::BadSignature => "bad-signature",
            AbortReason::BadCertificate => "bad-certificate",
            AbortReason::Maneuver(_) => "maneuver",
            AbortReason::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Accepted,
    Rejected,
    RequestRejected(RequestRejection),
    Aborted(AbortReason),
}

impl Outcome {
    pub fn label(&self) -> String {
        match self {
            Outcome::Accepted => "ACCEPT".into(),
            Outcome::Rejected => "REJECT".into(),
            Outcome::RequestRejected(r) => format!("REJECT({r:?})"),
            Outcome::Aborted(r) => format!("ABORT({})", r.code()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Idle,
    IdentityVerified,
    Challenged,
    Measuring,
    Decided,
    Aborted,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Decided | Phase::Aborted)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("cannot {action} in phase {phase:?}")]
    InvalidTransition { phase: Phase, action: &'static str },
}

fn transition(phase: Phase, allowed: &[Phase], action: &'static str) -> Result<(), SessionError> {
    if allowed.contains(&phase) {
        Ok(())
    } else {
        Err(SessionError::InvalidTransition { phase, action })
    }
}

#[derive(Debug, Clone)]
pub struct VerifierSession {
    creds: Credentials,
    ca: PublicKey,
    phase: Phase,
    peer: Option<(String, PublicKey)>,
    gamma: Option<ChallengeSet>,
    seq: u64,
    outcome: Option<Outcome>,
}

impl VerifierSession {
    pub fn new(creds: Credentials, ca: PublicKey) -> Self {
        Self {
            creds,
            ca,
            phase: Phase::Idle,
            peer: None,
            gamma: None,
            seq: 0,
            outcome: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.creds.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn peer(&self) -> Option<&(String, PublicKey)> {
        self.peer.as_ref()
    }

    pub fn schedule(&self) -> Option<&ChallengeSet> {
        self.gamma.as_ref()
    }

    /// Checks a join request. A failed check ends the session.
    pub fn handle_request(&mut self, crypto: &dyn CryptoProvider, req: &JoinRequest) -> Result<(), SessionError> {
        transition(self.phase, &[Phase::Idle], "handle a join request")?;
        let check = || {
            if let Some(target) = &req.target {
                if target != &self.creds.id {
                    return Err(RequestRejection::WrongTarget);
                }
            }
            if !verify_certificate(crypto, &req.certificate, &self.ca)
                || req.certificate.subject != req.candidate_id
                || req.certificate.public_key != req.public_key
            {
                return Err(RequestRejection::BadCertificate);
            }
            if !crypto.verify(&req.public_key, &req.signed_payload(), &req.signature) {
                return Err(RequestRejection::BadSignature);
            }
            Ok(())
        };
        match check() {
            Ok(()) => {
                self.peer = Some((req.candidate_id.clone(), req.public_key));
                self.phase = Phase::IdentityVerified;
            }
            Err(reason) => {
                self.phase = Phase::Decided;
                self.outcome = Some(Outcome::RequestRejected(reason));
            }
        }
        Ok(())
    }

    /// Signs Γ and seals it for the verified peer.
    pub fn issue_challenge(
        &mut self,
        crypto: &dyn CryptoProvider,
        gamma: ChallengeSet,
    ) -> Result<ChallengeMessage, SessionError> {
        transition(self.phase, &[Phase::IdentityVerified], "issue a challenge")?;
        let (peer_id, peer_pk) = self.peer.clone().expect("verified peer");
        let body = sign_challenge(crypto, &self.creds, &peer_id, gamma.clone());
        self.gamma = Some(gamma);
        self.phase = Phase::Challenged;
        Ok(ChallengeMessage {
            candidate_id: peer_id,
            sealed: crypto.encrypt(&peer_pk, &body.encode()),
        })
    }

    pub fn begin_measuring(&mut self) -> Result<(), SessionError> {
        transition(self.phase, &[Phase::Challenged, Phase::Measuring], "measure")?;
        self.phase = Phase::Measuring;
        Ok(())
    }

    /// Signs and seals a schedule change for the peer. A reschedule also
    /// replaces the verifier's copy of Γ.
    pub fn issue_update(
        &mut self,
        crypto: &dyn CryptoProvider,
        change: ScheduleChange,
    ) -> Result<ScheduleUpdate, SessionError> {
        transition(
            self.phase,
            &[Phase::Challenged, Phase::Measuring],
            "update the schedule",
        )?;
        let (peer_id, peer_pk) = self.peer.clone().expect("verified peer");
        self.seq += 1;
        let signature = crypto.sign(
            &self.creds.keys.secret,
            &update_payload(self.seq, &change, &self.creds.id, &peer_id),
        );
        if let ScheduleChange::Reschedule { gamma } = &change {
            self.gamma = Some(gamma.clone());
        }
        let body = UpdateBody {
            seq: self.seq,
            change,
            verifier_id: self.creds.id.clone(),
            candidate_id: peer_id.clone(),
            signature,
        };
        Ok(ScheduleUpdate {
            candidate_id: peer_id,
            sealed: crypto.encrypt(&peer_pk, &body.encode()),
        })
    }

    pub fn decide(&mut self, verdict: Verdict) -> Result<Outcome, SessionError> {
        transition(self.phase, &[Phase::Challenged, Phase::Measuring], "decide")?;
        let outcome = match verdict {
            Verdict::Accept => Outcome::Accepted,
            Verdict::Reject => Outcome::Rejected,
        };
        self.phase = Phase::Decided;
        self.outcome = Some(outcome.clone());
        Ok(outcome)
    }

    pub fn abort(&mut self, reason: AbortReason) -> Result<Outcome, SessionError> {
        if self.phase.is_terminal() {
            return Err(SessionError::InvalidTransition {
                phase: self.phase,
                action: "abort",
            });
        }
        self.phase = Phase::Aborted;
        self.outcome = Some(Outcome::Aborted(reason));
        Ok(self.outcome.clone().expect("just set"))
    }
}

/// Builds the signed challenge body as `signer` would send it to
/// `candidate_id`.
pub fn sign_challenge(
    crypto: &dyn CryptoProvider,
    signer: &Credentials,
    candidate_id: &str,
    gamma: ChallengeSet,
) -> ChallengeBody {
    let t0 = gamma.t0;
    let signature = crypto.sign(
        &signer.keys.secret,
        &challenge_payload(&gamma, &signer.id, candidate_id, t0),
    );
    ChallengeBody {
        gamma,
        verifier_id: signer.id.clone(),
        candidate_id: candidate_id.to_string(),
        t0,
        signer_certificate: signer.certificate.clone(),
        signature,
    }
}

/// Whom the candidate is willing to take a challenge from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expectation {
    /// Only from this verifier, by identity and key.
    Known { id: String, public_key: PublicKey },
    /// From anyone holding a CA certificate.
    Opportunistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenedChallenge {
    pub gamma: ChallengeSet,
    pub verifier_id: String,
    pub signer: PublicKey,
}

#[derive(Debug, Clone)]
pub struct CandidateSession {
    creds: Credentials,
    ca: PublicKey,
    expectation: Expectation,
    phase: Phase,
    accepted: Option<OpenedChallenge>,
    last_seq: u64,
    outcome: Option<Outcome>,
}

impl CandidateSession {
    pub fn new(creds: Credentials, ca: PublicKey, expectation: Expectation) -> Self {
        Self {
            creds,
            ca,
            expectation,
            phase: Phase::Idle,
            accepted: None,
            last_seq: 0,
            outcome: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.creds.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn challenge(&self) -> Option<&OpenedChallenge> {
        self.accepted.as_ref()
    }

    pub fn request(&mut self, crypto: &dyn CryptoProvider) -> Result<JoinRequest, SessionError> {
        transition(self.phase, &[Phase::Idle], "send a join request")?;
        let target = match &self.expectation {
            Expectation::Known { id, .. } => Some(id.as_str()),
            Expectation::Opportunistic => None,
        };
        self.phase = Phase::IdentityVerified;
        Ok(JoinRequest::new(
            crypto,
            target,
            &self.creds.id,
            self.creds.public_key(),
            self.creds.certificate.clone(),
            &self.creds.keys.secret,
        ))
    }

    fn open(&self, crypto: &dyn CryptoProvider, msg: &ChallengeMessage) -> Result<OpenedChallenge, AbortReason> {
        let plain = crypto
            .decrypt(&self.creds.keys.secret, &msg.sealed)
            .map_err(|_| AbortReason::DecryptionFailed)?;
        let body = ChallengeBody::decode(&plain).map_err(|_| AbortReason::Malformed)?;
        if body.candidate_id != self.creds.id {
            return Err(AbortReason::Misaddressed);
        }
        let signer = match &self.expectation {
            Expectation::Known { id, public_key } => {
                if body.signature.signer != public_key.id || &body.verifier_id != id {
                    return Err(AbortReason::UnexpectedSigner);
                }
                *public_key
            }
            Expectation::Opportunistic => {
                let cert = &body.signer_certificate;
                if !verify_certificate(crypto, cert, &self.ca) || cert.subject != body.verifier_id {
                    return Err(AbortReason::BadCertificate);
                }
                cert.public_key
            }
        };
        if !crypto.verify(&signer, &body.signed_payload(), &body.signature) {
            return Err(AbortReason::BadSignature);
        }
        if body.t0 != body.gamma.t0 || body.gamma.validate(None).is_err() {
            return Err(AbortReason::Malformed);
        }
        Ok(OpenedChallenge {
            gamma: body.gamma,
            verifier_id: body.verifier_id,
            signer,
        })
    }

    /// Opens and authenticates a challenge. Any failure aborts the session.
    pub fn receive_challenge(
        &mut self,
        crypto: &dyn CryptoProvider,
        msg: &ChallengeMessage,
    ) -> Result<Result<&OpenedChallenge, AbortReason>, SessionError> {
        transition(
            self.phase,
            &[Phase::IdentityVerified, Phase::Idle],
            "accept a challenge",
        )?;
        match self.open(crypto, msg) {
            Ok(opened) => {
                self.accepted = Some(opened);
                self.phase = Phase::Challenged;
                Ok(Ok(self.accepted.as_ref().expect("just set")))
            }
            Err(reason) => {
                self.phase = Phase::Aborted;
                self.outcome = Some(Outcome::Aborted(reason.clone()));
                Ok(Err(reason))
            }
        }
    }

    /// Authenticates a schedule change from the verifier whose challenge
    /// was accepted. Stale, replayed or foreign updates are refused without
    /// ending the session.
    pub fn receive_update(
        &mut self,
        crypto: &dyn CryptoProvider,
        msg: &ScheduleUpdate,
    ) -> Result<ScheduleChange, AbortReason> {
        let Some(accepted) = &self.accepted else {
            return Err(AbortReason::Malformed);
        };
        if !matches!(self.phase, Phase::Challenged | Phase::Measuring) {
            return Err(AbortReason::Malformed);
        }
        let plain = crypto
            .decrypt(&self.creds.keys.secret, &msg.sealed)
            .map_err(|_| AbortReason::DecryptionFailed)?;
        let body = UpdateBody::decode(&plain).map_err(|_| AbortReason::Malformed)?;
        if body.candidate_id != self.creds.id {
            return Err(AbortReason::Misaddressed);
        }
        if body.verifier_id != accepted.verifier_id || body.signature.signer != accepted.signer.id {
            return Err(AbortReason::UnexpectedSigner);
        }
        if !crypto.verify(&accepted.signer, &body.signed_payload(), &body.signature) {
            return Err(AbortReason::BadSignature);
        }
        if body.seq <= self.last_seq {
            return Err(AbortReason::Malformed);
        }
        if let ScheduleChange::Reschedule { gamma } = &body.change {
            if gamma.validate(None).is_err() {
                return Err(AbortReason::Malformed);
            }
            self.accepted.as_mut().expect("checked").gamma = gamma.clone();
        }
        self.last_seq = body.seq;
        Ok(body.change)
    }

    pub fn begin_executing(&mut self) -> Result<(), SessionError> {
        transition(self.phase, &[Phase::Challenged, Phase::Measuring], "execute")?;
        self.phase = Phase::Measuring;
        Ok(())
    }

    pub fn abort(&mut self, reason: AbortReason) -> Result<Outcome, SessionError> {
        if self.phase.is_terminal() {
            return Err(SessionError::InvalidTransition {
                phase: self.phase,
                action: "abort",
            });
        }
        self.phase = Phase::Aborted;
        self.outcome = Some(Outcome::Aborted(reason));
        Ok(self.outcome.clone().expect("just set"))
    }

    /// Marks the schedule as flown to completion.
    pub fn finish(&mut self) -> Result<(), SessionError> {
        transition(self.phase, &[Phase::Challenged, Phase::Measuring], "finish")?;
        self.phase = Phase::Decided;
        Ok(())
    }
}
