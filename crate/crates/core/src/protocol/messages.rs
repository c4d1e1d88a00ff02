//! Protocol messages and their encodings.

use serde::{Deserialize, Serialize};

use crate::challenge::ChallengeSet;

use super::crypto::{Certificate, Ciphertext, CryptoProvider, PublicKey, SecretKey, Signature};
use super::wire::{self, msg_type, tag, Reader, WireError, Writer};

/// Request to join, signed by the candidate. `target` is the verifier the
/// candidate believes it is following; `None` for an opportunistic request
/// that any platoon may answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub target: Option<String>,
    pub candidate_id: String,
    pub public_key: PublicKey,
    pub certificate: Certificate,
    pub signature: Signature,
}

fn join_payload(target: Option<&str>, candidate_id: &str, pk: &PublicKey) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(tag::LABEL, "REQ")
        .str(tag::VERIFIER_ID, target.unwrap_or(""))
        .str(tag::CANDIDATE_ID, candidate_id);
    wire::put_public_key(&mut w, tag::PUBLIC_KEY, pk);
    w.finish()
}

impl JoinRequest {
    pub fn new(
        crypto: &dyn CryptoProvider,
        target: Option<&str>,
        candidate_id: &str,
        public_key: PublicKey,
        certificate: Certificate,
        secret: &SecretKey,
    ) -> Self {
        let signature = crypto.sign(secret, &join_payload(target, candidate_id, &public_key));
        Self {
            target: target.map(str::to_string),
            candidate_id: candidate_id.to_string(),
            public_key,
            certificate,
            signature,
        }
    }

    pub fn signed_payload(&self) -> Vec<u8> {
        join_payload(self.target.as_deref(), &self.candidate_id, &self.public_key)
    }
}

/// Signed challenge contents; travels encrypted to the candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeBody {
    pub gamma: ChallengeSet,
    pub verifier_id: String,
    pub candidate_id: String,
    pub t0: f64,
    pub signer_certificate: Certificate,
    pub signature: Signature,
}

pub fn challenge_payload(gamma: &ChallengeSet, verifier_id: &str, candidate_id: &str, t0: f64) -> Vec<u8> {
    let mut w = Writer::new();
    wire::put_challenge_set(&mut w, tag::CHALLENGE_SET, gamma);
    w.str(tag::VERIFIER_ID, verifier_id)
        .str(tag::CANDIDATE_ID, candidate_id)
        .f64(tag::T0, t0);
    w.finish()
}

impl ChallengeBody {
    pub fn signed_payload(&self) -> Vec<u8> {
        challenge_payload(&self.gamma, &self.verifier_id, &self.candidate_id, self.t0)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        wire::put_challenge_set(&mut w, tag::CHALLENGE_SET, &self.gamma);
        w.str(tag::VERIFIER_ID, &self.verifier_id)
            .str(tag::CANDIDATE_ID, &self.candidate_id)
            .f64(tag::T0, self.t0);
        wire::put_certificate(&mut w, tag::SIGNER_CERTIFICATE, &self.signer_certificate);
        wire::put_signature(&mut w, tag::SIGNATURE, &self.signature);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let body = Self {
            gamma: wire::get_challenge_set(&mut r, tag::CHALLENGE_SET)?,
            verifier_id: r.str(tag::VERIFIER_ID)?,
            candidate_id: r.str(tag::CANDIDATE_ID)?,
            t0: r.f64(tag::T0)?,
            signer_certificate: wire::get_certificate(&mut r, tag::SIGNER_CERTIFICATE)?,
            signature: wire::get_signature(&mut r, tag::SIGNATURE)?,
        };
        r.finish()?;
        Ok(body)
    }
}

/// Outer challenge message: routing identity in clear, the rest sealed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeMessage {
    pub candidate_id: String,
    pub sealed: Ciphertext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleChange {
    /// Hold the current target from entry `index` on until a new schedule
    /// arrives.
    Suspend { index: u32 },
    /// Replace the schedule.
    Reschedule { gamma: ChallengeSet },
}

/// Signed schedule change; travels encrypted like the challenge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateBody {
    pub seq: u64,
    pub change: ScheduleChange,
    pub verifier_id: String,
    pub candidate_id: String,
    pub signature: Signature,
}

fn put_update_fields(w: &mut Writer, seq: u64, change: &ScheduleChange, verifier_id: &str, candidate_id: &str) {
    w.u64(tag::SEQ, seq);
    match change {
        ScheduleChange::Suspend { index } => {
            w.u8(tag::UPDATE_KIND, 0).u32(tag::INDEX, *index);
        }
        ScheduleChange::Reschedule { gamma } => {
            w.u8(tag::UPDATE_KIND, 1);
            wire::put_challenge_set(w, tag::CHALLENGE_SET, gamma);
        }
    }
    w.str(tag::VERIFIER_ID, verifier_id)
        .str(tag::CANDIDATE_ID, candidate_id);
}

pub fn update_payload(seq: u64, change: &ScheduleChange, verifier_id: &str, candidate_id: &str) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(tag::LABEL, "UPD");
    put_update_fields(&mut w, seq, change, verifier_id, candidate_id);
    w.finish()
}

impl UpdateBody {
    pub fn signed_payload(&self) -> Vec<u8> {
        update_payload(self.seq, &self.change, &self.verifier_id, &self.candidate_id)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        put_update_fields(&mut w, self.seq, &self.change, &self.verifier_id, &self.candidate_id);
        wire::put_signature(&mut w, tag::SIGNATURE, &self.signature);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let seq = r.u64(tag::SEQ)?;
        let change = match r.u8(tag::UPDATE_KIND)? {
            0 => ScheduleChange::Suspend {
                index: r.u32(tag::INDEX)?,
            },
            1 => ScheduleChange::Reschedule {
                gamma: wire::get_challenge_set(&mut r, tag::CHALLENGE_SET)?,
            },
            _ => return Err(WireError::BadValue(tag::UPDATE_KIND)),
        };
        let body = Self {
            seq,
            change,
            verifier_id: r.str(tag::VERIFIER_ID)?,
            candidate_id: r.str(tag::CANDIDATE_ID)?,
            signature: wire::get_signature(&mut r, tag::SIGNATURE)?,
        };
        r.finish()?;
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleUpdate {
    pub candidate_id: String,
    pub sealed: Ciphertext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    JoinRequest(JoinRequest),
    Challenge(ChallengeMessage),
    Update(ScheduleUpdate),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::JoinRequest(_) => "join-request",
            Message::Challenge(_) => "challenge",
            Message::Update(_) => "schedule-update",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        let ty = match self {
            Message::JoinRequest(m) => {
                w.str(tag::VERIFIER_ID, m.target.as_deref().unwrap_or(""))
                    .str(tag::CANDIDATE_ID, &m.candidate_id);
                wire::put_public_key(&mut w, tag::PUBLIC_KEY, &m.public_key);
                wire::put_certificate(&mut w, tag::CERTIFICATE, &m.certificate);
                wire::put_signature(&mut w, tag::SIGNATURE, &m.signature);
                msg_type::JOIN_REQUEST
            }
            Message::Challenge(m) => {
                w.str(tag::CANDIDATE_ID, &m.candidate_id);
                wire::put_ciphertext(&mut w, tag::CIPHERTEXT, &m.sealed);
                msg_type::CHALLENGE
            }
            Message::Update(m) => {
                w.str(tag::CANDIDATE_ID, &m.candidate_id);
                wire::put_ciphertext(&mut w, tag::CIPHERTEXT, &m.sealed);
                msg_type::SCHEDULE_UPDATE
            }
        };
        wire::frame(ty, &w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (ty, body) = wire::unframe(bytes)?;
        let mut r = Reader::new(body);
        let msg = match ty {
            msg_type::JOIN_REQUEST => {
                let target = r.str(tag::VERIFIER_ID)?;
                Message::JoinRequest(JoinRequest {
                    target: (!target.is_empty()).then_some(target),
                    candidate_id: r.str(tag::CANDIDATE_ID)?,
                    public_key: wire::get_public_key(&mut r, tag::PUBLIC_KEY)?,
                    certificate: wire::get_certificate(&mut r, tag::CERTIFICATE)?,
                    signature: wire::get_signature(&mut r, tag::SIGNATURE)?,
                })
            }
            msg_type::CHALLENGE => Message::Challenge(ChallengeMessage {
                candidate_id: r.str(tag::CANDIDATE_ID)?,
                sealed: wire::get_ciphertext(&mut r, tag::CIPHERTEXT)?,
            }),
            msg_type::SCHEDULE_UPDATE => Message::Update(ScheduleUpdate {
                candidate_id: r.str(tag::CANDIDATE_ID)?,
                sealed: wire::get_ciphertext(&mut r, tag::CIPHERTEXT)?,
            }),
            other => return Err(WireError::UnknownType(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}
