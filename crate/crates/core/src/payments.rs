//! Unidirectional micropayment channels.
//!
//! A channel escrows a deposit on the ledger. Each payment is an off-ledger
//! refund update returning slightly less to the payer and becoming valid
//! slightly earlier. At settlement the highest sequence number presented
//! wins, provided its `settle_after` time has passed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::{AccountId, LedgerError, LedgerEvent, LedgerState};
use crate::tokens::Tokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaymentError {
    #[error("payer cannot fund a deposit of {0}")]
    InsufficientBalance(Tokens),
    #[error("payment of {amount} exceeds remaining refund {remaining}")]
    Overdraw { amount: Tokens, remaining: Tokens },
    #[error("payment amount must be positive")]
    ZeroAmount,
    #[error("protocol violation: settle_after may not increase ({current} -> {requested})")]
    SettleTimeIncrease { current: u64, requested: u64 },
    #[error("channel is {0:?}")]
    NotOpen(ChannelStatus),
    #[error("sequence {0} was never issued on this channel")]
    UnknownSeq(u64),
    #[error("state {seq} is valid from {settle_after}, ledger time is {now}")]
    TooEarly {
        seq: u64,
        settle_after: u64,
        now: u64,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Open,
    /// The deposit is fully paid out; no further payments fit.
    Expired,
    Settled,
}

/// One co-signed refund state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefundState {
    pub seq: u64,
    pub refund_amount: Tokens,
    pub settle_after: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel_id: u64,
    pub payer: AccountId,
    pub payee: AccountId,
    pub deposit: Tokens,
    pub refund_amount: Tokens,
    pub settle_after: u64,
    pub seq: u64,
    pub status: ChannelStatus,
    /// Every state either party could present, indexed by `seq`.
    pub history: Vec<RefundState>,
    /// Highest sequence presented so far.
    pub presented: Option<u64>,
}

impl ChannelState {
    pub fn paid(&self) -> Tokens {
        self.deposit.saturating_sub(self.refund_amount)
    }

    /// Issue the next refund state. Off-ledger.
    pub fn pay(
        &mut self,
        amount: Tokens,
        new_settle_after: u64,
    ) -> Result<&RefundState, PaymentError> {
        if self.status != ChannelStatus::Open {
            return Err(PaymentError::NotOpen(self.status));
        }
        if amount.is_zero() {
            return Err(PaymentError::ZeroAmount);
        }
        let remaining = self
            .refund_amount
            .checked_sub(amount)
            .ok_or(PaymentError::Overdraw {
                amount,
                remaining: self.refund_amount,
            })?;
        if new_settle_after > self.settle_after {
            return Err(PaymentError::SettleTimeIncrease {
                current: self.settle_after,
                requested: new_settle_after,
            });
        }
        self.refund_amount = remaining;
        self.settle_after = new_settle_after;
        self.seq += 1;
        self.history.push(RefundState {
            seq: self.seq,
            refund_amount: remaining,
            settle_after: new_settle_after,
        });
        if remaining.is_zero() {
            self.status = ChannelStatus::Expired;
        }
        Ok(self.history.last().expect("just pushed"))
    }

    /// Pay `amount`, moving `settle_after` earlier by `delta`.
    pub fn pay_with_delta(
        &mut self,
        amount: Tokens,
        delta: u64,
    ) -> Result<&RefundState, PaymentError> {
        let next = self.settle_after.saturating_sub(delta);
        self.pay(amount, next)
    }

    /// Record that a party has put state `seq` forward for settlement.
    pub fn present(&mut self, seq: u64) -> Result<(), PaymentError> {
        if self.status == ChannelStatus::Settled {
            return Err(PaymentError::NotOpen(self.status));
        }
        if seq as usize >= self.history.len() {
            return Err(PaymentError::UnknownSeq(seq));
        }
        self.presented = Some(self.presented.map_or(seq, |p| p.max(seq)));
        Ok(())
    }
}

impl LedgerState {
    /// Escrow `deposit` from the payer. Refund state 0 returns everything.
    pub fn open_channel(
        &mut self,
        payer: AccountId,
        payee: AccountId,
        deposit: Tokens,
        initial_settle_after: u64,
    ) -> Result<ChannelState, PaymentError> {
        if self.balance(payer) < deposit {
            return Err(PaymentError::InsufficientBalance(deposit));
        }
        self.debit(payer, deposit)?;
        self.channel_escrow += deposit;
        let channel_id = self.next_channel_id();
        self.emit(LedgerEvent::ChannelOpened {
            channel_id,
            payer,
            payee,
            deposit,
        });
        Ok(ChannelState {
            channel_id,
            payer,
            payee,
            deposit,
            refund_amount: deposit,
            settle_after: initial_settle_after,
            seq: 0,
            status: ChannelStatus::Open,
            history: vec![RefundState {
                seq: 0,
                refund_amount: deposit,
                settle_after: initial_settle_after,
            }],
            presented: None,
        })
    }

    /// Present `presented_seq` and settle on the highest state presented so
    /// far. Returns `(payee_amount, payer_amount)`.
    pub fn settle_channel(
        &mut self,
        channel: &mut ChannelState,
        presented_seq: u64,
    ) -> Result<(Tokens, Tokens), PaymentError> {
        channel.present(presented_seq)?;
        let winner = channel.history[channel.presented.expect("just presented") as usize];
        if self.time < winner.settle_after {
            return Err(PaymentError::TooEarly {
                seq: winner.seq,
                settle_after: winner.settle_after,
                now: self.time,
            });
        }
        let payer_amount = winner.refund_amount;
        let payee_amount = channel.deposit.saturating_sub(payer_amount);
        self.channel_escrow = self
            .channel_escrow
            .checked_sub(channel.deposit)
            .expect("channel deposit is escrowed");
        self.credit(channel.payee, payee_amount);
        self.credit(channel.payer, payer_amount);
        channel.status = ChannelStatus::Settled;
        self.emit(LedgerEvent::ChannelSettled {
            channel_id: channel.channel_id,
            seq: winner.seq,
            payee_amount,
            payer_amount,
        });
        Ok((payee_amount, payer_amount))
    }
}

/// Pay-before-read session over one channel. The client prepays each read;
/// a payee that stops serving keeps at most the last prepayment.
#[derive(Clone, Debug)]
pub struct ReadSession {
    pub price: Tokens,
    pub delta: u64,
    pub reads_served: u64,
}

impl ReadSession {
    pub fn new(price: Tokens, delta: u64) -> Self {
        ReadSession {
            price,
            delta,
            reads_served: 0,
        }
    }

    /// Prepay one read; `served` says whether the payee delivered it. An
    /// honest client stops after the first unserved read.
    pub fn read(&mut self, channel: &mut ChannelState, served: bool) -> Result<bool, PaymentError> {
        channel.pay_with_delta(self.price, self.delta)?;
        if served {
            self.reads_served += 1;
        }
        Ok(served)
    }

    /// Amount paid for reads never delivered.
    pub fn loss(&self, channel: &ChannelState) -> Tokens {
        channel
            .paid()
            .saturating_sub(Tokens(self.price.0 * self.reads_served))
    }
}
