//! Randomized payment-channel driver shared by the payments and acceptance tests.

use hotstore_core::coordination::{derive_genesis_seed, AccountId, LedgerState};
use hotstore_core::economics::EconomicParams;
use hotstore_core::payments::{ChannelState, ChannelStatus, PaymentError, ReadSession};
use hotstore_core::tokens::Tokens;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const PAYER: AccountId = AccountId::External(0);
const PAYEE: AccountId = AccountId::External(1);

fn check_history(ch: &ChannelState) -> Result<(), String> {
    for (i, w) in ch.history.windows(2).enumerate() {
        if w[1].seq != w[0].seq + 1 {
            return Err(format!("seq gap at {i}"));
        }
        if w[1].refund_amount >= w[0].refund_amount {
            return Err(format!("refund did not shrink at seq {}", w[1].seq));
        }
        if w[1].settle_after > w[0].settle_after {
            return Err(format!("settle_after grew at seq {}", w[1].seq));
        }
    }
    let last = ch.history.last().ok_or("empty history")?;
    if last.refund_amount != ch.refund_amount
        || last.settle_after != ch.settle_after
        || last.seq != ch.seq
    {
        return Err("channel head disagrees with history".into());
    }
    Ok(())
}

/// Run one random sequence of payments, presentations and settlement
/// attempts. Returns a description of the first violated property.
pub fn run_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ledger = LedgerState::new(derive_genesis_seed(seed), EconomicParams::reference());
    let funds = Tokens(rng.gen_range(1..=1_000_000_000_000));
    ledger.fund_external(0, funds);
    let deposit = Tokens(rng.gen_range(1..=funds.0));
    let start = rng.gen_range(0..10_000u64);
    let mut ch = ledger
        .open_channel(PAYER, PAYEE, deposit, start)
        .map_err(|e| e.to_string())?;
    if ledger.balance(PAYER) != funds.saturating_sub(deposit) {
        return Err("deposit not escrowed".into());
    }
    let max_pay = (deposit.0 / rng.gen_range(1..50)).max(1);

    for _ in 0..rng.gen_range(1..200) {
        let before = ch.clone();
        match rng.gen_range(0..10) {
            0..=5 => {
                let amount = Tokens(rng.gen_range(0..=max_pay));
                let res = if rng.gen_bool(0.1) {
                    // Occasionally request a later settle time.
                    ch.pay(amount, ch.settle_after + rng.gen_range(0..3))
                        .map(|_| ())
                } else {
                    ch.pay_with_delta(amount, rng.gen_range(0..20)).map(|_| ())
                };
                match res {
                    Ok(()) => {
                        if ch.paid().0 != before.paid().0 + amount.0 {
                            return Err("paid did not grow by amount".into());
                        }
                    }
                    Err(e) => {
                        if ch != before {
                            return Err(format!("failed pay mutated channel: {e}"));
                        }
                        let expected = matches!(
                            e,
                            PaymentError::ZeroAmount
                                | PaymentError::Overdraw { .. }
                                | PaymentError::SettleTimeIncrease { .. }
                                | PaymentError::NotOpen(ChannelStatus::Expired)
                        );
                        if !expected {
                            return Err(format!("unexpected pay error {e}"));
                        }
                    }
                }
            }
            6 => ledger.time += rng.gen_range(0..500),
            _ => {
                let seq = rng.gen_range(0..=ch.seq + 1);
                let balances = (ledger.balance(PAYER), ledger.balance(PAYEE));
                match ledger.settle_channel(&mut ch, seq) {
                    Ok((payee, payer)) => {
                        if payee.0 + payer.0 != deposit.0 {
                            return Err(format!("split {payee} + {payer} != {deposit}"));
                        }
                        let winner = ch.history[ch.presented.unwrap() as usize];
                        if payer != winner.refund_amount || ledger.time < winner.settle_after {
                            return Err("settled on the wrong state".into());
                        }
                        if ledger.balance(PAYER).0 != balances.0 .0 + payer.0
                            || ledger.balance(PAYEE).0 != balances.1 .0 + payee.0
                        {
                            return Err("balances not credited".into());
                        }
                        break;
                    }
                    Err(PaymentError::UnknownSeq(s)) if s > ch.seq => {}
                    Err(PaymentError::TooEarly { .. }) => {}
                    Err(e) => return Err(format!("unexpected settle error {e}")),
                }
            }
        }
        check_history(&ch)?;
        if !ledger.is_conserved() {
            return Err("ledger not conserved".into());
        }
    }
    if ch.status != ChannelStatus::Settled {
        ledger.time = ledger.time.max(ch.settle_after);
        let last = ch.seq;
        let (payee, payer) = ledger
            .settle_channel(&mut ch, last)
            .map_err(|e| e.to_string())?;
        if payee.0 + payer.0 != deposit.0 || payee != ch.paid() {
            return Err("final settlement split wrong".into());
        }
    }
    if ledger.channel_escrow != Tokens::ZERO || !ledger.is_conserved() {
        return Err("escrow left behind".into());
    }
    if ledger.balance(PAYER).0 + ledger.balance(PAYEE).0 != funds.0 {
        return Err("tokens created or destroyed".into());
    }
    Ok(())
}

/// A client paying per read against a payee that stops serving at some
/// point loses at most one read's price.
#[allow(dead_code)]
pub fn run_read_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ledger = LedgerState::new(derive_genesis_seed(seed), EconomicParams::reference());
    ledger.fund_external(0, Tokens::whole(1000));
    let price = Tokens(rng.gen_range(1..1_000_000));
    let reads = rng.gen_range(1..500u64);
    let mut ch = ledger
        .open_channel(PAYER, PAYEE, Tokens(price.0 * reads), 10_000)
        .map_err(|e| e.to_string())?;
    let mut session = ReadSession::new(price, 1);
    let stop_at = rng.gen_range(0..=reads);
    for i in 0..reads {
        if !session
            .read(&mut ch, i < stop_at)
            .map_err(|e| e.to_string())?
        {
            break;
        }
    }
    let loss = session.loss(&ch);
    if loss > price {
        return Err(format!("loss {loss} exceeds one read {price}"));
    }
    if session.reads_served != stop_at.min(reads) {
        return Err("served count wrong".into());
    }
    Ok(())
}
