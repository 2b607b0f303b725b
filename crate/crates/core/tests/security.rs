//! Adversary cases, one test each.

mod common;

use common::security;

#[test]
fn dropped_feedback_is_caught_by_the_omitted_respondent() {
    security::dropped_feedback_is_caught_by_the_omitted_respondent();
}

#[test]
fn tampered_responses_rejected_by_every_receiver() {
    security::tampered_responses_rejected_by_every_receiver();
}

#[test]
fn tampered_relayed_certificate_rejected_and_blamed() {
    security::tampered_relayed_certificate_rejected_and_blamed();
}

#[test]
fn lone_false_accuser_isolates_nobody() {
    security::lone_false_accuser_isolates_nobody();
}

#[test]
fn repeated_respondent_set_has_no_weight() {
    security::repeated_respondent_set_has_no_weight();
}

#[test]
fn certificate_droppers_delay_but_do_not_block() {
    security::certificate_droppers_delay_but_do_not_block();
}
