//! Recommendation requests and their answers.

use mars_core::cars::{rank_msps, recommend_group_msp, CarsParams, Msp};
use mars_core::d2r::{recommend_donation, MessageFeatures};
use mars_core::sensor::SensorModel;
use mars_core::tensor::EventTensor;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", content = "payload", rename_all = "snake_case")]
pub enum Request {
    Donation(DonationPayload),
    Msp(MspPayload),
}

/// Messages and fan-list minimums default to zeros, one per candidate.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DonationPayload {
    pub viewer: usize,
    pub slot: usize,
    pub amount: f64,
    pub candidates: Vec<usize>,
    #[serde(default)]
    pub messages: Option<Vec<MessageFeatures>>,
    #[serde(default)]
    pub fanlist_mins: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MspPayload {
    pub candidates: Vec<Msp>,
}

#[derive(Debug, Serialize)]
pub struct ChannelScore {
    pub channel: usize,
    pub response: f64,
}

#[derive(Debug, Serialize)]
pub struct PartyScore {
    pub party: usize,
    pub satisfaction: f64,
}

#[derive(Debug, Serialize)]
pub struct ViewerRanking {
    pub viewer: usize,
    pub ranking: Vec<PartyScore>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Answer {
    Donation {
        viewer: usize,
        ranking: Vec<ChannelScore>,
    },
    Msp {
        rankings: Vec<ViewerRanking>,
        group_pick: usize,
    },
}

pub fn answer_donation(
    m: &SensorModel,
    td: &EventTensor,
    p: DonationPayload,
) -> Result<Answer, Failure> {
    let n = p.candidates.len();
    let messages = p
        .messages
        .unwrap_or_else(|| vec![MessageFeatures::zeros(m.schema()); n]);
    let fans = p.fanlist_mins.unwrap_or_else(|| vec![0.0; n]);
    let ranked = recommend_donation(
        m,
        td,
        p.viewer,
        &p.candidates,
        p.amount,
        &messages,
        p.slot,
        &fans,
    )?;
    Ok(Answer::Donation {
        viewer: p.viewer,
        ranking: ranked
            .into_iter()
            .map(|(channel, response)| ChannelScore { channel, response })
            .collect(),
    })
}

/// Every member of the first candidate's group gets a ranking; the group pick
/// maximizes the least satisfied member.
pub fn answer_msp(m: &SensorModel, params: &CarsParams, p: MspPayload) -> Result<Answer, Failure> {
    let first = p
        .candidates
        .first()
        .ok_or_else(|| Failure::Usage(anyhow::anyhow!("no candidate parties")))?;
    let mut rankings = Vec::new();
    for &v in first.group() {
        let ranking = rank_msps(params, m, v, &p.candidates)?
            .into_iter()
            .map(|(party, satisfaction)| PartyScore {
                party,
                satisfaction,
            })
            .collect();
        rankings.push(ViewerRanking { viewer: v, ranking });
    }
    let group_pick = recommend_group_msp(params, m, &p.candidates)?;
    Ok(Answer::Msp {
        rankings,
        group_pick,
    })
}
