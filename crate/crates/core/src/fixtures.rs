//! The eight-record directory service library used throughout the tests and
//! the README walkthrough.

use crate::model::{Interaction, InteractionLibrary};

pub const DIRECTORY_LOG: [(&str, &str); 8] = [
    (
        "{id:001,op:S,sn:Du}",
        "{id:001,op:SearchRsp,result:Ok,gn:Miao,sn:Du,mobile:5362634}",
    ),
    (
        "{id:013,op:S,sn:Versteeg}",
        "{id:013,op:SearchRsp,result:Ok,gn:Steve,sn:Versteeg,mobile:9374723}",
    ),
    ("{id:024,op:A,sn:Schneider}", "{id:024,op:AddRsp,result:Ok}"),
    (
        "{id:275,op:S,sn:Han}",
        "{id:275,op:SearchRsp,result:Ok,gn:Jun,sn:Han,mobile:33333333}",
    ),
    (
        "{id:490,op:S,sn:Grundy}",
        "{id:490,op:SearchRsp,result:Ok,gn:John,sn:Grundy,mobile:44444444}",
    ),
    (
        "{id:773,op:S,sn:Hine}",
        "{id:273,op:SearchRsp,result:Ok,sn:Hine,mobile:123456}",
    ),
    ("{id:887,op:A,sn:Will}", "{id:887,op:AddRsp,result:Ok}"),
    ("{id:906,op:A,sn:Hine}", "{id:906,op:AddRsp,result:Ok}"),
];

/// Live search probe whose nearest plain match is a search request.
pub const PROBE_HOSSAIN: &str = "{id:552,op:S,sn:Hossain}";
/// Live search probe whose nearest plain match is an add request.
pub const PROBE_SCHNEIDER: &str = "{id:024,op:S,sn:Schneider}";

pub fn directory_log() -> InteractionLibrary {
    InteractionLibrary::new(
        DIRECTORY_LOG
            .iter()
            .map(|(req, rsp)| Interaction::new(*req, *rsp).expect("fixture rows are valid"))
            .collect(),
    )
    .expect("fixture is non-empty")
}
