#![allow(dead_code)]

pub mod json_oracle;
pub mod regex_oracle;
pub mod stub_server;
