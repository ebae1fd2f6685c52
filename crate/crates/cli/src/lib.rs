//! `tempoql` command line tool and the HTTP service behind the workbench.

pub mod api;
pub mod cli;
pub mod rows;
