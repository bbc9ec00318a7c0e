#![allow(dead_code)]

pub mod bruteforce;
