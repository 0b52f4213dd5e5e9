// Copyright 2026 The nvsim Authors
// SPDX-License-Identifier: Apache-2.0

use clap::Parser;
use nvsim_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("nvsim: {e}");
        std::process::exit(e.code as i32);
    }
}
