#pragma once

#include <iostream>

namespace treevae::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Entry point behind the treevae binary: subcommands gen-corpus, preprocess,
// train, reconstruct, sample, evaluate, search. Returns 0 on success, 1 on
// usage or configuration errors, 2 on runtime failures. Program output goes
// to `out`, diagnostics to `err`; every file artifact gets a manifest
// written beside it (the only output that carries timestamps).
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace treevae::cli
