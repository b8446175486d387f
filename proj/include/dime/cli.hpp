#pragma once

namespace dime {

/// Parses and dispatches one command invocation. Returns the process exit
/// code: 0 on success, 1 on usage or validation errors, 2 on divergence or
/// numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace dime
