#pragma once

namespace picg {

// Entry point behind the `picg` binary. Returns 0 on success, 1 on usage or
// configuration errors, 2 on runtime failures.
int cli_main(int argc, const char* const* argv);

}  // namespace picg
