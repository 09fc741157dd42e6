#pragma once

namespace era {

// Entry point behind the `era` binary; exposed so tests can drive the CLI
// in-process. Returns 0 on success, 1 on runtime errors, 2 on usage errors.
int cli_main(int argc, const char* const* argv);

}  // namespace era
