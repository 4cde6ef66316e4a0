#pragma once

namespace gshead {

// Entry point behind the `gshead` binary; exposed for in-process testing.
// Exit codes: 0 success, 1 domain error, 2 usage error.
int cli_main(int argc, const char* const* argv);

}  // namespace gshead
