#pragma once

namespace structvar {

// Entry point behind the binary: generate | exact | fit | benchmark | plot.
// Exit codes: 0 success, 1 usage error, 2 data error.
int run_cli(int argc, const char* const* argv);

}  // namespace structvar
