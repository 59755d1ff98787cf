#pragma once

namespace wigraph {

// Full command-line surface: train / eval / explain / analyze / synth.
// Returns the process exit status: 0 success, 2 usage error, 1 runtime error.
int run_cli(int argc, const char* const* argv);

}  // namespace wigraph
