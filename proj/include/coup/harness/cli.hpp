#pragma once

namespace coup::harness {

// Exit codes: 0 success, 1 config or usage error, 2 runtime failure.
int run_cli(int argc, char** argv);

}  // namespace coup::harness
