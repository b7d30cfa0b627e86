#pragma once

namespace fasam {

/// Entry point behind the command-line tool. Exit codes: 0 success,
/// 1 internal failure, 2 user or configuration error.
int cli_main(int argc, const char* const* argv);

}  // namespace fasam
