#pragma once

#include <iosfwd>

namespace nlvae::cli {

/// Full command-line entry point. Returns the process exit code: 0 success,
/// 2 configuration error, 3 runtime failure, 4 partial failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nlvae::cli
