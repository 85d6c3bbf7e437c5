#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace muoneq {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Runs one subcommand. args excludes the program name. Exit codes: 0 success,
/// 1 audit failure or runtime error, 2 usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace muoneq
