#pragma once

#include <string>
#include <vector>

namespace shardalloc::cli {

/// Entry point of the `shardalloc` tool.  Returns 0 on success, 1 on a usage
/// error and 2 when a command fails at run time.
int cli_dispatch(int argc, char** argv);

/// Convenience overload for tests; args excludes the program name.
int cli_dispatch(const std::vector<std::string>& args);

} // namespace shardalloc::cli
