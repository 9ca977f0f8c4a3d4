#pragma once

#include <string>
#include <vector>

namespace vecdraw::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kTransport = 3,
  kNumeric = 4,
  kIo = 5,
};

/// Entry point of the `vecdraw` tool. args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace vecdraw::cli
