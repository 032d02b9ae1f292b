#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace catsnn::cli {

enum ExitCode : int { kOk = 0, kValidationFailed = 1, kUsageError = 2 };

/// Entry point behind the `catsnn` binary; `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace catsnn::cli
