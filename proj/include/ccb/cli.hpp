#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ccb {

/// Exit codes: 0 success, 1 validation failure, 2 usage error or unusable path.
int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ccb
