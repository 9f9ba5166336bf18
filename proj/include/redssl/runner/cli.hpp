#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace redssl::runner {

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, char** argv);

}  // namespace redssl::runner
