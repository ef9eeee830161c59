#pragma once

#include <ostream>

namespace spdcbell_cli {

// Entry point of the spdcbell command. Exit status: 0 success, 1 numerical
// failure, 2 configuration or usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spdcbell_cli
