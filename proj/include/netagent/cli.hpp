#pragma once

#include <iosfwd>

namespace netagent::cli {

/// Exit codes: 0 success, 1 operational failure, 2 usage error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace netagent::cli
