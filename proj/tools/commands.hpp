#pragma once

#include <ostream>

namespace sfsm::cli {

enum ExitCode { kOk = 0, kUsage = 2, kPipelineFailure = 3 };

/// Entry point shared by the executable and the tests.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sfsm::cli
