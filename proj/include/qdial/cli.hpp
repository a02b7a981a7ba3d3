#pragma once

namespace qdial::cli {

/// Exit codes: 0 success, 1 configuration or input error, 2 solver or fit failure.
int run(int argc, char** argv);

}  // namespace qdial::cli
