// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rscope::cli {

/// Runs the rscope command line. `args` excludes the program name. Returns
/// 0 on success, 2 on validation failures and 3 on configuration or usage
/// errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rscope::cli
