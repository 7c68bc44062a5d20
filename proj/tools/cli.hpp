#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dlava::cli {

// Resolved settings: defaults, then the --config file, then DLAVA_* (and
// MODEL_*) environment variables, then flags.
using Settings = std::map<std::string, std::string>;

const Settings& default_settings();

// Entry point shared by the binary and the tests. args excludes the program
// name. Returns 0 on success, 1 for a degraded or failed run, 2 for usage and
// validation errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dlava::cli
