#pragma once

#include <map>
#include <string>
#include <vector>

namespace gzood::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericFailure = 4 };

/// Parses "key = value" lines; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> read_config_file(const std::string& path);
void write_config_file(const std::string& path, const std::map<std::string, std::string>& config);

/// Runs one subcommand and maps library errors to exit codes.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace gzood::cli
