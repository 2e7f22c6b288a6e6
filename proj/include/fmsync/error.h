#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace fmsync {

// Invalid or inconsistent input data (bad shapes, malformed files, degenerate geometry).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine failed to produce a usable answer.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningSink = std::function<void(const std::string&)>;

// Non-fatal conditions (ridge fallbacks, clamped parameters) are reported here.
// The default sink writes to stderr. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace fmsync
