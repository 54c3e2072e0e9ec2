#pragma once

#include <stdexcept>
#include <string>

namespace factorlasso {

enum class ErrorCode {
  usage,
  io,
  parse,
  invalid_data,
  unbalanced_panel,
  duplicate_cell,
  dimension,
  domain,
  singular,
  numerical,
  degenerate_spectrum,
  degenerate_treatment,
  weak_instrument,
  replicate_degenerate,
  bootstrap_failure,
  calibration,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Process exit code bucket: 2 usage, 3 bad input/io, 4 numerical failure.
int exit_code_for(ErrorCode code);

// One-line diagnostic to stderr; never touches stdout (reports go there).
void warn(const std::string& msg);

}  // namespace factorlasso
