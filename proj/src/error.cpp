#include "factorlasso/error.hpp"

#include <iostream>

namespace factorlasso {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
      return 2;
    case ErrorCode::io:
    case ErrorCode::parse:
    case ErrorCode::invalid_data:
    case ErrorCode::unbalanced_panel:
    case ErrorCode::duplicate_cell:
      return 3;
    default:
      return 4;
  }
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

}  // namespace factorlasso
