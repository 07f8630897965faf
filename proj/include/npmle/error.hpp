#pragma once

#include <stdexcept>
#include <string>

namespace npmle {

// All library failures surface as this exception type. The message carries
// enough context (row, component index, file) to act on.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace npmle
