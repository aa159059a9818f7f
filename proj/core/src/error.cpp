#include "rgcd/error.hpp"

namespace rgcd {

namespace {
std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += "; ";
    out += items[i];
  }
  return out;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join(violations)), violations_(std::move(violations)) {}

}  // namespace rgcd
