#include "maskdet/core/error.hpp"

namespace maskdet {

namespace {
std::string decorate(const std::string& what, std::size_t line, const std::string& field) {
  std::string out;
  if (line > 0) out += "line " + std::to_string(line) + ": ";
  if (!field.empty()) out += "field '" + field + "': ";
  return out + what;
}
}  // namespace

ParseError::ParseError(const std::string& what, std::size_t line, std::string field)
    : Error(decorate(what, line, field)), line_(line), field_(std::move(field)) {}

ConfigError::ConfigError(std::string field, const std::string& what)
    : Error("config '" + field + "': " + what), field_(std::move(field)) {}

}  // namespace maskdet
