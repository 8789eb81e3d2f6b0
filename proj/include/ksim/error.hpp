#pragma once

#include <stdexcept>
#include <string>

namespace ksim {

/// Invalid user input: configuration values, preconditions, out-of-range requests.
/// `field()` names the offending parameter when one applies.
class validation_error : public std::invalid_argument {
  public:
    explicit validation_error(const std::string& what, std::string field = {})
        : std::invalid_argument(what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

  private:
    std::string field_;
};

/// Malformed or corrupt on-disk data (bad magic, truncation, checksum, version).
class format_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const std::string& msg, const std::string& field = {}) {
    if (!ok) throw validation_error(msg, field);
}
}  // namespace detail

}  // namespace ksim
