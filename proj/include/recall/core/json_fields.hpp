#pragma once

#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

namespace recall {

// Reads fields of one config section, collecting every problem instead of
// stopping at the first. Keys that are never read are reported as unknown by
// finish().
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string section, std::vector<std::string>& errors)
      : j_(j), section_(std::move(section)), errors_(errors) {
    if (!j_.is_object()) error("", "expected an object");
  }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return error(key, "expected true or false");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        return error(key, "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return error(key, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return error(key, "expected a number");
    }
    try {
      out = v.get<T>();
    } catch (const std::exception&) {
      error(key, "wrong type");
    }
  }

  // Enum field parsed from a string by `parse`, which throws on bad input.
  template <class E, class Parse>
  void read_enum(const char* key, E& out, Parse parse) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = parse(j_.at(key).template get<std::string>());
    } catch (const std::exception& e) {
      error(key, e.what());
    }
  }

  // Marks a key as handled by the caller (e.g. a nested section).
  void mark(const char* key) { seen_.insert(key); }

  void require_relevant(const char* key, bool relevant, const std::string& context) {
    if (has(key) && !relevant) error(key, "not applicable to " + context);
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) error(key, "unknown field");
  }

  void error(const std::string& key, const std::string& msg) {
    errors_.push_back(section_ + (key.empty() ? "" : "." + key) + ": " + msg);
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

}  // namespace recall
