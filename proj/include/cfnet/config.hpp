#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfnet/common.hpp"

namespace cfnet {

// Raised for malformed files, unknown keys, and type errors. CLI maps this
// to the usage/config exit code.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

enum class KeyType { Int, Real, Bool, String, Enum };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string doc;
  std::vector<std::string> enum_values;  // only for Enum
};

// Flat dotted-key configuration with a fixed schema. Every key must be
// declared in the schema; parsing an undeclared key fails.
class Config {
 public:
  Config();

  // Parses `key = value` lines; '#' starts a comment; blank lines ignored.
  void load_file(const std::string& path);
  // Applies a single `key=value` override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  long long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  // Validated against the enum values of the key.
  std::string get_enum(const std::string& key) const;

  bool is_default(const std::string& key) const;

  // All keys with current values, in schema order.
  std::map<std::string, std::string> values() const;

  // Human-readable reference of every key, its type, default, and doc line.
  static std::string reference();

  static const std::vector<KeySpec>& schema();

 private:
  const KeySpec& spec_for(const std::string& key) const;

  std::map<std::string, std::string> overrides_;
};

}  // namespace cfnet
