#pragma once

// Strict JSON object handling for config files: every key must be known,
// so typos fail loudly instead of silently falling back to defaults.

#include <string>
#include <vector>

#include <json.hpp>

namespace polarring {

inline void check_keys(const nlohmann::json& j,
                       const std::vector<std::string>& known,
                       const std::string& context) {
  if (!j.is_object())
    throw std::runtime_error(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw std::runtime_error(context + ": unknown field \"" + it.key() +
                               "\"");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline void check_version(const nlohmann::json& j, const std::string& context) {
  if (!j.contains("version"))
    throw std::runtime_error(context + ": missing \"version\" field");
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error(context + ": unsupported version");
}

}  // namespace polarring
