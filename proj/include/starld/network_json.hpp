#pragma once

#include <json.hpp>

#include "starld/model.hpp"

namespace starld {

/// Parses {"channels":[{"id":1,"capacity":3.0},...],
///         "routes":[{"i":1,"j":2,"lambda":1.0,"mu":1.0},...]}.
/// Unknown keys and malformed fields throw ConfigError naming the field path.
[[nodiscard]] NetworkSpec network_from_json(const nlohmann::json& doc,
                                            const std::string& path = "network");

[[nodiscard]] nlohmann::json network_to_json(const NetworkSpec& spec);

/// Per-route values keyed "i-j" by external channel ids; missing routes default to `fill`.
[[nodiscard]] std::vector<double> route_values_from_json(const NetworkSpec& spec,
                                                         const nlohmann::json& doc,
                                                         const std::string& path,
                                                         double fill = 0.0);
[[nodiscard]] nlohmann::json route_values_to_json(const NetworkSpec& spec,
                                                  std::span<const double> values);

}  // namespace starld
