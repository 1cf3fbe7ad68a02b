// Internal JSON helpers shared by the serialization units. Not installed.
#pragma once

#include <nlohmann/json.hpp>

#include "seannet/world.hpp"

namespace seannet::codec {

nlohmann::ordered_json observation_to_json(const Observation& obs);
Observation observation_from_json(const nlohmann::json& j);

}  // namespace seannet::codec
